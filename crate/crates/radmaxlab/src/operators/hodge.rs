//! Hodge–Dirac operators Π = Γ + Γ*, perturbed Π_B = Γ + B₁Γ*B₂ and
//! Π_{B*} = Γ* + B₂ΓB₁, built from a first-order symbol D and bounded
//! coefficient fields A₁, A₂, together with their resolvent handles
//! R_t = (I + itΠ_B)^{−1}, P_t = R_tR_{−t} and Q_t = tΠ_B P_t.

use super::handle::{apply, MatrixField, OperatorHandle, ResolventStyle, SolverOpts};
use super::symbol::{FirstOrderOperator, MultiplierSymbol};
use crate::dyadic::GridFunction;
use crate::error::{Error, Result};
use crate::C64;
use std::sync::Arc;

/// Configuration of a (possibly perturbed) Hodge–Dirac operator on the
/// grid: the constant-coefficient first-order block D (default ∇ / −div)
/// and the multiplication perturbations A₁ (n1×n1) and A₂ (n2×n2).
#[derive(Clone)]
pub struct HodgeDiracConfig {
    pub n: usize,
    pub j: u32,
    pub d: FirstOrderOperator,
    pub a1: MatrixField,
    pub a2: MatrixField,
    pub solver: SolverOpts,
}

impl HodgeDiracConfig {
    /// Unperturbed configuration (A₁ = A₂ = I) with D = ∇.
    pub fn unperturbed(n: usize, j: u32) -> HodgeDiracConfig {
        let d = FirstOrderOperator::gradient(n);
        HodgeDiracConfig {
            n,
            j,
            a1: MatrixField::identity(n, j, d.n1),
            a2: MatrixField::identity(n, j, d.n2),
            d,
            solver: SolverOpts::default(),
        }
    }

    /// The second-order coefficient case: A₁ = 1, A₂ = a(x) on the gradient
    /// block, so that Π_B² has the top-left entry L = −div a ∇.
    pub fn with_scalar_coefficient(n: usize, j: u32, a: &[C64]) -> Result<HodgeDiracConfig> {
        let d = FirstOrderOperator::gradient(n);
        let cells = 1usize << (n as u32 * j);
        if a.len() != cells {
            return Err(Error::shape(
                "coefficient field length must equal cell count",
            ));
        }
        Ok(HodgeDiracConfig {
            n,
            j,
            a1: MatrixField::identity(n, j, 1),
            a2: MatrixField::scalar_diag(n, j, d.n2, a),
            d,
            solver: SolverOpts::default(),
        })
    }

    pub fn n_comps(&self) -> usize {
        self.d.n1 + self.d.n2
    }

    /// Structural checks: the symbol identity DD*D = −ΔD per frequency, and
    /// pointwise invertibility / boundedness of the coefficients.
    pub fn validate(&self) -> Result<()> {
        let res = self.d.ddstar_residual(self.n, self.j);
        if res > 1e-12 {
            return Err(Error::invalid(format!(
                "first-order symbol violates DD*D = -ΔD (residual {res:.3e})"
            )));
        }
        for (name, field) in [("A1", &self.a1), ("A2", &self.a2)] {
            let sup = field.linf_norm();
            if !sup.is_finite() {
                return Err(Error::invalid(format!("{name} is unbounded")));
            }
            let inv_sup = field.inverse()?.linf_norm();
            if !inv_sup.is_finite() {
                return Err(Error::invalid(format!("{name} inverse is unbounded")));
            }
        }
        Ok(())
    }
}

/// The assembled operators.
pub struct HodgeDiracOperators {
    pub gamma: OperatorHandle,
    pub gamma_star: OperatorHandle,
    pub b1: OperatorHandle,
    pub b2: OperatorHandle,
    pub pi: OperatorHandle,
    pub pi_b: OperatorHandle,
    pub pi_b_star: OperatorHandle,
    /// Unperturbed Hodge–Dirac symbol, used to precondition iterative solves.
    pub pi_symbol: Arc<MultiplierSymbol>,
    pub config: HodgeDiracConfig,
}

/// Assemble Γ, Γ*, Π, Π_B = Γ + B₁Γ*B₂ and Π_{B*} = Γ* + B₂ΓB₁.
pub fn hodge_dirac(config: &HodgeDiracConfig) -> Result<HodgeDiracOperators> {
    config.validate()?;
    let (n, j) = (config.n, config.j);
    let n1 = config.d.n1;
    let n2 = config.d.n2;
    let d_mult = OperatorHandle::fourier(config.d.d_multiplier(n, j));
    let dstar_mult = OperatorHandle::fourier(config.d.dstar_multiplier(n, j));
    let zero11 = OperatorHandle::Zero {
        in_comps: n1,
        out_comps: n1,
    };
    let zero22 = OperatorHandle::Zero {
        in_comps: n2,
        out_comps: n2,
    };
    let zero12 = OperatorHandle::Zero {
        in_comps: n2,
        out_comps: n1,
    };
    let zero21 = OperatorHandle::Zero {
        in_comps: n1,
        out_comps: n2,
    };

    let gamma = OperatorHandle::block(
        zero11.clone(),
        zero12.clone(),
        d_mult.clone(),
        zero22.clone(),
    )?;
    let gamma_star = OperatorHandle::block(
        zero11.clone(),
        dstar_mult.clone(),
        zero21.clone(),
        zero22.clone(),
    )?;
    let b1 = OperatorHandle::block(
        OperatorHandle::pointwise(config.a1.clone()),
        zero12.clone(),
        zero21.clone(),
        zero22.clone(),
    )?;
    let b2 = OperatorHandle::block(
        zero11.clone(),
        zero12.clone(),
        zero21.clone(),
        OperatorHandle::pointwise(config.a2.clone()),
    )?;
    let pi = OperatorHandle::add(vec![gamma.clone(), gamma_star.clone()])?;
    let gamma_star_b = OperatorHandle::compose(vec![b1.clone(), gamma_star.clone(), b2.clone()])?;
    let pi_b = OperatorHandle::add(vec![gamma.clone(), gamma_star_b])?;
    let gamma_b = OperatorHandle::compose(vec![b2.clone(), gamma.clone(), b1.clone()])?;
    let pi_b_star = OperatorHandle::add(vec![gamma_star.clone(), gamma_b])?;
    let pi_symbol = Arc::new(config.d.pi_multiplier(n, j));
    Ok(HodgeDiracOperators {
        gamma,
        gamma_star,
        b1,
        b2,
        pi,
        pi_b,
        pi_b_star,
        pi_symbol,
        config: config.clone(),
    })
}

/// The resolvent triple {R_t, P_t, Q_t} of an operator at scale t.
pub struct ResolventSet {
    pub r_plus: OperatorHandle,
    pub r_minus: OperatorHandle,
    pub p: OperatorHandle,
    pub q: OperatorHandle,
    pub t: f64,
}

/// Resolvent handles of Π_B at scale t; the P and Q handles factor through
/// R_{±t} so only the two first-order systems are ever solved.
pub fn resolvents(ops: &HodgeDiracOperators, t: f64) -> Result<ResolventSet> {
    let precon = Some(ops.pi_symbol.clone());
    let mk = |style: ResolventStyle, tt: f64| {
        OperatorHandle::resolvent_with(
            ops.pi_b.clone(),
            tt,
            style,
            ops.config.solver,
            precon.clone(),
        )
    };
    Ok(ResolventSet {
        r_plus: mk(ResolventStyle::R, t)?,
        r_minus: mk(ResolventStyle::R, -t)?,
        p: mk(ResolventStyle::P, t)?,
        q: mk(ResolventStyle::Q, t)?,
        t,
    })
}

impl ResolventSet {
    pub fn apply_r(&self, u: &GridFunction) -> Result<GridFunction> {
        apply(&self.r_plus, u)
    }
    pub fn apply_p(&self, u: &GridFunction) -> Result<GridFunction> {
        apply(&self.p, u)
    }
    pub fn apply_q(&self, u: &GridFunction) -> Result<GridFunction> {
        apply(&self.q, u)
    }
}
