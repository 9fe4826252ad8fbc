//! Ellipticity machinery: pointwise verification of the accretivity
//! condition λ|ξ|² ≤ Re⟨A(x)ξ, ξ⟩, ‖A(x)‖ ≤ Λ, the normalization of A⁻¹ as
//! a small perturbation of the identity, and the Neumann-series resolvent
//! (I + 𝒫_t K)^{−1} = Σ (−𝒫_t K)^k.

use super::handle::MatrixField;
use super::symbol::MultiplierSymbol;
use crate::dyadic::GridFunction;
use crate::error::{Error, Result};
use crate::C64;

/// Result of normalizing an elliptic coefficient field. The constants are
/// produced by applying the M–δ bound to A⁻¹ with its derived ellipticity
/// constants λ' = λ/Λ², Λ' = 1/λ: M = Λ'²/λ', δ = λ'/2, K = A⁻¹/M − I.
/// Both ‖M·I − A⁻¹(x)‖ ≤ M − δ and ‖K‖_∞ ≤ 1 − δ/M < 1 are verified
/// pointwise.
#[derive(Debug)]
pub struct EllipticNormalization {
    pub m: f64,
    pub delta: f64,
    pub k_field: MatrixField,
    pub k_sup: f64,
}

fn hermitian_min_eig(m: &nalgebra::DMatrix<C64>) -> f64 {
    let herm = (m + m.adjoint()) * C64::new(0.5, 0.0);
    if m.nrows() == 1 {
        return herm[(0, 0)].re;
    }
    let eig = herm.symmetric_eigen();
    eig.eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

fn op_norm(m: &nalgebra::DMatrix<C64>) -> f64 {
    if m.nrows() == 1 && m.ncols() == 1 {
        m[(0, 0)].norm()
    } else {
        m.singular_values().max()
    }
}

/// Verify the accretivity condition pointwise and build the normalized
/// perturbation K of A⁻¹.
pub fn ellipticity_normalize(
    a: &MatrixField,
    lambda: f64,
    big_lambda: f64,
) -> Result<EllipticNormalization> {
    if a.rows != a.cols {
        return Err(Error::shape("coefficient field must be square"));
    }
    if !(lambda > 0.0 && big_lambda >= lambda) {
        return Err(Error::invalid("need 0 < λ ≤ Λ"));
    }
    let tol = 1e-9;
    for cell in 0..a.cells() {
        let m = a.matrix_at(cell);
        let lo = hermitian_min_eig(&m);
        if lo < lambda * (1.0 - tol) - tol {
            return Err(Error::invalid(format!(
                "accretivity violated at cell {cell}: Re part has eigenvalue {lo} < λ = {lambda}"
            )));
        }
        let hi = op_norm(&m);
        if hi > big_lambda * (1.0 + tol) + tol {
            return Err(Error::invalid(format!(
                "boundedness violated at cell {cell}: ‖A‖ = {hi} > Λ = {big_lambda}"
            )));
        }
    }
    // Derived constants of A⁻¹ and the M–δ lemma applied to it.
    let lambda_inv = lambda / (big_lambda * big_lambda);
    let m_const = 1.0 / lambda_inv; // Λ'²/λ' with Λ' = 1/λ, λ' = λ/Λ²
    let delta = lambda_inv / 2.0;
    let a_inv = a.inverse()?;
    let mut k_sup: f64 = 0.0;
    let scale = C64::new(1.0 / m_const, 0.0);
    let mut data = Vec::with_capacity(a_inv.data.len());
    for cell in 0..a_inv.cells() {
        let b = a_inv.matrix_at(cell);
        // ‖M·I − A⁻¹‖ ≤ M − δ pointwise
        let mut shifted = -b.clone();
        for i in 0..a.rows {
            shifted[(i, i)] += C64::new(m_const, 0.0);
        }
        let dist = op_norm(&shifted);
        if dist > (m_const - delta) * (1.0 + 1e-12) {
            return Err(Error::invalid(format!(
                "normalization check failed at cell {cell}: ‖MI − A⁻¹‖ = {dist} > M − δ = {}",
                m_const - delta
            )));
        }
        let mut k = b * scale;
        for i in 0..a.rows {
            k[(i, i)] -= C64::new(1.0, 0.0);
        }
        k_sup = k_sup.max(op_norm(&k));
        for r in 0..a.rows {
            for c in 0..a.cols {
                data.push(k[(r, c)]);
            }
        }
    }
    if k_sup >= 1.0 {
        return Err(Error::invalid(format!("‖K‖_∞ = {k_sup} is not < 1")));
    }
    let k_field = MatrixField {
        n: a.n,
        j: a.j,
        rows: a.rows,
        cols: a.cols,
        data,
    };
    Ok(EllipticNormalization {
        m: m_const,
        delta,
        k_field,
        k_sup,
    })
}

/// (I + 𝒫_t K)^{−1} u by the Neumann series Σ_{k≥0} (−𝒫_t K)^k u, truncated
/// once ‖K‖_∞^k < tol.
pub fn neumann_resolvent(
    t: f64,
    k_field: &MatrixField,
    u: &GridFunction,
    tol: f64,
) -> Result<GridFunction> {
    let k_sup = k_field.linf_norm();
    if k_sup >= 1.0 {
        return Err(Error::Divergence(format!(
            "Neumann series needs ‖K‖_∞ < 1, got {k_sup}"
        )));
    }
    if u.grid.n_comp != k_field.cols {
        return Err(Error::shape("component count does not match K"));
    }
    let p_diag = MultiplierSymbol::scalar_fn(u.grid.n, u.grid.j, u.grid.n_comp, |xi| {
        C64::new(1.0 / (1.0 + t * t * super::symbol::wavenumber_sq(xi)), 0.0)
    });
    let mut acc = u.clone();
    let mut term = u.clone();
    let mut bound = 1.0f64;
    let max_terms = 100_000usize;
    for _ in 0..max_terms {
        bound *= k_sup;
        if bound < tol {
            break;
        }
        // term ← −𝒫_t(K term)
        term = p_diag
            .apply(&k_field.apply(&term)?)?
            .scaled(C64::new(-1.0, 0.0));
        acc = acc.add(&term);
    }
    Ok(acc)
}
