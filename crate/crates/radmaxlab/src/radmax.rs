//! The Rademacher maximal function
//! M_R u(x) = sup { E‖Σ_k ε_k λ_k ⟨u⟩_{Q_k(x)}‖_X : ‖λ‖_{ℓ²} ≤ 1 },
//! its L^p operator-norm experiments, the domination inequalities against
//! the dyadic and lattice maximal functions, and the ℓ¹ counterexample
//! showing that no L^p bound can hold there.
//!
//! M_R is a sup of a convex function over the ℓ² ball; the optimizer
//! reports certified lower bounds from canonical-basis candidates, random
//! unit vectors, and projected coordinate ascent. On Hilbert spaces the
//! identity M_R = M (canonical basis attains, Cauchy–Schwarz caps) is used
//! as a fast path.

use crate::dyadic::{dyadic_maximal, lattice_maximal, AveragePyramid, Grid, GridFunction};
use crate::error::{Error, Result};
use crate::par;
use crate::rng::RandomSource;
use crate::space::{sup_over_unit_lambda, RandomizedOpts, SpaceDescriptor, Vector};
use crate::C64;
use serde::Serialize;

/// Coefficients λ_k indexed by scale k ∈ [−J, 0], constrained to the closed
/// ℓ² unit ball (with a hair of float slack).
#[derive(Debug, Clone)]
pub struct LambdaVector {
    pub coefficients: Vec<f64>,
}

impl LambdaVector {
    pub fn new(coefficients: Vec<f64>) -> Result<Self> {
        let nrm = coefficients.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nrm > 1.0 + 1e-12 {
            return Err(Error::invalid(format!("‖λ‖_ℓ² = {nrm} exceeds 1")));
        }
        Ok(LambdaVector { coefficients })
    }

    pub fn l2_norm(&self) -> f64 {
        self.coefficients.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Optimizer settings for the M_R lower-bound search.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MrOpts {
    pub restarts: usize,
    pub sweeps: usize,
    pub perturbations: usize,
    /// Moment of the randomized norm: 1 is the display convention, 2 makes
    /// the Hilbert identity M_R = M exact.
    pub moment: f64,
    /// Skip the optimizer on Hilbert spaces where M_R = M analytically.
    pub hilbert_fast_path: bool,
}

impl Default for MrOpts {
    fn default() -> Self {
        MrOpts {
            restarts: 4,
            sweeps: 8,
            perturbations: 16,
            moment: 1.0,
            hilbert_fast_path: true,
        }
    }
}

/// Lower-bound estimate of E‖Σ_k ε_k λ_k a_k‖ maximized over the ℓ² unit
/// ball, for a finite chain of vectors.
pub fn chain_rademacher_bound(
    vectors: &[Vector],
    opts: &MrOpts,
    src: &RandomSource,
) -> Result<f64> {
    if vectors.is_empty() {
        return Ok(0.0);
    }
    let space = vectors[0].space;
    if space.is_hilbert() && opts.hilbert_fast_path {
        // basis λ attains sup_k ‖a_k‖ and E‖Σ ε λ a‖ ≤ (Σ λ²‖a‖²)^{1/2} caps it
        return Ok(vectors.iter().map(|v| v.norm()).fold(0.0, f64::max));
    }
    sup_over_unit_lambda(
        vectors,
        |v: &Vector| v.norm(),
        opts.restarts,
        opts.sweeps,
        opts.perturbations,
        RandomizedOpts::default().with_moment(opts.moment),
        src,
    )
}

/// M_R u as a scalar grid function of pointwise lower bounds. Requires a
/// single X-valued component.
pub fn rademacher_maximal(
    u: &GridFunction,
    opts: &MrOpts,
    src: &RandomSource,
) -> Result<GridFunction> {
    if u.grid.n_comp != 1 {
        return Err(Error::shape(
            "rademacher_maximal expects a single component",
        ));
    }
    let grid = u.grid;
    let pyramid = AveragePyramid::build(u);
    let levels: Vec<i32> = grid.levels().collect();
    let values = par::map_indexed(grid.cells(), |cell| -> Result<C64> {
        let chain: Vec<Vector> = levels
            .iter()
            .map(|&k| pyramid.vector_at(k, cell, 0))
            .collect();
        let v = chain_rademacher_bound(&chain, opts, &src.substream(cell as u64))?;
        Ok(C64::new(v, 0.0))
    });
    let mut data = Vec::with_capacity(grid.cells());
    for v in values {
        data.push(v?);
    }
    let out_grid = Grid {
        n_comp: 1,
        space: SpaceDescriptor::scalar(),
        ..grid
    };
    GridFunction::from_data(out_grid, data)
}

/// Report of an L^p operator-norm experiment for M_R. Every ratio is a
/// lower bound: the optimizer may undershoot the true maximal function.
#[derive(Debug, Clone, Serialize)]
pub struct RmfReport {
    pub space: String,
    pub p: f64,
    pub n: usize,
    pub j: u32,
    pub ensemble: usize,
    pub ratio_max: f64,
    pub ratio_mean: f64,
    pub ratios: Vec<f64>,
    pub optimizer: MrOpts,
    pub seed: u64,
}

/// Sample random functions and report the distribution of
/// ‖M_R u‖_{L^p} / ‖u‖_{L^p}.
pub fn rmf_norm_experiment(
    space: SpaceDescriptor,
    p: f64,
    n: usize,
    j: u32,
    ensemble: usize,
    opts: &MrOpts,
    src: &RandomSource,
) -> Result<RmfReport> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::invalid("exponent p must lie in (1, ∞)"));
    }
    let grid = Grid::new(n, j, 1, space)?;
    let mut ratios = Vec::with_capacity(ensemble);
    for i in 0..ensemble {
        let member = src.substream(10_000 + i as u64);
        let mut rng = member.rng();
        let u = GridFunction::random_gaussian(grid, &mut rng);
        let denom = u.lp_norm(p);
        if denom == 0.0 {
            continue;
        }
        let mr = rademacher_maximal(&u, opts, &member)?;
        ratios.push(mr.lp_norm(p) / denom);
    }
    let ratio_max = ratios.iter().copied().fold(0.0, f64::max);
    let ratio_mean = if ratios.is_empty() {
        0.0
    } else {
        ratios.iter().sum::<f64>() / ratios.len() as f64
    };
    Ok(RmfReport {
        space: space.label(),
        p,
        n,
        j,
        ensemble,
        ratio_max,
        ratio_mean,
        ratios,
        optimizer: *opts,
        seed: src.seed,
    })
}

/// Grids with more cells×dimension than this are not materialized by the
/// counterexample builder (the value is exact regardless).
const COUNTEREXAMPLE_DENSE_CAP: usize = 1 << 16;

/// The ℓ¹ counterexample: u(x) = e_k on the k-th cell of a grid with 2^n
/// cells, n = 2^m, paired with λ_{2^i} = 1/(i+1). `value` is the exact
/// enumerated randomized sum at x ∈ [0, 2^{−n}); by basis-permutation
/// symmetry the same value is attained at every x, so it bounds
/// ‖M_R u‖_{L^p} from below for every p while ‖u‖_{L^p} = 1.
#[derive(Debug)]
pub struct CounterexampleL1 {
    pub m: u32,
    /// Grid depth n = 2^m (the function lives on 2^n cells).
    pub depth: u32,
    pub dim: usize,
    /// Exact value of E‖Σ_i ε_i α_i 2^{−2^i} Σ_{k ≤ 2^{2^i}} e_k‖_{ℓ¹}.
    pub value: f64,
    /// The analytic chain Σ_i α_i (1 − 2·2^{−2^{i−1}}), a strict lower bound.
    pub chain_bound: f64,
    /// Dense grid function, only materialized on small instances.
    pub function: Option<GridFunction>,
}

pub fn counterexample_l1(m: u32) -> Result<CounterexampleL1> {
    if m < 1 {
        return Err(Error::invalid("m must be at least 1"));
    }
    if m > 4 {
        return Err(Error::Resource(format!(
            "m = {m} needs a grid of 2^{} cells in dimension 2^{}; capped at m = 4",
            1u64 << m,
            1u64 << m
        )));
    }
    let depth = 1u32 << m; // n = 2^m
    let dim = 1usize << depth;
    let alphas: Vec<f64> = (1..=m).map(|i| 1.0 / (i as f64 + 1.0)).collect();

    // Exact enumeration over 2^m sign patterns; the ℓ¹ norm splits over the
    // coordinate blocks (2^{2^{j−1}}, 2^{2^j}] on which exactly the scales
    // i ≥ j act.
    let mm = m as usize;
    let mut value = 0.0f64;
    for pattern in 0u64..(1 << mm) {
        let signs: Vec<f64> = (0..mm)
            .map(|i| if (pattern >> i) & 1 == 0 { 1.0 } else { -1.0 })
            .collect();
        let mut total = 0.0;
        for jblk in 1..=mm {
            let block = if jblk == 1 {
                (1u64 << 2) as f64
            } else {
                ((1u64 << (1 << jblk)) - (1u64 << (1 << (jblk - 1)))) as f64
            };
            let c: f64 = (jblk..=mm)
                .map(|i| signs[i - 1] * alphas[i - 1] * (0.5f64).powi(1 << i))
                .sum();
            total += block * c.abs();
        }
        value += total;
    }
    value /= (1u64 << mm) as f64;

    let chain_bound: f64 = (1..=mm)
        .map(|i| alphas[i - 1] * (1.0 - 2.0 * (0.5f64).powi(1 << (i - 1))))
        .sum();

    let cells = 1usize << depth;
    let function = if cells * dim <= COUNTEREXAMPLE_DENSE_CAP {
        let space = SpaceDescriptor::lebesgue(1.0, dim)?;
        let grid = Grid::new(1, depth, 1, space)?;
        let mut u = GridFunction::zero(grid);
        for cell in 0..cells {
            *u.at_mut(cell, 0, cell) = C64::new(1.0, 0.0);
        }
        // every cell value is a standard basis vector: all L^p norms are 1
        debug_assert!((u.lp_norm(1.0) - 1.0).abs() < 1e-12);
        Some(u)
    } else {
        None
    };

    Ok(CounterexampleL1 {
        m,
        depth,
        dim,
        value,
        chain_bound,
        function,
    })
}

/// The admissible λ used by the counterexample (λ_{2^i} = 1/(i+1) on the
/// chain of length n+1); its ℓ² norm is below 1 for every m.
pub fn counterexample_lambda(m: u32, depth: u32) -> LambdaVector {
    let mut coefficients = vec![0.0; depth as usize + 1];
    for i in 1..=m {
        // scale index 2^i, counted from the finest level
        coefficients[(1usize << i).min(depth as usize)] = 1.0 / (i as f64 + 1.0);
    }
    LambdaVector::new(coefficients).expect("Σ 1/(i+1)² < 1")
}

#[derive(Debug, Clone, Serialize)]
pub struct DominationReport {
    /// Smallest C with M_R^est ≤ C·Mu pointwise, when X has type 2.
    pub type2_constant: Option<f64>,
    /// Smallest C with M_R^est ≤ C·‖M_lattice u‖_X pointwise, when X is a
    /// lattice.
    pub lattice_constant: Option<f64>,
    pub notices: Vec<String>,
}

/// One-sided domination checks. The optimizer output is a lower bound, so
/// M_R^est ≤ C·(majorant) is genuinely testable.
pub fn domination_checks(
    u: &GridFunction,
    opts: &MrOpts,
    src: &RandomSource,
) -> Result<DominationReport> {
    let space = u.grid.space;
    let mr = rademacher_maximal(u, opts, src)?;
    let mut notices = Vec::new();

    let type2_constant = if space.has_type_2() {
        let m = dyadic_maximal(u);
        let mut worst: f64 = 0.0;
        for cell in 0..u.grid.cells() {
            let denom = m.data[cell].re;
            if denom > 1e-300 {
                worst = worst.max(mr.data[cell].re / denom);
            }
        }
        Some(worst)
    } else {
        notices.push(format!(
            "type-2 check skipped: {} lacks type 2",
            space.label()
        ));
        None
    };

    let lattice_constant = if space.is_lattice() {
        let ml = lattice_maximal(u)?;
        let mut worst: f64 = 0.0;
        for cell in 0..u.grid.cells() {
            let denom = space.norm_slice(ml.cell_slice(cell))?;
            if denom > 1e-300 {
                worst = worst.max(mr.data[cell].re / denom);
            }
        }
        Some(worst)
    } else {
        notices.push(format!(
            "lattice check skipped: {} is not a lattice",
            space.label()
        ));
        None
    };

    Ok(DominationReport {
        type2_constant,
        lattice_constant,
        notices,
    })
}
