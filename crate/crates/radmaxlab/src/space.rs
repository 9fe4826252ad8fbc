//! Finite-dimensional Banach spaces and randomized norm estimation.
//!
//! Supported spaces: ℓ^q on C^d, Hilbert C^d, and Schatten-q on m×m complex
//! matrices. Randomized sums E‖Σ_k ε_k x_k‖ are computed by exact sign
//! enumeration when the term count is at most [`RandomizedOpts::k_exact`]
//! and by Monte Carlo otherwise; Gaussian sums are Monte Carlo with a
//! Hilbert p = 2 closed form. The R-bound search reports certified lower
//! bounds from random restarts plus greedy coordinate ascent.

use crate::error::{Error, Result};
use crate::par;
use crate::rng::RandomSource;
use crate::C64;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Largest Schatten dimension accepted (dense SVD per norm evaluation).
pub const MAX_SCHATTEN_DIM: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SpaceKind {
    /// ℓ^q norm on C^d.
    LebesgueQ { q: f64, d: usize },
    /// Euclidean norm on C^d.
    Hilbert { d: usize },
    /// Schatten-q norm (ℓ^q of singular values) on m×m complex matrices.
    SchattenQ { q: f64, m: usize },
}

/// A finite-dimensional Banach space descriptor with derived structural tags.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceDescriptor {
    pub kind: SpaceKind,
}

impl SpaceDescriptor {
    pub fn lebesgue(q: f64, d: usize) -> Result<Self> {
        if !(q >= 1.0) || !q.is_finite() {
            return Err(Error::invalid(format!(
                "lebesgue exponent q = {q} must be >= 1"
            )));
        }
        if d == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        Ok(SpaceDescriptor {
            kind: SpaceKind::LebesgueQ { q, d },
        })
    }

    pub fn hilbert(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        Ok(SpaceDescriptor {
            kind: SpaceKind::Hilbert { d },
        })
    }

    pub fn schatten(q: f64, m: usize) -> Result<Self> {
        if !(q >= 1.0) || !q.is_finite() {
            return Err(Error::invalid(format!(
                "schatten exponent q = {q} must be >= 1"
            )));
        }
        if m == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        if m > MAX_SCHATTEN_DIM {
            return Err(Error::Resource(format!(
                "schatten dimension {m} exceeds supported maximum {MAX_SCHATTEN_DIM}"
            )));
        }
        Ok(SpaceDescriptor {
            kind: SpaceKind::SchattenQ { q, m },
        })
    }

    /// Scalar complex line C, the `X = C` (and real-data `X = R`) case.
    pub fn scalar() -> Self {
        SpaceDescriptor {
            kind: SpaceKind::Hilbert { d: 1 },
        }
    }

    /// Parse `"lq:1.5:8"`, `"hilbert:4"` or `"schatten:2:3"`.
    pub fn parse(spec: &str) -> Result<Self> {
        let parts: Vec<&str> = spec.split(':').collect();
        let usage = || {
            Error::invalid(format!(
                "malformed space spec '{spec}' (expected lq:Q:D, hilbert:D or schatten:Q:M)"
            ))
        };
        match parts.as_slice() {
            ["lq", q, d] => {
                let q: f64 = q.parse().map_err(|_| usage())?;
                let d: usize = d.parse().map_err(|_| usage())?;
                SpaceDescriptor::lebesgue(q, d)
            }
            ["hilbert", d] => {
                let d: usize = d.parse().map_err(|_| usage())?;
                SpaceDescriptor::hilbert(d)
            }
            ["schatten", q, m] => {
                let q: f64 = q.parse().map_err(|_| usage())?;
                let m: usize = m.parse().map_err(|_| usage())?;
                SpaceDescriptor::schatten(q, m)
            }
            _ => Err(usage()),
        }
    }

    /// Number of complex coordinates in the underlying data array.
    pub fn dim(&self) -> usize {
        match self.kind {
            SpaceKind::LebesgueQ { d, .. } => d,
            SpaceKind::Hilbert { d } => d,
            SpaceKind::SchattenQ { m, .. } => m * m,
        }
    }

    pub fn is_lattice(&self) -> bool {
        !matches!(self.kind, SpaceKind::SchattenQ { .. })
    }

    pub fn is_hilbert(&self) -> bool {
        match self.kind {
            SpaceKind::Hilbert { .. } => true,
            SpaceKind::LebesgueQ { q, .. } => q == 2.0,
            SpaceKind::SchattenQ { q, .. } => q == 2.0,
        }
    }

    pub fn has_type_2(&self) -> bool {
        match self.kind {
            SpaceKind::Hilbert { .. } => true,
            SpaceKind::LebesgueQ { q, .. } | SpaceKind::SchattenQ { q, .. } => q >= 2.0,
        }
    }

    /// Norm of a raw coordinate slice in this space.
    pub fn norm_slice(&self, data: &[C64]) -> Result<f64> {
        if data.len() != self.dim() {
            return Err(Error::shape(format!(
                "vector has {} coordinates, space needs {}",
                data.len(),
                self.dim()
            )));
        }
        Ok(match self.kind {
            SpaceKind::Hilbert { .. } => data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt(),
            SpaceKind::LebesgueQ { q, .. } => lq_norm(data.iter().map(|z| z.norm()), q),
            SpaceKind::SchattenQ { q, m } => {
                if q == 2.0 {
                    // Frobenius
                    data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
                } else {
                    let mat = DMatrix::from_row_slice(m, m, data);
                    let sv = mat.singular_values();
                    lq_norm(sv.iter().copied(), q)
                }
            }
        })
    }

    pub fn label(&self) -> String {
        match self.kind {
            SpaceKind::LebesgueQ { q, d } => format!("lq:{q}:{d}"),
            SpaceKind::Hilbert { d } => format!("hilbert:{d}"),
            SpaceKind::SchattenQ { q, m } => format!("schatten:{q}:{m}"),
        }
    }
}

fn lq_norm(values: impl Iterator<Item = f64>, q: f64) -> f64 {
    if q == 1.0 {
        values.sum()
    } else if q == 2.0 {
        values.map(|v| v * v).sum::<f64>().sqrt()
    } else {
        values.map(|v| v.powf(q)).sum::<f64>().powf(1.0 / q)
    }
}

/// An element of a [`SpaceDescriptor`]: d complex coordinates or an m×m
/// matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector {
    pub space: SpaceDescriptor,
    pub data: Vec<C64>,
}

impl Vector {
    pub fn new(space: SpaceDescriptor, data: Vec<C64>) -> Result<Self> {
        if data.len() != space.dim() {
            return Err(Error::shape(format!(
                "data length {} does not match space dimension {}",
                data.len(),
                space.dim()
            )));
        }
        Ok(Vector { space, data })
    }

    pub fn zero(space: SpaceDescriptor) -> Self {
        Vector {
            space,
            data: vec![C64::new(0.0, 0.0); space.dim()],
        }
    }

    pub fn basis(space: SpaceDescriptor, i: usize) -> Self {
        let mut v = Vector::zero(space);
        v.data[i] = C64::new(1.0, 0.0);
        v
    }

    pub fn norm(&self) -> f64 {
        self.space
            .norm_slice(&self.data)
            .expect("shape enforced at construction")
    }

    pub fn scaled(&self, c: C64) -> Vector {
        Vector {
            space: self.space,
            data: self.data.iter().map(|z| z * c).collect(),
        }
    }

    /// Coordinatewise complex Gaussian sample.
    pub fn random_gaussian(space: SpaceDescriptor, rng: &mut impl Rng) -> Vector {
        let data = (0..space.dim())
            .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        Vector { space, data }
    }
}

/// Checked norm: the descriptor and the vector's space must agree.
pub fn norm(space: &SpaceDescriptor, x: &Vector) -> Result<f64> {
    if x.space != *space {
        return Err(Error::shape("vector space does not match descriptor"));
    }
    space.norm_slice(&x.data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMethod {
    ExactEnum,
    MonteCarlo,
    ClosedForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateSemantic {
    Exact,
    LowerBound,
    Estimate,
}

/// A randomized-norm or R-bound value with provenance. Exact/closed-form
/// estimates carry stderr 0 by construction.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NormEstimate {
    pub value: f64,
    pub method: EstimateMethod,
    pub samples: u64,
    pub stderr: f64,
    pub semantic: EstimateSemantic,
}

impl NormEstimate {
    pub fn exact(value: f64, method: EstimateMethod, samples: u64) -> Self {
        NormEstimate {
            value,
            method,
            samples,
            stderr: 0.0,
            semantic: EstimateSemantic::Exact,
        }
    }

    pub fn monte_carlo(value: f64, samples: u64, stderr: f64) -> Self {
        NormEstimate {
            value,
            method: EstimateMethod::MonteCarlo,
            samples,
            stderr,
            semantic: EstimateSemantic::Estimate,
        }
    }

    pub fn as_lower_bound(mut self) -> Self {
        self.semantic = EstimateSemantic::LowerBound;
        self
    }
}

/// Anything closed under real linear combinations; the substrate for
/// randomized sums. Implemented by [`Vector`] and by grid functions.
pub trait Randomizable: Clone + Send + Sync {
    /// Σ coeffs[k] · xs[k]; xs is non-empty and shapes agree.
    fn combine(coeffs: &[f64], xs: &[Self]) -> Self;
}

impl Randomizable for Vector {
    fn combine(coeffs: &[f64], xs: &[Self]) -> Self {
        let mut out = Vector::zero(xs[0].space);
        for (c, x) in coeffs.iter().zip(xs) {
            for (o, v) in out.data.iter_mut().zip(&x.data) {
                *o += v * *c;
            }
        }
        out
    }
}

/// Options shared by the randomized-average estimators.
#[derive(Debug, Clone, Copy)]
pub struct RandomizedOpts {
    /// Moment p of the average (E‖S‖^p)^{1/p}; the default convention is the
    /// first moment.
    pub moment: f64,
    /// Exact enumeration threshold: term counts K ≤ k_exact enumerate all
    /// 2^K sign patterns.
    pub k_exact: u32,
    /// Monte Carlo sample budget above the enumeration threshold.
    pub budget: u64,
}

impl Default for RandomizedOpts {
    fn default() -> Self {
        RandomizedOpts {
            moment: 1.0,
            k_exact: 14,
            budget: 20_000,
        }
    }
}

impl RandomizedOpts {
    pub fn with_moment(mut self, p: f64) -> Self {
        self.moment = p;
        self
    }
    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = budget;
        self
    }
}

const MC_BATCH: u64 = 256;

/// (E‖Σ_k ε_k xs[k]‖^p)^{1/p} for independent signs, with `norm` supplying
/// the Banach norm. Exact enumeration below the threshold, Monte Carlo above.
pub fn rademacher_sum<E: Randomizable>(
    xs: &[E],
    norm: impl Fn(&E) -> f64 + Sync,
    opts: RandomizedOpts,
    src: &RandomSource,
) -> Result<NormEstimate> {
    if !(opts.moment >= 1.0) {
        return Err(Error::invalid("moment must be >= 1"));
    }
    let k = xs.len();
    if k == 0 {
        return Ok(NormEstimate::exact(0.0, EstimateMethod::ExactEnum, 1));
    }
    if (k as u32) <= opts.k_exact {
        // ε → −ε symmetry: fix the last sign and halve the enumeration.
        let patterns = 1u64 << (k - 1);
        let p = opts.moment;
        let total = par::sum_indexed(patterns as usize, |bits| {
            let coeffs: Vec<f64> = (0..k)
                .map(|j| {
                    if j + 1 == k || (bits >> j) & 1 == 0 {
                        1.0
                    } else {
                        -1.0
                    }
                })
                .collect();
            norm(&E::combine(&coeffs, xs)).powf(p)
        });
        let value = (total / patterns as f64).powf(1.0 / p);
        return Ok(NormEstimate::exact(
            value,
            EstimateMethod::ExactEnum,
            1 << k,
        ));
    }
    if opts.budget < 1 {
        return Err(Error::invalid("monte carlo budget must be at least 1"));
    }
    monte_carlo_sum(xs, &norm, opts, src, CoeffKind::Sign)
}

/// Gaussian analogue of [`rademacher_sum`]; Monte Carlo only.
pub fn gaussian_sum<E: Randomizable>(
    xs: &[E],
    norm: impl Fn(&E) -> f64 + Sync,
    opts: RandomizedOpts,
    src: &RandomSource,
) -> Result<NormEstimate> {
    if !(opts.moment >= 1.0) {
        return Err(Error::invalid("moment must be >= 1"));
    }
    if xs.is_empty() {
        return Ok(NormEstimate::exact(0.0, EstimateMethod::ClosedForm, 1));
    }
    if opts.budget < 1 {
        return Err(Error::invalid("monte carlo budget must be at least 1"));
    }
    monte_carlo_sum(xs, &norm, opts, src, CoeffKind::Gaussian)
}

#[derive(Clone, Copy)]
enum CoeffKind {
    Sign,
    Gaussian,
}

fn monte_carlo_sum<E: Randomizable>(
    xs: &[E],
    norm: &(impl Fn(&E) -> f64 + Sync),
    opts: RandomizedOpts,
    src: &RandomSource,
    kind: CoeffKind,
) -> Result<NormEstimate> {
    let k = xs.len();
    let p = opts.moment;
    let budget = opts.budget;
    let batches = budget.div_ceil(MC_BATCH);
    // One RNG substream per fixed-size batch: deterministic under any
    // parallel schedule.
    let partials = par::map_indexed(batches as usize, |b| {
        let mut rng = src.substream(b as u64).rng();
        let lo = b as u64 * MC_BATCH;
        let hi = (lo + MC_BATCH).min(budget);
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        let mut coeffs = vec![0.0f64; k];
        for _ in lo..hi {
            for c in coeffs.iter_mut() {
                *c = match kind {
                    CoeffKind::Sign => {
                        if rng.gen::<bool>() {
                            1.0
                        } else {
                            -1.0
                        }
                    }
                    CoeffKind::Gaussian => rng.sample(StandardNormal),
                };
            }
            let y = norm(&E::combine(&coeffs, xs)).powf(p);
            sum += y;
            sumsq += y * y;
        }
        (sum, sumsq)
    });
    let (sum, sumsq) = partials
        .iter()
        .fold((0.0, 0.0), |(a, b), (s, ss)| (a + s, b + ss));
    let n = budget as f64;
    let mean = sum / n;
    let var = (sumsq / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
    let value = mean.powf(1.0 / p);
    // Delta method for the p-th root of the sample mean.
    let stderr = if mean > 0.0 {
        (var / n).sqrt() * value / (p * mean)
    } else {
        (var / n).sqrt()
    };
    Ok(NormEstimate::monte_carlo(value, budget, stderr))
}

/// Rademacher average of a [`Vector`] family: closed form
/// (Σ‖x_k‖²)^{1/2} for the second moment on Hilbert spaces, otherwise
/// enumeration / Monte Carlo.
pub fn rademacher_avg(
    space: &SpaceDescriptor,
    xs: &[Vector],
    opts: RandomizedOpts,
    src: &RandomSource,
) -> Result<NormEstimate> {
    check_family(space, xs)?;
    if space.is_hilbert() && opts.moment == 2.0 {
        let value = xs.iter().map(|x| x.norm().powi(2)).sum::<f64>().sqrt();
        return Ok(NormEstimate::exact(value, EstimateMethod::ClosedForm, 1));
    }
    rademacher_sum(xs, |v: &Vector| v.norm(), opts, src)
}

/// Gaussian average of a [`Vector`] family (same Hilbert p = 2 closed
/// form: Eγ² = 1).
pub fn gaussian_avg(
    space: &SpaceDescriptor,
    xs: &[Vector],
    opts: RandomizedOpts,
    src: &RandomSource,
) -> Result<NormEstimate> {
    check_family(space, xs)?;
    if space.is_hilbert() && opts.moment == 2.0 {
        let value = xs.iter().map(|x| x.norm().powi(2)).sum::<f64>().sqrt();
        return Ok(NormEstimate::exact(value, EstimateMethod::ClosedForm, 1));
    }
    gaussian_sum(xs, |v: &Vector| v.norm(), opts, src)
}

fn check_family(space: &SpaceDescriptor, xs: &[Vector]) -> Result<()> {
    for x in xs {
        if x.space != *space {
            return Err(Error::shape("family member lives in a different space"));
        }
    }
    Ok(())
}

/// Lattice square function ‖(Σ_k |x_k|²)^{1/2}‖_X with coordinatewise
/// modulus.
pub fn square_function_norm(space: &SpaceDescriptor, xs: &[Vector]) -> Result<f64> {
    if !space.is_lattice() {
        return Err(Error::UnsupportedSpace(format!(
            "square function needs a lattice, got {}",
            space.label()
        )));
    }
    check_family(space, xs)?;
    let mut acc = vec![0.0f64; space.dim()];
    for x in xs {
        for (a, z) in acc.iter_mut().zip(&x.data) {
            *a += z.norm_sqr();
        }
    }
    let data: Vec<C64> = acc.iter().map(|a| C64::new(a.sqrt(), 0.0)).collect();
    space.norm_slice(&data)
}

/// The norm (E‖Σ_i γ_i x_i‖²_X)^{1/2} on X^n tuples; exact on Hilbert
/// spaces, Monte Carlo elsewhere.
pub fn gaussian_product_norm(
    space: &SpaceDescriptor,
    tuple: &[Vector],
    budget: u64,
    src: &RandomSource,
) -> Result<f64> {
    check_family(space, tuple)?;
    if tuple.is_empty() {
        return Ok(0.0);
    }
    if tuple.len() == 1 {
        return Ok(tuple[0].norm());
    }
    if space.is_hilbert() {
        return Ok(tuple.iter().map(|x| x.norm().powi(2)).sum::<f64>().sqrt());
    }
    let est = gaussian_sum(
        tuple,
        |v: &Vector| v.norm(),
        RandomizedOpts {
            moment: 2.0,
            k_exact: 0,
            budget,
        },
        src,
    )?;
    Ok(est.value)
}

/// Report from a contraction-principle check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContractionReport {
    pub lhs: f64,
    pub rhs: f64,
    pub stderr: f64,
    pub pass: bool,
}

/// Checks E‖Σ ε_j λ_j x_j‖ ≤ 2‖λ‖_∞ E‖Σ ε_j x_j‖. Exact enumeration for
/// small families; in the Monte Carlo regime the pass allows 3 stderr.
pub fn contraction_check(
    space: &SpaceDescriptor,
    xs: &[Vector],
    lambdas: &[C64],
    opts: RandomizedOpts,
    src: &RandomSource,
) -> Result<ContractionReport> {
    if xs.len() != lambdas.len() {
        return Err(Error::invalid("xs and lambdas must have equal length"));
    }
    check_family(space, xs)?;
    let scaled: Vec<Vector> = xs.iter().zip(lambdas).map(|(x, l)| x.scaled(*l)).collect();
    let opts = RandomizedOpts {
        moment: 1.0,
        ..opts
    };
    let lhs = rademacher_sum(&scaled, |v: &Vector| v.norm(), opts, src)?;
    let base = rademacher_sum(xs, |v: &Vector| v.norm(), opts, &src.substream(1))?;
    let linf = lambdas.iter().map(|l| l.norm()).fold(0.0, f64::max);
    let rhs = 2.0 * linf * base.value;
    let stderr = lhs.stderr + 2.0 * linf * base.stderr;
    let pass = lhs.value <= rhs + 3.0 * stderr;
    Ok(ContractionReport {
        lhs: lhs.value,
        rhs,
        stderr,
        pass,
    })
}

/// Search settings for [`rbound_estimate`].
#[derive(Debug, Clone, Copy)]
pub struct RboundOpts {
    pub tuple_len: usize,
    pub restarts: usize,
    pub sweeps: usize,
    pub perturbations: usize,
    pub randomized: RandomizedOpts,
}

impl Default for RboundOpts {
    fn default() -> Self {
        RboundOpts {
            tuple_len: 4,
            restarts: 8,
            sweeps: 50,
            perturbations: 32,
            randomized: RandomizedOpts::default(),
        }
    }
}

/// Certified lower bound on the R-bound of an operator family: the best
/// ratio E‖Σ ε_i T_{j_i} x_i‖ / E‖Σ ε_i x_i‖ found over random
/// configurations refined by greedy coordinate ascent. The true supremum is
/// not computable; the semantic is always `LowerBound`.
pub fn rbound_estimate<E: Randomizable>(
    family: &[&(dyn Fn(&E) -> E + Sync)],
    sample: impl Fn(&mut rand_chacha::ChaCha8Rng) -> E,
    norm: impl Fn(&E) -> f64 + Sync,
    opts: RboundOpts,
    src: &RandomSource,
) -> Result<NormEstimate> {
    if family.is_empty() {
        return Err(Error::invalid("operator family is empty"));
    }
    if opts.tuple_len == 0 {
        return Err(Error::invalid("tuple length must be >= 1"));
    }
    let n = opts.tuple_len;
    let ratio = |assign: &[usize], xs: &[E]| -> Result<Option<f64>> {
        let denom = rademacher_sum(xs, &norm, opts.randomized, src)?.value;
        if denom <= 1e-300 {
            return Ok(None); // zero-denominator configurations are skipped
        }
        let mapped: Vec<E> = assign
            .iter()
            .zip(xs)
            .map(|(&j, x)| (family[j])(x))
            .collect();
        let numer = rademacher_sum(&mapped, &norm, opts.randomized, src)?.value;
        Ok(Some(numer / denom))
    };

    let mut best = 0.0f64;
    let mut evals = 0u64;
    // deterministic single-operator restarts first (one per family member),
    // then random mixed assignments
    let restarts = opts.restarts.max(1) + family.len();
    for restart in 0..restarts {
        let mut rng = src.substream(1000 + restart as u64).rng();
        let assign: Vec<usize> = if restart < family.len() {
            vec![restart; n]
        } else {
            (0..n).map(|_| rng.gen_range(0..family.len())).collect()
        };
        let mut xs: Vec<E> = (0..n).map(|_| sample(&mut rng)).collect();
        let mut cur = match ratio(&assign, &xs)? {
            Some(r) => r,
            None => continue,
        };
        evals += 1;
        for _ in 0..opts.sweeps {
            let mut improved = false;
            for i in 0..n {
                let mut cand_best: Option<(f64, E)> = None;
                for _ in 0..opts.perturbations {
                    let fresh = sample(&mut rng);
                    let step: f64 = rng.gen_range(0.05..1.0);
                    let trial = E::combine(&[1.0, step], &[xs[i].clone(), fresh]);
                    let mut trial_xs = xs.clone();
                    trial_xs[i] = trial.clone();
                    evals += 1;
                    if let Some(r) = ratio(&assign, &trial_xs)? {
                        if cand_best.as_ref().map_or(true, |(b, _)| r > *b) {
                            cand_best = Some((r, trial));
                        }
                    }
                }
                if let Some((r, x)) = cand_best {
                    if r > cur {
                        cur = r;
                        xs[i] = x;
                        improved = true;
                    }
                }
            }
            if !improved {
                break;
            }
        }
        best = best.max(cur);
    }
    Ok(NormEstimate {
        value: best,
        method: EstimateMethod::MonteCarlo,
        samples: evals,
        stderr: 0.0,
        semantic: EstimateSemantic::LowerBound,
    })
}

/// Best E‖Σ_k ε_k λ_k a_k‖ over real λ in the ℓ² unit ball, from canonical
/// basis candidates, random directions, and projected coordinate ascent.
/// This is the inner engine of the Rademacher maximal function and the
/// chain-restricted stopping-time classifier.
pub fn sup_over_unit_lambda<E: Randomizable>(
    vectors: &[E],
    norm: impl Fn(&E) -> f64 + Sync,
    restarts: usize,
    sweeps: usize,
    perturbations: usize,
    opts: RandomizedOpts,
    src: &RandomSource,
) -> Result<f64> {
    let k = vectors.len();
    if k == 0 {
        return Ok(0.0);
    }
    let objective = |lambda: &[f64]| -> Result<f64> {
        let scaled: Vec<E> = lambda
            .iter()
            .zip(vectors)
            .map(|(l, v)| E::combine(&[*l], std::slice::from_ref(v)))
            .collect();
        Ok(rademacher_sum(&scaled, &norm, opts, src)?.value)
    };
    // Canonical basis: recovers sup_k ‖a_k‖, and is exact for Hilbert spaces.
    let mut best = 0.0f64;
    for i in 0..k {
        let mut lambda = vec![0.0; k];
        lambda[i] = 1.0;
        best = best.max(objective(&lambda)?);
    }
    let normalize = |l: &mut [f64]| {
        let n = l.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            for x in l.iter_mut() {
                *x /= n;
            }
        }
    };
    for restart in 0..restarts {
        let mut rng = src.substream(7000 + restart as u64).rng();
        let mut lambda: Vec<f64> = (0..k)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        normalize(&mut lambda);
        let mut cur = objective(&lambda)?;
        for _ in 0..sweeps {
            let mut improved = false;
            for _ in 0..perturbations {
                let mut trial = lambda.clone();
                let step: f64 = rng.gen_range(0.02..0.5);
                for x in trial.iter_mut() {
                    *x += step * rng.sample::<f64, _>(StandardNormal);
                }
                normalize(&mut trial);
                let val = objective(&trial)?;
                if val > cur {
                    cur = val;
                    lambda = trial;
                    improved = true;
                }
            }
            if !improved {
                break;
            }
        }
        best = best.max(cur);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn src() -> RandomSource {
        RandomSource::new(0xC0FFEE)
    }

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn norms_of_the_three_kinds() {
        let h = SpaceDescriptor::hilbert(2).unwrap();
        let x = Vector::new(h, vec![c(3.0), c(4.0)]).unwrap();
        assert!((norm(&h, &x).unwrap() - 5.0).abs() < 1e-15);

        let l1 = SpaceDescriptor::lebesgue(1.0, 3).unwrap();
        let y = Vector::new(l1, vec![c(1.0), c(-2.0), c(3.0)]).unwrap();
        assert!((norm(&l1, &y).unwrap() - 6.0).abs() < 1e-15);

        let s2 = SpaceDescriptor::schatten(2.0, 2).unwrap();
        let id = Vector::new(s2, vec![c(1.0), c(0.0), c(0.0), c(1.0)]).unwrap();
        assert!((norm(&s2, &id).unwrap() - 2.0f64.sqrt()).abs() < 1e-15);

        // Schatten-1 of a rank-one projector is 1.
        let s1 = SpaceDescriptor::schatten(1.0, 2).unwrap();
        let proj = Vector::new(s1, vec![c(1.0), c(0.0), c(0.0), c(0.0)]).unwrap();
        assert!((norm(&s1, &proj).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn norm_shape_mismatch_is_error() {
        let h = SpaceDescriptor::hilbert(2).unwrap();
        let l = SpaceDescriptor::lebesgue(1.0, 2).unwrap();
        let x = Vector::new(l, vec![c(1.0), c(1.0)]).unwrap();
        assert!(norm(&h, &x).is_err());
    }

    #[test]
    fn space_tags() {
        let l15 = SpaceDescriptor::lebesgue(1.5, 4).unwrap();
        assert!(l15.is_lattice() && !l15.is_hilbert() && !l15.has_type_2());
        let l2 = SpaceDescriptor::lebesgue(2.0, 4).unwrap();
        assert!(l2.is_hilbert() && l2.has_type_2());
        let s2 = SpaceDescriptor::schatten(2.0, 3).unwrap();
        assert!(s2.is_hilbert() && !s2.is_lattice());
        let l4 = SpaceDescriptor::lebesgue(4.0, 2).unwrap();
        assert!(l4.has_type_2() && !l4.is_hilbert());
    }

    #[test]
    fn parse_specs() {
        assert_eq!(SpaceDescriptor::parse("lq:1.5:8").unwrap().dim(), 8);
        assert_eq!(SpaceDescriptor::parse("hilbert:4").unwrap().dim(), 4);
        assert_eq!(SpaceDescriptor::parse("schatten:2:3").unwrap().dim(), 9);
        assert!(SpaceDescriptor::parse("banana").is_err());
        assert!(SpaceDescriptor::parse("lq:0.5:8").is_err());
        assert!(SpaceDescriptor::parse("schatten:2:40").is_err());
    }

    #[test]
    fn rademacher_single_term_is_norm() {
        let h = SpaceDescriptor::hilbert(3).unwrap();
        let x = Vector::new(h, vec![c(1.0), c(2.0), c(2.0)]).unwrap();
        let est = rademacher_avg(&h, &[x], RandomizedOpts::default(), &src()).unwrap();
        assert_eq!(est.method, EstimateMethod::ExactEnum);
        assert!((est.value - 3.0).abs() < 1e-14);
    }

    #[test]
    fn rademacher_orthogonal_pair() {
        // every sign pattern of e1 ± e2 has norm √2
        let h = SpaceDescriptor::hilbert(2).unwrap();
        let xs = [Vector::basis(h, 0), Vector::basis(h, 1)];
        let est = rademacher_avg(&h, &xs, RandomizedOpts::default(), &src()).unwrap();
        assert!((est.value - 2.0f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn rademacher_scalar_pair_enumeration() {
        // oracle: (|1+1| + |1-1| + |-1+1| + |-1-1|)/4 = 1
        let r = SpaceDescriptor::hilbert(1).unwrap();
        let one = Vector::new(r, vec![c(1.0)]).unwrap();
        let brute: f64 = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)]
            .iter()
            .map(|(a, b): &(f64, f64)| (a + b).abs())
            .sum::<f64>()
            / 4.0;
        let est =
            rademacher_avg(&r, &[one.clone(), one], RandomizedOpts::default(), &src()).unwrap();
        assert!((est.value - brute).abs() < 1e-14);
        assert!((brute - 1.0).abs() < 1e-15);
    }

    #[test]
    fn empty_family_is_zero_exact() {
        let h = SpaceDescriptor::hilbert(2).unwrap();
        let est = rademacher_avg(&h, &[], RandomizedOpts::default(), &src()).unwrap();
        assert_eq!(est.value, 0.0);
        assert_eq!(est.stderr, 0.0);
    }

    #[test]
    fn mc_budget_zero_is_error() {
        let h = SpaceDescriptor::hilbert(1).unwrap();
        let xs: Vec<Vector> = (0..20).map(|_| Vector::basis(h, 0)).collect();
        let opts = RandomizedOpts {
            budget: 0,
            ..Default::default()
        };
        assert!(rademacher_avg(&h, &xs, opts, &src()).is_err());
    }

    #[test]
    fn gaussian_single_term_moments() {
        let h = SpaceDescriptor::hilbert(2).unwrap();
        let x = Vector::new(h, vec![c(3.0), c(4.0)]).unwrap();
        // p = 2 closed form: ‖x‖
        let est2 = gaussian_avg(
            &h,
            std::slice::from_ref(&x),
            RandomizedOpts::default().with_moment(2.0),
            &src(),
        )
        .unwrap();
        assert_eq!(est2.method, EstimateMethod::ClosedForm);
        assert!((est2.value - 5.0).abs() < 1e-14);
        // p = 1: E|γ|·‖x‖ = √(2/π)·‖x‖ within 3 stderr
        let est1 = gaussian_avg(
            &h,
            &[x],
            RandomizedOpts::default().with_budget(40_000),
            &src(),
        )
        .unwrap();
        let expect = (2.0 / std::f64::consts::PI).sqrt() * 5.0;
        assert!(
            (est1.value - expect).abs() <= 3.0 * est1.stderr.max(1e-6),
            "{} vs {}",
            est1.value,
            expect
        );
    }

    #[test]
    fn gaussian_orthogonal_pair_p2() {
        let h = SpaceDescriptor::hilbert(2).unwrap();
        let xs = [Vector::basis(h, 0), Vector::basis(h, 1)];
        let est =
            gaussian_avg(&h, &xs, RandomizedOpts::default().with_moment(2.0), &src()).unwrap();
        assert!((est.value - 2.0f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn square_function_examples() {
        let l2 = SpaceDescriptor::lebesgue(2.0, 2).unwrap();
        let v = square_function_norm(&l2, &[Vector::basis(l2, 0), Vector::basis(l2, 1)]).unwrap();
        assert!((v - 2.0f64.sqrt()).abs() < 1e-14);

        let l1 = SpaceDescriptor::lebesgue(1.0, 2).unwrap();
        let e1 = Vector::basis(l1, 0);
        let v = square_function_norm(&l1, &[e1.clone(), e1]).unwrap();
        assert!((v - 2.0f64.sqrt()).abs() < 1e-14);

        let h = SpaceDescriptor::hilbert(2).unwrap();
        let x = Vector::new(h, vec![c(-3.0), c(4.0)]).unwrap();
        let v = square_function_norm(&h, std::slice::from_ref(&x)).unwrap();
        assert!((v - x.norm()).abs() < 1e-14);

        let s = SpaceDescriptor::schatten(1.0, 2).unwrap();
        assert!(square_function_norm(&s, &[Vector::zero(s)]).is_err());
    }

    #[test]
    fn gaussian_product_norm_hilbert_exact() {
        let h = SpaceDescriptor::hilbert(2).unwrap();
        let xs = [
            Vector::basis(h, 0),
            Vector::new(h, vec![c(0.0), c(2.0)]).unwrap(),
        ];
        let v = gaussian_product_norm(&h, &xs, 100, &src()).unwrap();
        assert!((v - 5.0f64.sqrt()).abs() < 1e-14);
        let single = gaussian_product_norm(&h, &xs[1..], 100, &src()).unwrap();
        assert!((single - 2.0).abs() < 1e-14);
    }

    #[test]
    fn gaussian_product_norm_l1_folded_moments() {
        // (E(|γ₁| + |γ₂|)²)^{1/2} = (2 + 4/π)^{1/2}
        let l1 = SpaceDescriptor::lebesgue(1.0, 2).unwrap();
        let xs = [Vector::basis(l1, 0), Vector::basis(l1, 1)];
        let v = gaussian_product_norm(&l1, &xs, 400_000, &src()).unwrap();
        let expect = (2.0 + 4.0 / std::f64::consts::PI).sqrt();
        assert!((v - expect).abs() < 0.02, "{v} vs {expect}");
    }

    #[test]
    fn contraction_lambda_one_and_zero() {
        let h = SpaceDescriptor::hilbert(2).unwrap();
        let xs = vec![Vector::basis(h, 0), Vector::basis(h, 1)];
        let ones = vec![c(1.0); 2];
        let rep = contraction_check(&h, &xs, &ones, RandomizedOpts::default(), &src()).unwrap();
        assert!(rep.pass);
        assert!((rep.lhs - rep.rhs / 2.0).abs() < 1e-12);
        let zeros = vec![c(0.0); 2];
        let rep = contraction_check(&h, &xs, &zeros, RandomizedOpts::default(), &src()).unwrap();
        assert!(rep.pass && rep.lhs == 0.0);
    }

    #[test]
    fn contraction_mc_fallback_above_threshold() {
        // K beyond the enumeration threshold: Monte Carlo with a 3-stderr pass
        let h = SpaceDescriptor::hilbert(3).unwrap();
        let mut rng = src().rng();
        let xs: Vec<Vector> = (0..20)
            .map(|_| Vector::random_gaussian(h, &mut rng))
            .collect();
        let lambdas: Vec<C64> = (0..20)
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let opts = RandomizedOpts {
            k_exact: 14,
            budget: 20_000,
            ..Default::default()
        };
        let rep = contraction_check(&h, &xs, &lambdas, opts, &src()).unwrap();
        assert!(rep.stderr > 0.0, "expected the Monte Carlo path");
        assert!(
            rep.pass,
            "lhs {} rhs {} stderr {}",
            rep.lhs, rep.rhs, rep.stderr
        );
    }

    #[test]
    fn contraction_random_l1_instance() {
        let l1 = SpaceDescriptor::lebesgue(1.0, 4).unwrap();
        let mut rng = src().rng();
        let xs: Vec<Vector> = (0..6)
            .map(|_| Vector::random_gaussian(l1, &mut rng))
            .collect();
        let lambdas: Vec<C64> = (0..6)
            .map(|_| C64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)))
            .collect();
        let rep = contraction_check(&l1, &xs, &lambdas, RandomizedOpts::default(), &src()).unwrap();
        assert!(rep.pass, "lhs {} rhs {}", rep.lhs, rep.rhs);
    }

    #[test]
    fn rbound_identity_family_is_one() {
        for space in [
            SpaceDescriptor::hilbert(3).unwrap(),
            SpaceDescriptor::lebesgue(1.0, 3).unwrap(),
            SpaceDescriptor::schatten(4.0, 2).unwrap(),
        ] {
            let id: &(dyn Fn(&Vector) -> Vector + Sync) = &|v: &Vector| v.clone();
            let est = rbound_estimate(
                &[id],
                |rng| Vector::random_gaussian(space, rng),
                |v: &Vector| v.norm(),
                RboundOpts {
                    restarts: 2,
                    sweeps: 2,
                    perturbations: 4,
                    ..Default::default()
                },
                &src(),
            )
            .unwrap();
            assert!((est.value - 1.0).abs() < 1e-12, "{}", est.value);
            assert_eq!(est.semantic, EstimateSemantic::LowerBound);
        }
    }

    #[test]
    fn rbound_scalar_family_is_modulus() {
        let space = SpaceDescriptor::lebesgue(1.5, 3).unwrap();
        let op: &(dyn Fn(&Vector) -> Vector + Sync) = &|v: &Vector| v.scaled(C64::new(-2.5, 0.0));
        let est = rbound_estimate(
            &[op],
            |rng| Vector::random_gaussian(space, rng),
            |v: &Vector| v.norm(),
            RboundOpts {
                restarts: 2,
                sweeps: 2,
                perturbations: 4,
                ..Default::default()
            },
            &src(),
        )
        .unwrap();
        assert!((est.value - 2.5).abs() < 1e-12);
    }

    #[test]
    fn rbound_empty_family_is_error() {
        let fam: Vec<&(dyn Fn(&Vector) -> Vector + Sync)> = vec![];
        let space = SpaceDescriptor::hilbert(1).unwrap();
        assert!(rbound_estimate(
            &fam,
            |rng| Vector::random_gaussian(space, rng),
            |v: &Vector| v.norm(),
            RboundOpts::default(),
            &src()
        )
        .is_err());
    }

    #[test]
    fn kahane_moment_comparison_enumerable() {
        // (E‖S‖^p)^{1/p} ≥ E‖S‖ for p ≥ 1 by Jensen; check on fuzzed instances.
        let l15 = SpaceDescriptor::lebesgue(1.5, 3).unwrap();
        let mut rng = src().rng();
        for _ in 0..20 {
            let k = rng.gen_range(1..6);
            let xs: Vec<Vector> = (0..k)
                .map(|_| Vector::random_gaussian(l15, &mut rng))
                .collect();
            let p1 = rademacher_avg(&l15, &xs, RandomizedOpts::default(), &src())
                .unwrap()
                .value;
            for p in [1.5, 2.0, 3.0] {
                let pp =
                    rademacher_avg(&l15, &xs, RandomizedOpts::default().with_moment(p), &src())
                        .unwrap()
                        .value;
                assert!(pp >= p1 - 1e-12);
            }
        }
    }

    #[test]
    fn rademacher_homogeneity_exact_regime() {
        let l1 = SpaceDescriptor::lebesgue(1.0, 3).unwrap();
        let mut rng = src().rng();
        let xs: Vec<Vector> = (0..5)
            .map(|_| Vector::random_gaussian(l1, &mut rng))
            .collect();
        let scaled: Vec<Vector> = xs.iter().map(|x| x.scaled(c(-3.5))).collect();
        let a = rademacher_avg(&l1, &xs, RandomizedOpts::default(), &src())
            .unwrap()
            .value;
        let b = rademacher_avg(&l1, &scaled, RandomizedOpts::default(), &src())
            .unwrap()
            .value;
        assert!((b - 3.5 * a).abs() < 1e-12 * (1.0 + b));
    }

    #[test]
    fn rademacher_homogeneity_mc_regime() {
        // beyond the enumeration threshold the scaling law holds to 3 stderr
        let l1 = SpaceDescriptor::lebesgue(1.0, 3).unwrap();
        let mut rng = src().rng();
        let xs: Vec<Vector> = (0..20)
            .map(|_| Vector::random_gaussian(l1, &mut rng))
            .collect();
        let scaled: Vec<Vector> = xs.iter().map(|x| x.scaled(c(2.5))).collect();
        let opts = RandomizedOpts {
            k_exact: 0,
            budget: 30_000,
            ..Default::default()
        };
        let a = rademacher_avg(&l1, &xs, opts, &src()).unwrap();
        let b = rademacher_avg(&l1, &scaled, opts, &src()).unwrap();
        assert_eq!(a.method, EstimateMethod::MonteCarlo);
        let spread = 3.0 * (2.5 * a.stderr + b.stderr);
        assert!(
            (b.value - 2.5 * a.value).abs() <= spread,
            "{} vs {}",
            b.value,
            2.5 * a.value
        );
    }

    #[test]
    fn rad_vs_gauss_one_sided() {
        // E‖Σ ε x‖ ≤ √(π/2)·E‖Σ γ x‖ + 3 stderr
        let l1 = SpaceDescriptor::lebesgue(1.0, 4).unwrap();
        let mut rng = src().rng();
        for trial in 0..5 {
            let k = 3 + trial;
            let xs: Vec<Vector> = (0..k)
                .map(|_| Vector::random_gaussian(l1, &mut rng))
                .collect();
            let rad = rademacher_avg(&l1, &xs, RandomizedOpts::default(), &src()).unwrap();
            let gauss = gaussian_avg(
                &l1,
                &xs,
                RandomizedOpts::default().with_budget(60_000),
                &src(),
            )
            .unwrap();
            let bound = (std::f64::consts::PI / 2.0).sqrt() * gauss.value;
            assert!(
                rad.value <= bound + 3.0 * (rad.stderr + gauss.stderr) + 1e-9,
                "rad {} bound {}",
                rad.value,
                bound
            );
        }
    }

    #[test]
    fn sup_over_unit_lambda_scalar_recovers_max() {
        // scalar X: best λ is a canonical basis vector, so the sup equals max |a_k|.
        let r = SpaceDescriptor::hilbert(1).unwrap();
        let vals = [0.3, -1.7, 0.9, 0.2];
        let vectors: Vec<Vector> = vals
            .iter()
            .map(|&v| Vector::new(r, vec![c(v)]).unwrap())
            .collect();
        let got = sup_over_unit_lambda(
            &vectors,
            |v: &Vector| v.norm(),
            4,
            6,
            8,
            RandomizedOpts::default(),
            &src(),
        )
        .unwrap();
        assert!((got - 1.7).abs() < 1e-10, "{got}");
    }
}
