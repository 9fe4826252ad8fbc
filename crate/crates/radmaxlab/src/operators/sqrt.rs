//! Square roots of L = −div A∇: a dense principal-square-root oracle
//! (Hermitian eigendecomposition or complex Schur with the triangular
//! recurrence), a resolvent quadrature √L = (2/π)∫ L(I+t²L)^{−1} dt on a
//! geometric t-grid, and the route through the sign function of the
//! perturbed Hodge–Dirac operator.

use super::handle::{apply, assemble_dense, MatrixField, OperatorHandle, SolverOpts};
use super::hodge::{hodge_dirac, resolvents, HodgeDiracConfig};
use super::symbol::{wavenumber_sq, MultiplierSymbol};
use crate::dyadic::{Grid, GridFunction};
use crate::error::{Error, Result};
use crate::C64;
use nalgebra::DMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SqrtMethod {
    /// Dense principal square root of the assembled matrix (the oracle).
    DenseSchur,
    /// (2/π) Σ w_j L(I + t_j²L)^{−1} u over a geometric t-grid.
    ResolventQuadrature,
    /// Through sgn(Π_B): (2/π) Σ w_j [Π_B P_{t_j}^B Π_B (u,0)]₁.
    SignOfPiB,
}

/// Principal square root of a square complex matrix: Hermitian
/// eigendecomposition when applicable, otherwise complex Schur plus the
/// standard triangular recurrence.
pub fn dense_sqrt_matrix(m: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::shape("square matrix required"));
    }
    let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
    let herm_dev = (m - m.adjoint())
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    if herm_dev < 1e-10 * scale {
        let eig = m.clone().symmetric_eigen();
        let vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        if vals.iter().any(|&v| v < -1e-8 * scale) {
            return Err(Error::invalid(
                "hermitian matrix has a significantly negative eigenvalue; principal square root undefined on the real branch",
            ));
        }
        let sq = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            n,
            vals.iter().map(|&v| C64::new(v.max(0.0).sqrt(), 0.0)),
        ));
        let v = eig.eigenvectors;
        return Ok(&v * sq * v.adjoint());
    }
    let schur = m
        .clone()
        .try_schur(1e-12, 10_000)
        .ok_or_else(|| Error::SolverFailure {
            context: "schur iteration".into(),
            residual: f64::NAN,
        })?;
    let (q, t) = schur.unpack();
    let mut u = DMatrix::from_element(n, n, C64::new(0.0, 0.0));
    for i in 0..n {
        u[(i, i)] = t[(i, i)].sqrt();
    }
    for off in 1..n {
        for i in 0..n - off {
            let j = i + off;
            let mut s = t[(i, j)];
            for k in i + 1..j {
                s -= u[(i, k)] * u[(k, j)];
            }
            let denom = u[(i, i)] + u[(j, j)];
            if denom.norm() < 1e-14 * scale.sqrt() {
                return Err(Error::invalid(
                    "principal square root recurrence broke down (near-cancelling eigenvalue pair)",
                ));
            }
            u[(i, j)] = s / denom;
        }
    }
    Ok(&q * u * q.adjoint())
}

/// The operator handle of L = −div A ∇ for an n×n coefficient field.
pub fn l_operator(n: usize, j: u32, a: &MatrixField) -> Result<OperatorHandle> {
    if a.rows != n || a.cols != n {
        return Err(Error::shape("coefficient field must be n×n"));
    }
    OperatorHandle::compose(vec![
        OperatorHandle::fourier(MultiplierSymbol::minus_divergence(n, j)),
        OperatorHandle::pointwise(a.clone()),
        OperatorHandle::fourier(MultiplierSymbol::gradient(n, j)),
    ])
}

/// Spectral bounds of L used to size the quadrature grid: smallest nonzero
/// and largest eigenvalue estimates from the coefficient bounds.
fn spectral_bounds(n: usize, j: u32, a: &MatrixField) -> (f64, f64) {
    let hi_coeff = a.linf_norm().max(1e-12);
    let mut lo_coeff = f64::INFINITY;
    for cell in 0..a.cells() {
        let m = a.matrix_at(cell);
        let herm = (&m + m.adjoint()) * C64::new(0.5, 0.0);
        let lo = if a.rows == 1 {
            herm[(0, 0)].re
        } else {
            herm.symmetric_eigen()
                .eigenvalues
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min)
        };
        lo_coeff = lo_coeff.min(lo);
    }
    let lo_coeff = lo_coeff.max(1e-12);
    let four_pi2 = 4.0 * std::f64::consts::PI * std::f64::consts::PI;
    let w2_max = four_pi2 * (n as f64) * ((1u64 << (j.saturating_sub(1))) as f64).powi(2);
    (lo_coeff * four_pi2, hi_coeff * w2_max.max(four_pi2))
}

#[derive(Debug, Clone, Copy)]
pub struct QuadratureOpts {
    pub nodes_per_decade: usize,
    /// Target relative truncation error; sets the t-range from the spectral
    /// bounds.
    pub truncation_tol: f64,
    pub solver: SolverOpts,
}

impl Default for QuadratureOpts {
    fn default() -> Self {
        QuadratureOpts {
            nodes_per_decade: 40,
            truncation_tol: 1e-7,
            solver: SolverOpts::default(),
        }
    }
}

/// √L u. The coefficient field must be accretive; `DenseSchur` requires the
/// assembled grid to stay at or below the dense crossover.
pub fn sqrt_l(
    n: usize,
    j: u32,
    a: &MatrixField,
    u: &GridFunction,
    method: SqrtMethod,
    opts: QuadratureOpts,
) -> Result<GridFunction> {
    if u.grid.n != n || u.grid.j != j || u.grid.n_comp != 1 {
        return Err(Error::shape(
            "sqrt_l expects a scalar-component function on the same grid",
        ));
    }
    match method {
        SqrtMethod::DenseSchur => {
            let cells = u.grid.cells();
            if cells > opts.solver.dense_crossover {
                return Err(Error::Resource(format!(
                    "dense square root needs ≤ {} unknowns, grid has {cells}",
                    opts.solver.dense_crossover
                )));
            }
            let l = l_operator(n, j, a)?;
            let lm = assemble_dense(&l, &u.grid)?;
            let sqrt = dense_sqrt_matrix(&lm)?;
            // apply per X-coordinate channel
            let dim = u.grid.space.dim();
            let mut out = GridFunction::zero(u.grid);
            for coord in 0..dim {
                let rhs = nalgebra::DVector::from_iterator(
                    cells,
                    (0..cells).map(|c| u.data[c * dim + coord]),
                );
                let sol = &sqrt * rhs;
                for c in 0..cells {
                    out.data[c * dim + coord] = sol[c];
                }
            }
            Ok(out)
        }
        SqrtMethod::ResolventQuadrature => {
            // constant coefficients make L an exact Fourier multiplier with
            // scalar symbol (2πξ)ᵀA(2πξ); take the principal root directly
            if let Some(c) = a.constant_matrix() {
                let sym = MultiplierSymbol::scalar_fn(n, j, 1, |xi| {
                    let mut s = C64::new(0.0, 0.0);
                    for r in 0..n {
                        for cc in 0..n {
                            let wr = 2.0 * std::f64::consts::PI * xi[r] as f64;
                            let wc = 2.0 * std::f64::consts::PI * xi[cc] as f64;
                            s += c[(r, cc)] * wr * wc;
                        }
                    }
                    s.sqrt()
                });
                return sym.apply(u);
            }
            let l = l_operator(n, j, a)?;
            let hermitian = is_hermitian_field(a);
            let (lo, hi) = spectral_bounds(n, j, a);
            let half_pi = std::f64::consts::FRAC_PI_2;
            let t_min = half_pi * opts.truncation_tol / hi.sqrt();
            let t_max = half_pi / (opts.truncation_tol * lo.sqrt());
            let h = std::f64::consts::LN_10 / opts.nodes_per_decade as f64;
            let steps = ((t_max / t_min).ln() / h).ceil() as usize + 1;
            let mid_coeff = {
                let (lc, hc) = (
                    lo / (4.0 * std::f64::consts::PI * std::f64::consts::PI),
                    a.linf_norm(),
                );
                (lc * hc).sqrt().max(1e-12)
            };
            let mut acc = GridFunction::zero(u.grid);
            for s in 0..steps {
                let t = t_min * (h * s as f64).exp();
                let w = if s == 0 || s + 1 == steps { 0.5 } else { 1.0 };
                let v = solve_shifted(&l, u, t, hermitian, mid_coeff, &opts.solver)?;
                let lv = apply(&l, &v)?;
                acc = acc.add(&lv.scaled(C64::new(w * h * t * (2.0 / std::f64::consts::PI), 0.0)));
            }
            Ok(acc)
        }
        SqrtMethod::SignOfPiB => {
            if n != a.rows {
                return Err(Error::shape("coefficient must act on the gradient block"));
            }
            let cfg = HodgeDiracConfig {
                n,
                j,
                d: super::symbol::FirstOrderOperator::gradient(n),
                a1: MatrixField::identity(n, j, 1),
                a2: a.clone(),
                solver: opts.solver,
            };
            let ops = hodge_dirac(&cfg)?;
            let (lo, hi) = spectral_bounds(n, j, a);
            let half_pi = std::f64::consts::FRAC_PI_2;
            let t_min = half_pi * opts.truncation_tol / hi.sqrt();
            let t_max = half_pi / (opts.truncation_tol * lo.sqrt());
            let h = std::f64::consts::LN_10 / opts.nodes_per_decade as f64;
            let steps = ((t_max / t_min).ln() / h).ceil() as usize + 1;
            // (u, 0) padded to the N components
            let big_grid = Grid {
                n_comp: 1 + n,
                ..u.grid
            };
            let mut padded = GridFunction::zero(big_grid);
            let dim = u.grid.space.dim();
            for cell in 0..u.grid.cells() {
                for coord in 0..dim {
                    padded.data[(cell * (1 + n)) * dim + coord] = u.data[cell * dim + coord];
                }
            }
            let pi_b_u = apply(&ops.pi_b, &padded)?;
            let mut acc = GridFunction::zero(u.grid);
            for s in 0..steps {
                let t = t_min * (h * s as f64).exp();
                let w = if s == 0 || s + 1 == steps { 0.5 } else { 1.0 };
                let rs = resolvents(&ops, t)?;
                let p = rs.apply_p(&pi_b_u)?;
                let v = apply(&ops.pi_b, &p)?;
                let first = v.select_components(0..1);
                acc =
                    acc.add(&first.scaled(C64::new(w * h * t * (2.0 / std::f64::consts::PI), 0.0)));
            }
            Ok(acc)
        }
    }
}

fn is_hermitian_field(a: &MatrixField) -> bool {
    for cell in 0..a.cells() {
        let m = a.matrix_at(cell);
        if (&m - m.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
            > 1e-12
        {
            return false;
        }
    }
    true
}

/// Solve (I + t²L)v = u: preconditioned CG for Hermitian coefficients,
/// dense/BiCGStab resolvent machinery otherwise.
fn solve_shifted(
    l: &OperatorHandle,
    u: &GridFunction,
    t: f64,
    hermitian: bool,
    mid_coeff: f64,
    solver: &SolverOpts,
) -> Result<GridFunction> {
    if hermitian {
        return pcg_shifted(l, u, t, mid_coeff, solver);
    }
    // (I + t²L) = (I + is·A) with A = −i t² L, s = 1
    let op = OperatorHandle::scaled(C64::new(0.0, -t * t), l.clone());
    let r =
        OperatorHandle::resolvent_with(op, 1.0, super::handle::ResolventStyle::R, *solver, None)?;
    apply(&r, u)
}

fn pcg_shifted(
    l: &OperatorHandle,
    u: &GridFunction,
    t: f64,
    mid_coeff: f64,
    solver: &SolverOpts,
) -> Result<GridFunction> {
    let grid = u.grid;
    let apply_a = |v: &GridFunction| -> Result<GridFunction> {
        Ok(v.add(&apply(l, v)?.scaled(C64::new(t * t, 0.0))))
    };
    let pre = MultiplierSymbol::scalar_fn(grid.n, grid.j, grid.n_comp, |xi| {
        C64::new(1.0 / (1.0 + t * t * mid_coeff * wavenumber_sq(xi)), 0.0)
    });
    let dot = |x: &GridFunction, y: &GridFunction| -> C64 {
        x.data.iter().zip(&y.data).map(|(a, b)| a.conj() * b).sum()
    };
    let norm2 =
        |x: &GridFunction| -> f64 { x.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt() };
    let b_norm = norm2(u);
    if b_norm == 0.0 {
        return Ok(GridFunction::zero(grid));
    }
    let tol = solver.tol * 1e-2; // solve well below the quadrature tolerance
    let mut x = GridFunction::zero(grid);
    let mut r = u.clone();
    let mut z = pre.apply(&r)?;
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for _ in 0..solver.max_iters.max(50) {
        let ap = apply_a(&p)?;
        let alpha = rz / dot(&p, &ap);
        x = x.add(&p.scaled(alpha));
        r = r.sub(&ap.scaled(alpha));
        let res = norm2(&r) / b_norm;
        if res < tol {
            return Ok(x);
        }
        z = pre.apply(&r)?;
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p = z.add(&p.scaled(beta));
    }
    Err(Error::SolverFailure {
        context: format!("pcg for (I + t²L), t = {t}"),
        residual: norm2(&r) / b_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomSource;
    use crate::space::SpaceDescriptor;
    use rand::Rng;
    use std::f64::consts::PI;

    fn grid(n: usize, j: u32) -> Grid {
        Grid::new(n, j, 1, SpaceDescriptor::scalar()).unwrap()
    }

    #[test]
    fn dense_sqrt_of_spd_matrix() {
        let mut rng = RandomSource::new(1).rng();
        let n = 12;
        let b = DMatrix::from_fn(n, n, |_, _| {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let m = &b * b.adjoint() + DMatrix::identity(n, n) * C64::new(0.5, 0.0);
        let s = dense_sqrt_matrix(&m).unwrap();
        let err = (&s * &s - &m).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(err < 1e-10 * m.iter().map(|z| z.norm()).fold(0.0, f64::max));
    }

    #[test]
    fn dense_sqrt_of_nonnormal_matrix() {
        // upper triangular with distinct positive diagonal: principal root
        let m = DMatrix::from_row_slice(
            3,
            3,
            &[
                C64::new(4.0, 0.0),
                C64::new(1.0, 0.5),
                C64::new(0.0, 0.0),
                C64::new(0.0, 0.0),
                C64::new(1.0, 0.0),
                C64::new(-2.0, 0.0),
                C64::new(0.0, 0.0),
                C64::new(0.0, 0.0),
                C64::new(9.0, 0.0),
            ],
        );
        let s = dense_sqrt_matrix(&m).unwrap();
        let err = (&s * &s - &m).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(err < 1e-9);
    }

    #[test]
    fn sqrt_minus_laplacian_single_mode() {
        // A = I: √(−Δ) of a single mode ξ is 2π|ξ| times the mode
        let g = grid(1, 5);
        let xi = 3.0;
        let u = GridFunction::from_scalar_fn(g, |cell| {
            let x = cell as f64 / g.side() as f64;
            C64::new(0.0, 2.0 * PI * xi * x).exp()
        })
        .unwrap();
        let a = MatrixField::identity(1, 5, 1);
        for method in [SqrtMethod::DenseSchur, SqrtMethod::ResolventQuadrature] {
            let v = sqrt_l(1, 5, &a, &u, method, QuadratureOpts::default()).unwrap();
            for cell in 0..g.cells() {
                let expect = u.data[cell] * (2.0 * PI * xi);
                let tol = if method == SqrtMethod::DenseSchur {
                    1e-8
                } else {
                    2e-6 * 2.0 * PI * xi
                };
                assert!(
                    (v.data[cell] - expect).norm() < tol,
                    "{method:?} cell {cell}: {} vs {expect}",
                    v.data[cell]
                );
            }
        }
    }

    #[test]
    fn parseval_identity_flat_coefficients() {
        // ‖√(−Δ)u‖₂ = ‖∇u‖₂
        for n in [1usize, 2] {
            let j = if n == 1 { 5 } else { 3 };
            let g = grid(n, j);
            let mut rng = RandomSource::new(7).rng();
            let u = GridFunction::random_gaussian(g, &mut rng);
            let a = MatrixField::identity(n, j, n);
            let v = sqrt_l(
                n,
                j,
                &a,
                &u,
                SqrtMethod::DenseSchur,
                QuadratureOpts::default(),
            )
            .unwrap();
            let gradu = MultiplierSymbol::gradient(n, j).apply(&u).unwrap();
            assert!((v.lp_norm(2.0) - gradu.lp_norm(2.0)).abs() < 1e-10 * gradu.lp_norm(2.0));
        }
    }

    #[test]
    fn quadrature_matches_dense_for_rough_coefficients() {
        let n = 1usize;
        let j = 6u32;
        let g = grid(n, j);
        let mut rng = RandomSource::new(8).rng();
        let values: Vec<C64> = (0..g.cells())
            .map(|_| C64::new(rng.gen_range(1.0..10.0), 0.0))
            .collect();
        let a = MatrixField::scalar_diag(n, j, n, &values);
        let u = GridFunction::random_gaussian(g, &mut rng);
        let dense = sqrt_l(
            n,
            j,
            &a,
            &u,
            SqrtMethod::DenseSchur,
            QuadratureOpts::default(),
        )
        .unwrap();
        let quad = sqrt_l(
            n,
            j,
            &a,
            &u,
            SqrtMethod::ResolventQuadrature,
            QuadratureOpts::default(),
        )
        .unwrap();
        let rel = dense
            .data
            .iter()
            .zip(&quad.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
            / dense.linf_norm();
        assert!(rel < 1e-4, "rel {rel}");
    }

    #[test]
    fn sign_route_matches_dense() {
        let n = 1usize;
        let j = 4u32;
        let g = grid(n, j);
        let mut rng = RandomSource::new(9).rng();
        let values: Vec<C64> = (0..g.cells())
            .map(|_| C64::new(rng.gen_range(1.0..3.0), 0.0))
            .collect();
        let a = MatrixField::scalar_diag(n, j, n, &values);
        let u = GridFunction::random_gaussian(g, &mut rng);
        let dense = sqrt_l(
            n,
            j,
            &a,
            &u,
            SqrtMethod::DenseSchur,
            QuadratureOpts::default(),
        )
        .unwrap();
        let opts = QuadratureOpts {
            nodes_per_decade: 20,
            truncation_tol: 1e-6,
            ..Default::default()
        };
        let sign = sqrt_l(n, j, &a, &u, SqrtMethod::SignOfPiB, opts).unwrap();
        let rel = dense
            .data
            .iter()
            .zip(&sign.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
            / dense.linf_norm();
        assert!(rel < 1e-4, "rel {rel}");
    }

    #[test]
    fn dense_rejects_oversized_grid() {
        let g = grid(1, 4);
        let a = MatrixField::identity(1, 4, 1);
        let u = GridFunction::zero(g);
        let opts = QuadratureOpts {
            solver: SolverOpts {
                dense_crossover: 4,
                ..Default::default()
            },
            ..Default::default()
        };
        assert!(matches!(
            sqrt_l(1, 4, &a, &u, SqrtMethod::DenseSchur, opts),
            Err(Error::Resource(_))
        ));
    }
}
