//! Principal parts γ_t = "T_t(1)", off-diagonal decay profiles, and the
//! randomized quadratic estimate E‖Σ_k ε_k Q_{2^k} u‖_{L^p}.

use super::handle::{apply, MatrixField, OperatorHandle};
use crate::dyadic::{Grid, GridFunction};
use crate::error::{Error, Result};
use crate::rng::RandomSource;
use crate::space::{rademacher_sum, NormEstimate, RandomizedOpts};
use crate::C64;

/// Periodic cube distance (in cube units, Chebyshev over axes) at level k.
fn cube_distance(grid: &Grid, k: i32, a: usize, b: usize) -> usize {
    let per = grid.cubes_per_axis(k);
    let coords = |flat: usize| -> [usize; 2] {
        if grid.n == 1 {
            [flat, 0]
        } else {
            [flat % per, flat / per]
        }
    };
    let ca = coords(a);
    let cb = coords(b);
    let mut worst = 0usize;
    for axis in 0..grid.n {
        let d = ca[axis].abs_diff(cb[axis]);
        let d = d.min(per - d);
        worst = worst.max(d);
    }
    worst
}

/// γ_{2^k}(x): for each basis vector w of C^N, Σ_Q T(w·1_Q)(x) over the
/// cubes at level k within `radius` cubes of x (periodic); `None` sums the
/// whole domain, which equals T applied to the constant w.
pub fn principal_part(
    t_op: &OperatorHandle,
    grid: &Grid,
    k: i32,
    radius: Option<usize>,
) -> Result<MatrixField> {
    grid.check_level(k)?;
    let ncomp = t_op.in_comps();
    if t_op.out_comps() != ncomp {
        return Err(Error::shape("principal part needs a square operator"));
    }
    let probe_grid = Grid::new(
        grid.n,
        grid.j,
        ncomp,
        crate::space::SpaceDescriptor::scalar(),
    )?;
    let cells = probe_grid.cells();
    let mut out = vec![C64::new(0.0, 0.0); cells * ncomp * ncomp];
    for w in 0..ncomp {
        match radius {
            None => {
                let mut probe = GridFunction::zero(probe_grid);
                for cell in 0..cells {
                    probe.data[cell * ncomp + w] = C64::new(1.0, 0.0);
                }
                let img = apply(t_op, &probe)?;
                for cell in 0..cells {
                    for r in 0..ncomp {
                        out[(cell * ncomp + r) * ncomp + w] = img.data[cell * ncomp + r];
                    }
                }
            }
            Some(rad) => {
                for cube_flat in 0..grid.cubes_at_level(k) {
                    let cube = crate::dyadic::DyadicCube::from_flat(grid, k, cube_flat);
                    let mut probe = GridFunction::zero(probe_grid);
                    for cell in cube.cells(grid) {
                        probe.data[cell * ncomp + w] = C64::new(1.0, 0.0);
                    }
                    let img = apply(t_op, &probe)?;
                    for cell in 0..cells {
                        let cell_cube = grid.cube_of_cell(cell, k);
                        if cube_distance(grid, k, cell_cube, cube_flat) > rad {
                            continue;
                        }
                        for r in 0..ncomp {
                            out[(cell * ncomp + r) * ncomp + w] += img.data[cell * ncomp + r];
                        }
                    }
                }
            }
        }
    }
    Ok(MatrixField {
        n: grid.n,
        j: grid.j,
        rows: ncomp,
        cols: ncomp,
        data: out,
    })
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct OffDiagonalRow {
    pub scale_k: i32,
    pub rho: f64,
    pub ratio: f64,
}

/// Off-diagonal decay: for slabs F (x-coordinate in the first level-k cube)
/// and E at distance ρ·2^k, the mean over fuzzed u supported in F of
/// ‖1_E T u‖_p / ‖1_F u‖_p.
pub fn off_diagonal_profile(
    family: &[(i32, OperatorHandle)],
    grid: &Grid,
    separations: &[f64],
    p: f64,
    trials: usize,
    src: &RandomSource,
) -> Result<Vec<OffDiagonalRow>> {
    let mut rows = Vec::new();
    for (k, op) in family {
        grid.check_level(*k)?;
        let s = 1usize << (grid.j as i32 + k) as u32; // cube side in cells
        for &rho in separations {
            let lo_e = ((1.0 + rho) * s as f64).round() as usize;
            let hi_e = lo_e + s;
            if hi_e > grid.side() {
                continue; // separation does not fit at this scale
            }
            let mut ratios = Vec::with_capacity(trials);
            for trial in 0..trials {
                let mut rng = src.substream((*k as i64 as u64) << 32 | trial as u64).rng();
                let mut u = GridFunction::zero(Grid {
                    n_comp: op.in_comps(),
                    ..*grid
                });
                // support in F: x-coordinate < s
                for cell in 0..grid.cells() {
                    if grid.cell_coords(cell)[0] < s {
                        for e in 0..u.grid.cell_len() {
                            u.data[cell * u.grid.cell_len() + e] = C64::new(
                                rand::Rng::sample(&mut rng, rand_distr::StandardNormal),
                                rand::Rng::sample(&mut rng, rand_distr::StandardNormal),
                            );
                        }
                    }
                }
                let tu = apply(op, &u)?;
                let mut masked = tu.clone();
                for cell in 0..grid.cells() {
                    let x = grid.cell_coords(cell)[0];
                    if !(x >= lo_e && x < hi_e) {
                        for e in 0..masked.grid.cell_len() {
                            masked.data[cell * masked.grid.cell_len() + e] = C64::new(0.0, 0.0);
                        }
                    }
                }
                let denom = u.lp_norm(p);
                if denom > 0.0 {
                    ratios.push(masked.lp_norm(p) / denom);
                }
            }
            let mean = if ratios.is_empty() {
                f64::NAN
            } else {
                ratios.iter().sum::<f64>() / ratios.len() as f64
            };
            rows.push(OffDiagonalRow {
                scale_k: *k,
                rho,
                ratio: mean,
            });
        }
    }
    Ok(rows)
}

/// E‖Σ_k ε_k T_k u‖_{L^p} for a finite operator family (exact enumeration
/// when the scale count is small).
pub fn quadratic_estimate(
    ops_per_scale: &[OperatorHandle],
    u: &GridFunction,
    p: f64,
    opts: RandomizedOpts,
    src: &RandomSource,
) -> Result<NormEstimate> {
    let mut terms = Vec::with_capacity(ops_per_scale.len());
    for op in ops_per_scale {
        terms.push(apply(op, u)?);
    }
    rademacher_sum(&terms, |f: &GridFunction| f.lp_norm(p), opts, src)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::hodge::{hodge_dirac, resolvents, HodgeDiracConfig};
    use crate::operators::poisson::poisson_family;
    use crate::space::SpaceDescriptor;
    use rand::Rng;

    fn grid(n: usize, j: u32, comps: usize) -> Grid {
        Grid::new(n, j, comps, SpaceDescriptor::scalar()).unwrap()
    }

    #[test]
    fn principal_part_of_identity() {
        let g = grid(1, 4, 2);
        let id = OperatorHandle::Identity { comps: 2 };
        for radius in [None, Some(0), Some(2)] {
            let gamma = principal_part(&id, &g, -2, radius).unwrap();
            for cell in 0..g.cells() {
                let m = gamma.matrix_at(cell);
                assert!((m[(0, 0)].re - 1.0).abs() < 1e-13);
                assert!((m[(1, 1)].re - 1.0).abs() < 1e-13);
                assert!(m[(0, 1)].norm() + m[(1, 0)].norm() < 1e-13);
            }
        }
    }

    #[test]
    fn principal_part_of_pointwise_multiplication() {
        let g = grid(1, 3, 1);
        let mut rng = RandomSource::new(1).rng();
        let values: Vec<C64> = (0..g.cells())
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let m = OperatorHandle::pointwise(MatrixField::scalar_diag(1, 3, 1, &values));
        let gamma = principal_part(&m, &g, -1, Some(0)).unwrap();
        for cell in 0..g.cells() {
            assert!((gamma.matrix_at(cell)[(0, 0)] - values[cell]).norm() < 1e-13);
        }
    }

    #[test]
    fn principal_part_of_unperturbed_q_vanishes() {
        // Q_t annihilates constants (symbol vanishes at ξ = 0)
        let cfg = HodgeDiracConfig::unperturbed(1, 4);
        let ops = hodge_dirac(&cfg).unwrap();
        let g = grid(1, 4, 2);
        let rs = resolvents(&ops, 0.25).unwrap();
        let gamma = principal_part(&rs.q, &g, -2, None).unwrap();
        let sup = gamma.linf_norm();
        assert!(sup < 1e-10, "{sup}");
    }

    #[test]
    fn off_diagonal_locality_of_pointwise_multiplication() {
        let g = grid(1, 5, 1);
        let mut rng = RandomSource::new(2).rng();
        let values: Vec<C64> = (0..g.cells())
            .map(|_| C64::new(rng.gen_range(0.5..1.5), 0.0))
            .collect();
        let m = OperatorHandle::pointwise(MatrixField::scalar_diag(1, 5, 1, &values));
        let rows = off_diagonal_profile(&[(-3, m)], &g, &[1.0, 2.0], 2.0, 3, &RandomSource::new(3))
            .unwrap();
        for row in rows {
            assert!(row.ratio < 1e-12, "{row:?}");
        }
    }

    #[test]
    fn off_diagonal_decay_of_smoothing_family() {
        // 𝒫_t has kernel decay e^{−|x|/t} in one dimension: the ratio at
        // ρ = 4 must sit well below the ρ = 1 ratio.
        let g = grid(1, 6, 1);
        let k = -4i32;
        let t = 2.0f64.powi(k);
        let fam = poisson_family(1, 6, t);
        let op = OperatorHandle::fourier(fam.p);
        let rows = off_diagonal_profile(&[(k, op)], &g, &[1.0, 4.0], 2.0, 5, &RandomSource::new(4))
            .unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[1].ratio < 0.5 * rows[0].ratio, "{rows:?}");
    }

    #[test]
    fn quadratic_estimate_zero_input() {
        let g = grid(1, 4, 2);
        let cfg = HodgeDiracConfig::unperturbed(1, 4);
        let ops = hodge_dirac(&cfg).unwrap();
        let qs: Vec<OperatorHandle> = (-4..=0)
            .map(|k| resolvents(&ops, 2.0f64.powi(k)).unwrap().q)
            .collect();
        let u = GridFunction::zero(g);
        let est = quadratic_estimate(
            &qs,
            &u,
            2.0,
            RandomizedOpts::default(),
            &RandomSource::new(5),
        )
        .unwrap();
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn quadratic_estimate_parseval_bound() {
        // B = I, p = 2, second moment: the randomized sum is bounded by
        // sup_ξ (Σ_k s_k(ξ)²)^{1/2}·‖u‖₂ with s_k = 2^kζ/(1+(2^kζ)²).
        let n = 1usize;
        let j = 5u32;
        let g = grid(n, j, 2);
        let cfg = HodgeDiracConfig::unperturbed(n, j);
        let ops = hodge_dirac(&cfg).unwrap();
        let scales: Vec<i32> = (-(j as i32)..=0).collect();
        let qs: Vec<OperatorHandle> = scales
            .iter()
            .map(|&k| resolvents(&ops, 2.0f64.powi(k)).unwrap().q)
            .collect();
        let mut rng = RandomSource::new(6).rng();
        let u = GridFunction::random_gaussian(g, &mut rng);
        let est = quadratic_estimate(
            &qs,
            &u,
            2.0,
            RandomizedOpts::default().with_moment(2.0),
            &RandomSource::new(7),
        )
        .unwrap();
        // oracle bound by direct frequency computation
        let mut bound: f64 = 0.0;
        for bin in 0..g.cells() {
            let xi = crate::operators::symbol::bin_frequency(n, g.side(), bin);
            let zeta = crate::operators::symbol::wavenumber_sq(&xi).sqrt();
            let s2: f64 = scales
                .iter()
                .map(|&k| {
                    let tk = 2.0f64.powi(k) * zeta;
                    (tk / (1.0 + tk * tk)).powi(2)
                })
                .sum();
            bound = bound.max(s2.sqrt());
        }
        assert!(
            est.value <= bound * u.lp_norm(2.0) * (1.0 + 1e-9),
            "{} vs {}",
            est.value,
            bound * u.lp_norm(2.0)
        );
    }
}
