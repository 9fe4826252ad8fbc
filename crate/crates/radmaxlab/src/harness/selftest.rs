//! The exact-identity suite: every machine-precision identity promised by
//! the library, run at small scale with one pass/fail row each.

use super::config::ExperimentConfig;
use super::report::{CheckKind, Report};
use crate::carleson::{carleson_embed_lhs, paraproduct, CarlesonFamily};
use crate::dyadic::{
    conditional_expectation, dyadic_maximal, haar_decompose, haar_reconstruct, AveragePyramid,
    DyadicCube, Grid, GridFunction,
};
use crate::error::Result;
use crate::operators::{
    apply, dense_sqrt_matrix, functional_calculus_pi, hodge_dirac, l_operator, neumann_resolvent,
    poisson_family, resolvents, FirstOrderOperator, HodgeDiracConfig, MatrixField,
    MultiplierSymbol, OperatorHandle,
};
use crate::radmax::{counterexample_l1, rademacher_maximal, MrOpts};
use crate::rng::RandomSource;
use crate::space::{rademacher_sum, rbound_estimate, RandomizedOpts, RboundOpts, SpaceDescriptor};
use crate::C64;
use rand::Rng;

fn max_diff(a: &GridFunction, b: &GridFunction) -> f64 {
    a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Runs the exact-identity suite; the caller maps `all_pass` to the exit
/// code.
pub fn run_selftest(cfg: &ExperimentConfig) -> Result<Report> {
    let mut rep = Report::new(
        "selftest",
        "machine-precision identities of the library",
        cfg,
    );
    let src = RandomSource::new(cfg.seed);
    let mut case = 0usize;
    let mut check = |rep: &mut Report, label: &str, err: f64, tol: f64| {
        rep.push_check(case, label, err, tol, CheckKind::ValueLeTol);
        case += 1;
    };

    // dyadic: projection law
    {
        let grid = Grid::new(1, 4, 1, SpaceDescriptor::scalar())?;
        let mut rng = src.substream(1).rng();
        let u = GridFunction::random_gaussian(grid, &mut rng);
        let mut worst: f64 = 0.0;
        for k in grid.levels() {
            let uk = conditional_expectation(&u, k)?;
            for j in grid.levels() {
                let a = conditional_expectation(&uk, j)?;
                let b = conditional_expectation(&u, k.max(j))?;
                worst = worst.max(max_diff(&a, &b));
            }
        }
        check(&mut rep, "projection-law", worst, 1e-12);
    }

    // dyadic: Haar round trip
    {
        let grid = Grid::new(2, 4, 1, SpaceDescriptor::scalar())?;
        let mut rng = src.substream(2).rng();
        let u = GridFunction::random_gaussian(grid, &mut rng);
        let v = haar_reconstruct(&haar_decompose(&u));
        check(
            &mut rep,
            "haar-round-trip",
            max_diff(&u, &v) / u.linf_norm().max(1.0),
            1e-12,
        );
    }

    // dyadic: maximal dominates averages
    {
        let grid = Grid::new(1, 4, 1, SpaceDescriptor::lebesgue(1.5, 2)?)?;
        let mut rng = src.substream(3).rng();
        let u = GridFunction::random_gaussian(grid, &mut rng);
        let m = dyadic_maximal(&u);
        let pyramid = AveragePyramid::build(&u);
        let mut worst: f64 = 0.0;
        for cell in 0..grid.cells() {
            for k in grid.levels() {
                let nrm = grid
                    .space
                    .norm_slice(pyramid.cube_slice(k, grid.cube_of_cell(cell, k)))?;
                worst = worst.max(nrm - m.data[cell].re);
            }
        }
        check(&mut rep, "maximal-dominates-averages", worst, 1e-12);
    }

    // dyadic: sign invariance at matched moment
    {
        let grid = Grid::new(1, 3, 1, SpaceDescriptor::scalar())?;
        let mut rng = src.substream(4).rng();
        let base = GridFunction::random_gaussian(grid, &mut rng);
        let p = 2.0;
        let mut ind = Vec::new();
        let mut haar = Vec::new();
        for k in grid.levels() {
            if k == -(grid.j as i32) {
                continue;
            }
            let uq = conditional_expectation(&base, k)?;
            ind.push(uq.clone());
            let mut hv = GridFunction::zero(grid);
            for cf in 0..grid.cubes_at_level(k) {
                let cube = DyadicCube::from_flat(&grid, k, cf);
                let h = crate::dyadic::haar_function(&grid, &cube, 1)?;
                for cell in cube.cells(&grid) {
                    hv.data[cell] = h.data[cell] * uq.data[cell];
                }
            }
            haar.push(hv);
        }
        let opts = RandomizedOpts::default().with_moment(p);
        let a = rademacher_sum(&ind, |f: &GridFunction| f.lp_norm(p), opts, &src)?.value;
        let b = rademacher_sum(&haar, |f: &GridFunction| f.lp_norm(p), opts, &src)?.value;
        check(
            &mut rep,
            "sign-invariance",
            (a - b).abs() / a.max(1e-300),
            1e-12,
        );
    }

    // space: R-bound of the identity family
    {
        let space = SpaceDescriptor::lebesgue(1.0, 3)?;
        let id: &(dyn Fn(&crate::space::Vector) -> crate::space::Vector + Sync) = &|v| v.clone();
        let est = rbound_estimate(
            &[id],
            |rng| crate::space::Vector::random_gaussian(space, rng),
            |v: &crate::space::Vector| v.norm(),
            RboundOpts {
                restarts: 1,
                sweeps: 1,
                perturbations: 2,
                ..Default::default()
            },
            &src.substream(5),
        )?;
        check(
            &mut rep,
            "rbound-identity-is-one",
            (est.value - 1.0).abs(),
            1e-12,
        );
    }

    // radmax: scalar identity M_R = M through the general optimizer
    {
        let grid = Grid::new(1, 4, 1, SpaceDescriptor::scalar())?;
        let mut rng = src.substream(6).rng();
        let mut u = GridFunction::random_gaussian(grid, &mut rng);
        for z in u.data.iter_mut() {
            *z = C64::new(z.re, 0.0);
        }
        let opts = MrOpts {
            hilbert_fast_path: false,
            restarts: 2,
            sweeps: 3,
            perturbations: 6,
            ..Default::default()
        };
        let mr = rademacher_maximal(&u, &opts, &src.substream(7))?;
        let m = dyadic_maximal(&u);
        check(&mut rep, "scalar-mr-equals-m", max_diff(&mr, &m), 1e-10);
    }

    // radmax: pointwise homogeneity of the maximal-function estimate
    {
        let space = SpaceDescriptor::lebesgue(1.5, 3)?;
        let grid = Grid::new(1, 3, 1, space)?;
        let mut rng = src.substream(30).rng();
        let u = GridFunction::random_gaussian(grid, &mut rng);
        let opts = MrOpts {
            hilbert_fast_path: false,
            restarts: 2,
            sweeps: 2,
            perturbations: 4,
            ..Default::default()
        };
        let a = rademacher_maximal(&u, &opts, &src.substream(31))?;
        let b = rademacher_maximal(&u.scaled(C64::new(3.0, 0.0)), &opts, &src.substream(31))?;
        let mut worst: f64 = 0.0;
        for cell in 0..grid.cells() {
            worst = worst.max((b.data[cell].re - 3.0 * a.data[cell].re).abs());
        }
        check(
            &mut rep,
            "mr-homogeneity",
            worst / b.linf_norm().max(1.0),
            1e-10,
        );
    }

    // radmax: counterexample base value
    {
        let c = counterexample_l1(1)?;
        check(
            &mut rep,
            "counterexample-m1-is-half",
            (c.value - 0.5).abs(),
            1e-14,
        );
    }

    // operators: DD*D = −ΔD per frequency
    {
        let d = FirstOrderOperator::gradient(2);
        check(&mut rep, "ddstar-identity", d.ddstar_residual(2, 4), 1e-12);
    }

    // operators: Q*Q composition identity
    {
        let t = 0.4;
        let fam = poisson_family(1, 4, t);
        let composed = fam.q_star.compose(&fam.q)?;
        let direct = MultiplierSymbol::scalar_fn(1, 4, 1, |xi| {
            let w2 = crate::operators::wavenumber_sq(xi);
            let den = 1.0 + t * t * w2;
            C64::new(t * t * w2 / (den * den), 0.0)
        });
        let err = composed
            .data
            .iter()
            .zip(&direct.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        check(&mut rep, "qstar-q-symbol", err, 1e-12);
    }

    // operators: resolvent algebra on a rough perturbation
    {
        let n = 1usize;
        let j = 4u32;
        let mut rng = src.substream(8).rng();
        let a: Vec<C64> = (0..(1usize << j))
            .map(|_| C64::new(rng.gen_range(1.0..3.0), rng.gen_range(-0.3..0.3)))
            .collect();
        let hcfg = HodgeDiracConfig::with_scalar_coefficient(n, j, &a)?;
        let ops = hodge_dirac(&hcfg)?;
        let grid = Grid::new(n, j, 2, SpaceDescriptor::scalar())?;
        let u = GridFunction::random_gaussian(grid, &mut rng);
        let t = 0.3;
        let rs = resolvents(&ops, t)?;
        let rp = apply(&rs.r_plus, &u)?;
        let rm = apply(&rs.r_minus, &u)?;
        let p = rs.apply_p(&u)?;
        let q = rs.apply_q(&u)?;
        let scale = u.linf_norm();
        let e1 = max_diff(&p, &rp.add(&rm).scaled(C64::new(0.5, 0.0))) / scale;
        let e2 = max_diff(&q, &rp.sub(&rm).scaled(C64::new(0.0, 0.5))) / scale;
        let e3 = max_diff(&q, &apply(&ops.pi_b, &p)?.scaled(C64::new(t, 0.0))) / scale;
        check(&mut rep, "resolvent-identities", e1.max(e2).max(e3), 1e-9);
    }

    // operators: explicit even-part calculus g(Π²)Π = g(−Δ)Π
    {
        let d = FirstOrderOperator::gradient(1);
        let cfg_h = HodgeDiracConfig::unperturbed(1, 4);
        let ops = hodge_dirac(&cfg_h)?;
        let grid = Grid::new(1, 4, 2, SpaceDescriptor::scalar())?;
        let mut rng = src.substream(9).rng();
        let u = GridFunction::random_gaussian(grid, &mut rng);
        let f = |z: f64| C64::new(z / (1.0 + z * z), 0.0);
        let lhs = functional_calculus_pi(&d, 1, 4, f, &u)?;
        let piu = apply(&ops.pi, &u)?;
        let g = MultiplierSymbol::scalar_fn(1, 4, 2, |xi| {
            C64::new(1.0 / (1.0 + crate::operators::wavenumber_sq(xi)), 0.0)
        });
        let rhs = g.apply(&piu)?;
        check(
            &mut rep,
            "even-part-calculus",
            max_diff(&lhs, &rhs) / rhs.linf_norm().max(1.0),
            1e-10,
        );
    }

    // operators: sgn(Π)² = identity off the kernel
    {
        let d = FirstOrderOperator::gradient(1);
        let cfg_h = HodgeDiracConfig::unperturbed(1, 4);
        let ops = hodge_dirac(&cfg_h)?;
        let grid = Grid::new(1, 4, 2, SpaceDescriptor::scalar())?;
        let mut rng = src.substream(10).rng();
        let v = GridFunction::random_gaussian(grid, &mut rng);
        let u = apply(&ops.pi, &v)?;
        let sgn = |z: f64| {
            C64::new(
                if z > 0.0 {
                    1.0
                } else if z < 0.0 {
                    -1.0
                } else {
                    0.0
                },
                0.0,
            )
        };
        let s1 = functional_calculus_pi(&d, 1, 4, sgn, &u)?;
        let s2 = functional_calculus_pi(&d, 1, 4, sgn, &s1)?;
        check(
            &mut rep,
            "sign-squared-identity",
            max_diff(&s2, &u) / u.linf_norm().max(1.0),
            1e-8,
        );
    }

    // operators: Neumann series vs dense solve
    {
        let grid = Grid::new(1, 5, 1, SpaceDescriptor::scalar())?;
        let mut rng = src.substream(11).rng();
        let raw: Vec<C64> = (0..grid.cells())
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let sup = raw.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let values: Vec<C64> = raw.iter().map(|z| z * (0.9 / sup)).collect();
        let k = MatrixField::scalar_diag(1, 5, 1, &values);
        let u = GridFunction::random_gaussian(grid, &mut rng);
        let t = 0.2;
        let series = neumann_resolvent(t, &k, &u, 1e-11)?;
        let pk = OperatorHandle::compose(vec![
            OperatorHandle::fourier(MultiplierSymbol::scalar_fn(1, 5, 1, |xi| {
                C64::new(
                    1.0 / (1.0 + t * t * crate::operators::wavenumber_sq(xi)),
                    0.0,
                )
            })),
            OperatorHandle::pointwise(k),
        ])?;
        let aop = OperatorHandle::scaled(C64::new(0.0, -1.0), pk);
        let r = OperatorHandle::resolvent(aop, 1.0, crate::operators::ResolventStyle::R)?;
        let dense = apply(&r, &u)?;
        check(
            &mut rep,
            "neumann-vs-dense",
            max_diff(&series, &dense) / u.linf_norm().max(1.0),
            1e-9,
        );
    }

    // operators: Kato identity at flat coefficients (Parseval)
    {
        let grid = Grid::new(1, 5, 1, SpaceDescriptor::scalar())?;
        let mut rng = src.substream(12).rng();
        let u = GridFunction::random_gaussian(grid, &mut rng);
        let s = MultiplierSymbol::sqrt_minus_laplacian(1, 5).apply(&u)?;
        let g = MultiplierSymbol::gradient(1, 5).apply(&u)?;
        check(
            &mut rep,
            "kato-parseval",
            (s.lp_norm(2.0) - g.lp_norm(2.0)).abs() / g.lp_norm(2.0),
            1e-10,
        );
    }

    // operators: dense principal square root squares back
    {
        let mut rng = src.substream(13).rng();
        let nn = 10;
        let b = nalgebra::DMatrix::from_fn(nn, nn, |_, _| {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let m = &b * b.adjoint() + nalgebra::DMatrix::identity(nn, nn) * C64::new(0.4, 0.0);
        let s = dense_sqrt_matrix(&m)?;
        let err = (&s * &s - &m).iter().map(|z| z.norm()).fold(0.0, f64::max)
            / m.iter().map(|z| z.norm()).fold(0.0, f64::max);
        check(&mut rep, "dense-sqrt-squares-back", err, 1e-10);
    }

    // operators: Hodge decomposition at large scale. The kernel part is
    // P_T u and the range part u − P_{2T} u at an independent scale, so the
    // recombination error measures the stabilization of the projection
    // limit rather than an algebraic tautology.
    {
        let n = 1usize;
        let j = 4u32;
        let mut rng = src.substream(14).rng();
        let a: Vec<C64> = (0..(1usize << j))
            .map(|_| C64::new(rng.gen_range(1.0..2.0), rng.gen_range(-0.2..0.2)))
            .collect();
        let hcfg = HodgeDiracConfig::with_scalar_coefficient(n, j, &a)?;
        let ops = hodge_dirac(&hcfg)?;
        let grid = Grid::new(n, j, 2, SpaceDescriptor::scalar())?;
        let u = GridFunction::random_gaussian(grid, &mut rng);
        let t = 2.0f64.powi(12);
        let u_ker = resolvents(&ops, t)?.apply_p(&u)?;
        let u_range = u.sub(&resolvents(&ops, 2.0 * t)?.apply_p(&u)?);
        // three parts: kernel, the Γ block, the Γ*_B block
        let u_gamma = u_range.select_components(1..2);
        let u_gamma_star = u_range.select_components(0..1);
        let recombined = u_ker.add(&u_gamma_star.concat_components(&u_gamma));
        let recomb = max_diff(&recombined, &u) / u.linf_norm();
        let rs1 = resolvents(&ops, 1.0)?;
        let annih = rs1.apply_q(&u_ker)?.linf_norm() / u.linf_norm();
        check(&mut rep, "hodge-recombination", recomb, 1e-8);
        check(&mut rep, "hodge-kernel-annihilation", annih, 1e-8);
    }

    // carleson: embedding equals enumeration, bilinearity of paraproducts
    {
        let grid = Grid::new(1, 3, 1, SpaceDescriptor::scalar())?;
        let mut rng = src.substream(15).rng();
        let mut fam = CarlesonFamily::new(1, 3)?;
        let q = DyadicCube {
            level: -1,
            index: [0, 0],
        };
        fam.insert_values(q, vec![C64::new(1.0, 0.0); 4])?;
        let c = GridFunction::constant(grid, &[C64::new(2.0, 0.0)])?;
        let lhs = carleson_embed_lhs(&fam, &c, 2.0, RandomizedOpts::default(), &src)?;
        check(
            &mut rep,
            "carleson-embed-constant-case",
            (lhs.value - 0.5f64.sqrt() * 2.0).abs(),
            1e-12,
        );

        let f = GridFunction::random_gaussian(grid, &mut rng);
        let u1 = GridFunction::random_gaussian(grid, &mut rng);
        let u2 = GridFunction::random_gaussian(grid, &mut rng);
        let both = paraproduct(&f, &u1.add(&u2))?;
        let sum = paraproduct(&f, &u1)?.add(&paraproduct(&f, &u2)?);
        check(
            &mut rep,
            "paraproduct-bilinearity",
            max_diff(&both, &sum),
            1e-12,
        );
    }

    // operators: unperturbed resolvent, multiplier path vs dense assembly
    {
        let cfg_h = HodgeDiracConfig::unperturbed(1, 3);
        let ops = hodge_dirac(&cfg_h)?;
        let grid = Grid::new(1, 3, 2, SpaceDescriptor::scalar())?;
        let mut rng = src.substream(16).rng();
        let u = GridFunction::random_gaussian(grid, &mut rng);
        let t = 0.5;
        let rs = resolvents(&ops, t)?;
        let fast = rs.apply_r(&u)?;
        let m = crate::operators::assemble_dense(&ops.pi_b, &grid)?;
        let nn = grid.cells() * 2;
        let mut shifted = m * C64::new(0.0, t);
        for i in 0..nn {
            shifted[(i, i)] += C64::new(1.0, 0.0);
        }
        let mut rhs = nalgebra::DVector::from_element(nn, C64::new(0.0, 0.0));
        for cell in 0..grid.cells() {
            for comp in 0..2 {
                rhs[cell * 2 + comp] = u.at(cell, comp, 0);
            }
        }
        let sol = shifted.lu().solve(&rhs).unwrap();
        let mut worst: f64 = 0.0;
        for cell in 0..grid.cells() {
            for comp in 0..2 {
                worst = worst.max((sol[cell * 2 + comp] - fast.at(cell, comp, 0)).norm());
            }
        }
        check(
            &mut rep,
            "unperturbed-resolvent-two-paths",
            worst / u.linf_norm(),
            1e-10,
        );
    }

    // l_operator applied to a single mode matches its symbol
    {
        let grid = Grid::new(1, 4, 1, SpaceDescriptor::scalar())?;
        let a = MatrixField::identity(1, 4, 1);
        let l = l_operator(1, 4, &a)?;
        let u = GridFunction::from_scalar_fn(grid, |cell| {
            let x = cell as f64 / grid.side() as f64;
            C64::new(0.0, 2.0 * std::f64::consts::PI * 2.0 * x).exp()
        })?;
        let lu = apply(&l, &u)?;
        let w = 2.0 * std::f64::consts::PI * 2.0;
        let mut worst: f64 = 0.0;
        for cell in 0..grid.cells() {
            worst = worst.max((lu.data[cell] - u.data[cell] * (w * w)).norm());
        }
        check(&mut rep, "laplacian-single-mode", worst / (w * w), 1e-10);
    }

    Ok(rep)
}
