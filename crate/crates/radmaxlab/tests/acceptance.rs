//! Acceptance suite: one test per criterion, each printing a pass/fail line
//! (visible with `--nocapture`). Tolerances are pinned in the asserts.
//! Run with optimization: `cargo test --release -p radmaxlab --test acceptance`
//! (the workspace test profile also builds with opt-level 2).

use radmaxlab::carleson::{
    car_norm, carleson_embed_lhs, random_family, test_function_sweep, test_functions, CarNormForm,
    CarlesonFamily,
};
use radmaxlab::dyadic::{dyadic_maximal, AveragePyramid, DyadicCube, Grid, GridFunction};
use radmaxlab::operators::{
    apply, assemble_dense, contour_calculus, functional_calculus_pi, hodge_dirac,
    neumann_resolvent, off_diagonal_profile, resolvents, sqrt_l, ContourSpec, FirstOrderOperator,
    HodgeDiracConfig, MatrixField, MultiplierSymbol, OperatorHandle, QuadratureOpts,
    ResolventStyle, SqrtMethod,
};
use radmaxlab::radmax::{counterexample_l1, rademacher_maximal, MrOpts};
use radmaxlab::rng::RandomSource;
use radmaxlab::space::{
    contraction_check, rademacher_avg, RandomizedOpts, SpaceDescriptor, Vector,
};
use radmaxlab::C64;
use rand::Rng;
use std::time::Instant;

fn pass_line(id: u32, name: &str, t0: Instant) {
    println!(
        "criterion {id:02} ({name}): PASS [{:.1}s]",
        t0.elapsed().as_secs_f64()
    );
}

fn scalar_grid(n: usize, j: u32) -> Grid {
    Grid::new(n, j, 1, SpaceDescriptor::scalar()).unwrap()
}

fn max_diff(a: &GridFunction, b: &GridFunction) -> f64 {
    a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

#[test]
fn criterion_01_scalar_rademacher_maximal_identity() {
    let t0 = Instant::now();
    let grid = scalar_grid(1, 6);
    let src = RandomSource::new(101);
    // full optimizer path (no Hilbert shortcut): the identity is analytic
    let opts = MrOpts {
        hilbert_fast_path: false,
        restarts: 2,
        sweeps: 2,
        perturbations: 4,
        ..Default::default()
    };
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let member = src.substream(i);
        let mut rng = member.rng();
        let mut u = GridFunction::random_gaussian(grid, &mut rng);
        for z in u.data.iter_mut() {
            *z = C64::new(z.re, 0.0);
        }
        let mr = rademacher_maximal(&u, &opts, &member).unwrap();
        let m = dyadic_maximal(&u);
        worst = worst.max(max_diff(&mr, &m));
    }
    assert!(worst <= 1e-10, "max |M_R - M| = {worst}");
    pass_line(1, "scalar M_R identity", t0);
}

#[test]
fn criterion_02_l1_counterexample() {
    let t0 = Instant::now();
    let mut prev = 0.0;
    for m in 1..=4u32 {
        let c = counterexample_l1(m).unwrap();
        if m == 1 {
            assert_eq!(c.value, 0.5, "m=1 exact value");
        }
        assert!(c.value > prev, "m={m}: {} not above {prev}", c.value);
        // the analytic chain Σ α_i (1 − 2·2^{−2^{i−1}}), evaluated termwise
        let chain: f64 = (1..=m as usize)
            .map(|i| (1.0 / (i as f64 + 1.0)) * (1.0 - 2.0 * (0.5f64).powi(1 << (i - 1))))
            .sum();
        assert!(c.value > chain, "m={m}: {} vs chain {chain}", c.value);
        prev = c.value;
    }
    pass_line(2, "l1 counterexample growth", t0);
}

#[test]
fn criterion_03_khintchine_kahane_hilbert_band() {
    let t0 = Instant::now();
    let src = RandomSource::new(303);
    let mut rng = src.rng();
    let lo = 1.0 / 2.0f64.sqrt() - 1e-9;
    let hi = 1.0 + 1e-9;
    for trial in 0..250 {
        let d = rng.gen_range(1..=8);
        let k = rng.gen_range(1..=10);
        let space = SpaceDescriptor::lebesgue(2.0, d).unwrap();
        let xs: Vec<Vector> = (0..k)
            .map(|_| Vector::random_gaussian(space, &mut rng))
            .collect();
        let denom: f64 = xs.iter().map(|x| x.norm().powi(2)).sum::<f64>().sqrt();
        if denom == 0.0 {
            continue;
        }
        let e1 = rademacher_avg(&space, &xs, RandomizedOpts::default(), &src).unwrap();
        let ratio = e1.value / denom;
        assert!(
            ratio >= lo && ratio <= hi,
            "trial {trial} (K={k}, d={d}): ratio {ratio}"
        );
    }
    pass_line(3, "Khintchine-Kahane Hilbert band", t0);
}

#[test]
fn criterion_04_contraction_principle_fuzz() {
    let t0 = Instant::now();
    let src = RandomSource::new(404);
    let mut rng = src.rng();
    let spaces = [
        SpaceDescriptor::lebesgue(1.0, 4).unwrap(),
        SpaceDescriptor::hilbert(4).unwrap(),
        SpaceDescriptor::schatten(1.5, 2).unwrap(),
    ];
    for space in spaces {
        for trial in 0..1000 {
            let k = rng.gen_range(1..=8);
            let xs: Vec<Vector> = (0..k)
                .map(|_| Vector::random_gaussian(space, &mut rng))
                .collect();
            let lambdas: Vec<C64> = (0..k)
                .map(|_| C64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)))
                .collect();
            let rep =
                contraction_check(&space, &xs, &lambdas, RandomizedOpts::default(), &src).unwrap();
            assert!(
                rep.pass,
                "{} trial {trial}: lhs {} rhs {}",
                space.label(),
                rep.lhs,
                rep.rhs
            );
        }
    }
    pass_line(4, "contraction principle", t0);
}

#[test]
fn criterion_05_resolvent_algebra() {
    let t0 = Instant::now();
    let src = RandomSource::new(505);
    let mut rng = src.rng();
    for case in 0..100 {
        let j = rng.gen_range(3..=6u32);
        let n = 1usize;
        let cells = 1usize << j;
        let a: Vec<C64> = (0..cells)
            .map(|_| C64::new(rng.gen_range(1.0..4.0), rng.gen_range(-0.4..0.4)))
            .collect();
        let cfg = HodgeDiracConfig::with_scalar_coefficient(n, j, &a).unwrap();
        let ops = hodge_dirac(&cfg).unwrap();
        let grid = Grid::new(n, j, 2, SpaceDescriptor::scalar()).unwrap();
        let u = GridFunction::random_gaussian(grid, &mut rng);
        let t: f64 = rng.gen_range(0.02..2.0);
        let rs = resolvents(&ops, t).unwrap();
        let rp = apply(&rs.r_plus, &u).unwrap();
        let rm = apply(&rs.r_minus, &u).unwrap();
        let q = rs.apply_q(&u).unwrap();
        // independent route for P: dense solve of (I + t²Π_B²)
        let pib2 = OperatorHandle::compose(vec![ops.pi_b.clone(), ops.pi_b.clone()]).unwrap();
        let m = assemble_dense(&pib2, &grid).unwrap();
        let nn = grid.cells() * 2;
        let mut shifted = m * C64::new(t * t, 0.0);
        for i in 0..nn {
            shifted[(i, i)] += C64::new(1.0, 0.0);
        }
        let lu = shifted.lu();
        let mut rhs = nalgebra::DVector::from_element(nn, C64::new(0.0, 0.0));
        for cell in 0..grid.cells() {
            for comp in 0..2 {
                rhs[cell * 2 + comp] = u.at(cell, comp, 0);
            }
        }
        let sol = lu.solve(&rhs).unwrap();
        let mut p_direct = GridFunction::zero(grid);
        for cell in 0..grid.cells() {
            for comp in 0..2 {
                p_direct.data[cell * 2 + comp] = sol[cell * 2 + comp];
            }
        }
        let scale = u.linf_norm();
        let half_sum = rp.add(&rm).scaled(C64::new(0.5, 0.0));
        let product = apply(&rs.r_plus, &rm).unwrap();
        let q_diff = rp.sub(&rm).scaled(C64::new(0.0, 0.5));
        let q_from_p = apply(&ops.pi_b, &p_direct)
            .unwrap()
            .scaled(C64::new(t, 0.0));
        let errs = [
            max_diff(&half_sum, &p_direct),
            max_diff(&product, &p_direct),
            max_diff(&q, &q_diff),
            max_diff(&q, &q_from_p),
        ];
        for (i, e) in errs.iter().enumerate() {
            assert!(
                e / scale <= 1e-9,
                "case {case} identity {i}: rel err {}",
                e / scale
            );
        }
    }
    pass_line(5, "resolvent algebra identities", t0);
}

#[test]
fn criterion_06_explicit_vs_contour_calculus() {
    let t0 = Instant::now();
    let d = FirstOrderOperator::gradient(1);
    let cfg = HodgeDiracConfig::unperturbed(1, 6);
    let ops = hodge_dirac(&cfg).unwrap();
    let grid = Grid::new(1, 6, 2, SpaceDescriptor::scalar()).unwrap();
    let mut rng = RandomSource::new(606).rng();
    let u = GridFunction::random_gaussian(grid, &mut rng);
    let explicit =
        functional_calculus_pi(&d, 1, 6, |z| C64::new(z / (1.0 + z * z), 0.0), &u).unwrap();
    let spec = ContourSpec {
        nodes_per_decade: 40,
        r_min: 1e-5,
        r_max: 1e8,
        ..Default::default()
    };
    let (contour, report) = contour_calculus(
        &ops.pi,
        |z: C64| z / (C64::new(1.0, 0.0) + z * z),
        &spec,
        &u,
    )
    .unwrap();
    let rel = max_diff(&explicit, &contour) / explicit.linf_norm();
    assert!(rel <= 1e-6, "relative difference {rel}, report {report:?}");
    pass_line(6, "explicit vs contour calculus", t0);
}

#[test]
fn criterion_07_neumann_vs_dense() {
    let t0 = Instant::now();
    let j = 8u32;
    let grid = scalar_grid(1, j);
    let src = RandomSource::new(707);
    let mut rng = src.rng();
    let raw: Vec<C64> = (0..grid.cells())
        .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let sup = raw.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let values: Vec<C64> = raw.iter().map(|z| z * (0.9 / sup)).collect();
    let k_field = MatrixField::scalar_diag(1, j, 1, &values);
    let tol = 1e-10;
    let mut worst: f64 = 0.0;
    for kexp in -6..=0_i32 {
        let t = 2.0f64.powi(kexp);
        // dense route through the resolvent machinery: (I + i·(−i P_t K))
        let pk = OperatorHandle::compose(vec![
            OperatorHandle::fourier(MultiplierSymbol::scalar_fn(1, j, 1, |xi| {
                C64::new(
                    1.0 / (1.0 + t * t * radmaxlab::operators::wavenumber_sq(xi)),
                    0.0,
                )
            })),
            OperatorHandle::pointwise(k_field.clone()),
        ])
        .unwrap();
        let aop = OperatorHandle::scaled(C64::new(0.0, -1.0), pk);
        let dense_op = OperatorHandle::resolvent(aop, 1.0, ResolventStyle::R).unwrap();
        for i in 0..20 {
            let mut rng = src.substream((kexp + 10) as u64 * 100 + i).rng();
            let u = GridFunction::random_gaussian(grid, &mut rng);
            let series = neumann_resolvent(t, &k_field, &u, tol).unwrap();
            let dense = apply(&dense_op, &u).unwrap();
            worst = worst.max(max_diff(&series, &dense) / u.linf_norm().max(1.0));
        }
    }
    assert!(worst <= 1e-8, "max diff {worst}");
    pass_line(7, "Neumann series vs dense solve", t0);
}

#[test]
fn criterion_08_kato_identity_flat() {
    let t0 = Instant::now();
    let src = RandomSource::new(808);
    for (n, j) in [(1usize, 6u32), (2, 4)] {
        let grid = scalar_grid(n, j);
        let sqrt_sym = MultiplierSymbol::sqrt_minus_laplacian(n, j);
        let grad_sym = MultiplierSymbol::gradient(n, j);
        for i in 0..50 {
            let mut rng = src.substream(n as u64 * 1000 + i).rng();
            let u = GridFunction::random_gaussian(grid, &mut rng);
            let s = sqrt_sym.apply(&u).unwrap().lp_norm(2.0);
            let g = grad_sym.apply(&u).unwrap().lp_norm(2.0);
            assert!(
                (s - g).abs() <= 1e-10 * g.max(1.0),
                "n={n} i={i}: {s} vs {g}"
            );
        }
    }
    pass_line(8, "Kato identity at flat coefficients", t0);
}

#[test]
fn criterion_09_kato_rough_ensemble() {
    let t0 = Instant::now();
    let n = 1usize;
    let j = 10u32;
    let grid = scalar_grid(n, j);
    let src = RandomSource::new(909);
    let quad_opts = QuadratureOpts {
        nodes_per_decade: 40,
        ..Default::default()
    };
    let mut ratio_min = f64::INFINITY;
    let mut ratio_max: f64 = 0.0;
    // the dense oracle is run on a deterministic subsample (6 fields): one
    // dense square root costs ~16 s at this size, and the quadrature path
    // under test is identical across fields
    let oracle_fields = 6u64;
    for i in 0..50u64 {
        let member = src.substream(i);
        let mut rng = member.rng();
        let values: Vec<C64> = (0..grid.cells())
            .map(|_| C64::new(rng.gen_range(1.0..10.0), 0.0))
            .collect();
        let a = MatrixField::scalar_diag(n, j, n, &values);
        let u = GridFunction::random_gaussian(grid, &mut rng);
        let sqrt_u = sqrt_l(n, j, &a, &u, SqrtMethod::ResolventQuadrature, quad_opts).unwrap();
        if i < oracle_fields {
            let dense = sqrt_l(n, j, &a, &u, SqrtMethod::DenseSchur, quad_opts).unwrap();
            let rel = max_diff(&dense, &sqrt_u) / dense.linf_norm();
            assert!(rel <= 1e-4, "field {i}: dense vs quadrature rel {rel}");
        }
        let gradu = MultiplierSymbol::gradient(n, j).apply(&u).unwrap();
        for p in [1.5, 2.0, 3.0] {
            let ratio = sqrt_u.lp_norm(p) / gradu.lp_norm(p);
            assert!(
                ratio >= 0.01 && ratio <= 100.0,
                "field {i}, p={p}: ratio {ratio}"
            );
            ratio_min = ratio_min.min(ratio);
            ratio_max = ratio_max.max(ratio);
        }
    }
    println!("criterion 09 empirical band: [{ratio_min:.4}, {ratio_max:.4}]");
    pass_line(9, "Kato rough ensemble", t0);
}

#[test]
fn criterion_10_carleson_embedding() {
    let t0 = Instant::now();
    let src = RandomSource::new(1010);
    // part 1: brute-force equivalence on 200 fuzzed trees with ≤ 14 cubes
    let j = 4u32;
    let grid = scalar_grid(1, j);
    let mut rng = src.rng();
    for case in 0..200 {
        let mut fam = CarlesonFamily::new(1, j).unwrap();
        let mut cubes: Vec<DyadicCube> = Vec::new();
        let target = rng.gen_range(1..=14usize);
        let mut guard = 0;
        while cubes.len() < target && guard < 200 {
            guard += 1;
            let level = -(rng.gen_range(0..=j) as i32);
            let per = 1usize << (-level) as u32;
            let cube = DyadicCube {
                level,
                index: [rng.gen_range(0..per), 0],
            };
            if cubes.contains(&cube) {
                continue;
            }
            let count = cube.cells(&grid).count();
            let values: Vec<C64> = (0..count)
                .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            fam.insert_values(cube, values).unwrap();
            cubes.push(cube);
        }
        let u = GridFunction::random_gaussian(grid, &mut rng);
        let p = [1.5, 2.0, 3.0][case % 3];
        let fast = carleson_embed_lhs(&fam, &u, p, RandomizedOpts::default(), &src).unwrap();
        // global enumeration oracle
        let table = fam.chain_table();
        let pyramid = AveragePyramid::build(&u);
        let patterns = 1usize << cubes.len();
        let mut total = 0.0;
        for bits in 0..patterns {
            let mut integral = 0.0;
            for cell in 0..grid.cells() {
                let mut s = C64::new(0.0, 0.0);
                for (qi, q) in cubes.iter().enumerate() {
                    if !q.contains_cell(&grid, cell) {
                        continue;
                    }
                    let li = (grid.j as i32 + q.level) as usize;
                    let sign = if (bits >> qi) & 1 == 0 { 1.0 } else { -1.0 };
                    s += table[li][cell] * pyramid.vector_at(q.level, cell, 0).data[0] * sign;
                }
                integral += s.norm().powf(p) / grid.cells() as f64;
            }
            total += integral / patterns as f64;
        }
        let oracle = total.powf(1.0 / p);
        assert!(
            (fast.value - oracle).abs() <= 1e-12 * (1.0 + oracle),
            "case {case}: {} vs {oracle}",
            fast.value
        );
    }
    // part 2: embedding ratios at ε = 0.5 bounded and stable across J
    let space = SpaceDescriptor::lebesgue(1.5, 3).unwrap();
    let p = 2.0;
    let eps = 0.5;
    let mut per_j = Vec::new();
    for jj in [4u32, 5, 6] {
        let rep = radmaxlab::carleson::embedding_constant_experiment(
            space,
            p,
            eps,
            1,
            jj,
            30,
            &src.substream(jj as u64),
        )
        .unwrap();
        assert!(rep.ratio_max <= 100.0, "J={jj}: ratio {}", rep.ratio_max);
        per_j.push(rep.ratio_max);
        println!(
            "criterion 10 embedding constant at J={jj}: {:.4}",
            rep.ratio_max
        );
    }
    let cmax = per_j.iter().copied().fold(0.0, f64::max);
    let cmin = per_j.iter().copied().fold(f64::INFINITY, f64::min);
    // pinned stability factor across J ∈ {4,5,6}
    assert!(cmax / cmin <= 2.5, "constants across J: {per_j:?}");
    pass_line(10, "Carleson embedding", t0);
}

#[test]
fn criterion_11_paraproduct_stability() {
    let t0 = Instant::now();
    let src = RandomSource::new(1111);
    for space in [
        SpaceDescriptor::scalar(),
        SpaceDescriptor::lebesgue(1.5, 3).unwrap(),
    ] {
        let mut constants = Vec::new();
        for jj in [6u32, 10] {
            let rep = radmaxlab::carleson::paraproduct_bound_experiment(
                space,
                2.0,
                1,
                jj,
                40,
                &src.substream(jj as u64),
            )
            .unwrap();
            constants.push(rep.ratio_max);
            println!(
                "criterion 11 {} paraproduct constant at J={jj}: {:.4}",
                space.label(),
                rep.ratio_max
            );
        }
        let rel = (constants[0] - constants[1]).abs() / constants[0].min(constants[1]);
        assert!(
            rel < 0.25,
            "{}: constants {constants:?} vary by {rel}",
            space.label()
        );
    }
    pass_line(11, "paraproduct bound stability", t0);
}

#[test]
fn criterion_12_off_diagonal_decay() {
    let t0 = Instant::now();
    let n = 1usize;
    let j = 6u32;
    let src = RandomSource::new(1212);
    let mut rng = src.rng();
    let a: Vec<C64> = (0..(1usize << j))
        .map(|_| C64::new(rng.gen_range(1.0..3.0), rng.gen_range(-0.3..0.3)))
        .collect();
    let cfg = HodgeDiracConfig::with_scalar_coefficient(n, j, &a).unwrap();
    let ops = hodge_dirac(&cfg).unwrap();
    let grid = Grid::new(n, j, 2, SpaceDescriptor::scalar()).unwrap();
    let mut family = Vec::new();
    for k in -(j as i32)..=-3 {
        family.push((k, resolvents(&ops, 2.0f64.powi(k)).unwrap().q));
    }
    let rows = off_diagonal_profile(&family, &grid, &[1.0, 4.0], 2.0, 5, &src).unwrap();
    for pair in rows.chunks(2) {
        let (near, far) = (&pair[0], &pair[1]);
        assert_eq!(near.rho, 1.0);
        assert_eq!(far.rho, 4.0);
        assert!(
            far.ratio <= 0.5 * near.ratio,
            "scale k={}: ratio(4) = {} vs ratio(1) = {}",
            near.scale_k,
            far.ratio,
            near.ratio
        );
        println!(
            "criterion 12 k={}: ratio(rho=1) {:.3e}, ratio(rho=4) {:.3e}",
            near.scale_k, near.ratio, far.ratio
        );
    }
    pass_line(12, "off-diagonal decay", t0);
}

#[test]
fn criterion_13_test_functions() {
    let t0 = Instant::now();
    let n = 1usize;
    let j = 7u32;
    let src = RandomSource::new(1313);
    let mut rng = src.rng();
    let a: Vec<C64> = (0..(1usize << j))
        .map(|_| C64::new(rng.gen_range(1.0..3.0), 0.0))
        .collect();
    let cfg = HodgeDiracConfig::with_scalar_coefficient(n, j, &a).unwrap();
    let ops = hodge_dirac(&cfg).unwrap();
    let make = |t: f64| resolvents(&ops, t);
    let w = [C64::new(1.0, 0.0)];
    // ε-sweep regression slope at p = 2: must reach 1/p' − 0.2 = 0.3
    let q = DyadicCube {
        level: -2,
        index: [1, 0],
    };
    let eps: Vec<f64> = vec![0.4, 0.3, 0.2, 0.15, 0.1];
    let (pts, slope) = test_function_sweep(&ops, &make, q, &w, &eps, 2.0).unwrap();
    println!("criterion 13 sweep: {pts:?}, slope {slope:.3}");
    assert!(slope >= 0.3, "slope {slope}");
    // test1/test2 stability across 3 cube levels (pinned factor 3)
    let mut t1 = Vec::new();
    let mut t2 = Vec::new();
    for level in [-2i32, -3, -4] {
        let q = DyadicCube {
            level,
            index: [1, 0],
        };
        let bundle = test_functions(&ops, &make, q, &w, 0.25, 2.0).unwrap();
        println!(
            "criterion 13 level {level}: test1 {:.4}, test2 {:.4}, c_w {:.3}",
            bundle.test1_ratio, bundle.test2_ratio, bundle.c_w
        );
        t1.push(bundle.test1_ratio);
        t2.push(bundle.test2_ratio);
    }
    for series in [&t1, &t2] {
        let hi = series.iter().copied().fold(0.0, f64::max);
        let lo = series.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(hi / lo <= 3.0, "levels unstable: {series:?}");
    }
    pass_line(13, "test function machinery", t0);
}

#[test]
fn criterion_14_hodge_decomposition() {
    let t0 = Instant::now();
    let n = 1usize;
    let j = 5u32;
    let src = RandomSource::new(1414);
    let grid = Grid::new(n, j, 2, SpaceDescriptor::scalar()).unwrap();
    for case in 0..50u64 {
        let member = src.substream(case);
        let mut rng = member.rng();
        let a: Vec<C64> = (0..(1usize << j))
            .map(|_| C64::new(rng.gen_range(1.0..2.5), rng.gen_range(-0.25..0.25)))
            .collect();
        let cfg = HodgeDiracConfig::with_scalar_coefficient(n, j, &a).unwrap();
        let ops = hodge_dirac(&cfg).unwrap();
        let u = GridFunction::random_gaussian(grid, &mut rng);
        let t = 2.0f64.powi(12);
        let u_ker = resolvents(&ops, t).unwrap().apply_p(&u).unwrap();
        let u_range = u.sub(&resolvents(&ops, 2.0 * t).unwrap().apply_p(&u).unwrap());
        let u_gamma = u_range.select_components(1..2);
        let u_gamma_star = u_range.select_components(0..1);
        let recombined = u_ker.add(&u_gamma_star.concat_components(&u_gamma));
        let recomb = max_diff(&recombined, &u) / u.linf_norm();
        assert!(recomb <= 1e-8, "case {case}: recombination {recomb}");
        let annih = resolvents(&ops, 1.0)
            .unwrap()
            .apply_q(&u_ker)
            .unwrap()
            .linf_norm()
            / u.linf_norm();
        assert!(annih <= 1e-8, "case {case}: annihilation {annih}");
    }
    pass_line(14, "Hodge decomposition", t0);
}

// Supporting invariant pinned alongside the criteria: both Car^p forms stay
// within the Khintchine band on random families (logged in criterion 10's
// module; asserted here once at acceptance scale).
#[test]
fn invariant_car_norm_forms_khintchine_band() {
    let t0 = Instant::now();
    let src = RandomSource::new(1515);
    for trial in 0..10u64 {
        let (fam, _) = random_family(1, 5, 2.0, &src.substream(trial)).unwrap();
        if fam.is_empty() {
            continue;
        }
        let r = car_norm(
            &fam,
            2.0,
            CarNormForm::Randomized,
            RandomizedOpts::default(),
            &src,
        )
        .unwrap();
        let s = car_norm(
            &fam,
            2.0,
            CarNormForm::SquareFunction,
            RandomizedOpts::default(),
            &src,
        )
        .unwrap();
        let ratio = r / s;
        assert!((0.5..=1.5).contains(&ratio), "trial {trial}: ratio {ratio}");
    }
    pass_line(15, "Car^p randomized vs square-function band", t0);
}
