//! Logged empirical bands and stability checks: quantities the library
//! measures rather than proves, pinned here with generous sanity bounds and
//! printed for the record.

use radmaxlab::carleson::{car_norm, carleson_embed_lhs, CarNormForm, CarlesonFamily};
use radmaxlab::dyadic::{conditional_expectation, DyadicCube, Grid, GridFunction};
use radmaxlab::harness::{run, ExperimentConfig};
use radmaxlab::operators::MatrixField;
use radmaxlab::radmax::{rmf_norm_experiment, MrOpts};
use radmaxlab::rng::RandomSource;
use radmaxlab::space::{
    rademacher_avg, rbound_estimate, square_function_norm, RandomizedOpts, RboundOpts,
    SpaceDescriptor, Vector,
};
use radmaxlab::C64;
use rand::Rng;

#[test]
fn lattice_khintchine_kahane_bands_per_q() {
    // ratio E‖Σ ε y‖ / ‖(Σ|y|²)^{1/2}‖ over fuzzed enumerable instances:
    // a positive finite band per q, and the sharp [1/√2, 1] band at q = 2
    let src = RandomSource::new(21);
    let mut rng = src.rng();
    for q in [1.0, 1.5, 2.0, 4.0] {
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for _ in 0..60 {
            let d = rng.gen_range(1..=8);
            let k = rng.gen_range(1..=10);
            let space = SpaceDescriptor::lebesgue(q, d).unwrap();
            let xs: Vec<Vector> = (0..k)
                .map(|_| Vector::random_gaussian(space, &mut rng))
                .collect();
            let denom = square_function_norm(&space, &xs).unwrap();
            if denom < 1e-12 {
                continue;
            }
            let num = rademacher_avg(&space, &xs, RandomizedOpts::default(), &src)
                .unwrap()
                .value;
            let ratio = num / denom;
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
        println!("lattice KK band for q={q}: [{lo:.4}, {hi:.4}]");
        assert!(lo > 0.0 && hi.is_finite());
        if q == 2.0 {
            assert!(
                lo >= 1.0 / 2.0f64.sqrt() - 1e-9 && hi <= 1.0 + 1e-9,
                "[{lo}, {hi}]"
            );
        }
    }
}

#[test]
fn stein_rbound_stable_in_depth() {
    // R-bound lower bounds for {A_{2^k}} on L^p(ℓ^q), logged per depth and
    // pinned to a factor-2 band across J ∈ {3,4,5}
    let space = SpaceDescriptor::lebesgue(1.5, 3).unwrap();
    let p = 2.0;
    let src = RandomSource::new(22);
    let mut constants = Vec::new();
    for j in [3u32, 4, 5] {
        let grid = Grid::new(1, j, 1, space).unwrap();
        let scales: Vec<i32> = grid.levels().collect();
        let mut ops: Vec<Box<dyn Fn(&GridFunction) -> GridFunction + Sync>> = Vec::new();
        for &k in &scales {
            ops.push(Box::new(move |u: &GridFunction| {
                conditional_expectation(u, k).expect("valid level")
            }));
        }
        let refs: Vec<&(dyn Fn(&GridFunction) -> GridFunction + Sync)> =
            ops.iter().map(|b| b.as_ref()).collect();
        let est = rbound_estimate(
            &refs,
            |rng| GridFunction::random_gaussian(grid, rng),
            |u: &GridFunction| u.lp_norm(p),
            RboundOpts {
                tuple_len: 3,
                restarts: 2,
                sweeps: 3,
                perturbations: 6,
                ..Default::default()
            },
            &src.substream(j as u64),
        )
        .unwrap();
        println!("Stein constant at J={j}: {:.4}", est.value);
        assert!(
            est.value >= 1.0 - 1e-9,
            "conditional expectations contain scale 0"
        );
        constants.push(est.value);
    }
    let hi = constants.iter().copied().fold(0.0, f64::max);
    let lo = constants.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(hi / lo <= 2.0, "Stein constants across J: {constants:?}");
}

#[test]
fn kato_flat_coefficients_ratio_is_one() {
    // a ≡ 1: every ratio ‖√L u‖₂/‖∇u‖₂ equals 1 to machine precision
    let mut cfg = ExperimentConfig::new("kato");
    cfg.grid_j = 6;
    cfg.ensemble = 5;
    cfg.lambda = 1.0;
    cfg.big_lambda = 1.0;
    cfg.p = vec![2.0];
    cfg.seed = 23;
    let rep = run(&cfg).unwrap();
    for row in rep.rows.iter().filter(|r| r.label.contains("-ratio")) {
        assert!(
            (row.value - 1.0).abs() <= 1e-9,
            "{}: {}",
            row.label,
            row.value
        );
    }
    assert!(rep.all_pass());
}

#[test]
fn adversarial_chain_family_stays_bounded() {
    // b concentrated on a single chain: the embedding ratio stays below the
    // same generous constant as the random ensemble
    let j = 5u32;
    let src = RandomSource::new(24);
    let mut fam = CarlesonFamily::new(1, j).unwrap();
    let grid = Grid::new(1, j, 1, SpaceDescriptor::scalar()).unwrap();
    for d in 0..=j as i32 {
        let cube = DyadicCube {
            level: -d,
            index: [0, 0],
        };
        let count = cube.cells(&grid).count();
        fam.insert_values(cube, vec![C64::new(1.0, 0.0); count])
            .unwrap();
    }
    let mut rng = src.rng();
    let p = 2.0;
    let eps = 0.5;
    let car = car_norm(
        &fam,
        p + eps,
        CarNormForm::SquareFunction,
        RandomizedOpts::default(),
        &src,
    )
    .unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let u = GridFunction::random_gaussian(grid, &mut rng);
        let lhs = carleson_embed_lhs(&fam, &u, p, RandomizedOpts::default(), &src).unwrap();
        worst = worst.max(lhs.value / (car * u.lp_norm(p)));
    }
    println!("adversarial chain embedding ratio: {worst:.4}");
    assert!(worst <= 100.0);
}

#[test]
fn rmf_ratios_logged_across_p() {
    // exponent trend of the M_R operator-norm ratios on a non-Hilbert
    // lattice: logged, bounded, and not wildly p-dependent
    let space = SpaceDescriptor::lebesgue(4.0, 4).unwrap();
    let src = RandomSource::new(25);
    let opts = MrOpts {
        restarts: 1,
        sweeps: 2,
        perturbations: 4,
        hilbert_fast_path: false,
        ..Default::default()
    };
    let mut maxima = Vec::new();
    for p in [1.5, 2.0, 3.0] {
        let rep = rmf_norm_experiment(space, p, 1, 4, 8, &opts, &src).unwrap();
        println!("M_R ratio max at p={p}: {:.4}", rep.ratio_max);
        assert!(rep.ratio_max.is_finite() && rep.ratio_max > 0.0);
        maxima.push(rep.ratio_max);
    }
    let hi = maxima.iter().copied().fold(0.0, f64::max);
    let lo = maxima.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(hi / lo <= 4.0, "p-dependence of logged ratios: {maxima:?}");
}

#[test]
fn coefficient_field_round_trips_through_grid_format() {
    let mut rng = RandomSource::new(26).rng();
    let field = MatrixField::from_fn(1, 3, 2, 2, |_| {
        nalgebra::DMatrix::from_fn(2, 2, |_, _| {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    });
    let gf = field.to_grid_function();
    let mut buf = Vec::new();
    radmaxlab::dyadic::write_binary(&gf, &mut buf).unwrap();
    let back = radmaxlab::dyadic::read_binary(buf.as_slice()).unwrap();
    let field2 = MatrixField::from_grid_function(&back, 2, 2).unwrap();
    assert_eq!(field.data, field2.data);
}

#[test]
fn rmf_runs_on_schatten_spaces() {
    let space = SpaceDescriptor::schatten(1.5, 2).unwrap();
    let opts = MrOpts {
        restarts: 1,
        sweeps: 1,
        perturbations: 2,
        hilbert_fast_path: false,
        ..Default::default()
    };
    let rep = rmf_norm_experiment(space, 2.0, 1, 3, 3, &opts, &RandomSource::new(27)).unwrap();
    assert!(rep.ratio_max.is_finite() && rep.ratio_max > 0.0);
}
