//! Car^p norms of finitely supported cube families, the randomized Carleson
//! embedding, the stopping-time decomposition by chain-restricted R-bounds,
//! dyadic paraproducts, and the localized test-function machinery feeding
//! the square-root experiments.

use crate::dyadic::{AveragePyramid, DyadicCube, Grid, GridFunction};
use crate::error::{Error, Result};
use crate::operators::{HodgeDiracOperators, MultiplierSymbol, ResolventSet};
use crate::radmax::{chain_rademacher_bound, rademacher_maximal, MrOpts};
use crate::rng::RandomSource;
use crate::space::{
    rademacher_sum, EstimateMethod, NormEstimate, RandomizedOpts, SpaceDescriptor, Vector,
};
use crate::C64;
use rand::Rng;
use serde::Serialize;
use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};

/// A finitely supported family {b_Q} of scalar functions with supp b_Q ⊆ Q,
/// stored per cube on a scalar grid.
#[derive(Debug, Clone)]
pub struct CarlesonFamily {
    pub grid: Grid,
    entries: HashMap<(i32, usize), Vec<C64>>,
}

impl CarlesonFamily {
    pub fn new(n: usize, j: u32) -> Result<CarlesonFamily> {
        let grid = Grid::new(n, j, 1, SpaceDescriptor::scalar())?;
        Ok(CarlesonFamily {
            grid,
            entries: HashMap::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Insert b_Q given as a full scalar grid function; values outside Q
    /// must vanish.
    pub fn insert(&mut self, cube: DyadicCube, b: &GridFunction) -> Result<()> {
        self.grid.check_level(cube.level)?;
        if b.grid.n != self.grid.n || b.grid.j != self.grid.j || b.grid.cell_len() != 1 {
            return Err(Error::shape(
                "family member must be scalar on the family grid",
            ));
        }
        let flat = cube.flat(&self.grid);
        let mut inside = vec![false; self.grid.cells()];
        for cell in cube.cells(&self.grid) {
            inside[cell] = true;
        }
        for cell in 0..self.grid.cells() {
            if !inside[cell] && b.data[cell].norm() > 0.0 {
                return Err(Error::invalid(format!(
                    "b_Q not supported in its cube: nonzero at cell {cell}"
                )));
            }
        }
        let values: Vec<C64> = cube.cells(&self.grid).map(|c| b.data[c]).collect();
        if self.entries.insert((cube.level, flat), values).is_some() {
            return Err(Error::invalid("duplicate cube in family"));
        }
        Ok(())
    }

    /// Insert by giving the values on the cube's cells directly (iteration
    /// order of [`DyadicCube::cells`]).
    pub fn insert_values(&mut self, cube: DyadicCube, values: Vec<C64>) -> Result<()> {
        self.grid.check_level(cube.level)?;
        let count = cube.cells(&self.grid).count();
        if values.len() != count {
            return Err(Error::shape("value count must match the cube's cell count"));
        }
        let flat = cube.flat(&self.grid);
        if self.entries.insert((cube.level, flat), values).is_some() {
            return Err(Error::invalid("duplicate cube in family"));
        }
        Ok(())
    }

    pub fn cubes(&self) -> impl Iterator<Item = DyadicCube> + '_ {
        self.entries
            .keys()
            .map(|&(level, flat)| DyadicCube::from_flat(&self.grid, level, flat))
    }

    pub fn scaled(&self, c: C64) -> CarlesonFamily {
        let entries = self
            .entries
            .iter()
            .map(|(k, v)| (*k, v.iter().map(|z| z * c).collect()))
            .collect();
        CarlesonFamily {
            grid: self.grid,
            entries,
        }
    }

    /// Restriction to a sub-collection of cubes.
    pub fn restricted(&self, keep: impl Fn(&DyadicCube) -> bool) -> CarlesonFamily {
        let entries = self
            .entries
            .iter()
            .filter(|((level, flat), _)| keep(&DyadicCube::from_flat(&self.grid, *level, *flat)))
            .map(|(k, v)| (*k, v.clone()))
            .collect();
        CarlesonFamily {
            grid: self.grid,
            entries,
        }
    }

    /// Per-(level, cell) table of b_{Q_k(x)}(x); levels indexed J + k.
    pub fn chain_table(&self) -> Vec<Vec<C64>> {
        let levels = self.grid.j as usize + 1;
        let mut table = vec![vec![C64::new(0.0, 0.0); self.grid.cells()]; levels];
        for ((level, flat), values) in &self.entries {
            let cube = DyadicCube::from_flat(&self.grid, *level, *flat);
            let li = (self.grid.j as i32 + level) as usize;
            for (i, cell) in cube.cells(&self.grid).enumerate() {
                table[li][cell] += values[i];
            }
        }
        table
    }

    /// CSV export: `level,idx0,idx1,cell,re,im` with `cell` the position in
    /// the cube's cell iteration order.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut w = BufWriter::new(w);
        writeln!(w, "level,idx0,idx1,cell,re,im")?;
        let mut keys: Vec<_> = self.entries.keys().copied().collect();
        keys.sort();
        for (level, flat) in keys {
            let cube = DyadicCube::from_flat(&self.grid, level, flat);
            let values = &self.entries[&(level, flat)];
            for (i, z) in values.iter().enumerate() {
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    level, cube.index[0], cube.index[1], i, z.re, z.im
                )?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(n: usize, j: u32, r: impl Read) -> Result<CarlesonFamily> {
        let mut fam = CarlesonFamily::new(n, j)?;
        let reader = BufReader::new(r);
        let mut pending: HashMap<(i32, usize, usize), Vec<(usize, C64)>> = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if i == 0 {
                if line.trim() != "level,idx0,idx1,cell,re,im" {
                    return Err(Error::Format("bad csv header".into()));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 6 {
                return Err(Error::Format(format!("bad csv row: {line}")));
            }
            let level: i32 = parts[0]
                .trim()
                .parse()
                .map_err(|_| Error::Format("bad level".into()))?;
            let i0: usize = parts[1]
                .trim()
                .parse()
                .map_err(|_| Error::Format("bad idx0".into()))?;
            let i1: usize = parts[2]
                .trim()
                .parse()
                .map_err(|_| Error::Format("bad idx1".into()))?;
            let cell: usize = parts[3]
                .trim()
                .parse()
                .map_err(|_| Error::Format("bad cell".into()))?;
            let re: f64 = parts[4]
                .trim()
                .parse()
                .map_err(|_| Error::Format("bad re".into()))?;
            let im: f64 = parts[5]
                .trim()
                .parse()
                .map_err(|_| Error::Format("bad im".into()))?;
            pending
                .entry((level, i0, i1))
                .or_default()
                .push((cell, C64::new(re, im)));
        }
        for ((level, i0, i1), mut cells) in pending {
            cells.sort_by_key(|(c, _)| *c);
            let values: Vec<C64> = cells.into_iter().map(|(_, z)| z).collect();
            fam.insert_values(
                DyadicCube {
                    level,
                    index: [i0, i1],
                },
                values,
            )?;
        }
        Ok(fam)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CarNormForm {
    Randomized,
    SquareFunction,
}

/// E|Σ ε_j c_j|^p for scalar coefficients: exact enumeration under the
/// threshold, Monte Carlo above it.
fn scalar_rademacher_pth(coeffs: &[C64], p: f64, opts: &RandomizedOpts, src: &RandomSource) -> f64 {
    let k = coeffs.len();
    if k == 0 {
        return 0.0;
    }
    if (k as u32) <= opts.k_exact {
        let patterns = 1u64 << (k - 1);
        let mut total = 0.0;
        for bits in 0..patterns {
            let mut s = C64::new(0.0, 0.0);
            for (j, c) in coeffs.iter().enumerate() {
                let sign = if j + 1 == k || (bits >> j) & 1 == 0 {
                    1.0
                } else {
                    -1.0
                };
                s += c * sign;
            }
            total += s.norm().powf(p);
        }
        total / patterns as f64
    } else {
        let mut rng = src.rng();
        let mut total = 0.0;
        for _ in 0..opts.budget {
            let mut s = C64::new(0.0, 0.0);
            for c in coeffs {
                let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                s += c * sign;
            }
            total += s.norm().powf(p);
        }
        total / opts.budget as f64
    }
}

/// ‖b‖_{Car^p}: sup over dyadic S of the normalized L^p average over S of
/// the randomized sum (or the square function) of the chain coefficients.
pub fn car_norm(
    b: &CarlesonFamily,
    p: f64,
    form: CarNormForm,
    opts: RandomizedOpts,
    src: &RandomSource,
) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::invalid("exponent p must be ≥ 1"));
    }
    let grid = b.grid;
    let table = b.chain_table();
    let levels = grid.j as usize + 1;
    let cells = grid.cells();
    // per-cell value of the inner functional, cumulative in the level
    let mut inner = vec![vec![0.0f64; cells]; levels];
    match form {
        CarNormForm::SquareFunction => {
            for li in 0..levels {
                for cell in 0..cells {
                    let prev = if li == 0 { 0.0 } else { inner[li - 1][cell] };
                    inner[li][cell] = prev + table[li][cell].norm_sqr();
                }
            }
            // inner now holds Σ_{R ⊆ S} |b_R|²; raise to p/2 at read time
        }
        CarNormForm::Randomized => {
            let vals = crate::par::map_indexed(cells, |cell| {
                let mut per_level = vec![0.0f64; levels];
                let mut active: Vec<C64> = Vec::new();
                for li in 0..levels {
                    let c = table[li][cell];
                    if c.norm() > 0.0 {
                        active.push(c);
                    }
                    per_level[li] =
                        scalar_rademacher_pth(&active, p, &opts, &src.substream(cell as u64));
                }
                per_level
            });
            for cell in 0..cells {
                for li in 0..levels {
                    inner[li][cell] = vals[cell][li];
                }
            }
        }
    }
    let mut best: f64 = 0.0;
    for k in grid.levels() {
        let li = (grid.j as i32 + k) as usize;
        for cube_flat in 0..grid.cubes_at_level(k) {
            let cube = DyadicCube::from_flat(&grid, k, cube_flat);
            let mut acc = 0.0;
            let mut count = 0usize;
            for cell in cube.cells(&grid) {
                let v = inner[li][cell];
                acc += match form {
                    CarNormForm::SquareFunction => v.powf(p / 2.0),
                    CarNormForm::Randomized => v,
                };
                count += 1;
            }
            best = best.max((acc / count as f64).powf(1.0 / p));
        }
    }
    Ok(best)
}

/// Left-hand side of the Carleson embedding:
/// (∫ E‖Σ_R ε_R b_R(x) ⟨u⟩_R‖_X^p dx)^{1/p}, exact when every cell's active
/// chain fits under the enumeration threshold.
pub fn carleson_embed_lhs(
    b: &CarlesonFamily,
    u: &GridFunction,
    p: f64,
    opts: RandomizedOpts,
    src: &RandomSource,
) -> Result<NormEstimate> {
    if u.grid.n != b.grid.n || u.grid.j != b.grid.j || u.grid.n_comp != 1 {
        return Err(Error::shape(
            "u must be a single-component function on the family grid",
        ));
    }
    let grid = u.grid;
    let table = b.chain_table();
    let pyramid = AveragePyramid::build(u);
    let cells = grid.cells();
    let opts_p = opts.with_moment(p);
    let results = crate::par::map_indexed(cells, |cell| -> Result<(f64, bool)> {
        let mut terms: Vec<Vector> = Vec::new();
        for k in grid.levels() {
            let li = (grid.j as i32 + k) as usize;
            let c = table[li][cell];
            if c.norm() > 0.0 {
                terms.push(pyramid.vector_at(k, cell, 0).scaled(c));
            }
        }
        let est = rademacher_sum(
            &terms,
            |v: &Vector| v.norm(),
            opts_p,
            &src.substream(cell as u64),
        )?;
        Ok((est.value.powf(p), est.method != EstimateMethod::MonteCarlo))
    });
    let mut total = 0.0;
    let mut exact = true;
    for r in results {
        let (v, ex) = r?;
        total += v / cells as f64;
        exact &= ex;
    }
    let value = total.powf(1.0 / p);
    Ok(if exact {
        NormEstimate::exact(value, EstimateMethod::ExactEnum, cells as u64)
    } else {
        NormEstimate::monte_carlo(value, opts.budget * cells as u64, f64::NAN)
    })
}

/// Random family: each cube enters with probability 1/2, with values
/// uniform on the unit disc, then the whole family is renormalized to unit
/// Car^p (square-function form).
pub fn random_family(
    n: usize,
    j: u32,
    p_norm: f64,
    src: &RandomSource,
) -> Result<(CarlesonFamily, f64)> {
    let mut fam = CarlesonFamily::new(n, j)?;
    let grid = fam.grid;
    let mut rng = src.rng();
    for k in grid.levels() {
        for cube_flat in 0..grid.cubes_at_level(k) {
            if rng.gen::<bool>() {
                continue;
            }
            let cube = DyadicCube::from_flat(&grid, k, cube_flat);
            let count = cube.cells(&grid).count();
            let values: Vec<C64> = (0..count)
                .map(|_| loop {
                    let z = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                    if z.norm() <= 1.0 {
                        return z;
                    }
                })
                .collect();
            fam.insert_values(cube, values)?;
        }
    }
    let nrm = car_norm(
        &fam,
        p_norm,
        CarNormForm::SquareFunction,
        RandomizedOpts::default(),
        src,
    )?;
    if nrm > 0.0 {
        fam = fam.scaled(C64::new(1.0 / nrm, 0.0));
    }
    Ok((fam, nrm))
}

#[derive(Debug, Clone, Serialize)]
pub struct EmbeddingReport {
    pub space: String,
    pub p: f64,
    pub epsilon: f64,
    pub n: usize,
    pub j: u32,
    pub ensemble: usize,
    pub ratio_max: f64,
    pub ratio_mean: f64,
    pub ratios: Vec<f64>,
}

/// Sample random (b, u) and report
/// carleson_embed_lhs / (‖b‖_{Car^{p+ε}} · ‖u‖_{L^p}).
pub fn embedding_constant_experiment(
    space: SpaceDescriptor,
    p: f64,
    epsilon: f64,
    n: usize,
    j: u32,
    ensemble: usize,
    src: &RandomSource,
) -> Result<EmbeddingReport> {
    let grid = Grid::new(n, j, 1, space)?;
    let mut ratios = Vec::with_capacity(ensemble);
    for i in 0..ensemble {
        let member = src.substream(40_000 + i as u64);
        let (fam, _) = random_family(n, j, p + epsilon, &member)?;
        if fam.is_empty() {
            continue;
        }
        let mut rng = member.substream(1).rng();
        let u = GridFunction::random_gaussian(grid, &mut rng);
        let denom_u = u.lp_norm(p);
        let car = car_norm(
            &fam,
            p + epsilon,
            CarNormForm::SquareFunction,
            RandomizedOpts::default(),
            &member,
        )?;
        if denom_u == 0.0 || car == 0.0 {
            continue;
        }
        let lhs = carleson_embed_lhs(&fam, &u, p, RandomizedOpts::default(), &member)?;
        ratios.push(lhs.value / (car * denom_u));
    }
    let ratio_max = ratios.iter().copied().fold(0.0, f64::max);
    let ratio_mean = if ratios.is_empty() {
        0.0
    } else {
        ratios.iter().sum::<f64>() / ratios.len() as f64
    };
    Ok(EmbeddingReport {
        space: space.label(),
        p,
        epsilon,
        n,
        j,
        ensemble,
        ratio_max,
        ratio_mean,
        ratios,
    })
}

/// Stopping-time decomposition: each cube S is classified by the smallest
/// k ≥ 0 with sup_{‖λ‖≤1} E‖Σ_{R: S ⊆ R} ε_R λ_R ⟨u⟩_R‖ ≤ A·2^k, with the
/// maximal-cube lists ℱ_k of cubes left outside the k-th class.
#[derive(Debug)]
pub struct StoppingDecomposition {
    pub threshold: f64,
    /// classes[J + k][cube_flat]
    pub classes: Vec<Vec<u32>>,
    /// maximal[k] = ℱ_k: maximal cubes with class > k
    pub maximal: Vec<Vec<DyadicCube>>,
    /// Containment ∪_{S ∈ ℱ_{k−1}} S ⊆ {M_R^est > A·2^{k−1}(1 − tol)}.
    pub containment_ok: bool,
    pub containment_tol: f64,
}

pub fn stopping_decomposition(
    u: &GridFunction,
    threshold: f64,
    opts: &MrOpts,
    src: &RandomSource,
) -> Result<StoppingDecomposition> {
    if threshold <= 0.0 {
        return Err(Error::invalid("threshold must be positive"));
    }
    if u.grid.n_comp != 1 {
        return Err(Error::shape(
            "stopping decomposition expects a single component",
        ));
    }
    let grid = u.grid;
    let pyramid = AveragePyramid::build(u);
    let levels: Vec<i32> = grid.levels().collect();
    let mut classes: Vec<Vec<u32>> = Vec::with_capacity(levels.len());
    let mut max_class = 0u32;
    for &k in &levels {
        let per_level =
            crate::par::map_indexed(grid.cubes_at_level(k), |cube_flat| -> Result<u32> {
                let cube = DyadicCube::from_flat(&grid, k, cube_flat);
                let cell = cube.cells(&grid).next().expect("cube has cells");
                // ancestor chain: levels k..0
                let chain: Vec<Vector> = (k..=0).map(|kk| pyramid.vector_at(kk, cell, 0)).collect();
                let bound = chain_rademacher_bound(
                    &chain,
                    opts,
                    &src.substream(((grid.j as i32 + k) as u64) << 32 | cube_flat as u64),
                )?;
                let class = if bound <= threshold {
                    0
                } else {
                    (bound / threshold).log2().ceil().max(0.0) as u32
                };
                Ok(class)
            });
        let mut row = Vec::with_capacity(per_level.len());
        for c in per_level {
            let c = c?;
            max_class = max_class.max(c);
            row.push(c);
        }
        classes.push(row);
    }
    // ℱ_k: maximal cubes with class > k, found top-down
    let mut maximal: Vec<Vec<DyadicCube>> = Vec::new();
    for kk in 0..max_class {
        let mut list = Vec::new();
        // covered[level index][cube] = some ancestor is already maximal
        let mut covered: Vec<Vec<bool>> = levels
            .iter()
            .map(|&k| vec![false; grid.cubes_at_level(k)])
            .collect();
        for (li_rev, &k) in levels.iter().enumerate().rev() {
            // iterate top (k = 0) downwards
            let li = li_rev;
            for cube_flat in 0..grid.cubes_at_level(k) {
                if covered[li][cube_flat] {
                    continue;
                }
                if classes[li][cube_flat] > kk {
                    let cube = DyadicCube::from_flat(&grid, k, cube_flat);
                    list.push(cube);
                    // mark descendants covered
                    for (li2, &k2) in levels.iter().enumerate() {
                        if k2 >= k {
                            continue;
                        }
                        for cf2 in 0..grid.cubes_at_level(k2) {
                            let c2 = DyadicCube::from_flat(&grid, k2, cf2);
                            let cell = c2.cells(&grid).next().unwrap();
                            if grid.cube_of_cell(cell, k) == cube_flat {
                                covered[li2][cf2] = true;
                            }
                        }
                    }
                }
            }
        }
        maximal.push(list);
    }
    // containment check against the pointwise maximal-function estimate
    let containment_tol = 0.05;
    let mr = rademacher_maximal(u, opts, &src.substream(999))?;
    let mut containment_ok = true;
    for (kk, list) in maximal.iter().enumerate() {
        let level_value = threshold * 2.0f64.powi(kk as i32) * (1.0 - containment_tol);
        for cube in list {
            for cell in cube.cells(&grid) {
                if mr.data[cell].re <= level_value {
                    containment_ok = false;
                }
            }
        }
    }
    Ok(StoppingDecomposition {
        threshold,
        classes,
        maximal,
        containment_ok,
        containment_tol,
    })
}

/// Dyadic paraproduct P(f, u) = Σ_Q Σ_η ⟨f, h_Q^η⟩ ⟨u⟩_Q h_Q^η / |Q|.
/// One of f, u must be scalar-valued; the other may be vector-valued.
pub fn paraproduct(f: &GridFunction, u: &GridFunction) -> Result<GridFunction> {
    if f.grid.n != u.grid.n || f.grid.j != u.grid.j {
        return Err(Error::shape("paraproduct operands live on different grids"));
    }
    let (coeff_side_scalar, out_like) = if f.grid.cell_len() == 1 {
        (true, u)
    } else if u.grid.cell_len() == 1 {
        (false, f)
    } else {
        return Err(Error::shape("paraproduct needs one scalar-valued argument"));
    };
    let grid = out_like.grid;
    let cl = grid.cell_len();
    let coeffs = crate::dyadic::haar_decompose(f);
    let averages = AveragePyramid::build(u);
    let ec = crate::dyadic::HaarCoefficients::eta_count(grid.n);
    let mut out = GridFunction::zero(grid);
    // cubes at level k have Haar functions constant on level k−1 children
    for d in 0..grid.j as usize {
        let k = -(d as i32);
        let shift = (grid.j as i32 + k - 1) as u32; // child side in cells
        for cell in 0..grid.cells() {
            let cube_flat = grid.cube_of_cell(cell, k);
            let cube = DyadicCube::from_flat(&grid, k, cube_flat);
            // child index bits of this cell within the cube
            let c = grid.cell_coords(cell);
            let mut child = 0usize;
            if (c[0] >> shift) & 1 == 1 {
                child |= 1;
            }
            if grid.n == 2 && (c[1] >> shift) & 1 == 1 {
                child |= 2;
            }
            for eta in 1..=ec {
                let sign = eta_sign_pub(grid.n, eta, child);
                let fc = coeffs.coeff(&cube, eta, &f.grid);
                if coeff_side_scalar {
                    let scalar = fc[0] * sign;
                    let avg_cube = u.grid.cube_of_cell(cell, k);
                    let uavg = averages.cube_slice(k, avg_cube);
                    let o = cell * cl;
                    for e in 0..cl {
                        out.data[o + e] += scalar * uavg[e];
                    }
                } else {
                    let avg_cube = u.grid.cube_of_cell(cell, k);
                    let uavg = averages.cube_slice(k, avg_cube)[0] * sign;
                    let o = cell * cl;
                    for e in 0..cl {
                        out.data[o + e] += fc[e] * uavg;
                    }
                }
            }
        }
    }
    Ok(out)
}

fn eta_sign_pub(n: usize, eta: usize, child: usize) -> f64 {
    let mut s = 1.0;
    for axis in 0..n {
        if (eta >> axis) & 1 == 1 && (child >> axis) & 1 == 1 {
            s = -s;
        }
    }
    s
}

#[derive(Debug, Clone, Serialize)]
pub struct ParaproductReport {
    pub space: String,
    pub p: f64,
    pub n: usize,
    pub j: u32,
    pub ensemble: usize,
    pub ratio_max: f64,
    pub ratio_mean: f64,
    /// Swapped variant (vector-valued f, scalar u).
    pub swapped_ratio_max: f64,
    pub skipped: usize,
}

/// Max of ‖P(f, u)‖_p / (‖f‖_BMO ‖u‖_p) over fuzzed pairs, plus the swapped
/// variant; constant-f instances (BMO = 0) are skipped. Both factors are
/// drawn band-limited with a J-independent mode cutoff: the same RNG draws
/// then describe the same continuum pair at every depth, so the logged
/// constant is comparable across J up to discretization error.
pub fn paraproduct_bound_experiment(
    space: SpaceDescriptor,
    p: f64,
    n: usize,
    j: u32,
    ensemble: usize,
    src: &RandomSource,
) -> Result<ParaproductReport> {
    let scalar_grid = Grid::new(n, j, 1, SpaceDescriptor::scalar())?;
    let x_grid = Grid::new(n, j, 1, space)?;
    let max_mode = 8i64.min((scalar_grid.side() / 4) as i64).max(1);
    let mut ratios = Vec::new();
    let mut swapped_max: f64 = 0.0;
    let mut skipped = 0usize;
    for i in 0..ensemble {
        let member = src.substream(50_000 + i as u64);
        let mut rng = member.rng();
        let f = GridFunction::random_smooth(scalar_grid, max_mode, 1.0, &mut rng);
        let u = GridFunction::random_smooth(x_grid, max_mode, 0.7, &mut rng);
        let bmo = crate::dyadic::bmo_norm(&f);
        let up = u.lp_norm(p);
        if bmo < 1e-12 || up == 0.0 {
            skipped += 1;
            continue;
        }
        let pf = paraproduct(&f, &u)?;
        ratios.push(pf.lp_norm(p) / (bmo * up));

        // swapped: vector-valued f, scalar u
        let fv = GridFunction::random_smooth(x_grid, max_mode, 1.0, &mut rng);
        let us = GridFunction::random_smooth(scalar_grid, max_mode, 0.7, &mut rng);
        let bmov = crate::dyadic::bmo_norm(&fv);
        let usp = us.lp_norm(p);
        if bmov > 1e-12 && usp > 0.0 {
            let pv = paraproduct(&fv, &us)?;
            swapped_max = swapped_max.max(pv.lp_norm(p) / (bmov * usp));
        }
    }
    let ratio_max = ratios.iter().copied().fold(0.0, f64::max);
    let ratio_mean = if ratios.is_empty() {
        0.0
    } else {
        ratios.iter().sum::<f64>() / ratios.len() as f64
    };
    Ok(ParaproductReport {
        space: space.label(),
        p,
        n,
        j,
        ensemble,
        ratio_max,
        ratio_mean,
        swapped_ratio_max: swapped_max,
        skipped,
    })
}

/// Centered-difference gradient of a scalar grid function (periodic), the
/// local derivative used only by the test-function construction.
pub fn fd_gradient(g: &GridFunction) -> Result<GridFunction> {
    if g.grid.cell_len() != 1 {
        return Err(Error::shape("fd_gradient expects a scalar function"));
    }
    let grid = g.grid;
    let side = grid.side();
    let h = 1.0 / side as f64;
    let out_grid = Grid {
        n_comp: grid.n,
        ..grid
    };
    let mut out = GridFunction::zero(out_grid);
    for cell in 0..grid.cells() {
        let c = grid.cell_coords(cell);
        for axis in 0..grid.n {
            let mut up = c;
            let mut dn = c;
            up[axis] = (c[axis] + 1) % side;
            dn[axis] = (c[axis] + side - 1) % side;
            let v = (g.data[grid.cell_index(up)] - g.data[grid.cell_index(dn)]) / (2.0 * h);
            out.data[cell * grid.n + axis] = v;
        }
    }
    Ok(out)
}

/// Localized test function bundle around a cube Q: w_Q = Γ_h(η_Q u_Q) with
/// w_Q ≡ w on 2Q and supp w_Q ⊆ 3Q (periodic), and f_Q^w = P^B_{εℓ(Q)} w_Q.
#[derive(Debug)]
pub struct TestFunctionBundle {
    pub cube: DyadicCube,
    /// Target vector in C^N (zero scalar block ⊕ the unit gradient-block
    /// vector).
    pub w: Vec<C64>,
    pub epsilon: f64,
    pub w_q: GridFunction,
    pub f_q: GridFunction,
    /// ‖w_Q‖_∞, logged.
    pub c_w: f64,
    /// Relative spectral distance of the gradient block from curl-free
    /// fields (0 for n = 1 up to rounding).
    pub range_distance: f64,
    /// ‖f_Q^w‖_p / |Q|^{1/p}
    pub test1_ratio: f64,
    /// Σ_{2^k ≤ ℓ(Q)} (2^k/εℓ)‖Q^B_{εℓ} P^B_{2^k} w_Q‖_p / |Q|^{1/p}
    pub test2_ratio: f64,
    /// |⟨f_Q^w⟩_Q − w|
    pub close_to_av: f64,
}

pub fn test_functions(
    ops: &HodgeDiracOperators,
    resolvent_at: &dyn Fn(f64) -> Result<ResolventSet>,
    q: DyadicCube,
    w_vec: &[C64],
    epsilon: f64,
    p: f64,
) -> Result<TestFunctionBundle> {
    let n = ops.config.n;
    let j = ops.config.j;
    let grid_scalar = Grid::new(n, j, 1, SpaceDescriptor::scalar())?;
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::invalid("epsilon must lie in (0, 1/2)"));
    }
    if w_vec.len() != n {
        return Err(Error::shape(
            "w must be a gradient-block vector of length n",
        ));
    }
    let wnorm = w_vec.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if (wnorm - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("w must be a unit vector"));
    }
    if q.level > -2 {
        return Err(Error::invalid("3Q must fit in the torus: need level ≤ −2"));
    }
    let side_cells = 1usize << (j as i32 + q.level) as u32;
    if side_cells < 8 {
        return Err(Error::invalid(
            "cube too close to the grid floor: need ≥ 8 cells per side",
        ));
    }
    let ell = 2.0f64.powi(q.level);
    let ncells = grid_scalar.cells();
    let side = grid_scalar.side();
    let h = 1.0 / side as f64;

    // center of Q
    let mut center = [0.0f64; 2];
    for axis in 0..n {
        center[axis] = (q.index[axis] as f64 + 0.5) * ell;
    }
    let wrap = |d: f64| -> f64 {
        let mut d = d;
        while d > 0.5 {
            d -= 1.0;
        }
        while d < -0.5 {
            d += 1.0;
        }
        d
    };
    // cutoff profile: 1 up to ℓ + h, 0 beyond 1.5ℓ − h, linear between
    let flat_r = ell + h;
    let zero_r = 1.5 * ell - h;
    if zero_r <= flat_r {
        return Err(Error::invalid("grid too coarse for the cutoff ramp"));
    }
    let mut phi = GridFunction::zero(grid_scalar);
    let mut eta = GridFunction::zero(grid_scalar);
    for cell in 0..ncells {
        let x = grid_scalar.cell_center(cell);
        let mut prof = 1.0f64;
        let mut dot = C64::new(0.0, 0.0);
        for axis in 0..n {
            let d = wrap(x[axis] - center[axis]);
            let ax = d.abs();
            let pa = if ax <= flat_r {
                1.0
            } else if ax >= zero_r {
                0.0
            } else {
                (zero_r - ax) / (zero_r - flat_r)
            };
            prof = prof.min(pa);
            dot += w_vec[axis] * d;
        }
        phi.data[cell] = dot;
        eta.data[cell] = C64::new(prof, 0.0);
    }
    let mut etaphi = GridFunction::zero(grid_scalar);
    for cell in 0..ncells {
        etaphi.data[cell] = eta.data[cell] * phi.data[cell];
    }
    let grad = fd_gradient(&etaphi)?;
    // assemble w_Q = (0, Γ_h(η u_Q)) on the N components
    let big_grid = Grid::new(n, j, 1 + n, SpaceDescriptor::scalar())?;
    let mut w_q = GridFunction::zero(big_grid);
    for cell in 0..ncells {
        for axis in 0..n {
            w_q.data[cell * (1 + n) + 1 + axis] = grad.data[cell * n + axis];
        }
    }
    // structural checks: ≡ w on 2Q and support in 3Q (periodic)
    for cell in 0..ncells {
        let x = grid_scalar.cell_center(cell);
        let mut dist = 0.0f64;
        for axis in 0..n {
            dist = dist.max(wrap(x[axis] - center[axis]).abs());
        }
        if dist <= ell {
            for axis in 0..n {
                let got = w_q.data[cell * (1 + n) + 1 + axis];
                if (got - w_vec[axis]).norm() > 1e-9 {
                    return Err(Error::invalid(format!(
                        "w_Q differs from w on 2Q at cell {cell}"
                    )));
                }
            }
        }
        if dist > 1.5 * ell {
            for comp in 0..1 + n {
                if w_q.data[cell * (1 + n) + comp].norm() > 1e-12 {
                    return Err(Error::invalid(format!(
                        "w_Q not supported in 3Q at cell {cell}"
                    )));
                }
            }
        }
    }
    let c_w = w_q.linf_norm();
    let range_distance = gradient_range_distance(&grad, n, j)?;

    // f_Q^w = P^B_{εℓ} w_Q
    let t_eps = epsilon * ell;
    let rs = resolvent_at(t_eps)?;
    let f_q = rs.apply_p(&w_q)?;

    let vol_q = ell.powi(n as i32);
    let test1_ratio = f_q.lp_norm(p) / vol_q.powf(1.0 / p);

    // test2: Σ_{2^k ≤ ℓ} (2^k/εℓ) ‖Q^B_{εℓ} P^B_{2^k} w_Q‖_p / |Q|^{1/p}
    let mut test2 = 0.0;
    for k in big_grid.levels() {
        if k > q.level {
            continue;
        }
        let tk = 2.0f64.powi(k);
        let rs_k = resolvent_at(tk)?;
        let pk = rs_k.apply_p(&w_q)?;
        let qe = rs.apply_q(&pk)?;
        test2 += (tk / t_eps) * qe.lp_norm(p);
    }
    let test2_ratio = test2 / vol_q.powf(1.0 / p);

    // ⟨f⟩_Q − w in C^N
    let mut avg = vec![C64::new(0.0, 0.0); 1 + n];
    let mut count = 0usize;
    for cell in q.cells(&grid_scalar) {
        for comp in 0..1 + n {
            avg[comp] += f_q.data[cell * (1 + n) + comp];
        }
        count += 1;
    }
    let mut dev = 0.0f64;
    let mut w_full = vec![C64::new(0.0, 0.0); 1 + n];
    for axis in 0..n {
        w_full[1 + axis] = w_vec[axis];
    }
    for comp in 0..1 + n {
        avg[comp] /= count as f64;
        dev += (avg[comp] - w_full[comp]).norm_sqr();
    }
    let close_to_av = dev.sqrt();

    Ok(TestFunctionBundle {
        cube: q,
        w: w_full,
        epsilon,
        w_q,
        f_q,
        c_w,
        range_distance,
        test1_ratio,
        test2_ratio,
        close_to_av,
    })
}

/// Relative spectral distance of a vector field from the curl-free
/// (gradient) fields.
fn gradient_range_distance(field: &GridFunction, n: usize, j: u32) -> Result<f64> {
    if n == 1 {
        return Ok(0.0);
    }
    // project ĝ(ξ) onto ξ(ξ·ĝ)/|ξ|² and measure the residual, both through
    // multiplier applications
    let proj = MultiplierSymbol::from_fn(n, j, n, n, |xi| {
        let w2 = crate::operators::wavenumber_sq(xi);
        let mut m = nalgebra::DMatrix::from_element(n, n, C64::new(0.0, 0.0));
        if w2 == 0.0 {
            return m;
        }
        for r in 0..n {
            for c in 0..n {
                let wr = 2.0 * std::f64::consts::PI * xi[r] as f64;
                let wc = 2.0 * std::f64::consts::PI * xi[c] as f64;
                m[(r, c)] = C64::new(wr * wc / w2, 0.0);
            }
        }
        m
    });
    let projected = proj.apply(field)?;
    let resid = field.sub(&projected);
    let denom = field.lp_norm(2.0).max(1e-300);
    Ok(resid.lp_norm(2.0) / denom)
}

/// Regression slope of log|⟨f_Q^w⟩_Q − w| against log ε over an ε-sweep.
pub fn test_function_sweep(
    ops: &HodgeDiracOperators,
    resolvent_at: &dyn Fn(f64) -> Result<ResolventSet>,
    q: DyadicCube,
    w_vec: &[C64],
    epsilons: &[f64],
    p: f64,
) -> Result<(Vec<(f64, f64)>, f64)> {
    let mut pts = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let bundle = test_functions(ops, resolvent_at, q, w_vec, eps, p)?;
        pts.push((eps, bundle.close_to_av));
    }
    let xs: Vec<f64> = pts.iter().map(|(e, _)| e.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|(_, d)| d.max(1e-300).ln()).collect();
    let nn = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / nn;
    let my = ys.iter().sum::<f64>() / nn;
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = cov / var;
    Ok((pts, slope))
}

/// Fitted constant of the averaging inequality
/// |⟨Γu⟩_Q|^p ≤ C ℓ(Q)^{1−p} (⨍_Q|u|^p)^{1/p'} (⨍_Q|Γu|^p)^{1/p} for
/// Γ = d/dx on scalar one-dimensional functions.
pub fn lp56_constant(u: &GridFunction, p: f64) -> Result<f64> {
    if u.grid.n != 1 || u.grid.cell_len() != 1 {
        return Err(Error::shape(
            "lp56_constant expects scalar functions in one dimension",
        ));
    }
    let grid = u.grid;
    let du = MultiplierSymbol::gradient(1, grid.j).apply(u)?;
    let pp = p / (p - 1.0);
    let mut worst: f64 = 0.0;
    for k in grid.levels() {
        let ell = 2.0f64.powi(k);
        for cube_flat in 0..grid.cubes_at_level(k) {
            let cube = DyadicCube::from_flat(&grid, k, cube_flat);
            let mut avg_du = C64::new(0.0, 0.0);
            let mut mean_up = 0.0;
            let mut mean_dup = 0.0;
            let mut count = 0usize;
            for cell in cube.cells(&grid) {
                avg_du += du.data[cell];
                mean_up += u.data[cell].norm().powf(p);
                mean_dup += du.data[cell].norm().powf(p);
                count += 1;
            }
            let cf = count as f64;
            avg_du /= cf;
            mean_up /= cf;
            mean_dup /= cf;
            let lhs = avg_du.norm().powf(p);
            let rhs = ell.powf(1.0 - p) * mean_up.powf(1.0 / pp) * mean_dup.powf(1.0 / p);
            if rhs > 1e-300 {
                worst = worst.max(lhs / rhs);
            }
        }
    }
    Ok(worst)
}
