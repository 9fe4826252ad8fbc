//! Periodic dyadic grid on the unit cube: cubes, conditional expectations,
//! the Haar system, dyadic and lattice maximal functions, and L^p / BMO
//! norms of grid functions.
//!
//! Scales run over k ∈ [−J, 0]: cubes at level k have side 2^k, level 0 is
//! the unit cube, level −J the finest cells. Grid functions are piecewise
//! constant on finest cells and carry `n_comp` components, each a vector in
//! the underlying Banach space X. For n = 2 the flat cell index is
//! `iy * 2^J + ix` (x fastest).

use crate::error::{Error, Result};
use crate::rng::RandomSource;
use crate::space::{gaussian_product_norm, Randomizable, SpaceDescriptor, Vector};
use crate::C64;
use rand::Rng;
use rand_distr::StandardNormal;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};

/// Fixed source for the Monte Carlo fallback of the X^N tuple norm, so that
/// norms of non-Hilbert multi-component functions are deterministic.
const TUPLE_NORM_SEED: u64 = 0x7C3A_11E5_0DA9_42B1;

/// Default Monte Carlo budget for the non-Hilbert tuple norm.
pub const TUPLE_NORM_BUDGET: u64 = 512;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    /// Spatial dimension, 1 or 2.
    pub n: usize,
    /// Depth: finest cells have side 2^{−J}.
    pub j: u32,
    /// Number of X-valued components (the N of X^N).
    pub n_comp: usize,
    /// Coordinate Banach space X.
    pub space: SpaceDescriptor,
}

impl Grid {
    pub fn new(n: usize, j: u32, n_comp: usize, space: SpaceDescriptor) -> Result<Self> {
        if n != 1 && n != 2 {
            return Err(Error::invalid(format!(
                "spatial dimension {n} not supported (1 or 2)"
            )));
        }
        if n_comp == 0 {
            return Err(Error::invalid("component count must be positive"));
        }
        if (n as u32) * j > 26 {
            return Err(Error::Resource(format!(
                "grid 2^{} cells is too large",
                n as u32 * j
            )));
        }
        Ok(Grid {
            n,
            j,
            n_comp,
            space,
        })
    }

    /// Cells per axis, 2^J.
    pub fn side(&self) -> usize {
        1 << self.j
    }

    /// Total number of finest cells, 2^{nJ}.
    pub fn cells(&self) -> usize {
        1 << (self.n as u32 * self.j)
    }

    /// Complex entries per cell.
    pub fn cell_len(&self) -> usize {
        self.n_comp * self.space.dim()
    }

    pub fn cell_coords(&self, cell: usize) -> [usize; 2] {
        if self.n == 1 {
            [cell, 0]
        } else {
            [cell % self.side(), cell / self.side()]
        }
    }

    pub fn cell_index(&self, coords: [usize; 2]) -> usize {
        if self.n == 1 {
            coords[0]
        } else {
            coords[1] * self.side() + coords[0]
        }
    }

    /// Center of a finest cell, in [0,1)^n.
    pub fn cell_center(&self, cell: usize) -> [f64; 2] {
        let c = self.cell_coords(cell);
        let h = 1.0 / self.side() as f64;
        [(c[0] as f64 + 0.5) * h, (c[1] as f64 + 0.5) * h]
    }

    /// Levels k = −J..=0.
    pub fn levels(&self) -> impl Iterator<Item = i32> {
        -(self.j as i32)..=0
    }

    /// Number of cubes per axis at level k.
    pub fn cubes_per_axis(&self, k: i32) -> usize {
        1 << (-k) as u32
    }

    /// Total cubes at level k.
    pub fn cubes_at_level(&self, k: i32) -> usize {
        1 << (self.n as u32 * (-k) as u32)
    }

    /// Cube (flat index at level k) containing a finest cell.
    pub fn cube_of_cell(&self, cell: usize, k: i32) -> usize {
        let shift = (self.j as i32 + k) as u32; // cube side in cells = 2^shift
        let c = self.cell_coords(cell);
        let cx = c[0] >> shift;
        if self.n == 1 {
            cx
        } else {
            (c[1] >> shift) * self.cubes_per_axis(k) + cx
        }
    }

    pub fn check_level(&self, k: i32) -> Result<()> {
        if k < -(self.j as i32) || k > 0 {
            return Err(Error::invalid(format!(
                "scale {k} outside [-{}, 0]",
                self.j
            )));
        }
        Ok(())
    }
}

/// A dyadic cube: level k ∈ [−J, 0] and per-axis index in [0, 2^{−k}).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DyadicCube {
    pub level: i32,
    pub index: [usize; 2],
}

impl DyadicCube {
    pub fn parent(&self) -> DyadicCube {
        DyadicCube {
            level: self.level + 1,
            index: [self.index[0] / 2, self.index[1] / 2],
        }
    }

    pub fn side(&self) -> f64 {
        (2.0f64).powi(self.level)
    }

    /// Volume 2^{nk}.
    pub fn volume(&self, n: usize) -> f64 {
        self.side().powi(n as i32)
    }

    pub fn flat(&self, grid: &Grid) -> usize {
        if grid.n == 1 {
            self.index[0]
        } else {
            self.index[1] * grid.cubes_per_axis(self.level) + self.index[0]
        }
    }

    pub fn from_flat(grid: &Grid, level: i32, flat: usize) -> DyadicCube {
        if grid.n == 1 {
            DyadicCube {
                level,
                index: [flat, 0],
            }
        } else {
            let per = grid.cubes_per_axis(level);
            DyadicCube {
                level,
                index: [flat % per, flat / per],
            }
        }
    }

    /// Finest cells covered by this cube.
    pub fn cells<'a>(&self, grid: &'a Grid) -> impl Iterator<Item = usize> + 'a {
        let shift = (grid.j as i32 + self.level) as u32;
        let s = 1usize << shift;
        let x0 = self.index[0] * s;
        let y0 = self.index[1] * s;
        let n = grid.n;
        let grid = *grid;
        (0..if n == 1 { s } else { s * s }).map(move |i| {
            if n == 1 {
                x0 + i
            } else {
                grid.cell_index([x0 + i % s, y0 + i / s])
            }
        })
    }

    pub fn contains_cell(&self, grid: &Grid, cell: usize) -> bool {
        grid.cube_of_cell(cell, self.level) == self.flat(grid)
    }
}

/// An X^N-valued function sampled on the grid, piecewise constant on finest
/// cells. Layout: `data[(cell * n_comp + comp) * dim + coord]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub grid: Grid,
    pub data: Vec<C64>,
}

impl GridFunction {
    pub fn zero(grid: Grid) -> Self {
        let len = grid.cells() * grid.cell_len();
        GridFunction {
            grid,
            data: vec![C64::new(0.0, 0.0); len],
        }
    }

    pub fn from_data(grid: Grid, data: Vec<C64>) -> Result<Self> {
        if data.len() != grid.cells() * grid.cell_len() {
            return Err(Error::shape(format!(
                "data length {} does not match grid ({} cells x {} entries)",
                data.len(),
                grid.cells(),
                grid.cell_len()
            )));
        }
        Ok(GridFunction { grid, data })
    }

    /// Constant function with the given per-component vectors.
    pub fn constant(grid: Grid, value: &[C64]) -> Result<Self> {
        if value.len() != grid.cell_len() {
            return Err(Error::shape(
                "constant value length must equal n_comp * dim",
            ));
        }
        let mut f = GridFunction::zero(grid);
        for cell in 0..grid.cells() {
            let o = cell * grid.cell_len();
            f.data[o..o + grid.cell_len()].copy_from_slice(value);
        }
        Ok(f)
    }

    /// Scalar-valued constructor from cell values (requires scalar X, one
    /// component).
    pub fn from_scalar_fn(grid: Grid, f: impl Fn(usize) -> C64) -> Result<Self> {
        if grid.cell_len() != 1 {
            return Err(Error::shape(
                "from_scalar_fn needs n_comp = 1 and dim(X) = 1",
            ));
        }
        Ok(GridFunction {
            grid,
            data: (0..grid.cells()).map(f).collect(),
        })
    }

    pub fn at(&self, cell: usize, comp: usize, coord: usize) -> C64 {
        self.data[(cell * self.grid.n_comp + comp) * self.grid.space.dim() + coord]
    }

    pub fn at_mut(&mut self, cell: usize, comp: usize, coord: usize) -> &mut C64 {
        &mut self.data[(cell * self.grid.n_comp + comp) * self.grid.space.dim() + coord]
    }

    pub fn cell_slice(&self, cell: usize) -> &[C64] {
        let l = self.grid.cell_len();
        &self.data[cell * l..(cell + 1) * l]
    }

    /// The component vector at a cell as a space [`Vector`].
    pub fn vector_at(&self, cell: usize, comp: usize) -> Vector {
        let d = self.grid.space.dim();
        let o = (cell * self.grid.n_comp + comp) * d;
        Vector {
            space: self.grid.space,
            data: self.data[o..o + d].to_vec(),
        }
    }

    pub fn scaled(&self, c: C64) -> GridFunction {
        GridFunction {
            grid: self.grid,
            data: self.data.iter().map(|z| z * c).collect(),
        }
    }

    pub fn add(&self, other: &GridFunction) -> GridFunction {
        assert_eq!(self.grid, other.grid, "grid mismatch");
        GridFunction {
            grid: self.grid,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &GridFunction) -> GridFunction {
        self.add(&other.scaled(C64::new(-1.0, 0.0)))
    }

    /// Restrict to a component range (new function with fewer components).
    pub fn select_components(&self, range: std::ops::Range<usize>) -> GridFunction {
        let dim = self.grid.space.dim();
        let ncomp = range.len();
        let grid = Grid {
            n_comp: ncomp,
            ..self.grid
        };
        let mut data = Vec::with_capacity(grid.cells() * ncomp * dim);
        for cell in 0..self.grid.cells() {
            for comp in range.clone() {
                let o = (cell * self.grid.n_comp + comp) * dim;
                data.extend_from_slice(&self.data[o..o + dim]);
            }
        }
        GridFunction { grid, data }
    }

    /// Stack component blocks of two functions on the same (n, J, space).
    pub fn concat_components(&self, other: &GridFunction) -> GridFunction {
        assert_eq!(self.grid.n, other.grid.n);
        assert_eq!(self.grid.j, other.grid.j);
        assert_eq!(self.grid.space, other.grid.space);
        let dim = self.grid.space.dim();
        let grid = Grid {
            n_comp: self.grid.n_comp + other.grid.n_comp,
            ..self.grid
        };
        let mut data = Vec::with_capacity(grid.cells() * grid.cell_len());
        for cell in 0..grid.cells() {
            let o1 = cell * self.grid.n_comp * dim;
            let o2 = cell * other.grid.n_comp * dim;
            data.extend_from_slice(&self.data[o1..o1 + self.grid.n_comp * dim]);
            data.extend_from_slice(&other.data[o2..o2 + other.grid.n_comp * dim]);
        }
        GridFunction { grid, data }
    }

    /// Coordinatewise complex Gaussian sample.
    pub fn random_gaussian(grid: Grid, rng: &mut impl Rng) -> GridFunction {
        let len = grid.cells() * grid.cell_len();
        let data = (0..len)
            .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        GridFunction { grid, data }
    }

    /// Random band-limited sample: Gaussian Fourier coefficients on modes
    /// |ξ_i| ≤ max_mode damped by (1 + |ξ|)^{−decay}, synthesized at cell
    /// centers. Smooth fuzz for checks that are boundary-sensitive at the
    /// grid scale.
    pub fn random_smooth(
        grid: Grid,
        max_mode: i64,
        decay: f64,
        rng: &mut impl Rng,
    ) -> GridFunction {
        let cl = grid.cell_len();
        let mut f = GridFunction::zero(grid);
        let modes: Vec<[i64; 2]> = if grid.n == 1 {
            (-max_mode..=max_mode).map(|k| [k, 0]).collect()
        } else {
            let mut v = Vec::new();
            for ky in -max_mode..=max_mode {
                for kx in -max_mode..=max_mode {
                    v.push([kx, ky]);
                }
            }
            v
        };
        for m in modes {
            let amp = (1.0 + ((m[0] * m[0] + m[1] * m[1]) as f64).sqrt()).powf(-decay);
            for e in 0..cl {
                let coeff = C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)) * amp;
                for cell in 0..grid.cells() {
                    let x = grid.cell_center(cell);
                    let phase =
                        2.0 * std::f64::consts::PI * (m[0] as f64 * x[0] + m[1] as f64 * x[1]);
                    f.data[cell * cl + e] += coeff * C64::new(phase.cos(), phase.sin());
                }
            }
        }
        f
    }

    /// X^N tuple norm of the value at one cell: plain X-norm for a single
    /// component, the Gaussian product norm for tuples (exact on Hilbert
    /// spaces, fixed-seed Monte Carlo otherwise).
    pub fn value_norm(&self, cell: usize) -> f64 {
        let dim = self.grid.space.dim();
        if self.grid.n_comp == 1 {
            return self
                .grid
                .space
                .norm_slice(self.cell_slice(cell))
                .expect("shape ok");
        }
        if self.grid.space.is_hilbert() {
            let s: f64 = self.cell_slice(cell).iter().map(|z| z.norm_sqr()).sum();
            return s.sqrt();
        }
        let tuple: Vec<Vector> = (0..self.grid.n_comp)
            .map(|c| {
                let o = (cell * self.grid.n_comp + c) * dim;
                Vector {
                    space: self.grid.space,
                    data: self.data[o..o + dim].to_vec(),
                }
            })
            .collect();
        let src = RandomSource::new(TUPLE_NORM_SEED).substream(cell as u64);
        gaussian_product_norm(&self.grid.space, &tuple, TUPLE_NORM_BUDGET, &src).expect("shape ok")
    }

    /// Discrete L^p norm (Σ_cells 2^{−nJ} ‖u(cell)‖^p)^{1/p}.
    pub fn lp_norm(&self, p: f64) -> f64 {
        let vol = 1.0 / self.grid.cells() as f64;
        let sum: f64 = (0..self.grid.cells())
            .map(|c| self.value_norm(c).powf(p) * vol)
            .sum();
        sum.powf(1.0 / p)
    }

    pub fn linf_norm(&self) -> f64 {
        (0..self.grid.cells())
            .map(|c| self.value_norm(c))
            .fold(0.0, f64::max)
    }
}

impl Randomizable for GridFunction {
    fn combine(coeffs: &[f64], xs: &[Self]) -> Self {
        let mut out = GridFunction::zero(xs[0].grid);
        for (c, x) in coeffs.iter().zip(xs) {
            for (o, v) in out.data.iter_mut().zip(&x.data) {
                *o += v * *c;
            }
        }
        out
    }
}

/// Per-level cube averages of a grid function; level index `J + k` runs from
/// the finest cells (0) to the unit cube (J).
pub struct AveragePyramid {
    pub grid: Grid,
    levels: Vec<Vec<C64>>,
}

impl AveragePyramid {
    pub fn build(u: &GridFunction) -> AveragePyramid {
        let grid = u.grid;
        let cl = grid.cell_len();
        let mut levels: Vec<Vec<C64>> = Vec::with_capacity(grid.j as usize + 1);
        levels.push(u.data.clone()); // level -J: cube = cell
        for d in 1..=grid.j {
            let k = d as i32 - grid.j as i32;
            let cubes = grid.cubes_at_level(k);
            let per_axis = grid.cubes_per_axis(k);
            let prev = &levels[d as usize - 1];
            let prev_per_axis = grid.cubes_per_axis(k - 1);
            let mut cur = vec![C64::new(0.0, 0.0); cubes * cl];
            let child_count = 1 << grid.n; // 2^n children
            for cube in 0..cubes {
                let (cx, cy) = if grid.n == 1 {
                    (cube, 0)
                } else {
                    (cube % per_axis, cube / per_axis)
                };
                for child in 0..child_count {
                    let (dx, dy) = (child & 1, (child >> 1) & 1);
                    let cf = if grid.n == 1 {
                        2 * cx + dx
                    } else {
                        (2 * cy + dy) * prev_per_axis + 2 * cx + dx
                    };
                    for e in 0..cl {
                        cur[cube * cl + e] += prev[cf * cl + e];
                    }
                }
                let scale = 1.0 / child_count as f64;
                for e in 0..cl {
                    cur[cube * cl + e] *= scale;
                }
            }
            levels.push(cur);
        }
        AveragePyramid { grid, levels }
    }

    /// Raw per-entry average over the cube at level k containing `cell`.
    pub fn value(&self, k: i32, cell: usize, entry: usize) -> C64 {
        let cube = self.grid.cube_of_cell(cell, k);
        self.levels[(self.grid.j as i32 + k) as usize][cube * self.grid.cell_len() + entry]
    }

    pub fn cube_slice(&self, k: i32, cube_flat: usize) -> &[C64] {
        let cl = self.grid.cell_len();
        &self.levels[(self.grid.j as i32 + k) as usize][cube_flat * cl..(cube_flat + 1) * cl]
    }

    /// Average over the level-k ancestor of `cell` as a component vector.
    pub fn vector_at(&self, k: i32, cell: usize, comp: usize) -> Vector {
        let cube = self.grid.cube_of_cell(cell, k);
        let d = self.grid.space.dim();
        let o = (cube * self.grid.n_comp + comp) * d;
        let lev = &self.levels[(self.grid.j as i32 + k) as usize];
        Vector {
            space: self.grid.space,
            data: lev[o..o + d].to_vec(),
        }
    }
}

/// A_{2^k} u: the conditional expectation onto cubes of side 2^k.
pub fn conditional_expectation(u: &GridFunction, k: i32) -> Result<GridFunction> {
    u.grid.check_level(k)?;
    let pyramid = AveragePyramid::build(u);
    Ok(broadcast_level(&pyramid, k))
}

fn broadcast_level(pyramid: &AveragePyramid, k: i32) -> GridFunction {
    let grid = pyramid.grid;
    let cl = grid.cell_len();
    let mut out = GridFunction::zero(grid);
    for cell in 0..grid.cells() {
        let cube = grid.cube_of_cell(cell, k);
        let src = pyramid.cube_slice(k, cube);
        out.data[cell * cl..(cell + 1) * cl].copy_from_slice(src);
    }
    out
}

/// Haar coefficients: for each cube Q at levels 0 ≥ k > −J and each sign
/// pattern η ∈ {0,1}^n \ {0}, the coefficient ⟨u, h_Q^η⟩/|Q| (normalization
/// |h_Q^η| = 1_Q, value +1 on the lower half per active axis). Together with
/// the global mean these determine u exactly.
pub struct HaarCoefficients {
    pub grid: Grid,
    pub mean: Vec<C64>,
    /// levels[d] for cube level k = −d: cube-major × η-major × entry, with η
    /// running over 1..2^n.
    pub levels: Vec<Vec<C64>>,
}

impl HaarCoefficients {
    pub fn eta_count(n: usize) -> usize {
        (1 << n) - 1
    }

    /// Coefficient block for (Q, η): η ∈ [1, 2^n).
    pub fn coeff(&self, q: &DyadicCube, eta: usize, grid: &Grid) -> &[C64] {
        let d = (-q.level) as usize;
        let cl = grid.cell_len();
        let ec = Self::eta_count(grid.n);
        let cube = q.flat(grid);
        let o = (cube * ec + (eta - 1)) * cl;
        &self.levels[d][o..o + cl]
    }
}

fn eta_sign(n: usize, eta: usize, child: usize) -> f64 {
    // child bits: per-axis half (0 = lower, 1 = upper); η bits mark the
    // oscillating axes. Lower half carries +1.
    let mut s = 1.0;
    for axis in 0..n {
        if (eta >> axis) & 1 == 1 && (child >> axis) & 1 == 1 {
            s = -s;
        }
    }
    s
}

/// Haar analysis of u. Exact inverse of [`haar_reconstruct`].
pub fn haar_decompose(u: &GridFunction) -> HaarCoefficients {
    let grid = u.grid;
    let cl = grid.cell_len();
    let ec = HaarCoefficients::eta_count(grid.n);
    let pyramid = AveragePyramid::build(u);
    let mut levels: Vec<Vec<C64>> = Vec::with_capacity(grid.j as usize + 1);
    levels.push(Vec::new()); // d = 0 (unit cube has no deeper parent block at level 1)
                             // Coefficients live on cubes at level k = -d for d = 0..J-1; we store by
                             // the cube level k itself: levels[d] holds cubes at level k = -d.
    let mut stored: Vec<Vec<C64>> = Vec::with_capacity(grid.j as usize);
    for d in 0..grid.j as usize {
        let k = -(d as i32); // cube level; children at k-1
        let cubes = grid.cubes_at_level(k);
        let per_axis = grid.cubes_per_axis(k);
        let child_per_axis = grid.cubes_per_axis(k - 1);
        let mut coeffs = vec![C64::new(0.0, 0.0); cubes * ec * cl];
        let child_count = 1 << grid.n;
        for cube in 0..cubes {
            let (cx, cy) = if grid.n == 1 {
                (cube, 0)
            } else {
                (cube % per_axis, cube / per_axis)
            };
            for eta in 1..=ec {
                for child in 0..child_count {
                    let (dx, dy) = (child & 1, (child >> 1) & 1);
                    let cf = if grid.n == 1 {
                        2 * cx + dx
                    } else {
                        (2 * cy + dy) * child_per_axis + 2 * cx + dx
                    };
                    let s = eta_sign(grid.n, eta, child) / child_count as f64;
                    let src = pyramid.cube_slice(k - 1, cf);
                    let o = (cube * ec + (eta - 1)) * cl;
                    for e in 0..cl {
                        coeffs[o + e] += src[e] * s;
                    }
                }
            }
        }
        stored.push(coeffs);
    }
    let mean = pyramid.cube_slice(0, 0).to_vec();
    HaarCoefficients {
        grid,
        mean,
        levels: stored,
    }
}

/// Exact synthesis from Haar coefficients and the global mean.
pub fn haar_reconstruct(coeffs: &HaarCoefficients) -> GridFunction {
    let grid = coeffs.grid;
    let cl = grid.cell_len();
    let ec = HaarCoefficients::eta_count(grid.n);
    // Top-down: averages at level k-1 from averages at level k plus the
    // Haar increments of cubes at level k.
    let mut cur = coeffs.mean.clone(); // averages at level 0
    for d in 0..grid.j as usize {
        let k = -(d as i32);
        let cubes = grid.cubes_at_level(k);
        let per_axis = grid.cubes_per_axis(k);
        let child_per_axis = grid.cubes_per_axis(k - 1);
        let child_cubes = grid.cubes_at_level(k - 1);
        let mut next = vec![C64::new(0.0, 0.0); child_cubes * cl];
        let child_count = 1 << grid.n;
        let level = &coeffs.levels[d];
        for cube in 0..cubes {
            let (cx, cy) = if grid.n == 1 {
                (cube, 0)
            } else {
                (cube % per_axis, cube / per_axis)
            };
            for child in 0..child_count {
                let (dx, dy) = (child & 1, (child >> 1) & 1);
                let cf = if grid.n == 1 {
                    2 * cx + dx
                } else {
                    (2 * cy + dy) * child_per_axis + 2 * cx + dx
                };
                for e in 0..cl {
                    let mut v = cur[cube * cl + e];
                    for eta in 1..=ec {
                        let s = eta_sign(grid.n, eta, child);
                        v += level[(cube * ec + (eta - 1)) * cl + e] * s;
                    }
                    next[cf * cl + e] = v;
                }
            }
        }
        cur = next;
    }
    GridFunction { grid, data: cur }
}

/// A single L^∞-normalized Haar function h_Q^η as a scalar grid function.
pub fn haar_function(grid: &Grid, q: &DyadicCube, eta: usize) -> Result<GridFunction> {
    if grid.cell_len() != 1 {
        return Err(Error::shape("haar_function builds scalar functions"));
    }
    if q.level <= -(grid.j as i32) || q.level > 0 {
        return Err(Error::invalid("haar cube level must be in (-J, 0]"));
    }
    let mut f = GridFunction::zero(*grid);
    let shift = (grid.j as i32 + q.level) as u32;
    for cell in q.cells(grid) {
        let c = grid.cell_coords(cell);
        let mut child = 0usize;
        if (c[0] >> (shift - 1)) & 1 == 1 {
            child |= 1;
        }
        if grid.n == 2 && (c[1] >> (shift - 1)) & 1 == 1 {
            child |= 2;
        }
        f.data[cell] = C64::new(eta_sign(grid.n, eta, child), 0.0);
    }
    Ok(f)
}

/// Dyadic maximal function M u(x) = max_k ‖⟨u⟩_{Q_k(x)}‖_{X^N}, returned as
/// a scalar grid function.
pub fn dyadic_maximal(u: &GridFunction) -> GridFunction {
    let grid = u.grid;
    let pyramid = AveragePyramid::build(u);
    let out_grid = Grid {
        n_comp: 1,
        space: SpaceDescriptor::scalar(),
        ..grid
    };
    let values = crate::par::map_indexed(grid.cells(), |cell| {
        let mut best: f64 = 0.0;
        for k in grid.levels() {
            let cube = grid.cube_of_cell(cell, k);
            let slice = pyramid.cube_slice(k, cube);
            let nrm = tuple_norm_of_slice(&grid, slice, cell);
            best = best.max(nrm);
        }
        C64::new(best, 0.0)
    });
    GridFunction {
        grid: out_grid,
        data: values,
    }
}

fn tuple_norm_of_slice(grid: &Grid, slice: &[C64], cell_for_seed: usize) -> f64 {
    let dim = grid.space.dim();
    if grid.n_comp == 1 {
        return grid.space.norm_slice(slice).expect("shape ok");
    }
    if grid.space.is_hilbert() {
        return slice.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    }
    let tuple: Vec<Vector> = (0..grid.n_comp)
        .map(|c| Vector {
            space: grid.space,
            data: slice[c * dim..(c + 1) * dim].to_vec(),
        })
        .collect();
    let src = RandomSource::new(TUPLE_NORM_SEED).substream(cell_for_seed as u64);
    gaussian_product_norm(&grid.space, &tuple, TUPLE_NORM_BUDGET, &src).expect("shape ok")
}

/// Lattice maximal function: sup over scales of |⟨u⟩_Q| coordinatewise; an
/// X-valued function (real nonnegative coordinates).
pub fn lattice_maximal(u: &GridFunction) -> Result<GridFunction> {
    if !u.grid.space.is_lattice() {
        return Err(Error::UnsupportedSpace(format!(
            "lattice maximal function needs a lattice, got {}",
            u.grid.space.label()
        )));
    }
    let grid = u.grid;
    let cl = grid.cell_len();
    let pyramid = AveragePyramid::build(u);
    let mut out = GridFunction::zero(grid);
    for cell in 0..grid.cells() {
        for k in grid.levels() {
            let cube = grid.cube_of_cell(cell, k);
            let slice = pyramid.cube_slice(k, cube);
            for e in 0..cl {
                let m = slice[e].norm();
                let cur = &mut out.data[cell * cl + e];
                if m > cur.re {
                    *cur = C64::new(m, 0.0);
                }
            }
        }
    }
    Ok(out)
}

/// Dyadic BMO norm: sup over cubes Q of the L¹ mean oscillation
/// ⨍_Q ‖u − ⟨u⟩_Q‖.
pub fn bmo_norm(u: &GridFunction) -> f64 {
    let grid = u.grid;
    let cl = grid.cell_len();
    let pyramid = AveragePyramid::build(u);
    let mut best: f64 = 0.0;
    for k in grid.levels() {
        for cube_flat in 0..grid.cubes_at_level(k) {
            let avg = pyramid.cube_slice(k, cube_flat).to_vec();
            let cube = DyadicCube::from_flat(&grid, k, cube_flat);
            let mut acc = 0.0;
            let mut count = 0usize;
            let mut diff = vec![C64::new(0.0, 0.0); cl];
            for cell in cube.cells(&grid) {
                let s = u.cell_slice(cell);
                for e in 0..cl {
                    diff[e] = s[e] - avg[e];
                }
                acc += tuple_norm_of_slice(&grid, &diff, cell);
                count += 1;
            }
            best = best.max(acc / count as f64);
        }
    }
    best
}

// ---------------------------------------------------------------------------
// File formats: CSV (cell, component, coordinate, re, im) and a little-endian
// binary with a fixed header. Both round-trip exactly.

const BINARY_MAGIC: &[u8; 8] = b"RMLGFN1\0";

fn space_tag(space: &SpaceDescriptor) -> (u8, f64, u32) {
    match space.kind {
        crate::space::SpaceKind::LebesgueQ { q, d } => (0, q, d as u32),
        crate::space::SpaceKind::Hilbert { d } => (1, 0.0, d as u32),
        crate::space::SpaceKind::SchattenQ { q, m } => (2, q, m as u32),
    }
}

fn space_from_tag(tag: u8, q: f64, dim: u32) -> Result<SpaceDescriptor> {
    match tag {
        0 => SpaceDescriptor::lebesgue(q, dim as usize),
        1 => SpaceDescriptor::hilbert(dim as usize),
        2 => SpaceDescriptor::schatten(q, dim as usize),
        _ => Err(Error::Format(format!("unknown space tag {tag}"))),
    }
}

/// CSV export with header `cell,component,coordinate,re,im`, rows ordered by
/// (cell, component, coordinate).
pub fn write_csv(u: &GridFunction, w: impl Write) -> Result<()> {
    let mut w = BufWriter::new(w);
    writeln!(w, "cell,component,coordinate,re,im")?;
    let dim = u.grid.space.dim();
    for cell in 0..u.grid.cells() {
        for comp in 0..u.grid.n_comp {
            for coord in 0..dim {
                let z = u.at(cell, comp, coord);
                writeln!(w, "{cell},{comp},{coord},{},{}", z.re, z.im)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// CSV import; the grid shape must be supplied (the format stores values
/// only).
pub fn read_csv(grid: Grid, r: impl Read) -> Result<GridFunction> {
    let mut u = GridFunction::zero(grid);
    let reader = BufReader::new(r);
    let mut seen = 0usize;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line.trim() != "cell,component,coordinate,re,im" {
                return Err(Error::Format("bad csv header".into()));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 5 {
            return Err(Error::Format(format!("bad csv row: {line}")));
        }
        let cell: usize = parts[0]
            .trim()
            .parse()
            .map_err(|_| Error::Format("bad cell".into()))?;
        let comp: usize = parts[1]
            .trim()
            .parse()
            .map_err(|_| Error::Format("bad component".into()))?;
        let coord: usize = parts[2]
            .trim()
            .parse()
            .map_err(|_| Error::Format("bad coordinate".into()))?;
        let re: f64 = parts[3]
            .trim()
            .parse()
            .map_err(|_| Error::Format("bad re".into()))?;
        let im: f64 = parts[4]
            .trim()
            .parse()
            .map_err(|_| Error::Format("bad im".into()))?;
        if cell >= grid.cells() || comp >= grid.n_comp || coord >= grid.space.dim() {
            return Err(Error::Format(format!("index out of range in row: {line}")));
        }
        *u.at_mut(cell, comp, coord) = C64::new(re, im);
        seen += 1;
    }
    if seen != grid.cells() * grid.cell_len() {
        return Err(Error::Format(format!(
            "csv has {seen} entries, expected {}",
            grid.cells() * grid.cell_len()
        )));
    }
    Ok(u)
}

/// Little-endian binary export: magic, header (n, J, n_comp, space), then
/// (re, im) f64 pairs in (cell, component, coordinate) order.
pub fn write_binary(u: &GridFunction, w: impl Write) -> Result<()> {
    let mut w = BufWriter::new(w);
    w.write_all(BINARY_MAGIC)?;
    let (tag, q, dim) = space_tag(&u.grid.space);
    w.write_all(&(u.grid.n as u32).to_le_bytes())?;
    w.write_all(&u.grid.j.to_le_bytes())?;
    w.write_all(&(u.grid.n_comp as u32).to_le_bytes())?;
    w.write_all(&[tag])?;
    w.write_all(&q.to_le_bytes())?;
    w.write_all(&dim.to_le_bytes())?;
    for z in &u.data {
        w.write_all(&z.re.to_le_bytes())?;
        w.write_all(&z.im.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_binary(mut r: impl Read) -> Result<GridFunction> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != BINARY_MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b4)?;
    let n = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b4)?;
    let j = u32::from_le_bytes(b4);
    r.read_exact(&mut b4)?;
    let n_comp = u32::from_le_bytes(b4) as usize;
    let mut tag = [0u8; 1];
    r.read_exact(&mut tag)?;
    r.read_exact(&mut b8)?;
    let q = f64::from_le_bytes(b8);
    r.read_exact(&mut b4)?;
    let dim = u32::from_le_bytes(b4);
    let space = space_from_tag(tag[0], q, dim)?;
    let grid = Grid::new(n, j, n_comp, space)?;
    let len = grid.cells() * grid.cell_len();
    let mut data = Vec::with_capacity(len);
    for _ in 0..len {
        r.read_exact(&mut b8)?;
        let re = f64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        let im = f64::from_le_bytes(b8);
        data.push(C64::new(re, im));
    }
    GridFunction::from_data(grid, data)
}
