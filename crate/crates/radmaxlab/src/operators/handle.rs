//! Composable linear operators on grid functions. A handle is a tree of
//! Fourier multipliers, pointwise matrix multiplications, 2×2 blocks, sums,
//! compositions, and resolvents. Resolvent nodes solve (I + itA)v = u by a
//! collapsed multiplier inverse when the tree is constant-coefficient, by a
//! cached dense LU below the unknown-count crossover, and by preconditioned
//! BiCGStab above it.

use super::symbol::MultiplierSymbol;
use crate::dyadic::{Grid, GridFunction};
use crate::error::{Error, Result};
use crate::C64;
use nalgebra::{DMatrix, DVector};
use std::sync::{Arc, OnceLock};

/// Matrix-valued grid function m(x) ∈ C^{rows×cols}, acting cellwise on the
/// component factor.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixField {
    pub n: usize,
    pub j: u32,
    pub rows: usize,
    pub cols: usize,
    /// cell-major, row-major per cell
    pub data: Vec<C64>,
}

impl MatrixField {
    pub fn cells(&self) -> usize {
        1 << (self.n as u32 * self.j)
    }

    pub fn from_fn(
        n: usize,
        j: u32,
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize) -> DMatrix<C64>,
    ) -> Self {
        let cells = 1usize << (n as u32 * j);
        let mut data = Vec::with_capacity(cells * rows * cols);
        for cell in 0..cells {
            let m = f(cell);
            debug_assert_eq!((m.nrows(), m.ncols()), (rows, cols));
            for r in 0..rows {
                for c in 0..cols {
                    data.push(m[(r, c)]);
                }
            }
        }
        MatrixField {
            n,
            j,
            rows,
            cols,
            data,
        }
    }

    pub fn constant(n: usize, j: u32, m: &DMatrix<C64>) -> Self {
        MatrixField::from_fn(n, j, m.nrows(), m.ncols(), |_| m.clone())
    }

    pub fn identity(n: usize, j: u32, comps: usize) -> Self {
        MatrixField::constant(n, j, &DMatrix::identity(comps, comps))
    }

    /// Scalar field as a diagonal matrix field on `comps` components.
    pub fn scalar_diag(n: usize, j: u32, comps: usize, values: &[C64]) -> Self {
        MatrixField::from_fn(n, j, comps, comps, |cell| {
            DMatrix::from_diagonal_element(comps, comps, values[cell])
        })
    }

    pub fn matrix_at(&self, cell: usize) -> DMatrix<C64> {
        let o = cell * self.rows * self.cols;
        DMatrix::from_row_slice(
            self.rows,
            self.cols,
            &self.data[o..o + self.rows * self.cols],
        )
    }

    /// Pointwise inverse; fails on a singular cell.
    pub fn inverse(&self) -> Result<MatrixField> {
        if self.rows != self.cols {
            return Err(Error::shape("pointwise inverse needs square matrices"));
        }
        let mut data = Vec::with_capacity(self.data.len());
        for cell in 0..self.cells() {
            let inv = self.matrix_at(cell).try_inverse().ok_or_else(|| {
                Error::invalid(format!("coefficient matrix singular at cell {cell}"))
            })?;
            for r in 0..self.rows {
                for c in 0..self.cols {
                    data.push(inv[(r, c)]);
                }
            }
        }
        Ok(MatrixField {
            data,
            ..self.clone()
        })
    }

    /// Largest pointwise operator norm (spectral norm per cell).
    pub fn linf_norm(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for cell in 0..self.cells() {
            let m = self.matrix_at(cell);
            let nrm = if self.rows == 1 && self.cols == 1 {
                m[(0, 0)].norm()
            } else {
                m.singular_values().max()
            };
            worst = worst.max(nrm);
        }
        worst
    }

    pub fn apply(&self, u: &GridFunction) -> Result<GridFunction> {
        if u.grid.n != self.n || u.grid.j != self.j {
            return Err(Error::shape("pointwise multiplier grid mismatch"));
        }
        if u.grid.n_comp != self.cols {
            return Err(Error::shape(format!(
                "pointwise multiplier expects {} components, function has {}",
                self.cols, u.grid.n_comp
            )));
        }
        let dim = u.grid.space.dim();
        let out_grid = Grid {
            n_comp: self.rows,
            ..u.grid
        };
        let mut out = vec![C64::new(0.0, 0.0); u.grid.cells() * self.rows * dim];
        for cell in 0..u.grid.cells() {
            let m = &self.data[cell * self.rows * self.cols..];
            for coord in 0..dim {
                for r in 0..self.rows {
                    let mut acc = C64::new(0.0, 0.0);
                    for c in 0..self.cols {
                        acc += m[r * self.cols + c] * u.data[(cell * self.cols + c) * dim + coord];
                    }
                    out[(cell * self.rows + r) * dim + coord] = acc;
                }
            }
        }
        GridFunction::from_data(out_grid, out)
    }

    /// Coefficient import: reinterpret a grid function with rows·cols
    /// scalar components (row-major) as a matrix field, so fields travel
    /// through the grid-function CSV/binary formats.
    pub fn from_grid_function(
        f: &crate::dyadic::GridFunction,
        rows: usize,
        cols: usize,
    ) -> crate::error::Result<Self> {
        if f.grid.n_comp != rows * cols || f.grid.space.dim() != 1 {
            return Err(Error::shape(
                "matrix field import needs rows*cols scalar components",
            ));
        }
        Ok(MatrixField {
            n: f.grid.n,
            j: f.grid.j,
            rows,
            cols,
            data: f.data.clone(),
        })
    }

    /// Inverse of [`MatrixField::from_grid_function`].
    pub fn to_grid_function(&self) -> crate::dyadic::GridFunction {
        let grid = Grid::new(
            self.n,
            self.j,
            self.rows * self.cols,
            crate::space::SpaceDescriptor::scalar(),
        )
        .expect("valid matrix field dims");
        crate::dyadic::GridFunction {
            grid,
            data: self.data.clone(),
        }
    }

    /// The common matrix when the field is constant in x.
    pub fn constant_matrix(&self) -> Option<DMatrix<C64>> {
        let first = self.matrix_at(0);
        let block = self.rows * self.cols;
        for cell in 1..self.cells() {
            for e in 0..block {
                if (self.data[cell * block + e] - self.data[e]).norm() > 0.0 {
                    return None;
                }
            }
        }
        Some(first)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResolventStyle {
    /// R_t = (I + itA)^{-1}
    R,
    /// P_t = (I + t²A²)^{-1}, realized as R_t R_{−t}
    P,
    /// Q_t = tA P_t
    Q,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOpts {
    /// Dense LU below this many unknowns (cells × components), iterative above.
    pub dense_crossover: usize,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SolverOpts {
    fn default() -> Self {
        SolverOpts {
            dense_crossover: 4096,
            tol: 1e-10,
            max_iters: 400,
        }
    }
}

pub struct ResolventNode {
    pub inner: OperatorHandle,
    pub t: f64,
    pub style: ResolventStyle,
    pub opts: SolverOpts,
    /// Optional constant-coefficient preconditioner symbol (the unperturbed
    /// operator); used by the iterative path as (I ± itΠ)^{-1}.
    pub precon: Option<Arc<MultiplierSymbol>>,
    lu_plus: OnceLock<Result<Arc<LuFactors>>>,
    lu_minus: OnceLock<Result<Arc<LuFactors>>>,
    collapsed_plus: OnceLock<Option<Arc<MultiplierSymbol>>>,
    collapsed_minus: OnceLock<Option<Arc<MultiplierSymbol>>>,
}

impl std::fmt::Debug for ResolventNode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ResolventNode")
            .field("t", &self.t)
            .field("style", &self.style)
            .finish()
    }
}

/// LU factors, rejected at construction when the U diagonal signals a
/// numerically singular system.
pub struct LuFactors {
    lu: nalgebra::linalg::LU<C64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl LuFactors {
    fn new(m: DMatrix<C64>) -> Result<LuFactors> {
        let n = m.nrows();
        let lu = m.lu();
        let mut dmin = f64::INFINITY;
        let mut dmax: f64 = 0.0;
        for i in 0..n {
            let d = lu.u()[(i, i)].norm();
            dmin = dmin.min(d);
            dmax = dmax.max(d);
        }
        let diag_ratio = if dmin > 0.0 {
            dmax / dmin
        } else {
            f64::INFINITY
        };
        if !diag_ratio.is_finite() || diag_ratio > 1e15 {
            return Err(Error::ResolventFailure(format!(
                "matrix numerically singular (diag ratio {diag_ratio:.3e})"
            )));
        }
        Ok(LuFactors { lu })
    }

    fn solve(&self, rhs: &DVector<C64>) -> Result<DVector<C64>> {
        self.lu
            .solve(rhs)
            .ok_or_else(|| Error::ResolventFailure("dense solve failed".into()))
    }
}

/// A composable linear operator on grid functions.
#[derive(Debug, Clone)]
pub enum OperatorHandle {
    Identity {
        comps: usize,
    },
    Zero {
        in_comps: usize,
        out_comps: usize,
    },
    Fourier(Arc<MultiplierSymbol>),
    Pointwise(Arc<MatrixField>),
    Block(Arc<BlockOp>),
    /// Right-to-left: Compose([A, B]) applies B first.
    Compose(Vec<OperatorHandle>),
    Add(Vec<OperatorHandle>),
    Scaled(C64, Box<OperatorHandle>),
    Resolvent(Arc<ResolventNode>),
}

#[derive(Debug)]
pub struct BlockOp {
    pub tl: OperatorHandle,
    pub tr: OperatorHandle,
    pub bl: OperatorHandle,
    pub br: OperatorHandle,
    pub split_in: usize,
    pub split_out: usize,
}

impl OperatorHandle {
    pub fn fourier(symbol: MultiplierSymbol) -> Self {
        OperatorHandle::Fourier(Arc::new(symbol))
    }

    pub fn pointwise(field: MatrixField) -> Self {
        OperatorHandle::Pointwise(Arc::new(field))
    }

    pub fn block(
        tl: OperatorHandle,
        tr: OperatorHandle,
        bl: OperatorHandle,
        br: OperatorHandle,
    ) -> Result<Self> {
        let split_in = tl.in_comps();
        let split_out = tl.out_comps();
        if tr.out_comps() != split_out || bl.in_comps() != split_in {
            return Err(Error::shape("block operator shape mismatch"));
        }
        if tr.in_comps() != br.in_comps() || bl.out_comps() != br.out_comps() {
            return Err(Error::shape("block operator shape mismatch"));
        }
        Ok(OperatorHandle::Block(Arc::new(BlockOp {
            tl,
            tr,
            bl,
            br,
            split_in,
            split_out,
        })))
    }

    pub fn compose(ops: Vec<OperatorHandle>) -> Result<Self> {
        for w in ops.windows(2) {
            if w[0].in_comps() != w[1].out_comps() {
                return Err(Error::shape("composition component mismatch"));
            }
        }
        Ok(OperatorHandle::Compose(ops))
    }

    pub fn add(ops: Vec<OperatorHandle>) -> Result<Self> {
        for w in ops.windows(2) {
            if w[0].in_comps() != w[1].in_comps() || w[0].out_comps() != w[1].out_comps() {
                return Err(Error::shape("sum component mismatch"));
            }
        }
        Ok(OperatorHandle::Add(ops))
    }

    pub fn scaled(c: C64, op: OperatorHandle) -> Self {
        OperatorHandle::Scaled(c, Box::new(op))
    }

    pub fn resolvent(inner: OperatorHandle, t: f64, style: ResolventStyle) -> Result<Self> {
        Self::resolvent_with(inner, t, style, SolverOpts::default(), None)
    }

    pub fn resolvent_with(
        inner: OperatorHandle,
        t: f64,
        style: ResolventStyle,
        opts: SolverOpts,
        precon: Option<Arc<MultiplierSymbol>>,
    ) -> Result<Self> {
        if inner.in_comps() != inner.out_comps() {
            return Err(Error::shape("resolvent needs a square operator"));
        }
        Ok(OperatorHandle::Resolvent(Arc::new(ResolventNode {
            inner,
            t,
            style,
            opts,
            precon,
            lu_plus: OnceLock::new(),
            lu_minus: OnceLock::new(),
            collapsed_plus: OnceLock::new(),
            collapsed_minus: OnceLock::new(),
        })))
    }

    pub fn in_comps(&self) -> usize {
        match self {
            OperatorHandle::Identity { comps } => *comps,
            OperatorHandle::Zero { in_comps, .. } => *in_comps,
            OperatorHandle::Fourier(s) => s.in_comps,
            OperatorHandle::Pointwise(m) => m.cols,
            OperatorHandle::Block(b) => b.split_in + b.tr.in_comps(),
            OperatorHandle::Compose(ops) => ops.last().map_or(0, |o| o.in_comps()),
            OperatorHandle::Add(ops) => ops.first().map_or(0, |o| o.in_comps()),
            OperatorHandle::Scaled(_, op) => op.in_comps(),
            OperatorHandle::Resolvent(r) => r.inner.in_comps(),
        }
    }

    pub fn out_comps(&self) -> usize {
        match self {
            OperatorHandle::Identity { comps } => *comps,
            OperatorHandle::Zero { out_comps, .. } => *out_comps,
            OperatorHandle::Fourier(s) => s.out_comps,
            OperatorHandle::Pointwise(m) => m.rows,
            OperatorHandle::Block(b) => b.split_out + b.bl.out_comps(),
            OperatorHandle::Compose(ops) => ops.first().map_or(0, |o| o.out_comps()),
            OperatorHandle::Add(ops) => ops.first().map_or(0, |o| o.out_comps()),
            OperatorHandle::Scaled(_, op) => op.out_comps(),
            OperatorHandle::Resolvent(r) => r.inner.out_comps(),
        }
    }

    /// Collapse a constant-coefficient tree to a single multiplier symbol.
    pub fn as_multiplier(&self, n: usize, j: u32) -> Option<MultiplierSymbol> {
        match self {
            OperatorHandle::Identity { comps } => Some(MultiplierSymbol::identity(n, j, *comps)),
            OperatorHandle::Zero {
                in_comps,
                out_comps,
            } => Some(MultiplierSymbol::from_fn(
                n,
                j,
                *in_comps,
                *out_comps,
                |_| DMatrix::from_element(*out_comps, *in_comps, C64::new(0.0, 0.0)),
            )),
            OperatorHandle::Fourier(s) => {
                if s.n == n && s.j == j {
                    Some((**s).clone())
                } else {
                    None
                }
            }
            OperatorHandle::Pointwise(m) => {
                let c = m.constant_matrix()?;
                Some(MultiplierSymbol::from_fn(n, j, m.cols, m.rows, |_| {
                    c.clone()
                }))
            }
            OperatorHandle::Block(b) => {
                let tl = b.tl.as_multiplier(n, j)?;
                let tr = b.tr.as_multiplier(n, j)?;
                let bl = b.bl.as_multiplier(n, j)?;
                let br = b.br.as_multiplier(n, j)?;
                let in_c = tl.in_comps + tr.in_comps;
                let out_c = tl.out_comps + bl.out_comps;
                let side = 1usize << j;
                let bins = if n == 1 { side } else { side * side };
                let mut data = Vec::with_capacity(bins * in_c * out_c);
                for bin in 0..bins {
                    let (a, bm, c, d) = (
                        tl.matrix_at(bin),
                        tr.matrix_at(bin),
                        bl.matrix_at(bin),
                        br.matrix_at(bin),
                    );
                    for r in 0..out_c {
                        for cc in 0..in_c {
                            let v = match (r < tl.out_comps, cc < tl.in_comps) {
                                (true, true) => a[(r, cc)],
                                (true, false) => bm[(r, cc - tl.in_comps)],
                                (false, true) => c[(r - tl.out_comps, cc)],
                                (false, false) => d[(r - tl.out_comps, cc - tl.in_comps)],
                            };
                            data.push(v);
                        }
                    }
                }
                Some(MultiplierSymbol {
                    n,
                    j,
                    in_comps: in_c,
                    out_comps: out_c,
                    data,
                })
            }
            OperatorHandle::Compose(ops) => {
                let mut acc: Option<MultiplierSymbol> = None;
                for op in ops.iter().rev() {
                    let s = op.as_multiplier(n, j)?;
                    acc = Some(match acc {
                        None => s,
                        Some(prev) => s.compose(&prev).ok()?,
                    });
                }
                acc
            }
            OperatorHandle::Add(ops) => {
                let mut acc: Option<MultiplierSymbol> = None;
                for op in ops {
                    let s = op.as_multiplier(n, j)?;
                    acc = Some(match acc {
                        None => s,
                        Some(prev) => prev.add(&s).ok()?,
                    });
                }
                acc
            }
            OperatorHandle::Scaled(c, op) => Some(op.as_multiplier(n, j)?.scaled(*c)),
            OperatorHandle::Resolvent(r) => {
                let inner = r.inner.as_multiplier(n, j)?;
                match r.style {
                    ResolventStyle::R => inner.resolvent_r(r.t),
                    ResolventStyle::P => {
                        let a = inner.resolvent_r(r.t)?;
                        let b = inner.resolvent_r(-r.t)?;
                        a.compose(&b).ok()
                    }
                    ResolventStyle::Q => {
                        let a = inner.resolvent_r(r.t)?;
                        let b = inner.resolvent_r(-r.t)?;
                        let p = a.compose(&b).ok()?;
                        Some(inner.compose(&p).ok()?.scaled(C64::new(r.t, 0.0)))
                    }
                }
            }
        }
    }
}

/// Apply an operator handle to a grid function.
pub fn apply(op: &OperatorHandle, u: &GridFunction) -> Result<GridFunction> {
    match op {
        OperatorHandle::Identity { comps } => {
            if u.grid.n_comp != *comps {
                return Err(Error::shape("identity component mismatch"));
            }
            Ok(u.clone())
        }
        OperatorHandle::Zero {
            in_comps,
            out_comps,
        } => {
            if u.grid.n_comp != *in_comps {
                return Err(Error::shape("zero operator component mismatch"));
            }
            Ok(GridFunction::zero(Grid {
                n_comp: *out_comps,
                ..u.grid
            }))
        }
        OperatorHandle::Fourier(s) => s.apply(u),
        OperatorHandle::Pointwise(m) => m.apply(u),
        OperatorHandle::Block(b) => {
            if u.grid.n_comp != b.split_in + b.tr.in_comps() {
                return Err(Error::shape("block component mismatch"));
            }
            let u1 = u.select_components(0..b.split_in);
            let u2 = u.select_components(b.split_in..u.grid.n_comp);
            let top = apply(&b.tl, &u1)?.add(&apply(&b.tr, &u2)?);
            let bottom = apply(&b.bl, &u1)?.add(&apply(&b.br, &u2)?);
            Ok(top.concat_components(&bottom))
        }
        OperatorHandle::Compose(ops) => {
            let mut cur = u.clone();
            for op in ops.iter().rev() {
                cur = apply(op, &cur)?;
            }
            Ok(cur)
        }
        OperatorHandle::Add(ops) => {
            if ops.is_empty() {
                return Err(Error::invalid("empty operator sum"));
            }
            let mut acc = apply(&ops[0], u)?;
            for op in &ops[1..] {
                acc = acc.add(&apply(op, u)?);
            }
            Ok(acc)
        }
        OperatorHandle::Scaled(c, inner) => Ok(apply(inner, u)?.scaled(*c)),
        OperatorHandle::Resolvent(node) => apply_resolvent(node, u),
    }
}

fn apply_resolvent(node: &ResolventNode, u: &GridFunction) -> Result<GridFunction> {
    match node.style {
        ResolventStyle::R => solve_r(node, u, node.t),
        ResolventStyle::P => {
            if node.t == 0.0 {
                return Ok(u.clone());
            }
            let a = solve_r(node, u, -node.t)?;
            solve_r(node, &a, node.t)
        }
        ResolventStyle::Q => {
            if node.t == 0.0 {
                return Ok(GridFunction::zero(u.grid));
            }
            let a = solve_r(node, u, -node.t)?;
            let p = solve_r(node, &a, node.t)?;
            Ok(apply(&node.inner, &p)?.scaled(C64::new(node.t, 0.0)))
        }
    }
}

/// Solve (I + it·inner) v = u.
fn solve_r(node: &ResolventNode, u: &GridFunction, t: f64) -> Result<GridFunction> {
    if t == 0.0 {
        return Ok(u.clone());
    }
    // constant-coefficient fast path
    let collapsed = if t >= 0.0 {
        &node.collapsed_plus
    } else {
        &node.collapsed_minus
    };
    let sym = collapsed.get_or_init(|| {
        node.inner
            .as_multiplier(u.grid.n, u.grid.j)
            .and_then(|s| s.resolvent_r(t))
            .map(Arc::new)
    });
    if let Some(sym) = sym {
        return sym.apply(u);
    }
    let unknowns = u.grid.cells() * u.grid.n_comp;
    if unknowns <= node.opts.dense_crossover {
        let cache = if t >= 0.0 {
            &node.lu_plus
        } else {
            &node.lu_minus
        };
        let lu = cache
            .get_or_init(|| {
                let m = assemble_shifted_dense(&node.inner, u.grid, t)?;
                LuFactors::new(m).map(Arc::new)
            })
            .as_ref()
            .map_err(|e| Error::ResolventFailure(e.to_string()))?;
        dense_solve_channels(lu, u)
    } else {
        iterative_solve(node, u, t)
    }
}

/// Assemble the dense matrix of (I + it·op) on the (cell, component) space
/// by probing with basis functions on a scalar-coordinate grid.
fn assemble_shifted_dense(op: &OperatorHandle, grid: Grid, t: f64) -> Result<DMatrix<C64>> {
    let probe_grid = Grid::new(
        grid.n,
        grid.j,
        grid.n_comp,
        crate::space::SpaceDescriptor::scalar(),
    )?;
    let unknowns = probe_grid.cells() * probe_grid.n_comp;
    let cols = crate::par::map_indexed(unknowns, |i| -> Result<Vec<C64>> {
        let mut probe = GridFunction::zero(probe_grid);
        probe.data[i] = C64::new(1.0, 0.0);
        let out = apply(op, &probe)?;
        Ok(out.data)
    });
    let mut m = DMatrix::from_element(unknowns, unknowns, C64::new(0.0, 0.0));
    let it = C64::new(0.0, t);
    for (i, col) in cols.into_iter().enumerate() {
        let col = col?;
        for (r, v) in col.into_iter().enumerate() {
            m[(r, i)] = v * it;
        }
        m[(i, i)] += C64::new(1.0, 0.0);
    }
    Ok(m)
}

/// Assemble the plain dense matrix of an operator (no shift).
pub fn assemble_dense(op: &OperatorHandle, grid: &Grid) -> Result<DMatrix<C64>> {
    let probe_grid = Grid::new(
        grid.n,
        grid.j,
        op.in_comps(),
        crate::space::SpaceDescriptor::scalar(),
    )?;
    let unknowns_in = probe_grid.cells() * probe_grid.n_comp;
    let unknowns_out = probe_grid.cells() * op.out_comps();
    let cols = crate::par::map_indexed(unknowns_in, |i| -> Result<Vec<C64>> {
        let mut probe = GridFunction::zero(probe_grid);
        probe.data[i] = C64::new(1.0, 0.0);
        let out = apply(op, &probe)?;
        Ok(out.data)
    });
    let mut m = DMatrix::from_element(unknowns_out, unknowns_in, C64::new(0.0, 0.0));
    for (i, col) in cols.into_iter().enumerate() {
        let col = col?;
        for (r, v) in col.into_iter().enumerate() {
            m[(r, i)] = v;
        }
    }
    Ok(m)
}

/// Solve per X-coordinate channel with the cached LU.
fn dense_solve_channels(lu: &LuFactors, u: &GridFunction) -> Result<GridFunction> {
    let dim = u.grid.space.dim();
    let comps = u.grid.n_comp;
    let cells = u.grid.cells();
    let mut out = GridFunction::zero(u.grid);
    for coord in 0..dim {
        let mut rhs = DVector::from_element(cells * comps, C64::new(0.0, 0.0));
        for cell in 0..cells {
            for comp in 0..comps {
                rhs[cell * comps + comp] = u.data[(cell * comps + comp) * dim + coord];
            }
        }
        let sol = lu.solve(&rhs)?;
        for cell in 0..cells {
            for comp in 0..comps {
                out.data[(cell * comps + comp) * dim + coord] = sol[cell * comps + comp];
            }
        }
    }
    Ok(out)
}

/// Preconditioned BiCGStab on (I + it·inner), one X-coordinate channel at a
/// time. The preconditioner applies (I + it·precon)^{-1} per frequency.
fn iterative_solve(node: &ResolventNode, u: &GridFunction, t: f64) -> Result<GridFunction> {
    let precon_sym = node
        .precon
        .as_ref()
        .and_then(|s| s.resolvent_r(t))
        .map(Arc::new);
    let grid = u.grid;
    let apply_a = |v: &GridFunction| -> Result<GridFunction> {
        Ok(v.add(&apply(&node.inner, v)?.scaled(C64::new(0.0, t))))
    };
    let apply_m = |v: &GridFunction| -> Result<GridFunction> {
        match &precon_sym {
            Some(s) => s.apply(v),
            None => Ok(v.clone()),
        }
    };
    let dot = |a: &GridFunction, b: &GridFunction| -> C64 {
        a.data.iter().zip(&b.data).map(|(x, y)| x.conj() * y).sum()
    };
    let norm2 =
        |a: &GridFunction| -> f64 { a.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt() };

    let b_norm = norm2(u);
    if b_norm == 0.0 {
        return Ok(GridFunction::zero(grid));
    }
    let mut x = GridFunction::zero(grid);
    let mut r = u.clone();
    let r0 = r.clone();
    let mut rho = C64::new(1.0, 0.0);
    let mut alpha = C64::new(1.0, 0.0);
    let mut omega = C64::new(1.0, 0.0);
    let mut v = GridFunction::zero(grid);
    let mut p = GridFunction::zero(grid);
    let mut residual = 1.0f64;
    for _ in 0..node.opts.max_iters {
        let rho_new = dot(&r0, &r);
        if rho_new.norm() < 1e-300 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        // p = r + beta (p - omega v)
        p = r.add(&p.sub(&v.scaled(omega)).scaled(beta));
        let ph = apply_m(&p)?;
        v = apply_a(&ph)?;
        alpha = rho / dot(&r0, &v);
        let s = r.sub(&v.scaled(alpha));
        if norm2(&s) / b_norm < node.opts.tol {
            x = x.add(&ph.scaled(alpha));
            let check = apply_a(&x)?.sub(u);
            residual = norm2(&check) / b_norm;
            if residual < node.opts.tol {
                return Ok(x);
            }
            break;
        }
        let sh = apply_m(&s)?;
        let tvec = apply_a(&sh)?;
        omega = dot(&tvec, &s) / C64::new(norm2(&tvec).powi(2), 0.0);
        x = x.add(&ph.scaled(alpha)).add(&sh.scaled(omega));
        r = s.sub(&tvec.scaled(omega));
        residual = norm2(&r) / b_norm;
        if residual < node.opts.tol {
            let check = apply_a(&x)?.sub(u);
            residual = norm2(&check) / b_norm;
            if residual < node.opts.tol {
                return Ok(x);
            }
        }
    }
    Err(Error::SolverFailure {
        context: "bicgstab resolvent solve".into(),
        residual,
    })
}
