//! Fourier multiplier symbols on the discrete frequency lattice
//! ξ ∈ Z^n ∩ [−2^{J−1}, 2^{J−1})^n, and first-order constant-coefficient
//! operators D = Σ_l M_l ∂_l with their adjoints and Hodge–Dirac symbols.
//! Wavenumbers are 2πξ: the gradient symbol is 2πiξ, the divergence
//! (2πiξ)^T, the Laplacian −4π²|ξ|².

use crate::dyadic::{Grid, GridFunction};
use crate::error::{Error, Result};
use crate::C64;
use nalgebra::DMatrix;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

fn planner() -> &'static Mutex<FftPlanner<f64>> {
    static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    PLANNER.get_or_init(|| Mutex::new(FftPlanner::new()))
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut p = planner().lock().unwrap();
    if inverse {
        p.plan_fft_inverse(len)
    } else {
        p.plan_fft_forward(len)
    }
}

/// In-place DFT of every channel of a (cells × channels) interleaved buffer,
/// channel-major scratch. `data` is cell-major with `stride` entries per
/// cell; channel `c` is the sub-sequence at offset c.
fn fft_channels(n: usize, side: usize, data: &mut [C64], stride: usize, inverse: bool) {
    let fft = plan(side, inverse);
    let mut buf = vec![C64::new(0.0, 0.0); side];
    let scale = 1.0 / side as f64;
    for c in 0..stride {
        if n == 1 {
            for i in 0..side {
                buf[i] = data[i * stride + c];
            }
            fft.process(&mut buf);
            for i in 0..side {
                data[i * stride + c] = if inverse { buf[i] } else { buf[i] * scale };
            }
        } else {
            // rows (x direction), then columns (y direction)
            for row in 0..side {
                for i in 0..side {
                    buf[i] = data[(row * side + i) * stride + c];
                }
                fft.process(&mut buf);
                for i in 0..side {
                    data[(row * side + i) * stride + c] =
                        if inverse { buf[i] } else { buf[i] * scale };
                }
            }
            for col in 0..side {
                for i in 0..side {
                    buf[i] = data[(i * side + col) * stride + c];
                }
                fft.process(&mut buf);
                for i in 0..side {
                    data[(i * side + col) * stride + c] =
                        if inverse { buf[i] } else { buf[i] * scale };
                }
            }
        }
    }
}

/// Integer frequency of a flat bin (same layout as cells).
pub fn bin_frequency(n: usize, side: usize, bin: usize) -> [i64; 2] {
    let unwrap = |i: usize| -> i64 {
        let half = (side / 2) as i64;
        let i = i as i64;
        if i < half {
            i
        } else {
            i - side as i64
        }
    };
    if n == 1 {
        [unwrap(bin), 0]
    } else {
        [unwrap(bin % side), unwrap(bin / side)]
    }
}

/// A matrix-valued Fourier multiplier: one out×in complex matrix per
/// frequency bin, stored bin-major, row-major within a bin.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierSymbol {
    pub n: usize,
    pub j: u32,
    pub in_comps: usize,
    pub out_comps: usize,
    pub data: Vec<C64>,
}

impl MultiplierSymbol {
    pub fn side(&self) -> usize {
        1 << self.j
    }

    pub fn bins(&self) -> usize {
        1 << (self.n as u32 * self.j)
    }

    pub fn from_fn(
        n: usize,
        j: u32,
        in_comps: usize,
        out_comps: usize,
        mut f: impl FnMut(&[i64; 2]) -> DMatrix<C64>,
    ) -> MultiplierSymbol {
        let side = 1usize << j;
        let bins = if n == 1 { side } else { side * side };
        let mut data = Vec::with_capacity(bins * in_comps * out_comps);
        for bin in 0..bins {
            let xi = bin_frequency(n, side, bin);
            let m = f(&xi);
            debug_assert_eq!(m.nrows(), out_comps);
            debug_assert_eq!(m.ncols(), in_comps);
            for r in 0..out_comps {
                for c in 0..in_comps {
                    data.push(m[(r, c)]);
                }
            }
        }
        MultiplierSymbol {
            n,
            j,
            in_comps,
            out_comps,
            data,
        }
    }

    /// Diagonal (scalar × I) multiplier.
    pub fn scalar_fn(n: usize, j: u32, comps: usize, mut f: impl FnMut(&[i64; 2]) -> C64) -> Self {
        MultiplierSymbol::from_fn(n, j, comps, comps, move |xi| {
            DMatrix::from_diagonal_element(comps, comps, f(xi))
        })
    }

    pub fn identity(n: usize, j: u32, comps: usize) -> Self {
        MultiplierSymbol::scalar_fn(n, j, comps, |_| C64::new(1.0, 0.0))
    }

    pub fn matrix_at(&self, bin: usize) -> DMatrix<C64> {
        let o = bin * self.in_comps * self.out_comps;
        DMatrix::from_row_slice(
            self.out_comps,
            self.in_comps,
            &self.data[o..o + self.in_comps * self.out_comps],
        )
    }

    /// self ∘ other (apply `other` first).
    pub fn compose(&self, other: &MultiplierSymbol) -> Result<MultiplierSymbol> {
        if self.in_comps != other.out_comps || self.n != other.n || self.j != other.j {
            return Err(Error::shape("multiplier composition shape mismatch"));
        }
        let mut out = MultiplierSymbol {
            n: self.n,
            j: self.j,
            in_comps: other.in_comps,
            out_comps: self.out_comps,
            data: vec![C64::new(0.0, 0.0); self.bins() * other.in_comps * self.out_comps],
        };
        for bin in 0..self.bins() {
            let m = self.matrix_at(bin) * other.matrix_at(bin);
            let o = bin * out.in_comps * out.out_comps;
            for r in 0..out.out_comps {
                for c in 0..out.in_comps {
                    out.data[o + r * out.in_comps + c] = m[(r, c)];
                }
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &MultiplierSymbol) -> Result<MultiplierSymbol> {
        if self.in_comps != other.in_comps
            || self.out_comps != other.out_comps
            || self.n != other.n
            || self.j != other.j
        {
            return Err(Error::shape("multiplier addition shape mismatch"));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(MultiplierSymbol {
            data,
            ..self.clone()
        })
    }

    pub fn scaled(&self, c: C64) -> MultiplierSymbol {
        MultiplierSymbol {
            data: self.data.iter().map(|z| z * c).collect(),
            ..self.clone()
        }
    }

    /// Per-bin inverse of (I + it·S); `None` if some bin is singular.
    pub fn resolvent_r(&self, t: f64) -> Option<MultiplierSymbol> {
        if self.in_comps != self.out_comps {
            return None;
        }
        let k = self.in_comps;
        let mut data = Vec::with_capacity(self.data.len());
        let it = C64::new(0.0, t);
        for bin in 0..self.bins() {
            let mut m = self.matrix_at(bin) * it;
            for d in 0..k {
                m[(d, d)] += C64::new(1.0, 0.0);
            }
            let inv = m.try_inverse()?;
            for r in 0..k {
                for c in 0..k {
                    data.push(inv[(r, c)]);
                }
            }
        }
        Some(MultiplierSymbol {
            data,
            ..self.clone()
        })
    }

    /// Per-bin inverse of (λ − S); `None` if some bin is singular.
    pub fn resolvent_at(&self, lambda: C64) -> Option<MultiplierSymbol> {
        if self.in_comps != self.out_comps {
            return None;
        }
        let k = self.in_comps;
        let mut data = Vec::with_capacity(self.data.len());
        for bin in 0..self.bins() {
            let mut m = -self.matrix_at(bin);
            for d in 0..k {
                m[(d, d)] += lambda;
            }
            let inv = m.try_inverse()?;
            for r in 0..k {
                for c in 0..k {
                    data.push(inv[(r, c)]);
                }
            }
        }
        Some(MultiplierSymbol {
            data,
            ..self.clone()
        })
    }

    /// Apply via forward FFT, per-bin matrix multiply, inverse FFT. The
    /// operator acts on the C^N component factor, identically on every
    /// X-coordinate.
    pub fn apply(&self, u: &GridFunction) -> Result<GridFunction> {
        if u.grid.n != self.n || u.grid.j != self.j {
            return Err(Error::shape("multiplier grid mismatch"));
        }
        if u.grid.n_comp != self.in_comps {
            return Err(Error::shape(format!(
                "multiplier expects {} components, function has {}",
                self.in_comps, u.grid.n_comp
            )));
        }
        let dim = u.grid.space.dim();
        let side = u.grid.side();
        let cells = u.grid.cells();
        let mut hat = u.data.clone();
        fft_channels(self.n, side, &mut hat, self.in_comps * dim, false);
        let out_grid = Grid {
            n_comp: self.out_comps,
            ..u.grid
        };
        let mut out = vec![C64::new(0.0, 0.0); cells * self.out_comps * dim];
        for bin in 0..cells {
            let sym = &self.data[bin * self.in_comps * self.out_comps..];
            for coord in 0..dim {
                for r in 0..self.out_comps {
                    let mut acc = C64::new(0.0, 0.0);
                    for c in 0..self.in_comps {
                        acc += sym[r * self.in_comps + c]
                            * hat[(bin * self.in_comps + c) * dim + coord];
                    }
                    out[(bin * self.out_comps + r) * dim + coord] = acc;
                }
            }
        }
        fft_channels(self.n, side, &mut out, self.out_comps * dim, true);
        GridFunction::from_data(out_grid, out)
    }

    /// Translation by h: coefficient at ξ gains e^{2πi ξ·h}.
    pub fn translation(n: usize, j: u32, comps: usize, h: [f64; 2]) -> Self {
        MultiplierSymbol::scalar_fn(n, j, comps, |xi| {
            let phase = 2.0 * PI * (xi[0] as f64 * h[0] + xi[1] as f64 * h[1]);
            C64::new(phase.cos(), phase.sin())
        })
    }

    pub fn laplacian(n: usize, j: u32) -> Self {
        MultiplierSymbol::scalar_fn(n, j, 1, |xi| {
            let w2 = wavenumber_sq(xi);
            C64::new(-w2, 0.0)
        })
    }

    pub fn sqrt_minus_laplacian(n: usize, j: u32) -> Self {
        MultiplierSymbol::scalar_fn(n, j, 1, |xi| C64::new(wavenumber_sq(xi).sqrt(), 0.0))
    }

    pub fn gradient(n: usize, j: u32) -> Self {
        FirstOrderOperator::gradient(n).d_multiplier(n, j)
    }

    /// −div as the adjoint of the gradient.
    pub fn minus_divergence(n: usize, j: u32) -> Self {
        FirstOrderOperator::gradient(n).dstar_multiplier(n, j)
    }
}

pub fn wavenumber_sq(xi: &[i64; 2]) -> f64 {
    let wx = 2.0 * PI * xi[0] as f64;
    let wy = 2.0 * PI * xi[1] as f64;
    wx * wx + wy * wy
}

/// A homogeneous first-order operator D = Σ_l M_l ∂_l with constant
/// matrix coefficients M_l ∈ C^{n2×n1}; its adjoint is D* = −Σ_l M_l^H ∂_l.
#[derive(Debug, Clone)]
pub struct FirstOrderOperator {
    pub n1: usize,
    pub n2: usize,
    pub coeff: Vec<DMatrix<C64>>,
}

impl FirstOrderOperator {
    /// The principal case D = ∇ (n1 = 1, n2 = n).
    pub fn gradient(n: usize) -> FirstOrderOperator {
        let coeff = (0..n)
            .map(|l| {
                let mut m = DMatrix::from_element(n, 1, C64::new(0.0, 0.0));
                m[(l, 0)] = C64::new(1.0, 0.0);
                m
            })
            .collect();
        FirstOrderOperator {
            n1: 1,
            n2: n,
            coeff,
        }
    }

    pub fn d_symbol(&self, xi: &[i64; 2]) -> DMatrix<C64> {
        let mut m = DMatrix::from_element(self.n2, self.n1, C64::new(0.0, 0.0));
        for (l, cm) in self.coeff.iter().enumerate() {
            let w = C64::new(0.0, 2.0 * PI * xi[l] as f64);
            m += cm * w;
        }
        m
    }

    pub fn dstar_symbol(&self, xi: &[i64; 2]) -> DMatrix<C64> {
        self.d_symbol(xi).adjoint()
    }

    /// Hodge–Dirac symbol [[0, D̂*], [D̂, 0]] on C^{n1+n2}.
    pub fn pi_symbol(&self, xi: &[i64; 2]) -> DMatrix<C64> {
        let nn = self.n1 + self.n2;
        let mut m = DMatrix::from_element(nn, nn, C64::new(0.0, 0.0));
        let d = self.d_symbol(xi);
        let ds = self.dstar_symbol(xi);
        for r in 0..self.n1 {
            for c in 0..self.n2 {
                m[(r, self.n1 + c)] = ds[(r, c)];
            }
        }
        for r in 0..self.n2 {
            for c in 0..self.n1 {
                m[(self.n1 + r, c)] = d[(r, c)];
            }
        }
        m
    }

    pub fn d_multiplier(&self, n: usize, j: u32) -> MultiplierSymbol {
        MultiplierSymbol::from_fn(n, j, self.n1, self.n2, |xi| self.d_symbol(xi))
    }

    pub fn dstar_multiplier(&self, n: usize, j: u32) -> MultiplierSymbol {
        MultiplierSymbol::from_fn(n, j, self.n2, self.n1, |xi| self.dstar_symbol(xi))
    }

    pub fn pi_multiplier(&self, n: usize, j: u32) -> MultiplierSymbol {
        MultiplierSymbol::from_fn(n, j, self.n1 + self.n2, self.n1 + self.n2, |xi| {
            self.pi_symbol(xi)
        })
    }

    /// Max per-frequency residual of DD*D = −ΔD over the lattice.
    pub fn ddstar_residual(&self, n: usize, j: u32) -> f64 {
        let side = 1usize << j;
        let bins = if n == 1 { side } else { side * side };
        let mut worst: f64 = 0.0;
        for bin in 0..bins {
            let xi = bin_frequency(n, side, bin);
            let d = self.d_symbol(&xi);
            let ds = self.dstar_symbol(&xi);
            let lhs = &d * &ds * &d;
            let rhs = &d * C64::new(wavenumber_sq(&xi), 0.0);
            let num = (&lhs - &rhs).norm();
            let den = rhs.norm().max(1.0);
            worst = worst.max(num / den);
        }
        worst
    }
}
