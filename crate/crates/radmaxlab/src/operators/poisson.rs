//! The canonical smoothing family 𝒫_t = (I − t²Δ)^{−1}, 𝒬_t = t∇𝒫_t,
//! 𝒬_t* = −t𝒫_t div, realized as explicit Fourier multipliers.

use super::symbol::{wavenumber_sq, MultiplierSymbol};
use crate::C64;

pub struct PoissonFamily {
    /// scalar → scalar, symbol (1 + 4π²t²|ξ|²)^{−1}
    pub p: MultiplierSymbol,
    /// scalar → vector, symbol t·2πiξ·(1 + 4π²t²|ξ|²)^{−1}
    pub q: MultiplierSymbol,
    /// vector → scalar, symbol −t·(1 + 4π²t²|ξ|²)^{−1}·(2πiξ)^T
    pub q_star: MultiplierSymbol,
    pub t: f64,
}

/// Build {𝒫_t, 𝒬_t, 𝒬_t*} at scale t ≥ 0; t = 0 gives 𝒫₀ = I, 𝒬₀ = 0.
pub fn poisson_family(n: usize, j: u32, t: f64) -> PoissonFamily {
    let p = MultiplierSymbol::scalar_fn(n, j, 1, |xi| {
        C64::new(1.0 / (1.0 + t * t * wavenumber_sq(xi)), 0.0)
    });
    let q = MultiplierSymbol::from_fn(n, j, 1, n, |xi| {
        let denom = 1.0 + t * t * wavenumber_sq(xi);
        let mut m = nalgebra::DMatrix::from_element(n, 1, C64::new(0.0, 0.0));
        for l in 0..n {
            let w = 2.0 * std::f64::consts::PI * xi[l] as f64;
            m[(l, 0)] = C64::new(0.0, t * w / denom);
        }
        m
    });
    let q_star = MultiplierSymbol::from_fn(n, j, n, 1, |xi| {
        let denom = 1.0 + t * t * wavenumber_sq(xi);
        let mut m = nalgebra::DMatrix::from_element(1, n, C64::new(0.0, 0.0));
        for l in 0..n {
            let w = 2.0 * std::f64::consts::PI * xi[l] as f64;
            m[(0, l)] = C64::new(0.0, -t * w / denom);
        }
        m
    });
    PoissonFamily { p, q, q_star, t }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::{Grid, GridFunction};
    use crate::rng::RandomSource;
    use crate::space::SpaceDescriptor;
    use std::f64::consts::PI;

    #[test]
    fn p_fixes_constants() {
        let grid = Grid::new(1, 4, 1, SpaceDescriptor::scalar()).unwrap();
        let u = GridFunction::constant(grid, &[C64::new(2.0, 1.0)]).unwrap();
        let fam = poisson_family(1, 4, 0.7);
        let v = fam.p.apply(&u).unwrap();
        for (a, b) in u.data.iter().zip(&v.data) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn symbol_value_at_unit_frequency() {
        // n = 1, t = 1, ξ = 1 → 𝒫 symbol = 1/(1 + 4π²)
        let fam = poisson_family(1, 3, 1.0);
        let bin = 1; // ξ = 1
        let got = fam.p.matrix_at(bin)[(0, 0)];
        let expect = 1.0 / (1.0 + 4.0 * PI * PI);
        assert!((got.re - expect).abs() < 1e-15 && got.im.abs() < 1e-18);
    }

    #[test]
    fn qstar_q_composition_identity() {
        // 𝒬_t*𝒬_t = −t²Δ(I − t²Δ)^{−2}: symbols agree to 1e−12 per frequency
        for n in [1usize, 2] {
            let j = 4u32;
            let t = 0.35;
            let fam = poisson_family(n, j, t);
            let composed = fam.q_star.compose(&fam.q).unwrap();
            let direct = MultiplierSymbol::scalar_fn(n, j, 1, |xi| {
                let w2 = wavenumber_sq(xi);
                let denom = 1.0 + t * t * w2;
                C64::new(t * t * w2 / (denom * denom), 0.0)
            });
            let err: f64 = composed
                .data
                .iter()
                .zip(&direct.data)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            assert!(err < 1e-12, "n={n} err {err}");
        }
    }

    #[test]
    fn zero_scale_family() {
        let fam = poisson_family(1, 3, 0.0);
        let grid = Grid::new(1, 3, 1, SpaceDescriptor::scalar()).unwrap();
        let mut rng = RandomSource::new(1).rng();
        let u = GridFunction::random_gaussian(grid, &mut rng);
        let p = fam.p.apply(&u).unwrap();
        for (a, b) in u.data.iter().zip(&p.data) {
            assert!((a - b).norm() < 1e-13);
        }
        let q = fam.q.apply(&u).unwrap();
        assert!(q.data.iter().all(|z| z.norm() < 1e-15));
    }
}
