//! Wiener paths on a grid and the Gaussian functionals built on them.
//!
//! A path is stored as its increments `Δw_i`. Its coordinates
//! `x_i = δe_i = √m · Δw_i` are i.i.d. standard normal under the Wiener law,
//! and all dynamics in this crate act on coordinates.

use std::ops::{Deref, DerefMut};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::hilbert::{inner_h, Grid, HVector};

/// Coordinates `x_i = δe_i` of a path in the normalized-indicator basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Coordinates(pub Vec<f64>);

impl Deref for Coordinates {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Coordinates {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl Coordinates {
    pub fn standard_normal(dim: usize, rng: &mut (impl Rng + ?Sized)) -> Self {
        Coordinates((0..dim).map(|_| rng.sample(StandardNormal)).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    grid: Grid,
    increments: Vec<f64>,
    stream: u64,
}

impl Path {
    pub fn from_increments(grid: Grid, increments: Vec<f64>, stream: u64) -> Result<Self> {
        if increments.len() != grid.m() {
            return Err(Error::DimensionMismatch {
                expected: grid.m(),
                found: increments.len(),
            });
        }
        Ok(Path {
            grid,
            increments,
            stream,
        })
    }

    pub fn from_coordinates(grid: Grid, x: &[f64], stream: u64) -> Result<Self> {
        let s = (grid.m() as f64).sqrt();
        Self::from_increments(grid, x.iter().map(|v| v / s).collect(), stream)
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// Id of the random stream the path was drawn from (0 if constructed).
    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn coordinates(&self) -> Coordinates {
        let s = (self.grid.m() as f64).sqrt();
        Coordinates(self.increments.iter().map(|d| d * s).collect())
    }

    /// `w(t_i)` for `i = 0..=m`, starting at `w(0) = 0`.
    pub fn values(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.increments.len() + 1);
        let mut acc = 0.0;
        out.push(acc);
        for d in &self.increments {
            acc += d;
            out.push(acc);
        }
        out
    }
}

/// Draws a path with i.i.d. `N(0, dt)` increments from `rng`.
pub fn sample_wiener(grid: Grid, rng: &mut (impl Rng + ?Sized), stream: u64) -> Path {
    let x = Coordinates::standard_normal(grid.m(), rng);
    Path::from_coordinates(grid, &x, stream).expect("dimension matches grid")
}

/// Wiener integral `δh = Σ h'_i Δw_i`.
pub fn divergence(h: &HVector, p: &Path) -> Result<f64> {
    h.grid().check(&p.grid)?;
    Ok(h.density().iter().zip(&p.increments).map(|(a, b)| a * b).sum())
}

/// Same as [`divergence`], on coordinates: `Σ (h, e_i)_H · x_i`.
pub fn divergence_coords(h_coords: &[f64], x: &[f64]) -> f64 {
    h_coords.iter().zip(x).map(|(a, b)| a * b).sum()
}

/// `ρ(δh) = exp(δh − |h|²_H / 2)`.
pub fn wick_exponential(h: &HVector, p: &Path) -> Result<f64> {
    let d = divergence(h, p)?;
    let n2 = inner_h(h, h)?;
    Ok((d - 0.5 * n2).exp())
}

/// Probabilists' Hermite polynomial by `He_{n+1} = x He_n − n He_{n−1}`.
pub fn hermite(n: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    if n == 0 {
        return prev;
    }
    for k in 1..n {
        let next = x * cur - k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `I_n((c·h)^{⊗n}) = (c |h|_H)^n · He_n(δh / |h|_H)`, `1 <= n <= 3`.
pub fn multiple_integral(n: usize, h: &HVector, c: f64, p: &Path) -> Result<f64> {
    if n == 0 || n > 3 {
        return Err(Error::UnsupportedOrder(n));
    }
    let norm = h.norm_h();
    if norm == 0.0 {
        return Err(Error::DegenerateInput("multiple integral of a zero direction".into()));
    }
    let d = divergence(h, p)?;
    Ok((c * norm).powi(n as i32) * hermite(n, d / norm))
}

/// `I_2(u ⊙ v) = δu · δv − (u, v)_H` on coordinates.
pub fn double_integral_coords(u: &[f64], v: &[f64], x: &[f64]) -> f64 {
    let uv: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    divergence_coords(u, x) * divergence_coords(v, x) - uv
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Domain, StreamFactory};
    use crate::stats::Moments;
    use approx::assert_abs_diff_eq;

    const PATHS: usize = 100_000;

    fn paths(grid: Grid, n: usize, seed: u64) -> Vec<Path> {
        let f = StreamFactory::new(seed);
        f.par_paths(n, |i, rng| sample_wiener(grid, rng, StreamFactory::stream_id(Domain::Paths, i as u64)))
    }

    #[test]
    fn sampling_is_deterministic() {
        let g = Grid::new(16).unwrap();
        let f = StreamFactory::new(5);
        let a = sample_wiener(g, &mut f.stream(Domain::Paths, 0), 0);
        let b = sample_wiener(g, &mut f.stream(Domain::Paths, 0), 0);
        assert_eq!(a, b);
    }

    #[test]
    fn coordinate_round_trip_is_exact() {
        let g = Grid::new(33).unwrap();
        let p = sample_wiener(g, &mut StreamFactory::new(1).stream(Domain::Paths, 0), 0);
        let back = Path::from_coordinates(g, &p.coordinates(), 0).unwrap();
        for (a, b) in p.increments().iter().zip(back.increments()) {
            assert!((a - b).abs() <= 1e-15 * a.abs().max(1e-300));
        }
    }

    #[test]
    fn hermite_values() {
        for x in [-2.0, -0.3, 0.0, 1.7] {
            assert_eq!(hermite(0, x), 1.0);
            assert_eq!(hermite(1, x), x);
            assert_abs_diff_eq!(hermite(2, x), x * x - 1.0, epsilon = 1e-14);
            assert_abs_diff_eq!(hermite(3, x), x * x * x - 3.0 * x, epsilon = 1e-14);
            assert_abs_diff_eq!(hermite(4, x), x.powi(4) - 6.0 * x * x + 3.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn divergence_examples() {
        let g = Grid::new(8).unwrap();
        let p = sample_wiener(g, &mut StreamFactory::new(3).stream(Domain::Paths, 0), 0);
        assert_eq!(divergence(&HVector::zero(g), &p).unwrap(), 0.0);
        let x = p.coordinates();
        assert_abs_diff_eq!(divergence(&HVector::basis(g, 0), &p).unwrap(), x[0], epsilon = 1e-14);
        assert!(divergence(&HVector::zero(Grid::new(9).unwrap()), &p).is_err());
        assert_eq!(wick_exponential(&HVector::zero(g), &p).unwrap(), 1.0);
    }

    #[test]
    fn multiple_integral_examples_and_errors() {
        let g = Grid::new(8).unwrap();
        let p = sample_wiener(g, &mut StreamFactory::new(4).stream(Domain::Paths, 0), 0);
        let h = HVector::from_fn(g, |t| 1.0 + t).normalized().unwrap();
        let d = divergence(&h, &p).unwrap();
        assert_abs_diff_eq!(multiple_integral(1, &h, 1.0, &p).unwrap(), d, epsilon = 1e-14);
        assert_abs_diff_eq!(multiple_integral(2, &h, 1.0, &p).unwrap(), d * d - 1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(multiple_integral(2, &h, 0.5, &p).unwrap(), 0.25 * (d * d - 1.0), epsilon = 1e-13);
        // a non-unit direction is rescaled consistently: I_2((2h)^{⊗2}) = 4 I_2(h^{⊗2})
        assert_abs_diff_eq!(
            multiple_integral(2, &h.scaled(2.0), 1.0, &p).unwrap(),
            4.0 * (d * d - 1.0),
            epsilon = 1e-12
        );
        assert!(matches!(multiple_integral(4, &h, 1.0, &p), Err(Error::UnsupportedOrder(4))));
        assert!(matches!(
            multiple_integral(2, &HVector::zero(g), 1.0, &p),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn wiener_covariance_monte_carlo() {
        let g = Grid::new(16).unwrap();
        let ps = paths(g, PATHS, 11);
        let w1: Vec<f64> = ps.iter().map(|p| p.values()[16]).collect();
        let var = w1.iter().map(|x| x * x).sum::<f64>() / PATHS as f64;
        assert!((var - 1.0).abs() < 3.0 * 2f64.sqrt() / (PATHS as f64).sqrt(), "Var w(1) = {var}");

        for (s, t) in [(4usize, 12usize), (8, 8), (2, 15)] {
            let prod: Vec<f64> = ps.iter().map(|p| {
                let v = p.values();
                v[s] * v[t]
            }).collect();
            let m = Moments::of(&prod);
            let want = g.t(s.min(t));
            assert!((m.mean - want).abs() < 3.0 * m.std_error(), "cov({s},{t}) = {}", m.mean);
        }
    }

    #[test]
    fn divergence_and_wick_moments() {
        let g = Grid::new(32).unwrap();
        let ps = paths(g, PATHS, 12);
        let h = HVector::from_fn(g, |t| (std::f64::consts::PI * t).sin() * 2f64.sqrt());
        let k = HVector::from_fn(g, |t| (std::f64::consts::PI * t).cos() * 2f64.sqrt());
        let hn = h.normalized().unwrap();
        let kn = k.normalized().unwrap();
        assert!(inner_h(&hn, &kn).unwrap().abs() < 1e-12);

        let dh: Vec<f64> = ps.iter().map(|p| divergence(&hn, p).unwrap()).collect();
        let dk: Vec<f64> = ps.iter().map(|p| divergence(&kn, p).unwrap()).collect();
        let var = Moments::of(&dh).variance;
        assert!((var - 1.0).abs() < 0.02);
        let cov = dh.iter().zip(&dk).map(|(a, b)| a * b).sum::<f64>() / PATHS as f64;
        assert!(cov.abs() < 0.02);

        // unnormalized h: Var δh = |h|²
        let dh_raw: Vec<f64> = ps.iter().map(|p| divergence(&h.scaled(1.5), p).unwrap()).collect();
        let m = Moments::of(&dh_raw);
        let want = h.scaled(1.5).norm_h().powi(2);
        let se = want * (2.0 / PATHS as f64).sqrt();
        assert!((m.variance - want).abs() < 3.0 * se);

        let rho: Vec<f64> = ps.iter().map(|p| wick_exponential(&hn, p).unwrap()).collect();
        assert!(rho.iter().all(|&r| r > 0.0));
        let m = Moments::of(&rho);
        assert!((m.mean - 1.0).abs() < 3.0 * m.std_error(), "E rho = {}", m.mean);
    }

    #[test]
    fn hermite_orthogonality_monte_carlo() {
        let g = Grid::new(16).unwrap();
        let ps = paths(g, PATHS, 13);
        let h = HVector::constant(g, 1.0);
        let xi: Vec<f64> = ps.iter().map(|p| divergence(&h, p).unwrap()).collect();
        for n in 1..=3 {
            for k in 1..=3 {
                let prod: Vec<f64> = xi.iter().map(|&x| hermite(n, x) * hermite(k, x)).collect();
                let m = Moments::of(&prod);
                let want = if n == k { (1..=n).product::<usize>() as f64 } else { 0.0 };
                assert!(
                    (m.mean - want).abs() < 3.0 * m.std_error(),
                    "E[He{n} He{k}] = {} ± {}",
                    m.mean,
                    m.std_error()
                );
            }
        }
        let i2: Vec<f64> = ps.iter().map(|p| multiple_integral(2, &h, 1.0, p).unwrap()).collect();
        let sq: Vec<f64> = i2.iter().map(|x| x * x).collect();
        let m = Moments::of(&sq);
        assert!((m.mean - 2.0).abs() < 3.0 * m.std_error());
    }

    #[test]
    fn second_chaos_excess_kurtosis_is_twelve() {
        // He_2(ξ) = ξ² − 1: E Y² = 2, E Y⁴ = E ξ⁸ − 4 E ξ⁶ + 6 E ξ⁴ − 4 E ξ² + 1
        //   = 105 − 60 + 18 − 4 + 1 = 60, so excess kurtosis 60/4 − 3 = 12.
        let g = Grid::new(8).unwrap();
        let ps = paths(g, PATHS, 14);
        let h = HVector::constant(g, 1.0);
        let i2: Vec<f64> = ps.iter().map(|p| multiple_integral(2, &h, 1.0, p).unwrap()).collect();
        let m = Moments::of(&i2);
        let se = crate::stats::kurtosis_influence_se(&i2, &m);
        assert!((m.excess_kurtosis - 12.0).abs() < 3.0 * se, "kurtosis {} ± {se}", m.excess_kurtosis);
    }
}
