//! Discretized Cameron–Martin space and Hilbert–Schmidt kernels on L²[0,1].
//!
//! Everything lives on a uniform grid of `m` cells. An element `h` of the
//! Cameron–Martin space is stored through its derivative `h'`, constant on
//! each cell; the normalized indicators `e_i` (density `√m` on cell `i`)
//! form an exactly orthonormal basis, and the coordinates of `h` in that
//! basis are `density / √m`.
//!
//! A kernel `k(s, t)` is stored as the dense matrix `k[i][j] ≈ k(t_i, t_j)`.
//! The integral operator `(Kf)(s) = ∫ k(s, τ) f(τ) dτ` becomes the matrix
//! `dt · k`, and that matrix is the same whether it acts on densities or
//! on coordinates.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform partition of [0, 1] into `m` cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    m: usize,
}

impl Grid {
    pub fn new(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidGrid(m));
        }
        Ok(Grid { m })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.m as f64
    }

    /// Grid node `t_i = i·dt`, `i = 0..=m`.
    pub fn t(&self, i: usize) -> f64 {
        if i == self.m {
            1.0
        } else {
            i as f64 * self.dt()
        }
    }

    /// Midpoint of cell `i`.
    pub fn midpoint(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dt()
    }

    pub(crate) fn check(&self, other: &Grid) -> Result<()> {
        if self.m != other.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                found: other.m,
            });
        }
        Ok(())
    }
}

/// Cameron–Martin element, stored by its piecewise-constant derivative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HVector {
    grid: Grid,
    density: Vec<f64>,
}

impl HVector {
    pub fn from_density(grid: Grid, density: Vec<f64>) -> Result<Self> {
        if density.len() != grid.m() {
            return Err(Error::DimensionMismatch {
                expected: grid.m(),
                found: density.len(),
            });
        }
        Ok(HVector { grid, density })
    }

    pub fn zero(grid: Grid) -> Self {
        HVector {
            grid,
            density: vec![0.0; grid.m()],
        }
    }

    /// Normalized indicator of cell `i` (0-based): density `√m` on that cell.
    pub fn basis(grid: Grid, i: usize) -> Self {
        let mut density = vec![0.0; grid.m()];
        density[i] = (grid.m() as f64).sqrt();
        HVector { grid, density }
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        HVector {
            grid,
            density: vec![value; grid.m()],
        }
    }

    /// Samples `h'` at cell midpoints.
    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        let density = (0..grid.m()).map(|i| f(grid.midpoint(i))).collect();
        HVector { grid, density }
    }

    pub fn from_coords(grid: Grid, coords: &[f64]) -> Result<Self> {
        let s = (grid.m() as f64).sqrt();
        Self::from_density(grid, coords.iter().map(|c| c * s).collect())
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    /// Coordinates `(h, e_i)_H` in the normalized-indicator basis.
    pub fn coords(&self) -> Vec<f64> {
        let s = 1.0 / (self.grid.m() as f64).sqrt();
        self.density.iter().map(|d| d * s).collect()
    }

    pub fn norm_h(&self) -> f64 {
        inner_h(self, self).expect("same grid").sqrt()
    }

    pub fn scaled(&self, c: f64) -> Self {
        HVector {
            grid: self.grid,
            density: self.density.iter().map(|d| c * d).collect(),
        }
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm_h();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::DegenerateInput("cannot normalize a zero vector".into()));
        }
        Ok(self.scaled(1.0 / n))
    }

    pub fn add(&self, other: &HVector) -> Result<Self> {
        self.grid.check(&other.grid)?;
        let density = self
            .density
            .iter()
            .zip(&other.density)
            .map(|(a, b)| a + b)
            .collect();
        Ok(HVector {
            grid: self.grid,
            density,
        })
    }

    pub fn is_zero(&self) -> bool {
        self.density.iter().all(|&d| d == 0.0)
    }
}

/// `(u, v)_H = dt · Σ u'_i v'_i`.
pub fn inner_h(u: &HVector, v: &HVector) -> Result<f64> {
    u.grid.check(&v.grid)?;
    let s: f64 = u.density.iter().zip(&v.density).map(|(a, b)| a * b).sum();
    Ok(s * u.grid.dt())
}

/// Discretized kernel `k(s, t)` of a Hilbert–Schmidt operator.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel2 {
    grid: Grid,
    k: DMatrix<f64>,
}

impl Kernel2 {
    pub fn new(grid: Grid, k: DMatrix<f64>) -> Result<Self> {
        if k.nrows() != grid.m() || k.ncols() != grid.m() {
            return Err(Error::DimensionMismatch {
                expected: grid.m(),
                found: if k.nrows() != grid.m() { k.nrows() } else { k.ncols() },
            });
        }
        Ok(Kernel2 { grid, k })
    }

    pub fn zero(grid: Grid) -> Self {
        Kernel2 {
            grid,
            k: DMatrix::zeros(grid.m(), grid.m()),
        }
    }

    /// `k(s, t) = g(s) · h(t)`.
    pub fn rank_one(g: &HVector, h: &HVector) -> Result<Self> {
        g.grid.check(&h.grid)?;
        let gv = DVector::from_column_slice(&g.density);
        let hv = DVector::from_column_slice(&h.density);
        Ok(Kernel2 {
            grid: g.grid,
            k: &gv * hv.transpose(),
        })
    }

    /// `k = -2 e⊗e` with `e` rescaled to unit L² norm; `I + K` is the
    /// Householder reflection across `e^⊥`.
    pub fn reflection(e: &HVector) -> Result<Self> {
        let e = e.normalized()?;
        let mut k = Self::rank_one(&e, &e)?;
        k.k *= -2.0;
        Ok(k)
    }

    /// Kernel whose operator is `K̂ = op` (so `k = m · op`).
    pub fn from_operator(grid: Grid, op: &DMatrix<f64>) -> Result<Self> {
        Self::new(grid, op * grid.m() as f64)
    }

    /// Kernel of `K = O - I` for an orthogonal coordinate matrix `O`.
    pub fn from_orthogonal(grid: Grid, o: &DMatrix<f64>) -> Result<Self> {
        let id = DMatrix::<f64>::identity(grid.m(), grid.m());
        Self::from_operator(grid, &(o - id))
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.k
    }

    /// The operator `K̂ = dt · k` acting on densities or coordinates.
    pub fn operator(&self) -> DMatrix<f64> {
        &self.k * self.grid.dt()
    }

    /// Kernel of the adjoint, `k*(s, t) = k(t, s)`.
    pub fn adjoint(&self) -> Self {
        Kernel2 {
            grid: self.grid,
            k: self.k.transpose(),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Kernel2 {
            grid: self.grid,
            k: &self.k * c,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.k.iter().all(|&x| x == 0.0)
    }
}

/// `(Kf)[i] = dt · Σ_j k[i][j] f[j]`.
pub fn kernel_apply(k: &Kernel2, f: &HVector) -> Result<HVector> {
    k.grid.check(&f.grid)?;
    let fv = DVector::from_column_slice(&f.density);
    let out = (&k.k * fv) * k.grid.dt();
    Ok(HVector {
        grid: k.grid,
        density: out.as_slice().to_vec(),
    })
}

/// Kernel of the shift obtained by applying the `k`-shift first and the
/// `q`-shift second:
///
/// `r(s, θ) = k(s, θ) + q(s, θ) + ∫ k(s, η) q(η, θ) dη`,
///
/// i.e. `I + R = (I + K)(I + Q)` as operators.
pub fn kernel_compose(k: &Kernel2, q: &Kernel2) -> Result<Kernel2> {
    k.grid.check(&q.grid)?;
    let cross = (&k.k * &q.k) * k.grid.dt();
    Ok(Kernel2 {
        grid: k.grid,
        k: &k.k + &q.k + cross,
    })
}

/// `‖K‖_HS = (dt² · Σ k²)^½`.
pub fn hs_norm(k: &Kernel2) -> f64 {
    k.k.norm() * k.grid.dt()
}

/// Separable kernel `k_{n+1}(s_1..s_n, t) = g(t) · h(s_1)⋯h(s_n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChaosKernel {
    order: usize,
    g: HVector,
    h: HVector,
}

impl ChaosKernel {
    pub const MAX_ORDER: usize = 3;

    pub fn new(order: usize, g: HVector, h: HVector) -> Result<Self> {
        if order == 0 || order > Self::MAX_ORDER {
            return Err(Error::UnsupportedOrder(order));
        }
        g.grid.check(&h.grid)?;
        Ok(ChaosKernel { order, g, h })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Factor in the time variable `t`.
    pub fn g(&self) -> &HVector {
        &self.g
    }

    /// Factor repeated in each of the `n` integrated variables.
    pub fn h(&self) -> &HVector {
        &self.h
    }

    pub fn grid(&self) -> Grid {
        self.g.grid
    }
}
