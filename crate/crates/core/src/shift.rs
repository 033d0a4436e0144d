//! Shifts `y_t = w_t + Σ_n ∫₀ᵗ I_n(k_{n+1}(·, η)) dη` of Wiener space.
//!
//! With a single second-order kernel `k` the shift is linear in the path:
//! `Δy_i = Δw_i + dt Σ_j k[j][i] Δw_j`, i.e. coordinates map by `I + K̂ᵀ`.
//! It preserves Wiener measure exactly when `I + K̂` is orthogonal, which on
//! the kernel reads
//!
//! `k(s,t) + k(t,s) + ∫ k(θ,s) k(θ,t) dθ = 0`
//!
//! together with `−1 ∉ σ(K)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{divergence_coords, hermite, Coordinates, Path};
use crate::hilbert::{hs_norm, ChaosKernel, Grid, HVector, Kernel2};
use crate::linalg::{complex_eigenvalues, exp_skew, orthogonal_eigen};
use crate::transform::Transform;

/// Tolerance used when an operation requires a unitary shift.
pub const UNITARY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftReport {
    /// `max |k + kᵀ + dt kᵀk|` over the grid.
    pub b2_residual: f64,
    /// `min |λ + 1|` over the spectrum of `K`.
    pub minus_one_eigen_gap: f64,
    pub is_unitary: bool,
    pub tol: f64,
}

pub fn check_unitary_shift(k: &Kernel2, tol: f64) -> Result<ShiftReport> {
    let kv = k.values();
    let dt = k.grid().dt();
    let b2 = kv + kv.transpose() + kv.transpose() * kv * dt;
    let b2_residual = b2.amax();
    let gap = complex_eigenvalues(&k.operator())?
        .iter()
        .map(|l| (l + 1.0).norm())
        .fold(f64::INFINITY, f64::min);
    Ok(ShiftReport {
        b2_residual,
        minus_one_eigen_gap: gap,
        is_unitary: b2_residual <= tol && gap > tol,
        tol,
    })
}

fn require_unitary(k: &Kernel2) -> Result<()> {
    let r = check_unitary_shift(k, UNITARY_TOL)?;
    if !r.is_unitary {
        return Err(Error::NotUnitary {
            residual: r.b2_residual,
            tol: UNITARY_TOL,
        });
    }
    Ok(())
}

/// Coordinate matrix `I + K̂ᵀ` of the shift.
pub fn shift_matrix(k: &Kernel2) -> DMatrix<f64> {
    let m = k.grid().m();
    DMatrix::identity(m, m) + k.operator().transpose()
}

/// `Δy_i = Δw_i + dt Σ_j k[j][i] Δw_j`; works for any kernel.
pub fn apply_shift(k: &Kernel2, p: &Path) -> Result<Path> {
    k.grid().check(&p.grid())?;
    let dw = DVector::from_column_slice(p.increments());
    let dy = &dw + k.values().tr_mul(&dw) * k.grid().dt();
    Path::from_increments(p.grid(), dy.as_slice().to_vec(), p.stream())
}

/// Linear shift as a [`Transform`] on coordinates.
#[derive(Debug, Clone)]
pub struct ShiftTransform {
    kernel: Kernel2,
    map: DMatrix<f64>,
}

impl ShiftTransform {
    pub fn new(kernel: Kernel2) -> Self {
        let map = shift_matrix(&kernel);
        ShiftTransform { kernel, map }
    }

    pub fn kernel(&self) -> &Kernel2 {
        &self.kernel
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.map
    }
}

impl Transform for ShiftTransform {
    fn name(&self) -> String {
        "shift".into()
    }

    fn dim(&self) -> usize {
        self.kernel.grid().m()
    }

    fn apply_coords(&self, x: &Coordinates, _rng: &mut dyn RngCore) -> Coordinates {
        let y = &self.map * DVector::from_column_slice(x);
        Coordinates(y.as_slice().to_vec())
    }
}

/// Value of `I_n(h^{⊗n})` at coordinates `x` (zero for `h = 0`).
fn chaos_factor(order: usize, h: &HVector, x: &[f64]) -> f64 {
    let norm = h.norm_h();
    if norm == 0.0 {
        return 0.0;
    }
    let d = divergence_coords(&h.coords(), x);
    norm.powi(order as i32) * hermite(order, d / norm)
}

fn chaos_shift_coords(ks: &[ChaosKernel], x: &[f64]) -> Vec<f64> {
    let m = x.len();
    let sqrt_m = (m as f64).sqrt();
    let dt = 1.0 / m as f64;
    let mut y = x.to_vec();
    for k in ks {
        let c = chaos_factor(k.order(), k.h(), x);
        // coordinate increment √m · g(t_i) · c · dt
        for (yi, gi) in y.iter_mut().zip(k.g().density()) {
            *yi += sqrt_m * gi * c * dt;
        }
    }
    y
}

/// `Δy_i = Δw_i + Σ_n g_n(t_i) I_n(h_n^{⊗n}) dt` for separable kernels.
pub fn apply_chaos_shift(ks: &[ChaosKernel], p: &Path) -> Result<Path> {
    for k in ks {
        k.grid().check(&p.grid())?;
    }
    let y = chaos_shift_coords(ks, &p.coordinates());
    Path::from_coordinates(p.grid(), &y, p.stream())
}

/// Chaos shift as a [`Transform`]; not measure preserving once any order
/// exceeds one.
#[derive(Debug, Clone)]
pub struct ChaosShift {
    grid: Grid,
    kernels: Vec<ChaosKernel>,
}

impl ChaosShift {
    pub fn new(grid: Grid, kernels: Vec<ChaosKernel>) -> Result<Self> {
        for k in &kernels {
            grid.check(&k.grid())?;
        }
        Ok(ChaosShift { grid, kernels })
    }
}

impl Transform for ChaosShift {
    fn name(&self) -> String {
        let orders: Vec<String> = self.kernels.iter().map(|k| k.order().to_string()).collect();
        format!("chaos-shift[{}]", orders.join(","))
    }

    fn dim(&self) -> usize {
        self.grid.m()
    }

    fn apply_coords(&self, x: &Coordinates, _rng: &mut dyn RngCore) -> Coordinates {
        Coordinates(chaos_shift_coords(&self.kernels, x))
    }

    fn invertible(&self) -> bool {
        false
    }
}

fn spectral_gap(op: &DMatrix<f64>) -> Result<f64> {
    Ok(complex_eigenvalues(op)?
        .iter()
        .map(|l| (l + 1.0).norm())
        .fold(f64::INFINITY, f64::min))
}

/// Kernel of the inverse shift, operator `−(I + K)⁻¹ K`.
pub fn invert_shift(k: &Kernel2) -> Result<Kernel2> {
    let op = k.operator();
    let gap = spectral_gap(&op)?;
    if gap <= 1e-10 {
        return Err(Error::SingularShift { gap });
    }
    let m = k.grid().m();
    let inv = (DMatrix::identity(m, m) + &op)
        .lu()
        .try_inverse()
        .ok_or(Error::SingularShift { gap })?;
    Kernel2::from_operator(k.grid(), &(-(inv * op)))
}

/// `det₂(I + K) = Π (1 + λ) e^{−λ}` in polar form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Det2 {
    pub log_modulus: f64,
    /// Argument in `(−π, π]`.
    pub phase: f64,
}

impl Det2 {
    pub fn modulus(&self) -> f64 {
        self.log_modulus.exp()
    }

    pub fn value(&self) -> Complex64 {
        Complex64::from_polar(self.modulus(), self.phase)
    }
}

pub fn carleman_det2(k: &Kernel2) -> Result<Det2> {
    let mut log_modulus = 0.0;
    let mut phase = 0.0;
    for l in complex_eigenvalues(&k.operator())? {
        let one_plus = l + 1.0;
        log_modulus += one_plus.norm().ln() - l.re;
        phase += one_plus.arg() - l.im;
    }
    let phase = Complex64::from_polar(1.0, phase).arg();
    Ok(Det2 { log_modulus, phase })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadonNikodymReport {
    pub log_det2: f64,
    /// `−I₂(k) − ½ ∫ (∫ k(s,t) dw_s)² dt` on the path.
    pub stochastic_exponent: f64,
    /// `log |Λ| = log |det₂| + stochastic_exponent`.
    pub log_lambda: f64,
}

/// Density `Λ` of the shifted measure, prepared for repeated evaluation.
#[derive(Debug, Clone)]
pub struct RadonNikodym {
    kernel: Kernel2,
    log_det2: f64,
}

impl RadonNikodym {
    pub fn new(k: &Kernel2) -> Result<Self> {
        require_unitary(k)?;
        Ok(RadonNikodym {
            kernel: k.clone(),
            log_det2: carleman_det2(k)?.log_modulus,
        })
    }

    pub fn log_det2(&self) -> f64 {
        self.log_det2
    }

    /// `I₂(k)` is the off-diagonal double sum `Σ_{i≠j} k[i][j] Δw_i Δw_j`;
    /// the quadratic term is the rectangle rule in `t`.
    pub fn evaluate(&self, p: &Path) -> Result<RadonNikodymReport> {
        self.kernel.grid().check(&p.grid())?;
        let kv = self.kernel.values();
        let dt = self.kernel.grid().dt();
        let dw = DVector::from_column_slice(p.increments());
        let full = dw.dot(&(kv * &dw));
        let diag: f64 = (0..dw.len()).map(|i| kv[(i, i)] * dw[i] * dw[i]).sum();
        let i2 = full - diag;
        let inner = kv.tr_mul(&dw);
        let quad = 0.5 * dt * inner.norm_squared();
        let stochastic_exponent = -i2 - quad;
        Ok(RadonNikodymReport {
            log_det2: self.log_det2,
            stochastic_exponent,
            log_lambda: self.log_det2 + stochastic_exponent,
        })
    }
}

pub fn log_radon_nikodym(k: &Kernel2, p: &Path) -> Result<RadonNikodymReport> {
    RadonNikodym::new(k)?.evaluate(p)
}

/// Eigenpair `K z = λ z` with `|1 + λ| = 1`; `|δz|` is invariant under the
/// shift. `z = re + i·im`, normalized to `|re|² + |im|² = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantWitness {
    pub eigenvalue: Complex64,
    pub re: HVector,
    pub im: HVector,
}

impl InvariantWitness {
    pub fn evaluate(&self, p: &Path) -> Result<f64> {
        self.re.grid().check(&p.grid())?;
        Ok(self.evaluate_coords(&p.coordinates()))
    }

    pub fn evaluate_coords(&self, x: &[f64]) -> f64 {
        let a = divergence_coords(&self.re.coords(), x);
        let b = divergence_coords(&self.im.coords(), x);
        a.hypot(b)
    }

    /// `E|δz|` under Wiener measure. For real `z` this is the half-normal
    /// mean `√(2/π)`.
    pub fn is_real(&self) -> bool {
        self.im.is_zero()
    }
}

/// Non-ergodicity witness of a unitary shift: the eigenpair with the largest
/// `|λ|`, so a reflection yields `λ = −2`.
pub fn invariant_observable(k: &Kernel2) -> Result<InvariantWitness> {
    if k.is_zero() {
        return Err(Error::NoWitness("zero kernel is the identity transform".into()));
    }
    require_unitary(k)?;
    let m = k.grid().m();
    let o = DMatrix::identity(m, m) + k.operator();
    let eig = orthogonal_eigen(&o)?;
    let mut best = 0;
    let mut best_abs = -1.0;
    for idx in 0..eig.dim() {
        let lam = eig.eigenvalue(idx) - 1.0;
        // prefer the first of equally large ones, with a tie margin
        if lam.norm() > best_abs + 1e-12 {
            best_abs = lam.norm();
            best = idx;
        }
    }
    let v = &eig.vectors[best];
    let grid = k.grid();
    let re: Vec<f64> = v.iter().map(|z| z.re).collect();
    let im: Vec<f64> = v.iter().map(|z| z.im).collect();
    Ok(InvariantWitness {
        eigenvalue: eig.eigenvalue(best) - 1.0,
        re: HVector::from_coords(grid, &re)?,
        im: HVector::from_coords(grid, &im)?,
    })
}

/// Random kernel satisfying the unitarity condition: `K̂ = exp(S) − I` for
/// a skew `S` with `N(0, scale²/m)` entries.
pub fn random_unitary_kernel(grid: Grid, scale: f64, rng: &mut (impl Rng + ?Sized)) -> Kernel2 {
    let m = grid.m();
    let sd = scale / (m as f64).sqrt();
    let s = DMatrix::from_fn(m, m, |_, _| sd * rng.sample::<f64, _>(StandardNormal));
    Kernel2::from_orthogonal(grid, &exp_skew(&s)).expect("square of grid size")
}

/// `‖K‖²_HS / 2`, which equals `log |det₂(I + K)|` for unitary shifts.
pub fn half_hs_squared(k: &Kernel2) -> f64 {
    0.5 * hs_norm(k).powi(2)
}
