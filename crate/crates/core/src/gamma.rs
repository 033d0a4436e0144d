//! `dY_t = γ(t) dW_t` for a deterministic orthogonal matrix path `γ`.
//!
//! `Y` is again an `n`-dimensional Wiener process. The induced rotation of
//! Wiener space is ergodic exactly when no eigenphase `ψ_j(t)` of `γ(t)`
//! sits on one value for a positive-measure set of times, which is read off
//! the distribution functions `F_j(θ) = |{t : ψ_j(t) ≤ θ}|`.

use std::f64::consts::{PI, TAU};
use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::Path;
use crate::hilbert::Grid;
use crate::linalg::{exp_skew, orthogonal_eigen, orthogonality_residual, PHASE_CLUSTER_TOL};
use crate::rotation::{rotation_from_matrix, RotationOp};

/// Residual allowed in `γᵀγ = I`.
pub const GAMMA_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct GammaProcess {
    grid: Grid,
    n: usize,
    gammas: Vec<DMatrix<f64>>,
    phases: Vec<Vec<f64>>,
    frames: Vec<Vec<DVector<Complex64>>>,
}

/// Index ranges of equal phases within `tol`.
fn phase_groups(phases: &[f64]) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for k in 1..=phases.len() {
        if k == phases.len() || phases[k] - phases[start] > PHASE_CLUSTER_TOL * (k - start) as f64 {
            out.push(start..k);
            start = k;
        }
    }
    out
}

/// Rotates each eigenspace basis of `cur` to the one closest to `prev`
/// (unitary Procrustes), so the frames vary as little as the data allows.
fn continue_frames(prev: &[DVector<Complex64>], cur: &mut [DVector<Complex64>], phases: &[f64]) {
    for g in phase_groups(phases) {
        let k = g.len();
        let n = cur[0].len();
        let vc = DMatrix::from_fn(n, k, |r, c| cur[g.start + c][r]);
        let vp = DMatrix::from_fn(n, k, |r, c| prev[g.start + c][r]);
        let svd = (vc.adjoint() * &vp).svd(true, true);
        let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
            continue;
        };
        if svd.singular_values.iter().any(|s| *s < 1e-8) {
            continue;
        }
        let aligned = vc * (u * v_t);
        for c in 0..k {
            cur[g.start + c] = aligned.column(c).into_owned();
        }
    }
}

pub fn build_gamma(grid: Grid, blocks: Vec<DMatrix<f64>>) -> Result<GammaProcess> {
    if blocks.len() != grid.m() {
        return Err(Error::DimensionMismatch {
            expected: grid.m(),
            found: blocks.len(),
        });
    }
    let n = blocks.first().map(|b| b.nrows()).unwrap_or(0);
    if n == 0 {
        return Err(Error::DegenerateInput("empty γ blocks".into()));
    }
    let mut phases = Vec::with_capacity(blocks.len());
    let mut frames: Vec<Vec<DVector<Complex64>>> = Vec::with_capacity(blocks.len());
    for (i, b) in blocks.iter().enumerate() {
        if b.nrows() != n || b.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: if b.nrows() != n { b.nrows() } else { b.ncols() },
            });
        }
        let residual = orthogonality_residual(b);
        if residual > GAMMA_TOL {
            return Err(Error::NonOrthogonal { index: i, residual });
        }
        let eig = orthogonal_eigen(b)?;
        let mut vs = eig.vectors;
        if let Some(prev) = frames.last() {
            continue_frames(prev, &mut vs, &eig.phases);
        }
        phases.push(eig.phases);
        frames.push(vs);
    }
    Ok(GammaProcess {
        grid,
        n,
        gammas: blocks,
        phases,
        frames,
    })
}

impl GammaProcess {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn gamma(&self, i: usize) -> &DMatrix<f64> {
        &self.gammas[i]
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.gammas
    }

    /// Sorted eigenphases of `γ(t_i)` in `(0, 2π]`.
    pub fn phases(&self, i: usize) -> &[f64] {
        &self.phases[i]
    }

    pub fn frames(&self, i: usize) -> &[DVector<Complex64>] {
        &self.frames[i]
    }

    /// `γᵀ` on every interval.
    pub fn transposed(&self) -> Result<GammaProcess> {
        build_gamma(self.grid, self.gammas.iter().map(|g| g.transpose()).collect())
    }
}

/// The same `γ` on every interval.
pub fn constant_family(grid: Grid, gamma: &DMatrix<f64>) -> Result<GammaProcess> {
    build_gamma(grid, vec![gamma.clone(); grid.m()])
}

/// Block rotation by `angle` in the planes `(0,1), (2,3), …`; an odd last
/// axis stays fixed.
pub fn plane_rotation(n: usize, angle: f64) -> DMatrix<f64> {
    let mut a = DMatrix::identity(n, n);
    let (s, c) = angle.sin_cos();
    for p in 0..n / 2 {
        let (i, j) = (2 * p, 2 * p + 1);
        a[(i, i)] = c;
        a[(j, j)] = c;
        a[(j, i)] = s;
        a[(i, j)] = -s;
    }
    a
}

/// `γ(t)` rotates every plane by `2πt` (cell midpoints).
pub fn sweep_family(grid: Grid, n: usize) -> Result<GammaProcess> {
    let blocks = (0..grid.m()).map(|i| plane_rotation(n, TAU * grid.midpoint(i))).collect();
    build_gamma(grid, blocks)
}

/// Rotation by `π/3` on `[0, ½]` and by `π/2` on `(½, 1]`.
pub fn piecewise_family(grid: Grid, n: usize) -> Result<GammaProcess> {
    let blocks = (0..grid.m())
        .map(|i| {
            let angle = if grid.midpoint(i) <= 0.5 { PI / 3.0 } else { PI / 2.0 };
            plane_rotation(n, angle)
        })
        .collect();
    build_gamma(grid, blocks)
}

/// `γ(t) = exp(S₀ + tS₁)·D` with random skew `S₀, S₁` and a random sign
/// diagonal `D`.
pub fn random_family(grid: Grid, n: usize, rng: &mut (impl Rng + ?Sized)) -> Result<GammaProcess> {
    let mut skew = || DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let (s0, s1) = (skew(), skew());
    let d = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 }));
    let blocks = (0..grid.m())
        .map(|i| exp_skew(&(&s0 + &s1 * grid.midpoint(i))) * &d)
        .collect();
    build_gamma(grid, blocks)
}

/// `n` paths on one grid; increments stored at `i·n + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    grid: Grid,
    n: usize,
    increments: Vec<f64>,
}

impl PathBundle {
    pub fn new(grid: Grid, n: usize, increments: Vec<f64>) -> Result<Self> {
        if increments.len() != grid.m() * n {
            return Err(Error::DimensionMismatch {
                expected: grid.m() * n,
                found: increments.len(),
            });
        }
        Ok(PathBundle { grid, n, increments })
    }

    pub fn sample(grid: Grid, n: usize, rng: &mut (impl Rng + ?Sized)) -> Self {
        let sd = grid.dt().sqrt();
        let increments = (0..grid.m() * n).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect();
        PathBundle { grid, n, increments }
    }

    pub fn from_components(paths: &[Path]) -> Result<Self> {
        let grid = paths.first().ok_or(Error::DegenerateInput("no components".into()))?.grid();
        for p in paths {
            grid.check(&p.grid())?;
        }
        let n = paths.len();
        let mut increments = vec![0.0; grid.m() * n];
        for (k, p) in paths.iter().enumerate() {
            for (i, d) in p.increments().iter().enumerate() {
                increments[i * n + k] = *d;
            }
        }
        Ok(PathBundle { grid, n, increments })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn component(&self, k: usize) -> Result<Path> {
        let inc = (0..self.grid.m()).map(|i| self.increments[i * self.n + k]).collect();
        Path::from_increments(self.grid, inc, k as u64)
    }

    /// Coordinates `√m·ΔW` in the `i·n + k` layout.
    pub fn coordinates(&self) -> Vec<f64> {
        let s = (self.grid.m() as f64).sqrt();
        self.increments.iter().map(|d| d * s).collect()
    }
}

/// `ΔY_i = γ(t_i) ΔW_i`.
pub fn apply_gamma(g: &GammaProcess, w: &PathBundle) -> Result<PathBundle> {
    g.grid.check(&w.grid)?;
    if w.n != g.n {
        return Err(Error::DimensionMismatch {
            expected: g.n,
            found: w.n,
        });
    }
    let n = g.n;
    let mut out = Vec::with_capacity(w.increments.len());
    for (i, gam) in g.gammas.iter().enumerate() {
        let dw = DVector::from_column_slice(&w.increments[i * n..(i + 1) * n]);
        out.extend((gam * dw).iter());
    }
    PathBundle::new(w.grid, n, out)
}

/// `h : [0,1] → Rⁿ` with piecewise constant density, stored at `i·n + k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HBundle {
    grid: Grid,
    n: usize,
    density: Vec<f64>,
}

impl HBundle {
    pub fn new(grid: Grid, n: usize, density: Vec<f64>) -> Result<Self> {
        if density.len() != grid.m() * n {
            return Err(Error::DimensionMismatch {
                expected: grid.m() * n,
                found: density.len(),
            });
        }
        Ok(HBundle { grid, n, density })
    }

    /// Samples `h'(t) ∈ Rⁿ` at cell midpoints.
    pub fn from_fn(grid: Grid, n: usize, f: impl Fn(f64) -> Vec<f64>) -> Result<Self> {
        let mut density = Vec::with_capacity(grid.m() * n);
        for i in 0..grid.m() {
            let v = f(grid.midpoint(i));
            if v.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: v.len(),
                });
            }
            density.extend(v);
        }
        Ok(HBundle { grid, n, density })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn density_at(&self, i: usize) -> &[f64] {
        &self.density[i * self.n..(i + 1) * self.n]
    }

    pub fn norm_sq(&self) -> f64 {
        self.grid.dt() * self.density.iter().map(|d| d * d).sum::<f64>()
    }

    pub fn coordinates(&self) -> Vec<f64> {
        let s = 1.0 / (self.grid.m() as f64).sqrt();
        self.density.iter().map(|d| d * s).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    /// Right edge of the θ bin holding the jump.
    pub theta: f64,
    /// Mean phase of the cells that land in the bin.
    pub location: f64,
    pub size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelDistribution {
    /// 1-based eigenphase index.
    pub j: usize,
    /// `2πk/N` for `k = 1..=N`.
    pub thetas: Vec<f64>,
    pub f: Vec<f64>,
    pub jumps: Vec<Jump>,
    pub threshold: f64,
}

impl LevelDistribution {
    pub fn max_jump(&self) -> f64 {
        let mut prev = 0.0;
        self.f
            .iter()
            .map(|v| {
                let d = v - prev;
                prev = *v;
                d
            })
            .fold(0.0, f64::max)
    }

    /// Value at `θ` by right-continuous step interpolation on the θ grid.
    pub fn at(&self, theta: f64) -> f64 {
        let k = self.thetas.partition_point(|t| *t <= theta + 1e-12);
        if k == 0 {
            0.0
        } else {
            self.f[k - 1]
        }
    }
}

/// Default jump threshold `2·dt + Δθ`.
pub fn default_jump_threshold(grid: Grid, theta_resolution: usize) -> f64 {
    2.0 * grid.dt() + TAU / theta_resolution as f64
}

pub fn level_distribution(g: &GammaProcess, j: usize, theta_resolution: usize) -> Result<LevelDistribution> {
    level_distribution_with_threshold(g, j, theta_resolution, default_jump_threshold(g.grid, theta_resolution))
}

/// `F_j(θ) = ∫₀¹ u(θ − ψ_j(t)) dt` on `θ_k = 2πk/N`; bins whose increment
/// exceeds `threshold` are reported as jumps.
pub fn level_distribution_with_threshold(
    g: &GammaProcess,
    j: usize,
    theta_resolution: usize,
    threshold: f64,
) -> Result<LevelDistribution> {
    if j == 0 || j > g.n {
        return Err(Error::DegenerateInput(format!("phase index {j} outside 1..={}", g.n)));
    }
    if theta_resolution == 0 {
        return Err(Error::DegenerateInput("zero θ resolution".into()));
    }
    let nt = theta_resolution;
    let dt = g.grid.dt();
    let width = TAU / nt as f64;
    let mut mass = vec![0.0; nt];
    let mut phase_sum = vec![0.0; nt];
    for ph in &g.phases {
        let psi = ph[j - 1];
        // bin k covers (θ_{k-1}, θ_k]
        let k = (((psi - 1e-12) / width).ceil() as usize).clamp(1, nt) - 1;
        mass[k] += dt;
        phase_sum[k] += psi * dt;
    }
    let thetas: Vec<f64> = (1..=nt).map(|k| TAU * k as f64 / nt as f64).collect();
    let mut f = Vec::with_capacity(nt);
    let mut acc = 0.0;
    for mk in &mass {
        acc += mk;
        f.push(acc);
    }
    let jumps = (0..nt)
        .filter(|&k| mass[k] > threshold)
        .map(|k| Jump {
            theta: thetas[k],
            location: phase_sum[k] / mass[k],
            size: mass[k],
        })
        .collect();
    Ok(LevelDistribution {
        j,
        thetas,
        f,
        jumps,
        threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GammaVerdict {
    #[serde(rename = "ERGODIC-LIMIT")]
    ErgodicLimit,
    #[serde(rename = "NON-ERGODIC")]
    NonErgodic,
}

impl fmt::Display for GammaVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GammaVerdict::ErgodicLimit => "ERGODIC-LIMIT",
            GammaVerdict::NonErgodic => "NON-ERGODIC",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Offender {
    pub j: usize,
    pub theta: f64,
    pub measure: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaReport {
    pub verdict: GammaVerdict,
    pub offenders: Vec<Offender>,
    pub odd_dimension: bool,
    /// For odd `n`: total time during which `±1` is an eigenvalue.
    pub real_eigenvalue_measure: Option<f64>,
    pub note: String,
}

/// Flags every `F_j` jump above `jump_tol`.
///
/// For odd `n` some eigenvalue is `±1` at every `t`, so the phases `π` and
/// `2π` together carry time `1`; with `n` eigenphase functions at least one
/// of them sits on `π` or `2π` for time `≥ 1/(2n)`.
pub fn gamma_ergodicity(g: &GammaProcess, jump_tol: f64, theta_resolution: usize) -> Result<GammaReport> {
    let mut offenders = Vec::new();
    for j in 1..=g.n {
        let ld = level_distribution_with_threshold(g, j, theta_resolution, jump_tol)?;
        offenders.extend(ld.jumps.iter().map(|jp| Offender {
            j,
            theta: jp.location,
            measure: jp.size,
        }));
    }
    let odd = g.n % 2 == 1;
    let real_eigenvalue_measure = odd.then(|| {
        let dt = g.grid.dt();
        g.phases
            .iter()
            .filter(|ph| ph.iter().any(|p| (p - PI).abs() <= 1e-8 || (TAU - p) <= 1e-8))
            .count() as f64
            * dt
    });
    let mut note = String::new();
    if odd {
        let on_real = offenders
            .iter()
            .any(|o| (o.theta - PI).abs() <= 1e-8 || (TAU - o.theta).abs() <= 1e-8);
        note = if on_real {
            "odd dimension: an eigenvalue ±1 persists, jump at π or 2π".into()
        } else {
            "odd dimension but no jump at π or 2π above the tolerance".into()
        };
    }
    let verdict = if offenders.is_empty() {
        GammaVerdict::ErgodicLimit
    } else {
        GammaVerdict::NonErgodic
    };
    Ok(GammaReport {
        verdict,
        offenders,
        odd_dimension: odd,
        real_eigenvalue_measure,
        note,
    })
}

/// `|Π_θ h|² = ∫ Σ_j u(θ − ψ_j(t)) |(a_j(t), h'(t))|² dt` by the rectangle rule.
pub fn pi_theta_norm(g: &GammaProcess, h: &HBundle, theta: f64) -> Result<f64> {
    g.grid.check(&h.grid)?;
    if h.n != g.n {
        return Err(Error::DimensionMismatch {
            expected: g.n,
            found: h.n,
        });
    }
    let dt = g.grid.dt();
    let mut total = 0.0;
    for i in 0..g.grid.m() {
        let hp = h.density_at(i);
        for (psi, a) in g.phases[i].iter().zip(&g.frames[i]) {
            if *psi <= theta + 1e-12 {
                let proj: Complex64 = a.iter().zip(hp).map(|(ak, hk)| ak.conj() * hk).sum();
                total += dt * proj.norm_sqr();
            }
        }
    }
    Ok(total)
}

/// Rotation of the `nm`-dimensional coordinate space induced by `γ`;
/// its matrix is block-diagonal with blocks `γ(t_i)ᵀ`, so coordinates
/// map by `γ(t_i)` on each interval.
pub fn induced_rotation(g: &GammaProcess) -> Result<RotationOp> {
    let n = g.n;
    let dim = n * g.grid.m();
    let mut a = DMatrix::zeros(dim, dim);
    for (i, gam) in g.gammas.iter().enumerate() {
        a.view_mut((i * n, i * n), (n, n)).copy_from(&gam.transpose());
    }
    rotation_from_matrix(&a)
}
