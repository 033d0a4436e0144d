//! Rotations of Wiener space induced by orthogonal operators on `H`.
//!
//! For `R` with matrix `A` (`A_ij = (Re_j, e_i)_H`) the transformation acts on
//! coordinates by `x ↦ Aᵀx`, which is what makes `δh∘T = δ(Rh)` hold.
//! Spectral data of `R` then describes the dynamics on the first chaos.

use std::f64::consts::TAU;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{divergence_coords, double_integral_coords, Coordinates, Path};
use crate::hilbert::{Grid, HVector};
use crate::linalg::{orthogonal_eigen, orthogonality_residual, rank, wrap_phase, OrthoEigen, PHASE_CLUSTER_TOL};
use crate::rng::StreamFactory;
use crate::shift::InvariantWitness;
use crate::stats::{CompensatedSum, Moments};
use crate::transform::Transform;

/// Residual allowed in `AᵀA = I`.
pub const ROTATION_TOL: f64 = 1e-10;

/// Relative weight below which an atom is dropped from a spectral measure.
const WEIGHT_FLOOR: f64 = 1e-14;

/// Dynamics whose action on the first chaos is linear: `δh∘T` equals
/// `δ(Rh)` plus, possibly, a term independent of the past.
pub trait LinearDynamics: Transform {
    fn grid(&self) -> Grid;

    /// Coordinates of `Rh` given those of `h`.
    fn push_coords(&self, c: &[f64]) -> Vec<f64>;

    fn spectrum(&self) -> Option<&OrthoEigen> {
        None
    }
}

#[derive(Debug, Clone)]
pub struct RotationOp {
    grid: Grid,
    a: DMatrix<f64>,
    at: DMatrix<f64>,
    eig: OrthoEigen,
}

pub fn rotation_from_matrix(a: &DMatrix<f64>) -> Result<RotationOp> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: a.ncols(),
        });
    }
    let grid = Grid::new(a.nrows())?;
    let residual = orthogonality_residual(a).max(orthogonality_residual(&a.transpose()));
    if residual > ROTATION_TOL {
        return Err(Error::NotUnitary {
            residual,
            tol: ROTATION_TOL,
        });
    }
    let eig = orthogonal_eigen(a)?;
    Ok(RotationOp {
        grid,
        a: a.clone(),
        at: a.transpose(),
        eig,
    })
}

impl RotationOp {
    pub fn identity(m: usize) -> Result<Self> {
        rotation_from_matrix(&DMatrix::identity(m, m))
    }

    /// Rotation by `alpha` in the plane of `e_i, e_j`, identity elsewhere.
    pub fn planar(m: usize, i: usize, j: usize, alpha: f64) -> Result<Self> {
        if i >= m || j >= m || i == j {
            return Err(Error::DegenerateInput(format!("plane ({i}, {j}) in dimension {m}")));
        }
        let mut a = DMatrix::identity(m, m);
        let (s, c) = alpha.sin_cos();
        a[(i, i)] = c;
        a[(j, j)] = c;
        a[(j, i)] = s;
        a[(i, j)] = -s;
        rotation_from_matrix(&a)
    }

    /// `R e_i = e_{i+1 mod m}`; phases `2πk/m`, and `e_1` has equal weight on
    /// each of them.
    pub fn cyclic(m: usize) -> Result<Self> {
        let a = DMatrix::from_fn(m, m, |r, c| if r == (c + 1) % m { 1.0 } else { 0.0 });
        rotation_from_matrix(&a)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn eigen(&self) -> &OrthoEigen {
        &self.eig
    }

    pub fn phases(&self) -> &[f64] {
        &self.eig.phases
    }

    pub fn apply_h(&self, h: &HVector) -> Result<HVector> {
        self.grid.check(&h.grid())?;
        HVector::from_coords(self.grid, &self.push_coords(&h.coords()))
    }
}

impl Transform for RotationOp {
    fn name(&self) -> String {
        "rotation".into()
    }

    fn dim(&self) -> usize {
        self.grid.m()
    }

    fn apply_coords(&self, x: &Coordinates, _rng: &mut dyn RngCore) -> Coordinates {
        let y = &self.at * DVector::from_column_slice(x);
        Coordinates(y.as_slice().to_vec())
    }
}

impl LinearDynamics for RotationOp {
    fn grid(&self) -> Grid {
        self.grid
    }

    fn push_coords(&self, c: &[f64]) -> Vec<f64> {
        (&self.a * DVector::from_column_slice(c)).as_slice().to_vec()
    }

    fn spectrum(&self) -> Option<&OrthoEigen> {
        Some(&self.eig)
    }
}

pub fn apply_rotation(r: &RotationOp, p: &Path) -> Result<Path> {
    r.grid.check(&p.grid())?;
    let y = r.apply_coords(&p.coordinates(), &mut StreamFactory::inert());
    Path::from_coordinates(p.grid(), &y, p.stream())
}

/// `F = c + δh + Σ a·I₂(u ⊙ v)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChaosRep {
    pub constant: f64,
    pub first: Option<HVector>,
    pub second: Vec<(f64, HVector, HVector)>,
}

impl ChaosRep {
    pub fn constant(c: f64) -> Self {
        ChaosRep {
            constant: c,
            first: None,
            second: Vec::new(),
        }
    }

    /// `I_n(h^{⊗n})` for `n ≤ 2`.
    pub fn power(order: usize, h: &HVector) -> Result<Self> {
        match order {
            0 => Ok(Self::constant(1.0)),
            1 => Ok(ChaosRep {
                constant: 0.0,
                first: Some(h.clone()),
                second: Vec::new(),
            }),
            2 => Ok(ChaosRep {
                constant: 0.0,
                first: None,
                second: vec![(1.0, h.clone(), h.clone())],
            }),
            n => Err(Error::UnsupportedOrder(n)),
        }
    }

    pub fn evaluate(&self, p: &Path) -> Result<f64> {
        for h in self.vectors() {
            h.grid().check(&p.grid())?;
        }
        Ok(self.evaluate_coords(&p.coordinates()))
    }

    pub fn evaluate_coords(&self, x: &[f64]) -> f64 {
        let mut s = CompensatedSum::new();
        s.add(self.constant);
        if let Some(h) = &self.first {
            s.add(divergence_coords(&h.coords(), x));
        }
        for (a, u, v) in &self.second {
            s.add(a * double_integral_coords(&u.coords(), &v.coords(), x));
        }
        s.value()
    }

    /// Symmetric matrix of the second-order kernel in coordinates.
    pub fn second_order_matrix(&self, m: usize) -> DMatrix<f64> {
        let mut k = DMatrix::zeros(m, m);
        for (a, u, v) in &self.second {
            let (u, v) = (DVector::from_vec(u.coords()), DVector::from_vec(v.coords()));
            k += (&u * v.transpose() + &v * u.transpose()) * (0.5 * a);
        }
        k
    }

    fn vectors(&self) -> impl Iterator<Item = &HVector> {
        self.first.iter().chain(self.second.iter().flat_map(|(_, u, v)| [u, v]))
    }
}

/// `F ↦ F∘T`: each `h` in the representation is replaced by `Rh`.
pub fn chaos_pushforward(r: &RotationOp, f: &ChaosRep) -> Result<ChaosRep> {
    let first = f.first.as_ref().map(|h| r.apply_h(h)).transpose()?;
    let second = f
        .second
        .iter()
        .map(|(a, u, v)| Ok((*a, r.apply_h(u)?, r.apply_h(v)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ChaosRep {
        constant: f.constant,
        first,
        second,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub theta: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralMeasure {
    pub atoms: Vec<Atom>,
}

impl SpectralMeasure {
    pub fn total(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).collect::<CompensatedSum>().value()
    }

    pub fn heaviest(&self) -> Option<Atom> {
        self.atoms.iter().copied().fold(None, |best: Option<Atom>, a| match best {
            Some(b) if b.weight >= a.weight => Some(b),
            _ => Some(a),
        })
    }

    /// `∫ e^{inθ} dμ`, real part.
    pub fn fourier(&self, n: usize) -> f64 {
        self.atoms
            .iter()
            .map(|a| a.weight * (n as f64 * a.theta).cos())
            .collect::<CompensatedSum>()
            .value()
    }
}

fn eigen_weights(eig: &OrthoEigen, c: &[f64]) -> Vec<Complex64> {
    eig.vectors
        .iter()
        .map(|v| v.iter().zip(c).map(|(vi, ci)| vi.conj() * ci).sum())
        .collect()
}

/// Atoms `(θ_k, |⟨v_k, h⟩|²)`, with phases closer than `tol` merged.
pub fn spectral_measure_with_tol(r: &RotationOp, h: &HVector, tol: f64) -> Result<SpectralMeasure> {
    r.grid.check(&h.grid())?;
    if h.is_zero() {
        return Err(Error::DegenerateInput("spectral measure of the zero vector".into()));
    }
    let total = h.norm_h().powi(2);
    let coef = eigen_weights(&r.eig, &h.coords());
    let mut atoms: Vec<Atom> = Vec::new();
    let mut group_start = f64::NAN;
    for (theta, c) in r.eig.phases.iter().zip(&coef) {
        match atoms.last_mut() {
            Some(last) if theta - group_start <= tol => last.weight += c.norm_sqr(),
            _ => {
                group_start = *theta;
                atoms.push(Atom {
                    theta: *theta,
                    weight: c.norm_sqr(),
                })
            }
        }
    }
    atoms.retain(|a| a.weight > WEIGHT_FLOOR * total);
    Ok(SpectralMeasure { atoms })
}

pub fn spectral_measure(r: &RotationOp, h: &HVector) -> Result<SpectralMeasure> {
    spectral_measure_with_tol(r, h, PHASE_CLUSTER_TOL)
}

/// `a[n] = (Rⁿh, h)_H` for `n = 0..=n_max`; from the spectral measure when
/// the dynamics has one, otherwise by iterating `R`.
pub fn autocorrelation(r: &dyn LinearDynamics, h: &HVector, n_max: usize) -> Result<Vec<f64>> {
    r.grid().check(&h.grid())?;
    let c = h.coords();
    if let Some(eig) = r.spectrum() {
        let coef = eigen_weights(eig, &c);
        return Ok((0..=n_max)
            .map(|n| {
                eig.phases
                    .iter()
                    .zip(&coef)
                    .map(|(t, w)| w.norm_sqr() * (n as f64 * t).cos())
                    .collect::<CompensatedSum>()
                    .value()
            })
            .collect());
    }
    let mut cur = c.clone();
    let mut out = Vec::with_capacity(n_max + 1);
    for _ in 0..=n_max {
        out.push(cur.iter().zip(&c).map(|(a, b)| a * b).collect::<CompensatedSum>().value());
        cur = r.push_coords(&cur);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "NON-ERGODIC")]
    NonErgodic,
    #[serde(rename = "MIXING-LIKE")]
    MixingLike,
    #[serde(rename = "INCONCLUSIVE")]
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::NonErgodic => "NON-ERGODIC",
            Verdict::MixingLike => "MIXING-LIKE",
            Verdict::Inconclusive => "INCONCLUSIVE",
        })
    }
}

/// `|δz|` for `z` in the eigenspace of `e^{iθ}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseWitness {
    pub theta: f64,
    pub re: HVector,
    pub im: HVector,
    /// Largest `| |δz|∘T − |δz| |` seen on the check points.
    pub residual: f64,
}

impl PhaseWitness {
    pub fn witness(&self) -> InvariantWitness {
        InvariantWitness {
            eigenvalue: Complex64::from_polar(1.0, self.theta),
            re: self.re.clone(),
            im: self.im.clone(),
        }
    }

    pub fn evaluate_coords(&self, x: &[f64]) -> f64 {
        self.witness().evaluate_coords(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub atoms: Vec<Atom>,
    /// First lag from which `|a[n]| ≤ atom_tol·|h|²` up to the horizon.
    pub decay_lag: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyReport {
    pub verdict: Verdict,
    pub horizon: usize,
    pub probes: Vec<ProbeReport>,
    pub witness: Option<PhaseWitness>,
    pub note: String,
}

fn decay_lag(a: &[f64], tol: f64) -> Option<usize> {
    let mut lag = a.len();
    for n in (1..a.len()).rev() {
        if a[n].abs() > tol {
            break;
        }
        lag = n;
    }
    (lag < a.len()).then_some(lag)
}

/// Projection of `c` onto the eigenspace of phase `theta`, normalized.
fn eigenspace_projection(eig: &OrthoEigen, c: &[f64], theta: f64, tol: f64) -> DVector<Complex64> {
    let coef = eigen_weights(eig, c);
    let m = c.len();
    let mut z = DVector::<Complex64>::zeros(m);
    for ((t, v), w) in eig.phases.iter().zip(&eig.vectors).zip(&coef) {
        if (t - theta).abs() <= tol {
            z += v * *w;
        }
    }
    let n = z.norm();
    z / Complex64::from(n)
}

fn witness_from(grid: Grid, theta: f64, z: &DVector<Complex64>) -> Result<PhaseWitness> {
    let re: Vec<f64> = z.iter().map(|c| c.re).collect();
    let im: Vec<f64> = z.iter().map(|c| c.im).collect();
    Ok(PhaseWitness {
        theta,
        re: HVector::from_coords(grid, &re)?,
        im: HVector::from_coords(grid, &im)?,
        residual: 0.0,
    })
}

/// Spectral classification on the span of `probes`.
///
/// Rotations always end up NON-ERGODIC: a finite-dimensional orthogonal
/// operator has pure point spectrum, so some probe carries an atom and the
/// eigenspace projection `z` of that probe gives the invariant `|δz|`.
/// Dynamics without a spectrum are judged by their autocorrelations over
/// `2m` lags.
pub fn classify(r: &dyn LinearDynamics, probes: &[HVector], atom_tol: f64) -> Result<ClassifyReport> {
    let grid = r.grid();
    let m = grid.m();
    for p in probes {
        grid.check(&p.grid())?;
    }
    let mat = DMatrix::from_fn(m, probes.len(), |i, j| probes[j].coords()[i]);
    let rk = if probes.is_empty() { 0 } else { rank(&mat, 1e-10) };
    if rk < m {
        return Err(Error::RankDeficient { rank: rk, needed: m });
    }
    let horizon = 2 * m;
    let mut reports = Vec::with_capacity(probes.len());
    let mut heaviest: Option<(usize, Atom)> = None;
    for (idx, h) in probes.iter().enumerate() {
        let norm2 = h.norm_h().powi(2);
        let atoms = match r.spectrum() {
            Some(_) if !h.is_zero() => {
                let rot = rotation_view(r)?;
                spectral_measure(&rot, h)?.atoms
            }
            _ => Vec::new(),
        };
        for a in &atoms {
            if a.weight > atom_tol && heaviest.is_none_or(|(_, b)| a.weight > b.weight) {
                heaviest = Some((idx, *a));
            }
        }
        let ac = autocorrelation(r, h, horizon)?;
        reports.push(ProbeReport {
            atoms,
            decay_lag: decay_lag(&ac, atom_tol * norm2.max(f64::MIN_POSITIVE)),
        });
    }

    let (verdict, witness, note) = match (r.spectrum(), heaviest) {
        (Some(eig), Some((idx, atom))) => {
            let z = eigenspace_projection(eig, &probes[idx].coords(), atom.theta, PHASE_CLUSTER_TOL);
            let mut w = witness_from(grid, atom.theta, &z)?;
            w.residual = witness_residual(r, &w, probes);
            (
                Verdict::NonErgodic,
                Some(w),
                "finite-dimensional unitary: pure point spectrum, hence never ergodic".to_string(),
            )
        }
        (Some(_), None) => (
            Verdict::Inconclusive,
            None,
            format!("no atom heavier than {atom_tol}"),
        ),
        (None, _) if reports.iter().all(|p| p.decay_lag.is_some()) => (
            Verdict::MixingLike,
            None,
            format!("all probe autocorrelations vanish within {horizon} lags"),
        ),
        (None, _) => (
            Verdict::Inconclusive,
            None,
            "autocorrelations persist over the horizon".to_string(),
        ),
    };
    Ok(ClassifyReport {
        verdict,
        horizon,
        probes: reports,
        witness,
        note,
    })
}

fn rotation_view(r: &dyn LinearDynamics) -> Result<RotationOp> {
    let m = r.grid().m();
    let cols: Vec<Vec<f64>> = (0..m)
        .map(|j| {
            let mut e = vec![0.0; m];
            e[j] = 1.0;
            r.push_coords(&e)
        })
        .collect();
    let a = DMatrix::from_fn(m, m, |i, j| cols[j][i]);
    let eig = r.spectrum().expect("checked by caller").clone();
    Ok(RotationOp {
        grid: r.grid(),
        at: a.transpose(),
        a,
        eig,
    })
}

/// Checks `|δz|∘T = |δz|` on the probe coordinates and a few fixed points.
fn witness_residual(r: &dyn LinearDynamics, w: &PhaseWitness, probes: &[HVector]) -> f64 {
    let m = r.grid().m();
    let mut rng = StreamFactory::inert();
    let mut points: Vec<Vec<f64>> = probes.iter().map(|p| p.coords()).collect();
    points.push(vec![1.0; m]);
    points.push((0..m).map(|i| ((i + 1) as f64).sin()).collect());
    points
        .iter()
        .map(|x| {
            let y = r.apply_coords(&Coordinates(x.clone()), &mut rng);
            (w.evaluate_coords(&y) - w.evaluate_coords(x)).abs()
        })
        .fold(0.0, f64::max)
}

/// Index pairs `j ≤ k` with `θ_j + θ_k ≡ 0 (mod 2π)` within `tol`.
pub fn complementary_phase_pairs(phases: &[f64], tol: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for j in 0..phases.len() {
        for k in j..phases.len() {
            let s = (phases[j] + phases[k]).rem_euclid(TAU);
            if s.min(TAU - s) <= tol {
                out.push((j, k));
            }
        }
    }
    out
}

/// Real invariant functionals `Re, Im I₂(v_j ⊙ v_k)` for every complementary
/// eigenphase pair.
pub fn find_invariant_chaos2(r: &RotationOp, phase_tol: f64) -> Result<Vec<ChaosRep>> {
    let grid = r.grid;
    let m = grid.m();
    let mut out = Vec::new();
    for (j, k) in complementary_phase_pairs(&r.eig.phases, phase_tol) {
        let (u, v) = (&r.eig.vectors[j], &r.eig.vectors[k]);
        let part = |f: fn(&Complex64) -> f64, z: &DVector<Complex64>| -> Result<HVector> {
            HVector::from_coords(grid, &z.iter().map(f).collect::<Vec<_>>())
        };
        let (a, b) = (part(|z| z.re, u)?, part(|z| z.im, u)?);
        let (c, d) = (part(|z| z.re, v)?, part(|z| z.im, v)?);
        let candidates = [
            vec![(1.0, a.clone(), c.clone()), (-1.0, b.clone(), d.clone())],
            vec![(1.0, a, d), (1.0, b, c)],
        ];
        for second in candidates {
            let f = ChaosRep {
                constant: 0.0,
                first: None,
                second,
            };
            if f.second_order_matrix(m).norm() > 1e-9 {
                out.push(f);
            }
        }
    }
    Ok(out)
}

/// `(1/N) Σ_{k<N} F(T^k p)`.
pub fn birkhoff_average(
    t: &dyn Transform,
    f: &dyn Fn(&[f64]) -> f64,
    p: &Path,
    n: usize,
    rng: &mut dyn RngCore,
) -> Result<f64> {
    Ok(*birkhoff_trace(t, f, p, n, rng)?.last().expect("n ≥ 1"))
}

/// Running averages `(1/N) Σ_{k<N} F(T^k p)` for `N = 1..=n`.
pub fn birkhoff_trace(
    t: &dyn Transform,
    f: &dyn Fn(&[f64]) -> f64,
    p: &Path,
    n: usize,
    rng: &mut dyn RngCore,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::DegenerateInput("Birkhoff average over zero steps".into()));
    }
    if p.grid().m() != t.dim() {
        return Err(Error::DimensionMismatch {
            expected: t.dim(),
            found: p.grid().m(),
        });
    }
    let mut x = p.coordinates();
    let mut s = CompensatedSum::new();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        s.add(f(&x));
        out.push(s.value() / (k + 1) as f64);
        if k + 1 < n {
            x = t.apply_coords(&x, rng);
        }
    }
    Ok(out)
}

/// `ρ(δh) = exp(δh − |h|²/2)` on coordinates.
pub fn wick_coords(c: &[f64], x: &[f64]) -> f64 {
    let n2: f64 = c.iter().map(|v| v * v).sum();
    (divergence_coords(c, x) - 0.5 * n2).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingSeries {
    /// Monte Carlo `E[(ρ∘Tⁿ − 1)(ρ − 1)]`.
    pub mc: Vec<f64>,
    pub std_error: Vec<f64>,
    /// `exp(a[n]) − 1`.
    pub analytic: Vec<f64>,
    pub paths: usize,
}

impl MixingSeries {
    /// Largest `|mc − analytic| / se` over lags with a positive standard error.
    pub fn max_z(&self) -> f64 {
        self.mc
            .iter()
            .zip(&self.analytic)
            .zip(&self.std_error)
            .filter(|(_, se)| **se > 0.0)
            .map(|((m, a), se)| (m - a).abs() / se)
            .fold(0.0, f64::max)
    }
}

pub fn mixing_correlation(
    r: &dyn LinearDynamics,
    h: &HVector,
    n_max: usize,
    mc_paths: usize,
    streams: &StreamFactory,
) -> Result<MixingSeries> {
    let analytic: Vec<f64> = autocorrelation(r, h, n_max)?.iter().map(|a| a.exp_m1()).collect();
    let c = h.coords();
    let m = r.grid().m();
    let rows: Vec<Vec<f64>> = streams.par_paths(mc_paths, |_, rng| {
        let mut x = Coordinates::standard_normal(m, rng);
        let f0 = wick_coords(&c, &x) - 1.0;
        let mut row = Vec::with_capacity(n_max + 1);
        for n in 0..=n_max {
            row.push((wick_coords(&c, &x) - 1.0) * f0);
            if n < n_max {
                x = r.apply_coords(&x, rng);
            }
        }
        row
    });
    let mut mc = Vec::with_capacity(n_max + 1);
    let mut std_error = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let col: Vec<f64> = rows.iter().map(|row| row[n]).collect();
        let mo = Moments::of(&col);
        mc.push(mo.mean);
        std_error.push(mo.std_error());
    }
    Ok(MixingSeries {
        mc,
        std_error,
        analytic,
        paths: mc_paths,
    })
}

/// `x ↦ (x₂, …, x_m, ξ)` with fresh `ξ ~ N(0,1)`: a measure preserving,
/// non-invertible shift of the coordinate sequence.
#[derive(Debug, Clone, Copy)]
pub struct BasisShift {
    grid: Grid,
}

pub fn basis_shift_operator(m: usize) -> Result<BasisShift> {
    Ok(BasisShift { grid: Grid::new(m)? })
}

impl Transform for BasisShift {
    fn name(&self) -> String {
        "basis-shift".into()
    }

    fn dim(&self) -> usize {
        self.grid.m()
    }

    fn apply_coords(&self, x: &Coordinates, rng: &mut dyn RngCore) -> Coordinates {
        let mut y = Vec::with_capacity(x.len());
        y.extend_from_slice(&x[1..]);
        y.push(StandardNormal.sample(rng));
        Coordinates(y)
    }

    fn invertible(&self) -> bool {
        false
    }
}

impl LinearDynamics for BasisShift {
    fn grid(&self) -> Grid {
        self.grid
    }

    fn push_coords(&self, c: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(c.len());
        out.push(0.0);
        out.extend_from_slice(&c[..c.len() - 1]);
        out
    }
}

/// Averaged periodogram of the stationary sequence `X_n = δh(Tⁿw)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Periodogram {
    /// `2πj/len` for `j = 1..=len`.
    pub freqs: Vec<f64>,
    /// `E|Σ_n X_n e^{−inω}|² / len²`; an atom on a bin shows its weight.
    pub power: Vec<f64>,
}

impl Periodogram {
    pub fn bin_width(&self) -> f64 {
        TAU / self.freqs.len() as f64
    }

    /// Circular local maxima above `rel` times the global maximum.
    pub fn peaks(&self, rel: f64) -> Vec<f64> {
        let n = self.power.len();
        let max = self.power.iter().cloned().fold(0.0, f64::max);
        (0..n)
            .filter(|&j| {
                let p = self.power[j];
                p >= rel * max && p >= self.power[(j + n - 1) % n] && p >= self.power[(j + 1) % n]
            })
            .map(|j| self.freqs[j])
            .collect()
    }
}

pub fn periodogram(
    r: &dyn LinearDynamics,
    h: &HVector,
    len: usize,
    paths: usize,
    streams: &StreamFactory,
) -> Result<Periodogram> {
    r.grid().check(&h.grid())?;
    if len == 0 || paths == 0 {
        return Err(Error::DegenerateInput("empty periodogram".into()));
    }
    let c = h.coords();
    let m = r.grid().m();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(len);
    let spectra: Vec<Vec<f64>> = streams.par_paths(paths, |_, rng| {
        let mut x = Coordinates::standard_normal(m, rng);
        let mut buf: Vec<Complex64> = Vec::with_capacity(len);
        for n in 0..len {
            buf.push(Complex64::from(divergence_coords(&c, &x)));
            if n + 1 < len {
                x = r.apply_coords(&x, rng);
            }
        }
        fft.process(&mut buf);
        buf.iter().map(|z| z.norm_sqr() / (len * len) as f64).collect()
    });
    // bin 0 is frequency 2π
    let mut power = vec![0.0; len];
    for j in 1..=len {
        let src = j % len;
        power[j - 1] = spectra.iter().map(|s| s[src]).sum::<f64>() / paths as f64;
    }
    let freqs = (1..=len).map(|j| TAU * j as f64 / len as f64).collect();
    Ok(Periodogram { freqs, power })
}

/// Circular distance between two phases.
pub fn phase_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// Wraps into `(0, 2π]` with the cluster tolerance.
pub fn normalize_phase(theta: f64) -> f64 {
    wrap_phase(theta, PHASE_CLUSTER_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{divergence, sample_wiener};
    use crate::linalg::exp_skew;
    use crate::rng::Domain;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use std::f64::consts::{E, PI};

    fn path(m: usize, i: u64) -> Path {
        let g = Grid::new(m).unwrap();
        sample_wiener(g, &mut StreamFactory::new(5).stream(Domain::Paths, i), i)
    }

    fn random_rotation(m: usize, seed: u64) -> RotationOp {
        let mut rng = StreamFactory::new(seed).stream(Domain::Kernels, 0);
        let s = DMatrix::from_fn(m, m, |_, _| rng.sample::<f64, _>(StandardNormal));
        rotation_from_matrix(&exp_skew(&s)).unwrap()
    }

    fn random_h(g: Grid, rng: &mut impl Rng) -> HVector {
        HVector::from_density(g, (0..g.m()).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
    }

    fn in_plane(g: Grid) -> HVector {
        let s = 1.0 / 2f64.sqrt();
        let c = HVector::basis(g, 0).scaled(s);
        c.add(&HVector::basis(g, 1).scaled(s)).unwrap()
    }

    #[test]
    fn construction_examples() {
        let id = RotationOp::identity(6).unwrap();
        assert!(id.phases().iter().all(|t| *t == TAU));

        let alpha = 0.7;
        let r = RotationOp::planar(6, 1, 3, alpha).unwrap();
        let mut expect = vec![alpha, TAU - alpha, TAU, TAU, TAU, TAU];
        expect.sort_by(f64::total_cmp);
        for (a, b) in r.phases().iter().zip(&expect) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }

        let mut bad = DMatrix::<f64>::identity(4, 4);
        bad.row_mut(2).scale_mut(2.0);
        assert!(matches!(rotation_from_matrix(&bad), Err(Error::NotUnitary { .. })));
        assert!(rotation_from_matrix(&DMatrix::zeros(3, 4)).is_err());
    }

    #[test]
    fn master_identity() {
        let m = 12;
        let g = Grid::new(m).unwrap();
        let r = random_rotation(m, 1);
        let p = path(m, 0);
        assert_eq!(apply_rotation(&RotationOp::identity(m).unwrap(), &p).unwrap(), p);
        let tp = apply_rotation(&r, &p).unwrap();
        let mut rng = StreamFactory::new(3).stream(Domain::Noise, 0);
        for _ in 0..20 {
            let h = random_h(g, &mut rng);
            let lhs = divergence(&h, &tp).unwrap();
            let rhs = divergence(&r.apply_h(&h).unwrap(), &p).unwrap();
            assert!((lhs - rhs).abs() < 1e-12);
        }
        assert!(apply_rotation(&r, &path(8, 0)).is_err());
    }

    #[test]
    fn covariance_is_preserved() {
        let m = 4;
        let r = random_rotation(m, 2);
        let n = 40_000;
        let f = StreamFactory::new(8);
        let out = f.par_paths(n, |_, rng| {
            let x = Coordinates::standard_normal(m, rng);
            r.apply_coords(&x, rng).0
        });
        for i in 0..m {
            for j in 0..m {
                let prod: Vec<f64> = out.iter().map(|y| y[i] * y[j]).collect();
                let mo = Moments::of(&prod);
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((mo.mean - target).abs() < 4.0 * mo.std_error(), "{i},{j}: {}", mo.mean);
            }
        }
    }

    #[test]
    fn pushforward_examples() {
        let m = 10;
        let g = Grid::new(m).unwrap();
        let r = random_rotation(m, 3);
        let c = ChaosRep::constant(2.5);
        assert_eq!(chaos_pushforward(&r, &c).unwrap(), c);

        let h = HVector::from_fn(g, |t| (4.0 * t).cos() + t);
        let first = chaos_pushforward(&r, &ChaosRep::power(1, &h).unwrap()).unwrap();
        let planar = RotationOp::planar(m, 0, 1, 0.9).unwrap();
        let hp = in_plane(g);
        let second = chaos_pushforward(&planar, &ChaosRep::power(2, &hp).unwrap()).unwrap();
        let f2 = ChaosRep::power(2, &hp).unwrap();
        let mut rng = StreamFactory::inert();
        for i in 0..100 {
            let p = path(m, i);
            let x = p.coordinates();
            let tx = r.apply_coords(&x, &mut rng);
            assert!((first.evaluate_coords(&x) - divergence_coords(&h.coords(), &tx)).abs() < 1e-12);
            let tpx = planar.apply_coords(&x, &mut rng);
            assert!((second.evaluate_coords(&x) - f2.evaluate_coords(&tpx)).abs() < 1e-12);
        }
        assert!(matches!(ChaosRep::power(3, &h), Err(Error::UnsupportedOrder(3))));
    }

    #[test]
    fn spectral_measure_examples() {
        let m = 8;
        let g = Grid::new(m).unwrap();
        let h = HVector::from_fn(g, |t| 1.0 + t * t);
        let mu = spectral_measure(&RotationOp::identity(m).unwrap(), &h).unwrap();
        assert_eq!(mu.atoms.len(), 1);
        assert_eq!(mu.atoms[0].theta, TAU);
        assert_abs_diff_eq!(mu.atoms[0].weight, h.norm_h().powi(2), epsilon = 1e-12);

        let alpha = 1.1;
        let r = RotationOp::planar(m, 0, 1, alpha).unwrap();
        let mu = spectral_measure(&r, &in_plane(g)).unwrap();
        assert_eq!(mu.atoms.len(), 2);
        assert_abs_diff_eq!(mu.atoms[0].theta, alpha, epsilon = 1e-10);
        assert_abs_diff_eq!(mu.atoms[1].theta, TAU - alpha, epsilon = 1e-10);
        assert_abs_diff_eq!(mu.atoms[0].weight, 0.5, epsilon = 1e-10);
        assert_abs_diff_eq!(mu.atoms[1].weight, 0.5, epsilon = 1e-10);

        let off = HVector::basis(g, 4).scaled(3.0);
        let mu = spectral_measure(&r, &off).unwrap();
        assert_eq!(mu.atoms.len(), 1);
        assert_eq!(mu.atoms[0].theta, TAU);
        assert_abs_diff_eq!(mu.atoms[0].weight, 9.0, epsilon = 1e-10);

        assert!(spectral_measure(&r, &HVector::zero(g)).is_err());
    }

    #[test]
    fn spectral_total_and_autocorrelation_against_powers() {
        let m = 16;
        let g = Grid::new(m).unwrap();
        let r = random_rotation(m, 4);
        let mut rng = StreamFactory::new(6).stream(Domain::Noise, 1);
        for _ in 0..5 {
            let h = random_h(g, &mut rng);
            let mu = spectral_measure(&r, &h).unwrap();
            assert!((mu.total() - h.norm_h().powi(2)).abs() < 1e-10);
            let a = autocorrelation(&r, &h, 10).unwrap();
            // oracle: (Aⁿc, c) by explicit powers
            let c = DVector::from_vec(h.coords());
            let mut an = DMatrix::identity(m, m);
            for (n, v) in a.iter().enumerate() {
                assert!((v - (&an * &c).dot(&c)).abs() < 1e-10, "lag {n}");
                assert!((v - mu.fourier(n)).abs() < 1e-10);
                an = r.matrix() * an;
            }
        }
    }

    #[test]
    fn autocorrelation_examples() {
        let m = 8;
        let g = Grid::new(m).unwrap();
        let h = HVector::from_fn(g, |t| t.exp());
        let a = autocorrelation(&RotationOp::identity(m).unwrap(), &h, 5).unwrap();
        for v in a {
            assert_abs_diff_eq!(v, h.norm_h().powi(2), epsilon = 1e-10);
        }
        let alpha = 0.4;
        let r = RotationOp::planar(m, 0, 1, alpha).unwrap();
        for (n, v) in autocorrelation(&r, &in_plane(g), 20).unwrap().iter().enumerate() {
            assert_abs_diff_eq!(*v, (n as f64 * alpha).cos(), epsilon = 1e-10);
        }
        let s = basis_shift_operator(m).unwrap();
        let a = autocorrelation(&s, &HVector::basis(g, 0), 12).unwrap();
        assert_abs_diff_eq!(a[0], 1.0, epsilon = 1e-15);
        assert!(a[1..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn basis_shift_analytic_autocorrelation() {
        let m = 10;
        let g = Grid::new(m).unwrap();
        let h = HVector::from_fn(g, |t| (5.0 * t).sin() + 0.3);
        let c = h.coords();
        let a = autocorrelation(&basis_shift_operator(m).unwrap(), &h, 2 * m).unwrap();
        for (n, v) in a.iter().enumerate() {
            let expect: f64 = (0..m).filter(|i| i + n < m).map(|i| c[i] * c[i + n]).sum();
            assert_abs_diff_eq!(*v, expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn classify_identity() {
        let m = 6;
        let g = Grid::new(m).unwrap();
        let probes: Vec<HVector> = (0..m).map(|i| HVector::basis(g, i)).collect();
        let rep = classify(&RotationOp::identity(m).unwrap(), &probes, 1e-6).unwrap();
        assert_eq!(rep.verdict, Verdict::NonErgodic);
        let w = rep.witness.unwrap();
        assert_eq!(w.theta, TAU);
        assert!(w.im.is_zero());
        let e1 = HVector::basis(g, 0);
        assert_abs_diff_eq!(crate::hilbert::inner_h(&w.re, &e1).unwrap().abs(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn classify_planar_rotation_witness() {
        let m = 6;
        let g = Grid::new(m).unwrap();
        let alpha = 2f64.sqrt();
        let r = RotationOp::planar(m, 0, 1, alpha).unwrap();
        // in-plane probes first so the heaviest atom is one of ±α
        let mut probes = vec![in_plane(g)];
        probes.extend((1..m).map(|i| HVector::basis(g, i).scaled(0.5)));
        let rep = classify(&r, &probes, 1e-6).unwrap();
        assert_eq!(rep.verdict, Verdict::NonErgodic);
        let atoms: Vec<f64> = rep.probes[0].atoms.iter().map(|a| a.theta).collect();
        assert_abs_diff_eq!(atoms[0], alpha, epsilon = 1e-10);
        assert_abs_diff_eq!(atoms[1], TAU - alpha, epsilon = 1e-10);
        let w = rep.witness.unwrap();
        assert!(phase_distance(w.theta, alpha) < 1e-10 || phase_distance(w.theta, -alpha) < 1e-10);
        assert!(!w.im.is_zero());
        assert!(w.residual < 1e-12);
        let mut rng = StreamFactory::inert();
        for i in 0..50 {
            let x = path(m, i).coordinates();
            let y = r.apply_coords(&x, &mut rng);
            assert!((w.evaluate_coords(&y) - w.evaluate_coords(&x)).abs() < 1e-12);
        }
    }

    #[test]
    fn classify_basis_shift_is_mixing_like() {
        let m = 8;
        let g = Grid::new(m).unwrap();
        let probes: Vec<HVector> = (0..m).map(|i| HVector::basis(g, i)).collect();
        let rep = classify(&basis_shift_operator(m).unwrap(), &probes, 1e-9).unwrap();
        assert_eq!(rep.verdict, Verdict::MixingLike);
        assert!(rep.probes.iter().all(|p| p.decay_lag == Some(1)));
        assert!(rep.witness.is_none());
    }

    #[test]
    fn classify_rejects_rank_deficient_probes() {
        let m = 4;
        let g = Grid::new(m).unwrap();
        let probes = vec![HVector::basis(g, 0), HVector::basis(g, 1), HVector::basis(g, 1)];
        assert!(matches!(
            classify(&RotationOp::identity(m).unwrap(), &probes, 1e-6),
            Err(Error::RankDeficient { rank: 2, needed: 4 })
        ));
    }

    #[test]
    fn invariant_chaos2_examples() {
        let m = 4;
        let g = Grid::new(m).unwrap();
        let id = RotationOp::identity(m).unwrap();
        let fs = find_invariant_chaos2(&id, 1e-9).unwrap();
        // every pair j ≤ k of the fixed space: m(m+1)/2 real functionals
        assert_eq!(fs.len(), m * (m + 1) / 2);

        let r = RotationOp::planar(m, 0, 2, 0.8).unwrap();
        let fs = find_invariant_chaos2(&r, 1e-9).unwrap();
        assert!(!fs.is_empty());
        let mut rng = StreamFactory::inert();
        for f in &fs {
            for i in 0..20 {
                let x = path(m, i).coordinates();
                let y = r.apply_coords(&x, &mut rng);
                assert!((f.evaluate_coords(&y) - f.evaluate_coords(&x)).abs() < 1e-10);
            }
        }
        // the conjugate pair carries |δz|² − |z|², which involves both plane axes
        let plane = fs.iter().any(|f| {
            let k = f.second_order_matrix(m);
            k[(0, 0)].abs() > 1e-6 && k[(2, 2)].abs() > 1e-6
        });
        assert!(plane);
        let _ = g;
    }

    #[test]
    fn complementary_pairs_example() {
        let pairs = complementary_phase_pairs(&[PI / 2.0, PI / 2.0, PI], 1e-9);
        assert_eq!(pairs, vec![(2, 2)]);
    }

    #[test]
    fn random_rotation_invariant_chaos2() {
        let m = 9;
        let r = random_rotation(m, 11);
        let fs = find_invariant_chaos2(&r, 1e-9).unwrap();
        // 4 conjugate pairs and the fixed direction
        assert!(fs.len() >= 5);
        let mut rng = StreamFactory::inert();
        for f in &fs {
            let x = path(m, 3).coordinates();
            let y = r.apply_coords(&x, &mut rng);
            assert!((f.evaluate_coords(&y) - f.evaluate_coords(&x)).abs() < 1e-10);
        }
    }

    #[test]
    fn birkhoff_examples() {
        let m = 6;
        let g = Grid::new(m).unwrap();
        let r = RotationOp::planar(m, 0, 1, 1.0).unwrap();
        let p = path(m, 2);
        let mut rng = StreamFactory::inert();
        let c = birkhoff_average(&r, &|_| 3.0, &p, 17, &mut rng).unwrap();
        assert_eq!(c, 3.0);

        let probes: Vec<HVector> = std::iter::once(in_plane(g)).chain((1..m).map(|i| HVector::basis(g, i))).collect();
        let w = classify(&r, &probes, 1e-6).unwrap().witness.unwrap();
        let f = |x: &[f64]| w.evaluate_coords(x);
        let target = w.evaluate_coords(&p.coordinates());
        for n in [1, 10, 100] {
            assert!((birkhoff_average(&r, &f, &p, n, &mut rng).unwrap() - target).abs() < 1e-12);
        }
        assert!(birkhoff_average(&r, &f, &p, 0, &mut rng).is_err());
    }

    #[test]
    fn birkhoff_basis_shift_converges_to_mean() {
        let m = 8;
        let g = Grid::new(m).unwrap();
        let s = basis_shift_operator(m).unwrap();
        let c = HVector::basis(g, 0).scaled(0.5).coords();
        let f = |x: &[f64]| wick_coords(&c, x);
        let mut rng = StreamFactory::new(12).stream(Domain::Noise, 0);
        let trace = birkhoff_trace(&s, &f, &path(m, 4), 20_000, &mut rng).unwrap();
        // the terms are i.i.d. after the first m steps; Var ρ = e^{1/4} − 1
        let se = ((0.25f64).exp_m1() / 20_000.0).sqrt();
        assert!((trace.last().unwrap() - 1.0).abs() < 4.0 * se + 1e-3);
    }

    #[test]
    fn mixing_examples() {
        let m = 8;
        let g = Grid::new(m).unwrap();
        let f = StreamFactory::new(21);
        let e1 = HVector::basis(g, 0);
        let id = mixing_correlation(&RotationOp::identity(m).unwrap(), &e1, 4, 200, &f).unwrap();
        for a in &id.analytic {
            assert_abs_diff_eq!(*a, E - 1.0, epsilon = 1e-12);
        }
        let s = mixing_correlation(&basis_shift_operator(m).unwrap(), &e1, 5, 20_000, &f).unwrap();
        assert_abs_diff_eq!(s.analytic[0], E - 1.0, epsilon = 1e-12);
        for n in 1..=5 {
            assert_eq!(s.analytic[n], 0.0);
            assert!(s.mc[n].abs() < 3.0 * s.std_error[n] + 1e-12, "lag {n}: {} ± {}", s.mc[n], s.std_error[n]);
        }
    }

    #[test]
    fn mixing_mc_matches_analytic_for_rotation() {
        let m = 6;
        let g = Grid::new(m).unwrap();
        let r = RotationOp::planar(m, 0, 1, 2.0).unwrap();
        let h = in_plane(g).scaled(0.6);
        let s = mixing_correlation(&r, &h, 6, 40_000, &StreamFactory::new(30)).unwrap();
        assert!(s.max_z() < 4.0, "max z = {}", s.max_z());
    }

    #[test]
    fn basis_shift_statistics() {
        let m = 5;
        let s = basis_shift_operator(m).unwrap();
        let f = StreamFactory::new(40);
        let n = 20_000;
        let rows = f.par_paths(n, |_, rng| {
            let x = Coordinates::standard_normal(m, rng);
            let y = s.apply_coords(&x, rng);
            let mut z = x.clone();
            for _ in 0..m {
                z = s.apply_coords(&z, rng);
            }
            (x.0, y.0, z.0)
        });
        for i in 0..m {
            for j in 0..m {
                let cov: Vec<f64> = rows.iter().map(|(_, y, _)| y[i] * y[j]).collect();
                let mo = Moments::of(&cov);
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((mo.mean - target).abs() < 4.5 * mo.std_error());
                // after m steps nothing of the input survives
                let cross: Vec<f64> = rows.iter().map(|(x, _, z)| x[i] * z[j]).collect();
                let mo = Moments::of(&cross);
                assert!(mo.mean.abs() < 4.5 * mo.std_error());
            }
        }
        // δe₁ against δe₁∘Tⁿ
        let lag: Vec<f64> = rows.iter().map(|(x, y, _)| x[0] * y[0]).collect();
        let mo = Moments::of(&lag);
        assert!(mo.mean.abs() < 4.0 * mo.std_error());
    }

    #[test]
    fn periodogram_peaks_at_atoms() {
        let m = 6;
        let g = Grid::new(m).unwrap();
        let len = 128;
        // phase on a bin so leakage is absent
        let alpha = TAU * 19.0 / len as f64;
        let r = RotationOp::planar(m, 0, 1, alpha).unwrap();
        let h = in_plane(g).add(&HVector::basis(g, 3).scaled(0.5)).unwrap();
        let pg = periodogram(&r, &h, len, 200, &StreamFactory::new(50)).unwrap();
        let mu = spectral_measure(&r, &h).unwrap();
        let peaks = pg.peaks(0.1);
        assert_eq!(peaks.len(), mu.atoms.len());
        for a in &mu.atoms {
            assert!(peaks.iter().any(|p| phase_distance(*p, a.theta) <= pg.bin_width()));
        }
        assert_abs_diff_eq!(pg.power.iter().sum::<f64>(), h.norm_h().powi(2), epsilon = 0.2);
    }

    #[test]
    fn periodogram_off_bin_within_one_bin() {
        let m = 6;
        let g = Grid::new(m).unwrap();
        let len = 256;
        let alpha = 1.0;
        let r = RotationOp::planar(m, 0, 1, alpha).unwrap();
        let pg = periodogram(&r, &in_plane(g), len, 50, &StreamFactory::new(51)).unwrap();
        let peaks = pg.peaks(0.5);
        for target in [alpha, TAU - alpha] {
            assert!(peaks.iter().any(|p| phase_distance(*p, target) <= pg.bin_width()));
        }
    }

    #[test]
    fn normalize_phase_maps_zero_to_two_pi() {
        assert_eq!(normalize_phase(0.0), TAU);
        assert_abs_diff_eq!(normalize_phase(-1.0), TAU - 1.0, epsilon = 1e-15);
    }
}
