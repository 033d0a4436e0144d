//! Dense spectral routines.
//!
//! `orthogonal_eigen` diagonalizes a real orthogonal matrix `A` through a
//! rotated Cayley transform. With `B = e^{-iφ}A` and `−1` kept away from the
//! spectrum of `B`, the matrix `C = i(I − B)(I + B)^{-1}` is Hermitian with
//! eigenvalues `tan((θ − φ)/2)`, a map that never compresses phase gaps.
//! The Hermitian eigensolver then yields orthonormal eigenvectors even under
//! high multiplicity (identity, permutations, repeated rotation angles).

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Phases closer than this (radians) form one eigenspace.
pub const PHASE_CLUSTER_TOL: f64 = 1e-9;

/// Eigen-decomposition of a real orthogonal matrix.
///
/// Phases lie in `(0, 2π]`, the eigenvalue `1` mapped to `2π`. Eigenvectors
/// are orthonormal and sorted by ascending phase. Eigenvectors for the
/// eigenvalues `±1` are real; the one for `2π − θ` is the conjugate of the
/// one for `θ`.
#[derive(Debug, Clone)]
pub struct OrthoEigen {
    pub phases: Vec<f64>,
    pub vectors: Vec<DVector<Complex64>>,
}

impl OrthoEigen {
    pub fn dim(&self) -> usize {
        self.phases.len()
    }

    pub fn eigenvalue(&self, k: usize) -> Complex64 {
        Complex64::from_polar(1.0, self.phases[k])
    }
}

/// Max-abs entry of `AᵀA − I`.
pub fn orthogonality_residual(a: &DMatrix<f64>) -> f64 {
    let n = a.ncols();
    (a.transpose() * a - DMatrix::<f64>::identity(n, n)).amax()
}

/// Rotation angle `φ` that puts `e^{iφ}·(−1)` in the middle of the widest
/// gap of the spectrum. Candidate phases `±acos(c)` from the eigenvalues `c`
/// of `(A + Aᵀ)/2` contain every true phase.
fn gap_center(a: &DMatrix<f64>) -> f64 {
    let s = (a + a.transpose()) * 0.5;
    let cos = SymmetricEigen::new(s).eigenvalues;
    let mut cand: Vec<f64> = cos
        .iter()
        .flat_map(|c| {
            let t = c.clamp(-1.0, 1.0).acos();
            [t, TAU - t]
        })
        .collect();
    cand.sort_by(f64::total_cmp);
    let mut best = (cand[0] + TAU - cand[cand.len() - 1], cand[cand.len() - 1]);
    for w in cand.windows(2) {
        if w[1] - w[0] > best.0 {
            best = (w[1] - w[0], w[0]);
        }
    }
    // φ such that φ + π sits mid-gap
    best.1 + 0.5 * best.0 - PI
}

/// Rotates `v` so that its largest entry is real and positive.
fn fix_gauge(v: &mut DVector<Complex64>) {
    let (mut idx, mut best) = (0, 0.0);
    for (i, z) in v.iter().enumerate() {
        if z.norm() > best {
            best = z.norm();
            idx = i;
        }
    }
    if best > 0.0 {
        let g = v[idx].conj() / best;
        *v *= g;
    }
}

/// Real orthonormal basis for a conjugation-invariant subspace.
fn realify(vs: &[DVector<Complex64>]) -> Vec<DVector<Complex64>> {
    let mut fixed: Vec<DVector<Complex64>> = vs.to_vec();
    fixed.iter_mut().for_each(fix_gauge);
    let imag = fixed.iter().map(|v| v.map(|z| z.im).amax()).fold(0.0, f64::max);
    if imag < 1e-12 {
        return fixed.iter().map(|v| v.map(|z| Complex64::new(z.re, 0.0))).collect();
    }
    let n = vs[0].len();
    let d = vs.len();
    let mut stacked = DMatrix::<f64>::zeros(n, 2 * d);
    for (c, v) in vs.iter().enumerate() {
        stacked.set_column(c, &v.map(|z| z.re));
        stacked.set_column(d + c, &v.map(|z| z.im));
    }
    let svd = stacked.svd(true, false);
    let u = svd.u.expect("left singular vectors");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&x, &y| svd.singular_values[y].total_cmp(&svd.singular_values[x]));
    order
        .iter()
        .take(d)
        .map(|&c| u.column(c).map(|x| Complex64::new(x, 0.0)))
        .collect()
}

pub fn orthogonal_eigen(a: &DMatrix<f64>) -> Result<OrthoEigen> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: a.ncols(),
        });
    }
    let phi = gap_center(a);
    let rot = Complex64::from_polar(1.0, -phi);
    let b = a.map(|x| rot * x);
    let id = DMatrix::<Complex64>::identity(n, n);
    let inv = (&id + &b).try_inverse().ok_or(Error::NoConvergence)?;
    let c = (&id - &b) * inv * Complex64::i();
    let herm = (&c + c.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(herm);

    let mut raw: Vec<(f64, DVector<Complex64>)> = (0..n)
        .map(|k| {
            let theta = wrap_phase(phi + 2.0 * eig.eigenvalues[k].atan(), PHASE_CLUSTER_TOL);
            (theta, eig.eigenvectors.column(k).into_owned())
        })
        .collect();
    raw.sort_by(|x, y| x.0.total_cmp(&y.0));

    // group into eigenspaces
    let mut groups: Vec<(f64, Vec<DVector<Complex64>>)> = Vec::new();
    for (theta, v) in raw {
        match groups.last_mut() {
            Some((t, vs)) if theta - *t <= PHASE_CLUSTER_TOL * vs.len() as f64 => {
                let k = vs.len() as f64;
                *t = (*t * k + theta) / (k + 1.0);
                vs.push(v);
            }
            _ => groups.push((theta, vec![v])),
        }
    }

    // Real A: eigenspaces at θ and 2π − θ are conjugate. Keep the upper half
    // only when the multiplicities agree; otherwise keep the raw vectors.
    let lower: Vec<&(f64, Vec<DVector<Complex64>>)> =
        groups.iter().filter(|(t, _)| *t < PI - PHASE_CLUSTER_TOL).collect();
    let upper_dims: Vec<usize> = groups
        .iter()
        .filter(|(t, _)| *t > PI + PHASE_CLUSTER_TOL && *t < TAU - PHASE_CLUSTER_TOL)
        .map(|(_, vs)| vs.len())
        .collect();
    let mirror_ok = lower.len() == upper_dims.len()
        && lower.iter().zip(upper_dims.iter().rev()).all(|(l, &u)| l.1.len() == u);

    let mut out: Vec<(f64, DVector<Complex64>)> = Vec::with_capacity(n);
    for (theta, vs) in &groups {
        let at_one = TAU - theta <= PHASE_CLUSTER_TOL;
        if at_one || (theta - PI).abs() <= PHASE_CLUSTER_TOL {
            let t = if at_one { TAU } else { PI };
            out.extend(realify(vs).into_iter().map(|v| (t, v)));
        } else if *theta < PI {
            for v in vs {
                let mut v = v.clone();
                fix_gauge(&mut v);
                if mirror_ok {
                    out.push((TAU - theta, v.map(|z| z.conj())));
                }
                out.push((*theta, v));
            }
        } else if !mirror_ok {
            out.extend(vs.iter().map(|v| (*theta, v.clone())));
        }
    }
    out.sort_by(|x, y| x.0.total_cmp(&y.0));
    Ok(OrthoEigen {
        phases: out.iter().map(|(t, _)| *t).collect(),
        vectors: out.into_iter().map(|(_, v)| v).collect(),
    })
}

/// Eigenvalues of a general real square matrix via the real Schur form.
pub fn complex_eigenvalues(a: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    let schur = nalgebra::linalg::Schur::try_new(a.clone(), 1e-15, 100_000).ok_or(Error::NoConvergence)?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Orthogonal matrix `exp(S)` for skew-symmetric `S`.
pub fn exp_skew(s: &DMatrix<f64>) -> DMatrix<f64> {
    let skew = (s - s.transpose()) * 0.5;
    let o = skew.exp();
    // one Newton step toward the polar factor removes the series round-off
    match o.clone().try_inverse() {
        Some(inv) => (&o + inv.transpose()) * 0.5,
        None => o,
    }
}

/// Maps a phase to `(0, 2π]`; values within `tol` of `0 (mod 2π)` become `2π`.
pub fn wrap_phase(theta: f64, tol: f64) -> f64 {
    let mut t = theta.rem_euclid(TAU);
    if t <= tol || TAU - t <= tol {
        t = TAU;
    }
    t
}

/// Numerical rank by singular values relative to the largest.
pub fn rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    let sv = a.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&x| x > rel_tol * max).count()
}
