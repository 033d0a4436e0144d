//! Monte Carlo checks that a transformation preserves Wiener measure, and
//! the Birkhoff and mixing studies built on top of the orbit machinery.

use std::f64::consts::TAU;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{divergence_coords, Coordinates};
use crate::hilbert::{inner_h, Grid, HVector};
use crate::rng::{Domain, StreamFactory};
use crate::rotation::{mixing_correlation, LinearDynamics, MixingSeries};
use crate::stats::{binomial_interval, two_sided_z, Moments};
use crate::transform::Transform;

/// Stream index reserved for the max-|z| null simulation.
const MAX_T_STREAM: u64 = 0xCA11B;
const MAX_T_DRAWS: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatReport {
    pub test: String,
    pub statistic: f64,
    pub reference: f64,
    pub std_error: f64,
    pub z: f64,
    pub threshold: f64,
    pub pass: bool,
    pub seed: u64,
    pub samples: usize,
}

impl StatReport {
    #[allow(clippy::too_many_arguments)]
    fn new(test: String, statistic: f64, reference: f64, std_error: f64, z: f64, threshold: f64, seed: u64, samples: usize) -> Self {
        StatReport {
            test,
            statistic,
            reference,
            std_error,
            z,
            threshold,
            pass: z.abs() <= threshold,
            seed,
            samples,
        }
    }

    fn z_test(test: String, statistic: f64, reference: f64, se: f64, threshold: f64, seed: u64, samples: usize) -> Self {
        let z = if se > 0.0 {
            (statistic - reference) / se
        } else if statistic == reference {
            0.0
        } else {
            f64::INFINITY
        };
        Self::new(test, statistic, reference, se, z, threshold, seed, samples)
    }
}

impl fmt::Display for StatReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<24} {:>4} stat={:+.6e} ref={:+.6e} se={:.3e} z={:+.3} |z|≤{:.3}",
            self.test,
            if self.pass { "PASS" } else { "FAIL" },
            self.statistic,
            self.reference,
            self.std_error,
            self.z,
            self.threshold
        )
    }
}

pub fn all_pass(reports: &[StatReport]) -> bool {
    reports.iter().all(|r| r.pass)
}

#[derive(Debug, Clone)]
pub struct GaussianityConfig {
    /// Family-wise level when `bonferroni` is set, per-test level otherwise.
    pub alpha: f64,
    pub bonferroni: bool,
    /// Number of equally spaced times for the covariance check.
    pub t_points: usize,
    pub probes: Vec<HVector>,
}

impl GaussianityConfig {
    pub fn new(grid: Grid, alpha: f64) -> Self {
        GaussianityConfig {
            alpha,
            bonferroni: true,
            t_points: 4,
            probes: default_probes(grid),
        }
    }
}

/// `1`, `√12 (t − ½)` and `√2 cos 2πt`, unit norm.
pub fn default_probes(grid: Grid) -> Vec<HVector> {
    vec![
        HVector::constant(grid, 1.0),
        HVector::from_fn(grid, |t| 12f64.sqrt() * (t - 0.5)),
        HVector::from_fn(grid, |t| 2f64.sqrt() * (TAU * t).cos()),
    ]
}

/// `(1 − α)` quantile of `max_p |Z_p|` for `Z ~ N(0, C)`.
fn max_abs_quantile(corr: &DMatrix<f64>, alpha: f64, streams: &StreamFactory) -> f64 {
    let p = corr.nrows();
    let jitter = DMatrix::<f64>::identity(p, p) * 1e-12;
    let l = match (corr + &jitter).cholesky() {
        Some(c) => c.l(),
        None => return two_sided_z(alpha / p as f64),
    };
    let mut rng = streams.stream(Domain::Noise, MAX_T_STREAM);
    let mut maxima: Vec<f64> = (0..MAX_T_DRAWS)
        .map(|_| {
            let g = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
            (&l * g).amax()
        })
        .collect();
    maxima.sort_by(f64::total_cmp);
    let idx = (((1.0 - alpha) * MAX_T_DRAWS as f64).ceil() as usize).clamp(1, MAX_T_DRAWS) - 1;
    maxima[idx]
}

fn correlation(cols: &[Vec<f64>]) -> DMatrix<f64> {
    let p = cols.len();
    let n = cols[0].len() as f64;
    let means: Vec<f64> = cols.iter().map(|c| c.iter().sum::<f64>() / n).collect();
    let mut cov = DMatrix::zeros(p, p);
    for a in 0..p {
        for b in a..p {
            let s: f64 = cols[a].iter().zip(&cols[b]).map(|(x, y)| (x - means[a]) * (y - means[b])).sum();
            cov[(a, b)] = s / (n - 1.0);
            cov[(b, a)] = cov[(a, b)];
        }
    }
    let d = DVector::from_fn(p, |i, _| cov[(i, i)].max(f64::MIN_POSITIVE).sqrt());
    DMatrix::from_fn(p, p, |i, j| cov[(i, j)] / (d[i] * d[j]))
}

/// Moment and covariance battery for `Y = T(W)`.
///
/// Reports, in order: the largest covariance error of `Y` against
/// `min(s, t)` (threshold from the max-|z| null of the correlated pair
/// estimates), skewness and excess kurtosis of `∫h dY` for each probe, and
/// `E[∫h dY ∫g dY]` against `(h, g)_H` for each probe pair.
pub fn gaussianity_suite(
    t: &dyn Transform,
    grid: Grid,
    paths: usize,
    cfg: &GaussianityConfig,
    streams: &StreamFactory,
) -> Result<Vec<StatReport>> {
    let m = grid.m();
    if t.dim() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: t.dim(),
        });
    }
    if paths < 8 {
        return Err(Error::DegenerateInput(format!("{paths} paths are too few for moment tests")));
    }
    for p in &cfg.probes {
        grid.check(&p.grid())?;
    }
    let tp = cfg.t_points.clamp(1, m);
    let t_idx: Vec<usize> = (1..=tp).map(|k| (k * m) / tp).collect();
    let times: Vec<f64> = t_idx.iter().map(|&i| i as f64 / m as f64).collect();
    let probe_coords: Vec<Vec<f64>> = cfg.probes.iter().map(|p| p.coords()).collect();
    let np = probe_coords.len();

    let rows: Vec<(Vec<f64>, Vec<f64>)> = streams.par_paths(paths, |_, rng| {
        let x = Coordinates::standard_normal(m, rng);
        let y = t.apply_coords(&x, rng);
        let scale = 1.0 / (m as f64).sqrt();
        let mut vals = Vec::with_capacity(tp);
        let mut acc = 0.0;
        let mut next = 0;
        for (i, yi) in y.iter().enumerate() {
            acc += yi * scale;
            while next < tp && t_idx[next] == i + 1 {
                vals.push(acc);
                next += 1;
            }
        }
        let divs = probe_coords.iter().map(|c| divergence_coords(c, &y)).collect();
        (vals, divs)
    });

    let pairs: Vec<(usize, usize)> = (0..tp).flat_map(|a| (a..tp).map(move |b| (a, b))).collect();
    let probe_pairs: Vec<(usize, usize)> = (0..np).flat_map(|a| (a..np).map(move |b| (a, b))).collect();
    let k_tests = 1 + 2 * np + probe_pairs.len();
    let alpha = if cfg.bonferroni { cfg.alpha / k_tests as f64 } else { cfg.alpha };
    let zcrit = two_sided_z(alpha);
    let seed = streams.master_seed();
    let mut out = Vec::with_capacity(k_tests);

    // covariance against min(s, t)
    let cols: Vec<Vec<f64>> = pairs
        .iter()
        .map(|&(a, b)| {
            let target = times[a].min(times[b]);
            rows.iter().map(|(v, _)| v[a] * v[b] - target).collect()
        })
        .collect();
    let mut worst = (0.0f64, 0.0f64, 0.0f64);
    for col in &cols {
        let mo = Moments::of(col);
        let z = mo.mean / mo.std_error();
        if z.abs() >= worst.2.abs() {
            worst = (mo.mean.abs(), mo.std_error(), z);
        }
    }
    let max_t = max_abs_quantile(&correlation(&cols), alpha, streams);
    out.push(StatReport::new(
        "covariance-max".into(),
        worst.0,
        0.0,
        worst.1,
        worst.2,
        max_t,
        seed,
        paths,
    ));

    for k in 0..np {
        let d: Vec<f64> = rows.iter().map(|(_, d)| d[k]).collect();
        let mo = Moments::of(&d);
        out.push(StatReport::z_test(format!("skewness[{k}]"), mo.skewness, 0.0, mo.skewness_se(), zcrit, seed, paths));
        out.push(StatReport::z_test(
            format!("kurtosis[{k}]"),
            mo.excess_kurtosis,
            0.0,
            mo.kurtosis_se(),
            zcrit,
            seed,
            paths,
        ));
    }

    for &(a, b) in &probe_pairs {
        let prod: Vec<f64> = rows.iter().map(|(_, d)| d[a] * d[b]).collect();
        let mo = Moments::of(&prod);
        let reference = inner_h(&cfg.probes[a], &cfg.probes[b])?;
        out.push(StatReport::z_test(format!("cross-cov[{a},{b}]"), mo.mean, reference, mo.std_error(), zcrit, seed, paths));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationLine {
    pub test: String,
    pub rejections: u64,
    pub replications: u64,
    pub lo: u64,
    pub hi: u64,
    pub within: bool,
}

/// False-positive counts of each test of the battery under the identity,
/// at per-test level `alpha`, against the central 99% binomial range.
pub fn calibrate_null(grid: Grid, paths: usize, replications: usize, alpha: f64, streams: &StreamFactory) -> Result<Vec<CalibrationLine>> {
    let id = crate::transform::Identity { dim: grid.m() };
    let mut cfg = GaussianityConfig::new(grid, alpha);
    cfg.bonferroni = false;
    let mut counts: Vec<(String, u64)> = Vec::new();
    for r in 0..replications {
        let reports = gaussianity_suite(&id, grid, paths, &cfg, &streams.child(r as u64))?;
        if counts.is_empty() {
            counts = reports.iter().map(|rep| (rep.test.clone(), 0)).collect();
        }
        for (c, rep) in counts.iter_mut().zip(&reports) {
            c.1 += u64::from(!rep.pass);
        }
    }
    let (lo, hi) = binomial_interval(replications as u64, alpha, 0.99);
    Ok(counts
        .into_iter()
        .map(|(test, rejections)| CalibrationLine {
            test,
            rejections,
            replications: replications as u64,
            lo,
            hi,
            within: rejections >= lo && rejections <= hi,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpreadVerdict {
    #[serde(rename = "PERSISTENT-SPREAD")]
    PersistentSpread,
    #[serde(rename = "VARIANCE-COLLAPSE")]
    VarianceCollapse,
}

impl fmt::Display for SpreadVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SpreadVerdict::PersistentSpread => "PERSISTENT-SPREAD",
            SpreadVerdict::VarianceCollapse => "VARIANCE-COLLAPSE",
        })
    }
}

/// Ratio `sd(average)/sd(F)` above which the spread counts as persistent.
pub const SPREAD_CUT: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgodicStudy {
    pub verdict: SpreadVerdict,
    pub n: usize,
    pub paths: usize,
    pub sd_single: f64,
    pub sd_average: f64,
    pub mean_average: f64,
    /// `sd_average / sd_single`, zero for a constant observable.
    pub ratio: f64,
    /// `1/√N`, the ratio for independent terms.
    pub iid_ratio: f64,
    /// `pass` means the spread persists.
    pub report: StatReport,
}

/// Birkhoff averages of `f` over `n` steps from independent starting paths.
pub fn ergodic_average_study(
    t: &dyn Transform,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    paths: usize,
    n: usize,
    streams: &StreamFactory,
) -> Result<ErgodicStudy> {
    if n == 0 || paths < 2 {
        return Err(Error::DegenerateInput("need n ≥ 1 and at least two paths".into()));
    }
    let m = t.dim();
    let pairs: Vec<(f64, f64)> = streams.par_paths(paths, |_, rng| {
        let mut x = Coordinates::standard_normal(m, rng);
        let first = f(&x);
        let mut s = first;
        for _ in 1..n {
            x = t.apply_coords(&x, rng);
            s += f(&x);
        }
        (first, s / n as f64)
    });
    let single = Moments::of(&pairs.iter().map(|p| p.0).collect::<Vec<_>>());
    let avg = Moments::of(&pairs.iter().map(|p| p.1).collect::<Vec<_>>());
    let (sd1, sdn) = (single.variance.sqrt(), avg.variance.sqrt());
    let ratio = if sd1 > 0.0 { sdn / sd1 } else { 0.0 };
    let verdict = if ratio > SPREAD_CUT {
        SpreadVerdict::PersistentSpread
    } else {
        SpreadVerdict::VarianceCollapse
    };
    // sd of a log-sd ratio is about 1/√(paths − 1); the threshold is the cut
    // expressed in those units, so |z| ≤ threshold ⇔ ratio > SPREAD_CUT
    let se = 1.0 / ((paths - 1) as f64).sqrt();
    let z = (ratio - 1.0) / se;
    let threshold = (1.0 - SPREAD_CUT) / se;
    let mut report = StatReport::new("birkhoff-spread".into(), ratio, 1.0, se, z, threshold, streams.master_seed(), paths);
    report.pass = verdict == SpreadVerdict::PersistentSpread;
    Ok(ErgodicStudy {
        verdict,
        n,
        paths,
        sd_single: sd1,
        sd_average: sdn,
        mean_average: avg.mean,
        ratio,
        iid_ratio: 1.0 / (n as f64).sqrt(),
        report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingStudy {
    pub series: MixingSeries,
    /// One report per lag: Monte Carlo value against `exp(a[n]) − 1`.
    pub reports: Vec<StatReport>,
    pub pass: bool,
}

pub fn mixing_decay_study(
    r: &dyn LinearDynamics,
    h: &HVector,
    n_max: usize,
    paths: usize,
    se_bound: f64,
    streams: &StreamFactory,
) -> Result<MixingStudy> {
    let series = mixing_correlation(r, h, n_max, paths, streams)?;
    let reports: Vec<StatReport> = (0..=n_max)
        .map(|n| {
            StatReport::z_test(
                format!("a[{n}]"),
                series.mc[n],
                series.analytic[n],
                series.std_error[n],
                se_bound,
                streams.master_seed(),
                paths,
            )
        })
        .collect();
    let pass = all_pass(&reports);
    Ok(MixingStudy { series, reports, pass })
}
