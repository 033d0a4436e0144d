//! `gerg` command line: one subcommand per study, every run leaving its
//! outputs and a manifest in `--out`.

use std::collections::BTreeMap;
use std::path::{Path as FsPath, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gamma::{
    build_gamma, constant_family, default_jump_threshold, gamma_ergodicity, level_distribution, piecewise_family,
    plane_rotation, random_family, sweep_family, GammaProcess,
};
use crate::gaussian::sample_wiener;
use crate::harness::{all_pass, ergodic_average_study, gaussianity_suite, mixing_decay_study, GaussianityConfig, SpreadVerdict};
use crate::hilbert::{ChaosKernel, Grid, HVector, Kernel2};
use crate::io;
use crate::rng::{Domain, StreamFactory};
use crate::rotation::{
    basis_shift_operator, classify, rotation_from_matrix, spectral_measure, wick_coords, Atom, LinearDynamics, RotationOp,
};
use crate::shift::{apply_shift, check_unitary_shift, random_unitary_kernel, ChaosShift, RadonNikodym, ShiftTransform};
use crate::stats::Moments;
use crate::transform::{Identity, Transform};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

const DEFAULT_SEED: u64 = 1;
const DEFAULT_M: usize = 64;
const DEFAULT_PATHS: usize = 10_000;
const DEFAULT_OUT: &str = "gerg-out";

#[derive(Debug, Parser)]
#[command(name = "gerg", version, about = "Measure-preserving transformations of Wiener space")]
struct Cli {
    /// Master seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Grid size where it is not fixed by an input file.
    #[arg(long, global = true)]
    m: Option<usize>,
    /// Monte Carlo path count.
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
struct DynamicsArgs {
    /// Orthogonal operator as a square CSV array.
    #[arg(long, conflicts_with = "basis_shift")]
    op: Option<PathBuf>,
    /// Use the truncated basis shift on `--m` coordinates.
    #[arg(long)]
    basis_shift: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Family {
    Constant,
    Sweep,
    Piecewise,
    Random,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum TransformKind {
    Identity,
    Reflection,
    RandomUnitary,
    Kernel,
    Chaos2,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Observable {
    Witness,
    Wick,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Expect {
    Persistent,
    Collapse,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Unitarity check of a second-order shift kernel.
    CheckKernel {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Shifts a path (read or sampled) by a kernel.
    ApplyShift {
        #[arg(long)]
        kernel: PathBuf,
        #[arg(long)]
        path: Option<PathBuf>,
    },
    /// Radon-Nikodym density of a unitary shift over sampled paths.
    RnReport {
        #[arg(long)]
        kernel: PathBuf,
    },
    /// Eigenphases of an operator and the spectral measure of a vector.
    Spectrum {
        #[arg(long)]
        op: PathBuf,
        /// Density CSV; defaults to the constant function 1.
        #[arg(long)]
        h: Option<PathBuf>,
    },
    /// Ergodicity classification on the coordinate basis.
    Classify {
        #[command(flatten)]
        dynamics: DynamicsArgs,
        #[arg(long, default_value_t = 1e-6)]
        atom_tol: f64,
    },
    /// Correlation decay of the Wick exponential of δh.
    Mixing {
        #[command(flatten)]
        dynamics: DynamicsArgs,
        #[arg(long)]
        nmax: Option<usize>,
        /// Density CSV; defaults to the first basis vector.
        #[arg(long)]
        h: Option<PathBuf>,
        #[arg(long, default_value_t = 3.0)]
        se_bound: f64,
    },
    /// Eigenphase level sets of dY = γ(t) dW.
    Gamma {
        #[arg(long, value_enum, conflicts_with = "input")]
        family: Option<Family>,
        /// γ blocks as CSV.
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long)]
        theta_res: Option<usize>,
        #[arg(long)]
        jump_tol: Option<f64>,
    },
    /// Moment and covariance battery for a transformation.
    Gaussianity {
        #[arg(long, value_enum)]
        transform: TransformKind,
        /// Kernel CSV for `--transform kernel`.
        #[arg(long)]
        kernel: Option<PathBuf>,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Spread of Birkhoff averages across paths.
    Birkhoff {
        #[command(flatten)]
        dynamics: DynamicsArgs,
        /// Orbit length.
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, value_enum, default_value = "witness")]
        observable: Observable,
        /// Exit 1 unless the verdict matches.
        #[arg(long, value_enum)]
        expect: Option<Expect>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::CheckKernel { .. } => "check-kernel",
            Command::ApplyShift { .. } => "apply-shift",
            Command::RnReport { .. } => "rn-report",
            Command::Spectrum { .. } => "spectrum",
            Command::Classify { .. } => "classify",
            Command::Mixing { .. } => "mixing",
            Command::Gamma { .. } => "gamma",
            Command::Gaussianity { .. } => "gaussianity",
            Command::Birkhoff { .. } => "birkhoff",
        }
    }
}

#[derive(Debug, Default, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RunSection {
    seed: Option<u64>,
    m: Option<usize>,
    paths: Option<usize>,
    out: Option<PathBuf>,
}

#[derive(Debug, Default, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct AlphaSection {
    alpha: Option<f64>,
}

#[derive(Debug, Default, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct MixingSection {
    nmax: Option<usize>,
}

#[derive(Debug, Default, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct GammaSection {
    theta_res: Option<usize>,
    jump_tol: Option<f64>,
}

/// Configuration file; command-line flags take precedence.
#[derive(Debug, Default, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    run: RunSection,
    #[serde(default)]
    gaussianity: AlphaSection,
    #[serde(default)]
    mixing: MixingSection,
    #[serde(default)]
    gamma: GammaSection,
}

pub fn parse_config(text: &str) -> Result<Config> {
    toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))
}

/// Seeds, sizes, versions and digests that pin down a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub master_seed: u64,
    pub m: usize,
    pub paths: usize,
    pub versions: BTreeMap<String, String>,
    pub options: serde_json::Value,
    pub config: Option<serde_json::Value>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub exit_code: i32,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

struct Ctx {
    streams: StreamFactory,
    m: usize,
    paths: usize,
    out: PathBuf,
    config: Config,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
    effective_m: usize,
}

impl Ctx {
    fn read(&mut self, p: &FsPath) -> Result<Vec<u8>> {
        let bytes = std::fs::read(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
        self.inputs.insert(p.display().to_string(), sha256_hex(&bytes));
        Ok(bytes)
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        std::fs::write(self.out.join(name), bytes)?;
        self.outputs.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, v: &T) -> Result<String> {
        let s = io::to_json(v)?;
        self.write(name, s.as_bytes())?;
        Ok(s)
    }

    fn grid(&self) -> Result<Grid> {
        Grid::new(self.m)
    }
}

enum Dyn {
    Rotation(RotationOp),
    Shift(crate::rotation::BasisShift),
}

impl Dyn {
    fn as_dyn(&self) -> &dyn LinearDynamics {
        match self {
            Dyn::Rotation(r) => r,
            Dyn::Shift(s) => s,
        }
    }
}

fn load_dynamics(ctx: &mut Ctx, args: &DynamicsArgs) -> Result<Dyn> {
    match (&args.op, args.basis_shift) {
        (Some(p), _) => {
            let a = io::read_square(ctx.read(p)?.as_slice())?;
            Ok(Dyn::Rotation(rotation_from_matrix(&a)?))
        }
        (None, true) => Ok(Dyn::Shift(basis_shift_operator(ctx.m)?)),
        (None, false) => Err(Error::Config("one of --op or --basis-shift is required".into())),
    }
}

fn load_kernel(ctx: &mut Ctx, p: &FsPath) -> Result<Kernel2> {
    io::read_kernel(ctx.read(p)?.as_slice())
}

fn load_h(ctx: &mut Ctx, p: &Option<PathBuf>, grid: Grid, default: HVector) -> Result<HVector> {
    match p {
        Some(p) => {
            let h = io::read_vector(ctx.read(p)?.as_slice())?;
            grid.check(&h.grid())?;
            Ok(h)
        }
        None => Ok(default),
    }
}

fn basis_probes(grid: Grid) -> Vec<HVector> {
    (0..grid.m()).map(|i| HVector::basis(grid, i)).collect()
}

#[derive(Serialize)]
struct AtomReport {
    phases: Vec<f64>,
    atoms: Vec<Atom>,
    total: f64,
    norm_sq: f64,
}

#[derive(Serialize)]
struct RnSummary {
    log_det2: f64,
    half_hs_squared: f64,
    paths: usize,
    mean_log_lambda: f64,
    mean_abs_log_lambda: f64,
    sd_log_lambda: f64,
}

fn execute(ctx: &mut Ctx, cmd: &Command) -> Result<bool> {
    match cmd {
        Command::CheckKernel { input, tol } => {
            let k = load_kernel(ctx, input)?;
            ctx.effective_m = k.grid().m();
            let rep = check_unitary_shift(&k, *tol)?;
            let s = ctx.write_json("check-kernel.json", &rep)?;
            print!("{s}");
            Ok(rep.is_unitary)
        }
        Command::ApplyShift { kernel, path } => {
            let k = load_kernel(ctx, kernel)?;
            let g = k.grid();
            ctx.effective_m = g.m();
            let p = match path {
                Some(p) => io::read_path(ctx.read(p)?.as_slice(), 0)?,
                None => sample_wiener(g, &mut ctx.streams.stream(Domain::Paths, 0), 0),
            };
            let q = apply_shift(&k, &p)?;
            let mut buf = Vec::new();
            io::write_path(&mut buf, &p)?;
            ctx.write("input-path.csv", &buf)?;
            let mut buf = Vec::new();
            io::write_path(&mut buf, &q)?;
            ctx.write("shifted-path.csv", &buf)?;
            let rep = check_unitary_shift(&k, 1e-10)?;
            let s = ctx.write_json("apply-shift.json", &rep)?;
            print!("{s}");
            Ok(true)
        }
        Command::RnReport { kernel } => {
            let k = load_kernel(ctx, kernel)?;
            let g = k.grid();
            ctx.effective_m = g.m();
            let rn = RadonNikodym::new(&k)?;
            let vals: Vec<f64> = ctx
                .streams
                .par_paths(ctx.paths, |i, rng| {
                    let p = sample_wiener(g, rng, i as u64);
                    rn.evaluate(&p).map(|r| r.log_lambda)
                })
                .into_iter()
                .collect::<Result<_>>()?;
            let mo = Moments::of(&vals);
            let abs: Vec<f64> = vals.iter().map(|v| v.abs()).collect();
            let sum = RnSummary {
                log_det2: rn.log_det2(),
                half_hs_squared: crate::shift::half_hs_squared(&k),
                paths: vals.len(),
                mean_log_lambda: mo.mean,
                mean_abs_log_lambda: crate::stats::mean(&abs),
                sd_log_lambda: mo.variance.sqrt(),
            };
            let mut csv = String::from("path,log_lambda\n");
            for (i, v) in vals.iter().enumerate() {
                csv.push_str(&format!("{i},{}\n", io::fmt_f64(*v)));
            }
            ctx.write("rn.csv", csv.as_bytes())?;
            let s = ctx.write_json("rn-report.json", &sum)?;
            print!("{s}");
            Ok(true)
        }
        Command::Spectrum { op, h } => {
            let a = io::read_square(ctx.read(op)?.as_slice())?;
            let r = rotation_from_matrix(&a)?;
            let g = Grid::new(a.nrows())?;
            ctx.effective_m = g.m();
            let h = load_h(ctx, h, g, HVector::constant(g, 1.0))?;
            let mu = spectral_measure(&r, &h)?;
            let rep = AtomReport {
                phases: r.phases().to_vec(),
                total: mu.total(),
                atoms: mu.atoms,
                norm_sq: h.norm_h().powi(2),
            };
            let s = ctx.write_json("spectrum.json", &rep)?;
            print!("{s}");
            Ok(true)
        }
        Command::Classify { dynamics, atom_tol } => {
            let d = load_dynamics(ctx, dynamics)?;
            let g = d.as_dyn().grid();
            ctx.effective_m = g.m();
            let rep = classify(d.as_dyn(), &basis_probes(g), *atom_tol)?;
            let s = ctx.write_json("classify.json", &rep)?;
            print!("{s}");
            Ok(true)
        }
        Command::Mixing {
            dynamics,
            nmax,
            h,
            se_bound,
        } => {
            let d = load_dynamics(ctx, dynamics)?;
            let g = d.as_dyn().grid();
            ctx.effective_m = g.m();
            let h = load_h(ctx, h, g, HVector::basis(g, 0))?;
            let nmax = nmax.or(ctx.config.mixing.nmax).unwrap_or(20);
            let study = mixing_decay_study(d.as_dyn(), &h, nmax, ctx.paths, *se_bound, &ctx.streams)?;
            let mut csv = String::from("n,mc,std_error,analytic\n");
            for n in 0..=nmax {
                csv.push_str(&format!(
                    "{n},{},{},{}\n",
                    io::fmt_f64(study.series.mc[n]),
                    io::fmt_f64(study.series.std_error[n]),
                    io::fmt_f64(study.series.analytic[n])
                ));
            }
            ctx.write("mixing.csv", csv.as_bytes())?;
            let s = ctx.write_json("mixing.json", &study)?;
            print!("{s}");
            Ok(study.pass)
        }
        Command::Gamma {
            family,
            input,
            n,
            theta_res,
            jump_tol,
        } => {
            let gp: GammaProcess = match (input, family) {
                (Some(p), _) => {
                    let (grid, blocks) = io::read_gamma_blocks(ctx.read(p)?.as_slice())?;
                    build_gamma(grid, blocks)?
                }
                (None, Some(f)) => {
                    let grid = ctx.grid()?;
                    match f {
                        Family::Constant => constant_family(grid, &plane_rotation(*n, 1.0))?,
                        Family::Sweep => sweep_family(grid, *n)?,
                        Family::Piecewise => piecewise_family(grid, *n)?,
                        Family::Random => random_family(grid, *n, &mut ctx.streams.stream(Domain::Gamma, 0))?,
                    }
                }
                (None, None) => return Err(Error::Config("one of --family or --in is required".into())),
            };
            ctx.effective_m = gp.grid().m();
            let res = theta_res.or(ctx.config.gamma.theta_res).unwrap_or(256);
            let tol = jump_tol
                .or(ctx.config.gamma.jump_tol)
                .unwrap_or_else(|| default_jump_threshold(gp.grid(), res));
            for j in 1..=gp.n() {
                let ld = level_distribution(&gp, j, res)?;
                let mut buf = Vec::new();
                io::write_level_distribution(&mut buf, &ld)?;
                ctx.write(&format!("level-{j}.csv"), &buf)?;
            }
            let mut buf = Vec::new();
            io::write_gamma_blocks(&mut buf, gp.blocks())?;
            ctx.write("gamma-blocks.csv", &buf)?;
            let rep = gamma_ergodicity(&gp, tol, res)?;
            let s = ctx.write_json("gamma.json", &rep)?;
            print!("{s}");
            Ok(true)
        }
        Command::Gaussianity {
            transform,
            kernel,
            alpha,
        } => {
            let alpha = alpha.or(ctx.config.gaussianity.alpha).unwrap_or(0.01);
            let (t, g): (Box<dyn Transform>, Grid) = match transform {
                TransformKind::Identity => {
                    let g = ctx.grid()?;
                    (Box::new(Identity { dim: g.m() }), g)
                }
                TransformKind::Reflection => {
                    let g = ctx.grid()?;
                    let e = HVector::from_fn(g, |t| 1.0 + t).normalized()?;
                    (Box::new(ShiftTransform::new(Kernel2::reflection(&e)?)), g)
                }
                TransformKind::RandomUnitary => {
                    let g = ctx.grid()?;
                    let k = random_unitary_kernel(g, 1.0, &mut ctx.streams.stream(Domain::Kernels, 0));
                    (Box::new(ShiftTransform::new(k)), g)
                }
                TransformKind::Kernel => {
                    let p = kernel
                        .as_ref()
                        .ok_or_else(|| Error::Config("--transform kernel needs --kernel".into()))?;
                    let k = load_kernel(ctx, p)?;
                    let g = k.grid();
                    (Box::new(ShiftTransform::new(k)), g)
                }
                TransformKind::Chaos2 => {
                    let g = ctx.grid()?;
                    let one = HVector::constant(g, 1.0);
                    (Box::new(ChaosShift::new(g, vec![ChaosKernel::new(2, one.clone(), one)?])?), g)
                }
            };
            ctx.effective_m = g.m();
            let reports = gaussianity_suite(t.as_ref(), g, ctx.paths, &GaussianityConfig::new(g, alpha), &ctx.streams)?;
            for r in &reports {
                println!("{r}");
            }
            ctx.write_json("gaussianity.json", &reports)?;
            Ok(all_pass(&reports))
        }
        Command::Birkhoff {
            dynamics,
            n,
            observable,
            expect,
        } => {
            let d = load_dynamics(ctx, dynamics)?;
            let g = d.as_dyn().grid();
            ctx.effective_m = g.m();
            let study = match observable {
                Observable::Witness => {
                    let rep = classify(d.as_dyn(), &basis_probes(g), 1e-6)?;
                    let w = rep
                        .witness
                        .ok_or_else(|| Error::NoWitness("dynamics has no spectral atom".into()))?;
                    let f = move |x: &[f64]| w.evaluate_coords(x);
                    ergodic_average_study(d.as_dyn(), &f, ctx.paths, *n, &ctx.streams)?
                }
                Observable::Wick => {
                    let c = HVector::basis(g, 0).coords();
                    let f = move |x: &[f64]| wick_coords(&c, x);
                    ergodic_average_study(d.as_dyn(), &f, ctx.paths, *n, &ctx.streams)?
                }
            };
            let s = ctx.write_json("birkhoff.json", &study)?;
            print!("{s}");
            Ok(match expect {
                None => true,
                Some(Expect::Persistent) => study.verdict == SpreadVerdict::PersistentSpread,
                Some(Expect::Collapse) => study.verdict == SpreadVerdict::VarianceCollapse,
            })
        }
    }
}

/// Runs the command line `argv` (program name first) and returns the exit
/// code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_PASS };
        }
    };
    match run_cli(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}

fn run_cli(cli: &Cli) -> Result<i32> {
    let (config, config_echo) = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            let cfg = parse_config(&text).map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("{}: {msg}", p.display())),
                other => other,
            })?;
            let echo = serde_json::to_value(&cfg)?;
            (cfg, Some(echo))
        }
        None => (Config::default(), None),
    };
    let seed = cli.seed.or(config.run.seed).unwrap_or(DEFAULT_SEED);
    let m = cli.m.or(config.run.m).unwrap_or(DEFAULT_M);
    let paths = cli.paths.or(config.run.paths).unwrap_or(DEFAULT_PATHS);
    let out = cli
        .out
        .clone()
        .or_else(|| config.run.out.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    std::fs::create_dir_all(&out)?;
    let mut ctx = Ctx {
        streams: StreamFactory::new(seed),
        m,
        paths,
        out,
        config,
        inputs: BTreeMap::new(),
        outputs: BTreeMap::new(),
        effective_m: m,
    };
    // input failures still leave a manifest behind
    let result = execute(&mut ctx, &cli.cmd);
    let code = match &result {
        Ok(true) => EXIT_PASS,
        Ok(false) => EXIT_FAIL,
        Err(_) => EXIT_INPUT,
    };
    let manifest = RunManifest {
        command: cli.cmd.name().to_string(),
        master_seed: seed,
        m: ctx.effective_m,
        paths,
        versions: BTreeMap::from([(env!("CARGO_PKG_NAME").to_string(), env!("CARGO_PKG_VERSION").to_string())]),
        options: serde_json::to_value(&cli.cmd)?,
        config: config_echo,
        inputs: ctx.inputs.clone(),
        outputs: ctx.outputs.clone(),
        exit_code: code,
    };
    io::write_json_file(&ctx.out.join("manifest.json"), &manifest)?;
    result.map(|_| code)
}
