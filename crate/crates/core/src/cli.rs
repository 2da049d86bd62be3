//! Command-line front end: instance generation, single alignments with a JSON
//! report, and CSV experiment sweeps.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::{AlignConfig, InitMode};
use crate::datagen::{add_gaussian_noise, hypercube_instance, random_manifold_instance, ManifoldSpec};
use crate::error::{Error, Result};
use crate::geometry::WeightedPointSet;
use crate::io::{format_point_set, read_point_set};
use crate::pipeline::{align_compressed, CompressionLevel, PipelineConfig, PipelineReport};
use crate::rng::derive_seed;
use crate::transport::solve_emd;

pub const REPORT_FORMAT: u32 = 1;

pub const DEFAULT_GAMMAS: [f64; 6] = [1.0 / 50.0, 1.0 / 40.0, 1.0 / 30.0, 1.0 / 20.0, 1.0 / 10.0, 1.0];
pub const DEFAULT_ETAS: [f64; 5] = [0.005, 0.01, 0.015, 0.02, 0.025];

#[derive(Parser, Debug)]
#[command(name = "geoalign", version, about = "Rigid EMD alignment of weighted point sets")]
pub struct Cli {
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic instance.
    #[command(subcommand)]
    Gen(GenCommand),
    /// Add Gaussian noise with standard deviation eta * diameter to every coordinate.
    Noise(NoiseArgs),
    /// Earth Mover's Distance between two point-set files.
    Emd(EmdArgs),
    /// Align <target> onto <source> and write a JSON report.
    Align(AlignArgs),
    /// Run the alignment at several compression levels and write a CSV table.
    Sweep(SweepArgs),
    /// Compare compressed and uncompressed alignment under increasing noise.
    NoiseSweep(NoiseSweepArgs),
}

#[derive(Subcommand, Debug)]
pub enum GenCommand {
    /// Two sets sampled from independent random polynomial manifolds.
    Manifold(ManifoldArgs),
    /// Uniform samples from a rotated low-dimensional unit cube.
    Hypercube(HypercubeArgs),
}

#[derive(Args, Debug)]
pub struct ManifoldArgs {
    /// Latent dimension of each manifold.
    #[arg(long, default_value_t = 5)]
    pub rho: usize,
    #[arg(long, default_value_t = 100)]
    pub dim: usize,
    #[arg(long, default_value_t = 2)]
    pub degree: u32,
    #[arg(long, default_value_t = 1500)]
    pub n1: usize,
    #[arg(long, default_value_t = 2000)]
    pub n2: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub weight_low: f64,
    #[arg(long, default_value_t = 1.0)]
    pub weight_high: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// File for the first set.
    #[arg(long)]
    pub out: PathBuf,
    /// File for the second set.
    #[arg(long)]
    pub out_target: PathBuf,
}

#[derive(Args, Debug)]
pub struct HypercubeArgs {
    #[arg(long, default_value_t = 3)]
    pub rho: usize,
    #[arg(long, default_value_t = 100)]
    pub dim: usize,
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct NoiseArgs {
    pub input: PathBuf,
    #[arg(long)]
    pub eta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EmdArgs {
    pub source: PathBuf,
    pub target: PathBuf,
    /// Write the optimal flow plan here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct AlignFlags {
    /// Stop when the objective changes by less than this.
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
    #[arg(long, default_value_t = 100)]
    pub max_iters: usize,
    #[arg(long, default_value = "centroid", value_parser = ["identity", "centroid"])]
    pub init: String,
    /// Restrict to rotations with determinant +1.
    #[arg(long)]
    pub proper_rotations: bool,
    /// Seed for the first cluster center (0 picks point 0).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl AlignFlags {
    fn config(&self) -> Result<AlignConfig> {
        let config = AlignConfig {
            tolerance: self.tol,
            max_iterations: self.max_iters,
            init_mode: self.init.parse::<InitMode>()?,
            proper_rotations_only: self.proper_rotations,
            ..AlignConfig::default()
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args, Debug)]
pub struct AlignArgs {
    pub source: PathBuf,
    pub target: PathBuf,
    /// k = ceil(gamma * max(n1, n2)); the default is --gamma 1.
    #[arg(long, conflicts_with_all = ["epsilon", "k"])]
    pub gamma: Option<f64>,
    /// k = ceil((2 / epsilon)^rho).
    #[arg(long, requires = "rho", conflicts_with = "k")]
    pub epsilon: Option<f64>,
    /// Doubling dimension used with --epsilon.
    #[arg(long, requires = "epsilon")]
    pub rho: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Per-side center counts, overriding the level above.
    #[arg(long, requires = "k_target")]
    pub k_source: Option<usize>,
    #[arg(long, requires = "k_source")]
    pub k_target: Option<usize>,
    #[command(flatten)]
    pub flags: AlignFlags,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl AlignArgs {
    fn level(&self) -> CompressionLevel {
        match (self.gamma, self.epsilon, self.rho, self.k) {
            (_, Some(epsilon), Some(rho), _) => CompressionLevel::Epsilon { epsilon, rho },
            (_, _, _, Some(k)) => CompressionLevel::K(k),
            (gamma, ..) => CompressionLevel::Gamma(gamma.unwrap_or(1.0)),
        }
    }
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    pub source: PathBuf,
    pub target: PathBuf,
    /// Compression levels, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_GAMMAS)]
    pub gamma: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    pub trials: usize,
    #[command(flatten)]
    pub flags: AlignFlags,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct NoiseSweepArgs {
    pub source: PathBuf,
    pub target: PathBuf,
    /// Noise levels, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_ETAS)]
    pub eta: Vec<f64>,
    /// Compression level of the compressed runs.
    #[arg(long, default_value_t = 0.1)]
    pub gamma: f64,
    #[arg(long, default_value_t = 5)]
    pub trials: usize,
    #[command(flatten)]
    pub flags: AlignFlags,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Parse { .. } => 2,
        Error::Numerical(_) => 4,
        Error::DimensionMismatch { .. } | Error::InvalidInput(_) | Error::InfeasibleFlow(_) | Error::Io(_) => 3,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub geoalign: String,
    pub report_format: u32,
}

impl Versions {
    fn current() -> Self {
        Self {
            geoalign: env!("CARGO_PKG_VERSION").to_string(),
            report_format: REPORT_FORMAT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFlags {
    pub source: String,
    pub target: String,
    pub gamma: Option<f64>,
    pub epsilon: Option<f64>,
    pub rho: Option<f64>,
    pub k: Option<usize>,
    pub k_source: Option<usize>,
    pub k_target: Option<usize>,
    pub tol: f64,
    pub max_iters: usize,
    pub init: String,
    pub proper_rotations: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub versions: Versions,
    pub seed: u64,
    pub flags: ReportFlags,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inputs {
    pub n1: usize,
    pub n2: usize,
    pub d: usize,
    #[serde(rename = "W_A")]
    pub w_a: f64,
    #[serde(rename = "W_B")]
    pub w_b: f64,
    pub diameters: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Compression {
    /// Center counts actually produced, source then target.
    pub k: [usize; 2],
    pub requested_k: [usize; 2],
    pub radii: [f64; 2],
    pub eps_eff: f64,
    pub epsilon_requested: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentSection {
    pub iterations: usize,
    pub converged: bool,
    pub rank_deficient: bool,
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateSection {
    pub forward_lhs: f64,
    pub forward_rhs: f64,
    pub backward_lhs: f64,
    pub backward_rhs: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformSection {
    /// Row-major rotation matrix.
    pub rotation: Vec<Vec<f64>>,
    pub translation: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Results {
    pub emd_full: f64,
    pub emd_compressed: f64,
    pub certificates: CertificateSection,
    pub transform: TransformSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSection {
    pub compress_ms: f64,
    pub align_ms: f64,
    pub final_emd_ms: f64,
    pub total_ms: f64,
    pub diameter_ms: f64,
}

/// JSON report written by `align`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignReport {
    pub metadata: Metadata,
    pub inputs: Inputs,
    pub compression: Compression,
    pub alignment: AlignmentSection,
    pub results: Results,
    pub timings: TimingSection,
}

impl AlignReport {
    pub fn from_pipeline(report: &PipelineReport, metadata: Metadata) -> Self {
        let r = report.transform.rotation();
        let c = &report.certificates;
        Self {
            metadata,
            inputs: Inputs {
                n1: report.n.0,
                n2: report.n.1,
                d: report.dim,
                w_a: report.total_weights.0,
                w_b: report.total_weights.1,
                diameters: [report.diameters.0, report.diameters.1],
            },
            compression: Compression {
                k: [report.compressed_sizes.0, report.compressed_sizes.1],
                requested_k: [report.requested_k.0, report.requested_k.1],
                radii: [report.compression_radii.0, report.compression_radii.1],
                eps_eff: report.epsilon_eff,
                epsilon_requested: report.requested_epsilon,
            },
            alignment: AlignmentSection {
                iterations: report.iterations,
                converged: report.converged,
                rank_deficient: report.rank_deficient,
                objective_trace: report.objective_trace.clone(),
            },
            results: Results {
                emd_full: report.emd_full,
                emd_compressed: report.emd_compressed,
                certificates: CertificateSection {
                    forward_lhs: c.forward_lhs,
                    forward_rhs: c.forward_rhs,
                    backward_lhs: c.backward_lhs,
                    backward_rhs: c.backward_rhs,
                    passed: c.holds(),
                },
                transform: TransformSection {
                    rotation: (0..r.nrows()).map(|i| r.row(i).iter().copied().collect()).collect(),
                    translation: report.transform.translation().iter().copied().collect(),
                },
            },
            timings: TimingSection {
                compress_ms: report.timings.compress_ms,
                align_ms: report.timings.align_ms,
                final_emd_ms: report.timings.final_emd_ms,
                total_ms: report.timings.total_ms,
                diameter_ms: report.timings.diameter_ms,
            },
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// One line of the `sweep` table; `trial` is `None` for the per-level mean.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub gamma: f64,
    pub trial: Option<usize>,
    pub k: usize,
    pub emd: f64,
    pub time_total_ms: f64,
    pub time_compress_ms: f64,
    pub time_align_ms: f64,
    pub time_final_emd_ms: f64,
    pub iterations: f64,
}

pub const SWEEP_HEADER: [&str; 9] = [
    "gamma",
    "trial",
    "k",
    "emd",
    "time_total_ms",
    "time_compress_ms",
    "time_align_ms",
    "time_final_emd_ms",
    "iterations",
];

/// One line of the `noise-sweep` table (EMD columns are means over trials).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRow {
    pub eta: f64,
    pub emd_compressed: f64,
    pub emd_baseline: f64,
    pub ratio: f64,
}

pub const NOISE_HEADER: [&str; 4] = ["eta", "emd_compressed", "emd_baseline", "ratio"];

/// Clustering seed of a trial; trial 0 uses the base seed itself.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    if trial == 0 {
        seed
    } else {
        derive_seed(seed, trial as u64)
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = xs.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    sum / count as f64
}

fn check_trials(trials: usize) -> Result<()> {
    if trials < 1 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    Ok(())
}

/// Sorted, deduplicated compression levels, each in `(0, 1]`.
fn gamma_levels(gammas: &[f64]) -> Result<Vec<f64>> {
    if gammas.is_empty() {
        return Err(Error::invalid("at least one gamma level is required"));
    }
    let mut out = gammas.to_vec();
    for &g in &out {
        if !(g > 0.0 && g <= 1.0) {
            return Err(Error::invalid(format!("gamma must lie in (0, 1], got {g}")));
        }
    }
    out.sort_by(f64::total_cmp);
    out.dedup();
    Ok(out)
}

/// Trial rows in `(gamma, trial)` order, each level followed by its mean row.
pub fn sweep(
    a: &WeightedPointSet,
    b: &WeightedPointSet,
    gammas: &[f64],
    trials: usize,
    seed: u64,
    align: &AlignConfig,
) -> Result<Vec<SweepRow>> {
    check_trials(trials)?;
    let levels = gamma_levels(gammas)?;
    let cells: Vec<(f64, usize)> = levels
        .iter()
        .flat_map(|&g| (0..trials).map(move |t| (g, t)))
        .collect();
    let rows: Vec<SweepRow> = cells
        .par_iter()
        .map(|&(gamma, trial)| {
            let config = PipelineConfig {
                level: CompressionLevel::Gamma(gamma),
                k_override: None,
                seed: trial_seed(seed, trial),
                align: align.clone(),
            };
            let r = align_compressed(a, b, &config)?;
            Ok(SweepRow {
                gamma,
                trial: Some(trial),
                k: r.requested_k.0,
                emd: r.emd_full,
                time_total_ms: r.timings.total_ms,
                time_compress_ms: r.timings.compress_ms,
                time_align_ms: r.timings.align_ms,
                time_final_emd_ms: r.timings.final_emd_ms,
                iterations: r.iterations as f64,
            })
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(rows.len() + levels.len());
    for chunk in rows.chunks(trials) {
        out.extend_from_slice(chunk);
        out.push(SweepRow {
            gamma: chunk[0].gamma,
            trial: None,
            k: chunk[0].k,
            emd: mean(chunk.iter().map(|r| r.emd)),
            time_total_ms: mean(chunk.iter().map(|r| r.time_total_ms)),
            time_compress_ms: mean(chunk.iter().map(|r| r.time_compress_ms)),
            time_align_ms: mean(chunk.iter().map(|r| r.time_align_ms)),
            time_final_emd_ms: mean(chunk.iter().map(|r| r.time_final_emd_ms)),
            iterations: mean(chunk.iter().map(|r| r.iterations)),
        });
    }
    Ok(out)
}

/// For each noise level, both sets are corrupted independently per trial and
/// aligned with and without compression; the ratio is of the mean EMDs.
pub fn noise_sweep(
    a: &WeightedPointSet,
    b: &WeightedPointSet,
    etas: &[f64],
    gamma: f64,
    trials: usize,
    seed: u64,
    align: &AlignConfig,
) -> Result<Vec<NoiseRow>> {
    check_trials(trials)?;
    gamma_levels(&[gamma])?;
    if etas.is_empty() {
        return Err(Error::invalid("at least one eta level is required"));
    }
    for &eta in etas {
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(Error::invalid(format!("eta must be nonnegative, got {eta}")));
        }
    }
    let cells: Vec<(usize, usize)> = (0..etas.len())
        .flat_map(|l| (0..trials).map(move |t| (l, t)))
        .collect();
    let pairs: Vec<(f64, f64)> = cells
        .par_iter()
        .map(|&(level, trial)| {
            let eta = etas[level];
            let noise_seed = derive_seed(derive_seed(seed, level as u64), trial as u64);
            let na = add_gaussian_noise(a, eta, derive_seed(noise_seed, 0))?;
            let nb = add_gaussian_noise(b, eta, derive_seed(noise_seed, 1))?;
            let run = |gamma: f64| {
                let config = PipelineConfig {
                    level: CompressionLevel::Gamma(gamma),
                    k_override: None,
                    seed: trial_seed(seed, trial),
                    align: align.clone(),
                };
                align_compressed(&na, &nb, &config).map(|r| r.emd_full)
            };
            Ok((run(gamma)?, run(1.0)?))
        })
        .collect::<Result<_>>()?;
    Ok(pairs
        .chunks(trials)
        .zip(etas)
        .map(|(chunk, &eta)| {
            let emd_compressed = mean(chunk.iter().map(|p| p.0));
            let emd_baseline = mean(chunk.iter().map(|p| p.1));
            NoiseRow {
                eta,
                emd_compressed,
                emd_baseline,
                ratio: emd_compressed / emd_baseline,
            }
        })
        .collect())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::invalid(format!("csv output failed: {other:?}")),
    }
}

pub fn format_sweep_csv(rows: &[SweepRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SWEEP_HEADER).map_err(csv_error)?;
    for r in rows {
        let trial = r.trial.map_or_else(|| "mean".to_string(), |t| t.to_string());
        w.write_record([
            r.gamma.to_string(),
            trial,
            r.k.to_string(),
            r.emd.to_string(),
            format!("{:.3}", r.time_total_ms),
            format!("{:.3}", r.time_compress_ms),
            format!("{:.3}", r.time_align_ms),
            format!("{:.3}", r.time_final_emd_ms),
            r.iterations.to_string(),
        ])
        .map_err(csv_error)?;
    }
    finish_csv(w)
}

pub fn format_noise_csv(rows: &[NoiseRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(NOISE_HEADER).map_err(csv_error)?;
    for r in rows {
        w.write_record([
            r.eta.to_string(),
            r.emd_compressed.to_string(),
            r.emd_baseline.to_string(),
            r.ratio.to_string(),
        ])
        .map_err(csv_error)?;
    }
    finish_csv(w)
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes `text` to `out` if given; otherwise hands it back for stdout.
fn emit(text: String, out: Option<&Path>) -> Result<String> {
    match out {
        Some(path) => {
            std::fs::write(path, text)?;
            Ok(String::new())
        }
        None => Ok(text),
    }
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

/// Runs one parsed command, writing primary output to `stdout` unless an
/// output file was given.
pub fn run(cli: Cli, stdout: &mut dyn Write) -> Result<()> {
    let text = match cli.jobs {
        Some(0) => return Err(Error::invalid("--jobs must be at least 1")),
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::invalid(format!("cannot start {jobs} workers: {e}")))?
            .install(|| run_command(cli.command)),
        None => run_command(cli.command),
    }?;
    stdout.write_all(text.as_bytes())?;
    Ok(())
}

fn run_command(command: Command) -> Result<String> {
    match command {
        Command::Gen(GenCommand::Manifold(args)) => {
            let spec = ManifoldSpec {
                latent_dim: args.rho,
                ambient_dim: args.dim,
                degree: args.degree,
                n1: args.n1,
                n2: args.n2,
                weight_range: (args.weight_low, args.weight_high),
                seed: args.seed,
            };
            let (a, b) = random_manifold_instance(&spec)?;
            let about = format!(
                "random polynomial manifold: rho={} d={} degree={} coefficients~U[-1,1] \
                 latent~U[0,1]^rho weights~U({},{}] seed={}",
                args.rho, args.dim, args.degree, args.weight_low, args.weight_high, args.seed
            );
            std::fs::write(&args.out, format_point_set(&a, Some(&format!("{about} side=source"))))?;
            std::fs::write(&args.out_target, format_point_set(&b, Some(&format!("{about} side=target"))))?;
            Ok(String::new())
        }
        Command::Gen(GenCommand::Hypercube(args)) => {
            let set = hypercube_instance(args.rho, args.dim, args.n, args.seed)?;
            let about = format!(
                "rotated unit hypercube: rho={} d={} n={} seed={}",
                args.rho, args.dim, args.n, args.seed
            );
            emit(format_point_set(&set, Some(&about)), args.out.as_deref())
        }
        Command::Noise(args) => {
            let set = read_point_set(&args.input)?;
            let noisy = add_gaussian_noise(&set, args.eta, args.seed)?;
            let about = format!("gaussian noise: eta={} seed={}", args.eta, args.seed);
            emit(format_point_set(&noisy, Some(&about)), args.out.as_deref())
        }
        Command::Emd(args) => {
            let a = read_point_set(&args.source)?;
            let b = read_point_set(&args.target)?;
            let sol = solve_emd(&a, &b)?;
            if let Some(path) = &args.out {
                std::fs::write(path, sol.plan.to_text())?;
            }
            Ok(format!("{}\n", sol.value))
        }
        Command::Align(args) => {
            let a = read_point_set(&args.source)?;
            let b = read_point_set(&args.target)?;
            let config = PipelineConfig {
                level: args.level(),
                k_override: args.k_source.zip(args.k_target),
                seed: args.flags.seed,
                align: args.flags.config()?,
            };
            let report = align_compressed(&a, &b, &config)?;
            let metadata = Metadata {
                versions: Versions::current(),
                seed: args.flags.seed,
                flags: ReportFlags {
                    source: display(&args.source),
                    target: display(&args.target),
                    gamma: match config.level {
                        CompressionLevel::Gamma(g) => Some(g),
                        _ => None,
                    },
                    epsilon: args.epsilon,
                    rho: args.rho,
                    k: args.k,
                    k_source: args.k_source,
                    k_target: args.k_target,
                    tol: args.flags.tol,
                    max_iters: args.flags.max_iters,
                    init: args.flags.init.clone(),
                    proper_rotations: args.flags.proper_rotations,
                },
            };
            let json = AlignReport::from_pipeline(&report, metadata).to_json();
            emit(json, args.out.as_deref())
        }
        Command::Sweep(args) => {
            let a = read_point_set(&args.source)?;
            let b = read_point_set(&args.target)?;
            let rows = sweep(&a, &b, &args.gamma, args.trials, args.flags.seed, &args.flags.config()?)?;
            emit(format_sweep_csv(&rows)?, args.out.as_deref())
        }
        Command::NoiseSweep(args) => {
            let a = read_point_set(&args.source)?;
            let b = read_point_set(&args.target)?;
            let rows = noise_sweep(
                &a,
                &b,
                &args.eta,
                args.gamma,
                args.trials,
                args.flags.seed,
                &args.flags.config()?,
            )?;
            emit(format_noise_csv(&rows)?, args.out.as_deref())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn compression_flags() {
        let parse = |args: &[&str]| Cli::try_parse_from(["geoalign", "align", "a", "b"].iter().chain(args));
        let level = |args: &[&str]| match parse(args).unwrap().command {
            Command::Align(a) => a.level(),
            _ => unreachable!(),
        };
        assert_eq!(level(&[]), CompressionLevel::Gamma(1.0));
        assert_eq!(level(&["--gamma", "0.1"]), CompressionLevel::Gamma(0.1));
        assert_eq!(level(&["--k", "7"]), CompressionLevel::K(7));
        assert_eq!(
            level(&["--epsilon", "0.5", "--rho", "2"]),
            CompressionLevel::Epsilon { epsilon: 0.5, rho: 2.0 }
        );
        assert!(parse(&["--gamma", "0.1", "--k", "3"]).is_err());
        assert!(parse(&["--epsilon", "0.5"]).is_err());
        assert!(parse(&["--rho", "2"]).is_err());
        assert!(parse(&["--k-source", "2"]).is_err());
        assert!(parse(&["--init", "random"]).is_err());
    }

    #[test]
    fn exit_codes() {
        let parse = Error::Parse {
            line: 1,
            column: 1,
            message: String::new(),
        };
        assert_eq!(exit_code(&parse), 2);
        assert_eq!(exit_code(&Error::InfeasibleFlow(String::new())), 3);
        assert_eq!(exit_code(&Error::DimensionMismatch { expected: 1, found: 2 }), 3);
        assert_eq!(exit_code(&Error::Numerical(String::new())), 4);
    }

    #[test]
    fn gamma_levels_are_sorted_and_checked() {
        assert_eq!(gamma_levels(&[1.0, 0.1, 0.1, 0.5]).unwrap(), vec![0.1, 0.5, 1.0]);
        assert!(gamma_levels(&[]).is_err());
        assert!(gamma_levels(&[0.0]).is_err());
    }

    #[test]
    fn trial_zero_uses_the_base_seed() {
        assert_eq!(trial_seed(42, 0), 42);
        assert_ne!(trial_seed(42, 1), 42);
        assert_ne!(trial_seed(42, 1), trial_seed(42, 2));
    }

    #[test]
    fn csv_layout() {
        let rows = vec![SweepRow {
            gamma: 0.5,
            trial: None,
            k: 3,
            emd: 0.25,
            time_total_ms: 1.0,
            time_compress_ms: 0.25,
            time_align_ms: 0.5,
            time_final_emd_ms: 0.25,
            iterations: 2.5,
        }];
        let text = format_sweep_csv(&rows).unwrap();
        assert_eq!(
            text,
            "gamma,trial,k,emd,time_total_ms,time_compress_ms,time_align_ms,time_final_emd_ms,iterations\n\
             0.5,mean,3,0.25,1.000,0.250,0.500,0.250,2.5\n"
        );
        let noise = format_noise_csv(&[NoiseRow {
            eta: 0.01,
            emd_compressed: 1.5,
            emd_baseline: 1.0,
            ratio: 1.5,
        }])
        .unwrap();
        assert_eq!(noise, "eta,emd_compressed,emd_baseline,ratio\n0.01,1.5,1,1.5\n");
    }
}
