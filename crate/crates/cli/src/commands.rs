use std::fs;
use std::io::{self as stdio, BufRead, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mrad::eval::{DurationSpec, StartSpec};
use mrad::fgn::default_block_sizes;
use mrad::{
    compute_threshold, detect, estimate_hurst, flags_to_intervals, run_experiment, standardize,
    synthesize_fgn, DetectionConfig, ExperimentConfig, LrdModel, Method, ScaleConfig,
    Standardization, StreamState, ThresholdKind, ThresholdQuery, ThresholdResult, TimeSeries,
};
use serde_json::json;

use crate::{io, map, Failure};

#[derive(Debug, Parser)]
#[command(
    name = "mrad",
    version,
    about = "Multiresolution anomaly detection for long-range-dependent series"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a fractional Gaussian noise path, one value per line.
    Synth(SynthArgs),
    /// Run the multiscale test on a series.
    Detect(DetectArgs),
    /// Render an outlier-map CSV as SVG.
    Map(MapArgs),
    /// Print a critical value as JSON.
    Threshold(ThresholdArgs),
    /// Run the injected level-shift experiment.
    Eval(EvalArgs),
    /// Test samples read from stdin as they arrive (SWA).
    Stream(StreamArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    hurst: f64,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path, `-` for stdout.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ScaleArgs {
    /// Number of scales M.
    #[arg(long, default_value_t = 15)]
    scales: usize,
    /// Aggregation base b.
    #[arg(long, default_value_t = 2)]
    base: usize,
}

#[derive(Debug, Args)]
struct CriticalArgs {
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// improved (Monte Carlo), asymptotic or single-scale.
    #[arg(long = "threshold", default_value = "improved")]
    kind: ThresholdKind,
    /// Use this critical value instead of computing one.
    #[arg(long)]
    threshold_value: Option<f64>,
    #[arg(long, default_value_t = mrad::threshold::DEFAULT_MC_REPS)]
    mc_reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl CriticalArgs {
    fn resolve(&self, scales: &ScaleArgs, hurst: f64) -> Result<ThresholdResult, Failure> {
        if let Some(v) = self.threshold_value {
            return Ok(ThresholdResult::fixed(v)?);
        }
        let query = ThresholdQuery::new(self.alpha, scales.scales, hurst, self.kind)
            .with_base(scales.base)
            .with_mc(self.mc_reps, self.seed);
        Ok(compute_threshold(&query)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StandardizeMode {
    /// Use the values as given.
    None,
    /// Subtract the sample mean, divide by the sample standard deviation.
    Sample,
}

#[derive(Debug, Args)]
struct MomentArgs {
    /// Mean to subtract; requires --std.
    #[arg(long, requires = "std", allow_hyphen_values = true)]
    mean: Option<f64>,
    /// Standard deviation to divide by; requires --mean.
    #[arg(long, requires = "mean")]
    std: Option<f64>,
}

impl MomentArgs {
    fn provided(&self) -> Option<Standardization> {
        match (self.mean, self.std) {
            (Some(mean), Some(std)) => Some(Standardization::Provided { mean, std }),
            _ => None,
        }
    }
}

#[derive(Debug, Args)]
struct DetectArgs {
    /// Input file (one value per line, or CSV with --column); `-` for stdin.
    #[arg(long = "in")]
    input: PathBuf,
    /// CSV column name or 0-based position.
    #[arg(long)]
    column: Option<String>,
    /// Hurst exponent of the background.
    #[arg(long)]
    hurst: Option<f64>,
    /// Estimate H by aggregated variance. Without --hurst, print the
    /// estimate and stop.
    #[arg(long)]
    estimate_hurst: bool,
    #[command(flatten)]
    scales: ScaleArgs,
    #[arg(long, default_value = "nowa")]
    method: Method,
    #[command(flatten)]
    critical: CriticalArgs,
    #[arg(long, value_enum, default_value_t = StandardizeMode::None)]
    standardize: StandardizeMode,
    #[command(flatten)]
    moments: MomentArgs,
    /// Merge flagged runs separated by at most this many unflagged indices.
    #[arg(long, default_value_t = 0)]
    gap: usize,
    /// Flags JSON output; stdout when omitted.
    #[arg(long)]
    out_flags: Option<PathBuf>,
    /// Outlier-map CSV output.
    #[arg(long)]
    out_map: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MapArgs {
    #[arg(long)]
    in_map: PathBuf,
    /// First column to draw (0-based, inclusive).
    #[arg(long, default_value_t = 0)]
    from: usize,
    /// End column (0-based, exclusive); defaults to the last.
    #[arg(long)]
    to: Option<usize>,
    #[arg(long)]
    out_svg: PathBuf,
}

#[derive(Debug, Args)]
struct ThresholdArgs {
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[command(flatten)]
    scales: ScaleArgs,
    /// Required for the improved threshold.
    #[arg(long)]
    hurst: Option<f64>,
    #[arg(long, default_value = "improved")]
    kind: ThresholdKind,
    #[arg(long, default_value_t = mrad::threshold::DEFAULT_MC_REPS)]
    mc_reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long, default_value_t = 10)]
    sets: usize,
    #[arg(long, default_value_t = 100)]
    sims: usize,
    #[arg(long, default_value_t = 1 << 15)]
    n: usize,
    #[arg(long, default_value_t = 0.9)]
    hurst: f64,
    /// Anomaly start drawn uniformly from 1..=start-max.
    #[arg(long, default_value_t = 1 << 14, conflicts_with = "start")]
    start_max: usize,
    /// Fixed anomaly start (1-based).
    #[arg(long)]
    start: Option<usize>,
    /// Mean of the exponential anomaly duration.
    #[arg(long, default_value_t = 4000.0, conflicts_with = "duration")]
    duration_mean: f64,
    /// Fixed anomaly duration.
    #[arg(long)]
    duration: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[command(flatten)]
    scales: ScaleArgs,
    #[arg(long, default_value = "nowa")]
    method: Method,
    #[arg(long = "threshold", default_value = "improved")]
    kind: ThresholdKind,
    #[arg(long, default_value_t = mrad::threshold::DEFAULT_MC_REPS)]
    mc_reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for sets.csv and summary.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StreamFormat {
    /// `index,statistic,argmax_scale`
    Csv,
    /// One JSON object per line.
    Jsonl,
}

#[derive(Debug, Args)]
struct StreamArgs {
    #[arg(long)]
    hurst: f64,
    #[command(flatten)]
    scales: ScaleArgs,
    #[command(flatten)]
    critical: CriticalArgs,
    #[command(flatten)]
    moments: MomentArgs,
    #[arg(long, value_enum, default_value_t = StreamFormat::Csv)]
    format: StreamFormat,
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Detect(a) => detect_cmd(a),
        Command::Map(a) => map_cmd(a),
        Command::Threshold(a) => threshold_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Stream(a) => stream_cmd(a),
    }
}

fn runtime(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Runtime(e.into())
}

// A closed downstream pipe ends output quietly.
fn stdout_result(r: stdio::Result<()>) -> Result<(), Failure> {
    match r {
        Err(e) if e.kind() == stdio::ErrorKind::BrokenPipe => Ok(()),
        other => other.map_err(runtime),
    }
}

fn synth(a: SynthArgs) -> Result<(), Failure> {
    let model = LrdModel::new(a.hurst, a.sigma)?;
    let series = synthesize_fgn(&model, a.n, a.seed)?;
    let mut text = String::with_capacity(a.n * 22);
    for v in series.values() {
        text.push_str(&v.to_string());
        text.push('\n');
    }
    if a.out.as_os_str() == "-" {
        stdout_result(stdio::stdout().write_all(text.as_bytes()))
    } else {
        io::write_file(&a.out, &text)
    }
}

fn detect_cmd(a: DetectArgs) -> Result<(), Failure> {
    let raw = TimeSeries::new(io::read_series(&a.input, a.column.as_deref())?);

    let hurst = match (a.hurst, a.estimate_hurst) {
        (None, false) => {
            return Err(Failure::Usage(anyhow!(
                "one of --hurst or --estimate-hurst is required"
            )))
        }
        (None, true) => {
            let h = estimate_hurst(&raw, &default_block_sizes(raw.len()))?;
            stdout_result(writeln!(stdio::stdout(), "{}", json!({ "hurst": h })))?;
            return Ok(());
        }
        (Some(h), estimate) => {
            if estimate {
                let est = estimate_hurst(&raw, &default_block_sizes(raw.len()))?;
                eprintln!("estimated hurst: {est}");
            }
            h
        }
    };

    let mode = a.moments.provided().unwrap_or(match a.standardize {
        StandardizeMode::None => Standardization::None,
        StandardizeMode::Sample => Standardization::SampleMoments,
    });
    let config = ScaleConfig::new(a.scales.base, a.scales.scales, hurst)?;
    let needed = match a.method {
        Method::Nowa => config.largest_window(),
        Method::Swa => 1,
    };
    if raw.len() < needed {
        return Err(mrad::Error::SeriesTooShort {
            required: needed,
            actual: raw.len(),
        }
        .into());
    }
    let threshold = a.critical.resolve(&a.scales, hurst)?;
    let (_, mean, std) = standardize(&raw, mode)?;
    let cfg = DetectionConfig::new(config, a.method, threshold)?.with_standardization(mode);
    let result = detect(&raw, &cfg)?;

    let intervals = flags_to_intervals(&result, a.gap);
    let report = json!({
        "threshold": result.threshold.value,
        "threshold_kind": result.threshold.kind,
        "threshold_se": result.threshold.se,
        "alpha": result.threshold.alpha,
        "hurst": hurst,
        "scales": a.scales.scales,
        "base": a.scales.base,
        "method": a.method.to_string(),
        "n": raw.len(),
        "mean": mean,
        "std": std,
        "intervals": intervals,
        "flagged_indices": result.flags,
    });
    let text = serde_json::to_string_pretty(&report).map_err(runtime)? + "\n";
    match &a.out_flags {
        Some(path) => io::write_file(path, &text)?,
        None => stdout_result(stdio::stdout().write_all(text.as_bytes()))?,
    }
    if let Some(path) = &a.out_map {
        io::write_file(path, &map::to_csv(&result.pvalue_map()))?;
    }
    Ok(())
}

fn map_cmd(a: MapArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&a.in_map)
        .with_context(|| format!("reading {}", a.in_map.display()))
        .map_err(Failure::Runtime)?;
    let grid = map::parse_csv(&text)?;
    let n = grid.times.len();
    let to = a.to.unwrap_or(n);
    if a.from >= to || to > n {
        return Err(Failure::Usage(anyhow!(
            "invalid column range {}..{to} for a map with {n} columns",
            a.from
        )));
    }
    io::write_file(&a.out_svg, &map::render_svg(&grid, a.from, to))
}

fn threshold_cmd(a: ThresholdArgs) -> Result<(), Failure> {
    let hurst = match (a.hurst, a.kind) {
        (Some(h), _) => h,
        (None, ThresholdKind::MonteCarlo) => {
            return Err(Failure::Usage(anyhow!(
                "--hurst is required for the improved threshold"
            )))
        }
        (None, _) => 0.5,
    };
    let query = ThresholdQuery::new(a.alpha, a.scales.scales, hurst, a.kind)
        .with_base(a.scales.base)
        .with_mc(a.mc_reps, a.seed);
    let t = compute_threshold(&query)?;
    let line = json!({ "value": t.value, "kind": t.kind, "se": t.se });
    stdout_result(writeln!(stdio::stdout(), "{line}"))
}

fn eval_cmd(a: EvalArgs) -> Result<(), Failure> {
    let config = ExperimentConfig {
        sets: a.sets,
        sims_per_set: a.sims,
        n: a.n,
        hurst: a.hurst,
        start: match a.start {
            Some(s) => StartSpec::Fixed(s),
            None => StartSpec::Uniform { max: a.start_max },
        },
        duration: match a.duration {
            Some(d) => DurationSpec::Fixed(d),
            None => DurationSpec::Exponential {
                mean: a.duration_mean,
            },
        },
        delta: a.delta,
        alpha: a.alpha,
        num_scales: a.scales.scales,
        base: a.scales.base,
        method: a.method,
        threshold: a.kind,
        mc_reps: a.mc_reps,
        seed: a.seed,
    };
    let report = run_experiment(&config)?;
    fs::create_dir_all(&a.out)
        .with_context(|| format!("creating {}", a.out.display()))
        .map_err(Failure::Runtime)?;
    io::write_file(&a.out.join("sets.csv"), &report.to_csv())?;
    let summary = serde_json::to_string_pretty(&report.summary_json()).map_err(runtime)? + "\n";
    io::write_file(&a.out.join("summary.json"), &summary)
}

fn stream_cmd(a: StreamArgs) -> Result<(), Failure> {
    let config = ScaleConfig::new(a.scales.base, a.scales.scales, a.hurst)?;
    let threshold = a.critical.resolve(&a.scales, a.hurst)?;
    let (mean, std) = match a.moments.provided() {
        Some(Standardization::Provided { mean, std }) => {
            if !(std > 0.0 && std.is_finite() && mean.is_finite()) {
                return Err(Failure::Usage(anyhow!("--std must be positive and finite")));
            }
            (mean, std)
        }
        _ => (0.0, 1.0),
    };
    let mut state = StreamState::new(config);
    let stdin = stdio::stdin();
    let mut out = BufWriter::new(stdio::stdout().lock());
    let mut index = 0usize;
    for (lineno, line) in stdin.lock().lines().enumerate() {
        let line = line.map_err(runtime)?;
        let trimmed = line.trim();
        let x = match trimmed.parse::<f64>() {
            Ok(x) if x.is_finite() => x,
            _ => {
                eprintln!("warning: line {}: skipping `{trimmed}`", lineno + 1);
                continue;
            }
        };
        index += 1;
        let (stat, scale) = state.push_max_abs((x - mean) / std);
        if stat > threshold.value {
            let written = match a.format {
                StreamFormat::Csv => writeln!(out, "{index},{stat},{scale}"),
                StreamFormat::Jsonl => writeln!(
                    out,
                    "{}",
                    json!({ "index": index, "statistic": stat, "argmax_scale": scale })
                ),
            }
            .and_then(|_| out.flush());
            if let Err(e) = written {
                return stdout_result(Err(e));
            }
        }
    }
    stdout_result(out.flush())
}
