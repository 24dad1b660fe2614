//! Command-line entry point.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 runtime failure.

use std::collections::BTreeMap;
use std::fs;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::bvh::{clip_from_bvh, parse_bvh_with_roles};
use crate::dataset::{read_dataset, write_clip, write_dataset, Dataset};
use crate::eval::evaluate;
use crate::metrics::MetricRegistry;
use crate::pipeline::{train_autoencoder, train_autoencoder_from, train_metric_network, Bundle, CurveShape, TrainReport, TrainingConfig};
use crate::service::{serve, ServiceState};
use crate::skeleton::{AnimationClip, NormalizationStats, RoleMap, Skeleton};
use crate::synth::{synthetic_clips, SynthConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "posemetric", version, about = "Pose-metric driven animation editing")]
pub struct Cli {
    /// Worker threads for data-parallel kernels. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a directory of BVH files into a dataset file.
    Ingest {
        dir: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// JSON object mapping role names to joint names.
        #[arg(long)]
        roles: Option<PathBuf>,
        /// Multiplier from file units to meters.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
    },
    /// Write a procedural dataset on the default humanoid.
    Synth {
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 100)]
        clips: usize,
        #[arg(long, default_value_t = 120)]
        frames: usize,
        #[arg(long, env = "POSEMETRIC_SEED", default_value_t = 0)]
        seed: u64,
    },
    /// Train the encoder/decoder and write a new bundle.
    TrainAe {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        bundle: PathBuf,
        /// Continue training the autoencoder already in `--bundle`. Metric
        /// networks trained against the old decoder are dropped.
        #[arg(long)]
        resume: bool,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Train one metric network against an existing bundle.
    TrainMetric {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        metric: String,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Edit a clip around one frame and write the result.
    Edit {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        clip: String,
        #[arg(long)]
        frame: usize,
        /// `metric=value` in radians; repeat for several metrics.
        #[arg(long = "target", required = true, value_parser = parse_target)]
        targets: Vec<(String, f64)>,
        #[arg(long, default_value_t = 3)]
        radius: usize,
        #[arg(long, default_value = "hat", value_parser = parse_shape)]
        shape: CurveShape,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Report reconstruction error, metric-move success rate and no-op drift.
    Eval {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        metric: String,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, env = "POSEMETRIC_SEED", default_value_t = 0)]
        seed: u64,
    },
    /// Run the HTTP edit service.
    Serve {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
    },
    /// Inspect the metric registry.
    Metrics {
        #[command(subcommand)]
        action: MetricsAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum MetricsAction {
    List,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub lr: Option<f32>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, env = "POSEMETRIC_SEED")]
    pub seed: Option<u64>,
    /// Where to write the `step,loss` report. Defaults to a file in the bundle directory.
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
}

impl TrainArgs {
    pub fn config(&self, d: TrainingConfig) -> TrainingConfig {
        TrainingConfig {
            learning_rate: self.lr.unwrap_or(d.learning_rate),
            batch_size: self.batch.unwrap_or(d.batch_size),
            steps: self.steps.unwrap_or(d.steps),
            seed: self.seed.unwrap_or(d.seed),
            ..d
        }
    }
}

fn parse_target(s: &str) -> Result<(String, f64), String> {
    let (name, value) = s.split_once('=').ok_or_else(|| format!("expected metric=value, got `{s}`"))?;
    let value: f64 = value.trim().parse().map_err(|e| format!("bad value in `{s}`: {e}"))?;
    if !value.is_finite() {
        return Err(format!("target value in `{s}` must be finite"));
    }
    Ok((name.trim().to_string(), value))
}

fn parse_shape(s: &str) -> Result<CurveShape, String> {
    s.parse().map_err(|e: crate::pipeline::PipelineError| e.to_string())
}

/// Failure with its exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

fn usage(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Usage(e.into())
}

fn runtime(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Runtime(e.into())
}

type CliResult = Result<(), CliError>;

fn require_file(path: &Path, what: &str) -> CliResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(anyhow!("{what} `{}` does not exist", path.display())))
    }
}

fn require_dir(path: &Path, what: &str) -> CliResult {
    if path.is_dir() {
        Ok(())
    } else {
        Err(usage(anyhow!("{what} `{}` is not a directory", path.display())))
    }
}

fn load_dataset(path: &Path) -> Result<Dataset, CliError> {
    require_file(path, "dataset")?;
    read_dataset(path).map_err(usage)
}

fn load_bundle(path: &Path) -> Result<Bundle, CliError> {
    require_dir(path, "bundle")?;
    Bundle::load(path).map_err(usage)
}

fn write_report(report: &TrainReport, path: &Path) -> CliResult {
    fs::write(path, report.to_csv())
        .with_context(|| format!("writing {}", path.display()))
        .map_err(runtime)
}

fn summarize(label: &str, report: &TrainReport) {
    let first = report.losses.first().copied().unwrap_or(f32::NAN);
    let last = report.losses.last().copied().unwrap_or(f32::NAN);
    println!(
        "{label}: {} steps, loss {first} -> {last}, validation {:?} -> {:?}{}",
        report.losses.len(),
        report.initial_validation(),
        report.final_validation(),
        if report.stopped_early { " (early stop)" } else { "" }
    );
}

fn cmd_ingest(dir: &Path, output: &Path, roles: Option<&Path>, scale: f64) -> CliResult {
    require_dir(dir, "input directory")?;
    if !(scale.is_finite() && scale > 0.0) {
        return Err(usage(anyhow!("scale must be positive")));
    }
    let role_map = match roles {
        Some(p) => {
            require_file(p, "role mapping")?;
            let text = fs::read_to_string(p).map_err(usage)?;
            let overrides: BTreeMap<String, String> =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display())).map_err(usage)?;
            RoleMap::default().with_overrides(&overrides)
        }
        None => RoleMap::default(),
    };
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(usage)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("bvh")))
        .collect();
    files.sort();

    let parsed: Vec<Result<(Skeleton, AnimationClip), String>> = files
        .par_iter()
        .map(|path| {
            let text = fs::read_to_string(path).map_err(|e| e.to_string())?;
            let doc = parse_bvh_with_roles(&text, &role_map).map_err(|e| e.to_string())?.scaled(scale);
            let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let clip = clip_from_bvh(&doc, id).map_err(|e| e.to_string())?;
            Ok((doc.skeleton, clip))
        })
        .collect();

    let mut skeleton: Option<Skeleton> = None;
    let mut clips = Vec::new();
    for (path, result) in files.iter().zip(parsed) {
        match result {
            Ok((sk, clip)) => {
                let names = |s: &Skeleton| s.joints().iter().map(|j| j.name.clone()).collect::<Vec<_>>();
                match &skeleton {
                    Some(first) if names(first) != names(&sk) => {
                        log::warn!("{}: skeleton differs from the first file, skipped", path.display());
                        continue;
                    }
                    Some(_) => {}
                    None => skeleton = Some(sk),
                }
                clips.push(clip);
            }
            Err(e) => log::warn!("{}: {e}", path.display()),
        }
    }
    let Some(skeleton) = skeleton else {
        return Err(usage(anyhow!("no parseable BVH files in `{}`", dir.display())));
    };
    let stats = NormalizationStats::from_clips(&clips).map_err(usage)?;
    write_dataset(&clips, &skeleton, &stats, output).map_err(runtime)?;
    let poses: usize = clips.iter().map(AnimationClip::len).sum();
    println!("{} clips, {poses} poses -> {}", clips.len(), output.display());
    Ok(())
}

fn cmd_synth(output: &Path, clips: usize, frames: usize, seed: u64) -> CliResult {
    if clips == 0 || frames == 0 {
        return Err(usage(anyhow!("clips and frames must be at least 1")));
    }
    let config = SynthConfig {
        clips,
        frames,
        seed,
        ..SynthConfig::default()
    };
    let clips = synthetic_clips(&config);
    let stats = NormalizationStats::from_clips(&clips).map_err(runtime)?;
    write_dataset(&clips, &Skeleton::default_humanoid(), &stats, output).map_err(runtime)?;
    println!("{} clips, {} poses -> {}", clips.len(), config.clips * config.frames, output.display());
    Ok(())
}

fn cmd_train_ae(dataset: &Path, bundle_dir: &Path, resume: bool, args: &TrainArgs) -> CliResult {
    let data = load_dataset(dataset)?;
    let config = args.config(TrainingConfig::default());
    config.validate().map_err(usage)?;
    let (model, report) = if resume {
        let previous = load_bundle(bundle_dir)?;
        for name in previous.metrics.keys() {
            log::warn!("{name}: metric network dropped, retrain it against the new decoder");
        }
        train_autoencoder_from(previous.model, &data, &config).map_err(runtime)?
    } else {
        train_autoencoder(&data, &config).map_err(runtime)?
    };
    let bundle = Bundle::new(data.skeleton.clone(), model).map_err(runtime)?;
    bundle.save(bundle_dir).map_err(runtime)?;
    let csv = args.loss_csv.clone().unwrap_or_else(|| bundle_dir.join("loss_autoencoder.csv"));
    write_report(&report, &csv)?;
    summarize("autoencoder", &report);
    Ok(())
}

fn cmd_train_metric(dataset: &Path, bundle_dir: &Path, metric: &str, args: &TrainArgs) -> CliResult {
    let registry = MetricRegistry::with_builtins();
    registry.get(metric).map_err(usage)?;
    let data = load_dataset(dataset)?;
    let mut bundle = load_bundle(bundle_dir)?;
    let config = args.config(TrainingConfig::for_metric_network());
    config.validate().map_err(usage)?;
    let (network, report) = train_metric_network(&bundle.model, &registry, metric, &data, &config).map_err(runtime)?;
    bundle.add_metric(network).map_err(runtime)?;
    bundle.save(bundle_dir).map_err(runtime)?;
    let csv = args
        .loss_csv
        .clone()
        .unwrap_or_else(|| bundle_dir.join(format!("loss_metric_{metric}.csv")));
    write_report(&report, &csv)?;
    summarize(metric, &report);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_edit(
    bundle_dir: &Path,
    dataset: &Path,
    clip_id: &str,
    frame: usize,
    targets: &[(String, f64)],
    radius: usize,
    shape: CurveShape,
    output: &Path,
) -> CliResult {
    let bundle = load_bundle(bundle_dir)?;
    let data = load_dataset(dataset)?;
    let clip = data
        .clip(clip_id)
        .ok_or_else(|| usage(anyhow!("no clip with id `{clip_id}`")))?;
    for (name, _) in targets {
        bundle.metric(name).map_err(usage)?;
    }
    let curve = shape.build(clip.len(), frame, radius).map_err(usage)?;
    let edited = bundle.edit_clip(targets, clip, &curve).map_err(runtime)?;
    write_clip(&edited, output).map_err(runtime)?;
    let changed: Vec<usize> = curve.support().collect();
    println!(
        "edited `{clip_id}` frames {}..={} -> {}",
        changed.first().copied().unwrap_or(frame),
        changed.last().copied().unwrap_or(frame),
        output.display()
    );
    Ok(())
}

fn cmd_eval(bundle_dir: &Path, dataset: &Path, metric: &str, trials: usize, seed: u64) -> CliResult {
    let registry = MetricRegistry::with_builtins();
    registry.get(metric).map_err(usage)?;
    let bundle = load_bundle(bundle_dir)?;
    bundle.metric(metric).map_err(usage)?;
    let data = load_dataset(dataset)?;
    let poses: Vec<_> = data.poses().cloned().collect();
    let report = evaluate(&bundle, &registry, metric, &poses, trials, seed).map_err(runtime)?;
    println!("{report}");
    Ok(())
}

fn cmd_serve(bundle_dir: &Path, dataset: &Path, host: IpAddr, port: u16) -> CliResult {
    require_dir(bundle_dir, "bundle")?;
    require_file(dataset, "dataset")?;
    let state = ServiceState::load(bundle_dir, dataset).map_err(CliError::Usage)?;
    let runtime_ = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(runtime)?;
    runtime_
        .block_on(serve(state, SocketAddr::new(host, port)))
        .map_err(runtime)
}

fn cmd_metrics_list() -> CliResult {
    for def in MetricRegistry::with_builtins().iter() {
        println!("{}\t{}", def.name(), def.required_roles().join(","));
    }
    Ok(())
}

pub fn execute(cli: Cli) -> CliResult {
    if cli.threads == 0 {
        return Err(usage(anyhow!("--threads must be at least 1")));
    }
    // The global pool may already exist when called twice in one process.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    match &cli.command {
        Command::Ingest {
            dir,
            output,
            roles,
            scale,
        } => cmd_ingest(dir, output, roles.as_deref(), *scale),
        Command::Synth {
            output,
            clips,
            frames,
            seed,
        } => cmd_synth(output, *clips, *frames, *seed),
        Command::TrainAe { dataset, bundle, resume, train } => cmd_train_ae(dataset, bundle, *resume, train),
        Command::TrainMetric {
            dataset,
            bundle,
            metric,
            train,
        } => cmd_train_metric(dataset, bundle, metric, train),
        Command::Edit {
            bundle,
            dataset,
            clip,
            frame,
            targets,
            radius,
            shape,
            output,
        } => cmd_edit(bundle, dataset, clip, *frame, targets, *radius, *shape, output),
        Command::Eval {
            bundle,
            dataset,
            metric,
            trials,
            seed,
        } => cmd_eval(bundle, dataset, metric, *trials, *seed),
        Command::Serve {
            bundle,
            dataset,
            port,
            host,
        } => cmd_serve(bundle, dataset, *host, *port),
        Command::Metrics {
            action: MetricsAction::List,
        } => cmd_metrics_list(),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let (CliError::Usage(err) | CliError::Runtime(err)) = &e;
            eprintln!("error: {err:#}");
            e.exit_code()
        }
    }
}
