//! Command-line front end: `run`, `compare` and `report`.
//!
//! Exit codes: 0 success, 1 I/O or internal failure, 2 invalid input
//! (flags, space file, history, incompatible resume), 3 aborted run.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::acquisition::IncumbentReference;
use crate::error::{HoistError, Result};
use crate::history::{read_history, replay, HistoryEvent, HistoryWriter, ReplayCache, RunHeader};
use crate::objectives::{CurveBench, DeceptiveBench, DistortedBranin, ExternalCommand, Objective};
use crate::optimizer::{run_with, ForestOptions, Mode, RunContext, RunOptions, RunResult};
use crate::scheduler::{plan_brackets, sweep_resource};
use crate::space::ConfigSpace;

#[derive(Debug, Parser)]
#[command(name = "hoist", version, about = "Multi-fidelity Bayesian hyperparameter optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one optimization and write history.jsonl, convergence.csv and result.json.
    Run(RunArgs),
    /// Run every (mode, seed) pair and write compare.csv and summary.csv.
    Compare(CompareArgs),
    /// Summarize a run directory.
    Report {
        /// Directory holding history.jsonl.
        dir: PathBuf,
    },
}

#[derive(Debug, Clone, Args)]
struct ManifestArgs {
    /// Search space JSON file; builtin objectives default to their own space.
    #[arg(long)]
    space: Option<PathBuf>,
    /// curve-bench, deceptive-bench, distorted-branin or external.
    #[arg(long)]
    objective: Option<String>,
    /// Command evaluating one configuration per invocation (JSON lines over stdio).
    #[arg(long)]
    external_cmd: Option<String>,
    #[arg(long, default_value_t = 27.0)]
    max_resource: f64,
    #[arg(long, default_value_t = 3.0)]
    eta: f64,
    #[arg(long, default_value_t = 4)]
    loops: usize,
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
    #[arg(long, default_value_t = 10)]
    trees: usize,
    #[arg(long, default_value_t = 500)]
    pool_size: usize,
    #[arg(long, default_value_t = 0.0)]
    random_fraction: f64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = 60.0)]
    timeout_secs: f64,
    /// `y*` for EI: model-predicted or observed.
    #[arg(long, default_value = "model-predicted", value_parser = parse_incumbent)]
    incumbent: IncumbentReference,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    manifest: ManifestArgs,
    #[arg(long, default_value = "hoist")]
    mode: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    manifest: ManifestArgs,
    /// Comma-separated modes, at least two.
    #[arg(long, default_value = "hoist,hyperband_random,random")]
    modes: String,
    /// Comma-separated seeds or an inclusive range like `1..10`; at least two.
    #[arg(long, default_value = "1..10")]
    seeds: String,
}

fn parse_incumbent(s: &str) -> std::result::Result<IncumbentReference, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("expected model-predicted or observed, got `{s}`"))
}

/// Everything needed to reproduce a run from its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub space_file: Option<PathBuf>,
    pub objective: String,
    pub external_cmd: Option<String>,
    pub timeout_secs: f64,
    pub options: RunOptions,
}

impl RunManifest {
    /// Fields that must match for a history to be resumed.
    fn resume_key(&self) -> serde_json::Value {
        let mut m = self.clone();
        m.options.total_bracket_loops = 0;
        m.options.workers = 0;
        serde_json::to_value(m).expect("manifest serializes")
    }
}

enum Failure {
    Invalid(String),
    Aborted(String),
    Internal(String),
}

impl From<HoistError> for Failure {
    fn from(e: HoistError) -> Self {
        match e {
            HoistError::Aborted(_) => Failure::Aborted(e.to_string()),
            HoistError::Io { .. } => Failure::Internal(e.to_string()),
            other => Failure::Invalid(other.to_string()),
        }
    }
}

impl Failure {
    fn exit_code(&self) -> i32 {
        match self {
            Failure::Invalid(_) => 2,
            Failure::Aborted(_) => 3,
            Failure::Internal(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Invalid(m) | Failure::Aborted(m) | Failure::Internal(m) => m,
        }
    }
}

/// Initializes logging from `HOIST_LOG` (e.g. `HOIST_LOG=debug`); defaults to warnings.
pub fn init_logging() {
    let env = env_logger::Env::new().filter_or("HOIST_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).try_init();
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let outcome = match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::Compare(args) => cmd_compare(&args),
        Command::Report { dir } => cmd_report(&dir).map(|text| print!("{text}")),
    };
    match outcome {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message());
            f.exit_code()
        }
    }
}

fn build_manifest(args: &ManifestArgs, mode: Mode, seed: u64) -> std::result::Result<RunManifest, Failure> {
    let objective = match (&args.objective, &args.external_cmd) {
        (Some(o), _) => o.clone(),
        (None, Some(_)) => "external".to_string(),
        (None, None) => "curve-bench".to_string(),
    };
    if !["curve-bench", "deceptive-bench", "distorted-branin", "external"].contains(&objective.as_str()) {
        return Err(Failure::Invalid(format!(
            "unknown objective `{objective}` (expected curve-bench, deceptive-bench, distorted-branin or external)"
        )));
    }
    if objective == "external" && args.external_cmd.is_none() {
        return Err(Failure::Invalid("--objective external needs --external-cmd".into()));
    }
    if !(args.timeout_secs > 0.0 && args.timeout_secs.is_finite()) {
        return Err(Failure::Invalid(format!("--timeout-secs must be positive, got {}", args.timeout_secs)));
    }
    let options = RunOptions {
        mode,
        max_resource: args.max_resource,
        eta: args.eta,
        total_bracket_loops: args.loops,
        rho: args.rho,
        forest: ForestOptions {
            tree_count: args.trees,
            ..ForestOptions::default()
        },
        pool_size: args.pool_size,
        random_fraction: args.random_fraction,
        incumbent_reference: args.incumbent,
        seed,
        workers: args.workers,
    };
    options.validate()?;
    Ok(RunManifest {
        space_file: args.space.clone(),
        objective,
        external_cmd: args.external_cmd.clone(),
        timeout_secs: args.timeout_secs,
        options,
    })
}

fn load_space(manifest: &RunManifest) -> std::result::Result<ConfigSpace, Failure> {
    match &manifest.space_file {
        Some(path) => ConfigSpace::from_json_file(path).map_err(|e| match e {
            HoistError::Io { .. } => Failure::Invalid(e.to_string()),
            other => Failure::Invalid(format!("{}: {other}", path.display())),
        }),
        None => match manifest.objective.as_str() {
            "curve-bench" => Ok(CurveBench::space()),
            "deceptive-bench" => Ok(DeceptiveBench::space()),
            "distorted-branin" => Ok(DistortedBranin::space()),
            _ => Err(Failure::Invalid("--space is required for external objectives".into())),
        },
    }
}

fn make_objective(manifest: &RunManifest) -> std::result::Result<Box<dyn Objective>, Failure> {
    Ok(match manifest.objective.as_str() {
        "curve-bench" => Box::new(CurveBench),
        "deceptive-bench" => Box::new(DeceptiveBench::default()),
        "distorted-branin" => Box::new(DistortedBranin),
        _ => {
            let cmd = manifest.external_cmd.as_deref().unwrap_or_default();
            Box::new(
                ExternalCommand::parse(cmd, Duration::from_secs_f64(manifest.timeout_secs))
                    .ok_or_else(|| Failure::Invalid("--external-cmd is empty".into()))?,
            )
        }
    })
}

fn write_atomic(path: &Path, contents: &str) -> std::result::Result<(), Failure> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)
        .and_then(|_| fs::rename(&tmp, path))
        .map_err(|e| Failure::Internal(format!("{}: {e}", path.display())))
}

fn result_json(manifest: &RunManifest, result: &RunResult) -> String {
    let incumbent = result.incumbent().map(|r| {
        serde_json::json!({
            "config": r.config.values(),
            "loss": r.loss,
            "seq": r.created_seq,
            "id": r.config.id(),
        })
    });
    let body = serde_json::json!({
        "incumbent": incumbent,
        "loss": result.incumbent().map(|r| r.loss),
        "total_resource": result.total_resource,
        "evaluations": result.store.total_records(),
        "final_weights": result.final_weights(),
        "manifest": manifest,
    });
    serde_json::to_string_pretty(&body).expect("result serializes") + "\n"
}

/// Checks `out` and, if it holds a compatible history, returns the cache to resume from.
fn prepare_out_dir(out: &Path, manifest: &RunManifest) -> std::result::Result<Option<ReplayCache>, Failure> {
    let history = out.join("history.jsonl");
    if history.exists() {
        let events = read_history(&history).map_err(|e| Failure::Invalid(e.to_string()))?;
        let header = events.iter().find_map(|e| match e {
            HistoryEvent::Run(h) => Some(h),
            _ => None,
        });
        let Some(header) = header else {
            return Err(Failure::Invalid(format!("{}: no run header", history.display())));
        };
        let logged: RunManifest = serde_json::from_value(header.options.clone())
            .map_err(|e| Failure::Invalid(format!("{}: bad run header: {e}", history.display())))?;
        if logged.resume_key() != manifest.resume_key() {
            return Err(Failure::Invalid(format!(
                "{} holds a run with different options; refusing to resume",
                out.display()
            )));
        }
        if logged.options.total_bracket_loops > manifest.options.total_bracket_loops {
            return Err(Failure::Invalid(format!(
                "{} already covers {} loops; refusing to shrink it to {}",
                out.display(),
                logged.options.total_bracket_loops,
                manifest.options.total_bracket_loops
            )));
        }
        let cache = ReplayCache::from_events(&events);
        log::info!("resuming from {} logged evaluations", cache.len());
        return Ok(Some(cache));
    }
    if out.exists() {
        let non_empty = fs::read_dir(out)
            .map_err(|e| Failure::Internal(format!("{}: {e}", out.display())))?
            .next()
            .is_some();
        if non_empty {
            return Err(Failure::Invalid(format!(
                "{} is not empty and holds no history.jsonl",
                out.display()
            )));
        }
    }
    fs::create_dir_all(out).map_err(|e| Failure::Internal(format!("{}: {e}", out.display())))?;
    Ok(None)
}

fn execute(manifest: &RunManifest, out: &Path) -> std::result::Result<RunResult, Failure> {
    let space = load_space(manifest)?;
    let objective = make_objective(manifest)?;
    let cache = prepare_out_dir(out, manifest)?;
    let header = RunHeader::new(serde_json::to_value(manifest).expect("manifest serializes"), &space);
    let mut writer = HistoryWriter::create(out.join("history.jsonl"), &header)?;
    let result = run_with(
        &space,
        objective.as_ref(),
        &manifest.options,
        RunContext {
            observer: &mut writer,
            replay: cache.as_ref(),
        },
    );
    writer.finish_check()?;
    let result = result?;
    write_atomic(&out.join("convergence.csv"), &result.convergence_csv())?;
    write_atomic(&out.join("result.json"), &result_json(manifest, &result))?;
    Ok(result)
}

fn cmd_run(args: &RunArgs) -> std::result::Result<(), Failure> {
    let mode: Mode = args.mode.parse()?;
    let manifest = build_manifest(&args.manifest, mode, args.seed)?;
    let result = execute(&manifest, &args.manifest.out)?;
    match result.incumbent() {
        Some(r) => println!(
            "incumbent loss {} after {} resource units ({})",
            r.loss,
            result.total_resource,
            args.manifest.out.display()
        ),
        None => println!("no full-resource evaluation completed"),
    }
    Ok(())
}

fn parse_seeds(text: &str) -> std::result::Result<Vec<u64>, Failure> {
    let bad = || Failure::Invalid(format!("cannot parse seeds `{text}`"));
    if let Some((a, b)) = text.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        if b < a {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    text.split(',')
        .map(|s| s.trim().parse().map_err(|_| bad()))
        .collect()
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

/// Best loss reached within `budget` resource units, if any.
pub fn best_at(trace: &[crate::optimizer::TracePoint], budget: f64) -> Option<f64> {
    trace
        .iter()
        .take_while(|p| p.cum_resource <= budget * (1.0 + 1e-12))
        .last()
        .map(|p| p.best_loss)
}

fn cmd_compare(args: &CompareArgs) -> std::result::Result<(), Failure> {
    let modes = args
        .modes
        .split(',')
        .map(|m| m.trim().parse::<Mode>())
        .collect::<Result<Vec<_>>>()?;
    let seeds = parse_seeds(&args.seeds)?;
    if modes.len() < 2 {
        return Err(Failure::Invalid("compare needs at least 2 modes".into()));
    }
    if seeds.len() < 2 {
        return Err(Failure::Invalid("compare needs at least 2 seeds".into()));
    }
    let out = &args.manifest.out;
    fs::create_dir_all(out).map_err(|e| Failure::Internal(format!("{}: {e}", out.display())))?;
    // fail fast on a bad manifest before any sub-run
    load_space(&build_manifest(&args.manifest, modes[0], seeds[0])?)?;

    let plans = plan_brackets(args.manifest.max_resource, args.manifest.eta)?;
    let per_sweep = sweep_resource(&plans);
    let checkpoints: Vec<f64> = (1..=args.manifest.loops).map(|j| j as f64 * per_sweep).collect();

    let mut long = String::from("mode,seed,cum_resource,best_loss\n");
    let mut finals: Vec<(Mode, Vec<Vec<f64>>)> = Vec::new();
    for &mode in &modes {
        let mut per_checkpoint = vec![Vec::new(); checkpoints.len()];
        for &seed in &seeds {
            let manifest = build_manifest(&args.manifest, mode, seed)?;
            let dir = out.join("runs").join(format!("{mode}-seed{seed}"));
            if dir.exists() {
                fs::remove_dir_all(&dir).map_err(|e| Failure::Internal(format!("{}: {e}", dir.display())))?;
            }
            match execute(&manifest, &dir) {
                Ok(result) => {
                    for p in &result.trace {
                        long.push_str(&format!("{mode},{seed},{},{}\n", p.cum_resource, p.best_loss));
                    }
                    for (slot, &c) in per_checkpoint.iter_mut().zip(&checkpoints) {
                        if let Some(b) = best_at(&result.trace, c) {
                            slot.push(b);
                        }
                    }
                }
                Err(f) => {
                    log::warn!("{mode} seed {seed} failed: {}", f.message());
                    long.push_str(&format!("{mode},{seed},,failed\n"));
                }
            }
        }
        finals.push((mode, per_checkpoint));
    }

    let mut summary = String::from("mode,cum_resource,median_best_loss,runs\n");
    for (mode, per_checkpoint) in &mut finals {
        for (values, c) in per_checkpoint.iter_mut().zip(&checkpoints) {
            let m = median(values).map(|v| v.to_string()).unwrap_or_default();
            summary.push_str(&format!("{mode},{c},{m},{}\n", values.len()));
        }
    }
    write_atomic(&out.join("compare.csv"), &long)?;
    write_atomic(&out.join("summary.csv"), &summary)?;
    print!("{summary}");
    Ok(())
}

/// Renders the `key: value` report for a run directory.
fn cmd_report(dir: &Path) -> std::result::Result<String, Failure> {
    let path = dir.join("history.jsonl");
    if !path.is_file() {
        return Err(Failure::Invalid(format!("{}: no history file", path.display())));
    }
    let events = read_history(&path).map_err(|e| Failure::Invalid(e.to_string()))?;
    let header = events
        .iter()
        .find_map(|e| match e {
            HistoryEvent::Run(h) => Some(h.clone()),
            _ => None,
        })
        .ok_or_else(|| Failure::Invalid(format!("{}: no run header", path.display())))?;
    let manifest: RunManifest = serde_json::from_value(header.options.clone())
        .map_err(|e| Failure::Invalid(format!("{}: bad run header: {e}", path.display())))?;
    let space = header.space().map_err(|e| Failure::Invalid(e.to_string()))?;
    let replayed = replay(&events, &space, manifest.options.max_resource, manifest.options.eta)
        .map_err(|e| Failure::Invalid(e.to_string()))?;
    let store = &replayed.store;

    let mut out = String::new();
    let mut line = |k: &str, v: String| out.push_str(&format!("{k}: {v}\n"));
    line("mode", manifest.options.mode.to_string());
    line("objective", manifest.objective.clone());
    match store.incumbent() {
        Some(r) => {
            line("incumbent_loss", r.loss.to_string());
            line(
                "incumbent_config",
                serde_json::to_string(r.config.values()).expect("config serializes"),
            );
        }
        None => {
            line("incumbent_loss", "n/a".into());
            line("incumbent_config", "n/a".into());
        }
    }
    let total: f64 = store.records_in_order().iter().map(|r| r.resource).sum();
    line("total_resource", total.to_string());
    line("evaluations", store.total_records().to_string());
    line("failed_evaluations", store.failed().len().to_string());
    line(
        "weights",
        match replayed.weights.last() {
            Some(w) => serde_json::to_string(&w.c).expect("weights serialize"),
            None => "n/a".into(),
        },
    );
    let join = |v: Vec<String>| v.join(",");
    line(
        "stage_resources",
        join(store.stages().iter().map(|s| s.resource_level.to_string()).collect()),
    );
    line(
        "stage_sizes",
        join(store.stages().iter().map(|s| s.len().to_string()).collect()),
    );
    Ok(out)
}
