//! `gee`: command-line front end for the selective event-detection ensemble.

mod config;
mod output;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use graph_event_ensemble::evaluation::{
    derive_seed, make_synthetic, noise_sweep, significance_from_components, EventTruth, SignificanceOptions,
};
use graph_event_ensemble::ingestion::{load_edge_stream, TemporalGraphSequence};
use graph_event_ensemble::pipeline::{run_detectors, run_ensemble};
use graph_event_ensemble::selection::Strategy;
use thiserror::Error;

use crate::config::RunConfig;
use crate::output::{file_stem, OutDir, RunManifest};

/// Counters for [`derive_seed`]: one stream per seeded activity.
const SEED_SYNTHETIC: u64 = 0;
const SEED_SIGNIFICANCE: u64 = 1;
const SEED_NOISE: u64 = 2;
const SEED_RANDOM_STRATEGY: u64 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] graph_event_ensemble::Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_validation() => 1,
            CliError::Core(e) if e.is_io() => 2,
            CliError::Core(_) | CliError::Internal(_) => 3,
            CliError::Io { .. } => 2,
            CliError::Config(_) => 1,
        }
    }
}

#[derive(Parser)]
#[command(name = "gee", version, about = "Selective anomaly ensembles for event detection in temporal graphs")]
struct Cli {
    /// Repeat for more log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every detector on every feature and write one score CSV each.
    Detect(Common),
    /// Run the two-phase ensemble and write the report and final ranking.
    Ensemble(Common),
    /// Compare the ensemble against random ensembles on ground truth.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Sweep the number of shuffled component lists per strategy.
    Noise {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        eval: EvalArgs,
        /// Largest number of shuffled lists.
        #[arg(long)]
        k_max: Option<usize>,
        /// Noise draws averaged per point.
        #[arg(long)]
        repeats: Option<usize>,
    },
    /// Generate a planted-clique edge list and its ground truth.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Edge list CSV: `time,src,dst[,weight]`.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output directory; nothing is written outside it.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// full, vertical, horizontal, diverse or random:K[:SEED].
    #[arg(long)]
    strategy: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    /// Ground truth file, one event tick per line.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    delay_max: Option<usize>,
}

struct Session {
    cfg: RunConfig,
    seed: u64,
    out: OutDir,
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn session(name: &str, config: Option<&Path>, inputs: &[&Path], out: &Path, seed: Option<u64>) -> Result<Session, CliError> {
    let cfg = RunConfig::load(config)?;
    let seed = seed.or(cfg.seed).unwrap_or(0);
    let manifest = RunManifest {
        tool: "gee",
        version: env!("CARGO_PKG_VERSION"),
        command: name.to_string(),
        config: config.map(display),
        inputs: inputs.iter().map(|p| display(p)).collect(),
        output_dir: display(out),
        seed,
    };
    Ok(Session {
        cfg,
        seed,
        out: OutDir::create(out, manifest)?,
    })
}

/// `random:K` without an explicit seed draws one from the master seed.
fn resolve_strategy(raw: &str, master: u64) -> Result<Strategy, CliError> {
    let parsed: Strategy = raw.parse()?;
    Ok(match parsed {
        Strategy::Random { k, .. } if raw.matches(':').count() == 1 => Strategy::Random {
            k,
            seed: derive_seed(master, SEED_RANDOM_STRATEGY),
        },
        s => s,
    })
}

fn require<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
    p.as_deref().ok_or_else(|| CliError::Config(format!("--{flag} is required")))
}

fn load_graph(s: &Session, input: &Path) -> Result<TemporalGraphSequence, CliError> {
    if !input.exists() {
        return Err(CliError::io(input, std::io::Error::from(std::io::ErrorKind::NotFound)));
    }
    Ok(load_edge_stream(input, s.cfg.input.directed, &s.cfg.input.tick_spec())?)
}

fn open_common(name: &str, c: &Common, extra: &[&Path]) -> Result<(Session, TemporalGraphSequence), CliError> {
    let input = require(&c.input, "input")?;
    let mut inputs = vec![input];
    inputs.extend_from_slice(extra);
    let mut s = session(name, c.config.as_deref(), &inputs, &c.out, c.seed)?;
    if let Some(raw) = &c.strategy {
        s.cfg.pipeline.strategy = resolve_strategy(raw, s.seed)?;
    }
    s.cfg.pipeline.validate()?;
    let g = load_graph(&s, input)?;
    Ok((s, g))
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Core(e.into())
}

fn cmd_detect(c: &Common) -> Result<(), CliError> {
    let (s, g) = open_common("detect", c, &[])?;
    for list in run_detectors(&g, &s.cfg.pipeline)? {
        s.out
            .commented(&format!("{}.csv", file_stem(&list.id)), |buf| Ok(list.write_csv(buf)?))?;
    }
    Ok(())
}

fn cmd_ensemble(c: &Common) -> Result<(), CliError> {
    let (s, g) = open_common("ensemble", c, &[])?;
    let components = run_detectors(&g, &s.cfg.pipeline)?;
    let report = run_ensemble(components, &s.cfg.pipeline)?;
    log::info!("stage timing: {:?}", report.timing);
    s.out.json("report.json", &report)?;
    s.out
        .commented("final.csv", |buf| Ok(report.final_ranks.write_csv(buf, &report.final_scores)?))?;
    Ok(())
}

fn cmd_evaluate(c: &Common, eval: &EvalArgs, trials: Option<usize>) -> Result<(), CliError> {
    let truth_path = require(&eval.truth, "truth")?;
    let (s, g) = open_common("evaluate", c, &[truth_path])?;
    let truth = EventTruth::load(truth_path)?;
    let e = &s.cfg.evaluation;
    let opts = SignificanceOptions {
        trials: trials.unwrap_or(e.trials),
        seed: derive_seed(s.seed, SEED_SIGNIFICANCE),
        delay: e.delay,
        delay_max: eval.delay_max.unwrap_or(e.delay_max),
    };
    let components = run_detectors(&g, &s.cfg.pipeline)?;
    let report = significance_from_components(&components, &s.cfg.pipeline, &truth, &opts)?;
    s.out.json("eval.json", &report)?;
    s.out.commented("ap_delay.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["delay", "ap"]).map_err(csv_err)?;
        for (d, ap) in &report.ap_by_delay {
            w.write_record([d.to_string(), ap.to_string()]).map_err(csv_err)?;
        }
        w.flush().map_err(|e| CliError::Internal(e.to_string()))
    })?;
    Ok(())
}

fn cmd_noise(c: &Common, eval: &EvalArgs, k_max: Option<usize>, repeats: Option<usize>) -> Result<(), CliError> {
    let truth_path = require(&eval.truth, "truth")?;
    let (s, g) = open_common("noise", c, &[truth_path])?;
    let truth = EventTruth::load(truth_path)?;
    let e = &s.cfg.evaluation;
    let strategies = match &c.strategy {
        Some(_) => vec![s.cfg.pipeline.strategy],
        None => e.strategies.clone(),
    };
    let components = run_detectors(&g, &s.cfg.pipeline)?;
    let rows = noise_sweep(
        &components,
        &s.cfg.pipeline,
        &truth,
        &strategies,
        k_max.unwrap_or(e.k_max),
        repeats.unwrap_or(e.repeats),
        derive_seed(s.seed, SEED_NOISE),
        e.delay,
    )?;
    s.out.commented("noise.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["strategy", "k", "mean_ap"]).map_err(csv_err)?;
        for r in &rows {
            w.write_record([r.strategy.clone(), r.k.to_string(), r.mean_ap.to_string()])
                .map_err(csv_err)?;
        }
        w.flush().map_err(|e| CliError::Internal(e.to_string()))
    })?;
    Ok(())
}

fn cmd_synth(config: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<(), CliError> {
    let s = session("synth", config, &[], out, seed)?;
    let (g, truth) = make_synthetic(&s.cfg.synthetic, derive_seed(s.seed, SEED_SYNTHETIC))?;
    s.out.commented("edges.csv", |buf| Ok(g.write_edge_csv(buf)?))?;
    s.out.commented("truth.txt", |buf| {
        for t in &truth.event_ticks {
            writeln!(buf, "{t}").map_err(|e| CliError::Internal(e.to_string()))?;
        }
        Ok(())
    })?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Detect(c) => cmd_detect(c),
        Command::Ensemble(c) => cmd_ensemble(c),
        Command::Evaluate { common, eval, trials } => cmd_evaluate(common, eval, *trials),
        Command::Noise {
            common,
            eval,
            k_max,
            repeats,
        } => cmd_noise(common, eval, *k_max, *repeats),
        Command::Synth { config, out, seed } => cmd_synth(config.as_deref(), out, *seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
