use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::LevelFilter;
use serde::Serialize;

use metarouter::artifact::{self, ModelArtifact};
use metarouter::config::{parse_config, seed_override, ExperimentConfig};
use metarouter::data::{self, DatasetRecord};
use metarouter::error::{Error, Result};
use metarouter::exec::Execution;
use metarouter::harness::{self, CurveRecord, ResultsTable, ROUTER_ORDER};
use metarouter::router::Choice;
use metarouter::synthetic::{check_equivalence, generate_causal, generate_joint, SynthConfig};

#[derive(Parser)]
#[command(name = "metarouter", version, about = "Train and evaluate cost-aware LLM routers from GS and PB data")]
struct Cli {
    /// Only log errors.
    #[arg(long, short, global = true, conflicts_with = "verbose")]
    quiet: bool,
    /// Log debug detail.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset as JSONL.
    SynthGen(SynthGenArgs),
    /// Fit the shift and quality models and save a model artifact.
    Train(TrainArgs),
    /// Route queries with a saved model; writes decisions as JSONL.
    Route(RouteArgs),
    /// Sweep one router over a single round and write its curve.
    Sweep(SweepArgs),
    /// Run the full Monte-Carlo experiment.
    Experiment(ExperimentArgs),
    /// Compare the joint and causal generators.
    DiagEquivalence(DiagArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Generator {
    Joint,
    Causal,
}

#[derive(Args)]
struct SynthSource {
    /// Config whose `[synthetic]` table and seed are used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed when no config is given.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SynthGenArgs {
    #[command(flatten)]
    source: SynthSource,
    #[arg(long)]
    n: usize,
    #[arg(long, value_enum, default_value = "joint")]
    generator: Generator,
    /// Emit only the evaluated arm per record instead of both outcomes.
    #[arg(long)]
    observed_only: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RouteArgs {
    #[arg(long)]
    model: PathBuf,
    /// Config the model must have been trained with.
    #[arg(long)]
    config: PathBuf,
    /// Queries as JSONL; outcome fields are ignored.
    #[arg(long)]
    queries: PathBuf,
    /// Cost weight.
    #[arg(long, allow_negative_numbers = true)]
    w: f64,
    /// Decisions file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Accept a model trained under a different config.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    router: String,
    #[arg(long, default_value_t = 0)]
    round: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's `out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DiagArgs {
    #[command(flatten)]
    source: SynthSource,
    /// Samples per generator.
    #[arg(long, default_value_t = 50_000)]
    n: usize,
    #[arg(long, default_value_t = 10)]
    bins: usize,
    /// Report file (JSON); stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct DecisionLine<'a> {
    id: &'a str,
    choice: Choice,
    m_hat: f64,
    decision_value: f64,
    w: f64,
    cost_gap: f64,
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let mut cfg = parse_config(path)?;
    if let Some(seed) = seed_override()? {
        log::info!("seed {} overridden by environment: {seed}", cfg.seed);
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn synth_source(s: &SynthSource) -> Result<(SynthConfig, u64)> {
    let (synth, seed) = match &s.config {
        Some(path) => {
            let cfg = load_config(path)?;
            let synth = cfg
                .synthetic
                .clone()
                .ok_or_else(|| Error::config("synthetic", "this command needs a `[synthetic]` table"))?;
            (synth, cfg.seed)
        }
        None => (SynthConfig::default(), s.seed.unwrap_or(0)),
    };
    synth.validate("synthetic")?;
    let seed = match (s.config.is_some(), s.seed) {
        (true, Some(_)) => {
            return Err(Error::config("seed", "give the seed in the config or with --seed, not both"))
        }
        (false, _) => seed_override()?.unwrap_or(seed),
        (true, None) => seed,
    };
    Ok((synth, seed))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| Error::io(p, e))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn synth_gen(a: &SynthGenArgs) -> Result<()> {
    if a.n == 0 {
        return Err(Error::config("n", "must be >= 1"));
    }
    let (synth, seed) = synth_source(&a.source)?;
    let synth = synth.with_seed(seed);
    let samples = match a.generator {
        Generator::Joint => generate_joint(&synth, a.n)?,
        Generator::Causal => generate_causal(&synth, a.n)?,
    };
    let records: Vec<DatasetRecord> = samples.iter().map(|s| s.to_record(a.observed_only)).collect();
    data::write_records(&a.out, &records)?;
    log::info!("wrote {} records to {}", records.len(), a.out.display());
    Ok(())
}

fn train(a: &TrainArgs) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let model = artifact::train(&cfg, Execution::from_flag(cfg.parallel))?;
    model.save(&a.out)?;
    log::info!("saved {} model to {}", model.learner.as_str(), a.out.display());
    Ok(())
}

fn route(a: &RouteArgs) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let model = ModelArtifact::load(&a.model)?;
    if let Err(e) = model.check_config(&cfg) {
        if !a.force {
            return Err(e);
        }
        log::warn!("{e}; continuing because of --force");
    }
    let queries = data::load_queries(&a.queries)?;
    let m_hat = model.predict(&queries)?;
    let decisions = model.route(&queries, a.w)?;
    let mut out = output(a.out.as_deref())?;
    for ((q, d), m) in queries.iter().zip(&decisions).zip(&m_hat) {
        let line = DecisionLine {
            id: &q.id,
            choice: d.choice,
            m_hat: *m,
            decision_value: d.decision_value,
            w: d.w,
            cost_gap: d.cost_gap,
        };
        serde_json::to_writer(&mut out, &line)?;
        writeln!(out).map_err(|e| Error::io(Path::new("<output>"), e))?;
    }
    out.flush().map_err(|e| Error::io(Path::new("<output>"), e))
}

fn sweep(a: &SweepArgs) -> Result<()> {
    if !ROUTER_ORDER.contains(&a.router.as_str()) {
        return Err(Error::config(
            "router",
            format!("unknown router `{}`; expected one of {}", a.router, ROUTER_ORDER.join(", ")),
        ));
    }
    let cfg = load_config(&a.config)?;
    let pool = harness::load_pool(&cfg)?;
    let round = harness::run_round(&cfg, a.round, pool.as_ref(), Execution::from_flag(cfg.parallel))?;
    if !round.meta.routers.contains(&a.router) {
        return Err(Error::Degenerate(format!(
            "router `{}` was not fitted: {}",
            a.router,
            round.meta.notes.join("; ")
        )));
    }
    let rows: Vec<CurveRecord> = round
        .curves
        .iter()
        .filter(|p| p.router_id == a.router)
        .map(|p| CurveRecord {
            router_id: p.router_id.clone(),
            mc_round: a.round,
            w: p.w,
            pmur: p.pmur,
            te: p.te,
        })
        .collect();
    harness::write_curves(&a.out, &rows)
}

fn experiment(a: &ExperimentArgs) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let out = a
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .ok_or_else(|| Error::config("out", "no output directory: pass --out or set `out` in the config"))?;
    let table: ResultsTable = harness::run_experiment(&cfg)?;
    table.write(&out)?;
    log::info!(
        "{} of {} rounds completed; results in {}",
        table.meta.rounds_completed,
        table.meta.rounds_requested,
        out.display()
    );
    Ok(())
}

fn diag(a: &DiagArgs) -> Result<()> {
    let (synth, seed) = synth_source(&a.source)?;
    let report = check_equivalence(&synth, a.n, a.bins, seed)?;
    let mut out = output(a.out.as_deref())?;
    serde_json::to_writer_pretty(&mut out, &report)?;
    writeln!(out).map_err(|e| Error::io(Path::new("<output>"), e))?;
    out.flush().map_err(|e| Error::io(Path::new("<output>"), e))?;
    if !report.pass {
        log::warn!("equivalence checks failed");
        return Err(Error::Degenerate("equivalence checks failed".into()));
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::SynthGen(a) => synth_gen(a),
        Command::Train(a) => train(a),
        Command::Route(a) => route(a),
        Command::Sweep(a) => sweep(a),
        Command::Experiment(a) => experiment(a),
        Command::DiagEquivalence(a) => diag(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => LevelFilter::Error,
        (_, true) => LevelFilter::Debug,
        _ => LevelFilter::Info,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();

    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
