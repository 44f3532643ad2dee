//! The `ctrsmf` command line: argument definitions and one function per
//! subcommand.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ctrsmf_core::corpus::{split, Subsample, TimeSource};
use ctrsmf_core::evaluate::{self, evaluate_model, ExperimentData};
use ctrsmf_core::trainer::{Clock, FrozenClock, TrainError, Trainer, TrainingData};
use ctrsmf_core::{Dataset, Model, SplitDataset, TrainTrace, Variant};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::config::{parse_cutoff, Resolved, Settings};
use crate::exec::{RayonExecutor, WallClock};
use crate::hetrec::HetrecPaths;
use crate::report::{self, Preamble, RecallCurve, SweepOutcome};
use crate::snapshot::{self, ModelSnapshot, SplitSpec};

#[derive(Debug, Parser)]
#[command(name = "ctrsmf", version, about = "Topic- and social-aware recommender: ingest, train, evaluate, sweep")]
pub struct Cli {
    /// Flat key = value settings file; flags take precedence
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// More log output (-v info, -vv debug)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Read hetrec2011-style files into a dataset snapshot
    Ingest(IngestArgs),
    /// Train one model on the training side of the split
    Train(TrainArgs),
    /// Recall@M of a trained model on the test side of its split
    Eval(EvalArgs),
    /// Train and evaluate every (lambda-v, lambda-q) grid cell
    Sweep(CommonArgs),
    /// Compare the full social network against time-filtered ones
    Leak(CommonArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Unpacked hetrec2011 directory; individual file flags override it
    #[arg(long)]
    pub hetrec_dir: Option<PathBuf>,
    /// user, item, weight rows
    #[arg(long)]
    pub interactions: Option<PathBuf>,
    /// user, friend[, time] rows
    #[arg(long)]
    pub friends: Option<PathBuf>,
    /// user, item, tag, time rows
    #[arg(long)]
    pub tags: Option<PathBuf>,
    /// tag id, tag text rows
    #[arg(long)]
    pub tag_catalog: Option<PathBuf>,
    #[command(flatten)]
    pub settings: Settings,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Stem of the output files
    #[arg(long, default_value = "model")]
    pub name: String,
    /// Continue from a model snapshot
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[command(flatten)]
    pub settings: Settings,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model snapshot written by `train`
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub settings: Settings,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[command(flatten)]
    pub settings: Settings,
}

pub fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
}

pub fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => Settings::from_file(p)?,
        None => Settings::default(),
    };
    match cli.command {
        Command::Ingest(a) => ingest(&a, &file.overlay(&a.settings)),
        Command::Train(a) => train(&a, &file.overlay(&a.settings)),
        Command::Eval(a) => eval(&a, &file.overlay(&a.settings)),
        Command::Sweep(a) => sweep(&file.overlay(&a.settings)),
        Command::Leak(a) => leak(&file.overlay(&a.settings)),
    }
}

fn out_dir(settings: &Settings) -> Result<PathBuf> {
    let dir = settings.out_dir();
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn echo_config(dir: &Path, command: &str, resolved: &Resolved) -> Result<()> {
    let path = dir.join(format!("{command}.config.toml"));
    let body = format!("# config_hash={}\n{}", resolved.hash(), resolved.to_toml());
    fs::write(&path, body).with_context(|| format!("writing {}", path.display()))
}

fn executor(settings: &Settings) -> Result<RayonExecutor> {
    let exec = RayonExecutor::new(settings.workers())?;
    info!("using {} worker threads", exec.threads());
    Ok(exec)
}

/// The dataset snapshot, subsampled when requested.
fn load_data(settings: &Settings, subsample: Option<Subsample>) -> Result<Dataset> {
    let path = settings.dataset_path();
    let data = snapshot::load_dataset(&path)?;
    Ok(match subsample {
        Some(s) => {
            let sub = data.subsample(s)?;
            info!("subsampled to {} users and {} items", sub.stats.users, sub.stats.items);
            sub
        }
        None => data,
    })
}

fn time_source_name(t: TimeSource) -> &'static str {
    match t {
        TimeSource::None => "none",
        TimeSource::Native => "native",
        TimeSource::ActivityProxy => "activity-proxy",
    }
}

/// Table-1 style summary lines.
pub fn summary(data: &Dataset) -> String {
    let s = &data.stats;
    let mut out = format!(
        "users\t{}\nitems\t{}\ntags\t{}\nuser-user relations\t{}\nuser-tag-item\t{}\nuser-item\t{}\nsparsity\t{:.4}%\n",
        s.users,
        s.items,
        s.tags,
        s.relations,
        s.tag_assignments,
        s.interactions,
        s.sparsity_percent()
    );
    match &data.social {
        Some(q) => out.push_str(&format!("social times\t{}\n", time_source_name(q.time_source()))),
        None => out.push_str("social times\tno social matrix\n"),
    }
    out
}

pub fn ingest(args: &IngestArgs, settings: &Settings) -> Result<()> {
    let resolved = settings.resolve()?;
    let mut paths = args.hetrec_dir.as_deref().map(HetrecPaths::detect).unwrap_or_default();
    let pick = |flag: &Option<PathBuf>, found: &mut Option<PathBuf>| {
        if flag.is_some() {
            *found = flag.clone();
        }
    };
    pick(&args.interactions, &mut paths.interactions);
    pick(&args.friends, &mut paths.friendships);
    pick(&args.tags, &mut paths.tags);
    pick(&args.tag_catalog, &mut paths.tag_catalog);
    info!("reading {paths:?}");
    let mut data = paths.load()?;
    if let Some(s) = resolved.subsample() {
        data = data.subsample(s)?;
    }
    let dir = out_dir(settings)?;
    let path = settings.dataset.clone().unwrap_or_else(|| dir.join("dataset.json"));
    snapshot::save_dataset(&path, &data)?;
    print!("{}", summary(&data));
    println!("fingerprint\t{}", data.fingerprint());
    println!("written\t{}", path.display());
    Ok(())
}

fn split_data(data: &Dataset, spec: SplitSpec) -> Result<SplitDataset> {
    let s = data.split(spec.test_fraction, spec.seed)?;
    if s.relaxed > 0 {
        warn!("{} test ratings leave their item without training ratings", s.relaxed);
    }
    Ok(s)
}

fn training_data<'a>(data: &'a Dataset, s: &'a SplitDataset) -> TrainingData<'a> {
    TrainingData { ratings: &s.train, social: data.social.as_ref(), corpus: data.corpus.as_ref() }
}

fn preamble(resolved: &Resolved, data: &Dataset) -> Preamble {
    let p = Preamble::new(resolved.hash(), data.fingerprint());
    match &data.social {
        Some(q) => p.note("social_times", time_source_name(q.time_source())),
        None => p,
    }
}

pub fn train(args: &TrainArgs, settings: &Settings) -> Result<()> {
    let resolved = settings.resolve()?;
    let config = resolved.train_config()?;
    let dir = out_dir(settings)?;
    echo_config(&dir, "train", &resolved)?;
    let data = load_data(settings, resolved.subsample())?;
    let spec = SplitSpec { seed: resolved.split_seed, test_fraction: resolved.test_fraction };
    let s = split_data(&data, spec)?;
    let exec = executor(settings)?;
    let trainer = Trainer::new(config, training_data(&data, &s), &exec)?;
    let fingerprint = data.fingerprint();
    let snap = |state: &ctrsmf_core::ModelState, trace: &TrainTrace| ModelSnapshot {
        model: Model { config, fingerprint, state: state.clone() },
        trace: trace.clone(),
        split: spec,
        subsample: resolved.subsample(),
    };

    let (state, trace) = match &args.resume {
        Some(p) => {
            let prior = snapshot::load_model(p)?;
            prior.check_dataset(&data)?;
            let mut expected = prior.model.config;
            expected.hp.max_iters = config.hp.max_iters;
            expected.hp.tolerance = config.hp.tolerance;
            expected.snapshot_every = config.snapshot_every;
            if expected != config || prior.split != spec {
                bail!("{} was trained with different settings; only --max-iters, --tolerance and --snapshot-every may change on resume", p.display());
            }
            info!("resuming after sweep {}", prior.trace.len());
            (prior.model.state, prior.trace)
        }
        None => (trainer.initialize(), TrainTrace::default()),
    };

    let mut clock: Box<dyn Clock> = if resolved.timings { Box::new(WallClock::new()) } else { Box::new(FrozenClock) };
    let mut snapshot_error = None;
    let mut on_sweep = |state: &ctrsmf_core::ModelState, trace: &TrainTrace| {
        let r = trace.last().expect("called after a sweep");
        info!("sweep {} objective {}", r.sweep, r.objective);
        if config.snapshot_every > 0 && r.sweep % config.snapshot_every == 0 && snapshot_error.is_none() {
            let path = dir.join(format!("{}.sweep-{:04}.snap", args.name, r.sweep));
            snapshot_error = snapshot::save_model(&path, &snap(state, trace)).err();
        }
    };
    let outcome = trainer.run(state, trace, clock.as_mut(), &mut on_sweep);
    if let Some(e) = snapshot_error {
        return Err(e.into());
    }
    let (state, trace) = match outcome {
        Ok(x) => x,
        Err(TrainError::Aborted { sweep, cause, last_good }) => {
            let path = dir.join(format!("{}.aborted.snap", args.name));
            snapshot::save_model(&path, &snap(&last_good.0, &last_good.1))?;
            bail!("training stopped in sweep {sweep}: {cause}; last good state saved to {}", path.display());
        }
        Err(e) => return Err(e.into()),
    };

    let model_path = dir.join(format!("{}.snap", args.name));
    snapshot::save_model(&model_path, &snap(&state, &trace))?;
    let trace_path = dir.join(format!("{}.trace.csv", args.name));
    let p = preamble(&resolved, &data).note("variant", config.variant);
    report::write_trace(&trace_path, &p, &trace)?;
    if let Some(last) = trace.last() {
        println!("sweeps\t{}\nobjective\t{}", trace.len(), last.objective);
    }
    println!("written\t{}\nwritten\t{}", model_path.display(), trace_path.display());
    Ok(())
}

pub fn eval(args: &EvalArgs, settings: &Settings) -> Result<()> {
    let snap = snapshot::load_model(&args.model)?;
    let mut resolved = settings.resolve()?;
    let subsample = resolved.subsample().or(snap.subsample);
    // The outputs describe the model, so its own settings are what gets hashed.
    let cfg = snap.model.config;
    let hp = cfg.effective_hp();
    resolved.variant = cfg.variant;
    resolved.k = cfg.hp.k;
    resolved.lambda_u = cfg.hp.lambda_u;
    resolved.lambda_v = Some(cfg.hp.lambda_v);
    resolved.lambda_s = cfg.hp.lambda_s;
    resolved.lambda_q = Some(hp.lambda_q);
    resolved.confidence_a = cfg.hp.confidence.a();
    resolved.confidence_b = cfg.hp.confidence.b();
    resolved.max_iters = cfg.hp.max_iters;
    resolved.tolerance = cfg.hp.tolerance;
    resolved.seed = cfg.hp.seed;
    resolved.pretrain_rounds = cfg.pretrain_rounds;
    resolved.split_seed = snap.split.seed;
    resolved.test_fraction = snap.split.test_fraction;
    resolved.max_users = subsample.and_then(|s| s.max_users);
    resolved.max_items = subsample.and_then(|s| s.max_items);

    let data = load_data(settings, subsample)?;
    snap.check_dataset(&data)?;
    let s = split_data(&data, snap.split)?;
    let exec = executor(settings)?;
    let report = evaluate_model(&snap.model, &s, &resolved.ms, &exec)?;
    let dir = out_dir(settings)?;
    echo_config(&dir, "eval", &resolved)?;
    let path = dir.join("recall.csv");
    let curve = RecallCurve {
        variant: cfg.variant,
        lambda_v: cfg.hp.lambda_v,
        lambda_q: hp.lambda_q,
        report: &report,
    };
    report::write_recall(&path, &preamble(&resolved, &data), &[curve])?;
    for (m, r) in report.ms.iter().zip(&report.mean_recall) {
        println!("recall@{m}\t{r}");
    }
    println!("users\t{}\nwritten\t{}", report.n_users, path.display());
    Ok(())
}

/// Rating split a sweep scores against: the test side, or a validation
/// slice of the training side.
fn scoring_split(s: &SplitDataset, resolved: &Resolved) -> Result<SplitDataset> {
    if resolved.validation_fraction == 0.0 {
        return Ok(s.clone());
    }
    let mut v = split(&s.train, resolved.validation_fraction, resolved.split_seed)?;
    v.fingerprint = s.fingerprint;
    Ok(v)
}

/// Stored result of one sweep cell, so an interrupted sweep can resume.
#[derive(Serialize, Deserialize)]
struct CellFile {
    config_hash: String,
    cell: SweepOutcome,
}

fn cell_path(dir: &Path, lambda_v: f64, lambda_q: f64) -> PathBuf {
    dir.join(format!("lv{lambda_v}_lq{lambda_q}.json"))
}

pub fn sweep(settings: &Settings) -> Result<()> {
    let resolved = settings.resolve()?;
    let base = resolved.config_with(
        resolved.lambda_v_grid.first().copied().unwrap_or(1.0),
        resolved.lambda_q_grid.first().copied().unwrap_or(0.0),
    )?;
    let dir = out_dir(settings)?;
    echo_config(&dir, "sweep", &resolved)?;
    let hash = resolved.hash();
    let cells_dir = dir.join("sweep-cells");
    fs::create_dir_all(&cells_dir)?;

    let data = load_data(settings, resolved.subsample())?;
    let s = split_data(&data, SplitSpec { seed: resolved.split_seed, test_fraction: resolved.test_fraction })?;
    let scored = scoring_split(&s, &resolved)?;
    let exp = ExperimentData { split: &scored, social: data.social.as_ref(), corpus: data.corpus.as_ref() };
    let exec = executor(settings)?;

    let mut cells = Vec::new();
    for &lv in &resolved.lambda_v_grid {
        for &lq in &resolved.lambda_q_grid {
            let path = cell_path(&cells_dir, lv, lq);
            let stored = fs::read(&path)
                .ok()
                .and_then(|b| serde_json::from_slice::<CellFile>(&b).ok())
                .filter(|c| c.config_hash == hash);
            let cell = match stored {
                Some(c) => {
                    info!("cell (λ_v = {lv}, λ_q = {lq}) already done");
                    c.cell
                }
                None => {
                    info!("training cell (λ_v = {lv}, λ_q = {lq})");
                    let cell = SweepOutcome::from(evaluate::sweep_cell(lv, lq, &base, &exp, &resolved.ms, &exec));
                    let file = CellFile { config_hash: hash.clone(), cell };
                    fs::write(&path, serde_json::to_vec(&file)?)?;
                    file.cell
                }
            };
            cells.push(cell);
        }
    }
    let path = dir.join("sweep.csv");
    let p = preamble(&resolved, &data).note("scored_on", if resolved.validation_fraction > 0.0 { "validation" } else { "test" });
    report::write_sweep(&path, &p, &cells, &resolved.ms)?;
    let failed = cells.iter().filter(|c| c.outcome.is_err()).count();
    println!("cells\t{}\nfailed\t{failed}\nwritten\t{}", cells.len(), path.display());
    Ok(())
}

pub fn leak(settings: &Settings) -> Result<()> {
    let mut resolved = settings.resolve()?;
    resolved.variant = Variant::CtrSmf;
    let config = resolved.train_config()?;
    let dir = out_dir(settings)?;
    echo_config(&dir, "leak", &resolved)?;
    let data = load_data(settings, resolved.subsample())?;
    let social = data.social.as_ref().context("the dataset has no social network; ingest a friendship file")?;
    if social.time_source() == TimeSource::None {
        bail!("the social network carries no times (no dated relations and no dated tag activity); only static-mode training is possible");
    }
    let cutoffs = resolved
        .cutoffs
        .iter()
        .map(|c| parse_cutoff(c, social))
        .collect::<Result<Vec<_>>>()?;
    let s = split_data(&data, SplitSpec { seed: resolved.split_seed, test_fraction: resolved.test_fraction })?;
    let exp = ExperimentData { split: &s, social: Some(social), corpus: data.corpus.as_ref() };
    let exec = executor(settings)?;
    let rows = evaluate::leak_experiment(&config, &exp, &cutoffs, &resolved.ms, &exec)?;
    for r in rows.iter().filter(|r| r.m == resolved.ms[0]) {
        info!("cutoff {} {} arm: {} relations", r.cutoff, r.mode, r.edges);
    }
    let path = dir.join("leak.csv");
    report::write_leak(&path, &preamble(&resolved, &data), &rows)?;
    println!("rows\t{}\nwritten\t{}", rows.len(), path.display());
    Ok(())
}
