//! Acceptance checks, one line per criterion:
//!
//! ```text
//! [PASS] 3 objective oracle: 50 instances, worst relative error 2.1e-15
//! ```
//!
//! Criteria that need the hetrec2011 archives look for them under
//! `data/hetrec2011-lastfm-2k` and `data/hetrec2011-delicious-2k` at the
//! workspace root and are skipped when absent. Their trend checks are then
//! also run on synthetic data of the same shape and reported as a proxy
//! next to the skip; a proxy result never decides the criterion.

mod common;
#[path = "../../core/tests/common/mod.rs"]
mod instances;

use std::fmt::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use common::{write_hetrec, Layout, World};
use ctrsmf::exec::RayonExecutor;
use ctrsmf::hetrec::HetrecPaths;
use ctrsmf::snapshot::{load_model, save_model, ModelSnapshot, SplitSpec};
use ctrsmf_core::corpus::{Cutoff, Subsample};
use ctrsmf_core::evaluate::{evaluate_scorer, leak_experiment, sweep, train_and_evaluate, ExperimentData, SocialMode};
use ctrsmf_core::factors::{objective, update_item, update_social, update_user};
use ctrsmf_core::topics::{compute_phi, simplex_project, theta_bound, update_theta, word_log_likelihood};
use ctrsmf_core::trainer::{train, FrozenClock, Trainer, TrainingData};
use ctrsmf_core::{Dataset, Document, Hyperparams, Model, Sequential, TrainConfig, TrainTrace, Variant};

/// Finite-difference step and the gradient bound after a block update.
const FD_STEP: f64 = 1e-6;
const STATIONARITY_TOL: f64 = 1e-6;
/// Relative agreement between the sparse objective and the dense sums.
const ORACLE_TOL: f64 = 1e-10;
/// Largest objective decrease tolerated in one sweep.
const ASCENT_TOL: f64 = 1e-9;
/// λ_q = 0 against CTR, per sweep objective.
const REDUCTION_TOL: f64 = 1e-12;
const JENSEN_TOL: f64 = 1e-10;
const SIMPLEX_TOL: f64 = 1e-10;
const PROJECTION_TOL: f64 = 1e-8;

const INSTANCES: u64 = 50;

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = fn() -> Verdict;

fn data_dir(name: &str) -> Option<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name);
    dir.is_dir().then_some(dir)
}

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn main() -> ExitCode {
    let checks: [(u8, &str, Check); 11] = [
        (1, "ingestion fidelity", ingestion_fidelity),
        (2, "stationarity", stationarity),
        (3, "objective oracle", objective_oracle),
        (4, "monotone ascent", monotone_ascent),
        (5, "reductions", reductions),
        (6, "topic math", topic_math),
        (7, "recall trend, content", content_trend),
        (8, "recall trend, social", social_trend),
        (9, "K trade-off", k_tradeoff),
        (10, "leak experiment", leak_structure),
        (11, "determinism and round-trip", determinism),
    ];
    let mut failed = 0;
    for (id, name, check) in checks {
        let start = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Verdict::Fail(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match v {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Verdict::Skip(d) => ("SKIP", d),
        };
        println!("[{tag}] {id} {name}: {detail} ({secs:.1}s)");
    }
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

// 1 ------------------------------------------------------------------------

struct Table1 {
    users: usize,
    items: usize,
    tags: usize,
    relations: usize,
    tag_assignments: usize,
    interactions: usize,
    /// Stated sparsity and the number of decimals it is stated with.
    sparsity: (&'static str, usize),
}

const LASTFM: Table1 = Table1 {
    users: 1892,
    items: 17632,
    tags: 11946,
    relations: 25434,
    tag_assignments: 186479,
    interactions: 92834,
    sparsity: ("99.7", 1),
};

const DELICIOUS: Table1 = Table1 {
    users: 1867,
    items: 69226,
    tags: 53388,
    relations: 15328,
    tag_assignments: 437593,
    interactions: 104799,
    sparsity: ("99.91", 2),
};

/// Sparsity cut (not rounded) to the stated number of decimals.
fn truncated(percent: f64, decimals: usize) -> String {
    let scale = 10f64.powi(decimals as i32);
    format!("{:.*}", decimals, (percent * scale).floor() / scale)
}

fn table_mismatches(name: &str, data: &Dataset, want: &Table1) -> Vec<String> {
    let s = &data.stats;
    let pairs = [
        ("users", s.users, want.users),
        ("items", s.items, want.items),
        ("tags", s.tags, want.tags),
        ("relations", s.relations, want.relations),
        ("user-tag-item", s.tag_assignments, want.tag_assignments),
        ("user-item", s.interactions, want.interactions),
    ];
    let mut out: Vec<String> = pairs
        .iter()
        .filter(|(_, got, want)| got != want)
        .map(|(what, got, want)| format!("{name} {what} {got} != {want}"))
        .collect();
    let sp = truncated(s.sparsity_percent(), want.sparsity.1);
    if sp != want.sparsity.0 {
        out.push(format!("{name} sparsity {sp} != {}", want.sparsity.0));
    }
    out
}

fn ingestion_fidelity() -> Verdict {
    // The stated sparsities follow from the stated counts either way.
    let arithmetic_ok = [&LASTFM, &DELICIOUS].iter().all(|t| {
        let p = ctrsmf_core::corpus::sparsity_percent(t.users, t.items, t.interactions);
        truncated(p, t.sparsity.1) == t.sparsity.0
    });
    let sets = [("lastfm", "hetrec2011-lastfm-2k", &LASTFM), ("delicious", "hetrec2011-delicious-2k", &DELICIOUS)];
    let mut missing = Vec::new();
    let mut problems = Vec::new();
    let mut checked = Vec::new();
    for (name, dir, want) in sets {
        match data_dir(dir) {
            None => missing.push(dir),
            Some(d) => match HetrecPaths::detect(&d).load() {
                Ok(data) => {
                    problems.extend(table_mismatches(name, &data, want));
                    checked.push(name);
                }
                Err(e) => problems.push(format!("{name}: {e}")),
            },
        }
    }
    let note = format!("sparsity from the table counts {}", if arithmetic_ok { "matches" } else { "does NOT match" });
    if !problems.is_empty() || !arithmetic_ok {
        return Verdict::Fail(format!("{}; {note}", problems.join("; ")));
    }
    if !missing.is_empty() {
        return Verdict::Skip(format!("dataset files absent ({}); {note}", missing.join(", ")));
    }
    Verdict::Pass(format!("all six counts and sparsity reproduced for {}; {note}", checked.join(" and ")))
}

// 2, 3 ---------------------------------------------------------------------

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn full_objective(inst: &instances::Instance, state: &ctrsmf_core::ModelState) -> f64 {
    objective(state, &inst.ratings, Some(&inst.social), Some(&inst.corpus), &inst.hp)
        .unwrap()
        .total()
}

fn block_matrix(s: &mut ctrsmf_core::ModelState, block: usize) -> &mut nalgebra::DMatrix<f64> {
    match block {
        0 => &mut s.users,
        1 => &mut s.items,
        _ => &mut s.social,
    }
}

fn stationarity() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut ks = std::collections::BTreeSet::new();
    for seed in 0..INSTANCES {
        let inst = instances::instance(seed);
        ks.insert(inst.state.k());
        for block in 0..3 {
            let n = if block == 1 { inst.state.n_items() } else { inst.state.n_users() };
            for c in 0..n {
                let mut state = inst.state.clone();
                let x = match block {
                    0 => update_user(c, &state, &inst.ratings, Some(&inst.social), &inst.hp),
                    1 => update_item(c, &state, &inst.ratings, &inst.hp),
                    _ => update_social(c, &state, &inst.social, &inst.hp),
                }
                .unwrap();
                block_matrix(&mut state, block).column_mut(c).copy_from_slice(&x);
                let g = instances::fd_gradient(&x, FD_STEP, |probe| {
                    let mut s = state.clone();
                    block_matrix(&mut s, block).column_mut(c).copy_from_slice(probe);
                    full_objective(&inst, &s)
                });
                worst = worst.max(max_abs(&g));
            }
        }
    }
    verdict(
        worst <= STATIONARITY_TOL,
        format!("{INSTANCES} instances, K in {ks:?}, worst |∂L| after an update {worst:.2e} (bound {STATIONARITY_TOL:e})"),
    )
}

fn objective_oracle() -> Verdict {
    let mut worst: f64 = 0.0;
    for seed in 0..INSTANCES {
        let inst = instances::instance(seed);
        let terms = objective(&inst.state, &inst.ratings, Some(&inst.social), Some(&inst.corpus), &inst.hp)
            .unwrap()
            .as_array();
        let dense = instances::dense_objective(&inst, &inst.state, &inst.hp);
        for (got, want) in terms.iter().zip(dense) {
            worst = worst.max((got - want).abs() / want.abs().max(1.0));
        }
    }
    verdict(
        worst <= ORACLE_TOL,
        format!("{INSTANCES} instances, worst termwise relative error {worst:.2e} (bound {ORACLE_TOL:e})"),
    )
}

// 4, 5, 6 ------------------------------------------------------------------

fn toy_config(variant: Variant, inst: &instances::Instance, seed: u64, sweeps: usize) -> TrainConfig {
    TrainConfig::new(variant, Hyperparams { max_iters: sweeps, tolerance: 0.0, seed, ..inst.hp })
}

fn toy_data(inst: &instances::Instance) -> TrainingData<'_> {
    TrainingData { ratings: &inst.ratings, social: Some(&inst.social), corpus: Some(&inst.corpus) }
}

fn monotone_ascent() -> Verdict {
    let mut worst_drop: f64 = 0.0;
    let mut bound_drops = 0;
    let mut runs = 0;
    for seed in 0..10 {
        let inst = instances::instance(seed);
        for variant in [Variant::Wmf, Variant::Ctr, Variant::CtrSmf] {
            let trainer = Trainer::new(toy_config(variant, &inst, seed, 20), toy_data(&inst), &Sequential).unwrap();
            let mut state = trainer.initialize();
            let mut prev = trainer.objective(&state).unwrap().total();
            for _ in 0..20 {
                if let Some(beta) = &state.beta {
                    for j in 0..state.n_items() {
                        let up = update_theta(
                            state.theta_of(j),
                            state.item(j),
                            inst.hp.lambda_v,
                            beta,
                            inst.corpus.document(j),
                            &Default::default(),
                        );
                        bound_drops += up.bounds.windows(2).filter(|w| w[1] < w[0]).count();
                    }
                }
                state = trainer.sweep(&state).unwrap().0;
                let now = trainer.objective(&state).unwrap().total();
                worst_drop = worst_drop.max(prev - now);
                prev = now;
            }
            runs += 1;
        }
    }
    verdict(
        worst_drop <= ASCENT_TOL && bound_drops == 0,
        format!("{runs} runs of 20 sweeps, largest decrease {worst_drop:.2e} (bound {ASCENT_TOL:e}), θ-bound decreases {bound_drops}"),
    )
}

fn reductions() -> Verdict {
    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        let inst = instances::instance(seed);
        let mut smf = toy_config(Variant::CtrSmf, &inst, seed, 15);
        smf.hp.lambda_q = 0.0;
        let (_, a) = train(toy_config(Variant::Ctr, &inst, seed, 15), toy_data(&inst), &Sequential, &mut FrozenClock).unwrap();
        let (_, b) = train(smf, toy_data(&inst), &Sequential, &mut FrozenClock).unwrap();
        if a.len() != b.len() {
            return Verdict::Fail(format!("seed {seed}: trace lengths {} and {}", a.len(), b.len()));
        }
        for (x, y) in a.objectives().zip(b.objectives()) {
            worst = worst.max((x - y).abs());
        }
    }

    let inst = instances::instance(21);
    let s = ctrsmf_core::corpus::split(&inst.ratings, 0.3, 2).unwrap();
    let exp = ExperimentData { split: &s, social: Some(&inst.social), corpus: Some(&inst.corpus) };
    let base = toy_config(Variant::CtrSmf, &inst, 3, 10);
    let cells = sweep(&[base.hp.lambda_v], &[0.0], &base, &exp, &[1, 2, 3, 4, 5, 6, 7, 8], &Sequential);
    let cell = cells[0].outcome.as_ref().unwrap().mean_recall.clone();
    let mut ctr = base;
    ctr.variant = Variant::Ctr;
    let (state, _) = train(ctr, TrainingData { social: None, ..exp.training() }, &Sequential, &mut FrozenClock).unwrap();
    let alone = evaluate_scorer(&state, &s, &[1, 2, 3, 4, 5, 6, 7, 8], &Sequential).mean_recall;
    verdict(
        worst <= REDUCTION_TOL && cell == alone,
        format!("λ_q=0 vs CTR traces differ by at most {worst:.1e} (bound {REDUCTION_TOL:e}); sweep cell recall {cell:?} vs CTR {alone:?}"),
    )
}

fn topic_math() -> Verdict {
    let mut jensen: f64 = 0.0;
    let mut off_simplex: f64 = 0.0;
    let mut projection: f64 = 0.0;
    for seed in 0..INSTANCES {
        let inst = instances::instance(seed);
        let beta = inst.state.beta.as_ref().unwrap();
        for j in 0..inst.state.n_items() {
            let (theta, v, doc) = (inst.state.theta_of(j), inst.state.item(j), inst.corpus.document(j));
            let phi = compute_phi(theta, beta, doc);
            let tight = theta_bound(theta, &phi, v, 0.0, beta, doc);
            jensen = jensen.max((tight - word_log_likelihood(theta, beta, doc)).abs());

            let empty = update_theta(theta, v, inst.hp.lambda_v, beta, &Document::default(), &Default::default());
            let proj = simplex_project(v);
            if inst.state.k() > 1 {
                projection = projection.max(empty.theta.iter().zip(&proj).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
            }
        }
        let trainer = Trainer::new(toy_config(Variant::CtrSmf, &inst, seed, 5), toy_data(&inst), &Sequential).unwrap();
        let mut state = trainer.initialize();
        for _ in 0..5 {
            state = trainer.sweep(&state).unwrap().0;
            let b = state.beta.as_ref().unwrap();
            let sums = b.row_iter().map(|r| r.sum()).chain(state.theta.column_iter().map(|c| c.sum()));
            let negative = b.iter().chain(state.theta.iter()).any(|&x| x < 0.0);
            off_simplex = off_simplex.max(sums.map(|s| (s - 1.0).abs()).fold(0.0, f64::max));
            if negative {
                off_simplex = f64::INFINITY;
            }
        }
    }
    verdict(
        jensen <= JENSEN_TOL && off_simplex <= SIMPLEX_TOL && projection <= PROJECTION_TOL,
        format!(
            "Jensen gap {jensen:.1e} (bound {JENSEN_TOL:e}), simplex error {off_simplex:.1e} (bound {SIMPLEX_TOL:e}), empty-document θ vs projection {projection:.1e} (bound {PROJECTION_TOL:e})"
        ),
    )
}

// 7 - 10 -------------------------------------------------------------------

/// Settings shared by the desk-scale trend runs.
const DESK_SWEEPS: usize = 30;
const DESK_TOLERANCE: f64 = 1e-4;
const DESK_PRETRAIN: usize = 5;
const DESK_M: usize = 250;
const TREND_SEEDS: [u64; 3] = [0, 1, 2];

fn desk_config(variant: Variant, k: usize, lambda_v: f64, lambda_q: f64, seed: u64) -> TrainConfig {
    let hp = Hyperparams { k, lambda_v, lambda_q, max_iters: DESK_SWEEPS, tolerance: DESK_TOLERANCE, seed, ..Default::default() };
    TrainConfig { pretrain_rounds: DESK_PRETRAIN, ..TrainConfig::new(variant, hp) }
}

fn desk_recall(data: &Dataset, config: TrainConfig, seed: u64, exec: &RayonExecutor) -> f64 {
    let s = data.split(0.1, seed).unwrap();
    let exp = ExperimentData { split: &s, social: data.social.as_ref(), corpus: data.corpus.as_ref() };
    let (_, _, report) = train_and_evaluate(config, &exp, &[DESK_M], exec).unwrap();
    report.mean_recall[0]
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Loads an archive directory and keeps its densest users.
fn desk_data(dir: &Path, max_users: usize, max_items: Option<usize>) -> Dataset {
    let data = HetrecPaths::detect(dir).load().unwrap();
    data.subsample(Subsample { max_users: Some(max_users), max_items }).unwrap()
}

/// Synthetic stand-in for a hetrec archive, written to a temporary directory.
fn proxy_data(world: &World, seed: u64, max_users: usize, max_items: Option<usize>) -> Dataset {
    let tmp = tempfile::tempdir().unwrap();
    write_hetrec(tmp.path(), world, seed);
    desk_data(tmp.path(), max_users, max_items)
}

fn lastfm_like() -> World {
    World {
        users: 600,
        items: 3000,
        communities: 12,
        genres: 40,
        genres_per_community: 4,
        tags_per_genre: 8,
        interactions: (15, 60),
        friend_in: 0.2,
        friend_out: 0.002,
        ..World::small(Layout::Lastfm)
    }
}

fn delicious_like() -> World {
    World {
        users: 500,
        items: 3000,
        communities: 20,
        genres: 120,
        genres_per_community: 6,
        tags_per_genre: 8,
        interactions: (15, 60),
        friend_in: 0.3,
        friend_out: 0.002,
        ..World::small(Layout::Delicious)
    }
}

/// Runs `trend` on the real archive if present, otherwise reports a skip
/// with the synthetic proxy's outcome attached.
fn real_or_proxy(archive: &str, trend: impl Fn(&Dataset) -> (bool, String), proxy: impl FnOnce() -> Dataset, real: impl FnOnce(&Path) -> Dataset) -> Verdict {
    match data_dir(archive) {
        Some(dir) => {
            let (ok, detail) = trend(&real(&dir));
            verdict(ok, detail)
        }
        None => {
            let (ok, detail) = trend(&proxy());
            let holds = if ok { "direction holds" } else { "direction NOT reproduced" };
            Verdict::Skip(format!("{archive} absent; synthetic proxy: {detail}, {holds}"))
        }
    }
}

fn content_trend() -> Verdict {
    let exec = RayonExecutor::new(0).unwrap();
    let trend = |data: &Dataset| {
        let high = desk_recall(data, desk_config(Variant::Ctr, 25, 100.0, 0.0, 0), 0, &exec);
        let low = desk_recall(data, desk_config(Variant::Ctr, 25, 0.01, 0.0, 0), 0, &exec);
        (high > low, format!("CTR recall@{DESK_M} λ_v=100 {high:.4} vs λ_v=0.01 {low:.4}"))
    };
    real_or_proxy(
        "hetrec2011-lastfm-2k",
        trend,
        || proxy_data(&lastfm_like(), 7, 500, None),
        |d| desk_data(d, 500, None),
    )
}

fn social_trend() -> Verdict {
    let exec = RayonExecutor::new(0).unwrap();
    let trend = |data: &Dataset| {
        let smf: Vec<f64> = TREND_SEEDS
            .iter()
            .map(|&s| desk_recall(data, desk_config(Variant::CtrSmf, 25, 100.0, 100.0, s), s, &exec))
            .collect();
        let ctr: Vec<f64> = TREND_SEEDS
            .iter()
            .map(|&s| desk_recall(data, desk_config(Variant::Ctr, 25, 100.0, 0.0, s), s, &exec))
            .collect();
        let (a, b) = (mean(&smf), mean(&ctr));
        (a >= b, format!("mean recall@{DESK_M} over {} seeds: CTR-SMF {a:.4} vs CTR {b:.4}", TREND_SEEDS.len()))
    };
    real_or_proxy(
        "hetrec2011-lastfm-2k",
        trend,
        || proxy_data(&lastfm_like(), 7, 500, None),
        |d| desk_data(d, 500, None),
    )
}

/// The K = 200 run is out of budget at desk scale; K = 50 against K = 100
/// checks the same direction.
fn k_tradeoff() -> Verdict {
    let exec = RayonExecutor::new(0).unwrap();
    let trend = |data: &Dataset| {
        let small = desk_recall(data, desk_config(Variant::CtrSmf, 50, 0.1, 0.1, 0), 0, &exec);
        let large = desk_recall(data, desk_config(Variant::CtrSmf, 100, 0.1, 0.1, 0), 0, &exec);
        (small < large, format!("CTR-SMF recall@{DESK_M} K=50 {small:.4} vs K=100 {large:.4} (K=200 scaled down to K=100)"))
    };
    real_or_proxy(
        "hetrec2011-delicious-2k",
        trend,
        || proxy_data(&delicious_like(), 11, 500, None),
        |d| desk_data(d, 500, Some(5000)),
    )
}

fn leak_structure() -> Verdict {
    let exec = RayonExecutor::new(0).unwrap();
    // Structure: always checked, on synthetic data with dated contacts.
    let data = proxy_data(&World { users: 120, items: 200, ..World::small(Layout::Delicious) }, 5, 120, None);
    let social = data.social.as_ref().unwrap();
    let earliest = Cutoff::At(social.time_quantile(0.0).unwrap() - 1);
    let s = data.split(0.1, 0).unwrap();
    let exp = ExperimentData { split: &s, social: Some(social), corpus: data.corpus.as_ref() };
    let cfg = desk_config(Variant::CtrSmf, 5, 10.0, 1.0, 0);
    let rows = leak_experiment(&cfg, &exp, &[Cutoff::Infinite, earliest], &[10, 50], &exec).unwrap();
    let inf_gap_zero = rows.iter().filter(|r| r.cutoff == Cutoff::Infinite).all(|r| r.gap == 0.0);
    let earliest_empty = rows
        .iter()
        .filter(|r| r.cutoff == earliest && r.mode == SocialMode::Timestamped)
        .all(|r| r.edges == 0);
    let mut detail = format!("cutoff=inf gap exactly 0: {inf_gap_zero}; earliest cutoff leaves the timestamped arm empty: {earliest_empty}");
    if !(inf_gap_zero && earliest_empty) {
        return Verdict::Fail(detail);
    }

    let trend = |data: &Dataset| {
        let social = data.social.as_ref().unwrap();
        let median = Cutoff::At(social.time_quantile(0.5).unwrap());
        let mut gaps = Vec::new();
        for &seed in &TREND_SEEDS {
            let s = data.split(0.1, seed).unwrap();
            let exp = ExperimentData { split: &s, social: Some(social), corpus: data.corpus.as_ref() };
            let cfg = desk_config(Variant::CtrSmf, 25, 100.0, 100.0, seed);
            let rows = leak_experiment(&cfg, &exp, &[median], &[DESK_M], &exec).unwrap();
            gaps.push(rows[0].gap);
        }
        let g = mean(&gaps);
        (g >= 0.0, format!("median cutoff, mean static minus timestamped recall@{DESK_M} over {} seeds {g:+.4}", TREND_SEEDS.len()))
    };
    match data_dir("hetrec2011-delicious-2k") {
        Some(dir) => {
            let (ok, d) = trend(&desk_data(&dir, 500, Some(5000)));
            write!(detail, "; {d}").unwrap();
            verdict(ok, detail)
        }
        None => {
            let (ok, d) = trend(&proxy_data(&delicious_like(), 13, 500, None));
            let holds = if ok { "direction holds" } else { "direction NOT reproduced" };
            write!(detail, "; hetrec2011-delicious-2k absent, trend part skipped; synthetic proxy: {d}, {holds}").unwrap();
            Verdict::Pass(detail)
        }
    }
}

// 11 -----------------------------------------------------------------------

fn determinism() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let raw = tmp.path().join("raw");
    write_hetrec(&raw, &World::small(Layout::Lastfm), 17);
    let bin = env!("CARGO_BIN_EXE_ctrsmf");
    let run = |args: &[&str]| {
        let out = Command::new(bin).args(args).output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    };
    let out = tmp.path().join("out");
    let (raw_s, out_s) = (raw.to_str().unwrap(), out.to_str().unwrap());
    run(&["ingest", "--hetrec-dir", raw_s, "--out-dir", out_s]);
    let train_cli = |name: &str| {
        run(&[
            "train", "--variant", "ctr-smf", "--k", "5", "--lambda-v", "10", "--lambda-q", "1", "--max-iters", "6",
            "--seed", "7", "--name", name, "--out-dir", out_s,
        ]);
        std::fs::read(out.join(format!("{name}.trace.csv"))).unwrap()
    };
    let identical_traces = train_cli("a") == train_cli("b");

    let snap = load_model(&out.join("a.snap")).unwrap();
    let copy = tmp.path().join("copy.snap");
    save_model(&copy, &snap).unwrap();
    let round_trip = load_model(&copy).unwrap() == snap
        && std::fs::read(&copy).unwrap() == std::fs::read(out.join("a.snap")).unwrap();

    let inst = instances::instance(33);
    let cfg = toy_config(Variant::CtrSmf, &inst, 1, 12);
    let trainer = Trainer::new(cfg, toy_data(&inst), &Sequential).unwrap();
    let full = trainer.run(trainer.initialize(), TrainTrace::default(), &mut FrozenClock, &mut |_, _| {}).unwrap();
    let mut short = cfg;
    short.hp.max_iters = 5;
    let part = train(short, toy_data(&inst), &Sequential, &mut FrozenClock).unwrap();
    let path = tmp.path().join("part.snap");
    let fingerprint = ctrsmf_core::Fingerprint::default();
    save_model(
        &path,
        &ModelSnapshot {
            model: Model { config: short, fingerprint, state: part.0 },
            trace: part.1,
            split: SplitSpec { seed: 0, test_fraction: 0.1 },
            subsample: None,
        },
    )
    .unwrap();
    let loaded = load_model(&path).unwrap();
    let resumed = trainer.run(loaded.model.state, loaded.trace, &mut FrozenClock, &mut |_, _| {}).unwrap();
    let resumes = resumed == full;
    verdict(
        identical_traces && round_trip && resumes,
        format!("same-seed trace CSVs identical: {identical_traces}; snapshot round-trip bit-exact: {round_trip}; resume through a snapshot matches: {resumes}"),
    )
}
