//! Scoring, top-M ranking and user-oriented recall@M, plus the two
//! experiment drivers built on them: the (λ_v, λ_q) grid sweep and the
//! static-versus-timestamped social network comparison.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use log::warn;
use thiserror::Error;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, CorpusError, Cutoff, Fingerprint, SocialMatrix, SplitDataset, TimeSource};
use crate::exec::Executor;
use crate::factors::ModelState;
use crate::trainer::{FrozenClock, Model, TrainConfig, TrainError, TrainTrace, TrainingData, Variant};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("vector lengths differ ({0} vs {1})")]
    Dimension(usize, usize),
    #[error("model was trained on dataset {model} but the split comes from {split}")]
    Fingerprint { model: Fingerprint, split: Fingerprint },
    #[error("model has {model} items but the split has {split}")]
    ItemCount { model: usize, split: usize },
}

fn checked_dot(a: &[f64], b: &[f64]) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::Dimension(a.len(), b.len()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x * y).sum())
}

/// Score of an item with ratings: `u_iᵀ v_j`.
pub fn predict_in_matrix(u: &[f64], v: &[f64]) -> Result<f64, EvalError> {
    checked_dot(u, v)
}

/// Score of an item nobody has rated: `u_iᵀ θ_j`.
pub fn predict_out_matrix(u: &[f64], theta: &[f64]) -> Result<f64, EvalError> {
    checked_dot(u, theta)
}

/// Produces one score per item for a user.
pub trait Scorer: Sync {
    fn n_items(&self) -> usize;
    fn score_user(&self, user: usize, out: &mut [f64]);
}

/// In-matrix scoring with the item vectors.
impl Scorer for ModelState {
    fn n_items(&self) -> usize {
        ModelState::n_items(self)
    }

    fn score_user(&self, user: usize, out: &mut [f64]) {
        let u = self.user(user);
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.item(j).iter().zip(u).map(|(a, b)| a * b).sum();
        }
    }
}

/// Out-of-matrix scoring with the topic proportions.
pub struct OutOfMatrix<'a>(pub &'a ModelState);

impl Scorer for OutOfMatrix<'_> {
    fn n_items(&self) -> usize {
        self.0.n_items()
    }

    fn score_user(&self, user: usize, out: &mut [f64]) {
        let u = self.0.user(user);
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.0.theta_of(j).iter().zip(u).map(|(a, b)| a * b).sum();
        }
    }
}

fn rank_key(s: f64) -> f64 {
    if s.is_nan() {
        f64::NEG_INFINITY
    } else {
        s
    }
}

fn rank_candidates(scores: &[f64], excluded: &[u32], m: usize) -> Vec<u32> {
    let mut candidates: Vec<u32> = Vec::with_capacity(scores.len().saturating_sub(excluded.len()));
    let mut skip = excluded.iter().peekable();
    for j in 0..scores.len() as u32 {
        while skip.peek().is_some_and(|&&e| e < j) {
            skip.next();
        }
        if skip.peek() == Some(&&j) {
            continue;
        }
        candidates.push(j);
    }
    let order = |a: &u32, b: &u32| -> Ordering {
        rank_key(scores[*b as usize])
            .total_cmp(&rank_key(scores[*a as usize]))
            .then(a.cmp(b))
    };
    let m = m.min(candidates.len());
    if m == 0 {
        return Vec::new();
    }
    if m < candidates.len() {
        candidates.select_nth_unstable_by(m - 1, order);
        candidates.truncate(m);
    }
    candidates.sort_unstable_by(order);
    candidates
}

/// The `m` best-scoring items outside `excluded` (sorted ascending), by
/// descending score with ties going to the lower index.
pub fn top_m(scores: &[f64], excluded: &[u32], m: usize) -> Vec<u32> {
    let available = scores.len() - excluded.len();
    if m > available {
        warn!("asked for {m} items but only {available} candidates remain");
    }
    rank_candidates(scores, excluded, m)
}

/// Fraction of `liked` found in `recommended`; `None` when nothing is liked.
pub fn recall_at_m(recommended: &[u32], liked: &[u32]) -> Option<f64> {
    if liked.is_empty() {
        return None;
    }
    let hits = liked.iter().filter(|l| recommended.contains(l)).count();
    Some(hits as f64 / liked.len() as f64)
}

/// Mean user-oriented recall per cutoff `M`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct RecallReport {
    pub ms: Vec<usize>,
    pub mean_recall: Vec<f64>,
    /// Users with at least one test item.
    pub n_users: usize,
}

impl RecallReport {
    pub fn recall_at(&self, m: usize) -> Option<f64> {
        self.ms
            .iter()
            .position(|&x| x == m)
            .map(|i| self.mean_recall[i])
    }
}

/// Recall@M for every `M` in `ms`, averaged over users that have test
/// items. Candidates exclude each user's training items.
pub fn evaluate_scorer<S: Scorer, E: Executor>(
    scorer: &S,
    split: &SplitDataset,
    ms: &[usize],
    exec: &E,
) -> RecallReport {
    let users: Vec<usize> = (0..split.test.n_users())
        .filter(|&u| !split.test.items_of(u).is_empty())
        .collect();
    let deepest = ms.iter().copied().max().unwrap_or(0);
    let per_user: Vec<Vec<f64>> = exec.map(users.len(), |n| {
        let u = users[n];
        let mut scores = vec![0.0; scorer.n_items()];
        scorer.score_user(u, &mut scores);
        let ranked = rank_candidates(&scores, split.train.items_of(u), deepest);
        let liked = split.test.items_of(u);
        ms.iter()
            .map(|&m| recall_at_m(&ranked[..m.min(ranked.len())], liked).unwrap_or(0.0))
            .collect()
    });
    let mut sums = vec![0.0; ms.len()];
    for r in &per_user {
        for (s, x) in sums.iter_mut().zip(r) {
            *s += x;
        }
    }
    let n = users.len();
    RecallReport {
        ms: ms.to_vec(),
        mean_recall: sums
            .into_iter()
            .map(|s| if n > 0 { s / n as f64 } else { 0.0 })
            .collect(),
        n_users: n,
    }
}

/// In-matrix recall of a trained model on the split it was trained from.
pub fn evaluate_model<E: Executor>(
    model: &Model,
    split: &SplitDataset,
    ms: &[usize],
    exec: &E,
) -> Result<RecallReport, EvalError> {
    if let Some(fp) = split.fingerprint {
        if fp != model.fingerprint {
            return Err(EvalError::Fingerprint {
                model: model.fingerprint,
                split: fp,
            });
        }
    }
    if model.state.n_items() != split.test.n_items() {
        return Err(EvalError::ItemCount {
            model: model.state.n_items(),
            split: split.test.n_items(),
        });
    }
    Ok(evaluate_scorer(&model.state, split, ms, exec))
}

/// Everything an experiment trains and evaluates on.
#[derive(Clone, Copy, Debug)]
pub struct ExperimentData<'a> {
    pub split: &'a SplitDataset,
    pub social: Option<&'a SocialMatrix>,
    pub corpus: Option<&'a Corpus>,
}

impl<'a> ExperimentData<'a> {
    pub fn training(&self) -> TrainingData<'a> {
        TrainingData {
            ratings: &self.split.train,
            social: self.social,
            corpus: self.corpus,
        }
    }
}

/// Trains `config` on the training side and reports test recall.
pub fn train_and_evaluate<E: Executor>(
    config: TrainConfig,
    data: &ExperimentData<'_>,
    ms: &[usize],
    exec: &E,
) -> Result<(ModelState, TrainTrace, RecallReport), TrainError> {
    let (state, trace) = crate::trainer::train(config, data.training(), exec, &mut FrozenClock)?;
    let report = evaluate_scorer(&state, data.split, ms, exec);
    Ok((state, trace, report))
}

/// One (λ_v, λ_q) grid cell.
#[derive(Debug)]
pub struct SweepCell {
    pub lambda_v: f64,
    pub lambda_q: f64,
    pub variant: Variant,
    /// Set when the cell reduces to a smaller variant (λ_q = 0 → CTR).
    pub equivalent: Option<Variant>,
    pub outcome: Result<RecallReport, TrainError>,
}

/// Variant a cell effectively runs as, if it differs from the nominal one.
pub fn cell_equivalent(variant: Variant, lambda_q: f64) -> Option<Variant> {
    (variant == Variant::CtrSmf && lambda_q == 0.0).then_some(Variant::Ctr)
}

/// Trains and evaluates one cell per `(λ_v, λ_q)` pair, λ_v-major. A cell
/// that fails to train is recorded and the sweep moves on.
pub fn sweep<E: Executor>(
    lambda_v: &[f64],
    lambda_q: &[f64],
    base: &TrainConfig,
    data: &ExperimentData<'_>,
    ms: &[usize],
    exec: &E,
) -> Vec<SweepCell> {
    let mut cells = Vec::with_capacity(lambda_v.len() * lambda_q.len());
    for &lv in lambda_v {
        for &lq in lambda_q {
            cells.push(sweep_cell(lv, lq, base, data, ms, exec));
        }
    }
    cells
}

pub fn sweep_cell<E: Executor>(
    lambda_v: f64,
    lambda_q: f64,
    base: &TrainConfig,
    data: &ExperimentData<'_>,
    ms: &[usize],
    exec: &E,
) -> SweepCell {
    let mut config = *base;
    config.hp.lambda_v = lambda_v;
    config.hp.lambda_q = lambda_q;
    let outcome = train_and_evaluate(config, data, ms, exec).map(|(_, _, r)| r);
    if let Err(e) = &outcome {
        warn!("sweep cell (λ_v = {lambda_v}, λ_q = {lambda_q}) failed: {e}");
    }
    SweepCell {
        lambda_v,
        lambda_q,
        variant: base.variant,
        equivalent: cell_equivalent(base.variant, lambda_q),
        outcome,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum SocialMode {
    Static,
    Timestamped,
}

impl fmt::Display for SocialMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SocialMode::Static => "static",
            SocialMode::Timestamped => "timestamped",
        })
    }
}

/// One arm at one cutoff and one `M`. `gap` is static minus timestamped
/// recall and is repeated on both arms' rows.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LeakRow {
    pub cutoff: Cutoff,
    pub mode: SocialMode,
    pub m: usize,
    pub recall: f64,
    pub gap: f64,
    /// Directed relations the arm trained with.
    pub edges: usize,
}

#[derive(Debug, Error)]
pub enum LeakError {
    #[error("the leak experiment needs a social matrix")]
    NoSocial,
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

/// Trains the social model once on the full ("static") network and once per
/// cutoff on the network filtered to relations dated at or before it, all
/// on the same rating split, and reports both recalls.
pub fn leak_experiment<E: Executor>(
    config: &TrainConfig,
    data: &ExperimentData<'_>,
    cutoffs: &[Cutoff],
    ms: &[usize],
    exec: &E,
) -> Result<Vec<LeakRow>, LeakError> {
    let social = data.social.ok_or(LeakError::NoSocial)?;
    if social.time_source() == TimeSource::None {
        return Err(CorpusError::NoTimestamps.into());
    }
    let mut config = *config;
    config.variant = Variant::CtrSmf;
    let (_, _, full) = train_and_evaluate(config, data, ms, exec)?;
    let mut rows = Vec::new();
    for &cutoff in cutoffs {
        let filtered = social.filter_by_time(cutoff)?;
        let arm = ExperimentData {
            social: Some(&filtered),
            ..*data
        };
        let (_, _, timed) = train_and_evaluate(config, &arm, ms, exec)?;
        for (i, &m) in ms.iter().enumerate() {
            let gap = full.mean_recall[i] - timed.mean_recall[i];
            rows.push(LeakRow {
                cutoff,
                mode: SocialMode::Static,
                m,
                recall: full.mean_recall[i],
                gap,
                edges: social.edge_count(),
            });
            rows.push(LeakRow {
                cutoff,
                mode: SocialMode::Timestamped,
                m,
                recall: timed.mean_recall[i],
                gap,
                edges: filtered.edge_count(),
            });
        }
    }
    Ok(rows)
}
