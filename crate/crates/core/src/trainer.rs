//! Coordinate ascent over users, items, social factors, topic proportions
//! and topics, for the three model variants.

use alloc::boxed::Box;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use log::warn;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Fingerprint, InteractionMatrix, SocialMatrix};
use crate::exec::Executor;
use crate::factors::{
    objective, FactorError, Hyperparams, ItemPhase, ModelState, ObjectiveTerms, SocialPhase,
    UserPhase,
};
use crate::rng;
use crate::topics::{column, compute_phi, init_topics, update_theta, BetaAccumulator, ThetaControls};

/// Standard deviation of the Gaussian noise used to initialize factors.
pub const INIT_SCALE: f64 = 0.01;

/// Which terms of the joint model are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Variant {
    /// Weighted matrix factorization: no topics, no social term.
    Wmf,
    /// Collaborative topic regression: topics, no social term.
    Ctr,
    /// Topics and social matrix factorization.
    CtrSmf,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Wmf => "wmf",
            Variant::Ctr => "ctr",
            Variant::CtrSmf => "ctr-smf",
        }
    }

    pub fn uses_topics(&self) -> bool {
        !matches!(self, Variant::Wmf)
    }

    pub fn uses_social(&self) -> bool {
        matches!(self, Variant::CtrSmf)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown variant `{0}` (expected wmf, ctr or ctr-smf)")]
pub struct UnknownVariant(pub alloc::string::String);

impl FromStr for Variant {
    type Err = UnknownVariant;
    fn from_str(s: &str) -> Result<Self, UnknownVariant> {
        match s {
            "wmf" => Ok(Variant::Wmf),
            "ctr" => Ok(Variant::Ctr),
            "ctr-smf" | "ctrsmf" => Ok(Variant::CtrSmf),
            other => Err(UnknownVariant(other.into())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct TrainConfig {
    pub variant: Variant,
    pub hp: Hyperparams,
    /// Topic-only EM rounds (θ and β, no rating pull) before joint training.
    pub pretrain_rounds: usize,
    /// Snapshot every this many sweeps; 0 disables periodic snapshots.
    pub snapshot_every: usize,
    pub theta: ThetaControls,
}

impl TrainConfig {
    pub fn new(variant: Variant, hp: Hyperparams) -> Self {
        Self {
            variant,
            hp,
            pretrain_rounds: 0,
            snapshot_every: 0,
            theta: ThetaControls::default(),
        }
    }

    /// Hyperparameters as the trainer uses them: CTR and WMF never see a
    /// social term.
    pub fn effective_hp(&self) -> Hyperparams {
        let mut hp = self.hp;
        if !self.variant.uses_social() {
            hp.lambda_q = 0.0;
        }
        hp
    }
}

/// Training inputs. `ratings` is the training side of a split.
#[derive(Clone, Copy, Debug)]
pub struct TrainingData<'a> {
    pub ratings: &'a InteractionMatrix,
    pub social: Option<&'a SocialMatrix>,
    pub corpus: Option<&'a Corpus>,
}

/// One completed sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct SweepRecord {
    pub sweep: usize,
    pub objective: f64,
    pub terms: ObjectiveTerms,
    pub seconds: f64,
    /// Items whose topic-proportion update was abandoned this sweep.
    pub flagged_items: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct TrainTrace {
    pub records: Vec<SweepRecord>,
}

impl TrainTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&SweepRecord> {
        self.records.last()
    }

    pub fn objectives(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.objective)
    }
}

/// Outcome of [`converged`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Convergence {
    pub stop: bool,
    /// The last sweep lowered the objective.
    pub violation: bool,
}

/// Stops once the relative gain of the last sweep drops below `tol`, or
/// after `max_iters` sweeps. A decrease also stops, with `violation` set.
pub fn converged(trace: &TrainTrace, tol: f64, max_iters: usize) -> Convergence {
    let n = trace.len();
    let mut out = Convergence {
        stop: n >= max_iters,
        violation: false,
    };
    if n < 2 {
        return out;
    }
    let prev = trace.records[n - 2].objective;
    let last = trace.records[n - 1].objective;
    let gain = (last - prev) / if prev != 0.0 { prev.abs() } else { 1.0 };
    out.violation = last < prev;
    out.stop |= gain < tol;
    out
}

/// Whether a snapshot is due after `sweep` given the cadence.
pub fn snapshot_due(sweep: usize, cadence: usize, last: bool) -> bool {
    cadence > 0 && sweep > 0 && (sweep % cadence == 0 || last)
}

/// Sweeps at which snapshots are written for a run of `total` sweeps.
pub fn snapshot_schedule(cadence: usize, total: usize) -> Vec<usize> {
    (1..=total)
        .filter(|&s| snapshot_due(s, cadence, s == total))
        .collect()
}

/// Monotone time source for per-sweep timings.
pub trait Clock {
    fn now_seconds(&mut self) -> f64;
}

/// Clock that never advances; traces then carry zero timings.
#[derive(Clone, Copy, Debug, Default)]
pub struct FrozenClock;

impl Clock for FrozenClock {
    fn now_seconds(&mut self) -> f64 {
        0.0
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(&'static str),
    #[error(transparent)]
    Factor(#[from] FactorError),
    #[error("training aborted in sweep {sweep}: {cause}")]
    Aborted {
        sweep: usize,
        cause: FactorError,
        /// State and trace after the last sweep that completed.
        last_good: Box<(ModelState, TrainTrace)>,
    },
}

/// A trained model together with what it was trained on.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: TrainConfig,
    pub fingerprint: Fingerprint,
    pub state: ModelState,
}

fn gaussian_matrix(k: usize, n: usize, seed: u64, stream: u64) -> DMatrix<f64> {
    let mut r = rng::stream(seed, stream);
    DMatrix::from_fn(k, n, |_, _| INIT_SCALE * r.sample::<f64, _>(StandardNormal))
}

fn stack_columns(k: usize, columns: Vec<Vec<f64>>) -> DMatrix<f64> {
    let n = columns.len();
    let mut flat = Vec::with_capacity(k * n);
    for c in columns {
        flat.extend_from_slice(&c);
    }
    DMatrix::from_vec(k, n, flat)
}

/// Coordinate-ascent driver for one configuration and dataset.
pub struct Trainer<'a, E> {
    config: TrainConfig,
    hp: Hyperparams,
    data: TrainingData<'a>,
    exec: &'a E,
}

impl<'a, E: Executor> Trainer<'a, E> {
    pub fn new(config: TrainConfig, data: TrainingData<'a>, exec: &'a E) -> Result<Self, TrainError> {
        config.hp.validate()?;
        let n_users = data.ratings.n_users();
        let n_items = data.ratings.n_items();
        if config.variant.uses_topics() {
            let corpus = data
                .corpus
                .ok_or(TrainError::Config("this variant needs item documents"))?;
            if corpus.n_documents() != n_items {
                return Err(TrainError::Config("document count differs from item count"));
            }
            if corpus.vocabulary_size() == 0 {
                return Err(TrainError::Config("the vocabulary is empty"));
            }
        }
        if config.variant.uses_social() {
            let social = data
                .social
                .ok_or(TrainError::Config("ctr-smf needs a social matrix"))?;
            if social.n_users() != n_users {
                return Err(TrainError::Config("social matrix size differs from user count"));
            }
        }
        Ok(Self {
            hp: config.effective_hp(),
            config,
            data,
            exec,
        })
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hp
    }

    fn corpus(&self) -> Option<&'a Corpus> {
        if self.config.variant.uses_topics() {
            self.data.corpus
        } else {
            None
        }
    }

    fn social(&self) -> Option<&'a SocialMatrix> {
        if self.config.variant.uses_social() {
            self.data.social
        } else {
            None
        }
    }

    /// Seeded initial state, including optional topic pre-training.
    pub fn initialize(&self) -> ModelState {
        let hp = &self.hp;
        let (k, m, n) = (hp.k, self.data.ratings.n_users(), self.data.ratings.n_items());
        let mut state = ModelState::zeros(k, m, n);
        state.users = gaussian_matrix(k, m, hp.seed, rng::STREAM_USERS);
        state.items = gaussian_matrix(k, n, hp.seed, rng::STREAM_ITEMS);
        if self.config.variant.uses_social() {
            state.social = gaussian_matrix(k, m, hp.seed, rng::STREAM_SOCIAL);
        }
        if let Some(corpus) = self.corpus() {
            let mut topics = init_topics(corpus, k, hp.seed);
            for _ in 0..self.config.pretrain_rounds {
                let beta = &topics.beta;
                let theta = &topics.theta;
                let next = self.exec.map(n, |j| {
                    let t = column(theta, j);
                    update_theta(t, t, 0.0, beta, corpus.document(j), &self.config.theta).theta
                });
                topics.theta = stack_columns(k, next);
                topics.beta = self.refit_beta(&topics.theta, &topics.beta, corpus);
            }
            state.items += &topics.theta;
            state.theta = topics.theta;
            state.beta = Some(topics.beta);
        }
        state
    }

    fn refit_beta(&self, theta: &DMatrix<f64>, beta: &DMatrix<f64>, corpus: &Corpus) -> DMatrix<f64> {
        let mut acc = BetaAccumulator::new(theta.nrows(), corpus.vocabulary_size());
        for (j, doc) in corpus.documents().iter().enumerate() {
            if !doc.is_empty() {
                acc.add(&compute_phi(column(theta, j), beta, doc), doc);
            }
        }
        acc.finish().0
    }

    /// One full sweep: users, items, social factors, topic proportions,
    /// topics. Returns the new state and the number of flagged items.
    pub fn sweep(&self, state: &ModelState) -> Result<(ModelState, usize), FactorError> {
        let hp = &self.hp;
        let k = hp.k;
        let ratings = self.data.ratings;
        let mut next = state.clone();

        let users = {
            let phase = UserPhase::new(&next, ratings, self.social(), hp);
            self.exec.map(next.n_users(), |i| phase.solve(i))
        };
        next.users = stack_columns(k, users.into_iter().collect::<Result<_, _>>()?);

        let items = {
            let phase = ItemPhase::new(&next, ratings, hp);
            self.exec.map(next.n_items(), |j| phase.solve(j))
        };
        next.items = stack_columns(k, items.into_iter().collect::<Result<_, _>>()?);

        if let Some(social) = self.social() {
            let factors = {
                let phase = SocialPhase::new(&next, social, hp);
                self.exec.map(next.n_users(), |m| phase.solve(m))
            };
            next.social = stack_columns(k, factors.into_iter().collect::<Result<_, _>>()?);
        }

        let mut flagged = 0;
        if let (Some(corpus), Some(beta)) = (self.corpus(), next.beta.as_ref()) {
            let updates = {
                let snapshot = &next;
                self.exec.map(snapshot.n_items(), |j| {
                    update_theta(
                        snapshot.theta_of(j),
                        snapshot.item(j),
                        hp.lambda_v,
                        beta,
                        corpus.document(j),
                        &self.config.theta,
                    )
                })
            };
            flagged = updates.iter().filter(|u| u.flagged).count();
            if flagged > 0 {
                warn!("{flagged} items kept their previous topic proportions");
            }
            let theta = stack_columns(k, updates.into_iter().map(|u| u.theta).collect());
            let beta = self.refit_beta(&theta, beta, corpus);
            next.theta = theta;
            next.beta = Some(beta);
        }
        Ok((next, flagged))
    }

    pub fn objective(&self, state: &ModelState) -> Result<ObjectiveTerms, FactorError> {
        objective(state, self.data.ratings, self.social(), self.corpus(), &self.hp)
    }

    /// Continues training from `state` / `trace` until convergence or
    /// `max_iters` total sweeps. `on_sweep` sees every completed sweep.
    pub fn run(
        &self,
        mut state: ModelState,
        mut trace: TrainTrace,
        clock: &mut dyn Clock,
        on_sweep: &mut dyn FnMut(&ModelState, &TrainTrace),
    ) -> Result<(ModelState, TrainTrace), TrainError> {
        if !trace.is_empty() && converged(&trace, self.hp.tolerance, self.hp.max_iters).stop {
            return Ok((state, trace));
        }
        while trace.len() < self.hp.max_iters {
            let sweep = trace.len() + 1;
            let started = clock.now_seconds();
            let outcome = self
                .sweep(&state)
                .and_then(|(next, flagged)| Ok((self.objective(&next)?, next, flagged)));
            let (terms, next, flagged) = match outcome {
                Ok(x) => x,
                Err(cause) => {
                    return Err(TrainError::Aborted {
                        sweep,
                        cause,
                        last_good: Box::new((state, trace)),
                    })
                }
            };
            state = next;
            trace.records.push(SweepRecord {
                sweep,
                objective: terms.total(),
                terms,
                seconds: clock.now_seconds() - started,
                flagged_items: flagged,
            });
            on_sweep(&state, &trace);
            let c = converged(&trace, self.hp.tolerance, self.hp.max_iters);
            if c.violation {
                warn!("objective decreased in sweep {sweep}");
            }
            if c.stop {
                break;
            }
        }
        Ok((state, trace))
    }
}

/// Initializes and trains to convergence.
pub fn train<E: Executor>(
    config: TrainConfig,
    data: TrainingData<'_>,
    exec: &E,
    clock: &mut dyn Clock,
) -> Result<(ModelState, TrainTrace), TrainError> {
    let trainer = Trainer::new(config, data, exec)?;
    let state = trainer.initialize();
    trainer.run(state, TrainTrace::default(), clock, &mut |_, _| {})
}
