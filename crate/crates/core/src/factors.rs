//! Closed-form ridge updates for user, item and social-factor vectors, and the
//! joint objective they ascend.
//!
//! Implicit feedback makes every user-item and user-user pair part of the
//! likelihood: observed pairs carry confidence `a`, the rest `b`. The dense
//! sums are never formed. Each phase precomputes `b·XXᵀ` once and every
//! column adds `(a - b)·xxᵀ` for its observed entries only.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, InteractionMatrix, SocialMatrix};
use crate::topics::{column, word_log_likelihood};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FactorError {
    #[error("confidence levels need a > b > 0 (got a = {a}, b = {b})")]
    BadConfidence { a: f64, b: f64 },
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparams(&'static str),
    #[error("linear system for {kind} {index} is not positive definite")]
    Singular { kind: &'static str, index: usize },
    #[error("the {0} term of the objective is not finite")]
    NonFinite(&'static str),
}

/// Confidence `a` on observed pairs and `b` on unobserved ones.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ConfidenceScheme {
    a: f64,
    b: f64,
}

impl ConfidenceScheme {
    pub fn new(a: f64, b: f64) -> Result<Self, FactorError> {
        if a.is_finite() && b > 0.0 && a > b {
            Ok(Self { a, b })
        } else {
            Err(FactorError::BadConfidence { a, b })
        }
    }

    /// Skips the `a > b > 0` check; for limiting cases such as `b = 0`.
    pub const fn unchecked(a: f64, b: f64) -> Self {
        Self { a, b }
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn weight(&self, observed: bool) -> f64 {
        if observed {
            self.a
        } else {
            self.b
        }
    }
}

impl Default for ConfidenceScheme {
    fn default() -> Self {
        Self { a: 1.0, b: 0.01 }
    }
}

/// Model dimension, precisions and confidence levels.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Hyperparams {
    pub k: usize,
    pub lambda_u: f64,
    pub lambda_v: f64,
    pub lambda_s: f64,
    pub lambda_q: f64,
    pub confidence: ConfidenceScheme,
    pub max_iters: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            k: 200,
            lambda_u: 0.01,
            lambda_v: 100.0,
            lambda_s: 0.01,
            lambda_q: 0.0,
            confidence: ConfidenceScheme::default(),
            max_iters: 200,
            tolerance: 1e-5,
            seed: 0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), FactorError> {
        if self.k == 0 {
            return Err(FactorError::InvalidHyperparams("k must be at least 1"));
        }
        let lambdas = [self.lambda_u, self.lambda_v, self.lambda_s, self.lambda_q];
        if lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(FactorError::InvalidHyperparams(
                "precisions must be finite and non-negative",
            ));
        }
        ConfidenceScheme::new(self.confidence.a, self.confidence.b)?;
        if !(self.tolerance >= 0.0) {
            return Err(FactorError::InvalidHyperparams("tolerance must be non-negative"));
        }
        Ok(())
    }

    /// Weight of the social block in the user and social-factor systems.
    ///
    /// The objective's social term is `(λ_q/2)(d/2)(q - uᵀs)²`, so its
    /// stationary point scales the social Gram and right-hand side by
    /// `λ_q/2` relative to the rating block.
    pub fn social_weight(&self) -> f64 {
        0.5 * self.lambda_q
    }
}

/// Dense latent state. Every matrix is `K x n`, one column per user / item.
/// `theta` is all zeros for plain matrix factorization; `beta` is `K x W`
/// when a topic model is attached.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub users: DMatrix<f64>,
    pub items: DMatrix<f64>,
    pub social: DMatrix<f64>,
    pub theta: DMatrix<f64>,
    pub beta: Option<DMatrix<f64>>,
}

impl ModelState {
    pub fn zeros(k: usize, n_users: usize, n_items: usize) -> Self {
        Self {
            users: DMatrix::zeros(k, n_users),
            items: DMatrix::zeros(k, n_items),
            social: DMatrix::zeros(k, n_users),
            theta: DMatrix::zeros(k, n_items),
            beta: None,
        }
    }

    pub fn k(&self) -> usize {
        self.users.nrows()
    }

    pub fn n_users(&self) -> usize {
        self.users.ncols()
    }

    pub fn n_items(&self) -> usize {
        self.items.ncols()
    }

    pub fn user(&self, i: usize) -> &[f64] {
        column(&self.users, i)
    }

    pub fn item(&self, j: usize) -> &[f64] {
        column(&self.items, j)
    }

    pub fn social_factor(&self, m: usize) -> &[f64] {
        column(&self.social, m)
    }

    pub fn theta_of(&self, j: usize) -> &[f64] {
        column(&self.theta, j)
    }

    pub fn is_finite(&self) -> bool {
        let all = |m: &DMatrix<f64>| m.iter().all(|x| x.is_finite());
        all(&self.users)
            && all(&self.items)
            && all(&self.social)
            && all(&self.theta)
            && self.beta.as_ref().map_or(true, all)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn gram(m: &DMatrix<f64>) -> DMatrix<f64> {
    m * m.transpose()
}

fn add_outer(a: &mut DMatrix<f64>, w: f64, x: &[f64]) {
    let k = x.len();
    let s = a.as_mut_slice();
    for c in 0..k {
        let wc = w * x[c];
        let col = &mut s[c * k..(c + 1) * k];
        for r in 0..k {
            col[r] += wc * x[r];
        }
    }
}

fn add_scaled(acc: &mut DVector<f64>, w: f64, x: &[f64]) {
    for (a, v) in acc.iter_mut().zip(x) {
        *a += w * v;
    }
}

fn solve_spd(
    a: DMatrix<f64>,
    rhs: DVector<f64>,
    kind: &'static str,
    index: usize,
) -> Result<Vec<f64>, FactorError> {
    let chol = a.cholesky().ok_or(FactorError::Singular { kind, index })?;
    let x = chol.solve(&rhs);
    if x.iter().all(|v| v.is_finite()) {
        Ok(x.as_slice().to_vec())
    } else {
        Err(FactorError::Singular { kind, index })
    }
}

/// User phase: `(V C_i Vᵀ + w S D_i Sᵀ + λ_u I) u_i = V C_i R_i + w S D_i Q_i`
/// with `w` = [`Hyperparams::social_weight`].
pub struct UserPhase<'a> {
    state: &'a ModelState,
    ratings: &'a InteractionMatrix,
    relations: Option<&'a SocialMatrix>,
    hp: &'a Hyperparams,
    base: DMatrix<f64>,
}

impl<'a> UserPhase<'a> {
    pub fn new(
        state: &'a ModelState,
        ratings: &'a InteractionMatrix,
        relations: Option<&'a SocialMatrix>,
        hp: &'a Hyperparams,
    ) -> Self {
        let b = hp.confidence.b();
        let w = hp.social_weight();
        let mut base = gram(&state.items) * b;
        if w != 0.0 {
            base += gram(&state.social) * (w * b);
        }
        for d in 0..state.k() {
            base[(d, d)] += hp.lambda_u;
        }
        Self {
            state,
            ratings,
            relations,
            hp,
            base,
        }
    }

    /// The normal equations for user `i`.
    pub fn system(&self, i: usize) -> (DMatrix<f64>, DVector<f64>) {
        let (a, b) = (self.hp.confidence.a(), self.hp.confidence.b());
        let w = self.hp.social_weight();
        let mut lhs = self.base.clone();
        let mut rhs = DVector::zeros(self.state.k());
        for &j in self.ratings.items_of(i) {
            let v = self.state.item(j as usize);
            add_outer(&mut lhs, a - b, v);
            add_scaled(&mut rhs, a, v);
        }
        if let (Some(q), true) = (self.relations, w != 0.0) {
            for &m in q.neighbors(i) {
                let s = self.state.social_factor(m as usize);
                add_outer(&mut lhs, w * (a - b), s);
                add_scaled(&mut rhs, w * a, s);
            }
        }
        (lhs, rhs)
    }

    pub fn solve(&self, i: usize) -> Result<Vec<f64>, FactorError> {
        let (lhs, rhs) = self.system(i);
        solve_spd(lhs, rhs, "user", i)
    }
}

/// Item phase: `(U C_j Uᵀ + λ_v I) v_j = U C_j R_j + λ_v θ_j`.
pub struct ItemPhase<'a> {
    state: &'a ModelState,
    ratings: &'a InteractionMatrix,
    hp: &'a Hyperparams,
    base: DMatrix<f64>,
}

impl<'a> ItemPhase<'a> {
    pub fn new(state: &'a ModelState, ratings: &'a InteractionMatrix, hp: &'a Hyperparams) -> Self {
        let mut base = gram(&state.users) * hp.confidence.b();
        for d in 0..state.k() {
            base[(d, d)] += hp.lambda_v;
        }
        Self {
            state,
            ratings,
            hp,
            base,
        }
    }

    pub fn system(&self, j: usize) -> (DMatrix<f64>, DVector<f64>) {
        let (a, b) = (self.hp.confidence.a(), self.hp.confidence.b());
        let mut lhs = self.base.clone();
        let mut rhs = DVector::zeros(self.state.k());
        for &i in self.ratings.users_of(j) {
            let u = self.state.user(i as usize);
            add_outer(&mut lhs, a - b, u);
            add_scaled(&mut rhs, a, u);
        }
        add_scaled(&mut rhs, self.hp.lambda_v, self.state.theta_of(j));
        (lhs, rhs)
    }

    pub fn solve(&self, j: usize) -> Result<Vec<f64>, FactorError> {
        let (lhs, rhs) = self.system(j);
        solve_spd(lhs, rhs, "item", j)
    }
}

/// Social-factor phase: `(w U D_m Uᵀ + λ_s I) s_m = w U D_m Q_m`.
pub struct SocialPhase<'a> {
    state: &'a ModelState,
    relations: &'a SocialMatrix,
    hp: &'a Hyperparams,
    base: DMatrix<f64>,
}

impl<'a> SocialPhase<'a> {
    pub fn new(state: &'a ModelState, relations: &'a SocialMatrix, hp: &'a Hyperparams) -> Self {
        let w = hp.social_weight();
        let mut base = if w != 0.0 {
            gram(&state.users) * (w * hp.confidence.b())
        } else {
            DMatrix::zeros(state.k(), state.k())
        };
        for d in 0..state.k() {
            base[(d, d)] += hp.lambda_s;
        }
        Self {
            state,
            relations,
            hp,
            base,
        }
    }

    pub fn system(&self, m: usize) -> (DMatrix<f64>, DVector<f64>) {
        let (a, b) = (self.hp.confidence.a(), self.hp.confidence.b());
        let w = self.hp.social_weight();
        let mut lhs = self.base.clone();
        let mut rhs = DVector::zeros(self.state.k());
        if w != 0.0 {
            for &i in self.relations.neighbors(m) {
                let u = self.state.user(i as usize);
                add_outer(&mut lhs, w * (a - b), u);
                add_scaled(&mut rhs, w * a, u);
            }
        }
        (lhs, rhs)
    }

    pub fn solve(&self, m: usize) -> Result<Vec<f64>, FactorError> {
        let (lhs, rhs) = self.system(m);
        solve_spd(lhs, rhs, "social factor", m)
    }
}

pub fn update_user(
    i: usize,
    state: &ModelState,
    ratings: &InteractionMatrix,
    relations: Option<&SocialMatrix>,
    hp: &Hyperparams,
) -> Result<Vec<f64>, FactorError> {
    UserPhase::new(state, ratings, relations, hp).solve(i)
}

pub fn update_item(
    j: usize,
    state: &ModelState,
    ratings: &InteractionMatrix,
    hp: &Hyperparams,
) -> Result<Vec<f64>, FactorError> {
    ItemPhase::new(state, ratings, hp).solve(j)
}

pub fn update_social(
    m: usize,
    state: &ModelState,
    relations: &SocialMatrix,
    hp: &Hyperparams,
) -> Result<Vec<f64>, FactorError> {
    SocialPhase::new(state, relations, hp).solve(m)
}

/// The six signed contributions to the objective.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ObjectiveTerms {
    pub user_prior: f64,
    pub item_prior: f64,
    pub words: f64,
    pub ratings: f64,
    pub social: f64,
    pub social_prior: f64,
}

impl ObjectiveTerms {
    pub const NAMES: [&'static str; 6] = [
        "user_prior",
        "item_prior",
        "words",
        "ratings",
        "social",
        "social_prior",
    ];

    pub fn as_array(&self) -> [f64; 6] {
        [
            self.user_prior,
            self.item_prior,
            self.words,
            self.ratings,
            self.social,
            self.social_prior,
        ]
    }

    pub fn total(&self) -> f64 {
        self.as_array().iter().sum()
    }
}

fn frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Complete log-likelihood of the state:
///
/// ```text
/// L = -(λ_u/2) Σ_i |u_i|² - (λ_v/2) Σ_j |v_j - θ_j|² + Σ_j Σ_w n_jw log Σ_k θ_jk β_kw
///     - Σ_ij (c_ij/2)(r_ij - u_iᵀv_j)² - (λ_q/2) Σ_im (d_im/2)(q_im - u_iᵀs_m)²
///     - (λ_s/2) Σ_m |s_m|²
/// ```
///
/// The word term is zero without a corpus or topic-word matrix. Rating and
/// social sums run over every pair with confidence `a`/`b`.
pub fn objective(
    state: &ModelState,
    ratings: &InteractionMatrix,
    relations: Option<&SocialMatrix>,
    corpus: Option<&Corpus>,
    hp: &Hyperparams,
) -> Result<ObjectiveTerms, FactorError> {
    let (a, b) = (hp.confidence.a(), hp.confidence.b());
    let user_gram = gram(&state.users);

    let user_prior = -0.5 * hp.lambda_u * state.users.norm_squared();
    let item_prior = -0.5 * hp.lambda_v * (&state.items - &state.theta).norm_squared();
    let social_prior = -0.5 * hp.lambda_s * state.social.norm_squared();

    let words = match (corpus, state.beta.as_ref()) {
        (Some(c), Some(beta)) => (0..state.n_items())
            .map(|j| word_log_likelihood(state.theta_of(j), beta, c.document(j)))
            .sum(),
        _ => 0.0,
    };

    let mut rating_loss = b * frobenius(&user_gram, &gram(&state.items));
    for (i, j) in ratings.entries() {
        let p = dot(state.user(i as usize), state.item(j as usize));
        rating_loss += a * (1.0 - p) * (1.0 - p) - b * p * p;
    }
    let ratings_term = -0.5 * rating_loss;

    let mut social_loss = b * frobenius(&user_gram, &gram(&state.social));
    if let Some(q) = relations {
        for i in 0..q.n_users() {
            for &m in q.neighbors(i) {
                let p = dot(state.user(i), state.social_factor(m as usize));
                social_loss += a * (1.0 - p) * (1.0 - p) - b * p * p;
            }
        }
    }
    let social = -(0.5 * hp.lambda_q) * (0.5 * social_loss);

    let terms = ObjectiveTerms {
        user_prior,
        item_prior,
        words,
        ratings: ratings_term,
        social,
        social_prior,
    };
    for (name, v) in ObjectiveTerms::NAMES.iter().zip(terms.as_array()) {
        if !v.is_finite() {
            return Err(FactorError::NonFinite(name));
        }
    }
    Ok(terms)
}
