//! Topic side of the model: word-topic responsibilities, projected-gradient
//! updates of per-item topic proportions on the simplex, and re-estimation of
//! the topic-word distributions.

use alloc::vec;
use alloc::vec::Vec;

use log::warn;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::Exp1;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document};
use crate::rng;

/// Step controls for [`update_theta`].
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ThetaControls {
    /// Alternations of responsibility refresh and gradient step.
    pub max_inner: usize,
    /// Stop once the relative bound gain of one alternation falls below this.
    pub tolerance: f64,
    /// Step halvings tried before giving up on an alternation.
    pub max_halvings: usize,
    /// Entries are floored here (then renormalized) so logs stay finite.
    pub floor: f64,
}

impl Default for ThetaControls {
    fn default() -> Self {
        Self {
            max_inner: 20,
            tolerance: 1e-6,
            max_halvings: 50,
            floor: 1e-12,
        }
    }
}

/// Per-item topic proportions (columns of `theta`, `K x J`) and topic-word
/// distributions (rows of `beta`, stored `K x W` so `beta.column(w)` is the
/// per-topic probability of word `w`).
#[derive(Clone, Debug, PartialEq)]
pub struct TopicState {
    pub theta: DMatrix<f64>,
    pub beta: DMatrix<f64>,
}

pub(crate) fn column(m: &DMatrix<f64>, j: usize) -> &[f64] {
    let k = m.nrows();
    &m.as_slice()[j * k..(j + 1) * k]
}

pub(crate) fn column_mut(m: &mut DMatrix<f64>, j: usize) -> &mut [f64] {
    let k = m.nrows();
    &mut m.as_mut_slice()[j * k..(j + 1) * k]
}

/// Seeded starting point: Dirichlet(1) proportions for items with words,
/// uniform proportions for empty documents, and near-uniform topics.
pub fn init_topics(corpus: &Corpus, k: usize, seed: u64) -> TopicState {
    assert!(k >= 1, "at least one topic is required");
    let w = corpus.vocabulary_size();
    if k > w {
        warn!("{k} topics over a vocabulary of {w} words");
    }
    let mut theta_rng = rng::stream(seed, rng::STREAM_THETA);
    let mut theta = DMatrix::from_element(k, corpus.n_documents(), 1.0 / k as f64);
    for (j, doc) in corpus.documents().iter().enumerate() {
        if doc.is_empty() {
            continue;
        }
        let col = column_mut(&mut theta, j);
        for x in col.iter_mut() {
            *x = theta_rng.sample::<f64, _>(Exp1).max(f64::MIN_POSITIVE);
        }
        let s: f64 = col.iter().sum();
        col.iter_mut().for_each(|x| *x /= s);
    }
    let mut beta_rng = rng::stream(seed, rng::STREAM_BETA);
    let mut beta = DMatrix::zeros(k, w);
    for wi in 0..w {
        for t in 0..k {
            beta[(t, wi)] = 1.0 + 0.01 * beta_rng.random::<f64>();
        }
    }
    normalize_rows(&mut beta);
    TopicState { theta, beta }
}

fn normalize_rows(beta: &mut DMatrix<f64>) -> usize {
    let w = beta.ncols();
    let mut empty = 0;
    for mut row in beta.row_iter_mut() {
        let s: f64 = row.iter().sum();
        if s > 0.0 {
            row.iter_mut().for_each(|x| *x /= s);
        } else {
            empty += 1;
            row.fill(1.0 / w as f64);
        }
    }
    empty
}

/// Euclidean projection onto `{x >= 0, sum x = 1}`.
pub fn simplex_project(x: &[f64]) -> Vec<f64> {
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut tau = 0.0;
    for (i, &s) in sorted.iter().enumerate() {
        cumulative += s;
        let t = (cumulative - 1.0) / (i + 1) as f64;
        if s - t > 0.0 {
            tau = t;
        }
    }
    x.iter().map(|&v| (v - tau).max(0.0)).collect()
}

/// Floors every entry at `floor` and renormalizes.
pub fn clip_to_floor(theta: &mut [f64], floor: f64) {
    theta.iter_mut().for_each(|x| *x = x.max(floor));
    let s: f64 = theta.iter().sum();
    theta.iter_mut().for_each(|x| *x /= s);
}

/// Topic responsibilities for each distinct word of one document, laid out
/// word-major (`k` values per word).
#[derive(Clone, Debug, PartialEq)]
pub struct Responsibilities {
    k: usize,
    values: Vec<f64>,
    /// Words whose unnormalized responsibilities were all zero.
    pub fallbacks: usize,
}

impl Responsibilities {
    pub fn from_rows(k: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len() % k, 0);
        Self {
            k,
            values,
            fallbacks: 0,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Responsibilities of the `n`-th distinct word.
    pub fn word(&self, n: usize) -> &[f64] {
        &self.values[n * self.k..(n + 1) * self.k]
    }

    pub fn n_words(&self) -> usize {
        self.values.len() / self.k
    }
}

/// `phi_k ∝ theta_k * beta_{k,w}` for every distinct word `w` of `doc`.
/// A word no topic can explain gets uniform responsibilities.
pub fn compute_phi(theta: &[f64], beta: &DMatrix<f64>, doc: &Document) -> Responsibilities {
    let k = theta.len();
    let mut values = vec![0.0; doc.len() * k];
    let mut fallbacks = 0;
    for (n, &(w, _)) in doc.words().iter().enumerate() {
        let b = column(beta, w as usize);
        let row = &mut values[n * k..(n + 1) * k];
        let mut s = 0.0;
        for t in 0..k {
            row[t] = theta[t] * b[t];
            s += row[t];
        }
        if s > 0.0 && s.is_finite() {
            row.iter_mut().for_each(|x| *x /= s);
        } else {
            fallbacks += 1;
            row.fill(1.0 / k as f64);
        }
    }
    if fallbacks > 0 {
        warn!("{fallbacks} words with zero probability under every topic; using uniform responsibilities");
    }
    Responsibilities {
        k,
        values,
        fallbacks,
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Jensen lower bound on the item-local objective:
/// `-(λ_v/2)|v - θ|² + Σ_w count_w Σ_k φ_wk (log θ_k β_kw - log φ_wk)`,
/// with `0 log 0 = 0`. Returns `-inf` when a responsibility sits on a topic
/// with zero probability.
pub fn theta_bound(
    theta: &[f64],
    phi: &Responsibilities,
    v: &[f64],
    lambda_v: f64,
    beta: &DMatrix<f64>,
    doc: &Document,
) -> f64 {
    let mut words = 0.0;
    for (n, &(w, c)) in doc.words().iter().enumerate() {
        let b = column(beta, w as usize);
        let mut term = 0.0;
        for (t, &p) in phi.word(n).iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let joint = theta[t] * b[t];
            if joint <= 0.0 {
                return f64::NEG_INFINITY;
            }
            term += p * (libm::log(joint) - libm::log(p));
        }
        words += c as f64 * term;
    }
    -0.5 * lambda_v * squared_distance(v, theta) + words
}

/// Gradient of [`theta_bound`] with respect to `θ` at fixed `φ`.
pub fn theta_gradient(
    theta: &[f64],
    phi: &Responsibilities,
    v: &[f64],
    lambda_v: f64,
    doc: &Document,
) -> Vec<f64> {
    let mut g: Vec<f64> = theta
        .iter()
        .zip(v)
        .map(|(t, v)| -lambda_v * (t - v))
        .collect();
    for (n, &(_, c)) in doc.words().iter().enumerate() {
        for (t, &p) in phi.word(n).iter().enumerate() {
            g[t] += c as f64 * p / theta[t];
        }
    }
    g
}

/// Word log-likelihood of one document: `Σ_w count_w log Σ_k θ_k β_kw`.
pub fn word_log_likelihood(theta: &[f64], beta: &DMatrix<f64>, doc: &Document) -> f64 {
    doc.words()
        .iter()
        .map(|&(w, c)| {
            let p: f64 = theta
                .iter()
                .zip(column(beta, w as usize))
                .map(|(a, b)| a * b)
                .sum();
            c as f64 * libm::log(p)
        })
        .sum()
}

/// Result of [`update_theta`].
#[derive(Clone, Debug, PartialEq)]
pub struct ThetaUpdate {
    pub theta: Vec<f64>,
    /// Tight bound value at the start and after every accepted step.
    pub bounds: Vec<f64>,
    /// Set when a non-finite gradient aborted the update; `theta` is then
    /// the input unchanged.
    pub flagged: bool,
}

/// Improves `θ_j` for fixed `v_j` and `β` by alternating a responsibility
/// refresh with one backtracking projected-gradient step on the bound.
///
/// Steps start at 1 and halve until the bound at the fixed responsibilities
/// improves, so the tight bound (the item's true local objective) never
/// decreases. Empty documents are solved in closed form: the maximizer of
/// the quadratic alone is the projection of `v_j`.
pub fn update_theta(
    theta: &[f64],
    v: &[f64],
    lambda_v: f64,
    beta: &DMatrix<f64>,
    doc: &Document,
    controls: &ThetaControls,
) -> ThetaUpdate {
    let k = theta.len();
    if k == 1 {
        return ThetaUpdate {
            theta: vec![1.0],
            bounds: Vec::new(),
            flagged: false,
        };
    }
    let local = |t: &[f64]| -0.5 * lambda_v * squared_distance(v, t) + word_log_likelihood(t, beta, doc);

    if doc.is_empty() {
        if lambda_v <= 0.0 {
            return ThetaUpdate {
                theta: theta.to_vec(),
                bounds: vec![local(theta)],
                flagged: false,
            };
        }
        let mut next = simplex_project(v);
        clip_to_floor(&mut next, controls.floor);
        return ThetaUpdate {
            bounds: vec![local(theta), local(&next)],
            theta: next,
            flagged: false,
        };
    }

    let mut current = theta.to_vec();
    clip_to_floor(&mut current, controls.floor);
    let mut phi = compute_phi(&current, beta, doc);
    let mut value = theta_bound(&current, &phi, v, lambda_v, beta, doc);
    let mut bounds = vec![value];

    for _ in 0..controls.max_inner {
        let grad = theta_gradient(&current, &phi, v, lambda_v, doc);
        if grad.iter().any(|g| !g.is_finite()) {
            warn!("non-finite topic-proportion gradient; keeping previous proportions");
            return ThetaUpdate {
                theta: theta.to_vec(),
                bounds,
                flagged: true,
            };
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..controls.max_halvings {
            let moved: Vec<f64> = current.iter().zip(&grad).map(|(t, g)| t + step * g).collect();
            let mut candidate = simplex_project(&moved);
            clip_to_floor(&mut candidate, controls.floor);
            if theta_bound(&candidate, &phi, v, lambda_v, beta, doc) > value {
                accepted = Some(candidate);
                break;
            }
            step *= 0.5;
        }
        let Some(next) = accepted else { break };
        current = next;
        phi = compute_phi(&current, beta, doc);
        let next_value = theta_bound(&current, &phi, v, lambda_v, beta, doc);
        let gain = next_value - value;
        value = next_value;
        bounds.push(value);
        if gain <= controls.tolerance * value.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    ThetaUpdate {
        theta: current,
        bounds,
        flagged: false,
    }
}

/// Expected topic-word counts, accumulated item by item.
#[derive(Clone, Debug)]
pub struct BetaAccumulator {
    counts: DMatrix<f64>,
}

impl BetaAccumulator {
    pub fn new(k: usize, vocabulary: usize) -> Self {
        Self {
            counts: DMatrix::zeros(k, vocabulary),
        }
    }

    pub fn add(&mut self, phi: &Responsibilities, doc: &Document) {
        for (n, &(w, c)) in doc.words().iter().enumerate() {
            let col = column_mut(&mut self.counts, w as usize);
            for (x, p) in col.iter_mut().zip(phi.word(n)) {
                *x += c as f64 * p;
            }
        }
    }

    /// Row-normalized topics and the number of topics that received no
    /// mass (those become uniform).
    pub fn finish(mut self) -> (DMatrix<f64>, usize) {
        let empty = normalize_rows(&mut self.counts);
        if empty > 0 {
            warn!("{empty} topics received no word mass; reset to uniform");
        }
        (self.counts, empty)
    }
}

/// `β_kw ∝ Σ_j count_j(w) φ_jwk` over the given documents.
pub fn update_beta<'a, I>(items: I, k: usize, vocabulary: usize) -> (DMatrix<f64>, usize)
where
    I: IntoIterator<Item = (&'a Responsibilities, &'a Document)>,
{
    let mut acc = BetaAccumulator::new(k, vocabulary);
    for (phi, doc) in items {
        acc.add(phi, doc);
    }
    acc.finish()
}
