//! Random small instances and a dense, loop-by-loop objective used as an
//! independent reference for the sparse implementation.
#![allow(dead_code)]

use ctrsmf_core::corpus::{build_social, IdMap, SocialEdge};
use ctrsmf_core::{
    ConfidenceScheme, Corpus, Document, Hyperparams, InteractionMatrix, ModelState, SocialMatrix,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Instance {
    pub ratings: InteractionMatrix,
    pub social: SocialMatrix,
    pub corpus: Corpus,
    pub state: ModelState,
    pub hp: Hyperparams,
}

pub const VOCABULARY: usize = 6;

/// Up to 10 users, 8 items and a 6-word vocabulary with a random state.
/// `k` is drawn from {1, 2, 4}.
pub fn instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.random_range(2..=10usize);
    let n = rng.random_range(2..=8usize);
    let k = [1, 2, 4][rng.random_range(0..3usize)];

    let mut entries = Vec::new();
    for u in 0..m as u32 {
        for j in 0..n as u32 {
            if rng.random_bool(0.35) {
                entries.push((u, j));
            }
        }
    }
    if entries.is_empty() {
        entries.push((0, 0));
    }
    let ratings = InteractionMatrix::from_entries(m, n, &entries).unwrap();

    let mut edges = Vec::new();
    for a in 0..m as i64 {
        for b in a + 1..m as i64 {
            if rng.random_bool(0.3) {
                edges.push(SocialEdge { user: a, friend: b, timestamp: None });
            }
        }
    }
    let (social, _) = build_social(&edges, &IdMap::from_ids(0..m as i64));

    let documents = (0..n)
        .map(|_| {
            Document::from_counts(
                (0..VOCABULARY as u32)
                    .filter_map(|w| rng.random_bool(0.4).then(|| (w, rng.random_range(1..4u32))))
                    .collect::<Vec<_>>(),
            )
        })
        .collect();
    let vocabulary = (0..VOCABULARY).map(|w| w.to_string()).collect();
    let corpus = Corpus::new(vocabulary, documents).unwrap();

    let uniform = |rows: usize, cols: usize, rng: &mut ChaCha8Rng| {
        DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    };
    let mut state = ModelState::zeros(k, m, n);
    state.users = uniform(k, m, &mut rng);
    state.items = uniform(k, n, &mut rng);
    state.social = uniform(k, m, &mut rng);
    state.theta = simplex_columns(k, n, &mut rng);
    state.beta = Some(simplex_columns(VOCABULARY, k, &mut rng).transpose());

    let b = rng.random_range(0.01..0.5);
    let hp = Hyperparams {
        k,
        lambda_u: rng.random_range(0.01..5.0),
        lambda_v: rng.random_range(0.01..5.0),
        lambda_s: rng.random_range(0.01..5.0),
        lambda_q: rng.random_range(0.1..5.0),
        confidence: ConfidenceScheme::new(b + rng.random_range(0.1..2.0), b).unwrap(),
        ..Hyperparams::default()
    };
    Instance { ratings, social, corpus, state, hp }
}

fn simplex_columns(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut out = DMatrix::from_fn(rows, cols, |_, _| rng.random_range(0.05..1.0));
    for mut c in out.column_iter_mut() {
        let s = c.sum();
        c /= s;
    }
    out
}

/// Every term written out as the plain double sums over all pairs.
pub fn dense_objective(inst: &Instance, state: &ModelState, hp: &Hyperparams) -> [f64; 6] {
    let (m, n, k) = (state.n_users(), state.n_items(), state.k());
    let (a, b) = (hp.confidence.a(), hp.confidence.b());
    let dot = |x: &[f64], y: &[f64]| (0..k).map(|d| x[d] * y[d]).sum::<f64>();
    let sq = |x: &[f64]| dot(x, x);

    let user_prior = -hp.lambda_u / 2.0 * (0..m).map(|i| sq(state.user(i))).sum::<f64>();
    let item_prior = -hp.lambda_v / 2.0
        * (0..n)
            .map(|j| {
                let (v, t) = (state.item(j), state.theta_of(j));
                (0..k).map(|d| (v[d] - t[d]).powi(2)).sum::<f64>()
            })
            .sum::<f64>();
    let social_prior = -hp.lambda_s / 2.0 * (0..m).map(|i| sq(state.social_factor(i))).sum::<f64>();

    let beta = state.beta.as_ref().unwrap();
    let mut words = 0.0;
    for j in 0..n {
        for &(w, count) in inst.corpus.document(j).words() {
            let p: f64 = (0..k).map(|d| state.theta_of(j)[d] * beta[(d, w as usize)]).sum();
            words += count as f64 * p.ln();
        }
    }

    let mut ratings = 0.0;
    for i in 0..m {
        for j in 0..n {
            let r = if inst.ratings.contains(i, j) { 1.0 } else { 0.0 };
            let c = if r == 1.0 { a } else { b };
            ratings -= c / 2.0 * (r - dot(state.user(i), state.item(j))).powi(2);
        }
    }

    let mut social = 0.0;
    for i in 0..m {
        for s in 0..m {
            let q = if inst.social.contains(i, s) { 1.0 } else { 0.0 };
            let d = if q == 1.0 { a } else { b };
            social -= hp.lambda_q / 2.0 * d / 2.0 * (q - dot(state.user(i), state.social_factor(s))).powi(2);
        }
    }
    [user_prior, item_prior, words, ratings, social, social_prior]
}

/// Central finite difference of `f` along every coordinate of `x`.
pub fn fd_gradient(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|d| {
            probe[d] = x[d] + h;
            let hi = f(&probe);
            probe[d] = x[d] - h;
            let lo = f(&probe);
            probe[d] = x[d];
            (hi - lo) / (2.0 * h)
        })
        .collect()
}
