//! Run settings: a flat `key = value` file (TOML syntax) overlaid by
//! command-line flags, resolved into one fully specified configuration
//! whose hash is stamped on every output.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use ctrsmf_core::corpus::{Cutoff, Subsample};
use ctrsmf_core::{ConfidenceScheme, Hyperparams, SocialMatrix, ThetaControls, TrainConfig, Variant};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const DEFAULT_MS: [usize; 5] = [50, 100, 150, 200, 250];
pub const DEFAULT_LAMBDA_V_GRID: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];
pub const DEFAULT_LAMBDA_Q_GRID: [f64; 6] = [0.0, 0.01, 0.1, 1.0, 10.0, 100.0];
pub const DEFAULT_CUTOFFS: [&str; 5] = ["earliest", "q0.25", "q0.5", "q0.75", "inf"];

/// Every setting a command can take. Keys in the config file use the flag
/// names without the leading dashes.
#[derive(Args, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Settings {
    /// Seed for initialization and (unless --split-seed is given) the split
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (0 = one per core)
    #[arg(long)]
    pub workers: Option<usize>,
    /// Directory for every file a command writes
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Dataset snapshot written by `ingest` [default: <out-dir>/dataset.json]
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Keep only this many users with the most interactions
    #[arg(long)]
    pub max_users: Option<usize>,
    /// Keep only this many items, most rated by the kept users first
    #[arg(long)]
    pub max_items: Option<usize>,
    /// wmf, ctr or ctr-smf
    #[arg(long)]
    pub variant: Option<Variant>,
    /// Latent dimension / number of topics
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub lambda_u: Option<f64>,
    #[arg(long)]
    pub lambda_v: Option<f64>,
    #[arg(long)]
    pub lambda_s: Option<f64>,
    #[arg(long)]
    pub lambda_q: Option<f64>,
    /// Confidence of observed entries
    #[arg(long)]
    pub confidence_a: Option<f64>,
    /// Confidence of unobserved entries
    #[arg(long)]
    pub confidence_b: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Stop when the relative objective gain of a sweep falls below this
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Topic-only rounds before the first sweep
    #[arg(long)]
    pub pretrain_rounds: Option<usize>,
    /// Write an intermediate model every this many sweeps (0 = never)
    #[arg(long)]
    pub snapshot_every: Option<usize>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    pub split_seed: Option<u64>,
    /// Share of the training ratings held out to score sweep cells
    /// (0 = score against the test ratings)
    #[arg(long)]
    pub validation_fraction: Option<f64>,
    /// Recommendation list lengths, comma separated
    #[arg(long, value_delimiter = ',')]
    pub ms: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub lambda_v_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub lambda_q_grid: Option<Vec<f64>>,
    /// Social-network cutoffs: inf, earliest, q<fraction> or epoch ms
    #[arg(long, value_delimiter = ',')]
    pub cutoffs: Option<Vec<String>>,
    /// Record wall-clock seconds per sweep (makes trace files differ
    /// between runs)
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub timings: Option<bool>,
}

impl Settings {
    pub fn from_file(path: &Path) -> Result<Settings> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// `self` with every setting that `flags` specifies replaced.
    pub fn overlay(&self, flags: &Settings) -> Settings {
        let mut base = serde_json::to_value(self).expect("settings serialize");
        let top = serde_json::to_value(flags).expect("settings serialize");
        if let (Some(b), Some(t)) = (base.as_object_mut(), top.as_object()) {
            for (k, v) in t.iter().filter(|(_, v)| !v.is_null()) {
                b.insert(k.clone(), v.clone());
            }
        }
        serde_json::from_value(base).expect("settings round-trip")
    }

    pub fn resolve(&self) -> Result<Resolved> {
        let d = Hyperparams::default();
        let seed = self.seed.unwrap_or(0);
        let r = Resolved {
            seed,
            max_users: self.max_users,
            max_items: self.max_items,
            variant: self.variant.unwrap_or(Variant::CtrSmf),
            k: self.k.unwrap_or(d.k),
            lambda_u: self.lambda_u.unwrap_or(d.lambda_u),
            lambda_v: self.lambda_v,
            lambda_s: self.lambda_s.unwrap_or(d.lambda_s),
            lambda_q: self.lambda_q,
            confidence_a: self.confidence_a.unwrap_or(d.confidence.a()),
            confidence_b: self.confidence_b.unwrap_or(d.confidence.b()),
            max_iters: self.max_iters.unwrap_or(d.max_iters),
            tolerance: self.tolerance.unwrap_or(d.tolerance),
            pretrain_rounds: self.pretrain_rounds.unwrap_or(0),
            snapshot_every: self.snapshot_every.unwrap_or(0),
            test_fraction: self.test_fraction.unwrap_or(0.1),
            split_seed: self.split_seed.unwrap_or(seed),
            validation_fraction: self.validation_fraction.unwrap_or(0.0),
            ms: self.ms.clone().unwrap_or_else(|| DEFAULT_MS.to_vec()),
            lambda_v_grid: self.lambda_v_grid.clone().unwrap_or_else(|| DEFAULT_LAMBDA_V_GRID.to_vec()),
            lambda_q_grid: self.lambda_q_grid.clone().unwrap_or_else(|| DEFAULT_LAMBDA_Q_GRID.to_vec()),
            cutoffs: self
                .cutoffs
                .clone()
                .unwrap_or_else(|| DEFAULT_CUTOFFS.iter().map(|s| s.to_string()).collect()),
            timings: self.timings.unwrap_or(false),
        };
        if r.ms.is_empty() {
            bail!("--ms must list at least one length");
        }
        if !(0.0..1.0).contains(&r.validation_fraction) {
            bail!("--validation-fraction must be in [0, 1)");
        }
        Ok(r)
    }

    pub fn workers(&self) -> usize {
        self.workers.unwrap_or(0)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.dataset.clone().unwrap_or_else(|| self.out_dir().join("dataset.json"))
    }
}

/// Settings with defaults filled in. Paths and the worker count are left
/// out: they do not change results.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Resolved {
    pub seed: u64,
    pub max_users: Option<usize>,
    pub max_items: Option<usize>,
    pub variant: Variant,
    pub k: usize,
    pub lambda_u: f64,
    pub lambda_v: Option<f64>,
    pub lambda_s: f64,
    pub lambda_q: Option<f64>,
    pub confidence_a: f64,
    pub confidence_b: f64,
    pub max_iters: usize,
    pub tolerance: f64,
    pub pretrain_rounds: usize,
    pub snapshot_every: usize,
    pub test_fraction: f64,
    pub split_seed: u64,
    pub validation_fraction: f64,
    pub ms: Vec<usize>,
    pub lambda_v_grid: Vec<f64>,
    pub lambda_q_grid: Vec<f64>,
    pub cutoffs: Vec<String>,
    pub timings: bool,
}

impl Resolved {
    /// First 8 bytes of the SHA-256 of the canonical JSON form, in hex.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("resolved config serializes");
        Sha256::digest(&json)[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("resolved config serializes")
    }

    pub fn subsample(&self) -> Option<Subsample> {
        (self.max_users.is_some() || self.max_items.is_some()).then_some(Subsample {
            max_users: self.max_users,
            max_items: self.max_items,
        })
    }

    /// Training configuration. λ_v is required by the topic variants and
    /// λ_q by the social one; the other precisions have defaults.
    pub fn train_config(&self) -> Result<TrainConfig> {
        let d = Hyperparams::default();
        let lambda_v = match (self.lambda_v, self.variant) {
            (Some(v), _) => v,
            (None, Variant::Wmf) => d.lambda_v,
            (None, v) => bail!("--lambda-v is required for {v}"),
        };
        let lambda_q = match (self.lambda_q, self.variant) {
            (Some(q), Variant::CtrSmf) => q,
            (None, Variant::CtrSmf) => bail!("--lambda-q is required for ctr-smf"),
            (_, _) => 0.0,
        };
        self.config_with(lambda_v, lambda_q)
    }

    /// Training configuration at a grid point.
    pub fn config_with(&self, lambda_v: f64, lambda_q: f64) -> Result<TrainConfig> {
        let hp = Hyperparams {
            k: self.k,
            lambda_u: self.lambda_u,
            lambda_v,
            lambda_s: self.lambda_s,
            lambda_q,
            confidence: ConfidenceScheme::new(self.confidence_a, self.confidence_b)?,
            max_iters: self.max_iters,
            tolerance: self.tolerance,
            seed: self.seed,
        };
        hp.validate()?;
        Ok(TrainConfig {
            variant: self.variant,
            hp,
            pretrain_rounds: self.pretrain_rounds,
            snapshot_every: self.snapshot_every,
            theta: ThetaControls::default(),
        })
    }
}

/// Parses `inf`, `earliest` (just before the first dated relation),
/// `q<fraction>` (a quantile of relation times) or an epoch-ms integer.
pub fn parse_cutoff(text: &str, social: &SocialMatrix) -> Result<Cutoff> {
    let quantile = |q: f64| {
        social
            .time_quantile(q)
            .context("the social network has no dated relations")
    };
    match text.trim() {
        "inf" => Ok(Cutoff::Infinite),
        "earliest" => Ok(Cutoff::At(quantile(0.0)? - 1)),
        t if t.starts_with('q') => {
            let q: f64 = t[1..].parse().with_context(|| format!("bad quantile cutoff `{t}`"))?;
            if !(0.0..=1.0).contains(&q) {
                bail!("quantile cutoff `{t}` is outside [0, 1]");
            }
            Ok(Cutoff::At(quantile(q)?))
        }
        t => Ok(Cutoff::At(t.parse().with_context(|| format!("bad cutoff `{t}`"))?)),
    }
}
