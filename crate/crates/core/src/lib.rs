//! Collaborative topic regression fused with social matrix factorization.
//!
//! This crate holds the model itself and is `no_std` (it needs `alloc`):
//! sparse rating / social / document containers, the LDA side of the model,
//! the closed-form factor updates, the coordinate-ascent trainer, and
//! recall@M evaluation. File formats, clocks and thread pools live in the
//! companion `ctrsmf` crate and are plugged in through [`exec::Executor`]
//! and [`trainer::Clock`].
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod corpus;
pub mod evaluate;
pub mod exec;
pub mod factors;
pub mod rng;
pub mod topics;
pub mod trainer;

pub use corpus::{
    Corpus, Cutoff, Dataset, Document, Fingerprint, IdMap, InteractionMatrix, SocialMatrix,
    SplitDataset,
};
pub use evaluate::{RecallReport, Scorer};
pub use exec::{Executor, Sequential};
pub use factors::{ConfidenceScheme, Hyperparams, ModelState, ObjectiveTerms};
pub use topics::ThetaControls;
pub use trainer::{Model, TrainConfig, TrainTrace, Variant};
