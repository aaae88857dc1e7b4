//! Core engine for few-shot support-set selection.
//!
//! The crate scores candidate training samples with twenty single-property
//! strategies (uncertainty, coreset, training-dynamics and similarity based),
//! searches for the subset of strategies worth combining (forward, backward
//! and datamodels selection over a LASSO fit), fuses the survivors into one
//! score per sample, and closes the loop with an episodic N-way K-shot
//! evaluator over embeddings.
//!
//! Everything here is deterministic: all randomness flows from explicit
//! 64-bit seeds through one named generator (splitmix64-seeded xoshiro256**),
//! so repeated runs are bit-identical. The crate is `no_std` + `alloc`; file
//! formats and the command-line front end live in the companion `acsess-cli`
//! crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod combine;
pub mod error;
pub mod eval;
pub(crate) mod math;
pub mod model;
pub mod rng;
pub mod search;
pub mod strategies;
pub mod synth;

pub use error::CoreError;
pub use model::{
    CombinationWeights, DatasetBundle, Distance, EvalConfig, EvalReport, PoolTag, ScoreSource,
    ScoreVector, Selection, StrategyId,
};
