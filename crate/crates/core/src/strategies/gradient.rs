//! Last-layer gradient proxies and the early-training gradient-norm score.
//!
//! For a linear softmax head the per-sample loss gradient is the outer
//! product of the probability error (p - onehot(y)) with the embedding,
//! plus the error itself for the bias column. Its Euclidean norm factors as
//! ||p - onehot(y)|| * sqrt(||h||^2 + 1), which the unit tests check against
//! the assembled vector.

use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::math;
use crate::model::{DatasetBundle, ScoreSource, ScoreVector, StrategyId};
use crate::strategies::check_labels;

/// Flattened per-sample gradient of length C*(d+1): the C weight-row blocks
/// first, then the C bias entries.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientProxy {
    pub components: Vec<f64>,
    pub norm: f64,
}

/// Builds the proxy for one sample from its probability row, label, and
/// embedding.
pub fn gradient_proxy(prob_row: &[f64], label: u32, embedding: &[f64]) -> GradientProxy {
    let c = prob_row.len();
    let d = embedding.len();
    let mut components = Vec::with_capacity(c * (d + 1));
    for (class, &p) in prob_row.iter().enumerate() {
        let err = p - if class as u32 == label { 1.0 } else { 0.0 };
        for &h in embedding {
            components.push(err * h);
        }
    }
    for (class, &p) in prob_row.iter().enumerate() {
        let err = p - if class as u32 == label { 1.0 } else { 0.0 };
        components.push(err);
    }
    let norm = math::sqrt(components.iter().map(|v| v * v).sum());
    GradientProxy { components, norm }
}

/// Proxies for every sample at one (run, epoch) snapshot.
pub fn compute_gradient_proxies(
    bundle: &DatasetBundle,
    run: usize,
    epoch: usize,
) -> Result<Vec<GradientProxy>> {
    if !bundle.has_prob_trace() {
        return Err(CoreError::MissingProbTrace);
    }
    check_labels(bundle)?;
    let mut out = Vec::with_capacity(bundle.n_samples());
    for i in 0..bundle.n_samples() {
        let row = bundle.prob_row(run, epoch, i)?;
        out.push(gradient_proxy(row, bundle.label(i), bundle.embedding(i)));
    }
    Ok(out)
}

/// Mean proxy norm over all runs and the first `early_epochs` epochs; high
/// norm = large early contribution to the loss decline = preferred.
pub fn score_grand(bundle: &DatasetBundle, early_epochs: usize) -> Result<ScoreVector> {
    if !bundle.has_prob_trace() {
        return Err(CoreError::MissingProbTrace);
    }
    if early_epochs == 0 || early_epochs > bundle.n_epochs() {
        return Err(CoreError::WindowOutOfRange {
            window: early_epochs,
            epochs: bundle.n_epochs(),
        });
    }
    check_labels(bundle)?;
    let n = bundle.n_samples();
    let mut scores = alloc::vec![0.0; n];
    for run in 0..bundle.n_runs() {
        for epoch in 0..early_epochs {
            let proxies = compute_gradient_proxies(bundle, run, epoch)?;
            for (score, proxy) in scores.iter_mut().zip(proxies.iter()) {
                *score += proxy.norm;
            }
        }
    }
    let denom = (bundle.n_runs() * early_epochs) as f64;
    for score in scores.iter_mut() {
        *score /= denom;
    }
    Ok(ScoreVector::new(
        ScoreSource::Strategy(StrategyId::Grand),
        0,
        scores,
    ))
}
