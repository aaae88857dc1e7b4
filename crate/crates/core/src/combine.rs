//! Score fusion: min-max normalisation, weighted averaging (optionally with
//! an extra seeded random score), and balanced top-K-per-class extraction.
//!
//! Normalisation is one global min-max over the whole vector, never per
//! class. Because min-max is invariant to strictly increasing affine maps,
//! rescaling any input vector by a*s + b (a > 0) leaves the combined
//! selection unchanged.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::model::{
    CombinationWeights, DatasetBundle, PoolTag, ScoreSource, ScoreVector, Selection,
};
use crate::rng::{derive_seed, tags};
use crate::strategies::score_random;

/// Min-max normalisation to [0, 1]; a constant vector maps to all 0.5 so it
/// neither dominates nor vanishes in a weighted average.
pub fn normalize_scores(sv: &ScoreVector) -> Result<ScoreVector> {
    if sv.is_empty() {
        return Err(CoreError::EmptyInput("score vector"));
    }
    if sv.scores.iter().any(|s| !s.is_finite()) {
        return Err(CoreError::NonFinite("score vector"));
    }
    let min = sv.scores.iter().copied().fold(f64::INFINITY, f64::min);
    let max = sv.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scores = if max == min {
        sv.scores.iter().map(|_| 0.5).collect()
    } else {
        // Clamped: (s - min)/(max - min) can stray past 1 by an ulp when
        // min is tiny relative to max.
        let range = max - min;
        sv.scores
            .iter()
            .map(|s| ((s - min) / range).clamp(0.0, 1.0))
            .collect()
    };
    Ok(ScoreVector::new(sv.source, sv.seed, scores))
}

/// Weighted average of the normalised inputs, weights rescaled to sum 1.
/// A positive `random_weight` prepends a seeded uniformly random vector
/// (seed derived from `seed`).
pub fn combine(
    score_vectors: &[ScoreVector],
    weights: &CombinationWeights,
    seed: u64,
) -> Result<ScoreVector> {
    weights.validate()?;
    let mut inputs: Vec<(ScoreVector, f64)> = Vec::with_capacity(score_vectors.len() + 1);
    let n = match score_vectors.first() {
        Some(sv) => sv.len(),
        None if weights.random_weight > 0.0 => {
            return Err(CoreError::EmptyInput("score vectors (length unknown)"))
        }
        None => return Err(CoreError::EmptyInput("score vectors")),
    };
    if weights.random_weight > 0.0 {
        inputs.push((
            score_random(n, derive_seed(seed, tags::COMBINE_RANDOM)),
            weights.random_weight,
        ));
    }
    let mut seen = alloc::vec::Vec::new();
    for sv in score_vectors {
        if sv.len() != n {
            return Err(CoreError::LengthMismatch {
                expected: n,
                got: sv.len(),
            });
        }
        let id = match sv.source {
            ScoreSource::Strategy(id) => id,
            ScoreSource::Combined => {
                return Err(CoreError::EmptyInput("combined vectors cannot be re-combined"))
            }
        };
        if seen.contains(&id) {
            return Err(CoreError::DuplicateStrategy(id));
        }
        seen.push(id);
        let w = *weights.entries.get(&id).ok_or(CoreError::MissingWeight(id))?;
        inputs.push((sv.clone(), w));
    }
    let total: f64 = inputs.iter().map(|(_, w)| w).sum();
    if total <= 0.0 {
        return Err(CoreError::ZeroWeights);
    }
    let mut combined = alloc::vec![0.0; n];
    for (sv, w) in &inputs {
        if *w == 0.0 {
            continue;
        }
        let normalized = normalize_scores(sv)?;
        let share = w / total;
        for (acc, s) in combined.iter_mut().zip(normalized.scores.iter()) {
            *acc += share * s;
        }
    }
    for v in combined.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(ScoreVector::new(ScoreSource::Combined, seed, combined))
}

/// The K highest-scoring select-pool samples of each class, ties toward the
/// lowest sample id; each class list ordered by descending score.
pub fn select_top_k_per_class(
    sv: &ScoreVector,
    bundle: &DatasetBundle,
    k: usize,
) -> Result<Selection> {
    if k == 0 {
        return Err(CoreError::BadConfig("k must be positive"));
    }
    if sv.len() != bundle.n_samples() {
        return Err(CoreError::LengthMismatch {
            expected: bundle.n_samples(),
            got: sv.len(),
        });
    }
    let mut per_class: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    let mut pools = alloc::vec![Vec::new(); bundle.n_classes()];
    for i in 0..bundle.n_samples() {
        if bundle.tag(i) == PoolTag::Select {
            let class = bundle.label(i) as usize;
            if class < bundle.n_classes() {
                pools[class].push(i);
            }
        }
    }
    for (class, pool) in pools.iter_mut().enumerate() {
        if pool.len() < k {
            return Err(CoreError::InsufficientPool {
                class: class as u32,
                have: pool.len(),
                need: k,
            });
        }
        pool.sort_by(|&a, &b| sv.scores[b].total_cmp(&sv.scores[a]).then(a.cmp(&b)));
        per_class.insert(
            class as u32,
            pool.iter().take(k).map(|&i| i as u32).collect(),
        );
    }
    Ok(Selection {
        k_per_class: k,
        per_class,
    })
}
