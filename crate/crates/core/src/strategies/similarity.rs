//! Similarity and diversity selection over cosine distances in embedding
//! space, plus the centroid-cosine score used when fusing.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::model::{DatasetBundle, ScoreSource, ScoreVector, Selection, StrategyId};
use crate::rng::SeededRng;
use crate::strategies::{argmax_tie_lowest, check_class_pools, check_labels, cosine};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimilarityMode {
    Similar,
    Diverse,
}

impl SimilarityMode {
    pub fn strategy_id(self) -> StrategyId {
        match self {
            SimilarityMode::Similar => StrategyId::Similarity,
            SimilarityMode::Diverse => StrategyId::Diversity,
        }
    }
}

/// Cosine similarity of each sample to its class's select-pool centroid,
/// negated for diversity. Zero-norm vectors compare as cosine 0.
pub fn score_similarity(bundle: &DatasetBundle, mode: SimilarityMode) -> Result<ScoreVector> {
    check_labels(bundle)?;
    let d = bundle.embed_dim();
    let pools = bundle.class_select_pools();
    let mut centroids = vec![vec![0.0; d]; bundle.n_classes()];
    for (class, pool) in pools.iter().enumerate() {
        if pool.is_empty() {
            continue;
        }
        for &i in pool {
            for (m, &x) in centroids[class].iter_mut().zip(bundle.embedding(i)) {
                *m += x;
            }
        }
        for m in centroids[class].iter_mut() {
            *m /= pool.len() as f64;
        }
    }
    let sign = match mode {
        SimilarityMode::Similar => 1.0,
        SimilarityMode::Diverse => -1.0,
    };
    let scores = (0..bundle.n_samples())
        .map(|i| sign * cosine(bundle.embedding(i), &centroids[bundle.label(i) as usize]))
        .collect();
    Ok(ScoreVector::new(
        ScoreSource::Strategy(mode.strategy_id()),
        0,
        scores,
    ))
}

/// Per class: one seeded random pick, then greedily add the sample most
/// similar (or most dissimilar) to the mean embedding of the picks so far.
pub fn select_similarity_greedy(
    bundle: &DatasetBundle,
    mode: SimilarityMode,
    k: usize,
    seed: u64,
) -> Result<Selection> {
    if k == 0 {
        return Err(CoreError::BadConfig("k must be positive"));
    }
    let pools = check_class_pools(bundle, k)?;
    let sign = match mode {
        SimilarityMode::Similar => 1.0,
        SimilarityMode::Diverse => -1.0,
    };
    let mut rng = SeededRng::new(seed);
    let mut per_class = BTreeMap::new();
    for (class, pool) in pools.iter().enumerate() {
        let first = pool[rng.below_usize(pool.len())];
        let mut picked = vec![first];
        let mut sum: Vec<f64> = bundle.embedding(first).to_vec();
        while picked.len() < k {
            let avg: Vec<f64> = sum.iter().map(|s| s / picked.len() as f64).collect();
            let candidates: Vec<usize> = pool
                .iter()
                .copied()
                .filter(|i| !picked.contains(i))
                .collect();
            let next = argmax_tie_lowest(&candidates, |i| {
                sign * cosine(bundle.embedding(i), &avg)
            })
            .expect("pool size checked against k");
            for (s, &x) in sum.iter_mut().zip(bundle.embedding(next)) {
                *s += x;
            }
            picked.push(next);
        }
        per_class.insert(class as u32, picked.iter().map(|&i| i as u32).collect());
    }
    Ok(Selection {
        k_per_class: k,
        per_class,
    })
}
