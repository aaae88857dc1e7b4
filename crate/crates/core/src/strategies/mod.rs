//! The single-property scoring and selection strategies.
//!
//! Every operation here is a pure function of (bundle, parameters, seed):
//! repeated invocation is bit-identical. Scores follow the crate-wide
//! orientation contract (higher = preferred), so strategies whose natural
//! quantity is "lower is better" negate before emitting. Strategies only
//! read select-pool samples when forming candidate sets, neighbourhoods,
//! centroids and rankings; the one exception is Glister, whose outer
//! objective reads the validation pool.

pub mod cal;
pub mod cartography;
pub mod deepfool;
pub mod forgetting;
pub mod gradient;
pub mod greedy;
pub mod random;
pub mod similarity;
pub mod uncertainty;

use alloc::vec::Vec;

use crate::combine;
use crate::error::{CoreError, Result};
use crate::model::{DatasetBundle, ScoreSource, ScoreVector, Selection, StrategyId};

pub use cal::score_cal;
pub use cartography::{score_cartography, select_cartography, CartoVariant};
pub use deepfool::score_deepfool_linear;
pub use forgetting::{score_forgetting, ForgetDirection};
pub use gradient::{compute_gradient_proxies, score_grand, GradientProxy};
pub use greedy::{
    craig_order_with_gains, graphcut_order_with_gains, greedy_coreset, greedy_order, score_greedy,
    GreedyMethod, GreedyParams,
};
pub use random::{score_random, select_random_fixed};
pub use similarity::{score_similarity, select_similarity_greedy, SimilarityMode};
pub use uncertainty::{score_uncertainty, select_active_learning, UncertaintyKind};

/// Optional per-strategy parameter overrides; `None` means the documented
/// default.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StrategyParams {
    /// Uncertainty averaging window (last W epochs). Default max(1, E/5).
    pub window: Option<usize>,
    /// CAL neighbourhood size. Default min(10, select pool - 1).
    pub m_neighbors: Option<usize>,
    /// GraNd early-epoch count. Default max(1, E/2).
    pub early_epochs: Option<usize>,
    /// Graph-cut diversity weight. Default 1.
    pub graphcut_lambda: Option<f64>,
    /// Glister head-update step size. Default 0.01.
    pub glister_eta: Option<f64>,
}

impl StrategyParams {
    pub fn window_for(&self, n_epochs: usize) -> usize {
        self.window.unwrap_or_else(|| (n_epochs / 5).max(1))
    }

    pub fn early_for(&self, n_epochs: usize) -> usize {
        self.early_epochs.unwrap_or_else(|| (n_epochs / 2).max(1))
    }

    pub fn neighbors_for(&self, pool_size: usize) -> usize {
        self.m_neighbors
            .unwrap_or_else(|| 10usize.min(pool_size.saturating_sub(1)).max(1))
    }

    pub fn greedy(&self) -> greedy::GreedyParams {
        greedy::GreedyParams {
            graphcut_lambda: self.graphcut_lambda.unwrap_or(1.0),
            glister_eta: self.glister_eta.unwrap_or(0.01),
        }
    }
}

/// The score vector a strategy contributes when fused by the combiner.
///
/// Uncertainty strategies contribute their window-averaged statistics (the
/// step-based active-learning scores exist separately through
/// [`select_active_learning`]); greedy coreset methods contribute their
/// rank score; the easy+ambiguous cartography blend averages the min-max
/// normalised easy and ambiguous scores.
pub fn canonical_score(
    bundle: &DatasetBundle,
    id: StrategyId,
    params: &StrategyParams,
    seed: u64,
) -> Result<ScoreVector> {
    let sv = match id {
        StrategyId::Random => score_random(bundle.n_samples(), seed),
        StrategyId::Similarity => score_similarity(bundle, SimilarityMode::Similar)?,
        StrategyId::Diversity => score_similarity(bundle, SimilarityMode::Diverse)?,
        StrategyId::Entropy => score_uncertainty(
            bundle,
            UncertaintyKind::Entropy,
            params.window_for(bundle.n_epochs()),
        )?,
        StrategyId::Margin => score_uncertainty(
            bundle,
            UncertaintyKind::Margin,
            params.window_for(bundle.n_epochs()),
        )?,
        StrategyId::LeastConfidence => score_uncertainty(
            bundle,
            UncertaintyKind::LeastConfidence,
            params.window_for(bundle.n_epochs()),
        )?,
        StrategyId::Loss => score_uncertainty(
            bundle,
            UncertaintyKind::Loss,
            params.window_for(bundle.n_epochs()),
        )?,
        StrategyId::Cal => {
            let pool = bundle.select_pool().len();
            score_cal(bundle, params.neighbors_for(pool))?
        }
        StrategyId::Craig => score_greedy(bundle, GreedyMethod::Craig, &params.greedy())?,
        StrategyId::Deepfool => score_deepfool_linear(bundle)?,
        StrategyId::ForgettingMost => score_forgetting(bundle, ForgetDirection::Most)?,
        StrategyId::ForgettingLeast => score_forgetting(bundle, ForgetDirection::Least)?,
        StrategyId::Glister => score_greedy(bundle, GreedyMethod::Glister, &params.greedy())?,
        StrategyId::Grand => score_grand(bundle, params.early_for(bundle.n_epochs()))?,
        StrategyId::Herding => score_greedy(bundle, GreedyMethod::Herding, &params.greedy())?,
        StrategyId::Kcenter => score_greedy(bundle, GreedyMethod::Kcenter, &params.greedy())?,
        StrategyId::Graphcut => score_greedy(bundle, GreedyMethod::Graphcut, &params.greedy())?,
        StrategyId::CartoEasy => score_cartography(bundle, CartoVariant::Easy)?,
        StrategyId::CartoAmbiguous => score_cartography(bundle, CartoVariant::Ambiguous)?,
        StrategyId::CartoHard => score_cartography(bundle, CartoVariant::Hard)?,
        StrategyId::CartoEasyAmbiguous => {
            let easy = combine::normalize_scores(&score_cartography(bundle, CartoVariant::Easy)?)?;
            let ambiguous =
                combine::normalize_scores(&score_cartography(bundle, CartoVariant::Ambiguous)?)?;
            let scores = easy
                .scores
                .iter()
                .zip(ambiguous.scores.iter())
                .map(|(e, a)| 0.5 * (e + a))
                .collect();
            ScoreVector::new(ScoreSource::Strategy(id), seed, scores)
        }
    };
    let mut sv = sv;
    sv.source = ScoreSource::Strategy(id);
    sv.seed = seed;
    Ok(sv)
}

/// The strategy's own per-class selection procedure, as run standalone:
/// iterative acquisition for the uncertainty strategies, greedy set growth
/// for similarity/diversity, band sampling for ambiguous cartography, greedy
/// orderings for the coreset methods, and plain top-K by score elsewhere.
pub fn standalone_selection(
    bundle: &DatasetBundle,
    id: StrategyId,
    params: &StrategyParams,
    k: usize,
    seed: u64,
) -> Result<Selection> {
    match id {
        StrategyId::Random => select_random_fixed(bundle, k, seed),
        StrategyId::Similarity => select_similarity_greedy(bundle, SimilarityMode::Similar, k, seed),
        StrategyId::Diversity => select_similarity_greedy(bundle, SimilarityMode::Diverse, k, seed),
        StrategyId::Entropy => Ok(select_active_learning(bundle, UncertaintyKind::Entropy, k, seed)?.0),
        StrategyId::Margin => Ok(select_active_learning(bundle, UncertaintyKind::Margin, k, seed)?.0),
        StrategyId::LeastConfidence => {
            Ok(select_active_learning(bundle, UncertaintyKind::LeastConfidence, k, seed)?.0)
        }
        StrategyId::Loss => Ok(select_active_learning(bundle, UncertaintyKind::Loss, k, seed)?.0),
        StrategyId::CartoEasy => select_cartography(bundle, CartoVariant::Easy, k, seed),
        StrategyId::CartoAmbiguous => select_cartography(bundle, CartoVariant::Ambiguous, k, seed),
        StrategyId::CartoHard => select_cartography(bundle, CartoVariant::Hard, k, seed),
        StrategyId::CartoEasyAmbiguous => {
            select_cartography(bundle, CartoVariant::EasyAmbiguous, k, seed)
        }
        _ => {
            let sv = canonical_score(bundle, id, params, seed)?;
            combine::select_top_k_per_class(&sv, bundle, k)
        }
    }
}

/// Squared Euclidean distance.
pub(crate) fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

/// Cosine similarity; either vector having zero norm yields 0.
pub(crate) fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (crate::math::sqrt(na) * crate::math::sqrt(nb))
}

/// Argmax over candidate ids with ties broken toward the lowest id.
pub(crate) fn argmax_tie_lowest(candidates: &[usize], score: impl Fn(usize) -> f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &i in candidates {
        let s = score(i);
        match best {
            None => best = Some((i, s)),
            Some((bi, bs)) => {
                if s > bs || (s == bs && i < bi) {
                    best = Some((i, s));
                }
            }
        }
    }
    best.map(|(i, _)| i)
}

/// Errors unless every label indexes a valid class.
pub(crate) fn check_labels(bundle: &DatasetBundle) -> Result<()> {
    if bundle
        .labels()
        .iter()
        .any(|&l| l as usize >= bundle.n_classes())
    {
        return Err(CoreError::BadConfig("labels out of range"));
    }
    Ok(())
}

/// Requires each class's select pool to hold at least `k` samples.
pub(crate) fn check_class_pools(bundle: &DatasetBundle, k: usize) -> Result<Vec<Vec<usize>>> {
    let pools = bundle.class_select_pools();
    for (class, pool) in pools.iter().enumerate() {
        if pool.len() < k {
            return Err(CoreError::InsufficientPool {
                class: class as u32,
                have: pool.len(),
                need: k,
            });
        }
    }
    Ok(pools)
}
