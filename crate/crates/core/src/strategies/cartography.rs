//! Training-dynamics cartography: samples characterised by their mean
//! true-class confidence across the run-0 epochs.
//!
//! Scores are deterministic: easy = confidence, hard = negated confidence,
//! ambiguous = negated distance from the pool-wide mean confidence (the
//! random-within-band rule applies to standalone selection only). The
//! pool-wide mean and standard deviation are computed over the select pool
//! (population std).

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::math;
use crate::model::{DatasetBundle, ScoreSource, ScoreVector, Selection, StrategyId};
use crate::rng::SeededRng;
use crate::strategies::{check_class_pools, check_labels};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CartoVariant {
    Easy,
    Ambiguous,
    Hard,
    EasyAmbiguous,
}

/// Mean true-class probability per sample over the run-0 epochs.
pub fn confidence_means(bundle: &DatasetBundle) -> Result<Vec<f64>> {
    if !bundle.has_prob_trace() {
        return Err(CoreError::MissingProbTrace);
    }
    check_labels(bundle)?;
    let epochs = bundle.n_epochs();
    let n = bundle.n_samples();
    let mut means = Vec::with_capacity(n);
    for i in 0..n {
        let label = bundle.label(i) as usize;
        let mut acc = 0.0;
        for epoch in 0..epochs {
            acc += bundle.prob_row(0, epoch, i)?[label];
        }
        means.push(acc / epochs as f64);
    }
    Ok(means)
}

/// Select-pool mean and population standard deviation of the confidences.
pub fn pool_confidence_stats(bundle: &DatasetBundle, confidences: &[f64]) -> Result<(f64, f64)> {
    let pool = bundle.select_pool();
    if pool.is_empty() {
        return Err(CoreError::EmptyPool);
    }
    let mean = pool.iter().map(|&i| confidences[i]).sum::<f64>() / pool.len() as f64;
    let var = pool
        .iter()
        .map(|&i| (confidences[i] - mean) * (confidences[i] - mean))
        .sum::<f64>()
        / pool.len() as f64;
    Ok((mean, math::sqrt(var)))
}

pub fn score_cartography(bundle: &DatasetBundle, variant: CartoVariant) -> Result<ScoreVector> {
    let confidences = confidence_means(bundle)?;
    let (id, scores) = match variant {
        CartoVariant::Easy => (StrategyId::CartoEasy, confidences),
        CartoVariant::Hard => (
            StrategyId::CartoHard,
            confidences.iter().map(|c| -c).collect(),
        ),
        CartoVariant::Ambiguous => {
            let (mean, _) = pool_confidence_stats(bundle, &confidences)?;
            (
                StrategyId::CartoAmbiguous,
                confidences.iter().map(|c| -math::abs(c - mean)).collect(),
            )
        }
        CartoVariant::EasyAmbiguous => {
            return Err(CoreError::BadConfig(
                "easy_ambiguous has no single score; blend easy and ambiguous",
            ))
        }
    };
    Ok(ScoreVector::new(ScoreSource::Strategy(id), 0, scores))
}

/// Standalone cartography selection.
///
/// Easy/hard take the per-class top-K by their score. Ambiguous draws
/// uniformly (seeded) from the class samples inside the one-standard-
/// deviation confidence band, topping up with the nearest-to-mean samples
/// when the band holds fewer than K. Easy+ambiguous takes ceil(K/2) easy
/// picks then K - ceil(K/2) ambiguous picks, never repeating a sample.
pub fn select_cartography(
    bundle: &DatasetBundle,
    variant: CartoVariant,
    k: usize,
    seed: u64,
) -> Result<Selection> {
    if k == 0 {
        return Err(CoreError::BadConfig("k must be positive"));
    }
    let pools = check_class_pools(bundle, k)?;
    let confidences = confidence_means(bundle)?;
    let (mean, std) = pool_confidence_stats(bundle, &confidences)?;
    let mut rng = SeededRng::new(seed);
    let mut per_class = BTreeMap::new();
    for (class, pool) in pools.iter().enumerate() {
        let ids = match variant {
            CartoVariant::Easy => top_by_confidence(pool, &confidences, k, true),
            CartoVariant::Hard => top_by_confidence(pool, &confidences, k, false),
            CartoVariant::Ambiguous => {
                pick_ambiguous(pool, &confidences, mean, std, k, &mut rng, &[])
            }
            CartoVariant::EasyAmbiguous => {
                let n_easy = k.div_ceil(2);
                let mut ids = top_by_confidence(pool, &confidences, n_easy, true);
                let ambiguous =
                    pick_ambiguous(pool, &confidences, mean, std, k - n_easy, &mut rng, &ids);
                ids.extend(ambiguous);
                ids
            }
        };
        per_class.insert(class as u32, ids.into_iter().map(|i| i as u32).collect());
    }
    Ok(Selection {
        k_per_class: k,
        per_class,
    })
}

fn top_by_confidence(pool: &[usize], confidences: &[f64], k: usize, easy: bool) -> Vec<usize> {
    let mut ranked: Vec<usize> = pool.to_vec();
    ranked.sort_by(|&a, &b| {
        let (sa, sb) = if easy {
            (confidences[a], confidences[b])
        } else {
            (-confidences[a], -confidences[b])
        };
        sb.total_cmp(&sa).then(a.cmp(&b))
    });
    ranked.truncate(k);
    ranked
}

fn pick_ambiguous(
    pool: &[usize],
    confidences: &[f64],
    mean: f64,
    std: f64,
    k: usize,
    rng: &mut SeededRng,
    exclude: &[usize],
) -> Vec<usize> {
    if k == 0 {
        return Vec::new();
    }
    let available: Vec<usize> = pool
        .iter()
        .copied()
        .filter(|i| !exclude.contains(i))
        .collect();
    let band: Vec<usize> = available
        .iter()
        .copied()
        .filter(|&i| math::abs(confidences[i] - mean) <= std)
        .collect();
    if band.len() >= k {
        return rng.choose_k(&band, k);
    }
    // Band too small: take all of it, then the nearest-to-mean remainder.
    let mut ids = band.clone();
    let mut rest: Vec<usize> = available
        .iter()
        .copied()
        .filter(|i| !band.contains(i))
        .collect();
    rest.sort_by(|&a, &b| {
        math::abs(confidences[a] - mean)
            .total_cmp(&math::abs(confidences[b] - mean))
            .then(a.cmp(&b))
    });
    ids.extend(rest.into_iter().take(k - ids.len()));
    ids
}
