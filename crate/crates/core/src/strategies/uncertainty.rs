//! Uncertainty statistics (entropy, margin, least confidence, loss) and the
//! stepwise active-learning acquisition built on them.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::math;
use crate::model::{DatasetBundle, ScoreSource, ScoreVector, Selection, StrategyId};
use crate::rng::SeededRng;
use crate::strategies::{argmax_tie_lowest, check_class_pools};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UncertaintyKind {
    Entropy,
    Margin,
    LeastConfidence,
    Loss,
}

impl UncertaintyKind {
    pub fn strategy_id(self) -> StrategyId {
        match self {
            UncertaintyKind::Entropy => StrategyId::Entropy,
            UncertaintyKind::Margin => StrategyId::Margin,
            UncertaintyKind::LeastConfidence => StrategyId::LeastConfidence,
            UncertaintyKind::Loss => StrategyId::Loss,
        }
    }
}

/// Shannon entropy of one probability row, with 0 ln 0 = 0.
pub(crate) fn row_entropy(row: &[f64]) -> f64 {
    row.iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * math::ln(p))
        .sum()
}

/// Top-two probabilities of a row. A single-class row has second = 0.
fn top_two(row: &[f64]) -> (f64, f64) {
    let mut first = f64::NEG_INFINITY;
    let mut second = f64::NEG_INFINITY;
    for &p in row {
        if p > first {
            second = first;
            first = p;
        } else if p > second {
            second = p;
        }
    }
    if second == f64::NEG_INFINITY {
        second = 0.0;
    }
    (first, second)
}

/// The per-sample statistic at one (run, epoch), oriented so that higher
/// means more preferred.
fn statistic(
    bundle: &DatasetBundle,
    kind: UncertaintyKind,
    run: usize,
    epoch: usize,
    sample: usize,
) -> Result<f64> {
    Ok(match kind {
        UncertaintyKind::Entropy => row_entropy(bundle.prob_row(run, epoch, sample)?),
        UncertaintyKind::Margin => {
            let (p1, p2) = top_two(bundle.prob_row(run, epoch, sample)?);
            -(p1 - p2)
        }
        UncertaintyKind::LeastConfidence => {
            let (p1, _) = top_two(bundle.prob_row(run, epoch, sample)?);
            1.0 - p1
        }
        UncertaintyKind::Loss => bundle.loss_at(run, epoch, sample)?,
    })
}

fn require_traces(bundle: &DatasetBundle, kind: UncertaintyKind) -> Result<()> {
    if kind == UncertaintyKind::Loss {
        if !bundle.has_loss_trace() {
            return Err(CoreError::MissingLossTrace);
        }
    } else if !bundle.has_prob_trace() {
        return Err(CoreError::MissingProbTrace);
    }
    Ok(())
}

/// Averages the statistic over the last `window` epochs of run 0.
pub fn score_uncertainty(
    bundle: &DatasetBundle,
    kind: UncertaintyKind,
    window: usize,
) -> Result<ScoreVector> {
    require_traces(bundle, kind)?;
    let epochs = bundle.n_epochs();
    if window == 0 || window > epochs {
        return Err(CoreError::WindowOutOfRange { window, epochs });
    }
    let start = epochs - window;
    let mut scores = vec![0.0; bundle.n_samples()];
    for (i, score) in scores.iter_mut().enumerate() {
        let mut acc = 0.0;
        for epoch in start..epochs {
            acc += statistic(bundle, kind, 0, epoch, i)?;
        }
        *score = acc / window as f64;
    }
    Ok(ScoreVector::new(
        ScoreSource::Strategy(kind.strategy_id()),
        0,
        scores,
    ))
}

/// Stepwise acquisition: step 0 picks one random select-pool sample per
/// class; step t (1 <= t < K) scores the not-yet-picked samples on the
/// epoch-t snapshot and takes the best per class.
///
/// The returned score vector ranks the procedure's own picks first: samples
/// picked at step t >= 1 carry their step-t score, step-0 picks carry the
/// maximum score observed across all steps, and everything else carries the
/// mean of its per-step scores. With K = 1 no step is ever scored, so picks
/// carry 1 and the rest 0.
pub fn select_active_learning(
    bundle: &DatasetBundle,
    kind: UncertaintyKind,
    k: usize,
    seed: u64,
) -> Result<(Selection, ScoreVector)> {
    if k == 0 {
        return Err(CoreError::BadConfig("k must be positive"));
    }
    require_traces(bundle, kind)?;
    if bundle.n_epochs() < k {
        return Err(CoreError::InsufficientEpochs {
            have: bundle.n_epochs(),
            need: k,
        });
    }
    let pools = check_class_pools(bundle, k)?;
    let n = bundle.n_samples();

    let mut rng = SeededRng::new(seed);
    let mut picked = vec![false; n];
    let mut picked_lists: Vec<Vec<usize>> = Vec::with_capacity(pools.len());
    for pool in &pools {
        let first = pool[rng.below_usize(pool.len())];
        picked[first] = true;
        picked_lists.push(vec![first]);
    }

    let mut sum_scores = vec![0.0; n];
    let mut picked_score: Vec<Option<f64>> = vec![None; n];
    let mut max_observed = f64::NEG_INFINITY;
    for step in 1..k {
        let mut step_scores = vec![0.0; n];
        for (i, s) in step_scores.iter_mut().enumerate() {
            *s = statistic(bundle, kind, 0, step, i)?;
            sum_scores[i] += *s;
        }
        for pool in &pools {
            for &i in pool {
                if !picked[i] && step_scores[i] > max_observed {
                    max_observed = step_scores[i];
                }
            }
        }
        for (class, pool) in pools.iter().enumerate() {
            let unpicked: Vec<usize> = pool.iter().copied().filter(|&i| !picked[i]).collect();
            let best = argmax_tie_lowest(&unpicked, |i| step_scores[i])
                .expect("pool size checked against k");
            picked[best] = true;
            picked_score[best] = Some(step_scores[best]);
            picked_lists[class].push(best);
        }
    }

    let steps_scored = k - 1;
    let scores: Vec<f64> = (0..n)
        .map(|i| {
            if steps_scored == 0 {
                return if picked[i] { 1.0 } else { 0.0 };
            }
            match picked_score[i] {
                Some(s) => s,
                None if picked[i] => max_observed,
                None => sum_scores[i] / steps_scored as f64,
            }
        })
        .collect();

    let per_class: BTreeMap<u32, Vec<u32>> = picked_lists
        .into_iter()
        .enumerate()
        .map(|(class, ids)| (class as u32, ids.into_iter().map(|i| i as u32).collect()))
        .collect();
    let selection = Selection {
        k_per_class: k,
        per_class,
    };
    let sv = ScoreVector::new(ScoreSource::Strategy(kind.strategy_id()), seed, scores);
    Ok((selection, sv))
}
