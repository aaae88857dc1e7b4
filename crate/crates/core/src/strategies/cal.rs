//! Contrastive scoring: how far a sample's predictive likelihood diverges
//! from its embedding-space neighbourhood, measured by KL divergence.

use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::math;
use crate::model::{DatasetBundle, ScoreSource, ScoreVector, StrategyId};
use crate::strategies::dist_sq;

/// Additive floor inside the KL logarithms.
const KL_FLOOR: f64 = 1e-12;

/// KL(p || q) with both arguments floored by `KL_FLOOR` inside the log.
pub(crate) fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q.iter())
        .map(|(&pi, &qi)| pi * math::ln((pi + KL_FLOOR) / (qi + KL_FLOOR)))
        .sum()
}

/// For each sample, the mean KL divergence from its `m_neighbors` nearest
/// select-pool neighbours (final-epoch run-0 probabilities, Euclidean
/// neighbourhoods, self excluded). Higher = more contrastive = preferred.
pub fn score_cal(bundle: &DatasetBundle, m_neighbors: usize) -> Result<ScoreVector> {
    if !bundle.has_prob_trace() {
        return Err(CoreError::MissingProbTrace);
    }
    if m_neighbors == 0 {
        return Err(CoreError::BadConfig("m_neighbors must be positive"));
    }
    let pool = bundle.select_pool();
    if m_neighbors >= pool.len() {
        return Err(CoreError::NeighborCountTooLarge {
            m: m_neighbors,
            pool: pool.len(),
        });
    }
    let last_epoch = bundle.n_epochs() - 1;
    let n = bundle.n_samples();
    let mut scores = Vec::with_capacity(n);
    for i in 0..n {
        let own = bundle.embedding(i);
        let mut neighbours: Vec<(f64, usize)> = pool
            .iter()
            .copied()
            .filter(|&j| j != i)
            .map(|j| (dist_sq(own, bundle.embedding(j)), j))
            .collect();
        neighbours.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let p_i = bundle.prob_row(0, last_epoch, i)?;
        let mut acc = 0.0;
        for &(_, j) in neighbours.iter().take(m_neighbors) {
            acc += kl_divergence(bundle.prob_row(0, last_epoch, j)?, p_i);
        }
        scores.push(acc / m_neighbors as f64);
    }
    Ok(ScoreVector::new(
        ScoreSource::Strategy(StrategyId::Cal),
        0,
        scores,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PoolTag;
    use alloc::vec;

    fn bundle(embeddings: Vec<f64>, probs_final: Vec<f64>, c: usize, d: usize) -> DatasetBundle {
        let n = embeddings.len() / d;
        DatasetBundle::new(
            c,
            d,
            1,
            1,
            embeddings,
            vec![0; n],
            Some(probs_final),
            None,
            None,
            vec![PoolTag::Select; n],
        )
        .unwrap()
    }

    #[test]
    fn identical_rows_score_zero() {
        let b = bundle(
            vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0],
            vec![0.5, 0.5, 0.5, 0.5, 0.5, 0.5],
            2,
            2,
        );
        let sv = score_cal(&b, 1).unwrap();
        assert!(sv.scores.iter().all(|&s| s.abs() < 1e-12));
    }

    #[test]
    fn hand_computed_three_sample_instance() {
        // Points on a line: 0 at x=0, 1 at x=1, 2 at x=3.
        // Nearest neighbour (m=1): of 0 -> 1, of 1 -> 0, of 2 -> 1.
        let p0 = [0.9, 0.1];
        let p1 = [0.5, 0.5];
        let p2 = [0.2, 0.8];
        let b = bundle(
            vec![0.0, 1.0, 3.0],
            vec![p0[0], p0[1], p1[0], p1[1], p2[0], p2[1]],
            2,
            1,
        );
        let sv = score_cal(&b, 1).unwrap();
        assert!((sv.scores[0] - kl_divergence(&p1, &p0)).abs() < 1e-12);
        assert!((sv.scores[1] - kl_divergence(&p0, &p1)).abs() < 1e-12);
        assert!((sv.scores[2] - kl_divergence(&p1, &p2)).abs() < 1e-12);
    }

    #[test]
    fn invariant_under_rigid_translation() {
        let emb = vec![0.3, -1.0, 2.0, 0.7, -0.5, 1.1, 0.0, 0.4];
        let probs = vec![0.7, 0.3, 0.4, 0.6, 0.9, 0.1, 0.2, 0.8];
        let b = bundle(emb.clone(), probs.clone(), 2, 2);
        let shifted: Vec<f64> = emb
            .chunks(2)
            .flat_map(|p| [p[0] + 5.0, p[1] - 2.0])
            .collect();
        let b2 = bundle(shifted, probs, 2, 2);
        assert_eq!(score_cal(&b, 2).unwrap().scores, score_cal(&b2, 2).unwrap().scores);
    }

    #[test]
    fn neighbour_count_must_fit_pool() {
        let b = bundle(vec![0.0, 1.0], vec![1.0, 0.0, 0.0, 1.0], 2, 1);
        assert!(matches!(
            score_cal(&b, 2),
            Err(CoreError::NeighborCountTooLarge { .. })
        ));
    }
}
