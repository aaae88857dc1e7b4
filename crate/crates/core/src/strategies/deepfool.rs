//! Distance to the nearest decision boundary of the linear head.
//!
//! For an affine classifier the minimal perturbation moving a sample out of
//! its predicted class has the closed form min_k |f_y - f_k| / ||w_y - w_k||,
//! so no iterative perturbation is needed. Smaller distance = closer to the
//! boundary = preferred, hence the emitted score is the negated distance.

use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::math;
use crate::model::{DatasetBundle, ScoreSource, ScoreVector, StrategyId};

pub fn score_deepfool_linear(bundle: &DatasetBundle) -> Result<ScoreVector> {
    let head = bundle.head().ok_or(CoreError::MissingHead)?;
    let c = bundle.n_classes();
    let d = bundle.embed_dim();
    if c < 2 {
        return Err(CoreError::DegenerateHead);
    }

    // Pairwise weight-row distances, reused across samples.
    let mut row_dist = alloc::vec![0.0; c * c];
    for a in 0..c {
        for b in (a + 1)..c {
            let wa = head.weight_row(a, d);
            let wb = head.weight_row(b, d);
            let dist = math::sqrt(
                wa.iter()
                    .zip(wb.iter())
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum(),
            );
            row_dist[a * c + b] = dist;
            row_dist[b * c + a] = dist;
        }
    }

    let mut scores = Vec::with_capacity(bundle.n_samples());
    for i in 0..bundle.n_samples() {
        let h = bundle.embedding(i);
        let logits: Vec<f64> = (0..c)
            .map(|class| {
                head.weight_row(class, d)
                    .iter()
                    .zip(h.iter())
                    .map(|(w, x)| w * x)
                    .sum::<f64>()
                    + head.bias[class]
            })
            .collect();
        let mut predicted = 0;
        for (class, &f) in logits.iter().enumerate() {
            if f > logits[predicted] {
                predicted = class;
            }
        }
        let mut best: Option<f64> = None;
        for k in 0..c {
            if k == predicted {
                continue;
            }
            let denom = row_dist[predicted * c + k];
            if denom == 0.0 {
                // Duplicate weight rows: this pair has no boundary; skip.
                continue;
            }
            let dist = math::abs(logits[predicted] - logits[k]) / denom;
            best = Some(match best {
                Some(b) if b <= dist => b,
                _ => dist,
            });
        }
        match best {
            Some(dist) => scores.push(-dist),
            None => return Err(CoreError::DegenerateHead),
        }
    }
    Ok(ScoreVector::new(
        ScoreSource::Strategy(StrategyId::Deepfool),
        0,
        scores,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LinearHead, PoolTag};
    use alloc::vec;

    fn bundle(head: LinearHead, embeddings: Vec<f64>, c: usize, d: usize) -> DatasetBundle {
        let n = embeddings.len() / d;
        DatasetBundle::new(
            c,
            d,
            1,
            1,
            embeddings,
            vec![0; n],
            None,
            None,
            Some(head),
            vec![PoolTag::Select; n],
        )
        .unwrap()
    }

    #[test]
    fn two_class_closed_form() {
        let head = LinearHead {
            weight: vec![1.0, 0.0, -1.0, 0.0],
            bias: vec![0.0, 0.0],
        };
        let b = bundle(head, vec![0.5, 0.0], 2, 2);
        let sv = score_deepfool_linear(&b).unwrap();
        assert!((sv.scores[0] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn sample_on_bisector_scores_zero() {
        let head = LinearHead {
            weight: vec![1.0, 0.0, -1.0, 0.0],
            bias: vec![0.0, 0.0],
        };
        let b = bundle(head, vec![0.0, 3.0], 2, 2);
        let sv = score_deepfool_linear(&b).unwrap();
        assert_eq!(sv.scores[0], 0.0);
    }

    #[test]
    fn fully_duplicate_head_is_degenerate() {
        let head = LinearHead {
            weight: vec![1.0, 0.0, 1.0, 0.0],
            bias: vec![0.0, 0.0],
        };
        let b = bundle(head, vec![0.5, 0.0], 2, 2);
        assert_eq!(score_deepfool_linear(&b), Err(CoreError::DegenerateHead));
    }

    #[test]
    fn missing_head_reported() {
        let b = DatasetBundle::new(
            2,
            1,
            1,
            1,
            vec![0.0],
            vec![0],
            None,
            None,
            None,
            vec![PoolTag::Select],
        )
        .unwrap();
        assert_eq!(score_deepfool_linear(&b), Err(CoreError::MissingHead));
    }
}
