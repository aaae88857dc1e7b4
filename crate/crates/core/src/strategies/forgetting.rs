//! Forgetting events: epochs where a previously correct sample turns
//! incorrect, counted over the run-0 trace.

use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::model::{DatasetBundle, ScoreSource, ScoreVector, StrategyId};
use crate::strategies::check_labels;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForgetDirection {
    /// Prefer the most-forgotten samples (score = +count).
    Most,
    /// Prefer the least-forgotten samples (score = -count).
    Least,
}

/// Per-sample forgetting counts over the run-0 epochs. Samples that are
/// never classified correctly count as maximally forgotten (count = E).
/// With fewer than two epochs no transition exists, so every count is 0.
pub fn forgetting_counts(bundle: &DatasetBundle) -> Result<Vec<usize>> {
    if !bundle.has_prob_trace() {
        return Err(CoreError::MissingProbTrace);
    }
    check_labels(bundle)?;
    let epochs = bundle.n_epochs();
    let n = bundle.n_samples();
    let mut counts = Vec::with_capacity(n);
    for i in 0..n {
        if epochs < 2 {
            counts.push(0);
            continue;
        }
        let label = bundle.label(i);
        let mut prev_correct = false;
        let mut ever_correct = false;
        let mut count = 0usize;
        for epoch in 0..epochs {
            let row = bundle.prob_row(0, epoch, i)?;
            let mut argmax = 0;
            for (class, &p) in row.iter().enumerate() {
                if p > row[argmax] {
                    argmax = class;
                }
            }
            let correct = argmax as u32 == label;
            ever_correct |= correct;
            if epoch > 0 && prev_correct && !correct {
                count += 1;
            }
            prev_correct = correct;
        }
        counts.push(if ever_correct { count } else { epochs });
    }
    Ok(counts)
}

pub fn score_forgetting(bundle: &DatasetBundle, direction: ForgetDirection) -> Result<ScoreVector> {
    let counts = forgetting_counts(bundle)?;
    let sign = match direction {
        ForgetDirection::Most => 1.0,
        ForgetDirection::Least => -1.0,
    };
    let scores = counts.iter().map(|&c| sign * c as f64).collect();
    let id = match direction {
        ForgetDirection::Most => StrategyId::ForgettingMost,
        ForgetDirection::Least => StrategyId::ForgettingLeast,
    };
    Ok(ScoreVector::new(ScoreSource::Strategy(id), 0, scores))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PoolTag;
    use alloc::vec;

    /// Builds a one-sample bundle whose run-0 correctness trace is given:
    /// correct epochs predict class 0 (= the label), incorrect predict 1.
    fn bundle_from_correctness(correct: &[bool]) -> DatasetBundle {
        let epochs = correct.len();
        let mut prob = Vec::new();
        for &c in correct {
            if c {
                prob.extend_from_slice(&[0.9, 0.1]);
            } else {
                prob.extend_from_slice(&[0.1, 0.9]);
            }
        }
        DatasetBundle::new(
            2,
            1,
            1,
            epochs,
            vec![0.0],
            vec![0],
            Some(prob),
            None,
            None,
            vec![PoolTag::Select],
        )
        .unwrap()
    }

    #[test]
    fn always_correct_counts_zero() {
        let b = bundle_from_correctness(&[true, true, true, true]);
        assert_eq!(forgetting_counts(&b).unwrap(), vec![0]);
    }

    #[test]
    fn alternating_counts_transitions() {
        let b = bundle_from_correctness(&[true, false, true, false]);
        assert_eq!(forgetting_counts(&b).unwrap(), vec![2]);
    }

    #[test]
    fn never_correct_counts_all_epochs() {
        let b = bundle_from_correctness(&[false, false, false]);
        assert_eq!(forgetting_counts(&b).unwrap(), vec![3]);
    }

    #[test]
    fn single_epoch_counts_zero() {
        let b = bundle_from_correctness(&[false]);
        assert_eq!(forgetting_counts(&b).unwrap(), vec![0]);
    }

    #[test]
    fn directions_negate() {
        let b = bundle_from_correctness(&[true, false, true, false]);
        let most = score_forgetting(&b, ForgetDirection::Most).unwrap();
        let least = score_forgetting(&b, ForgetDirection::Least).unwrap();
        assert_eq!(most.scores[0], 2.0);
        assert_eq!(least.scores[0], -2.0);
    }
}
