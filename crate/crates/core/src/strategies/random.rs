//! The random score and the fixed random-selection baseline.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::model::{DatasetBundle, ScoreSource, ScoreVector, Selection, StrategyId};
use crate::rng::SeededRng;
use crate::strategies::check_class_pools;

/// `n` independent Uniform[0,1) draws; also the extra randomised score the
/// combiner can mix in.
pub fn score_random(n: usize, seed: u64) -> ScoreVector {
    assert!(n > 0, "score_random needs at least one sample");
    let mut rng = SeededRng::new(seed);
    let scores: Vec<f64> = (0..n).map(|_| rng.next_f64()).collect();
    ScoreVector::new(ScoreSource::Strategy(StrategyId::Random), seed, scores)
}

/// The random-selection baseline: one seeded draw of `k` distinct samples
/// per class from the select pool, reused unchanged across every episode.
pub fn select_random_fixed(bundle: &DatasetBundle, k: usize, seed: u64) -> Result<Selection> {
    if k == 0 {
        return Err(CoreError::BadConfig("k must be positive"));
    }
    let pools = check_class_pools(bundle, k)?;
    let mut rng = SeededRng::new(seed);
    let mut per_class = BTreeMap::new();
    for (class, pool) in pools.iter().enumerate() {
        let picked = rng.choose_k(pool, k);
        per_class.insert(class as u32, picked.iter().map(|&i| i as u32).collect());
    }
    Ok(Selection { k_per_class: k, per_class })
}
