//! Synthetic dataset bundles with authentic training dynamics.
//!
//! Class centroids sit on the vertices of a scaled simplex (the unit axes);
//! samples are Gaussian around their centroid, a configurable fraction get
//! uniformly relabeled (label noise) and another fraction get their spread
//! multiplied by five (outliers). The probability and loss traces are not
//! scripted: a multinomial-logistic head is actually trained on the
//! generated embeddings by full-batch gradient descent, once per run, with
//! the state recorded after every epoch. The final run-0 head is stored in
//! the bundle, so its softmax outputs coincide with the last recorded epoch.
//!
//! All arrays are rounded through f32 before the bundle is assembled, which
//! makes on-disk round trips (stored as 32-bit floats) bit-exact.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::math;
use crate::model::{DatasetBundle, LinearHead, PoolTag};
use crate::rng::{derive_seed, tags, GaussianSource, SeededRng};

/// Generator configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenConfig {
    pub n_classes: usize,
    pub per_class: usize,
    pub dim: usize,
    /// Per-dimension Gaussian spread around the class centroid.
    pub cluster_spread: f64,
    /// Fraction of samples uniformly relabeled.
    pub label_noise_rate: f64,
    /// Fraction of samples whose spread is multiplied by five.
    pub outlier_rate: f64,
    pub n_runs: usize,
    pub n_epochs: usize,
    pub learn_rate: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_classes: 10,
            per_class: 90,
            dim: 16,
            cluster_spread: 0.25,
            label_noise_rate: 0.0,
            outlier_rate: 0.05,
            n_runs: 3,
            n_epochs: 20,
            learn_rate: 0.5,
        }
    }
}

/// What the generator did to each sample; test oracles use this to build
/// noise-avoiding reference selections.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenInfo {
    /// Samples whose label was re-drawn (the new label may coincide).
    pub relabeled: Vec<u32>,
    /// Samples generated with the widened spread.
    pub outliers: Vec<u32>,
}

fn round_f32(values: &mut [f64]) {
    for v in values.iter_mut() {
        *v = *v as f32 as f64;
    }
}

/// Generates a bundle. Deterministic per seed, bit-identical across calls.
pub fn gen_bundle(cfg: &GenConfig, seed: u64) -> Result<(DatasetBundle, GenInfo)> {
    if cfg.n_classes == 0 || cfg.per_class == 0 || cfg.dim == 0 || cfg.n_runs == 0
        || cfg.n_epochs == 0
    {
        return Err(CoreError::BadConfig("counts must be positive"));
    }
    if !(0.0..1.0).contains(&cfg.label_noise_rate) || !(0.0..1.0).contains(&cfg.outlier_rate) {
        return Err(CoreError::BadConfig("rates must lie in [0, 1)"));
    }
    if cfg.dim < cfg.n_classes {
        return Err(CoreError::BadConfig("dim must be >= n_classes for simplex centroids"));
    }
    let lr_bad = cfg.learn_rate.is_nan() || cfg.learn_rate <= 0.0 || !cfg.learn_rate.is_finite();
    let spread_bad = cfg.cluster_spread.is_nan() || cfg.cluster_spread < 0.0;
    if lr_bad || spread_bad {
        return Err(CoreError::BadConfig("learn_rate/spread out of range"));
    }
    let n = cfg.n_classes * cfg.per_class;
    let c = cfg.n_classes;
    let d = cfg.dim;

    // Displacements first, then outlier and noise draws, then pool tags:
    // the draw order is part of the generator's determinism contract.
    let mut gauss = GaussianSource::new(seed);
    let mut displacements = vec![0.0; n * d];
    for v in displacements.iter_mut() {
        *v = gauss.sample();
    }
    let mut rng = SeededRng::new(derive_seed(seed, 7));
    let all_ids: Vec<usize> = (0..n).collect();
    let n_outliers = math::round(cfg.outlier_rate * n as f64) as usize;
    let mut outliers = rng.choose_k(&all_ids, n_outliers);
    outliers.sort_unstable();
    let n_noisy = math::round(cfg.label_noise_rate * n as f64) as usize;
    let mut relabeled = rng.choose_k(&all_ids, n_noisy);
    relabeled.sort_unstable();

    let mut labels: Vec<u32> = (0..n).map(|i| (i / cfg.per_class) as u32).collect();
    let mut is_outlier = vec![false; n];
    for &i in &outliers {
        is_outlier[i] = true;
    }
    // Embeddings: centroid of the ORIGINAL class plus scaled displacement,
    // so relabeled samples keep sitting in their original cluster.
    let mut embeddings = vec![0.0; n * d];
    for i in 0..n {
        let class = labels[i] as usize;
        let mult = if is_outlier[i] { 5.0 } else { 1.0 };
        for dim in 0..d {
            let centroid = if dim == class { 1.0 } else { 0.0 };
            embeddings[i * d + dim] =
                centroid + mult * cfg.cluster_spread * displacements[i * d + dim];
        }
    }
    for &i in &relabeled {
        labels[i] = rng.below(c as u64) as u32;
    }

    // Stratified pool tags per (final) class: 60/25/15 select/query/validation.
    let mut pool_tags = vec![PoolTag::Validation; n];
    for class in 0..c {
        let mut members: Vec<usize> = (0..n).filter(|&i| labels[i] as usize == class).collect();
        rng.shuffle(&mut members);
        let n_select = math::round(0.6 * members.len() as f64) as usize;
        let n_query = math::round(0.25 * members.len() as f64) as usize;
        for (pos, &i) in members.iter().enumerate() {
            pool_tags[i] = if pos < n_select {
                PoolTag::Select
            } else if pos < n_select + n_query {
                PoolTag::Query
            } else {
                PoolTag::Validation
            };
        }
    }

    // Train one multinomial-logistic head per run, recording the state
    // after each epoch's full-batch gradient step.
    let mut prob_trace = vec![0.0; cfg.n_runs * cfg.n_epochs * n * c];
    let mut loss_trace = vec![0.0; cfg.n_runs * cfg.n_epochs * n];
    let mut final_head = None;
    for run in 0..cfg.n_runs {
        let mut init = GaussianSource::new(derive_seed(seed, tags::SYNTH_RUN_BASE + run as u64));
        let mut weight: Vec<f64> = (0..c * d).map(|_| 0.05 * init.sample()).collect();
        let mut bias: Vec<f64> = (0..c).map(|_| 0.05 * init.sample()).collect();
        let mut probs = forward(&embeddings, &weight, &bias, n, c, d);
        for epoch in 0..cfg.n_epochs {
            gradient_step(
                &embeddings,
                &labels,
                &probs,
                &mut weight,
                &mut bias,
                cfg.learn_rate,
                n,
                c,
                d,
            );
            probs = forward(&embeddings, &weight, &bias, n, c, d);
            let base = (run * cfg.n_epochs + epoch) * n;
            for i in 0..n {
                let row = &probs[i * c..(i + 1) * c];
                prob_trace[(base + i) * c..(base + i + 1) * c].copy_from_slice(row);
                let p_true = row[labels[i] as usize].max(f64::MIN_POSITIVE);
                loss_trace[base + i] = -math::ln(p_true);
            }
        }
        if run == 0 {
            final_head = Some(LinearHead { weight, bias });
        }
    }

    round_f32(&mut embeddings);
    round_f32(&mut prob_trace);
    round_f32(&mut loss_trace);
    let mut head = final_head.expect("run 0 always trains");
    round_f32(&mut head.weight);
    round_f32(&mut head.bias);

    let bundle = DatasetBundle::new(
        c,
        d,
        cfg.n_runs,
        cfg.n_epochs,
        embeddings,
        labels,
        Some(prob_trace),
        Some(loss_trace),
        Some(head),
        pool_tags,
    )?;
    let info = GenInfo {
        relabeled: relabeled.iter().map(|&i| i as u32).collect(),
        outliers: outliers.iter().map(|&i| i as u32).collect(),
    };
    Ok((bundle, info))
}

fn forward(embeddings: &[f64], weight: &[f64], bias: &[f64], n: usize, c: usize, d: usize) -> Vec<f64> {
    let mut probs = vec![0.0; n * c];
    for i in 0..n {
        let h = &embeddings[i * d..(i + 1) * d];
        let row = &mut probs[i * c..(i + 1) * c];
        for (class, out) in row.iter_mut().enumerate() {
            let mut z = bias[class];
            for (w, &x) in weight[class * d..(class + 1) * d].iter().zip(h.iter()) {
                z += w * x;
            }
            *out = z;
        }
        math::softmax_in_place(row);
    }
    probs
}

#[allow(clippy::too_many_arguments)]
fn gradient_step(
    embeddings: &[f64],
    labels: &[u32],
    probs: &[f64],
    weight: &mut [f64],
    bias: &mut [f64],
    learn_rate: f64,
    n: usize,
    c: usize,
    d: usize,
) {
    let scale = learn_rate / n as f64;
    for i in 0..n {
        let h = &embeddings[i * d..(i + 1) * d];
        let row = &probs[i * c..(i + 1) * c];
        for class in 0..c {
            let err = row[class] - if class as u32 == labels[i] { 1.0 } else { 0.0 };
            let step = scale * err;
            for (w, &x) in weight[class * d..(class + 1) * d].iter_mut().zip(h.iter()) {
                *w -= step * x;
            }
            bias[class] -= step;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> GenConfig {
        GenConfig {
            n_classes: 4,
            per_class: 20,
            dim: 6,
            n_runs: 2,
            n_epochs: 8,
            ..GenConfig::default()
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let (a, ia) = gen_bundle(&small_cfg(), 5).unwrap();
        let (b, ib) = gen_bundle(&small_cfg(), 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(ia, ib);
    }

    #[test]
    fn separable_data_trains_to_full_accuracy() {
        let cfg = GenConfig {
            cluster_spread: 0.02,
            outlier_rate: 0.0,
            n_epochs: 40,
            ..small_cfg()
        };
        let (bundle, _) = gen_bundle(&cfg, 1).unwrap();
        let last = bundle.n_epochs() - 1;
        let mut correct = 0;
        for i in 0..bundle.n_samples() {
            let row = bundle.prob_row(0, last, i).unwrap();
            let argmax = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            if argmax as u32 == bundle.label(i) {
                correct += 1;
            }
        }
        assert_eq!(correct, bundle.n_samples());
    }

    #[test]
    fn epoch_mean_loss_never_increases() {
        for seed in 0..6 {
            let (bundle, _) = gen_bundle(&GenConfig::default(), seed).unwrap();
            let n = bundle.n_samples();
            for run in 0..bundle.n_runs() {
                let mut prev = f64::INFINITY;
                for epoch in 0..bundle.n_epochs() {
                    let mean: f64 = (0..n)
                        .map(|i| bundle.loss_at(run, epoch, i).unwrap())
                        .sum::<f64>()
                        / n as f64;
                    assert!(
                        mean <= prev + 1e-9,
                        "seed {seed} run {run} epoch {epoch}: {prev} -> {mean}"
                    );
                    prev = mean;
                }
            }
        }
    }

    #[test]
    fn prob_rows_sum_to_one() {
        let (bundle, _) = gen_bundle(&small_cfg(), 3).unwrap();
        for run in 0..bundle.n_runs() {
            for epoch in 0..bundle.n_epochs() {
                for i in 0..bundle.n_samples() {
                    let sum: f64 = bundle.prob_row(run, epoch, i).unwrap().iter().sum();
                    assert!((sum - 1.0).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn pool_tags_are_stratified() {
        let (bundle, _) = gen_bundle(&GenConfig::default(), 2).unwrap();
        let pools = bundle.class_select_pools();
        for (class, pool) in pools.iter().enumerate() {
            let members = bundle
                .labels()
                .iter()
                .filter(|&&l| l as usize == class)
                .count();
            let expected = (0.6 * members as f64).round() as usize;
            assert!(
                pool.len() + 1 >= expected && pool.len() <= expected + 1,
                "class {class}: {} select of {members}",
                pool.len()
            );
        }
    }

    #[test]
    fn noised_samples_have_lower_confidence() {
        // Paired over seeds: mean cartography confidence of relabeled
        // samples stays below the clean samples' mean.
        for seed in 0..10 {
            let cfg = GenConfig {
                label_noise_rate: 0.2,
                ..GenConfig::default()
            };
            let (bundle, info) = gen_bundle(&cfg, seed).unwrap();
            let conf = crate::strategies::cartography::confidence_means(&bundle).unwrap();
            let noisy: Vec<usize> = info.relabeled.iter().map(|&i| i as usize).collect();
            let clean: Vec<usize> = (0..bundle.n_samples())
                .filter(|i| !noisy.contains(i))
                .collect();
            let mean = |ids: &[usize]| ids.iter().map(|&i| conf[i]).sum::<f64>() / ids.len() as f64;
            assert!(
                mean(&noisy) < mean(&clean),
                "seed {seed}: noisy {} !< clean {}",
                mean(&noisy),
                mean(&clean)
            );
        }
    }

    #[test]
    fn degenerate_config_rejected() {
        let cfg = GenConfig {
            dim: 2,
            n_classes: 4,
            ..small_cfg()
        };
        assert!(gen_bundle(&cfg, 0).is_err());
        let cfg = GenConfig {
            label_noise_rate: 1.0,
            ..small_cfg()
        };
        assert!(gen_bundle(&cfg, 0).is_err());
    }
}
