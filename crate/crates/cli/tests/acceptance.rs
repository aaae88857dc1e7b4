//! Acceptance suite: one test per criterion, each verifying the engine
//! against independently coded oracles or protocol constants and printing a
//! PASS line with its runtime (run with --nocapture to see them).

use std::collections::BTreeMap;
use std::time::Instant;

use acsess_core::combine::{combine, select_top_k_per_class};
use acsess_core::eval::{evaluate_selection, sample_episodes, QuerySource, SupportSource};
use acsess_core::model::{
    CombinationWeights, DatasetBundle, PoolTag, ScoreSource, ScoreVector, Selection,
};
use acsess_core::rng::{derive_seed, SeededRng};
use acsess_core::search::{
    acsess_identify, datamodels_select, default_lambda_grid, evaluate_subset_on_episodes,
    forward_select, lasso_fit, BundleEval, DatamodelsOptions, ScoreCache, SubsetEval,
};
use acsess_core::strategies::{
    greedy_coreset, score_cal, score_cartography, score_forgetting, score_grand,
    score_uncertainty, select_random_fixed, CartoVariant, ForgetDirection, GreedyMethod, UncertaintyKind,
};
use acsess_core::synth::{gen_bundle, GenConfig};
use acsess_core::{CoreError, EvalConfig, StrategyId};

fn pass(criterion: usize, name: &str, start: Instant, budget_secs: f64) {
    let elapsed = start.elapsed().as_secs_f64();
    assert!(
        elapsed < budget_secs,
        "criterion {criterion} exceeded its runtime budget: {elapsed:.1}s >= {budget_secs}s"
    );
    println!("ACCEPTANCE {criterion} ({name}): PASS in {elapsed:.2}s");
}

/// Raw arrays for a random bundle, kept separate so the oracles can index
/// them without going through the bundle accessors.
struct RawBundle {
    n: usize,
    c: usize,
    d: usize,
    runs: usize,
    epochs: usize,
    embeddings: Vec<f64>,
    labels: Vec<u32>,
    probs: Vec<f64>,
    losses: Vec<f64>,
    bundle: DatasetBundle,
}

fn random_raw_bundle(seed: u64) -> RawBundle {
    let mut rng = SeededRng::new(seed);
    let c = 3 + rng.below_usize(3); // 3..=5 classes
    let per_class = 8 + rng.below_usize(6);
    let n = c * per_class;
    let d = 4 + rng.below_usize(4);
    let runs = 1 + rng.below_usize(3);
    let epochs = 4 + rng.below_usize(5);
    let embeddings: Vec<f64> = (0..n * d).map(|_| rng.next_f64() * 4.0 - 2.0).collect();
    let labels: Vec<u32> = (0..n).map(|i| (i / per_class) as u32).collect();
    let mut probs = vec![0.0; runs * epochs * n * c];
    for row in probs.chunks_mut(c) {
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = rng.next_f64() + 1e-3;
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    let losses: Vec<f64> = (0..runs * epochs * n).map(|_| rng.next_f64() * 3.0).collect();
    let bundle = DatasetBundle::new(
        c,
        d,
        runs,
        epochs,
        embeddings.clone(),
        labels.clone(),
        Some(probs.clone()),
        Some(losses.clone()),
        None,
        vec![PoolTag::Select; n],
    )
    .unwrap();
    RawBundle {
        n,
        c,
        d,
        runs,
        epochs,
        embeddings,
        labels,
        probs,
        losses,
        bundle,
    }
}

impl RawBundle {
    fn prob(&self, run: usize, epoch: usize, sample: usize) -> &[f64] {
        let base = ((run * self.epochs + epoch) * self.n + sample) * self.c;
        &self.probs[base..base + self.c]
    }
    fn emb(&self, sample: usize) -> &[f64] {
        &self.embeddings[sample * self.d..(sample + 1) * self.d]
    }
}

#[test]
#[allow(clippy::needless_range_loop)]
fn criterion_1_oracle_equivalence() {
    let start = Instant::now();
    for trial in 0..50 {
        let raw = random_raw_bundle(9000 + trial);
        let window = 1 + (trial as usize % raw.epochs);
        let window_range = (raw.epochs - window)..raw.epochs;

        // Uncertainty statistics against per-row oracles.
        let entropy = score_uncertainty(&raw.bundle, UncertaintyKind::Entropy, window).unwrap();
        let margin = score_uncertainty(&raw.bundle, UncertaintyKind::Margin, window).unwrap();
        let least = score_uncertainty(&raw.bundle, UncertaintyKind::LeastConfidence, window).unwrap();
        let loss = score_uncertainty(&raw.bundle, UncertaintyKind::Loss, window).unwrap();
        for i in 0..raw.n {
            let mut e_sum = 0.0;
            let mut m_sum = 0.0;
            let mut l_sum = 0.0;
            let mut loss_sum = 0.0;
            for epoch in window_range.clone() {
                let row = raw.prob(0, epoch, i);
                e_sum += row
                    .iter()
                    .filter(|&&p| p > 0.0)
                    .map(|&p| -p * p.ln())
                    .sum::<f64>();
                let mut sorted = row.to_vec();
                sorted.sort_by(|a, b| b.total_cmp(a));
                m_sum += -(sorted[0] - sorted[1]);
                l_sum += 1.0 - sorted[0];
                loss_sum += raw.losses[epoch * raw.n + i]; // run 0
            }
            let w = window as f64;
            assert!((entropy.scores[i] - e_sum / w).abs() < 1e-6);
            assert!((margin.scores[i] - m_sum / w).abs() < 1e-6);
            assert!((least.scores[i] - l_sum / w).abs() < 1e-6);
            assert!((loss.scores[i] - loss_sum / w).abs() < 1e-6);
        }

        // Forgetting counts, integer exact.
        let forgetting = score_forgetting(&raw.bundle, ForgetDirection::Most).unwrap();
        for i in 0..raw.n {
            let mut prev = false;
            let mut ever = false;
            let mut count = 0usize;
            for epoch in 0..raw.epochs {
                let row = raw.prob(0, epoch, i);
                let mut argmax = 0;
                for (cl, &p) in row.iter().enumerate() {
                    if p > row[argmax] {
                        argmax = cl;
                    }
                }
                let correct = argmax as u32 == raw.labels[i];
                ever |= correct;
                if epoch > 0 && prev && !correct {
                    count += 1;
                }
                prev = correct;
            }
            let expected = if raw.epochs < 2 {
                0
            } else if ever {
                count
            } else {
                raw.epochs
            };
            assert_eq!(forgetting.scores[i], expected as f64);
        }

        // Cartography statistics.
        let easy = score_cartography(&raw.bundle, CartoVariant::Easy).unwrap();
        let ambiguous = score_cartography(&raw.bundle, CartoVariant::Ambiguous).unwrap();
        let conf: Vec<f64> = (0..raw.n)
            .map(|i| {
                (0..raw.epochs)
                    .map(|e| raw.prob(0, e, i)[raw.labels[i] as usize])
                    .sum::<f64>()
                    / raw.epochs as f64
            })
            .collect();
        let mu = conf.iter().sum::<f64>() / raw.n as f64;
        for i in 0..raw.n {
            assert!((easy.scores[i] - conf[i]).abs() < 1e-6);
            assert!((ambiguous.scores[i] + (conf[i] - mu).abs()).abs() < 1e-6);
        }

        // CAL against a brute-force neighbourhood oracle.
        let m = 3.min(raw.n - 1);
        let cal = score_cal(&raw.bundle, m).unwrap();
        let last = raw.epochs - 1;
        for i in 0..raw.n {
            let mut by_dist: Vec<(f64, usize)> = (0..raw.n)
                .filter(|&j| j != i)
                .map(|j| {
                    let dist: f64 = raw
                        .emb(i)
                        .iter()
                        .zip(raw.emb(j))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    (dist, j)
                })
                .collect();
            by_dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut acc = 0.0;
            for &(_, j) in by_dist.iter().take(m) {
                let p = raw.prob(0, last, j);
                let q = raw.prob(0, last, i);
                acc += p
                    .iter()
                    .zip(q.iter())
                    .map(|(&pj, &qi)| pj * ((pj + 1e-12) / (qi + 1e-12)).ln())
                    .sum::<f64>();
            }
            assert!((cal.scores[i] - acc / m as f64).abs() < 1e-6);
        }

        // GraNd against the factored closed form, averaged by double loop.
        let early = 1 + (trial as usize % raw.epochs);
        let grand = score_grand(&raw.bundle, early).unwrap();
        for i in 0..raw.n {
            let mut acc = 0.0;
            for run in 0..raw.runs {
                for epoch in 0..early {
                    let row = raw.prob(run, epoch, i);
                    let err_sq: f64 = row
                        .iter()
                        .enumerate()
                        .map(|(cl, &p)| {
                            let e = p - if cl as u32 == raw.labels[i] { 1.0 } else { 0.0 };
                            e * e
                        })
                        .sum();
                    let h_sq: f64 = raw.emb(i).iter().map(|v| v * v).sum();
                    acc += err_sq.sqrt() * (h_sq + 1.0).sqrt();
                }
            }
            let expected = acc / (raw.runs * early) as f64;
            assert!((grand.scores[i] - expected).abs() < 1e-6);
        }
    }
    pass(1, "oracle equivalence", start, 10.0);
}

fn point_bundle(points: &[f64], d: usize, probs2: Option<Vec<f64>>) -> DatasetBundle {
    let n = points.len() / d;
    let (c, prob) = match probs2 {
        Some(p) => (2, Some(p)),
        None => (1, None),
    };
    DatasetBundle::new(
        c,
        d,
        1,
        1,
        points.to_vec(),
        vec![0; n],
        prob,
        None,
        None,
        vec![PoolTag::Select; n],
    )
    .unwrap()
}

fn subsets_of_size(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::new();
    fn recurse(start: usize, n: usize, k: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == k {
            out.push(current.clone());
            return;
        }
        for i in start..n {
            current.push(i);
            recurse(i + 1, n, k, current, out);
            current.pop();
        }
    }
    recurse(0, n, k, &mut current, &mut out);
    out
}

#[test]
fn criterion_2_greedy_quality() {
    let start = Instant::now();
    let mut rng = SeededRng::new(500);

    // k-center: greedy covering radius within twice the exhaustive optimum.
    for _ in 0..200 {
        let n = 5 + rng.below_usize(8); // 5..=12
        let budget = 1 + rng.below_usize(3);
        let d = 2 + rng.below_usize(2);
        let points: Vec<f64> = (0..n * d).map(|_| rng.next_f64() * 10.0 - 5.0).collect();
        let bundle = point_bundle(&points, d, None);
        let order = greedy_coreset(&bundle, GreedyMethod::Kcenter, budget, &Default::default()).unwrap();
        let dist = |a: usize, b: usize| -> f64 {
            (0..d)
                .map(|k| (points[a * d + k] - points[b * d + k]).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let radius = |centers: &[usize]| -> f64 {
            (0..n)
                .map(|i| {
                    centers
                        .iter()
                        .map(|&c| dist(i, c))
                        .fold(f64::INFINITY, f64::min)
                })
                .fold(0.0, f64::max)
        };
        let greedy_radius = radius(&order);
        let optimum = subsets_of_size(n, budget)
            .iter()
            .map(|s| radius(s))
            .fold(f64::INFINITY, f64::min);
        assert!(
            greedy_radius <= 2.0 * optimum + 1e-9,
            "kcenter radius {greedy_radius} > 2x optimum {optimum}"
        );
    }

    // Graph-cut: greedy objective within (1 - 1/e) of the exhaustive optimum.
    let guarantee = 1.0 - (-1.0f64).exp();
    for _ in 0..200 {
        let n = 5 + rng.below_usize(6); // 5..=10
        let budget = 1 + rng.below_usize(3);
        let d = 3;
        let points: Vec<f64> = (0..n * d).map(|_| rng.next_f64() * 2.0 - 1.0).collect();
        let bundle = point_bundle(&points, d, None);
        let order = greedy_coreset(&bundle, GreedyMethod::Graphcut, budget, &Default::default()).unwrap();
        let cosine = |a: usize, b: usize| -> f64 {
            let mut dot = 0.0;
            let mut na = 0.0;
            let mut nb = 0.0;
            for k in 0..d {
                dot += points[a * d + k] * points[b * d + k];
                na += points[a * d + k] * points[a * d + k];
                nb += points[b * d + k] * points[b * d + k];
            }
            if na == 0.0 || nb == 0.0 {
                0.0
            } else {
                dot / (na.sqrt() * nb.sqrt())
            }
        };
        let objective = |subset: &[usize]| -> f64 {
            let inside = |x: usize| subset.contains(&x);
            let mut cross = 0.0;
            for i in 0..n {
                if inside(i) {
                    continue;
                }
                for &j in subset {
                    cross += 0.5 * (1.0 + cosine(i, j));
                }
            }
            let mut within = 0.0;
            for (a, &i) in subset.iter().enumerate() {
                for &j in subset.iter().skip(a + 1) {
                    within += 2.0 * 0.5 * (1.0 + cosine(i, j));
                }
            }
            cross - within
        };
        let greedy_value = objective(&order);
        let optimum = subsets_of_size(n, budget)
            .iter()
            .map(|s| objective(s))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(
            greedy_value >= guarantee * optimum - 1e-9,
            "graphcut {greedy_value} < (1-1/e) * {optimum}"
        );
    }

    // CRAIG: facility-location value within (1 - 1/e) of the optimum.
    for _ in 0..200 {
        let n = 5 + rng.below_usize(6);
        let budget = 1 + rng.below_usize(3);
        let d = 3;
        let points: Vec<f64> = (0..n * d).map(|_| rng.next_f64() * 2.0 - 1.0).collect();
        let mut probs = vec![0.0; n * 2];
        for row in probs.chunks_mut(2) {
            let p = rng.next_f64();
            row[0] = p;
            row[1] = 1.0 - p;
        }
        let bundle = point_bundle(&points, d, Some(probs.clone()));
        let order = greedy_coreset(&bundle, GreedyMethod::Craig, budget, &Default::default()).unwrap();
        // Independent proxies: (p - onehot(0)) outer embedding ++ error.
        let proxy = |i: usize| -> Vec<f64> {
            let err = [probs[i * 2] - 1.0, probs[i * 2 + 1]];
            let mut g = Vec::with_capacity(2 * (d + 1));
            for e in err {
                for k in 0..d {
                    g.push(e * points[i * d + k]);
                }
            }
            g.extend(err);
            g
        };
        let proxies: Vec<Vec<f64>> = (0..n).map(proxy).collect();
        let pdist = |a: usize, b: usize| -> f64 {
            proxies[a]
                .iter()
                .zip(proxies[b].iter())
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
        };
        let mut delta = 0.0f64;
        for a in 0..n {
            for b in (a + 1)..n {
                delta = delta.max(pdist(a, b));
            }
        }
        let facility = |subset: &[usize]| -> f64 {
            (0..n)
                .map(|i| {
                    subset
                        .iter()
                        .map(|&j| delta - pdist(i, j))
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .sum()
        };
        let greedy_value = facility(&order);
        let optimum = subsets_of_size(n, budget)
            .iter()
            .map(|s| facility(s))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(
            greedy_value >= guarantee * optimum - 1e-9,
            "craig {greedy_value} < (1-1/e) * {optimum}"
        );
    }
    pass(2, "greedy quality", start, 60.0);
}

#[test]
fn criterion_3_lasso() {
    let start = Instant::now();
    // Identity design, symmetric targets: soft-threshold closed form across
    // the whole default grid.
    let targets = [-3.0, -1.2, -0.4, 0.0, 0.4, 1.2, 3.0];
    let n = targets.len();
    let mut design = vec![0.0; n * n];
    for i in 0..n {
        design[i * n + i] = 1.0;
    }
    for &lambda in &default_lambda_grid() {
        let fit = lasso_fit(&design, n, n, &targets, lambda).unwrap();
        let threshold = n as f64 * lambda;
        for (w, &t) in fit.weights.iter().zip(targets.iter()) {
            let expected = if t > threshold {
                t - threshold
            } else if t < -threshold {
                t + threshold
            } else {
                0.0
            };
            assert!(
                (w - expected).abs() < 1e-6,
                "lambda {lambda}: weight {w} vs {expected}"
            );
        }
        // Objective non-increasing every sweep.
        for pair in fit.objective_trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12);
        }
    }
    // Random dense fits: objective still non-increasing.
    let mut rng = SeededRng::new(31);
    for _ in 0..10 {
        let rows = 40;
        let cols = 8;
        let design: Vec<f64> = (0..rows * cols).map(|_| rng.next_f64() * 2.0 - 1.0).collect();
        let targets: Vec<f64> = (0..rows).map(|_| rng.next_f64() * 4.0 - 2.0).collect();
        let fit = lasso_fit(&design, rows, cols, &targets, 0.003).unwrap();
        for pair in fit.objective_trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12);
        }
        // Huge lambda zeroes every weight.
        let flat = lasso_fit(&design, rows, cols, &targets, 1e3).unwrap();
        assert_eq!(flat.weights, vec![0.0; cols]);
    }
    pass(3, "lasso solver", start, 5.0);
}

/// Additive utility oracle over strategy ids, with optional seeded noise.
struct AdditiveOracle {
    baseline: f64,
    gains: BTreeMap<StrategyId, f64>,
    noise_rng: Option<SeededRng>,
    noise_scale: f64,
}

impl SubsetEval for AdditiveOracle {
    fn baseline(&mut self) -> Result<f64, CoreError> {
        Ok(self.baseline)
    }
    fn evaluate(&mut self, subset: &[StrategyId]) -> Result<f64, CoreError> {
        let noise = match &mut self.noise_rng {
            Some(rng) => (rng.next_f64() * 2.0 - 1.0) * self.noise_scale,
            None => 0.0,
        };
        Ok(self.baseline
            + subset
                .iter()
                .map(|id| self.gains.get(id).copied().unwrap_or(0.0))
                .sum::<f64>()
            + noise)
    }
}

#[test]
fn criterion_4_search_correctness() {
    let start = Instant::now();
    let ids = [
        StrategyId::CartoEasy,
        StrategyId::Margin,
        StrategyId::ForgettingLeast,
        StrategyId::Graphcut,
    ];

    // Forward selection matches the exhaustive optimum 100/100 on additive
    // utilities with <= 4 strategies.
    let mut rng = SeededRng::new(404);
    for trial in 0..100 {
        let gains: BTreeMap<StrategyId, f64> = ids
            .iter()
            .map(|&id| (id, rng.next_f64() * 0.12 - 0.06))
            .collect();
        let mut oracle = AdditiveOracle {
            baseline: 0.5,
            gains: gains.clone(),
            noise_rng: None,
            noise_scale: 0.0,
        };
        let result = forward_select(&mut oracle, &ids).unwrap();
        let forward_value: f64 = result.subset.iter().map(|id| gains[id]).sum();
        let mut best = 0.0f64;
        for mask in 0..(1u32 << ids.len()) {
            let value: f64 = ids
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, id)| gains[id])
                .sum();
            best = best.max(value);
        }
        assert!(
            (forward_value - best).abs() < 1e-12,
            "trial {trial}: forward {forward_value} != optimum {best}"
        );
    }

    // Datamodels recovers a planted 3-sparse positive support with small
    // noise in >= 95/100 seeded trials; null columns stay below 0.05.
    let planted = [
        StrategyId::CartoEasy,
        StrategyId::ForgettingLeast,
        StrategyId::Margin,
    ];
    let nulls = [
        StrategyId::Entropy,
        StrategyId::Herding,
        StrategyId::Kcenter,
        StrategyId::Loss,
        StrategyId::Graphcut,
    ];
    let mut candidates: Vec<StrategyId> = planted.to_vec();
    candidates.extend_from_slice(&nulls);
    let mut successes = 0;
    for trial in 0..100u64 {
        let mut weight_rng = SeededRng::new(7000 + trial);
        let gains: BTreeMap<StrategyId, f64> = planted
            .iter()
            .map(|&id| (id, 0.02 + weight_rng.next_f64() * 0.06))
            .collect();
        let mut oracle = AdditiveOracle {
            baseline: 0.5,
            gains: gains.clone(),
            noise_rng: Some(SeededRng::new(8000 + trial)),
            noise_scale: 0.005,
        };
        let result = datamodels_select(
            &mut oracle,
            &candidates,
            &DatamodelsOptions {
                n_combos: 150,
                min_count: 5,
                include_random: false,
                folds: 5,
            },
            trial,
        )
        .unwrap();
        let support_ok = planted.iter().all(|id| result.subset.contains(id));
        let nulls_ok = match &result.weights {
            Some(w) => nulls
                .iter()
                .all(|id| w.entries.get(id).copied().unwrap_or(0.0) < 0.05),
            None => false,
        };
        if support_ok && nulls_ok {
            successes += 1;
        }
    }
    assert!(
        successes >= 95,
        "datamodels recovery {successes}/100 below 95"
    );
    pass(4, "search correctness", start, 30.0);
}

#[test]
fn criterion_5_combination_invariances() {
    let start = Instant::now();
    let (bundle, _) = gen_bundle(
        &GenConfig {
            n_classes: 5,
            per_class: 24,
            dim: 8,
            n_epochs: 10,
            n_runs: 2,
            ..GenConfig::default()
        },
        11,
    )
    .unwrap();
    let n = bundle.n_samples();
    let mut rng = SeededRng::new(90);
    for case in 0..100u64 {
        let ids = [StrategyId::Entropy, StrategyId::CartoEasy, StrategyId::Cal];
        let vectors: Vec<ScoreVector> = ids
            .iter()
            .map(|&id| {
                ScoreVector::new(
                    ScoreSource::Strategy(id),
                    0,
                    (0..n).map(|_| rng.next_f64() * 20.0 - 10.0).collect(),
                )
            })
            .collect();
        let mut weights = CombinationWeights::uniform(&ids);
        weights
            .entries
            .insert(StrategyId::Entropy, 0.2 + rng.next_f64());
        let fused = combine(&vectors, &weights, case).unwrap();
        assert!(fused.scores.iter().all(|&s| (0.0..=1.0).contains(&s)));
        let selection = select_top_k_per_class(&fused, &bundle, 3).unwrap();

        // Strictly increasing affine rescale of one input: same selection.
        let which = (case % 3) as usize;
        let a = 0.1 + rng.next_f64() * 5.0;
        let b = rng.next_f64() * 40.0 - 20.0;
        let mut rescaled = vectors.clone();
        rescaled[which].scores.iter_mut().for_each(|s| *s = a * *s + b);
        let fused2 = combine(&rescaled, &weights, case).unwrap();
        let selection2 = select_top_k_per_class(&fused2, &bundle, 3).unwrap();
        assert_eq!(selection, selection2, "case {case}");
    }

    // Paired-episode evaluation of identical selections is bit-identical.
    let cfg = EvalConfig {
        n_tasks: 200,
        q_query: 5,
        ..EvalConfig::default()
    };
    let episodes = sample_episodes(&bundle, &cfg).unwrap();
    let selection = select_random_fixed(&bundle, 5, 4).unwrap();
    let r1 = evaluate_selection(&bundle, SupportSource::Fixed(&selection), &episodes, &cfg).unwrap();
    let r2 = evaluate_selection(&bundle, SupportSource::Fixed(&selection), &episodes, &cfg).unwrap();
    assert_eq!(r1, r2);
    pass(5, "combination invariances", start, 30.0);
}

/// The noise-avoiding oracle: a seeded balanced selection drawn only from
/// clean, non-outlier select-pool samples.
fn oracle_selection(
    bundle: &DatasetBundle,
    bad: &[u32],
    k: usize,
    seed: u64,
) -> Selection {
    let mut rng = SeededRng::new(seed);
    let mut per_class = BTreeMap::new();
    let pools = bundle.class_select_pools();
    for (class, pool) in pools.iter().enumerate() {
        let clean: Vec<usize> = pool
            .iter()
            .copied()
            .filter(|&i| !bad.contains(&(i as u32)))
            .collect();
        let picked = rng.choose_k(&clean, k);
        per_class.insert(class as u32, picked.iter().map(|&i| i as u32).collect());
    }
    Selection {
        k_per_class: k,
        per_class,
    }
}

#[test]
fn criterion_6_end_to_end_trend() {
    let start = Instant::now();
    let gen_cfg = GenConfig {
        label_noise_rate: 0.2,
        ..GenConfig::default()
    };
    let candidates: Vec<StrategyId> = StrategyId::ALL
        .iter()
        .copied()
        .filter(|&id| id != StrategyId::Random)
        .collect();

    let mut acsess_minus_random = Vec::new();
    let mut oracle_minus_random = Vec::new();
    let mut benefit_1 = Vec::new();
    let mut benefit_5 = Vec::new();
    let mut benefit_40 = Vec::new();
    for pair in 0..10u64 {
        let split_seed = 1000 + pair;
        let strategy_seed = 2000 + pair;
        let episode_seed = 3000 + pair;
        let (bundle, info) = gen_bundle(&gen_cfg, split_seed).unwrap();
        let full_cfg = EvalConfig {
            seed: episode_seed,
            ..EvalConfig::default()
        };
        let episodes = sample_episodes(&bundle, &full_cfg).unwrap();

        // Baselines on the shared episodes.
        let random_sel = select_random_fixed(&bundle, 5, strategy_seed).unwrap();
        let acc_random =
            evaluate_selection(&bundle, SupportSource::Fixed(&random_sel), &episodes, &full_cfg)
                .unwrap()
                .mean_accuracy;
        let classic5 = evaluate_selection(&bundle, SupportSource::Classic, &episodes, &full_cfg)
            .unwrap()
            .mean_accuracy;
        let mut bad = info.relabeled.clone();
        bad.extend_from_slice(&info.outliers);
        let oracle = oracle_selection(&bundle, &bad, 5, derive_seed(strategy_seed, 99));
        let acc_oracle =
            evaluate_selection(&bundle, SupportSource::Fixed(&oracle), &episodes, &full_cfg)
                .unwrap()
                .mean_accuracy;
        oracle_minus_random.push(acc_oracle - acc_random);

        // Full ACSESS identification at the reduced search budget, probing
        // on validation-pool episodes.
        let search_cfg = EvalConfig {
            n_tasks: 100,
            q_query: 8,
            seed: episode_seed,
            ..EvalConfig::default()
        };
        let mut eval = BundleEval::with_query_source(
            &bundle,
            search_cfg,
            strategy_seed,
            QuerySource::Validation,
        )
        .unwrap();
        let outcome =
            acsess_identify(&mut eval, &candidates, &DatamodelsOptions::default(), strategy_seed)
                .unwrap();
        let subset = outcome.combined.subset.clone();
        assert!(!subset.is_empty(), "pair {pair}: empty ACSESS subset");
        let uniform = CombinationWeights::uniform(&subset);
        let mut cache = ScoreCache::new();
        let acc_acsess = evaluate_subset_on_episodes(
            &bundle,
            &subset,
            &uniform,
            &full_cfg,
            strategy_seed,
            &mut cache,
            &episodes,
        )
        .unwrap()
        .mean_accuracy;
        acsess_minus_random.push(acc_acsess - acc_random);

        // Shot trend: the impact of selection at K shots is the gap between
        // the ACSESS selection and the fixed random selection of the same
        // size, on shared episodes. It should shrink as K grows toward the
        // pool size.
        let _ = classic5;
        for (k, sink) in [(1usize, &mut benefit_1), (5, &mut benefit_5), (40, &mut benefit_40)] {
            let k_cfg = EvalConfig {
                k_shot: k,
                seed: episode_seed,
                ..EvalConfig::default()
            };
            let episodes_k = sample_episodes(&bundle, &k_cfg).unwrap();
            let acsess_k = evaluate_subset_on_episodes(
                &bundle,
                &subset,
                &uniform,
                &k_cfg,
                strategy_seed,
                &mut cache,
                &episodes_k,
            )
            .unwrap()
            .mean_accuracy;
            let random_k = select_random_fixed(&bundle, k, strategy_seed).unwrap();
            let random_k_acc =
                evaluate_selection(&bundle, SupportSource::Fixed(&random_k), &episodes_k, &k_cfg)
                    .unwrap()
                    .mean_accuracy;
            sink.push(acsess_k - random_k_acc);
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let oracle_gap = mean(&oracle_minus_random);
    let acsess_gap = mean(&acsess_minus_random);
    let b1 = mean(&benefit_1);
    let b5 = mean(&benefit_5);
    let b40 = mean(&benefit_40);
    println!(
        "trend: oracle-random {oracle_gap:+.4}, acsess-random {acsess_gap:+.4}, \
         selection impact K=1 {b1:+.4} K=5 {b5:+.4} K=40 {b40:+.4}"
    );
    assert!(
        oracle_gap >= 0.04,
        "calibration: oracle gap {oracle_gap:+.4} below +4 points"
    );
    assert!(
        acsess_gap >= 0.02,
        "acsess uniform gap {acsess_gap:+.4} below +2 points"
    );
    assert!(
        b1 > b40,
        "1-shot selection impact {b1:+.4} does not exceed 40-shot impact {b40:+.4}"
    );
    pass(6, "end-to-end trend", start, 300.0);
}

#[test]
fn criterion_7_protocol_fidelity() {
    let start = Instant::now();
    // Default evaluation protocol: exactly 600 episodes x 5 ways x 16
    // queries per class.
    let (bundle, _) = gen_bundle(&GenConfig::default(), 3).unwrap();
    let cfg = EvalConfig::default();
    assert_eq!((cfg.n_tasks, cfg.n_way, cfg.q_query, cfg.k_shot), (600, 5, 16, 5));
    let episodes = sample_episodes(&bundle, &cfg).unwrap();
    assert_eq!(episodes.len(), 600);
    for ep in &episodes {
        assert_eq!(ep.class_ids.len(), 5);
        assert_eq!(ep.query.len(), 5);
        for ids in ep.query.values() {
            assert_eq!(ids.len(), 16);
        }
    }

    // Datamodels protocol through the CLI: 150 combinations, every strategy
    // present at least 5 times, recorded in the emitted trace.
    let dir = std::env::temp_dir().join(format!("acsess-acc7-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let bundle_dir = dir.join("bundle");
    let out = dir.join("search.json");
    assert_eq!(
        acsess_cli::run_cli([
            "acsess",
            "gen",
            "--out",
            bundle_dir.to_str().unwrap(),
            "--per-class",
            "80",
            "--classes",
            "6",
            "--dim",
            "8",
            "--seed",
            "5",
        ]),
        0
    );
    assert_eq!(
        acsess_cli::run_cli([
            "acsess",
            "search",
            "--bundle",
            bundle_dir.to_str().unwrap(),
            "--method",
            "datamodels",
            "--search-tasks",
            "30",
            "--tasks",
            "100",
            "--out",
            out.to_str().unwrap(),
        ]),
        0
    );
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let trace = doc["trace"].as_array().unwrap();
    assert_eq!(trace.len(), 150, "datamodels design must hold 150 combinations");
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for entry in trace {
        for member in entry["subset"].as_array().unwrap() {
            *counts.entry(member.as_str().unwrap().to_string()).or_default() += 1;
        }
    }
    // 20 non-random candidates plus the appended random column.
    assert_eq!(counts.len(), 21);
    for (name, count) in &counts {
        assert!(*count >= 5, "strategy {name} appears {count} < 5 times");
    }
    let _ = std::fs::remove_dir_all(&dir);
    pass(7, "protocol fidelity", start, 120.0);
}

#[test]
fn criterion_8_replay() {
    let start = Instant::now();
    let dir = std::env::temp_dir().join(format!("acsess-acc8-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let run = |args: &[&str]| {
        let mut argv = vec!["acsess"];
        argv.extend_from_slice(args);
        assert_eq!(acsess_cli::run_cli(argv.clone()), 0, "command failed: {argv:?}");
    };
    let mut rng = SeededRng::new(808);
    let strategies = [
        "random",
        "margin",
        "carto_easy",
        "forgetting_least",
        "kcenter",
        "similarity",
        "glister",
        "entropy",
        "graphcut",
        "cal",
    ];
    for pipeline in 0..10 {
        let bundle_dir = dir.join(format!("b{pipeline}"));
        let bundle_str = bundle_dir.to_str().unwrap().to_string();
        let gen_seed = rng.below(1000).to_string();
        run(&[
            "gen",
            "--out",
            &bundle_str,
            "--classes",
            "6",
            "--per-class",
            "30",
            "--dim",
            "8",
            "--noise",
            "0.1",
            "--epochs",
            "10",
            "--seed",
            &gen_seed,
        ]);
        let strategy = strategies[pipeline % strategies.len()];
        let seed = rng.below(1000).to_string();
        let episode_seed = rng.below(1000).to_string();
        // An eval report per pipeline, alternating classic and fixed modes.
        let report = dir.join(format!("r{pipeline}.json"));
        let report_str = report.to_str().unwrap().to_string();
        if pipeline % 3 == 0 {
            run(&[
                "eval",
                "--bundle",
                &bundle_str,
                "--classic",
                "--tasks",
                "80",
                "--queries",
                "6",
                "--episode-seed",
                &episode_seed,
                "--out",
                &report_str,
            ]);
        } else {
            run(&[
                "eval",
                "--bundle",
                &bundle_str,
                "--strategy",
                strategy,
                "--seed",
                &seed,
                "--tasks",
                "80",
                "--queries",
                "6",
                "--episode-seed",
                &episode_seed,
                "--against",
                "classic",
                "--out",
                &report_str,
            ]);
        }
        assert_eq!(
            acsess_cli::run_cli(["acsess", "replay", report_str.as_str()]),
            0,
            "pipeline {pipeline}: eval replay failed"
        );
        // A second artifact type per pipeline.
        match pipeline % 3 {
            0 => {
                let scores = dir.join(format!("s{pipeline}.csv"));
                run(&[
                    "score",
                    "--bundle",
                    &bundle_str,
                    "--strategy",
                    strategy,
                    "--seed",
                    &seed,
                    "--out",
                    scores.to_str().unwrap(),
                ]);
                assert_eq!(
                    acsess_cli::run_cli(["acsess", "replay", scores.to_str().unwrap()]),
                    0
                );
            }
            1 => {
                let sel = dir.join(format!("sel{pipeline}.json"));
                run(&[
                    "select",
                    "--bundle",
                    &bundle_str,
                    "--strategy",
                    strategy,
                    "--k",
                    "3",
                    "--seed",
                    &seed,
                    "--out",
                    sel.to_str().unwrap(),
                ]);
                assert_eq!(
                    acsess_cli::run_cli(["acsess", "replay", sel.to_str().unwrap()]),
                    0
                );
            }
            _ => {
                let sweep = dir.join(format!("sw{pipeline}.csv"));
                run(&[
                    "sweep",
                    "--bundle",
                    &bundle_str,
                    "--strategy",
                    strategy,
                    "--shots",
                    "1,3,5",
                    "--seed",
                    &seed,
                    "--tasks",
                    "40",
                    "--queries",
                    "6",
                    "--episode-seed",
                    &episode_seed,
                    "--out",
                    sweep.to_str().unwrap(),
                ]);
                assert_eq!(
                    acsess_cli::run_cli(["acsess", "replay", sweep.to_str().unwrap()]),
                    0
                );
            }
        }
    }
    let _ = std::fs::remove_dir_all(&dir);
    pass(8, "replay", start, 120.0);
}
