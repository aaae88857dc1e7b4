//! Greedy coreset orderings over the select pool.
//!
//! Herding and CRAIG run per class and their per-class orderings are
//! interleaved round-robin by pick step, so the t-th pick of every class
//! lands at a comparable rank; k-center, graph-cut and Glister order the
//! pool globally. Ties always break toward the lowest sample id.
//!
//! `score_greedy` maps rank r in the full ordering of the pool (size P) to
//! the score (P - r) / P, so earlier picks are preferred and samples outside
//! the select pool sit at 0.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::math;
use crate::model::{DatasetBundle, LinearHead, ScoreSource, ScoreVector, StrategyId};
use crate::strategies::gradient::gradient_proxy;
use crate::strategies::{argmax_tie_lowest, check_labels, cosine, dist_sq};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GreedyMethod {
    Herding,
    Kcenter,
    Graphcut,
    Craig,
    Glister,
}

impl GreedyMethod {
    pub fn strategy_id(self) -> StrategyId {
        match self {
            GreedyMethod::Herding => StrategyId::Herding,
            GreedyMethod::Kcenter => StrategyId::Kcenter,
            GreedyMethod::Graphcut => StrategyId::Graphcut,
            GreedyMethod::Craig => StrategyId::Craig,
            GreedyMethod::Glister => StrategyId::Glister,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreedyParams {
    pub graphcut_lambda: f64,
    pub glister_eta: f64,
}

impl Default for GreedyParams {
    fn default() -> Self {
        GreedyParams {
            graphcut_lambda: 1.0,
            glister_eta: 0.01,
        }
    }
}

/// Full greedy ordering of the select pool.
pub fn greedy_order(
    bundle: &DatasetBundle,
    method: GreedyMethod,
    params: &GreedyParams,
) -> Result<Vec<usize>> {
    let pool = bundle.select_pool();
    if pool.is_empty() {
        return Err(CoreError::EmptyPool);
    }
    match method {
        GreedyMethod::Herding => Ok(interleave(per_class_orders(bundle, |class_pool| {
            Ok(herding_order(bundle, class_pool))
        })?)),
        GreedyMethod::Kcenter => Ok(kcenter_order(bundle, &pool)),
        GreedyMethod::Graphcut => Ok(graphcut_order_with_gains(bundle, params)?.0),
        GreedyMethod::Craig => Ok(interleave(per_class_orders(bundle, |class_pool| {
            Ok(craig_order_with_gains(bundle, class_pool)?.0)
        })?)),
        GreedyMethod::Glister => glister_order(bundle, &pool, params),
    }
}

/// First `budget` entries of the full ordering.
pub fn greedy_coreset(
    bundle: &DatasetBundle,
    method: GreedyMethod,
    budget: usize,
    params: &GreedyParams,
) -> Result<Vec<usize>> {
    let pool_size = bundle.select_pool().len();
    if budget > pool_size {
        return Err(CoreError::BudgetTooLarge {
            budget,
            pool: pool_size,
        });
    }
    let mut order = greedy_order(bundle, method, params)?;
    order.truncate(budget);
    Ok(order)
}

/// Rank score (P - r) / P over the full pool ordering; non-pool samples 0.
pub fn score_greedy(
    bundle: &DatasetBundle,
    method: GreedyMethod,
    params: &GreedyParams,
) -> Result<ScoreVector> {
    let order = greedy_order(bundle, method, params)?;
    let p = order.len() as f64;
    let mut scores = vec![0.0; bundle.n_samples()];
    for (rank, &id) in order.iter().enumerate() {
        scores[id] = (p - rank as f64) / p;
    }
    Ok(ScoreVector::new(
        ScoreSource::Strategy(method.strategy_id()),
        0,
        scores,
    ))
}

fn per_class_orders(
    bundle: &DatasetBundle,
    order_one: impl Fn(&[usize]) -> Result<Vec<usize>>,
) -> Result<Vec<Vec<usize>>> {
    check_labels(bundle)?;
    let mut orders = Vec::new();
    for class_pool in bundle.class_select_pools() {
        if class_pool.is_empty() {
            orders.push(Vec::new());
        } else {
            orders.push(order_one(&class_pool)?);
        }
    }
    Ok(orders)
}

/// Round-robin merge by pick step: step 0 of every class, then step 1, ...
fn interleave(orders: Vec<Vec<usize>>) -> Vec<usize> {
    let longest = orders.iter().map(Vec::len).max().unwrap_or(0);
    let mut merged = Vec::with_capacity(orders.iter().map(Vec::len).sum());
    for step in 0..longest {
        for order in &orders {
            if let Some(&id) = order.get(step) {
                merged.push(id);
            }
        }
    }
    merged
}

/// Classic herding within one class: w starts at the class mean, each pick
/// maximises <w, h>, then w += mean - h_pick.
fn herding_order(bundle: &DatasetBundle, class_pool: &[usize]) -> Vec<usize> {
    let d = bundle.embed_dim();
    let mut mean = vec![0.0; d];
    for &i in class_pool {
        for (m, &x) in mean.iter_mut().zip(bundle.embedding(i)) {
            *m += x;
        }
    }
    for m in mean.iter_mut() {
        *m /= class_pool.len() as f64;
    }
    let mut w = mean.clone();
    let mut remaining: Vec<usize> = class_pool.to_vec();
    let mut order = Vec::with_capacity(class_pool.len());
    while !remaining.is_empty() {
        let pick = argmax_tie_lowest(&remaining, |i| {
            w.iter()
                .zip(bundle.embedding(i))
                .map(|(a, b)| a * b)
                .sum::<f64>()
        })
        .expect("remaining non-empty");
        for ((wv, &m), &h) in w.iter_mut().zip(mean.iter()).zip(bundle.embedding(pick)) {
            *wv += m - h;
        }
        remaining.retain(|&i| i != pick);
        order.push(pick);
    }
    order
}

/// Farthest-first traversal: the first centre is the sample farthest from
/// the pool mean, each later centre the sample farthest from the centres.
fn kcenter_order(bundle: &DatasetBundle, pool: &[usize]) -> Vec<usize> {
    let d = bundle.embed_dim();
    let mut mean = vec![0.0; d];
    for &i in pool {
        for (m, &x) in mean.iter_mut().zip(bundle.embedding(i)) {
            *m += x;
        }
    }
    for m in mean.iter_mut() {
        *m /= pool.len() as f64;
    }
    let first = argmax_tie_lowest(pool, |i| dist_sq(bundle.embedding(i), &mean))
        .expect("pool non-empty");
    let mut order = vec![first];
    let mut min_dist: Vec<(usize, f64)> = pool
        .iter()
        .copied()
        .filter(|&i| i != first)
        .map(|i| (i, dist_sq(bundle.embedding(i), bundle.embedding(first))))
        .collect();
    while !min_dist.is_empty() {
        let mut best = 0;
        for idx in 1..min_dist.len() {
            let (i, dist) = min_dist[idx];
            let (bi, bd) = min_dist[best];
            if dist > bd || (dist == bd && i < bi) {
                best = idx;
            }
        }
        let (pick, _) = min_dist.swap_remove(best);
        order.push(pick);
        for entry in min_dist.iter_mut() {
            let dist = dist_sq(bundle.embedding(entry.0), bundle.embedding(pick));
            if dist < entry.1 {
                entry.1 = dist;
            }
        }
    }
    order
}

/// Greedy graph-cut ordering with the marginal gain recorded per pick.
///
/// Objective: f(S) = sum_{i not in S} sum_{j in S} sim(i,j)
///                 - lambda * sum_{i<j in S} 2 sim(i,j),
/// sim = (1 + cosine)/2. The marginal gain of adding x reduces to
/// total_sim(x) - (2 + 2 lambda) * sim_to_selected(x).
pub fn graphcut_order_with_gains(
    bundle: &DatasetBundle,
    params: &GreedyParams,
) -> Result<(Vec<usize>, Vec<f64>)> {
    let pool = bundle.select_pool();
    if pool.is_empty() {
        return Err(CoreError::EmptyPool);
    }
    let p = pool.len();
    let mut sims = vec![0.0; p * p];
    for a in 0..p {
        for b in (a + 1)..p {
            let sim = 0.5 * (1.0 + cosine(bundle.embedding(pool[a]), bundle.embedding(pool[b])));
            sims[a * p + b] = sim;
            sims[b * p + a] = sim;
        }
    }
    let total_sim: Vec<f64> = (0..p).map(|a| sims[a * p..(a + 1) * p].iter().sum()).collect();
    let coeff = 2.0 + 2.0 * params.graphcut_lambda;
    let mut sim_to_selected = vec![0.0; p];
    let mut picked = vec![false; p];
    let mut order = Vec::with_capacity(p);
    let mut gains = Vec::with_capacity(p);
    for _ in 0..p {
        let mut best: Option<(usize, f64)> = None;
        for idx in 0..p {
            if picked[idx] {
                continue;
            }
            let gain = total_sim[idx] - coeff * sim_to_selected[idx];
            match best {
                None => best = Some((idx, gain)),
                Some((bi, bg)) => {
                    if gain > bg || (gain == bg && pool[idx] < pool[bi]) {
                        best = Some((idx, gain));
                    }
                }
            }
        }
        let (idx, gain) = best.expect("unpicked candidates remain");
        picked[idx] = true;
        order.push(pool[idx]);
        gains.push(gain);
        for other in 0..p {
            if !picked[other] {
                sim_to_selected[other] += sims[other * p + idx];
            }
        }
    }
    Ok((order, gains))
}

/// Facility-location greedy over gradient proxies within one class, with
/// gains. Similarity: sim(i,j) = Delta - ||g_i - g_j||, Delta = the class
/// pool's max pairwise proxy distance. Proxies come from the final epoch of
/// run 0.
pub fn craig_order_with_gains(
    bundle: &DatasetBundle,
    class_pool: &[usize],
) -> Result<(Vec<usize>, Vec<f64>)> {
    if !bundle.has_prob_trace() {
        return Err(CoreError::MissingProbTrace);
    }
    let last_epoch = bundle.n_epochs() - 1;
    let p = class_pool.len();
    let proxies: Vec<Vec<f64>> = class_pool
        .iter()
        .map(|&i| {
            bundle.prob_row(0, last_epoch, i).map(|row| {
                gradient_proxy(row, bundle.label(i), bundle.embedding(i)).components
            })
        })
        .collect::<Result<_>>()?;
    let mut dists = vec![0.0; p * p];
    let mut delta = 0.0f64;
    for a in 0..p {
        for b in (a + 1)..p {
            let dist = math::sqrt(dist_sq(&proxies[a], &proxies[b]));
            dists[a * p + b] = dist;
            dists[b * p + a] = dist;
            if dist > delta {
                delta = dist;
            }
        }
    }
    // Facility location F(S) = sum_i max_{j in S} (delta - dist(i, j)),
    // F(empty) = 0, tracked incrementally through per-sample best coverage.
    let mut coverage = vec![0.0; p];
    let mut picked = vec![false; p];
    let mut order = Vec::with_capacity(p);
    let mut gains = Vec::with_capacity(p);
    for _ in 0..p {
        let mut best: Option<(usize, f64)> = None;
        for cand in 0..p {
            if picked[cand] {
                continue;
            }
            let mut gain = 0.0;
            for i in 0..p {
                let sim = delta - dists[i * p + cand];
                if sim > coverage[i] {
                    gain += sim - coverage[i];
                }
            }
            match best {
                None => best = Some((cand, gain)),
                Some((bi, bg)) => {
                    if gain > bg || (gain == bg && class_pool[cand] < class_pool[bi]) {
                        best = Some((cand, gain));
                    }
                }
            }
        }
        let (cand, gain) = best.expect("unpicked candidates remain");
        picked[cand] = true;
        order.push(class_pool[cand]);
        gains.push(gain);
        for i in 0..p {
            let sim = delta - dists[i * p + cand];
            if sim > coverage[i] {
                coverage[i] = sim;
            }
        }
    }
    Ok((order, gains))
}

/// One-step-Taylor bilevel ordering: repeatedly take the select-pool sample
/// whose gradient proxy aligns best with the validation-pool mean proxy,
/// fold it into the head with step `eta`, and refresh probabilities and
/// proxies from the updated head.
fn glister_order(
    bundle: &DatasetBundle,
    pool: &[usize],
    params: &GreedyParams,
) -> Result<Vec<usize>> {
    if !bundle.has_prob_trace() {
        return Err(CoreError::MissingProbTrace);
    }
    let head = bundle.head().ok_or(CoreError::MissingHead)?;
    check_labels(bundle)?;
    let validation = bundle.validation_pool();
    if validation.is_empty() {
        return Err(CoreError::EmptyValidationPool);
    }
    let c = bundle.n_classes();
    let d = bundle.embed_dim();
    let last_epoch = bundle.n_epochs() - 1;

    let mut weight = head.weight.clone();
    let mut bias = head.bias.clone();

    // Initial proxies come from the recorded final-epoch probabilities; after
    // every head update they are recomputed from the updated head.
    let proxy_for = |i: usize, probs: &dyn Fn(usize) -> Vec<f64>| -> Vec<f64> {
        gradient_proxy(&probs(i), bundle.label(i), bundle.embedding(i)).components
    };
    let recorded = |i: usize| -> Vec<f64> {
        bundle
            .prob_row(0, last_epoch, i)
            .expect("epoch in range")
            .to_vec()
    };

    let mut pool_proxies: Vec<Vec<f64>> = pool.iter().map(|&i| proxy_for(i, &recorded)).collect();
    let mut val_mean = mean_proxy(&validation, &|i| proxy_for(i, &recorded), c * (d + 1));

    let mut remaining: Vec<usize> = (0..pool.len()).collect();
    let mut order = Vec::with_capacity(pool.len());
    while !remaining.is_empty() {
        let mut best: Option<(usize, f64)> = None;
        for &idx in &remaining {
            let score: f64 = pool_proxies[idx]
                .iter()
                .zip(val_mean.iter())
                .map(|(a, b)| a * b)
                .sum();
            match best {
                None => best = Some((idx, score)),
                Some((bi, bs)) => {
                    if score > bs || (score == bs && pool[idx] < pool[bi]) {
                        best = Some((idx, score));
                    }
                }
            }
        }
        let (idx, _) = best.expect("remaining non-empty");
        order.push(pool[idx]);
        remaining.retain(|&r| r != idx);
        if remaining.is_empty() {
            break;
        }
        // Fold the picked gradient into the head.
        let g = &pool_proxies[idx];
        for class in 0..c {
            for dim in 0..d {
                weight[class * d + dim] -= params.glister_eta * g[class * d + dim];
            }
            bias[class] -= params.glister_eta * g[c * d + class];
        }
        // Refresh proxies and the validation mean from the updated head.
        let updated_head = LinearHead {
            weight: weight.clone(),
            bias: bias.clone(),
        };
        let head_probs = |i: usize| -> Vec<f64> { head_softmax(bundle, &updated_head, i) };
        for &idx in &remaining {
            pool_proxies[idx] = proxy_for(pool[idx], &head_probs);
        }
        val_mean = mean_proxy(&validation, &|i| proxy_for(i, &head_probs), c * (d + 1));
    }
    Ok(order)
}

fn mean_proxy(ids: &[usize], proxy_for: &dyn Fn(usize) -> Vec<f64>, len: usize) -> Vec<f64> {
    let mut mean = vec![0.0; len];
    for &i in ids {
        for (m, v) in mean.iter_mut().zip(proxy_for(i)) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= ids.len() as f64;
    }
    mean
}

fn head_softmax(bundle: &DatasetBundle, head: &LinearHead, sample: usize) -> Vec<f64> {
    let d = bundle.embed_dim();
    let h = bundle.embedding(sample);
    let mut logits: Vec<f64> = (0..bundle.n_classes())
        .map(|class| {
            head.weight_row(class, d)
                .iter()
                .zip(h.iter())
                .map(|(w, x)| w * x)
                .sum::<f64>()
                + head.bias[class]
        })
        .collect();
    crate::math::softmax_in_place(&mut logits);
    logits
}
