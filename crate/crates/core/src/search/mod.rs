//! Strategy-subset identification: forward selection, backward elimination,
//! and the datamodels route (constrained random designs + a LASSO fit from
//! strategy presence to accuracy deltas), merged by majority vote.
//!
//! The searches are written against the [`SubsetEval`] trait so the tests
//! can substitute scripted utility oracles for the real episodic evaluator.

pub mod lasso;

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::combine::{combine, select_top_k_per_class};
use crate::error::{CoreError, Result};
use crate::eval::{
    evaluate_selection, sample_episodes, sample_episodes_from, Episode, QuerySource, SupportSource,
};
use crate::model::{CombinationWeights, DatasetBundle, EvalConfig, ScoreVector, StrategyId};
use crate::rng::{derive_seed, tags, SeededRng};
use crate::strategies::{canonical_score, StrategyParams};

pub use lasso::{default_lambda_grid, lasso_cv, lasso_fit, LassoCvFit, LassoFit};

/// Measurement primitive shared by the three identification methods:
/// `baseline` is the classic-selection accuracy on the evaluator's fixed
/// episodes, `evaluate` the accuracy of a subset fused with uniform weights.
pub trait SubsetEval {
    fn baseline(&mut self) -> Result<f64>;
    fn evaluate(&mut self, subset: &[StrategyId]) -> Result<f64>;
}

/// Per-(strategy, seed) score-vector cache.
#[derive(Debug, Default)]
pub struct ScoreCache {
    map: BTreeMap<(StrategyId, u64), ScoreVector>,
}

impl ScoreCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get_or_compute(
        &mut self,
        bundle: &DatasetBundle,
        id: StrategyId,
        params: &StrategyParams,
        seed: u64,
    ) -> Result<ScoreVector> {
        if let Some(sv) = self.map.get(&(id, seed)) {
            return Ok(sv.clone());
        }
        let sv = canonical_score(bundle, id, params, seed)?;
        self.map.insert((id, seed), sv.clone());
        Ok(sv)
    }
}

/// Scores every member (through the cache), fuses, selects top-K per class,
/// and returns the mean accuracy on episodes drawn from `cfg`.
pub fn evaluate_subset(
    bundle: &DatasetBundle,
    subset: &[StrategyId],
    weights: &CombinationWeights,
    cfg: &EvalConfig,
    strategy_seed: u64,
    cache: &mut ScoreCache,
) -> Result<f64> {
    let episodes = sample_episodes(bundle, cfg)?;
    evaluate_subset_on_episodes(bundle, subset, weights, cfg, strategy_seed, cache, &episodes)
        .map(|r| r.mean_accuracy)
}

/// Same as [`evaluate_subset`] but reusing a pre-sampled episode list so all
/// evaluations in one experiment are paired.
pub fn evaluate_subset_on_episodes(
    bundle: &DatasetBundle,
    subset: &[StrategyId],
    weights: &CombinationWeights,
    cfg: &EvalConfig,
    strategy_seed: u64,
    cache: &mut ScoreCache,
    episodes: &[Episode],
) -> Result<crate::model::EvalReport> {
    if subset.is_empty() {
        return Err(CoreError::EmptyInput("strategy subset"));
    }
    let params = StrategyParams::default();
    let vectors: Vec<ScoreVector> = subset
        .iter()
        .map(|&id| cache.get_or_compute(bundle, id, &params, strategy_seed))
        .collect::<Result<_>>()?;
    let fused = combine(&vectors, weights, strategy_seed)?;
    let selection = select_top_k_per_class(&fused, bundle, cfg.k_shot)?;
    evaluate_selection(bundle, SupportSource::Fixed(&selection), episodes, cfg)
}

/// Production evaluator: one bundle, one fixed episode list, memoised
/// subset accuracies.
pub struct BundleEval<'a> {
    bundle: &'a DatasetBundle,
    cfg: EvalConfig,
    strategy_seed: u64,
    episodes: Vec<Episode>,
    cache: ScoreCache,
    memo: BTreeMap<Vec<StrategyId>, f64>,
    classic: Option<f64>,
}

impl<'a> BundleEval<'a> {
    pub fn new(bundle: &'a DatasetBundle, cfg: EvalConfig, strategy_seed: u64) -> Result<Self> {
        Self::with_query_source(bundle, cfg, strategy_seed, QuerySource::Query)
    }

    /// Evaluator whose episode queries come from the given pool; searches
    /// probe the validation pool so they never measure on the final queries.
    pub fn with_query_source(
        bundle: &'a DatasetBundle,
        cfg: EvalConfig,
        strategy_seed: u64,
        source: QuerySource,
    ) -> Result<Self> {
        let episodes = sample_episodes_from(bundle, &cfg, source)?;
        Ok(BundleEval {
            bundle,
            cfg,
            strategy_seed,
            episodes,
            cache: ScoreCache::new(),
            memo: BTreeMap::new(),
            classic: None,
        })
    }

    pub fn episodes(&self) -> &[Episode] {
        &self.episodes
    }

    /// Accuracy of a subset under explicit (non-uniform) weights; bypasses
    /// the uniform-weights memo but shares the score cache.
    pub fn evaluate_weighted(
        &mut self,
        subset: &[StrategyId],
        weights: &CombinationWeights,
    ) -> Result<f64> {
        evaluate_subset_on_episodes(
            self.bundle,
            subset,
            weights,
            &self.cfg,
            self.strategy_seed,
            &mut self.cache,
            &self.episodes,
        )
        .map(|r| r.mean_accuracy)
    }
}

impl SubsetEval for BundleEval<'_> {
    fn baseline(&mut self) -> Result<f64> {
        if let Some(acc) = self.classic {
            return Ok(acc);
        }
        let report =
            evaluate_selection(self.bundle, SupportSource::Classic, &self.episodes, &self.cfg)?;
        self.classic = Some(report.mean_accuracy);
        Ok(report.mean_accuracy)
    }

    fn evaluate(&mut self, subset: &[StrategyId]) -> Result<f64> {
        let mut key: Vec<StrategyId> = subset.to_vec();
        key.sort();
        if let Some(&acc) = self.memo.get(&key) {
            return Ok(acc);
        }
        let weights = CombinationWeights::uniform(subset);
        let acc = evaluate_subset_on_episodes(
            self.bundle,
            subset,
            &weights,
            &self.cfg,
            self.strategy_seed,
            &mut self.cache,
            &self.episodes,
        )?
        .mean_accuracy;
        self.memo.insert(key, acc);
        Ok(acc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMethod {
    Forward,
    Backward,
    Datamodels,
    Acsess,
}

impl SearchMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            SearchMethod::Forward => "forward",
            SearchMethod::Backward => "backward",
            SearchMethod::Datamodels => "datamodels",
            SearchMethod::Acsess => "acsess",
        }
    }

    pub fn parse(s: &str) -> Option<SearchMethod> {
        match s {
            "forward" => Some(SearchMethod::Forward),
            "backward" => Some(SearchMethod::Backward),
            "datamodels" => Some(SearchMethod::Datamodels),
            "acsess" => Some(SearchMethod::Acsess),
            _ => None,
        }
    }
}

/// One accepted step of a search (or one measured design combination).
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub subset: Vec<StrategyId>,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub method: SearchMethod,
    pub subset: Vec<StrategyId>,
    /// Fused weights for weighted schemes; `None` when the subset is empty.
    pub weights: Option<CombinationWeights>,
    pub trace: Vec<TraceEntry>,
}

fn uniform_weights_if_nonempty(subset: &[StrategyId]) -> Option<CombinationWeights> {
    if subset.is_empty() {
        None
    } else {
        Some(CombinationWeights::uniform(subset))
    }
}

/// Greedily grows the subset from empty, adding the candidate with the
/// largest strictly positive accuracy improvement each round; ties go to
/// the lexicographically smallest strategy id. The first trace entry is the
/// classic baseline on the empty subset.
pub fn forward_select(
    eval: &mut dyn SubsetEval,
    candidates: &[StrategyId],
) -> Result<SearchResult> {
    if candidates.is_empty() {
        return Err(CoreError::EmptyInput("candidates"));
    }
    let baseline = eval.baseline()?;
    let mut subset: Vec<StrategyId> = Vec::new();
    let mut current = baseline;
    let mut trace = vec![TraceEntry {
        subset: Vec::new(),
        accuracy: baseline,
    }];
    loop {
        let mut best: Option<(StrategyId, f64)> = None;
        for &candidate in candidates {
            if subset.contains(&candidate) {
                continue;
            }
            let mut attempt = subset.clone();
            attempt.push(candidate);
            let acc = eval.evaluate(&attempt)?;
            if acc <= current {
                continue;
            }
            best = Some(match best {
                None => (candidate, acc),
                Some((bid, bacc)) => {
                    if acc > bacc || (acc == bacc && candidate.cmp_lex(bid).is_lt()) {
                        (candidate, acc)
                    } else {
                        (bid, bacc)
                    }
                }
            });
        }
        match best {
            Some((id, acc)) => {
                subset.push(id);
                current = acc;
                trace.push(TraceEntry {
                    subset: subset.clone(),
                    accuracy: acc,
                });
            }
            None => break,
        }
    }
    Ok(SearchResult {
        method: SearchMethod::Forward,
        weights: uniform_weights_if_nonempty(&subset),
        subset,
        trace,
    })
}

/// Mirror image of forward selection: starts from all candidates and
/// removes the member whose removal yields the largest strictly positive
/// improvement, until none does.
pub fn backward_select(
    eval: &mut dyn SubsetEval,
    candidates: &[StrategyId],
) -> Result<SearchResult> {
    if candidates.is_empty() {
        return Err(CoreError::EmptyInput("candidates"));
    }
    let mut subset: Vec<StrategyId> = candidates.to_vec();
    let mut current = eval.evaluate(&subset)?;
    let mut trace = vec![TraceEntry {
        subset: subset.clone(),
        accuracy: current,
    }];
    while subset.len() > 1 {
        let mut best: Option<(StrategyId, f64)> = None;
        for &member in &subset {
            let attempt: Vec<StrategyId> =
                subset.iter().copied().filter(|&s| s != member).collect();
            let acc = eval.evaluate(&attempt)?;
            if acc <= current {
                continue;
            }
            best = Some(match best {
                None => (member, acc),
                Some((bid, bacc)) => {
                    if acc > bacc || (acc == bacc && member.cmp_lex(bid).is_lt()) {
                        (member, acc)
                    } else {
                        (bid, bacc)
                    }
                }
            });
        }
        match best {
            Some((id, acc)) => {
                subset.retain(|&s| s != id);
                current = acc;
                trace.push(TraceEntry {
                    subset: subset.clone(),
                    accuracy: acc,
                });
            }
            None => break,
        }
    }
    Ok(SearchResult {
        method: SearchMethod::Backward,
        weights: uniform_weights_if_nonempty(&subset),
        subset,
        trace,
    })
}

/// Draws `n_combos` strategy presence vectors, each candidate independently
/// with probability 1/2, redrawing empty rows, then forces under-represented
/// candidates into randomly chosen rows until every column count reaches
/// `min_count`.
pub fn sample_constrained_combinations(
    candidates: &[StrategyId],
    n_combos: usize,
    min_count: usize,
    seed: u64,
) -> Result<Vec<Vec<bool>>> {
    if candidates.is_empty() {
        return Err(CoreError::EmptyInput("candidates"));
    }
    if n_combos < min_count {
        return Err(CoreError::InfeasibleDesign { n_combos, min_count });
    }
    let mut rng = SeededRng::new(seed);
    let p = candidates.len();
    let mut rows: Vec<Vec<bool>> = Vec::with_capacity(n_combos);
    for _ in 0..n_combos {
        let row = loop {
            let row: Vec<bool> = (0..p).map(|_| rng.next_f64() < 0.5).collect();
            if row.iter().any(|&b| b) {
                break row;
            }
        };
        rows.push(row);
    }
    for j in 0..p {
        let mut count = rows.iter().filter(|row| row[j]).count();
        while count < min_count {
            let row = rng.below_usize(n_combos);
            if !rows[row][j] {
                rows[row][j] = true;
                count += 1;
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatamodelsOptions {
    pub n_combos: usize,
    pub min_count: usize,
    pub include_random: bool,
    pub folds: usize,
}

impl Default for DatamodelsOptions {
    fn default() -> Self {
        DatamodelsOptions {
            n_combos: 150,
            min_count: 5,
            include_random: true,
            folds: 5,
        }
    }
}

/// Datamodels identification: evaluate the constrained design, regress the
/// accuracy deltas on strategy presence with a cross-validated LASSO, and
/// keep the strategies with strictly positive weight. Positive weights
/// (including the random column's, when present) are renormalised jointly
/// to sum 1.
pub fn datamodels_select(
    eval: &mut dyn SubsetEval,
    candidates: &[StrategyId],
    opts: &DatamodelsOptions,
    seed: u64,
) -> Result<SearchResult> {
    if candidates.is_empty() {
        return Err(CoreError::EmptyInput("candidates"));
    }
    let mut columns: Vec<StrategyId> = candidates.to_vec();
    if opts.include_random && !columns.contains(&StrategyId::Random) {
        columns.push(StrategyId::Random);
    }
    let design_rows = sample_constrained_combinations(&columns, opts.n_combos, opts.min_count, seed)?;
    let baseline = eval.baseline()?;
    let mut design = Vec::with_capacity(design_rows.len() * columns.len());
    let mut targets = Vec::with_capacity(design_rows.len());
    let mut trace = Vec::with_capacity(design_rows.len());
    for row in &design_rows {
        let subset: Vec<StrategyId> = columns
            .iter()
            .zip(row.iter())
            .filter_map(|(&id, &present)| present.then_some(id))
            .collect();
        let acc = eval.evaluate(&subset)?;
        design.extend(row.iter().map(|&b| if b { 1.0 } else { 0.0 }));
        targets.push(acc - baseline);
        trace.push(TraceEntry {
            subset,
            accuracy: acc,
        });
    }
    let cv = lasso_cv(
        &design,
        design_rows.len(),
        columns.len(),
        &targets,
        &default_lambda_grid(),
        opts.folds,
        derive_seed(seed, tags::LASSO_CV),
    )?;
    let mut subset = Vec::new();
    let mut entries = BTreeMap::new();
    let mut random_weight = 0.0;
    let mut total = 0.0;
    for (&id, &w) in columns.iter().zip(cv.fit.weights.iter()) {
        if w > 0.0 {
            total += w;
            if id == StrategyId::Random && opts.include_random {
                random_weight = w;
            } else {
                subset.push(id);
                entries.insert(id, w);
            }
        }
    }
    let weights = if total > 0.0 && !subset.is_empty() {
        for w in entries.values_mut() {
            *w /= total;
        }
        Some(CombinationWeights {
            entries,
            random_weight: random_weight / total,
        })
    } else {
        None
    };
    Ok(SearchResult {
        method: SearchMethod::Datamodels,
        subset,
        weights,
        trace,
    })
}

/// All four results of the combined identification.
#[derive(Debug, Clone, PartialEq)]
pub struct AcsessOutcome {
    pub forward: SearchResult,
    pub backward: SearchResult,
    pub datamodels: SearchResult,
    pub combined: SearchResult,
}

/// Strategies kept by at least two of the three methods, in candidate order.
fn majority_subset(candidates: &[StrategyId], subsets: [&[StrategyId]; 3]) -> Vec<StrategyId> {
    candidates
        .iter()
        .copied()
        .filter(|id| subsets.iter().filter(|s| s.contains(id)).count() >= 2)
        .collect()
}

/// Runs all three identification methods and majority-votes their subsets:
/// a strategy survives if at least two methods kept it. An empty vote falls
/// back to the forward subset. Weights for the weighted scheme come from
/// the datamodels fit restricted to the final subset; members the fit did
/// not rank positively get the minimum positive member weight (uniform when
/// no member was ranked).
pub fn acsess_identify(
    eval: &mut dyn SubsetEval,
    candidates: &[StrategyId],
    opts: &DatamodelsOptions,
    seed: u64,
) -> Result<AcsessOutcome> {
    let forward = forward_select(eval, candidates)?;
    let backward = backward_select(eval, candidates)?;
    let datamodels = datamodels_select(eval, candidates, opts, seed)?;

    let mut subset = majority_subset(
        candidates,
        [&forward.subset, &backward.subset, &datamodels.subset],
    );
    if subset.is_empty() {
        subset = forward.subset.clone();
    }

    let weights = if subset.is_empty() {
        None
    } else {
        let dm_weights = datamodels.weights.as_ref();
        let positives: Vec<f64> = subset
            .iter()
            .filter_map(|id| dm_weights.and_then(|w| w.entries.get(id)).copied())
            .filter(|&w| w > 0.0)
            .collect();
        let floor = positives.iter().copied().fold(f64::INFINITY, f64::min);
        let mut entries = BTreeMap::new();
        for &id in &subset {
            let w = dm_weights
                .and_then(|w| w.entries.get(&id))
                .copied()
                .filter(|&w| w > 0.0)
                .unwrap_or(if floor.is_finite() { floor } else { 1.0 });
            entries.insert(id, w);
        }
        let total: f64 = entries.values().sum();
        for w in entries.values_mut() {
            *w /= total;
        }
        Some(CombinationWeights {
            entries,
            random_weight: dm_weights.map_or(0.0, |w| w.random_weight),
        })
    };

    let mut trace = forward.trace.clone();
    trace.extend(backward.trace.iter().cloned());
    trace.extend(datamodels.trace.iter().cloned());
    let combined = SearchResult {
        method: SearchMethod::Acsess,
        subset,
        weights,
        trace,
    };
    Ok(AcsessOutcome {
        forward,
        backward,
        datamodels,
        combined,
    })
}
