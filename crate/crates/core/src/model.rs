//! Shared data model: the dataset bundle every strategy reads, score and
//! selection containers, strategy identifiers, and evaluation configuration.
//!
//! Score orientation is a crate-wide contract: a strictly larger score means
//! strictly more preferred for selection. Strategies whose natural statistic
//! runs the other way (margin, DeepFool distance, least-forgotten counts)
//! negate before emitting.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{CoreError, Result};
use crate::math;

/// Which pool a sample belongs to. Strategies select from the select pool,
/// episodes query the query pool, and Glister's outer objective reads the
/// validation pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PoolTag {
    Select,
    Query,
    Validation,
}

impl PoolTag {
    pub fn as_u32(self) -> u32 {
        match self {
            PoolTag::Select => 0,
            PoolTag::Query => 1,
            PoolTag::Validation => 2,
        }
    }

    pub fn from_u32(v: u32) -> Option<PoolTag> {
        match v {
            0 => Some(PoolTag::Select),
            1 => Some(PoolTag::Query),
            2 => Some(PoolTag::Validation),
            _ => None,
        }
    }
}

/// The closed catalog of selection strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StrategyId {
    Random,
    Similarity,
    Diversity,
    Entropy,
    Margin,
    LeastConfidence,
    Loss,
    Cal,
    Craig,
    Deepfool,
    ForgettingMost,
    ForgettingLeast,
    Glister,
    Grand,
    Herding,
    Kcenter,
    Graphcut,
    CartoEasy,
    CartoAmbiguous,
    CartoHard,
    CartoEasyAmbiguous,
}

impl StrategyId {
    pub const ALL: [StrategyId; 21] = [
        StrategyId::Random,
        StrategyId::Similarity,
        StrategyId::Diversity,
        StrategyId::Entropy,
        StrategyId::Margin,
        StrategyId::LeastConfidence,
        StrategyId::Loss,
        StrategyId::Cal,
        StrategyId::Craig,
        StrategyId::Deepfool,
        StrategyId::ForgettingMost,
        StrategyId::ForgettingLeast,
        StrategyId::Glister,
        StrategyId::Grand,
        StrategyId::Herding,
        StrategyId::Kcenter,
        StrategyId::Graphcut,
        StrategyId::CartoEasy,
        StrategyId::CartoAmbiguous,
        StrategyId::CartoHard,
        StrategyId::CartoEasyAmbiguous,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyId::Random => "random",
            StrategyId::Similarity => "similarity",
            StrategyId::Diversity => "diversity",
            StrategyId::Entropy => "entropy",
            StrategyId::Margin => "margin",
            StrategyId::LeastConfidence => "least_confidence",
            StrategyId::Loss => "loss",
            StrategyId::Cal => "cal",
            StrategyId::Craig => "craig",
            StrategyId::Deepfool => "deepfool",
            StrategyId::ForgettingMost => "forgetting_most",
            StrategyId::ForgettingLeast => "forgetting_least",
            StrategyId::Glister => "glister",
            StrategyId::Grand => "grand",
            StrategyId::Herding => "herding",
            StrategyId::Kcenter => "kcenter",
            StrategyId::Graphcut => "graphcut",
            StrategyId::CartoEasy => "carto_easy",
            StrategyId::CartoAmbiguous => "carto_ambiguous",
            StrategyId::CartoHard => "carto_hard",
            StrategyId::CartoEasyAmbiguous => "carto_easy_ambiguous",
        }
    }

    pub fn parse(s: &str) -> Option<StrategyId> {
        StrategyId::ALL.iter().copied().find(|id| id.as_str() == s)
    }

    /// Lexicographic order on the textual id; the tie-break order used by
    /// the search procedures.
    pub fn cmp_lex(self, other: StrategyId) -> core::cmp::Ordering {
        self.as_str().cmp(other.as_str())
    }
}

impl fmt::Display for StrategyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Linear classifier head: `weight` is C x d row-major, `bias` has length C.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LinearHead {
    pub fn weight_row(&self, class: usize, embed_dim: usize) -> &[f64] {
        &self.weight[class * embed_dim..(class + 1) * embed_dim]
    }
}

/// The single input artifact every strategy reads: embeddings, labels,
/// optional training-dynamics traces, an optional linear head, and pool tags.
///
/// Arrays are flat row-major with the last axis fastest:
/// `embeddings` is n x d, `prob_trace` is R x E x n x C, `loss_trace` is
/// R x E x n. Construction checks shapes (indexing would otherwise be
/// unsound); value-level invariants are reported by [`validate_bundle`].
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    n_samples: usize,
    n_classes: usize,
    embed_dim: usize,
    n_runs: usize,
    n_epochs: usize,
    embeddings: Vec<f64>,
    labels: Vec<u32>,
    prob_trace: Option<Vec<f64>>,
    loss_trace: Option<Vec<f64>>,
    head: Option<LinearHead>,
    pool_tags: Vec<PoolTag>,
}

impl DatasetBundle {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n_classes: usize,
        embed_dim: usize,
        n_runs: usize,
        n_epochs: usize,
        embeddings: Vec<f64>,
        labels: Vec<u32>,
        prob_trace: Option<Vec<f64>>,
        loss_trace: Option<Vec<f64>>,
        head: Option<LinearHead>,
        pool_tags: Vec<PoolTag>,
    ) -> Result<DatasetBundle> {
        if n_classes == 0 || embed_dim == 0 || n_runs == 0 || n_epochs == 0 {
            return Err(CoreError::BadConfig("counts must be positive"));
        }
        let n_samples = labels.len();
        if n_samples == 0 {
            return Err(CoreError::EmptyInput("labels"));
        }
        let check = |what, expected, got| {
            if expected != got {
                Err(CoreError::ShapeMismatch {
                    what,
                    expected,
                    got,
                })
            } else {
                Ok(())
            }
        };
        check("embeddings", n_samples * embed_dim, embeddings.len())?;
        check("pool_tags", n_samples, pool_tags.len())?;
        if let Some(pt) = &prob_trace {
            check("prob_trace", n_runs * n_epochs * n_samples * n_classes, pt.len())?;
        }
        if let Some(lt) = &loss_trace {
            check("loss_trace", n_runs * n_epochs * n_samples, lt.len())?;
        }
        if let Some(h) = &head {
            check("head.weight", n_classes * embed_dim, h.weight.len())?;
            check("head.bias", n_classes, h.bias.len())?;
        }
        Ok(DatasetBundle {
            n_samples,
            n_classes,
            embed_dim,
            n_runs,
            n_epochs,
            embeddings,
            labels,
            prob_trace,
            loss_trace,
            head,
            pool_tags,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }
    pub fn n_classes(&self) -> usize {
        self.n_classes
    }
    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }
    pub fn n_runs(&self) -> usize {
        self.n_runs
    }
    pub fn n_epochs(&self) -> usize {
        self.n_epochs
    }
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }
    pub fn label(&self, sample: usize) -> u32 {
        self.labels[sample]
    }
    pub fn pool_tags(&self) -> &[PoolTag] {
        &self.pool_tags
    }
    pub fn tag(&self, sample: usize) -> PoolTag {
        self.pool_tags[sample]
    }
    pub fn embeddings(&self) -> &[f64] {
        &self.embeddings
    }
    pub fn embedding(&self, sample: usize) -> &[f64] {
        &self.embeddings[sample * self.embed_dim..(sample + 1) * self.embed_dim]
    }
    pub fn head(&self) -> Option<&LinearHead> {
        self.head.as_ref()
    }
    pub fn prob_trace(&self) -> Option<&[f64]> {
        self.prob_trace.as_deref()
    }
    pub fn loss_trace(&self) -> Option<&[f64]> {
        self.loss_trace.as_deref()
    }

    pub fn has_prob_trace(&self) -> bool {
        self.prob_trace.is_some()
    }
    pub fn has_loss_trace(&self) -> bool {
        self.loss_trace.is_some()
    }

    /// Probability row for (run, epoch, sample): length C.
    pub fn prob_row(&self, run: usize, epoch: usize, sample: usize) -> Result<&[f64]> {
        let pt = self.prob_trace.as_ref().ok_or(CoreError::MissingProbTrace)?;
        if run >= self.n_runs || epoch >= self.n_epochs {
            return Err(CoreError::TraceIndexOutOfRange {
                run,
                epoch,
                runs: self.n_runs,
                epochs: self.n_epochs,
            });
        }
        let base = ((run * self.n_epochs + epoch) * self.n_samples + sample) * self.n_classes;
        Ok(&pt[base..base + self.n_classes])
    }

    pub fn loss_at(&self, run: usize, epoch: usize, sample: usize) -> Result<f64> {
        let lt = self.loss_trace.as_ref().ok_or(CoreError::MissingLossTrace)?;
        if run >= self.n_runs || epoch >= self.n_epochs {
            return Err(CoreError::TraceIndexOutOfRange {
                run,
                epoch,
                runs: self.n_runs,
                epochs: self.n_epochs,
            });
        }
        Ok(lt[(run * self.n_epochs + epoch) * self.n_samples + sample])
    }

    /// Sample ids in the select pool, ascending.
    pub fn select_pool(&self) -> Vec<usize> {
        self.pool(PoolTag::Select)
    }
    pub fn query_pool(&self) -> Vec<usize> {
        self.pool(PoolTag::Query)
    }
    pub fn validation_pool(&self) -> Vec<usize> {
        self.pool(PoolTag::Validation)
    }

    fn pool(&self, tag: PoolTag) -> Vec<usize> {
        (0..self.n_samples).filter(|&i| self.pool_tags[i] == tag).collect()
    }

    /// Select-pool ids grouped per class, ascending ids, all classes present
    /// (possibly with empty lists).
    pub fn class_select_pools(&self) -> Vec<Vec<usize>> {
        self.class_pools(PoolTag::Select)
    }
    pub fn class_query_pools(&self) -> Vec<Vec<usize>> {
        self.class_pools(PoolTag::Query)
    }
    pub fn class_validation_pools(&self) -> Vec<Vec<usize>> {
        self.class_pools(PoolTag::Validation)
    }

    fn class_pools(&self, tag: PoolTag) -> Vec<Vec<usize>> {
        let mut pools = alloc::vec![Vec::new(); self.n_classes];
        for i in 0..self.n_samples {
            if self.pool_tags[i] == tag {
                let class = self.labels[i] as usize;
                if class < self.n_classes {
                    pools[class].push(i);
                }
            }
        }
        pools
    }
}

/// One value-level invariant violation found by [`validate_bundle`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    ProbRowSum {
        run: usize,
        epoch: usize,
        sample: usize,
        sum: f64,
    },
    LabelOutOfRange {
        sample: usize,
        label: u32,
    },
    NonFiniteEmbedding {
        sample: usize,
        dim: usize,
    },
    NonFiniteProb {
        run: usize,
        epoch: usize,
        sample: usize,
    },
    NegativeOrNonFiniteLoss {
        run: usize,
        epoch: usize,
        sample: usize,
        value: f64,
    },
    NonFiniteHead,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ProbRowSum {
                run,
                epoch,
                sample,
                sum,
            } => write!(
                f,
                "prob_trace row (run {run}, epoch {epoch}, sample {sample}) sums to {sum}, not 1"
            ),
            Violation::LabelOutOfRange { sample, label } => {
                write!(f, "label out of range: sample {sample} has label {label}")
            }
            Violation::NonFiniteEmbedding { sample, dim } => {
                write!(f, "non-finite embedding at sample {sample}, dim {dim}")
            }
            Violation::NonFiniteProb { run, epoch, sample } => write!(
                f,
                "non-finite probability at (run {run}, epoch {epoch}, sample {sample})"
            ),
            Violation::NegativeOrNonFiniteLoss {
                run,
                epoch,
                sample,
                value,
            } => write!(
                f,
                "loss at (run {run}, epoch {epoch}, sample {sample}) is {value}"
            ),
            Violation::NonFiniteHead => write!(f, "non-finite value in head"),
        }
    }
}

const PROB_ROW_SUM_TOL: f64 = 1e-5;

/// Checks every value-level bundle invariant and returns the violations
/// found. Pure: never mutates the bundle, and two calls return identical
/// reports. An empty list means the bundle is well formed.
pub fn validate_bundle(bundle: &DatasetBundle) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = bundle.n_samples();
    let c = bundle.n_classes();
    for i in 0..n {
        let label = bundle.label(i);
        if label as usize >= c {
            out.push(Violation::LabelOutOfRange { sample: i, label });
        }
        for (d, &v) in bundle.embedding(i).iter().enumerate() {
            if !v.is_finite() {
                out.push(Violation::NonFiniteEmbedding { sample: i, dim: d });
            }
        }
    }
    if bundle.has_prob_trace() {
        for run in 0..bundle.n_runs() {
            for epoch in 0..bundle.n_epochs() {
                for i in 0..n {
                    let row = bundle.prob_row(run, epoch, i).expect("shape checked");
                    if row.iter().any(|p| !p.is_finite()) {
                        out.push(Violation::NonFiniteProb {
                            run,
                            epoch,
                            sample: i,
                        });
                        continue;
                    }
                    let sum: f64 = row.iter().sum();
                    if math::abs(sum - 1.0) > PROB_ROW_SUM_TOL {
                        out.push(Violation::ProbRowSum {
                            run,
                            epoch,
                            sample: i,
                            sum,
                        });
                    }
                }
            }
        }
    }
    if bundle.has_loss_trace() {
        for run in 0..bundle.n_runs() {
            for epoch in 0..bundle.n_epochs() {
                for i in 0..n {
                    let v = bundle.loss_at(run, epoch, i).expect("shape checked");
                    if !v.is_finite() || v < 0.0 {
                        out.push(Violation::NegativeOrNonFiniteLoss {
                            run,
                            epoch,
                            sample: i,
                            value: v,
                        });
                    }
                }
            }
        }
    }
    if let Some(head) = bundle.head() {
        if head.weight.iter().chain(head.bias.iter()).any(|v| !v.is_finite()) {
            out.push(Violation::NonFiniteHead);
        }
    }
    out
}

/// What produced a score vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreSource {
    Strategy(StrategyId),
    Combined,
}

impl fmt::Display for ScoreSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScoreSource::Strategy(id) => f.write_str(id.as_str()),
            ScoreSource::Combined => f.write_str("combined"),
        }
    }
}

/// Per-sample scores under the convention "higher = preferred".
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub source: ScoreSource,
    pub seed: u64,
    pub scores: Vec<f64>,
}

impl ScoreVector {
    pub fn new(source: ScoreSource, seed: u64, scores: Vec<f64>) -> ScoreVector {
        ScoreVector {
            source,
            seed,
            scores,
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Balanced per-class selection: exactly `k_per_class` ordered ids per class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    pub k_per_class: usize,
    pub per_class: BTreeMap<u32, Vec<u32>>,
}

impl Selection {
    /// Checks the structural invariants against a bundle: list lengths,
    /// distinctness, label agreement, select-pool membership.
    pub fn validate(&self, bundle: &DatasetBundle) -> Result<()> {
        let mut seen: BTreeMap<u32, u32> = BTreeMap::new();
        for (&class, ids) in &self.per_class {
            if ids.len() != self.k_per_class {
                return Err(CoreError::InsufficientPool {
                    class,
                    have: ids.len(),
                    need: self.k_per_class,
                });
            }
            for &id in ids {
                let sample = id as usize;
                if sample >= bundle.n_samples()
                    || bundle.label(sample) != class
                    || bundle.tag(sample) != PoolTag::Select
                {
                    return Err(CoreError::BadConfig(
                        "selection id outside its class's select pool",
                    ));
                }
                if seen.insert(id, class).is_some() {
                    return Err(CoreError::BadConfig("selection repeats a sample id"));
                }
            }
        }
        Ok(())
    }
}

/// Nonnegative fusion weights over strategies, plus the weight of the extra
/// uniformly random score.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinationWeights {
    pub entries: BTreeMap<StrategyId, f64>,
    pub random_weight: f64,
}

impl CombinationWeights {
    pub fn uniform(subset: &[StrategyId]) -> CombinationWeights {
        let entries = subset.iter().map(|&id| (id, 1.0)).collect();
        CombinationWeights {
            entries,
            random_weight: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut any_positive = self.random_weight > 0.0;
        for (&id, &w) in &self.entries {
            if !w.is_finite() || w < 0.0 {
                return Err(CoreError::NonFinite("combination weight"));
            }
            let _ = id;
            any_positive |= w > 0.0;
        }
        if !self.random_weight.is_finite() || self.random_weight < 0.0 {
            return Err(CoreError::NonFinite("random weight"));
        }
        if !any_positive {
            return Err(CoreError::ZeroWeights);
        }
        Ok(())
    }
}

/// Distance used by the nearest-centroid classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Distance {
    Euclidean,
    Cosine,
}

impl Distance {
    pub fn as_str(self) -> &'static str {
        match self {
            Distance::Euclidean => "euclidean",
            Distance::Cosine => "cosine",
        }
    }

    pub fn parse(s: &str) -> Option<Distance> {
        match s {
            "euclidean" => Some(Distance::Euclidean),
            "cosine" => Some(Distance::Cosine),
            _ => None,
        }
    }
}

/// Episodic evaluation protocol parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    /// Classes per episode (N).
    pub n_way: usize,
    /// Support samples per class (K).
    pub k_shot: usize,
    /// Query samples per class (Q).
    pub q_query: usize,
    /// Episodes per evaluation (T).
    pub n_tasks: usize,
    pub distance: Distance,
    /// Episode seed: drives class and query draws (and, via a derived
    /// stream, classic-baseline support draws).
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n_way: 5,
            k_shot: 5,
            q_query: 16,
            n_tasks: 600,
            distance: Distance::Euclidean,
            seed: 0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_way == 0 || self.k_shot == 0 || self.q_query == 0 || self.n_tasks == 0 {
            return Err(CoreError::BadConfig("all evaluation counts must be positive"));
        }
        Ok(())
    }
}

/// Baseline attachment for a report: name plus mean-accuracy difference.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineDelta {
    pub name: String,
    pub benefit: f64,
}

/// Per-episode accuracies with their mean/std, and an optional benefit
/// versus a named baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub per_episode_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub baseline: Option<BaselineDelta>,
}

impl EvalReport {
    /// Builds a report from per-episode accuracies; mean and std (population)
    /// are derived here so they always agree with the vector.
    pub fn from_accuracies(per_episode_accuracy: Vec<f64>) -> Result<EvalReport> {
        if per_episode_accuracy.is_empty() {
            return Err(CoreError::EmptyInput("per-episode accuracies"));
        }
        let n = per_episode_accuracy.len() as f64;
        let mean = per_episode_accuracy.iter().sum::<f64>() / n;
        let var = per_episode_accuracy
            .iter()
            .map(|a| (a - mean) * (a - mean))
            .sum::<f64>()
            / n;
        Ok(EvalReport {
            per_episode_accuracy,
            mean_accuracy: mean,
            std_accuracy: math::sqrt(var),
            baseline: None,
        })
    }

    /// Attaches a baseline: benefit = own mean minus the baseline's mean.
    pub fn against(mut self, name: &str, baseline: &EvalReport) -> EvalReport {
        self.baseline = Some(BaselineDelta {
            name: String::from(name),
            benefit: self.mean_accuracy - baseline.mean_accuracy,
        });
        self
    }
}
