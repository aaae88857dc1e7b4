//! Episodic N-way K-shot evaluation with a nearest-centroid classifier over
//! embeddings.
//!
//! Episodes (classes and query ids) are drawn once from the episode seed;
//! every selection compared in one experiment reuses the identical episode
//! list, so benefit differences are never confounded by episode resampling.
//! Classic-baseline supports come from a stream derived from the same seed,
//! which keeps the episode draws byte-identical between fixed and classic
//! evaluations.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::model::{DatasetBundle, Distance, EvalConfig, EvalReport, Selection};
use crate::rng::{derive_seed, tags, SeededRng};
use crate::strategies::cosine;

/// One N-way task: class ids, per-class support ids (empty until a fixed
/// selection is injected or classic supports are drawn), per-class query ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Episode {
    pub class_ids: Vec<u32>,
    pub support: BTreeMap<u32, Vec<u32>>,
    pub query: BTreeMap<u32, Vec<u32>>,
}

/// Where episode supports come from.
#[derive(Debug, Clone, Copy)]
pub enum SupportSource<'a> {
    /// One fixed selection reused across every episode.
    Fixed(&'a Selection),
    /// Fresh seeded draws per episode (the classic baseline).
    Classic,
}

/// Which pool episode queries are drawn from. Final reports read the query
/// pool; search-time probes read the validation pool so subset selection
/// never sees the queries it will later be judged on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuerySource {
    Query,
    Validation,
}

/// Draws `cfg.n_tasks` episodes: classes uniformly without replacement from
/// the classes whose select pool holds >= K and query pool >= Q samples,
/// then Q query ids per chosen class. Supports are left empty.
pub fn sample_episodes(bundle: &DatasetBundle, cfg: &EvalConfig) -> Result<Vec<Episode>> {
    sample_episodes_from(bundle, cfg, QuerySource::Query)
}

/// [`sample_episodes`] with an explicit query pool.
pub fn sample_episodes_from(
    bundle: &DatasetBundle,
    cfg: &EvalConfig,
    source: QuerySource,
) -> Result<Vec<Episode>> {
    cfg.validate()?;
    let select_pools = bundle.class_select_pools();
    let query_pools = match source {
        QuerySource::Query => bundle.class_query_pools(),
        QuerySource::Validation => bundle.class_validation_pools(),
    };
    let eligible: Vec<u32> = (0..bundle.n_classes())
        .filter(|&c| select_pools[c].len() >= cfg.k_shot && query_pools[c].len() >= cfg.q_query)
        .map(|c| c as u32)
        .collect();
    if eligible.len() < cfg.n_way {
        return Err(CoreError::InsufficientClasses {
            have: eligible.len(),
            need: cfg.n_way,
        });
    }
    let mut rng = SeededRng::new(cfg.seed);
    let mut episodes = Vec::with_capacity(cfg.n_tasks);
    for _ in 0..cfg.n_tasks {
        let class_ids = rng.choose_k(&eligible, cfg.n_way);
        let mut query = BTreeMap::new();
        for &class in &class_ids {
            let ids = rng.choose_k(&query_pools[class as usize], cfg.q_query);
            query.insert(class, ids.iter().map(|&i| i as u32).collect());
        }
        episodes.push(Episode {
            class_ids,
            support: BTreeMap::new(),
            query,
        });
    }
    Ok(episodes)
}

/// Mean embeddings per class over `(class, ids)` support lists.
pub fn class_centroids(
    bundle: &DatasetBundle,
    support: &BTreeMap<u32, Vec<u32>>,
) -> Vec<(u32, Vec<f64>)> {
    let d = bundle.embed_dim();
    let mut out = Vec::with_capacity(support.len());
    for (&class, ids) in support {
        let mut centroid = alloc::vec![0.0; d];
        for &id in ids {
            for (m, &x) in centroid.iter_mut().zip(bundle.embedding(id as usize)) {
                *m += x;
            }
        }
        for m in centroid.iter_mut() {
            *m /= ids.len() as f64;
        }
        out.push((class, centroid));
    }
    out
}

/// The class whose centroid is nearest to the query (Euclidean) or most
/// aligned with it (cosine); ties go to the lowest class index.
pub fn nearest_centroid(centroids: &[(u32, Vec<f64>)], query: &[f64], distance: Distance) -> u32 {
    let mut best_class = centroids[0].0;
    let mut best_key = f64::NEG_INFINITY;
    for (class, centroid) in centroids {
        // Higher key = better; Euclidean uses the negated squared distance.
        let key = match distance {
            Distance::Euclidean => -crate::strategies::dist_sq(centroid, query),
            Distance::Cosine => cosine(centroid, query),
        };
        if key > best_key || (key == best_key && *class < best_class) {
            best_key = key;
            best_class = *class;
        }
    }
    best_class
}

/// Single-query convenience over raw (class, embedding) support pairs.
pub fn centroid_classify(
    support: &[(u32, &[f64])],
    query: &[f64],
    distance: Distance,
) -> Result<u32> {
    if support.is_empty() {
        return Err(CoreError::EmptyInput("support set"));
    }
    let d = support[0].1.len();
    let mut grouped: BTreeMap<u32, (Vec<f64>, usize)> = BTreeMap::new();
    for (class, emb) in support {
        let entry = grouped.entry(*class).or_insert((alloc::vec![0.0; d], 0));
        for (m, &x) in entry.0.iter_mut().zip(emb.iter()) {
            *m += x;
        }
        entry.1 += 1;
    }
    let centroids: Vec<(u32, Vec<f64>)> = grouped
        .into_iter()
        .map(|(class, (mut sum, count))| {
            for m in sum.iter_mut() {
                *m /= count as f64;
            }
            (class, sum)
        })
        .collect();
    Ok(nearest_centroid(&centroids, query, distance))
}

/// Runs every episode with supports from `source` and aggregates accuracies.
///
/// Fixed selections must cover every episode class; their per-class lists
/// are used verbatim (so the effective shot count is the selection's own
/// `k_per_class`). Classic supports are K fresh seeded draws per episode
/// from each class's select pool.
pub fn evaluate_selection(
    bundle: &DatasetBundle,
    source: SupportSource<'_>,
    episodes: &[Episode],
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    if episodes.is_empty() {
        return Err(CoreError::EmptyInput("episodes"));
    }
    let select_pools = bundle.class_select_pools();
    let mut classic_rng = SeededRng::new(derive_seed(cfg.seed, tags::CLASSIC_SUPPORT));
    let mut accuracies = Vec::with_capacity(episodes.len());
    for episode in episodes {
        let mut support: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        for &class in &episode.class_ids {
            let ids: Vec<u32> = match source {
                SupportSource::Fixed(selection) => selection
                    .per_class
                    .get(&class)
                    .ok_or(CoreError::ClassMissingFromSelection(class))?
                    .clone(),
                SupportSource::Classic => {
                    let pool = &select_pools[class as usize];
                    if pool.len() < cfg.k_shot {
                        return Err(CoreError::InsufficientPool {
                            class,
                            have: pool.len(),
                            need: cfg.k_shot,
                        });
                    }
                    classic_rng
                        .choose_k(pool, cfg.k_shot)
                        .iter()
                        .map(|&i| i as u32)
                        .collect()
                }
            };
            support.insert(class, ids);
        }
        let centroids = class_centroids(bundle, &support);
        let mut correct = 0usize;
        let mut total = 0usize;
        for (&class, queries) in &episode.query {
            for &q in queries {
                let predicted =
                    nearest_centroid(&centroids, bundle.embedding(q as usize), cfg.distance);
                if predicted == class {
                    correct += 1;
                }
                total += 1;
            }
        }
        accuracies.push(correct as f64 / total as f64);
    }
    EvalReport::from_accuracies(accuracies)
}

/// One row of a shot sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ShotBenefit {
    pub k_shot: usize,
    pub mean_accuracy: f64,
    /// Mean accuracy minus the classic baseline at the 5-shot reference.
    pub benefit: f64,
}

/// Evaluates a selection path across shot counts against the classic
/// baseline held at the 5-shot reference.
pub fn sweep_shots(
    bundle: &DatasetBundle,
    cfg: &EvalConfig,
    k_values: &[usize],
    mut select_at: impl FnMut(usize) -> Result<Selection>,
) -> Result<Vec<ShotBenefit>> {
    if k_values.is_empty() {
        return Err(CoreError::EmptyInput("k_values"));
    }
    for (i, &k) in k_values.iter().enumerate() {
        if k == 0 {
            return Err(CoreError::BadConfig("shot counts must be positive"));
        }
        if k_values[..i].contains(&k) {
            return Err(CoreError::DuplicateShotCount(k));
        }
    }
    const REFERENCE_SHOTS: usize = 5;
    let reference_cfg = EvalConfig {
        k_shot: REFERENCE_SHOTS,
        ..*cfg
    };
    let episodes = sample_episodes(bundle, &reference_cfg)?;
    let classic = evaluate_selection(bundle, SupportSource::Classic, &episodes, &reference_cfg)?;
    let mut rows = Vec::with_capacity(k_values.len());
    for &k in k_values {
        let selection = select_at(k)?;
        let k_cfg = EvalConfig { k_shot: k, ..*cfg };
        let episodes_k = sample_episodes(bundle, &k_cfg)?;
        let report =
            evaluate_selection(bundle, SupportSource::Fixed(&selection), &episodes_k, &k_cfg)?;
        rows.push(ShotBenefit {
            k_shot: k,
            mean_accuracy: report.mean_accuracy,
            benefit: report.mean_accuracy - classic.mean_accuracy,
        });
    }
    Ok(rows)
}
