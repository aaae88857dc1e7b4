//! Serialised artifacts: score CSVs, selection/report/search JSON documents,
//! sweep and benefit-table CSVs, and the reproducibility stanza embedded in
//! each so a `replay` run can re-execute the experiment bit-exactly.

use std::collections::BTreeMap;

use acsess_core::model::{CombinationWeights, EvalReport, Selection, StrategyId};
use acsess_core::search::{SearchResult, TraceEntry};
use serde::{Deserialize, Serialize};

/// The replay stanza: everything needed to re-run the emitting command.
/// `argv` is the canonical argument vector (defaults spelled out) minus the
/// output flags; `expected` pins the numbers the re-run must reproduce.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ReplayStanza {
    pub tool: String,
    pub version: String,
    pub bundle: String,
    pub bundle_hash: String,
    pub argv: Vec<String>,
    pub expected: Expected,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Expected {
    MeanAccuracy { mean_accuracy: f64 },
    SweepBenefits { benefits: Vec<f64> },
    Subset {
        subset: Vec<String>,
        final_mean_accuracy: Option<f64>,
    },
    Scores { checksum: String },
    SelectionIds { checksum: String },
}

impl ReplayStanza {
    pub fn new(bundle: &str, bundle_hash: &str, argv: Vec<String>, expected: Expected) -> Self {
        ReplayStanza {
            tool: "acsess".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            bundle: bundle.into(),
            bundle_hash: bundle_hash.into(),
            argv,
            expected,
        }
    }
}

/// Leading comment line carrying the stanza in CSV artifacts.
pub const CSV_STANZA_PREFIX: &str = "# acsess-replay: ";

pub fn csv_stanza_line(stanza: &ReplayStanza) -> serde_json::Result<String> {
    Ok(format!(
        "{}{}",
        CSV_STANZA_PREFIX,
        serde_json::to_string(stanza)?
    ))
}

pub fn parse_csv_stanza(text: &str) -> Option<ReplayStanza> {
    let line = text.lines().find(|l| l.starts_with(CSV_STANZA_PREFIX))?;
    serde_json::from_str(&line[CSV_STANZA_PREFIX.len()..]).ok()
}

/// Nine-significant-digit scientific rendering used in score CSVs.
pub fn render_score(value: f64) -> String {
    format!("{value:.8e}")
}

pub fn scores_csv(stanza: &ReplayStanza, scores: &[f64]) -> serde_json::Result<String> {
    let mut out = String::new();
    out.push_str(&csv_stanza_line(stanza)?);
    out.push('\n');
    out.push_str("sample_id,score\n");
    for (i, &s) in scores.iter().enumerate() {
        out.push_str(&format!("{i},{}\n", render_score(s)));
    }
    Ok(out)
}

/// Order-stable FNV-1a checksum of the rendered rows, pinned by the stanza.
pub fn rows_checksum(rows: &[String]) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for row in rows {
        for b in row.bytes().chain(b"\n".iter().copied()) {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
        }
    }
    format!("{hash:016x}")
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ClassList {
    pub class: u32,
    pub ids: Vec<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SelectionDoc {
    pub k_per_class: usize,
    pub per_class: Vec<ClassList>,
    pub replay: ReplayStanza,
}

impl SelectionDoc {
    pub fn from_selection(selection: &Selection, replay: ReplayStanza) -> Self {
        SelectionDoc {
            k_per_class: selection.k_per_class,
            per_class: selection
                .per_class
                .iter()
                .map(|(&class, ids)| ClassList {
                    class,
                    ids: ids.clone(),
                })
                .collect(),
            replay,
        }
    }

    pub fn to_selection(&self) -> Selection {
        Selection {
            k_per_class: self.k_per_class,
            per_class: self
                .per_class
                .iter()
                .map(|cl| (cl.class, cl.ids.clone()))
                .collect(),
        }
    }

    pub fn checksum(&self) -> String {
        let rows: Vec<String> = self
            .per_class
            .iter()
            .map(|cl| format!("{}:{:?}", cl.class, cl.ids))
            .collect();
        rows_checksum(&rows)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvalReportDoc {
    pub n_episodes: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline_name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub benefit: Option<f64>,
    pub per_episode_accuracy: Vec<f64>,
    pub replay: ReplayStanza,
}

impl EvalReportDoc {
    pub fn from_report(report: &EvalReport, replay: ReplayStanza) -> Self {
        EvalReportDoc {
            n_episodes: report.per_episode_accuracy.len(),
            mean_accuracy: report.mean_accuracy,
            std_accuracy: report.std_accuracy,
            baseline_name: report.baseline.as_ref().map(|b| b.name.clone()),
            benefit: report.baseline.as_ref().map(|b| b.benefit),
            per_episode_accuracy: report.per_episode_accuracy.clone(),
            replay,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct WeightsDoc {
    pub entries: BTreeMap<String, f64>,
    pub random_weight: f64,
}

impl WeightsDoc {
    pub fn from_weights(weights: &CombinationWeights) -> Self {
        WeightsDoc {
            entries: weights
                .entries
                .iter()
                .map(|(id, &w)| (id.as_str().to_string(), w))
                .collect(),
            random_weight: weights.random_weight,
        }
    }

    pub fn to_weights(&self) -> Result<CombinationWeights, String> {
        let mut entries = BTreeMap::new();
        for (name, &w) in &self.entries {
            let id = StrategyId::parse(name).ok_or_else(|| format!("unknown strategy {name}"))?;
            entries.insert(id, w);
        }
        Ok(CombinationWeights {
            entries,
            random_weight: self.random_weight,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TraceEntryDoc {
    pub subset: Vec<String>,
    pub accuracy: f64,
}

impl TraceEntryDoc {
    fn from_entry(entry: &TraceEntry) -> Self {
        TraceEntryDoc {
            subset: entry.subset.iter().map(|id| id.as_str().to_string()).collect(),
            accuracy: entry.accuracy,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SearchResultDoc {
    pub method: String,
    pub subset: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<WeightsDoc>,
    pub trace: Vec<TraceEntryDoc>,
}

impl SearchResultDoc {
    pub fn from_result(result: &SearchResult) -> Self {
        SearchResultDoc {
            method: result.method.as_str().to_string(),
            subset: result.subset.iter().map(|id| id.as_str().to_string()).collect(),
            weights: result.weights.as_ref().map(WeightsDoc::from_weights),
            trace: result.trace.iter().map(TraceEntryDoc::from_entry).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SearchDoc {
    pub method: String,
    pub subset: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<WeightsDoc>,
    /// Identification probes ran at this episode budget.
    pub search_tasks: usize,
    /// Final subset re-evaluated at the full budget under uniform weights,
    /// with the classic baseline on the same episodes.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_report: Option<FinalEval>,
    /// Same episodes, fused with the identified per-strategy weights.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_weighted: Option<FinalEval>,
    /// Same episodes, weighted fusion plus the extra random score.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_with_random: Option<FinalEval>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub forward: Option<SearchResultDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub backward: Option<SearchResultDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub datamodels: Option<SearchResultDoc>,
    pub trace: Vec<TraceEntryDoc>,
    pub replay: ReplayStanza,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FinalEval {
    pub n_episodes: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub baseline_name: String,
    pub benefit: f64,
}

impl FinalEval {
    pub fn from_report(report: &EvalReport) -> Option<Self> {
        let baseline = report.baseline.as_ref()?;
        Some(FinalEval {
            n_episodes: report.per_episode_accuracy.len(),
            mean_accuracy: report.mean_accuracy,
            std_accuracy: report.std_accuracy,
            baseline_name: baseline.name.clone(),
            benefit: baseline.benefit,
        })
    }
}
