//! Command-line surface: argument parsing, command execution, artifact
//! emission, and the replay checker.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error. Every emitted
//! artifact embeds a replay stanza (canonical argv, bundle hash, expected
//! numbers); `replay FILE` re-executes the stanza and verifies the numbers
//! bit-exactly.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use acsess_core::combine::{combine, select_top_k_per_class};
use acsess_core::eval::{
    evaluate_selection, sample_episodes, sweep_shots, QuerySource, ShotBenefit, SupportSource,
};
use acsess_core::model::{validate_bundle, CombinationWeights, EvalReport, Selection};
use acsess_core::search::{
    acsess_identify, backward_select, datamodels_select, evaluate_subset_on_episodes,
    forward_select, AcsessOutcome, BundleEval, DatamodelsOptions, ScoreCache, SearchMethod,
    SearchResult,
};
use acsess_core::strategies::{canonical_score, standalone_selection, StrategyParams};
use acsess_core::synth::{gen_bundle, GenConfig};
use acsess_core::{DatasetBundle, Distance, EvalConfig, StrategyId};
use clap::{Args, Parser, Subcommand};

use crate::documents::{
    csv_stanza_line, parse_csv_stanza, render_score, rows_checksum, EvalReportDoc, Expected,
    FinalEval, ReplayStanza, SearchDoc, SearchResultDoc, SelectionDoc, WeightsDoc,
};
use crate::format::{bundle_hash, load_bundle, load_bundle_unchecked, save_bundle, FormatError};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("{0}")]
    Core(#[from] acsess_core::CoreError),
    #[error("{0}")]
    Data(String),
    #[error("bundle failed validation with {0} violation(s)")]
    Validation(usize),
    #[error("replay mismatch: {0}")]
    ReplayMismatch(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(
    name = "acsess",
    version,
    about = "Sample-selection strategies, automatic strategy combination, and episodic evaluation over embedding bundles"
)]
pub struct Cli {
    /// Worker cap for commands that parallelise independent evaluations.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic bundle with trained dynamics.
    Gen(GenArgs),
    /// Check every bundle invariant and list violations.
    Validate(ValidateArgs),
    /// Emit one strategy's score vector as CSV.
    Score(ScoreArgs),
    /// Emit one strategy's standalone selection as JSON.
    Select(SelectArgs),
    /// Fuse strategy scores under explicit weights.
    Combine(CombineArgs),
    /// Identify the relevant strategy subset.
    Search(SearchArgs),
    /// Evaluate a selection, a strategy, or the classic baseline.
    Eval(EvalArgs),
    /// Benefit across shot counts against the classic 5-shot reference.
    Sweep(SweepArgs),
    /// Benefit table over many strategies against the classic baseline.
    Report(ReportArgs),
    /// Re-execute an emitted artifact's stanza and verify it bit-exactly.
    Replay(ReplayArgs),
}

#[derive(Args, Debug, Clone)]
pub struct EvalFlags {
    /// Episodes per evaluation (T).
    #[arg(long, default_value_t = 600)]
    pub tasks: usize,
    /// Classes per episode (N).
    #[arg(long, default_value_t = 5)]
    pub ways: usize,
    /// Support samples per class (K).
    #[arg(long, default_value_t = 5)]
    pub shots: usize,
    /// Query samples per class (Q).
    #[arg(long, default_value_t = 16)]
    pub queries: usize,
    /// Centroid distance: euclidean or cosine.
    #[arg(long, default_value = "euclidean")]
    pub distance: String,
    /// Seed for episode (class/query) draws.
    #[arg(long, default_value_t = 0)]
    pub episode_seed: u64,
}

impl EvalFlags {
    fn to_config(&self) -> Result<EvalConfig> {
        let distance = Distance::parse(&self.distance)
            .ok_or_else(|| CliError::Data(format!("unknown distance {}", self.distance)))?;
        Ok(EvalConfig {
            n_way: self.ways,
            k_shot: self.shots,
            q_query: self.queries,
            n_tasks: self.tasks,
            distance,
            seed: self.episode_seed,
        })
    }

    fn canonical(&self) -> Vec<String> {
        vec![
            "--tasks".into(),
            self.tasks.to_string(),
            "--ways".into(),
            self.ways.to_string(),
            "--shots".into(),
            self.shots.to_string(),
            "--queries".into(),
            self.queries.to_string(),
            "--distance".into(),
            self.distance.clone(),
            "--episode-seed".into(),
            self.episode_seed.to_string(),
        ]
    }
}

#[derive(Args, Debug, Clone)]
pub struct GenArgs {
    /// Output bundle directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    #[arg(long, default_value_t = 90)]
    pub per_class: usize,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    /// Per-dimension Gaussian spread around each class centroid.
    #[arg(long, default_value_t = 0.25)]
    pub spread: f64,
    /// Fraction of samples uniformly relabeled.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Fraction of samples with 5x spread.
    #[arg(long, default_value_t = 0.05)]
    pub outliers: f64,
    #[arg(long, default_value_t = 3)]
    pub runs: usize,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.5)]
    pub learn_rate: f64,
    /// Data-split seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl GenArgs {
    fn to_config(&self) -> GenConfig {
        GenConfig {
            n_classes: self.classes,
            per_class: self.per_class,
            dim: self.dim,
            cluster_spread: self.spread,
            label_noise_rate: self.noise,
            outlier_rate: self.outliers,
            n_runs: self.runs,
            n_epochs: self.epochs,
            learn_rate: self.learn_rate,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct ValidateArgs {
    #[arg(long)]
    pub bundle: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct ScoreArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub strategy: String,
    /// Strategy seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct SelectArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub strategy: String,
    /// Shots per class.
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct CombineArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    /// Weights JSON file: {"entries": {"strategy": weight, ...}, "random_weight": w}.
    #[arg(long, conflicts_with = "weights_json", required_unless_present = "weights_json")]
    pub weights: Option<PathBuf>,
    /// The same weights document inline; replay stanzas use this form so
    /// the experiment re-runs without the original weights file.
    #[arg(long)]
    pub weights_json: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV of combined scores.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also emit the top-K-per-class selection of the combined scores.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub selection_out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct SearchArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    /// forward | backward | datamodels | acsess
    #[arg(long)]
    pub method: String,
    /// Strategy seed (scores and design sampling).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Episode budget for search-time probes.
    #[arg(long, default_value_t = 100)]
    pub search_tasks: usize,
    /// Queries per class for search-time probes, drawn from the validation
    /// pool (the final report keeps using the query pool).
    #[arg(long, default_value_t = 8)]
    pub search_queries: usize,
    #[command(flatten)]
    pub eval: EvalFlags,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct EvalArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    /// Evaluate a stored selection document.
    #[arg(long, conflicts_with_all = ["strategy", "classic"])]
    pub selection: Option<PathBuf>,
    /// Evaluate a strategy's standalone selection.
    #[arg(long, conflicts_with = "classic")]
    pub strategy: Option<String>,
    /// Evaluate the classic per-episode random baseline.
    #[arg(long, default_value_t = false)]
    pub classic: bool,
    /// Strategy seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Attach a baseline (currently only "classic") on the same episodes.
    #[arg(long)]
    pub against: Option<String>,
    #[command(flatten)]
    pub eval: EvalFlags,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct SweepArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub strategy: String,
    /// Comma-separated shot counts, e.g. 1,5,10,20,40.
    #[arg(long)]
    pub shots: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 600)]
    pub tasks: usize,
    #[arg(long, default_value_t = 5)]
    pub ways: usize,
    #[arg(long, default_value_t = 16)]
    pub queries: usize,
    #[arg(long, default_value = "euclidean")]
    pub distance: String,
    #[arg(long, default_value_t = 0)]
    pub episode_seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct ReportArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    /// Comma-separated strategy list, or "all".
    #[arg(long, default_value = "all")]
    pub strategies: String,
    /// Baseline name; only "classic" is supported.
    #[arg(long, default_value = "classic")]
    pub against: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub eval: EvalFlags,
    /// Benefit table CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Aligned-text rendering of the same table.
    #[arg(long)]
    pub text: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct ReplayArgs {
    /// An artifact emitted by score/select/combine/eval/sweep/search/report.
    pub file: PathBuf,
}

/// Entry point used by both `main` and the tests.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            2
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(args) => run_gen(&args),
        Command::Validate(args) => run_validate(&args),
        Command::Score(args) => run_score(&args),
        Command::Select(args) => run_select(&args),
        Command::Combine(args) => run_combine(&args),
        Command::Search(args) => run_search(&args),
        Command::Eval(args) => run_eval(&args),
        Command::Sweep(args) => run_sweep(&args),
        Command::Report(args) => run_report(&args, cli.threads),
        Command::Replay(args) => run_replay(&args),
    }
}

fn parse_strategy(name: &str) -> Result<StrategyId> {
    StrategyId::parse(name).ok_or_else(|| CliError::Data(format!("unknown strategy {name}")))
}

fn write_text(path: &Option<PathBuf>, text: &str) -> Result<()> {
    match path {
        Some(p) => {
            if let Some(parent) = p.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)?;
                }
            }
            std::fs::write(p, text)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn bundle_str(path: &Path) -> String {
    path.display().to_string()
}

fn run_gen(args: &GenArgs) -> Result<()> {
    let cfg = args.to_config();
    let (bundle, info) = gen_bundle(&cfg, args.seed)?;
    let provenance = serde_json::json!({
        "generator": "acsess gen",
        "version": env!("CARGO_PKG_VERSION"),
        "seed": args.seed,
        "config": {
            "n_classes": cfg.n_classes,
            "per_class": cfg.per_class,
            "dim": cfg.dim,
            "cluster_spread": cfg.cluster_spread,
            "label_noise_rate": cfg.label_noise_rate,
            "outlier_rate": cfg.outlier_rate,
            "n_runs": cfg.n_runs,
            "n_epochs": cfg.n_epochs,
            "learn_rate": cfg.learn_rate,
        },
        "n_relabeled": info.relabeled.len(),
        "n_outliers": info.outliers.len(),
    });
    save_bundle(&bundle, &args.out, Some(provenance))?;
    println!(
        "wrote bundle: {} samples, {} classes, dim {}, {} runs x {} epochs -> {}",
        bundle.n_samples(),
        bundle.n_classes(),
        bundle.embed_dim(),
        bundle.n_runs(),
        bundle.n_epochs(),
        args.out.display()
    );
    Ok(())
}

fn run_validate(args: &ValidateArgs) -> Result<()> {
    let bundle = load_bundle_unchecked(&args.bundle)?;
    let violations = validate_bundle(&bundle);
    if violations.is_empty() {
        println!("ok: all invariants hold");
        Ok(())
    } else {
        for v in &violations {
            println!("violation: {v}");
        }
        Err(CliError::Validation(violations.len()))
    }
}

fn compute_score(bundle: &DatasetBundle, id: StrategyId, seed: u64) -> Result<Vec<f64>> {
    Ok(canonical_score(bundle, id, &StrategyParams::default(), seed)?.scores)
}

fn score_rows(scores: &[f64]) -> Vec<String> {
    scores
        .iter()
        .enumerate()
        .map(|(i, &s)| format!("{i},{}", render_score(s)))
        .collect()
}

fn run_score(args: &ScoreArgs) -> Result<()> {
    let bundle = load_bundle(&args.bundle)?;
    let id = parse_strategy(&args.strategy)?;
    let scores = compute_score(&bundle, id, args.seed)?;
    let rows = score_rows(&scores);
    let argv = vec![
        "score".to_string(),
        "--bundle".into(),
        bundle_str(&args.bundle),
        "--strategy".into(),
        id.as_str().into(),
        "--seed".into(),
        args.seed.to_string(),
    ];
    let stanza = ReplayStanza::new(
        &bundle_str(&args.bundle),
        &bundle_hash(&args.bundle)?,
        argv,
        Expected::Scores {
            checksum: rows_checksum(&rows),
        },
    );
    let mut text = csv_stanza_line(&stanza)?;
    text.push('\n');
    text.push_str("sample_id,score\n");
    for row in &rows {
        text.push_str(row);
        text.push('\n');
    }
    write_text(&args.out, &text)
}

fn compute_select(
    bundle: &DatasetBundle,
    id: StrategyId,
    k: usize,
    seed: u64,
) -> Result<Selection> {
    Ok(standalone_selection(bundle, id, &StrategyParams::default(), k, seed)?)
}

fn run_select(args: &SelectArgs) -> Result<()> {
    let bundle = load_bundle(&args.bundle)?;
    let id = parse_strategy(&args.strategy)?;
    let selection = compute_select(&bundle, id, args.k, args.seed)?;
    let argv = vec![
        "select".to_string(),
        "--bundle".into(),
        bundle_str(&args.bundle),
        "--strategy".into(),
        id.as_str().into(),
        "--k".into(),
        args.k.to_string(),
        "--seed".into(),
        args.seed.to_string(),
    ];
    let mut doc = SelectionDoc::from_selection(
        &selection,
        ReplayStanza::new(
            &bundle_str(&args.bundle),
            &bundle_hash(&args.bundle)?,
            argv,
            Expected::SelectionIds {
                checksum: String::new(),
            },
        ),
    );
    doc.replay.expected = Expected::SelectionIds {
        checksum: doc.checksum(),
    };
    write_text(&args.out, &format!("{}\n", serde_json::to_string_pretty(&doc)?))
}

fn compute_combine(
    bundle: &DatasetBundle,
    weights: &CombinationWeights,
    seed: u64,
) -> Result<Vec<f64>> {
    let params = StrategyParams::default();
    let members: Vec<StrategyId> = weights.entries.keys().copied().collect();
    let vectors = members
        .iter()
        .map(|&id| canonical_score(bundle, id, &params, seed))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(combine(&vectors, weights, seed)?.scores)
}

/// Reads combine weights from the file flag or the inline flag.
fn combine_weights_doc(args: &CombineArgs) -> Result<WeightsDoc> {
    let text = match (&args.weights, &args.weights_json) {
        (Some(path), None) => std::fs::read_to_string(path)?,
        (None, Some(inline)) => inline.clone(),
        _ => return Err(CliError::Data("exactly one of --weights/--weights-json".into())),
    };
    Ok(serde_json::from_str(&text)?)
}

fn run_combine(args: &CombineArgs) -> Result<()> {
    let bundle = load_bundle(&args.bundle)?;
    let weights_doc = combine_weights_doc(args)?;
    let weights = weights_doc.to_weights().map_err(CliError::Data)?;
    let scores = compute_combine(&bundle, &weights, args.seed)?;
    let rows = score_rows(&scores);
    // The stanza inlines the weights so replay never needs the file.
    let argv = vec![
        "combine".to_string(),
        "--bundle".into(),
        bundle_str(&args.bundle),
        "--weights-json".into(),
        serde_json::to_string(&weights_doc)?,
        "--seed".into(),
        args.seed.to_string(),
    ];
    let stanza = ReplayStanza::new(
        &bundle_str(&args.bundle),
        &bundle_hash(&args.bundle)?,
        argv,
        Expected::Scores {
            checksum: rows_checksum(&rows),
        },
    );
    let mut text = csv_stanza_line(&stanza)?;
    text.push('\n');
    text.push_str("sample_id,score\n");
    for row in &rows {
        text.push_str(row);
        text.push('\n');
    }
    write_text(&args.out, &text)?;
    if let Some(k) = args.k {
        let sv = acsess_core::ScoreVector::new(
            acsess_core::ScoreSource::Combined,
            args.seed,
            scores,
        );
        let selection = select_top_k_per_class(&sv, &bundle, k)?;
        let mut sel_argv = stanza.argv.clone();
        sel_argv.extend(["--k".to_string(), k.to_string()]);
        let mut doc = SelectionDoc::from_selection(
            &selection,
            ReplayStanza::new(
                &stanza.bundle,
                &stanza.bundle_hash,
                sel_argv,
                Expected::SelectionIds {
                    checksum: String::new(),
                },
            ),
        );
        doc.replay.expected = Expected::SelectionIds {
            checksum: doc.checksum(),
        };
        write_text(
            &args.selection_out,
            &format!("{}\n", serde_json::to_string_pretty(&doc)?),
        )?;
    }
    Ok(())
}

/// Selection source for an evaluation command.
enum EvalMode {
    Fixed(Selection),
    Classic,
}

fn compute_eval(bundle: &DatasetBundle, mode: &EvalMode, cfg: &EvalConfig, against_classic: bool)
    -> Result<EvalReport> {
    let episodes = sample_episodes(bundle, cfg)?;
    let report = match mode {
        EvalMode::Fixed(selection) => {
            selection.validate(bundle)?;
            evaluate_selection(bundle, SupportSource::Fixed(selection), &episodes, cfg)?
        }
        EvalMode::Classic => {
            evaluate_selection(bundle, SupportSource::Classic, &episodes, cfg)?
        }
    };
    if against_classic {
        let classic = evaluate_selection(bundle, SupportSource::Classic, &episodes, cfg)?;
        Ok(report.against("classic", &classic))
    } else {
        Ok(report)
    }
}

fn run_eval(args: &EvalArgs) -> Result<()> {
    let bundle = load_bundle(&args.bundle)?;
    let mut cfg = args.eval.to_config()?;
    let against_classic = match args.against.as_deref() {
        None => false,
        Some("classic") => true,
        Some(other) => {
            return Err(CliError::Data(format!(
                "unsupported baseline {other}; only classic is available"
            )))
        }
    };
    let (mode, mode_argv): (EvalMode, Vec<String>) = if let Some(path) = &args.selection {
        let doc: SelectionDoc = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let selection = doc.to_selection();
        // The selection's own shot count drives the episode supports.
        cfg.k_shot = selection.k_per_class;
        (
            EvalMode::Fixed(selection),
            vec!["--selection".into(), path.display().to_string()],
        )
    } else if let Some(name) = &args.strategy {
        let id = parse_strategy(name)?;
        let selection = compute_select(&bundle, id, cfg.k_shot, args.seed)?;
        (
            EvalMode::Fixed(selection),
            vec![
                "--strategy".into(),
                id.as_str().into(),
                "--seed".into(),
                args.seed.to_string(),
            ],
        )
    } else if args.classic {
        (EvalMode::Classic, vec!["--classic".into()])
    } else {
        return Err(CliError::Data(
            "one of --selection, --strategy, --classic is required".into(),
        ));
    };

    let report = compute_eval(&bundle, &mode, &cfg, against_classic)?;
    let mut argv = vec![
        "eval".to_string(),
        "--bundle".into(),
        bundle_str(&args.bundle),
    ];
    argv.extend(mode_argv);
    argv.extend(args.eval.canonical());
    if against_classic {
        argv.extend(["--against".to_string(), "classic".to_string()]);
    }
    let stanza = ReplayStanza::new(
        &bundle_str(&args.bundle),
        &bundle_hash(&args.bundle)?,
        argv,
        Expected::MeanAccuracy {
            mean_accuracy: report.mean_accuracy,
        },
    );
    let doc = EvalReportDoc::from_report(&report, stanza);
    write_text(&args.out, &format!("{}\n", serde_json::to_string_pretty(&doc)?))?;
    println!(
        "mean accuracy {:.4} (std {:.4}){}",
        report.mean_accuracy,
        report.std_accuracy,
        report
            .baseline
            .as_ref()
            .map(|b| format!(", benefit vs {} {:+.4}", b.name, b.benefit))
            .unwrap_or_default()
    );
    Ok(())
}

fn parse_shot_list(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Data(format!("bad shot count {s}")))
        })
        .collect()
}

fn compute_sweep(
    bundle: &DatasetBundle,
    id: StrategyId,
    shots: &[usize],
    cfg: &EvalConfig,
    seed: u64,
) -> Result<Vec<ShotBenefit>> {
    Ok(sweep_shots(bundle, cfg, shots, |k| {
        standalone_selection(bundle, id, &StrategyParams::default(), k, seed)
    })?)
}

fn run_sweep(args: &SweepArgs) -> Result<()> {
    let bundle = load_bundle(&args.bundle)?;
    let id = parse_strategy(&args.strategy)?;
    let shots = parse_shot_list(&args.shots)?;
    let distance = Distance::parse(&args.distance)
        .ok_or_else(|| CliError::Data(format!("unknown distance {}", args.distance)))?;
    let cfg = EvalConfig {
        n_way: args.ways,
        k_shot: 5,
        q_query: args.queries,
        n_tasks: args.tasks,
        distance,
        seed: args.episode_seed,
    };
    let rows = compute_sweep(&bundle, id, &shots, &cfg, args.seed)?;
    let argv = vec![
        "sweep".to_string(),
        "--bundle".into(),
        bundle_str(&args.bundle),
        "--strategy".into(),
        id.as_str().into(),
        "--shots".into(),
        shots.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(","),
        "--seed".into(),
        args.seed.to_string(),
        "--tasks".into(),
        args.tasks.to_string(),
        "--ways".into(),
        args.ways.to_string(),
        "--queries".into(),
        args.queries.to_string(),
        "--distance".into(),
        args.distance.clone(),
        "--episode-seed".into(),
        args.episode_seed.to_string(),
    ];
    let stanza = ReplayStanza::new(
        &bundle_str(&args.bundle),
        &bundle_hash(&args.bundle)?,
        argv,
        Expected::SweepBenefits {
            benefits: rows.iter().map(|r| r.benefit).collect(),
        },
    );
    let mut text = csv_stanza_line(&stanza)?;
    text.push('\n');
    text.push_str("k_shot,mean_accuracy,benefit_vs_classic_at_5\n");
    for row in &rows {
        text.push_str(&format!(
            "{},{},{}\n",
            row.k_shot,
            render_score(row.mean_accuracy),
            render_score(row.benefit)
        ));
    }
    write_text(&args.out, &text)
}

struct ReportRow {
    strategy: StrategyId,
    outcome: std::result::Result<(f64, f64, f64), String>,
}

fn compute_report_rows(
    bundle: &DatasetBundle,
    strategies: &[StrategyId],
    cfg: &EvalConfig,
    seed: u64,
    threads: usize,
) -> Result<Vec<ReportRow>> {
    let episodes = sample_episodes(bundle, cfg)?;
    let classic = evaluate_selection(bundle, SupportSource::Classic, &episodes, cfg)?;
    let evaluate_one = |id: StrategyId| -> ReportRow {
        let outcome = standalone_selection(bundle, id, &StrategyParams::default(), cfg.k_shot, seed)
            .and_then(|sel| {
                evaluate_selection(bundle, SupportSource::Fixed(&sel), &episodes, cfg)
            })
            .map(|report| {
                (
                    report.mean_accuracy,
                    report.std_accuracy,
                    report.mean_accuracy - classic.mean_accuracy,
                )
            })
            .map_err(|e| e.to_string());
        ReportRow {
            strategy: id,
            outcome,
        }
    };
    let workers = threads.max(1).min(strategies.len().max(1));
    if workers <= 1 {
        return Ok(strategies.iter().copied().map(evaluate_one).collect());
    }
    // Deterministic parallel map: chunk by index, reassemble in order.
    let mut rows: Vec<Option<ReportRow>> = Vec::new();
    rows.resize_with(strategies.len(), || None);
    std::thread::scope(|scope| {
        let chunks: Vec<(usize, &[StrategyId])> = strategies
            .chunks(strategies.len().div_ceil(workers))
            .enumerate()
            .map(|(i, chunk)| (i * strategies.len().div_ceil(workers), chunk))
            .collect();
        let mut handles = Vec::new();
        for (offset, chunk) in chunks {
            let eval_ref = &evaluate_one;
            handles.push((
                offset,
                scope.spawn(move || chunk.iter().copied().map(eval_ref).collect::<Vec<_>>()),
            ));
        }
        for (offset, handle) in handles {
            for (i, row) in handle.join().expect("report worker panicked").into_iter().enumerate()
            {
                rows[offset + i] = Some(row);
            }
        }
    });
    Ok(rows.into_iter().map(|r| r.expect("all rows filled")).collect())
}

fn run_report(args: &ReportArgs, threads: usize) -> Result<()> {
    if args.against != "classic" {
        return Err(CliError::Data(format!(
            "unsupported baseline {}; only classic is available",
            args.against
        )));
    }
    let bundle = load_bundle(&args.bundle)?;
    let cfg = args.eval.to_config()?;
    let strategies: Vec<StrategyId> = if args.strategies == "all" {
        StrategyId::ALL.to_vec()
    } else {
        args.strategies
            .split(',')
            .map(|s| parse_strategy(s.trim()))
            .collect::<Result<_>>()?
    };
    let rows = compute_report_rows(&bundle, &strategies, &cfg, args.seed, threads)?;

    let benefits: Vec<f64> = rows
        .iter()
        .filter_map(|r| r.outcome.as_ref().ok().map(|&(_, _, b)| b))
        .collect();
    let argv = {
        let mut argv = vec![
            "report".to_string(),
            "--bundle".into(),
            bundle_str(&args.bundle),
            "--strategies".into(),
            strategies
                .iter()
                .map(|s| s.as_str().to_string())
                .collect::<Vec<_>>()
                .join(","),
            "--against".into(),
            "classic".into(),
            "--seed".into(),
            args.seed.to_string(),
        ];
        argv.extend(args.eval.canonical());
        argv
    };
    let stanza = ReplayStanza::new(
        &bundle_str(&args.bundle),
        &bundle_hash(&args.bundle)?,
        argv,
        Expected::SweepBenefits { benefits },
    );

    let mut csv = csv_stanza_line(&stanza)?;
    csv.push('\n');
    csv.push_str("strategy,mean_accuracy,std_accuracy,benefit\n");
    for row in &rows {
        if let Ok((mean, std, benefit)) = row.outcome {
            csv.push_str(&format!(
                "{},{},{},{}\n",
                row.strategy,
                render_score(mean),
                render_score(std),
                render_score(benefit)
            ));
        }
    }
    write_text(&args.out, &csv)?;

    let mut table = String::new();
    table.push_str(&format!(
        "{:<24} {:>10} {:>10} {:>10}\n",
        "strategy", "accuracy", "std", "benefit"
    ));
    for row in &rows {
        match &row.outcome {
            Ok((mean, std, benefit)) => table.push_str(&format!(
                "{:<24} {:>10.4} {:>10.4} {:>+10.4}\n",
                row.strategy.as_str(),
                mean,
                std,
                benefit
            )),
            Err(reason) => table.push_str(&format!(
                "{:<24} {:>10} {:>10} {:>10}  ({reason})\n",
                row.strategy.as_str(),
                "n/a",
                "n/a",
                "n/a"
            )),
        }
    }
    write_text(&args.text, &table)
}

struct SearchComputed {
    result: SearchResult,
    forward: Option<SearchResult>,
    backward: Option<SearchResult>,
    datamodels: Option<SearchResult>,
    final_report: Option<EvalReport>,
    final_weighted: Option<EvalReport>,
    final_with_random: Option<EvalReport>,
}

fn compute_search(
    bundle: &DatasetBundle,
    method: SearchMethod,
    seed: u64,
    search_tasks: usize,
    search_queries: usize,
    full_cfg: &EvalConfig,
) -> Result<SearchComputed> {
    let candidates: Vec<StrategyId> = StrategyId::ALL
        .iter()
        .copied()
        .filter(|&id| id != StrategyId::Random)
        .collect();
    let search_cfg = EvalConfig {
        n_tasks: search_tasks,
        q_query: search_queries,
        ..*full_cfg
    };
    let mut eval =
        BundleEval::with_query_source(bundle, search_cfg, seed, QuerySource::Validation)?;
    let opts = DatamodelsOptions::default();
    let (result, forward, backward, datamodels) = match method {
        SearchMethod::Forward => (forward_select(&mut eval, &candidates)?, None, None, None),
        SearchMethod::Backward => (backward_select(&mut eval, &candidates)?, None, None, None),
        SearchMethod::Datamodels => (
            datamodels_select(&mut eval, &candidates, &opts, seed)?,
            None,
            None,
            None,
        ),
        SearchMethod::Acsess => {
            let AcsessOutcome {
                forward,
                backward,
                datamodels,
                combined,
            } = acsess_identify(&mut eval, &candidates, &opts, seed)?;
            (combined, Some(forward), Some(backward), Some(datamodels))
        }
    };

    let (final_report, final_weighted, final_with_random) = if result.subset.is_empty() {
        (None, None, None)
    } else {
        let episodes = sample_episodes(bundle, full_cfg)?;
        let mut cache = ScoreCache::new();
        let classic = evaluate_selection(bundle, SupportSource::Classic, &episodes, full_cfg)?;
        let mut run_scheme = |weights: &CombinationWeights| -> Result<EvalReport> {
            Ok(evaluate_subset_on_episodes(
                bundle,
                &result.subset,
                weights,
                full_cfg,
                seed,
                &mut cache,
                &episodes,
            )?
            .against("classic", &classic))
        };
        let uniform = run_scheme(&CombinationWeights::uniform(&result.subset))?;
        // The weighted scheme uses the identified weights without the random
        // column; with-random adds the random score at its fitted weight.
        let (weighted, with_random) = match &result.weights {
            Some(fitted) => {
                let plain = CombinationWeights {
                    entries: fitted.entries.clone(),
                    random_weight: 0.0,
                };
                let weighted = run_scheme(&plain)?;
                let with_random = if fitted.random_weight > 0.0 {
                    Some(run_scheme(fitted)?)
                } else {
                    None
                };
                (Some(weighted), with_random)
            }
            None => (None, None),
        };
        (Some(uniform), weighted, with_random)
    };
    Ok(SearchComputed {
        result,
        forward,
        backward,
        datamodels,
        final_weighted,
        final_with_random,
        final_report,
    })
}

fn run_search(args: &SearchArgs) -> Result<()> {
    let bundle = load_bundle(&args.bundle)?;
    let method = SearchMethod::parse(&args.method)
        .ok_or_else(|| CliError::Data(format!("unknown search method {}", args.method)))?;
    let full_cfg = args.eval.to_config()?;
    let computed = compute_search(
        &bundle,
        method,
        args.seed,
        args.search_tasks,
        args.search_queries,
        &full_cfg,
    )?;

    let mut argv = vec![
        "search".to_string(),
        "--bundle".into(),
        bundle_str(&args.bundle),
        "--method".into(),
        method.as_str().into(),
        "--seed".into(),
        args.seed.to_string(),
        "--search-tasks".into(),
        args.search_tasks.to_string(),
        "--search-queries".into(),
        args.search_queries.to_string(),
    ];
    argv.extend(args.eval.canonical());
    let stanza = ReplayStanza::new(
        &bundle_str(&args.bundle),
        &bundle_hash(&args.bundle)?,
        argv,
        Expected::Subset {
            subset: computed
                .result
                .subset
                .iter()
                .map(|id| id.as_str().to_string())
                .collect(),
            final_mean_accuracy: computed.final_report.as_ref().map(|r| r.mean_accuracy),
        },
    );
    let doc = SearchDoc {
        method: method.as_str().into(),
        subset: computed
            .result
            .subset
            .iter()
            .map(|id| id.as_str().to_string())
            .collect(),
        weights: computed.result.weights.as_ref().map(WeightsDoc::from_weights),
        search_tasks: args.search_tasks,
        final_report: computed.final_report.as_ref().and_then(FinalEval::from_report),
        final_weighted: computed.final_weighted.as_ref().and_then(FinalEval::from_report),
        final_with_random: computed
            .final_with_random
            .as_ref()
            .and_then(FinalEval::from_report),
        forward: computed.forward.as_ref().map(SearchResultDoc::from_result),
        backward: computed.backward.as_ref().map(SearchResultDoc::from_result),
        datamodels: computed.datamodels.as_ref().map(SearchResultDoc::from_result),
        trace: computed
            .result
            .trace
            .iter()
            .map(|t| crate::documents::TraceEntryDoc {
                subset: t.subset.iter().map(|id| id.as_str().to_string()).collect(),
                accuracy: t.accuracy,
            })
            .collect(),
        replay: stanza,
    };
    write_text(&args.out, &format!("{}\n", serde_json::to_string_pretty(&doc)?))?;
    println!(
        "{}: subset [{}]{}",
        method.as_str(),
        doc.subset.join(", "),
        doc.final_report
            .as_ref()
            .map(|f| format!(
                ", final accuracy {:.4} (benefit {:+.4} vs classic, T={})",
                f.mean_accuracy, f.benefit, f.n_episodes
            ))
            .unwrap_or_else(|| " (empty; no final evaluation)".into())
    );
    Ok(())
}

fn run_replay(args: &ReplayArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.file)?;
    let stanza: ReplayStanza = if let Some(stanza) = parse_csv_stanza(&text) {
        stanza
    } else {
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|_| CliError::Data("file carries no replay stanza".into()))?;
        let replay = value
            .get("replay")
            .ok_or_else(|| CliError::Data("file carries no replay stanza".into()))?;
        serde_json::from_value(replay.clone())?
    };
    replay_stanza(&stanza)?;
    println!("replay ok: {:?} reproduced bit-exactly", stanza.argv.first().map(String::as_str).unwrap_or("?"));
    Ok(())
}

/// Re-executes the stanza's command and verifies the expected numbers.
pub fn replay_stanza(stanza: &ReplayStanza) -> Result<()> {
    let bundle_dir = PathBuf::from(&stanza.bundle);
    let current_hash = bundle_hash(&bundle_dir)?;
    if current_hash != stanza.bundle_hash {
        return Err(CliError::ReplayMismatch(format!(
            "bundle hash changed: stanza {}, current {current_hash}",
            stanza.bundle_hash
        )));
    }
    let mut argv = vec!["acsess".to_string()];
    argv.extend(stanza.argv.iter().cloned());
    let cli = Cli::try_parse_from(&argv)
        .map_err(|e| CliError::Data(format!("stanza argv failed to parse: {e}")))?;
    let mismatch = |what: String| Err(CliError::ReplayMismatch(what));
    match (cli.command, &stanza.expected) {
        (Command::Score(args), Expected::Scores { checksum }) => {
            let bundle = load_bundle(&args.bundle)?;
            let id = parse_strategy(&args.strategy)?;
            let rows = score_rows(&compute_score(&bundle, id, args.seed)?);
            let got = rows_checksum(&rows);
            if got != *checksum {
                return mismatch(format!("score checksum {got} != {checksum}"));
            }
        }
        (Command::Combine(args), Expected::Scores { checksum }) => {
            let bundle = load_bundle(&args.bundle)?;
            let weights_doc = combine_weights_doc(&args)?;
            let weights = weights_doc.to_weights().map_err(CliError::Data)?;
            let rows = score_rows(&compute_combine(&bundle, &weights, args.seed)?);
            let got = rows_checksum(&rows);
            if got != *checksum {
                return mismatch(format!("combined checksum {got} != {checksum}"));
            }
        }
        (Command::Select(args), Expected::SelectionIds { checksum }) => {
            let bundle = load_bundle(&args.bundle)?;
            let id = parse_strategy(&args.strategy)?;
            let selection = compute_select(&bundle, id, args.k, args.seed)?;
            let doc = SelectionDoc::from_selection(&selection, stanza.clone());
            let got = doc.checksum();
            if got != *checksum {
                return mismatch(format!("selection checksum {got} != {checksum}"));
            }
        }
        (Command::Eval(args), Expected::MeanAccuracy { mean_accuracy }) => {
            let bundle = load_bundle(&args.bundle)?;
            let mut cfg = args.eval.to_config()?;
            let against = args.against.as_deref() == Some("classic");
            let mode = if let Some(path) = &args.selection {
                let doc: SelectionDoc = serde_json::from_str(&std::fs::read_to_string(path)?)?;
                let selection = doc.to_selection();
                cfg.k_shot = selection.k_per_class;
                EvalMode::Fixed(selection)
            } else if let Some(name) = &args.strategy {
                let id = parse_strategy(name)?;
                EvalMode::Fixed(compute_select(&bundle, id, cfg.k_shot, args.seed)?)
            } else {
                EvalMode::Classic
            };
            let report = compute_eval(&bundle, &mode, &cfg, against)?;
            if report.mean_accuracy.to_bits() != mean_accuracy.to_bits() {
                return mismatch(format!(
                    "mean accuracy {} != {}",
                    report.mean_accuracy, mean_accuracy
                ));
            }
        }
        (Command::Sweep(args), Expected::SweepBenefits { benefits }) => {
            let bundle = load_bundle(&args.bundle)?;
            let id = parse_strategy(&args.strategy)?;
            let shots = parse_shot_list(&args.shots)?;
            let distance = Distance::parse(&args.distance)
                .ok_or_else(|| CliError::Data("bad distance".into()))?;
            let cfg = EvalConfig {
                n_way: args.ways,
                k_shot: 5,
                q_query: args.queries,
                n_tasks: args.tasks,
                distance,
                seed: args.episode_seed,
            };
            let rows = compute_sweep(&bundle, id, &shots, &cfg, args.seed)?;
            let got: Vec<f64> = rows.iter().map(|r| r.benefit).collect();
            if got.len() != benefits.len()
                || got
                    .iter()
                    .zip(benefits.iter())
                    .any(|(a, b)| a.to_bits() != b.to_bits())
            {
                return mismatch(format!("sweep benefits {got:?} != {benefits:?}"));
            }
        }
        (Command::Report(args), Expected::SweepBenefits { benefits }) => {
            let bundle = load_bundle(&args.bundle)?;
            let cfg = args.eval.to_config()?;
            let strategies: Vec<StrategyId> = args
                .strategies
                .split(',')
                .map(|s| parse_strategy(s.trim()))
                .collect::<Result<_>>()?;
            let rows = compute_report_rows(&bundle, &strategies, &cfg, args.seed, 1)?;
            let got: Vec<f64> = rows
                .iter()
                .filter_map(|r| r.outcome.as_ref().ok().map(|&(_, _, b)| b))
                .collect();
            if got.len() != benefits.len()
                || got
                    .iter()
                    .zip(benefits.iter())
                    .any(|(a, b)| a.to_bits() != b.to_bits())
            {
                return mismatch(format!("report benefits {got:?} != {benefits:?}"));
            }
        }
        (Command::Search(args), Expected::Subset { subset, final_mean_accuracy }) => {
            let bundle = load_bundle(&args.bundle)?;
            let method = SearchMethod::parse(&args.method)
                .ok_or_else(|| CliError::Data("bad method".into()))?;
            let full_cfg = args.eval.to_config()?;
            let computed =
                compute_search(
                    &bundle,
                    method,
                    args.seed,
                    args.search_tasks,
                    args.search_queries,
                    &full_cfg,
                )?;
            let got: Vec<String> = computed
                .result
                .subset
                .iter()
                .map(|id| id.as_str().to_string())
                .collect();
            if got != *subset {
                return mismatch(format!("subset {got:?} != {subset:?}"));
            }
            let got_mean = computed.final_report.as_ref().map(|r| r.mean_accuracy);
            let same = match (got_mean, final_mean_accuracy) {
                (None, None) => true,
                (Some(a), Some(b)) => a.to_bits() == b.to_bits(),
                _ => false,
            };
            if !same {
                return mismatch(format!("final accuracy {got_mean:?} != {final_mean_accuracy:?}"));
            }
        }
        (_, expected) => {
            return Err(CliError::Data(format!(
                "stanza command and expected outcome disagree: {expected:?}"
            )))
        }
    }
    Ok(())
}
