use core::fmt;

use crate::model::StrategyId;

/// Errors surfaced by scoring, selection, search and evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// A required input collection was empty.
    EmptyInput(&'static str),
    /// The bundle carries no probability trace but the operation needs one.
    MissingProbTrace,
    /// The bundle carries no loss trace but the operation needs one.
    MissingLossTrace,
    /// The bundle carries no linear head but the operation needs one.
    MissingHead,
    /// Epoch window outside [1, n_epochs].
    WindowOutOfRange { window: usize, epochs: usize },
    /// Run or epoch index outside the recorded trace.
    TraceIndexOutOfRange {
        run: usize,
        epoch: usize,
        runs: usize,
        epochs: usize,
    },
    /// Neighbour count must be smaller than the select pool.
    NeighborCountTooLarge { m: usize, pool: usize },
    /// A class's select pool is too small for the requested shot count.
    InsufficientPool { class: u32, have: usize, need: usize },
    /// A class's query pool is too small for the requested query count.
    InsufficientQueryPool { class: u32, have: usize, need: usize },
    /// Fewer eligible classes than ways requested.
    InsufficientClasses { have: usize, need: usize },
    /// Active-learning selection needs one recorded epoch per step.
    InsufficientEpochs { have: usize, need: usize },
    /// Every class pair in the head has identical weight rows.
    DegenerateHead,
    /// Greedy budget exceeds the pool size.
    BudgetTooLarge { budget: usize, pool: usize },
    /// The select pool is empty.
    EmptyPool,
    /// Glister needs a non-empty validation pool.
    EmptyValidationPool,
    /// Score vectors passed to the combiner disagree in length.
    LengthMismatch { expected: usize, got: usize },
    /// No strictly positive weight was supplied to the combiner.
    ZeroWeights,
    /// A provided score vector has no weight entry.
    MissingWeight(StrategyId),
    /// The same strategy was supplied twice to the combiner.
    DuplicateStrategy(StrategyId),
    /// A shot count appears twice in a sweep.
    DuplicateShotCount(usize),
    /// Non-finite value in an input that must be finite.
    NonFinite(&'static str),
    /// The cross-validation grid is empty.
    EmptyGrid,
    /// The constrained design cannot satisfy the per-strategy minimum.
    InfeasibleDesign { n_combos: usize, min_count: usize },
    /// A fixed selection does not cover an episode class.
    ClassMissingFromSelection(u32),
    /// Array length disagrees with the declared dimensions.
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    /// Generator or evaluation configuration is out of range.
    BadConfig(&'static str),
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::EmptyInput(what) => write!(f, "empty input: {what}"),
            CoreError::MissingProbTrace => write!(f, "missing trace: bundle has no prob_trace"),
            CoreError::MissingLossTrace => write!(f, "missing trace: bundle has no loss_trace"),
            CoreError::MissingHead => write!(f, "bundle has no linear head"),
            CoreError::WindowOutOfRange { window, epochs } => {
                write!(f, "window {window} outside [1, {epochs}]")
            }
            CoreError::TraceIndexOutOfRange {
                run,
                epoch,
                runs,
                epochs,
            } => write!(
                f,
                "trace index (run {run}, epoch {epoch}) outside {runs} runs x {epochs} epochs"
            ),
            CoreError::NeighborCountTooLarge { m, pool } => {
                write!(f, "{m} neighbours requested but select pool has {pool} samples")
            }
            CoreError::InsufficientPool { class, have, need } => {
                write!(f, "class {class} select pool has {have} samples, need {need}")
            }
            CoreError::InsufficientQueryPool { class, have, need } => {
                write!(f, "class {class} query pool has {have} samples, need {need}")
            }
            CoreError::InsufficientClasses { have, need } => {
                write!(f, "{have} classes have sufficient pools, need {need}")
            }
            CoreError::InsufficientEpochs { have, need } => {
                write!(f, "{have} recorded epochs, need {need} (one per selection step)")
            }
            CoreError::DegenerateHead => write!(f, "degenerate head"),
            CoreError::BudgetTooLarge { budget, pool } => {
                write!(f, "budget {budget} exceeds pool size {pool}")
            }
            CoreError::EmptyPool => write!(f, "select pool is empty"),
            CoreError::EmptyValidationPool => write!(f, "validation pool is empty"),
            CoreError::LengthMismatch { expected, got } => {
                write!(f, "score vector length {got}, expected {expected}")
            }
            CoreError::ZeroWeights => write!(f, "all combination weights are zero"),
            CoreError::MissingWeight(id) => write!(f, "no weight supplied for strategy {id}"),
            CoreError::DuplicateStrategy(id) => write!(f, "strategy {id} supplied twice"),
            CoreError::DuplicateShotCount(k) => write!(f, "duplicate shot count {k}"),
            CoreError::NonFinite(what) => write!(f, "non-finite value in {what}"),
            CoreError::EmptyGrid => write!(f, "empty lambda grid"),
            CoreError::InfeasibleDesign { n_combos, min_count } => write!(
                f,
                "cannot include every strategy {min_count} times in {n_combos} combinations"
            ),
            CoreError::ClassMissingFromSelection(class) => {
                write!(f, "selection has no list for class {class}")
            }
            CoreError::ShapeMismatch {
                what,
                expected,
                got,
            } => write!(f, "shape mismatch in {what}: expected {expected}, got {got}"),
            CoreError::BadConfig(what) => write!(f, "bad configuration: {what}"),
        }
    }
}

impl core::error::Error for CoreError {}

pub type Result<T> = core::result::Result<T, CoreError>;
