use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("a label space needs at least two labels, got {0}")]
    TooFewLabels(usize),
    #[error("label names must be non-empty")]
    EmptyLabelName,
    #[error("duplicate label name `{0}`")]
    DuplicateLabel(String),
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("label index {0} is outside the label space")]
    LabelOutOfSpace(usize),

    #[error("invalid template `{id}`: {reason}")]
    InvalidTemplate { id: String, reason: String },
    #[error("invalid verbalizer: {0}")]
    InvalidVerbalizer(String),
    #[error("instance `{id}` has no field `{field}`")]
    MissingField { id: String, field: String },
    #[error("no token of instance `{id}` fits in {budget} tokens (template needs {fixed})")]
    BudgetExhausted { id: String, budget: usize, fixed: usize },
    #[error("verbalizer has no label tokens")]
    EmptyVerbalizer,
    #[error("expected {expected} verbalizer logits, got {got}")]
    LogitCountMismatch { expected: usize, got: usize },
    #[error("not a probability distribution: {0}")]
    InvalidDistribution(String),
    #[error("empty batch")]
    EmptyBatch,

    #[error("input wrapped with template `{got}` but model is bound to `{expected}`")]
    IncompatibleTemplate { expected: String, got: String },
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("invalid training configuration: {0}")]
    InvalidTrainingConfig(String),

    #[error("ensemble is empty")]
    EmptyEnsemble,
    #[error("ensemble weight must be positive, got {0}")]
    NonPositiveWeight(f64),
    #[error("unlabeled pool is empty")]
    EmptyPool,
    #[error("class `{label}` needs {needed} pseudo-labeled examples but has no candidates")]
    ClassUnfillable { label: String, needed: usize },
    #[error("growth target for class {0} is below its base count")]
    TargetBelowBase(usize),
    #[error("growth target overflows at generation {0}")]
    GrowthOverflow(usize),
    #[error("invalid growth schedule: {0}")]
    InvalidSchedule(String),

    #[error("class `{label}` has {available} examples, {required} required")]
    InsufficientClass { label: String, available: usize, required: usize },
    #[error("pool needs {required} instances, only {available} available")]
    PoolTooSmall { available: usize, required: usize },

    #[error("{predictions} predictions for {gold} gold labels")]
    LengthMismatch { predictions: usize, gold: usize },
    #[error("nothing to evaluate")]
    EmptyEvaluation,

    #[error("invalid configuration: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),
    #[error("instance id `{0}` appears in more than one of train, pool and test")]
    OverlappingIds(String),
}
