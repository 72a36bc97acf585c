//! Datasets, splits, metrics, accumulated normalized performance and the
//! training loops.

mod anp;
mod baseline;
mod dataset;
mod metrics;
mod split;
pub mod synthetic;
mod train;

use thiserror::Error;

pub use anp::{anp, PerformanceTensor};
pub use baseline::{fingerprint_features, fingerprint_mlp_baseline, train_mlp, BaselineOutcome, Mlp, MlpConfig};
pub use dataset::{load_dataset, load_proteins, parse_dataset, parse_proteins, Dataset, ProteinTable, Record, Task};
pub use metrics::{
    accuracy, auroc, binary_mcc, evaluate_predictions, mae, mcc_from_confusion, multiclass_mcc, mse, Confusion,
    MetricRecord,
};
pub use split::{
    mono_fingerprint, ood_flags, random_split, read_split, tanimoto_counts, write_split, MonoFingerprint, Partition,
    SplitAssignment,
};
pub use train::{
    evaluate, prepare, train, zscore, EpochRecord, EvalReport, LrSchedule, Prepared, TrainConfig, TrainOutcome,
};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("dataset has no usable records")]
    EmptyDataset,
    #[error("split fractions must be positive and sum to 1, got {0:?}")]
    BadFractions(Vec<f64>),
    #[error("{0}: shapes do not conform")]
    ShapeMismatch(&'static str),
    #[error("anp needs at least 2 models, got {0}")]
    TooFewModels(usize),
    #[error("performance tensor holds a non-finite value at {0:?}")]
    NonFinite((usize, usize, usize)),
    #[error("values have zero variance")]
    DegenerateVariance,
    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },
    #[error("unknown protein {0}")]
    UnknownProtein(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] crate::homp::HompError),
    #[error(transparent)]
    Tensor(#[from] crate::tensor::TensorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
