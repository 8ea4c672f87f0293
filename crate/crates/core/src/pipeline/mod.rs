//! Two-stage training, episodic evaluation, metrics and the ablation and
//! sweep experiments.

pub mod config;
mod evaluate;
mod experiment;
mod metrics;
mod report;
mod train;

pub use config::{derive_seed, Stream, TrainConfig, DEFAULT_EVAL_EPISODES};
pub use evaluate::{evaluate, evaluate_counts, EpisodeClassifier, LinearModel, Oracle, PrototypeModel, RawPrototype};
pub use experiment::{
    evaluate_with, run_ablation, run_seed, sweep, train_full, FullModel, ResultTable, RunRecord, SweepParameter,
    TableRow, Variant,
};
pub use metrics::{Confusion, MetricSummary, MetricsReport};
pub use report::{metrics_text, run_text};
pub use train::{
    backbone_checksum, batch_tensor, pretrain_extractor, store_prototypes, support_prototypes, train_classifier,
    train_linear, ClassifierOutcome, LinearOutcome, PretrainOutcome,
};
