//! Multi-seed runs, the five-way ablation and one-parameter sweeps.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::losses::ClassificationLoss;
use crate::model::ModelConfig;
use crate::numerics::{ParameterSet, Real};
use crate::pipeline::config::{derive_seed, Stream, TrainConfig};
use crate::pipeline::evaluate::{evaluate, EpisodeClassifier, LinearModel, PrototypeModel, RawPrototype};
use crate::pipeline::metrics::{MetricSummary, MetricsReport};
use crate::pipeline::train::{pretrain_extractor, train_classifier, train_linear, PretrainOutcome};

/// Outcome of one seed's train-and-evaluate cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub seed: u64,
    pub metrics: MetricsReport,
    /// Mean loss over the last tenth of each stage, `None` when the stage
    /// did not run.
    pub pretrain_loss: Option<f64>,
    pub classifier_loss: Option<f64>,
    pub skipped_anchors: usize,
    pub clamped: usize,
    pub dropped_terms: usize,
    pub elapsed: Duration,
}

fn tail_mean(losses: &[f64]) -> Option<f64> {
    if losses.is_empty() {
        return None;
    }
    let k = losses.len().div_ceil(10);
    Some(losses[losses.len() - k..].iter().sum::<f64>() / k as f64)
}

/// Both training stages on `train`.
#[derive(Debug, Clone)]
pub struct FullModel<T> {
    pub params: ParameterSet<T>,
    pub pretrain_losses: Vec<f64>,
    pub classifier_losses: Vec<f64>,
    pub skipped_anchors: usize,
    pub clamped: usize,
    pub dropped_terms: usize,
}

pub fn train_full<T: Real>(train: &Dataset, model: &ModelConfig, cfg: &TrainConfig, seed: u64) -> Result<FullModel<T>> {
    let pre = pretrain_extractor::<T>(train, model, cfg, seed)?;
    finish_full(train, &pre, model, cfg, seed)
}

fn finish_full<T: Real>(
    train: &Dataset,
    pre: &PretrainOutcome<T>,
    model: &ModelConfig,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<FullModel<T>> {
    let cls = train_classifier(train, &pre.params, model, cfg, seed)?;
    Ok(FullModel {
        params: cls.params,
        pretrain_losses: pre.losses.clone(),
        classifier_losses: cls.losses,
        skipped_anchors: pre.skipped_anchors,
        clamped: cls.clamped,
        dropped_terms: cls.dropped_terms,
    })
}

fn record_full<T: Real>(
    full: FullModel<T>,
    test: &Dataset,
    model: &ModelConfig,
    cfg: &TrainConfig,
    seed: u64,
    start: Instant,
) -> Result<RunRecord> {
    let (pretrain_loss, classifier_loss) = (tail_mean(&full.pretrain_losses), tail_mean(&full.classifier_losses));
    let mut clf = PrototypeModel::new(full.params, model);
    let metrics = evaluate_with(test, &mut clf, cfg, seed)?;
    Ok(RunRecord {
        seed,
        metrics,
        pretrain_loss,
        classifier_loss,
        skipped_anchors: full.skipped_anchors,
        clamped: full.clamped,
        dropped_terms: full.dropped_terms,
        elapsed: start.elapsed(),
    })
}

/// Evaluates on `test` with the configured shape and episode count.
pub fn evaluate_with(
    test: &Dataset,
    clf: &mut dyn EpisodeClassifier,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<MetricsReport> {
    evaluate(test, clf, cfg.shape, cfg.eval_episodes, derive_seed(seed, Stream::Evaluation))
}

/// Trains both stages on `train` and evaluates on `test` for one seed.
pub fn run_seed<T: Real>(
    train: &Dataset,
    test: &Dataset,
    model: &ModelConfig,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<RunRecord> {
    let start = Instant::now();
    let full = train_full::<T>(train, model, cfg, seed)?;
    record_full(full, test, model, cfg, seed, start)
}

/// One row of an ablation or sweep table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub label: String,
    pub runs: Vec<RunRecord>,
    /// First failure among the seeds, if any.
    pub failure: Option<String>,
}

impl TableRow {
    fn collect(label: impl Into<String>, results: Vec<Result<RunRecord>>) -> Self {
        let mut runs = Vec::new();
        let mut failure = None;
        for r in results {
            match r {
                Ok(run) => runs.push(run),
                Err(e) => {
                    failure.get_or_insert_with(|| e.to_string());
                }
            }
        }
        let label = label.into();
        if let Some(f) = &failure {
            log::warn!("{label}: {f}");
        }
        Self { label, runs, failure }
    }

    pub fn summary(&self) -> Option<MetricSummary> {
        MetricSummary::mean(&self.runs.iter().map(|r| r.metrics).collect::<Vec<_>>())
    }
}

/// A labelled set of rows sharing one key column.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub key: String,
    pub rows: Vec<TableRow>,
}

impl ResultTable {
    pub fn row(&self, label: &str) -> Option<&TableRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    /// Comma-separated table, percentages to two decimals.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header = [&self.key as &str, "runs", "precision", "recall", "f1", "far", "accuracy", "note"];
        let mut write = |fields: Vec<String>| w.write_record(&fields).expect("in-memory csv write");
        write(header.iter().map(|s| s.to_string()).collect());
        for row in &self.rows {
            let cells = match row.summary() {
                Some(s) => s.cells().to_vec(),
                None => vec![String::new(); 5],
            };
            let mut fields = vec![row.label.clone(), row.runs.len().to_string()];
            fields.extend(cells);
            fields.push(row.failure.as_ref().map(|f| format!("failed: {f}")).unwrap_or_default());
            write(fields);
        }
        String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv output is utf-8")
    }
}

/// Rows of the two-stage ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Prototypes over the input features.
    RawPrototype,
    /// Plain contrastive extractor, dense classifier.
    Linear,
    /// Plain contrastive extractor, prototype classifier with NLL.
    Prototype,
    /// Class-temperature extractor, prototype classifier with NLL.
    PrototypeCii,
    /// Class-temperature extractor, infomax plus distance regularizer.
    Full,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::RawPrototype,
        Variant::Linear,
        Variant::Prototype,
        Variant::PrototypeCii,
        Variant::Full,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::RawPrototype => "PN",
            Variant::Linear => "F(·) + linerclassifier",
            Variant::Prototype => "F(·) + PN",
            Variant::PrototypeCii => "F(·) + PN + CII",
            Variant::Full => "F(·) + PN +CII + SPinfomax (ours)",
        }
    }

    fn uses_cii(self) -> bool {
        matches!(self, Variant::PrototypeCii | Variant::Full)
    }

    /// Stage-two settings for this variant.
    pub fn stage2(self, base: &TrainConfig) -> TrainConfig {
        let mut cfg = if self.uses_cii() { base.clone() } else { base.without_cii() };
        if self != Variant::Full {
            cfg.stage2_loss = ClassificationLoss::Nll;
            cfg.alpha = 0.0;
        } else {
            cfg.stage2_loss = ClassificationLoss::Infomax;
        }
        cfg
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn run_variant<T: Real>(
    variant: Variant,
    train: &Dataset,
    test: &Dataset,
    model: &ModelConfig,
    base: &TrainConfig,
    seed: u64,
    backbone: &Result<PretrainOutcome<T>>,
) -> Result<RunRecord> {
    let start = Instant::now();
    let cfg = variant.stage2(base);
    let pre = || backbone.as_ref().map_err(|e| Error::Numeric(format!("pretraining failed: {e}")));
    match variant {
        Variant::RawPrototype => Ok(RunRecord {
            seed,
            metrics: evaluate_with(test, &mut RawPrototype, &cfg, seed)?,
            pretrain_loss: None,
            classifier_loss: None,
            skipped_anchors: 0,
            clamped: 0,
            dropped_terms: 0,
            elapsed: start.elapsed(),
        }),
        Variant::Linear => {
            let pre = pre()?;
            let lin = train_linear(train, &pre.params, model, &cfg, seed)?;
            let classifier_loss = tail_mean(&lin.losses);
            let mut clf = LinearModel::new(lin.params, model);
            Ok(RunRecord {
                seed,
                metrics: evaluate_with(test, &mut clf, &cfg, seed)?,
                pretrain_loss: tail_mean(&pre.losses),
                classifier_loss,
                skipped_anchors: pre.skipped_anchors,
                clamped: 0,
                dropped_terms: 0,
                elapsed: start.elapsed(),
            })
        }
        _ => {
            let full = finish_full(train, pre()?, model, &cfg, seed)?;
            record_full(full, test, model, &cfg, seed, start)
        }
    }
}

/// Trains and evaluates every variant under the same seeds. The two
/// pretrained extractors (plain and class-temperature) are shared between
/// the variants that use them.
pub fn run_ablation<T: Real>(
    train: &Dataset,
    test: &Dataset,
    model: &ModelConfig,
    cfg: &TrainConfig,
    variants: &[Variant],
) -> Result<ResultTable> {
    cfg.validate()?;
    let mut results: Vec<Vec<Result<RunRecord>>> = variants.iter().map(|_| Vec::new()).collect();
    for &seed in &cfg.seeds {
        let needs = |cii: bool| {
            variants
                .iter()
                .any(|&v| v != Variant::RawPrototype && v.uses_cii() == cii)
        };
        let pretrain = |cii: bool| -> Option<Result<PretrainOutcome<T>>> {
            needs(cii).then(|| {
                let c = if cii { cfg.clone() } else { cfg.without_cii() };
                pretrain_extractor::<T>(train, model, &c, seed)
            })
        };
        let (plain, cii) = (pretrain(false), pretrain(true));
        let unused: Result<PretrainOutcome<T>> = Err(Error::Contract("no pretrained extractor".into()));
        for (slot, &v) in results.iter_mut().zip(variants) {
            let backbone = match (&plain, &cii, v.uses_cii()) {
                (Some(p), _, false) => p,
                (_, Some(c), true) => c,
                _ => &unused,
            };
            log::info!("ablation seed {seed}: {v}");
            slot.push(run_variant(v, train, test, model, cfg, seed, backbone));
        }
    }
    Ok(ResultTable {
        key: "variant".into(),
        rows: variants
            .iter()
            .zip(results)
            .map(|(v, r)| TableRow::collect(v.name(), r))
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    ConvLayers,
    OutDim,
    Alpha,
    Shots,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::ConvLayers => "conv_layers",
            SweepParameter::OutDim => "out_dim",
            SweepParameter::Alpha => "alpha",
            SweepParameter::Shots => "shots",
        }
    }

    /// Grid swept by default.
    pub fn default_values(self) -> Vec<f64> {
        match self {
            SweepParameter::ConvLayers => vec![1.0, 5.0, 9.0, 13.0, 17.0],
            SweepParameter::OutDim => vec![16.0, 32.0, 64.0, 128.0, 256.0],
            SweepParameter::Alpha => vec![0.0, 0.1, 0.01, 0.001],
            SweepParameter::Shots => vec![10.0, 5.0, 3.0, 2.0],
        }
    }

    /// Whether pretraining is unaffected by the parameter.
    pub fn stage2_only(self) -> bool {
        matches!(self, SweepParameter::OutDim | SweepParameter::Alpha)
    }

    /// Applies `value` to copies of the configurations.
    pub fn apply(self, value: f64, model: &ModelConfig, cfg: &TrainConfig) -> Result<(ModelConfig, TrainConfig)> {
        let (mut model, mut cfg) = (model.clone(), cfg.clone());
        let count = || {
            if value >= 1.0 && value.fract() == 0.0 && value <= u32::MAX as f64 {
                Ok(value as usize)
            } else {
                Err(Error::Config(format!("{} must be a positive integer, got {value}", self.name())))
            }
        };
        match self {
            SweepParameter::ConvLayers => model.extractor = model.extractor.with_conv_layers(count()?)?,
            SweepParameter::OutDim => model.classifier.out_dim = count()?,
            SweepParameter::Alpha => cfg.alpha = value,
            SweepParameter::Shots => cfg.shape.shots = count()?,
        }
        model.validate()?;
        cfg.validate()?;
        Ok((model, cfg))
    }
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conv_layers" | "conv-layers" => Ok(SweepParameter::ConvLayers),
            "out_dim" | "out-dim" => Ok(SweepParameter::OutDim),
            "alpha" => Ok(SweepParameter::Alpha),
            "shots" => Ok(SweepParameter::Shots),
            other => Err(Error::Config(format!(
                "unknown sweep parameter {other:?} (expected conv_layers, out_dim, alpha or shots)"
            ))),
        }
    }
}

/// One train-and-evaluate cycle per value under shared seeds; failures are
/// recorded per value and the sweep continues.
pub fn sweep<T: Real>(
    train: &Dataset,
    test: &Dataset,
    model: &ModelConfig,
    cfg: &TrainConfig,
    parameter: SweepParameter,
    values: &[f64],
) -> Result<ResultTable> {
    cfg.validate()?;
    // Pretraining does not see alpha or the classifier width, so one
    // extractor per seed serves every value.
    let shared: Vec<Option<Result<PretrainOutcome<T>>>> = cfg
        .seeds
        .iter()
        .map(|&seed| parameter.stage2_only().then(|| pretrain_extractor::<T>(train, model, cfg, seed)))
        .collect();
    let mut rows = Vec::with_capacity(values.len());
    for &value in values {
        let label = format!("{value}");
        log::info!("sweep {parameter} = {label}");
        let results = match parameter.apply(value, model, cfg) {
            Err(e) => vec![Err(e)],
            Ok((m, c)) => cfg
                .seeds
                .iter()
                .zip(&shared)
                .map(|(&seed, pre)| match pre {
                    Some(Ok(pre)) => {
                        let start = Instant::now();
                        finish_full(train, pre, &m, &c, seed).and_then(|f| record_full(f, test, &m, &c, seed, start))
                    }
                    Some(Err(e)) => Err(Error::Numeric(format!("pretraining failed: {e}"))),
                    None => run_seed::<T>(train, test, &m, &c, seed),
                })
                .collect(),
        };
        rows.push(TableRow::collect(label, results));
    }
    Ok(ResultTable {
        key: parameter.name().into(),
        rows,
    })
}
