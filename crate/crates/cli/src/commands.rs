use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use fslpn_core::data::{load_dataset, load_records, parse_records, Dataset, Label, Labels, Preprocessor, RawDataset, Schema};
use fslpn_core::losses::{class_probability, PrototypeSet};
use fslpn_core::model::init::PROTOTYPES;
use fslpn_core::model::{init_backbone, init_classifier, ModelConfig};
use fslpn_core::numerics::{ParameterSet, Precision, Real, Tensor};
use fslpn_core::pipeline::{
    evaluate_with, metrics_text, pretrain_extractor, run_ablation, run_text, sweep, train_classifier, PrototypeModel,
    ResultTable, SweepParameter, Variant,
};
use fslpn_core::{Error, Result};

use crate::checkpoint::{check_layout, save_checkpoint, Checkpoint};
use crate::config::RunConfig;
use crate::{CliError, Command};

macro_rules! dispatch {
    ($precision:expr, $f:ident($($arg:expr),*)) => {
        match $precision {
            Precision::F32 => $f::<f32>($($arg),*),
            Precision::F64 => $f::<f64>($($arg),*),
        }
    };
}

/// Runs one command with a resolved configuration; returns what to print.
pub fn execute(command: &Command, cfg: &RunConfig, checkpoint: Option<Checkpoint>) -> Result<String, CliError> {
    let start = Instant::now();
    let need = || checkpoint.clone().ok_or_else(|| CliError::Usage(format!("{} requires --checkpoint", command.name())));
    let out = match command {
        Command::SelectFeatures => select_features(cfg)?,
        Command::Pretrain => dispatch!(cfg.train.precision, pretrain(cfg))?,
        Command::Train => dispatch!(cfg.train.precision, train(cfg, &need()?))?,
        Command::Evaluate => dispatch!(cfg.train.precision, evaluate_cmd(cfg, &need()?))?,
        Command::Ablate => dispatch!(cfg.train.precision, ablate(cfg))?,
        Command::Sweep { parameter, values } => {
            let p: SweepParameter = parameter.parse()?;
            let values = if values.is_empty() { p.default_values() } else { values.clone() };
            dispatch!(cfg.train.precision, sweep_cmd(cfg, p, &values))?
        }
        Command::Infer { record, input } => {
            let records = match (record, input) {
                (Some(r), None) => RecordSource::Text(r.clone()),
                (None, Some(p)) => RecordSource::File(p.clone()),
                _ => return Err(CliError::Usage("infer needs exactly one of --record or --input".into())),
            };
            dispatch!(cfg.train.precision, infer(cfg, &need()?, &records))?
        }
    };
    log::info!("{} finished in {:.1}s", command.name(), start.elapsed().as_secs_f64());
    Ok(out)
}

fn required<'a>(path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, CliError> {
    path.as_deref()
        .ok_or_else(|| CliError::Usage(format!("no {what} given (use --dataset or the [data] section)")))
}

fn write_artifact(cfg: &RunConfig, name: &str, content: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    let path = cfg.out_dir.join(name);
    std::fs::write(&path, content).map_err(|e| Error::io(&path, e))?;
    log::info!("wrote {}", path.display());
    Ok(path)
}

/// Wall time lives beside the artifact so the artifact itself is
/// reproducible byte for byte.
fn write_timing(path: &Path, start: Instant) -> Result<()> {
    let mut name = path.as_os_str().to_owned();
    name.push(".timing");
    let text = format!("wall_seconds = {:.3}\n", start.elapsed().as_secs_f64());
    std::fs::write(&name, text).map_err(|e| Error::io(PathBuf::from(&name), e))
}

/// The configuration echo as `#` comment lines.
fn commented(cfg: &RunConfig) -> String {
    cfg.to_text()
        .lines()
        .map(|l| if l.is_empty() { "#\n".to_string() } else { format!("# {l}\n") })
        .collect()
}

fn fit(cfg: &RunConfig) -> Result<(Preprocessor, Dataset), CliError> {
    let raw = load_dataset(required(&cfg.train_path, "training data")?, cfg.schema)?;
    let (pre, _) = Preprocessor::fit(&raw, &cfg.selection())?;
    let ds = transform(&pre, &raw)?;
    Ok((pre, ds))
}

fn transform(pre: &Preprocessor, raw: &RawDataset) -> Result<Dataset> {
    let out = pre.transform(raw)?;
    if out.unknown_categories > 0 {
        log::warn!("{}: {} unseen categorical value(s) mapped to the unknown code", raw.source, out.unknown_categories);
    }
    if out.zero_rows > 0 {
        log::warn!("{}: {} all-zero row(s) left unnormalized", raw.source, out.zero_rows);
    }
    Ok(out.dataset)
}

fn load_test(cfg: &RunConfig, pre: &Preprocessor) -> Result<Dataset, CliError> {
    let raw = load_dataset(required(&cfg.test_path, "test data")?, cfg.schema)?;
    Ok(transform(pre, &raw)?)
}

fn seed(cfg: &RunConfig) -> u64 {
    cfg.train.seeds[0]
}

fn select_features(cfg: &RunConfig) -> Result<String, CliError> {
    let start = Instant::now();
    let raw = load_dataset(required(&cfg.train_path, "training data")?, cfg.schema)?;
    let (pre, report) = Preprocessor::fit(&raw, &cfg.selection())?;
    let path = write_artifact(cfg, "features.txt", &(commented(cfg) + &report.to_text()))?;
    write_artifact(cfg, "correlation.csv", &(commented(cfg) + &report.correlation_csv()))?;
    write_artifact(cfg, "preprocessor.txt", &pre.to_text())?;
    write_timing(&path, start)?;
    Ok(format!("kept {} features: {}\n", pre.width(), pre.kept_names.join(",")))
}

fn loss_csv(cfg: &RunConfig, losses: &[f64]) -> String {
    let mut s = commented(cfg) + "episode,loss\n";
    for (i, l) in losses.iter().enumerate() {
        writeln!(s, "{},{l}", i + 1).unwrap();
    }
    s
}

fn pretrain<T: Real>(cfg: &RunConfig) -> Result<String, CliError> {
    let start = Instant::now();
    let (pre, ds) = fit(cfg)?;
    let model = cfg.model_config(pre.width())?;
    let out = pretrain_extractor::<T>(&ds, &model, &cfg.train, seed(cfg))?;
    let path = cfg.out_dir.join("backbone.ckpt");
    write_artifact(cfg, "pretrain_loss.csv", &loss_csv(cfg, &out.losses))?;
    save_checkpoint(&path, &out.params, &cfg.to_text(), &pre.to_text())?;
    write_timing(&path, start)?;
    let last = out.losses.last().copied().unwrap_or(f64::NAN);
    Ok(format!("pretrained {} episodes, final loss {last:.6}; wrote {}\n", out.losses.len(), path.display()))
}

fn restore<T: Real>(ckpt: &Checkpoint, model: &ModelConfig, with_classifier: bool) -> Result<ParameterSet<T>> {
    let mut expected: ParameterSet<f32> = init_backbone(&model.extractor, &model.head, 0)?;
    let mut optional = vec!["classifier.proj.weight", "classifier.proj.bias", PROTOTYPES];
    if with_classifier {
        init_classifier(&mut expected, model.extractor.channels, &model.classifier, 0)?;
        optional.clear();
        if !ckpt.params.contains(PROTOTYPES) {
            return Err(Error::Parameter(format!("checkpoint lacks tensor {PROTOTYPES}; was it produced by train?")));
        }
        optional.push(PROTOTYPES);
    }
    check_layout(&ckpt.params, &expected, &optional)?;
    Ok(ckpt.params.cast())
}

fn preprocessor(ckpt: &Checkpoint, cfg: &RunConfig) -> Result<Preprocessor> {
    let pre = Preprocessor::from_text(&ckpt.preprocessor)?;
    if pre.encoding.schema != cfg.schema {
        return Err(Error::Schema(format!(
            "checkpoint was trained on {} data but schema is {}",
            pre.encoding.schema, cfg.schema
        )));
    }
    Ok(pre)
}

fn train<T: Real>(cfg: &RunConfig, ckpt: &Checkpoint) -> Result<String, CliError> {
    let start = Instant::now();
    let pre = preprocessor(ckpt, cfg)?;
    let raw = load_dataset(required(&cfg.train_path, "training data")?, cfg.schema)?;
    let ds = transform(&pre, &raw)?;
    let model = cfg.model_config(pre.width())?;
    let backbone = restore::<T>(ckpt, &model, false)?;
    let out = train_classifier(&ds, &backbone, &model, &cfg.train, seed(cfg))?;
    let path = cfg.out_dir.join("model.ckpt");
    write_artifact(cfg, "classifier_loss.csv", &loss_csv(cfg, &out.losses))?;
    save_checkpoint(&path, &out.params, &cfg.to_text(), &ckpt.preprocessor)?;
    write_timing(&path, start)?;
    Ok(format!(
        "trained classifier for {} episodes ({} clamped probabilities); wrote {}\n",
        out.losses.len(),
        out.clamped,
        path.display()
    ))
}

fn evaluate_cmd<T: Real>(cfg: &RunConfig, ckpt: &Checkpoint) -> Result<String, CliError> {
    let start = Instant::now();
    let pre = preprocessor(ckpt, cfg)?;
    let test = load_test(cfg, &pre)?;
    let model = cfg.model_config(pre.width())?;
    let params = restore::<T>(ckpt, &model, true)?;
    let mut clf = PrototypeModel::new(params, &model);
    let metrics = evaluate_with(&test, &mut clf, &cfg.train, seed(cfg))?;
    let s = &cfg.train.shape;
    let mut text = format!("[config]\n{}\n[evaluation]\n", cfg.to_text().trim_end());
    writeln!(text, "seed = {}", seed(cfg)).unwrap();
    writeln!(text, "episodes = {}", cfg.train.eval_episodes).unwrap();
    writeln!(text, "task = {}-way {}-shot, {} queries per class", s.ways, s.shots, s.queries).unwrap();
    writeln!(text, "test_samples = {}", test.len()).unwrap();
    text.push_str("\n[metrics]\n");
    text.push_str(&metrics_text(&metrics));
    let path = write_artifact(cfg, "evaluation.txt", &text)?;
    write_timing(&path, start)?;
    let mut out = String::new();
    for (k, v) in metrics.percentages() {
        writeln!(out, "{k} = {v:.2}%").unwrap();
    }
    Ok(out)
}

fn table_outputs(cfg: &RunConfig, name: &str, table: &ResultTable, start: Instant) -> Result<String> {
    let csv = table.to_csv();
    let path = write_artifact(cfg, &format!("{name}.csv"), &(commented(cfg) + &csv))?;
    let mut runs = String::new();
    for row in &table.rows {
        for run in &row.runs {
            writeln!(runs, "### {} = {}\n", table.key, row.label).unwrap();
            runs.push_str(&run_text(&cfg.to_text(), run));
            runs.push('\n');
        }
        if let Some(f) = &row.failure {
            writeln!(runs, "### {} = {}\nfailure = {f}\n", table.key, row.label).unwrap();
        }
    }
    write_artifact(cfg, &format!("{name}_runs.txt"), &runs)?;
    write_timing(&path, start)?;
    Ok(csv)
}

fn ablate<T: Real>(cfg: &RunConfig) -> Result<String, CliError> {
    let start = Instant::now();
    let (pre, train) = fit(cfg)?;
    let test = load_test(cfg, &pre)?;
    let model = cfg.model_config(pre.width())?;
    let table = run_ablation::<T>(&train, &test, &model, &cfg.train, &Variant::ALL)?;
    Ok(table_outputs(cfg, "ablation", &table, start)?)
}

fn sweep_cmd<T: Real>(cfg: &RunConfig, parameter: SweepParameter, values: &[f64]) -> Result<String, CliError> {
    let start = Instant::now();
    let (pre, train) = fit(cfg)?;
    let test = load_test(cfg, &pre)?;
    let model = cfg.model_config(pre.width())?;
    let table = sweep::<T>(&train, &test, &model, &cfg.train, parameter, values)?;
    Ok(table_outputs(cfg, &format!("sweep_{parameter}"), &table, start)?)
}

pub enum RecordSource {
    Text(String),
    File(PathBuf),
}

/// Prepends a header to a lone UNSW-NB15 record, which the loader needs to
/// locate columns.
fn with_header(schema: Schema, record: &str) -> Result<String> {
    if schema != Schema::UnswNb15 {
        return Ok(record.to_string());
    }
    let fields = record.split(',').count();
    let full = schema.header();
    let features = &full[1..full.len() - 2];
    let header: Vec<&str> = match fields {
        n if n == full.len() => full.clone(),
        n if n == features.len() => features.to_vec(),
        n if n == features.len() + 1 => full[..full.len() - 2].to_vec(),
        n => {
            return Err(Error::Schema(format!(
                "record has {n} fields; expected {}, {} or {} for {schema}",
                features.len(),
                features.len() + 1,
                full.len()
            )))
        }
    };
    Ok(format!("{}\n{record}\n", header.join(",")))
}

fn infer<T: Real>(cfg: &RunConfig, ckpt: &Checkpoint, source: &RecordSource) -> Result<String, CliError> {
    let pre = preprocessor(ckpt, cfg)?;
    let raw = match source {
        RecordSource::Text(r) => parse_records(with_header(cfg.schema, r.trim())?.as_bytes(), "record", cfg.schema, Labels::Optional)?,
        RecordSource::File(p) => load_records(p, cfg.schema, Labels::Optional)?,
    };
    let model = cfg.model_config(pre.width())?;
    let params = restore::<T>(ckpt, &model, true)?;
    let stored = params.get(PROTOTYPES)?.clone();
    let classes: Vec<Label> = (0..stored.shape()[0] as u32)
        .map(|id| Label::from_class_id(id).ok_or_else(|| Error::Prototype(format!("no label for prototype {id}"))))
        .collect::<Result<_>>()?;
    let protos = PrototypeSet::new(stored, classes)?;
    let mut clf = PrototypeModel::new(params, &model);
    let mut out = String::new();
    for record in &raw.records {
        let row = pre.transform_record(&raw, record)?;
        let input = Tensor::new([1, 1, row.len()], row.iter().map(|&v| T::of(v)).collect())?;
        let emb = clf.embed_rows(&input)?;
        let p = class_probability(emb.row(0), &protos)?;
        let best = (0..p.len()).fold(0, |b, i| if p[i] > p[b] { i } else { b });
        write!(out, "label={}", protos.classes[best]).unwrap();
        for (c, v) in protos.classes.iter().zip(&p) {
            write!(out, " p({c})={:.6}", v.as_f64()).unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}
