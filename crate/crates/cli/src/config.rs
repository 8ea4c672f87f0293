//! Run configuration: a plain `key = value` file with `[data]`, `[model]`,
//! `[train]` and `[eval]` sections, layered under command-line overrides.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use fslpn_core::data::{EpisodeShape, Schema, SelectionConfig};
use fslpn_core::losses::ClassificationLoss;
use fslpn_core::model::{blocks_for_conv_layers, ClassifierConfig, ExtractorConfig, HeadConfig, ModelConfig};
use fslpn_core::numerics::Precision;
use fslpn_core::pipeline::TrainConfig;
use fslpn_core::{Error, Result};

pub const SECTIONS: [&str; 4] = ["data", "model", "train", "eval"];

/// Every accepted key with a description of the value it takes. Keys
/// without a section prefix belong before the first section header.
pub const KEYS: &[(&str, &str)] = &[
    ("out_dir", "a path"),
    ("checkpoint", "a path"),
    ("data.train", "a path"),
    ("data.test", "a path"),
    ("data.schema", "unsw_nb15 or nsl_kdd"),
    ("data.target_features", "a positive integer or auto"),
    ("data.correlation_threshold", "a number"),
    ("data.mi_bins", "a positive integer"),
    ("model.conv_layers", "a positive integer"),
    ("model.channels", "a positive integer"),
    ("model.kernel_size", "a positive integer"),
    ("model.head_hidden", "a positive integer"),
    ("model.head_output", "a positive integer"),
    ("model.out_dim", "a positive integer"),
    ("train.learning_rate", "a number"),
    ("train.episodes", "a positive integer"),
    ("train.ways", "a positive integer"),
    ("train.shots", "a positive integer"),
    ("train.queries", "a positive integer"),
    ("train.tau", "a number"),
    ("train.beta", "a number"),
    ("train.alpha", "a number"),
    ("train.stage2_loss", "nll or infomax"),
    ("train.seeds", "a comma-separated list of unsigned integers"),
    ("train.precision", "f32 or f64"),
    ("eval.episodes", "a positive integer"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub train_path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
    pub schema: Schema,
    /// `None` selects the schema's default count.
    pub target_features: Option<usize>,
    pub correlation_threshold: f64,
    pub mi_bins: usize,
    pub conv_layers: usize,
    pub channels: usize,
    pub kernel_size: usize,
    pub head_hidden: usize,
    pub head_output: usize,
    pub out_dim: usize,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let ext = ExtractorConfig::new(1);
        let head = HeadConfig::default();
        let selection = SelectionConfig::default();
        Self {
            out_dir: PathBuf::from("out"),
            checkpoint: None,
            train_path: None,
            test_path: None,
            schema: Schema::UnswNb15,
            target_features: None,
            correlation_threshold: selection.correlation_threshold,
            mi_bins: selection.bins,
            conv_layers: ext.conv_layers(),
            channels: ext.channels,
            kernel_size: ext.kernel_size,
            head_hidden: head.hidden,
            head_output: head.output,
            out_dim: ClassifierConfig::default().out_dim,
            train: TrainConfig::default(),
        }
    }
}

/// Where a setting came from, for diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct Origin<'a> {
    pub source: &'a str,
    pub line: usize,
}

fn nearest_key(key: &str) -> Option<&'static str> {
    let bare = |k: &'static str| k.rsplit('.').next().unwrap_or(k);
    KEYS.iter()
        .map(|(k, _)| *k)
        .map(|k| {
            let d = strsim::levenshtein(key, k).min(strsim::levenshtein(key, bare(k)));
            (d, k)
        })
        .min()
        .filter(|(d, _)| *d <= 3.max(key.len() / 3))
        .map(|(_, k)| k)
}

fn expected(key: &str) -> &'static str {
    KEYS.iter().find(|(k, _)| *k == key).map_or("a value", |(_, t)| t)
}

fn parse_seeds(value: &str) -> Option<Vec<u64>> {
    value
        .split(',')
        .map(|s| s.trim().parse().ok())
        .collect::<Option<Vec<u64>>>()
        .filter(|v| !v.is_empty())
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

type Group<'a> = (Option<&'a str>, Vec<(&'a str, String)>);

impl RunConfig {
    /// Sets one qualified key (`section.name`, or a bare top-level name).
    pub fn set(&mut self, key: &str, value: &str, origin: Origin<'_>) -> Result<()> {
        let err = |detail: String| Error::Parse {
            path: origin.source.to_string(),
            line: origin.line,
            detail,
        };
        let bad = || err(format!("expected {} for {key}, got {value:?}", expected(key)));
        let count = || value.parse::<usize>().ok().filter(|&v| v > 0).ok_or_else(bad);
        let number = || value.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(bad);
        match key {
            "out_dir" => self.out_dir = PathBuf::from(value),
            "checkpoint" => self.checkpoint = opt_path(value),
            "data.train" => self.train_path = opt_path(value),
            "data.test" => self.test_path = opt_path(value),
            "data.schema" => self.schema = value.parse().map_err(|_| bad())?,
            "data.target_features" => {
                self.target_features = if value == "auto" { None } else { Some(count()?) }
            }
            "data.correlation_threshold" => self.correlation_threshold = number()?,
            "data.mi_bins" => self.mi_bins = count()?,
            "model.conv_layers" => self.conv_layers = count()?,
            "model.channels" => self.channels = count()?,
            "model.kernel_size" => self.kernel_size = count()?,
            "model.head_hidden" => self.head_hidden = count()?,
            "model.head_output" => self.head_output = count()?,
            "model.out_dim" => self.out_dim = count()?,
            "train.learning_rate" => self.train.learning_rate = number()?,
            "train.episodes" => self.train.episodes = count()?,
            "train.ways" => self.train.shape.ways = count()?,
            "train.shots" => self.train.shape.shots = count()?,
            "train.queries" => self.train.shape.queries = count()?,
            "train.tau" => self.train.tau = number()?,
            "train.beta" => self.train.beta = number()?,
            "train.alpha" => self.train.alpha = number()?,
            "train.stage2_loss" => self.train.stage2_loss = value.parse::<ClassificationLoss>().map_err(|_| bad())?,
            "train.seeds" => self.train.seeds = parse_seeds(value).ok_or_else(bad)?,
            "train.precision" => self.train.precision = value.parse::<Precision>().map_err(|_| bad())?,
            "eval.episodes" => self.train.eval_episodes = count()?,
            _ => {
                let hint = nearest_key(key).map(|k| format!("; did you mean {k:?}?")).unwrap_or_default();
                return Err(err(format!("unknown key {key:?}{hint}")));
            }
        }
        Ok(())
    }

    /// Applies a configuration text on top of the current values.
    pub fn apply_text(&mut self, text: &str, source: &str) -> Result<()> {
        let mut section: Option<&str> = None;
        for (n, raw) in text.lines().enumerate() {
            let origin = Origin { source, line: n + 1 };
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                let Some(&s) = SECTIONS.iter().find(|&&s| s == name) else {
                    let hint = SECTIONS
                        .iter()
                        .min_by_key(|s| strsim::levenshtein(name, s))
                        .map(|s| format!("; did you mean [{s}]?"))
                        .unwrap_or_default();
                    return Err(Error::Parse {
                        path: source.into(),
                        line: n + 1,
                        detail: format!("unknown section [{name}]{hint}"),
                    });
                };
                section = Some(s);
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Parse {
                    path: source.into(),
                    line: n + 1,
                    detail: format!("expected key = value, got {line:?}"),
                });
            };
            let (k, v) = (k.trim(), v.trim());
            let key = match section {
                Some(s) => format!("{s}.{k}"),
                None => k.to_string(),
            };
            self.set(&key, v, origin)?;
        }
        Ok(())
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text, source)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Fully resolved configuration in the file format.
    pub fn to_text(&self) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let t = &self.train;
        let seeds = t.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(",");
        let target = self.target_features.map_or_else(|| "auto".to_string(), |v| v.to_string());
        let groups: [Group; 5] = [
            (
                None,
                vec![("out_dir", self.out_dir.display().to_string()), ("checkpoint", path(&self.checkpoint))],
            ),
            (
                Some("data"),
                vec![
                    ("train", path(&self.train_path)),
                    ("test", path(&self.test_path)),
                    ("schema", self.schema.to_string()),
                    ("target_features", target),
                    ("correlation_threshold", self.correlation_threshold.to_string()),
                    ("mi_bins", self.mi_bins.to_string()),
                ],
            ),
            (
                Some("model"),
                vec![
                    ("conv_layers", self.conv_layers.to_string()),
                    ("channels", self.channels.to_string()),
                    ("kernel_size", self.kernel_size.to_string()),
                    ("head_hidden", self.head_hidden.to_string()),
                    ("head_output", self.head_output.to_string()),
                    ("out_dim", self.out_dim.to_string()),
                ],
            ),
            (
                Some("train"),
                vec![
                    ("learning_rate", t.learning_rate.to_string()),
                    ("episodes", t.episodes.to_string()),
                    ("ways", t.shape.ways.to_string()),
                    ("shots", t.shape.shots.to_string()),
                    ("queries", t.shape.queries.to_string()),
                    ("tau", t.tau.to_string()),
                    ("beta", t.beta.to_string()),
                    ("alpha", t.alpha.to_string()),
                    ("stage2_loss", t.stage2_loss.name().to_string()),
                    ("seeds", seeds),
                    ("precision", t.precision.name().to_string()),
                ],
            ),
            (Some("eval"), vec![("episodes", t.eval_episodes.to_string())]),
        ];
        let mut s = String::new();
        for (section, entries) in groups {
            if let Some(name) = section {
                writeln!(s, "\n[{name}]").unwrap();
            }
            for (k, v) in entries {
                writeln!(s, "{k} = {v}").unwrap();
            }
        }
        s
    }

    pub fn selection(&self) -> SelectionConfig {
        SelectionConfig {
            target_count: self.target_features.unwrap_or(self.schema.default_target_count()),
            correlation_threshold: self.correlation_threshold,
            bins: self.mi_bins,
        }
    }

    pub fn model_config(&self, input_len: usize) -> Result<ModelConfig> {
        let blocks = blocks_for_conv_layers(self.conv_layers)?;
        let cfg = ModelConfig {
            extractor: ExtractorConfig {
                channels: self.channels,
                kernel_size: self.kernel_size,
                blocks,
                ..ExtractorConfig::new(input_len)
            },
            head: HeadConfig {
                hidden: self.head_hidden,
                output: self.head_output,
            },
            classifier: ClassifierConfig { out_dim: self.out_dim },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks everything that does not depend on the data.
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        EpisodeShape::new(self.train.shape.ways, self.train.shape.shots, self.train.shape.queries)?;
        self.model_config(1).map(|_| ())
    }
}
