//! Categorical encoding, column selection and row normalization.

use std::collections::HashMap;

use crate::data::dataset::{normalize_in_place, Dataset};
use crate::data::load::{RawDataset, RawRecord};
use crate::data::schema::Schema;
use crate::data::selection::{sulov_select, FeatureSelectionReport, SelectionConfig};
use crate::error::{Error, Result};

/// Frequency-ranked integer codes for one categorical feature. The most
/// frequent value gets code 0; ties are ordered lexicographically. Values not
/// seen when fitting map to the reserved code `values.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalEncoding {
    pub feature: String,
    pub values: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl CategoricalEncoding {
    pub fn from_ranked(feature: impl Into<String>, values: Vec<String>) -> Self {
        let lookup = values
            .iter()
            .enumerate()
            .map(|(i, v)| (v.clone(), i))
            .collect();
        Self {
            feature: feature.into(),
            values,
            lookup,
        }
    }

    pub fn unknown_code(&self) -> usize {
        self.values.len()
    }

    /// Code for `value`, and whether it was unseen.
    pub fn encode(&self, value: &str) -> (usize, bool) {
        match self.lookup.get(value) {
            Some(&c) => (c, false),
            None => (self.unknown_code(), true),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodingMap {
    pub schema: Schema,
    /// One encoding per categorical column, in the raw dataset's order.
    pub columns: Vec<CategoricalEncoding>,
}

impl EncodingMap {
    /// Builds the encoding from a training split.
    pub fn fit(raw: &RawDataset) -> Self {
        let columns = raw
            .categorical_columns
            .iter()
            .enumerate()
            .map(|(k, &col)| {
                let mut counts: HashMap<&str, usize> = HashMap::new();
                for r in &raw.records {
                    *counts.entry(r.categorical[k].as_str()).or_default() += 1;
                }
                let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
                ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
                CategoricalEncoding::from_ranked(
                    raw.feature_names[col].clone(),
                    ranked.into_iter().map(|(v, _)| v.to_string()).collect(),
                )
            })
            .collect();
        Self {
            schema: raw.schema,
            columns,
        }
    }

    /// Full-width numeric vector for one record; second value counts unseen
    /// categorical values.
    pub fn encode_record(&self, raw: &RawDataset, record: &RawRecord) -> Result<(Vec<f64>, usize)> {
        if raw.categorical_columns.len() != self.columns.len() {
            return Err(Error::Schema(format!(
                "encoding map covers {} categorical columns, dataset has {}",
                self.columns.len(),
                raw.categorical_columns.len()
            )));
        }
        let mut row = record.numeric.clone();
        let mut unknown = 0;
        for (k, &col) in raw.categorical_columns.iter().enumerate() {
            let enc = &self.columns[k];
            if enc.feature != raw.feature_names[col] {
                return Err(Error::Schema(format!(
                    "encoding map column {:?} does not match dataset column {:?}",
                    enc.feature, raw.feature_names[col]
                )));
            }
            let (code, unseen) = enc.encode(&record.categorical[k]);
            if unseen {
                unknown += 1;
                log::warn!(
                    "{}:{}: unseen {} value {:?} encoded as unknown ({code})",
                    raw.source,
                    record.line,
                    enc.feature,
                    record.categorical[k]
                );
            }
            row[col] = code as f64;
        }
        Ok((row, unknown))
    }

    /// Encodes every record (without normalizing).
    pub fn encode(&self, raw: &RawDataset) -> Result<(Dataset, usize)> {
        let mut features = Vec::with_capacity(raw.len() * raw.width());
        let mut labels = Vec::with_capacity(raw.len());
        let mut categories = Vec::with_capacity(raw.len());
        let mut unknown = 0;
        for r in &raw.records {
            let (row, u) = self.encode_record(raw, r)?;
            unknown += u;
            features.extend(row);
            labels.push(r.label.ok_or_else(|| {
                Error::Schema(format!("{}:{}: record has no label", raw.source, r.line))
            })?);
            categories.push(r.attack_category.clone().unwrap_or_default());
        }
        let ds = Dataset::new(raw.feature_names.clone(), features, labels, categories)?;
        Ok((ds, unknown))
    }
}

/// Output of [`preprocess`].
#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub dataset: Dataset,
    pub unknown_categories: usize,
    pub zero_rows: usize,
}

/// Encodes categorical columns and L2-normalizes every sample.
pub fn preprocess(raw: &RawDataset, map: &EncodingMap) -> Result<Preprocessed> {
    let (encoded, unknown_categories) = map.encode(raw)?;
    let (dataset, zero_rows) = encoded.l2_normalized();
    Ok(Preprocessed {
        dataset,
        unknown_categories,
        zero_rows,
    })
}

/// Everything needed to turn raw records into model inputs: the encoding,
/// the selected columns and the final normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessor {
    pub encoding: EncodingMap,
    /// Selected columns (indices into the schema feature list), in rank order.
    pub kept: Vec<usize>,
    pub kept_names: Vec<String>,
}

impl Preprocessor {
    /// Fits the encoding on `train`, then selects features on the encoded
    /// (not yet normalized) training data.
    pub fn fit(train: &RawDataset, selection: &SelectionConfig) -> Result<(Self, FeatureSelectionReport)> {
        let encoding = EncodingMap::fit(train);
        let (encoded, _) = encoding.encode(train)?;
        let report = sulov_select(&encoded, selection)?;
        let kept = report.kept_indices();
        let kept_names = kept.iter().map(|&i| train.feature_names[i].clone()).collect();
        Ok((
            Self {
                encoding,
                kept,
                kept_names,
            },
            report,
        ))
    }

    pub fn width(&self) -> usize {
        self.kept.len()
    }

    pub fn transform(&self, raw: &RawDataset) -> Result<Preprocessed> {
        self.check_schema(raw)?;
        let (encoded, unknown_categories) = self.encoding.encode(raw)?;
        let (dataset, zero_rows) = encoded.select_columns(&self.kept)?.l2_normalized();
        Ok(Preprocessed {
            dataset,
            unknown_categories,
            zero_rows,
        })
    }

    /// Model input for one (possibly unlabelled) record.
    pub fn transform_record(&self, raw: &RawDataset, record: &RawRecord) -> Result<Vec<f64>> {
        self.check_schema(raw)?;
        let (full, _) = self.encoding.encode_record(raw, record)?;
        let mut row: Vec<f64> = self.kept.iter().map(|&c| full[c]).collect();
        normalize_in_place(&mut row);
        Ok(row)
    }

    fn check_schema(&self, raw: &RawDataset) -> Result<()> {
        if raw.schema != self.encoding.schema {
            return Err(Error::Schema(format!(
                "preprocessor was fitted on {} but data is {}",
                self.encoding.schema, raw.schema
            )));
        }
        Ok(())
    }

    /// `key = value` lines for embedding in configuration echoes.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("schema = {}\n", self.encoding.schema));
        s.push_str(&format!("features = {}\n", self.kept_names.join(",")));
        for c in &self.encoding.columns {
            let vals: Vec<String> = c.values.iter().map(|v| escape(v)).collect();
            s.push_str(&format!("encode.{} = {}\n", c.feature, vals.join("|")));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut schema = None;
        let mut features = None;
        let mut encodings: Vec<(String, Vec<String>)> = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with('[') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: "preprocessor".into(),
                line: n + 1,
                detail: format!("expected key = value, got {line:?}"),
            })?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "schema" => schema = Some(v.parse::<Schema>().map_err(Error::Schema)?),
                "features" => {
                    features = Some(v.split(',').map(|s| s.trim().to_string()).collect::<Vec<_>>())
                }
                _ if k.starts_with("encode.") => {
                    let vals = if v.is_empty() {
                        Vec::new()
                    } else {
                        v.split('|').map(unescape).collect()
                    };
                    encodings.push((k["encode.".len()..].to_string(), vals));
                }
                other => {
                    return Err(Error::Parse {
                        path: "preprocessor".into(),
                        line: n + 1,
                        detail: format!("unknown key {other:?}"),
                    })
                }
            }
        }
        let schema = schema.ok_or_else(|| Error::Format("preprocessor lacks schema".into()))?;
        let kept_names = features.ok_or_else(|| Error::Format("preprocessor lacks features".into()))?;
        let names = schema.feature_names();
        let kept = kept_names
            .iter()
            .map(|f| {
                names
                    .iter()
                    .position(|n| n == f)
                    .ok_or_else(|| Error::Schema(format!("unknown {schema} feature {f:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let columns = encodings
            .into_iter()
            .map(|(f, v)| CategoricalEncoding::from_ranked(f, v))
            .collect();
        Ok(Self {
            encoding: EncodingMap { schema, columns },
            kept,
            kept_names,
        })
    }
}

fn escape(v: &str) -> String {
    v.replace('%', "%25").replace('|', "%7C").replace('\n', "%0A")
}

fn unescape(v: &str) -> String {
    v.replace("%0A", "\n").replace("%7C", "|").replace("%25", "%")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::load::{parse_records, Labels};
    use crate::data::schema::Label;

    fn nsl_text(rows: &[(&str, &str, f64, f64)]) -> String {
        rows.iter()
            .map(|(proto, label, a, b)| {
                let mut f: Vec<String> = vec!["0".into(); 41];
                f[1] = proto.to_string();
                f[2] = "http".into();
                f[3] = "SF".into();
                f[4] = a.to_string();
                f[5] = b.to_string();
                format!("{},{label},20", f.join(","))
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    #[test]
    fn frequency_ranked_codes() {
        let text = nsl_text(&[
            ("udp", "normal", 1.0, 0.0),
            ("tcp", "normal", 1.0, 0.0),
            ("tcp", "neptune", 1.0, 0.0),
            ("icmp", "normal", 1.0, 0.0),
        ]);
        let raw = parse_records(text.as_bytes(), "t", Schema::NslKdd, Labels::Required).unwrap();
        let map = EncodingMap::fit(&raw);
        assert_eq!(map.columns[0].values, vec!["tcp", "icmp", "udp"]);
        assert_eq!(map.columns[0].encode("udp"), (2, false));
        assert_eq!(map.columns[0].encode("sctp"), (3, true));
    }

    #[test]
    fn numeric_row_normalizes_and_unseen_category_is_counted() {
        let train = nsl_text(&[("tcp", "normal", 3.0, 4.0)]);
        let raw = parse_records(train.as_bytes(), "t", Schema::NslKdd, Labels::Required).unwrap();
        let map = EncodingMap::fit(&raw);
        let p = preprocess(&raw, &map).unwrap();
        // tcp -> 0, http -> 0, SF -> 0, so only (3,4) is non-zero.
        assert!((p.dataset.row(0)[4] - 0.6).abs() < 1e-15);
        assert!((p.dataset.row(0)[5] - 0.8).abs() < 1e-15);
        assert_eq!(p.unknown_categories, 0);
        assert_eq!(p.dataset.label(0), Label::Normal);

        let test = nsl_text(&[("sctp", "normal", 3.0, 4.0)]);
        let raw_t = parse_records(test.as_bytes(), "t", Schema::NslKdd, Labels::Required).unwrap();
        let p = preprocess(&raw_t, &map).unwrap();
        assert_eq!(p.unknown_categories, 1);
        // unknown code 1 sits in the protocol slot
        let norm = (1.0f64 + 9.0 + 16.0).sqrt();
        assert!((p.dataset.row(0)[1] - 1.0 / norm).abs() < 1e-15);
    }

    #[test]
    fn preprocessor_text_round_trip() {
        let text = nsl_text(&[
            ("tcp", "normal", 3.0, 4.0),
            ("udp", "neptune", 1.0, 8.0),
            ("tcp", "normal", 2.0, 4.5),
            ("udp", "smurf", 0.5, 9.0),
        ]);
        let raw = parse_records(text.as_bytes(), "t", Schema::NslKdd, Labels::Required).unwrap();
        let cfg = SelectionConfig {
            target_count: 2,
            ..SelectionConfig::default()
        };
        let (p, _) = Preprocessor::fit(&raw, &cfg).unwrap();
        let back = Preprocessor::from_text(&p.to_text()).unwrap();
        assert_eq!(back, p);
        assert_eq!(p.transform(&raw).unwrap().dataset.width(), 2);
    }

    #[test]
    fn escaping_survives_separators() {
        for v in ["a|b", "50%", "x%7Cy"] {
            assert_eq!(unescape(&escape(v)), v);
        }
    }
}
