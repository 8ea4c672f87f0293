//! CSV ingestion for the supported schemas.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use crate::data::schema::{Label, Schema, NSL_KDD_ATTACKS, UNSW_ATTACK_CATEGORIES};
use crate::error::{Error, Result};

/// One parsed row before categorical encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    /// 1-based line in the source file.
    pub line: usize,
    /// One slot per schema feature; categorical slots hold 0 until encoded.
    pub numeric: Vec<f64>,
    /// Values of the categorical columns, in schema order.
    pub categorical: Vec<String>,
    pub label: Option<Label>,
    /// Original attack category (or "normal").
    pub attack_category: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RawDataset {
    pub schema: Schema,
    pub source: String,
    pub feature_names: Vec<String>,
    /// Positions (within `feature_names`) of categorical features.
    pub categorical_columns: Vec<usize>,
    pub records: Vec<RawRecord>,
}

impl RawDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn width(&self) -> usize {
        self.feature_names.len()
    }
}

/// Whether the label columns must be present.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Labels {
    Required,
    Optional,
}

/// Loads a labelled dataset file.
pub fn load_dataset(path: impl AsRef<Path>, schema: Schema) -> Result<RawDataset> {
    load_records(path, schema, Labels::Required)
}

pub fn load_records(path: impl AsRef<Path>, schema: Schema, labels: Labels) -> Result<RawDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let ds = parse_records(file, &path.display().to_string(), schema, labels)?;
    log::info!("{}: {} records ({})", path.display(), ds.len(), schema);
    Ok(ds)
}

struct Layout {
    /// Column index of each schema feature.
    features: Vec<usize>,
    label: Option<usize>,
    attack_cat: Option<usize>,
    width: usize,
    skip_first: bool,
}

fn parse_err(source: &str, line: usize, detail: impl Into<String>) -> Error {
    Error::Parse {
        path: source.to_string(),
        line,
        detail: detail.into(),
    }
}

fn unsw_layout(source: &str, header: &[String], labels: Labels) -> Result<Layout> {
    let find = |name: &str| header.iter().position(|h| h.eq_ignore_ascii_case(name));
    let mut features = Vec::with_capacity(42);
    for name in Schema::UnswNb15.feature_names() {
        features.push(find(name).ok_or_else(|| {
            Error::Schema(format!("{source}: header is missing UNSW-NB15 column {name:?}"))
        })?);
    }
    let label = find("label");
    let attack_cat = find("attack_cat");
    if labels == Labels::Required && (label.is_none() || attack_cat.is_none()) {
        return Err(Error::Schema(format!(
            "{source}: header must contain attack_cat and label"
        )));
    }
    let expected = 42
        + usize::from(find("id").is_some())
        + usize::from(label.is_some())
        + usize::from(attack_cat.is_some());
    if header.len() != expected {
        return Err(Error::Schema(format!(
            "{source}: {} columns in header, expected {expected} for UNSW-NB15",
            header.len()
        )));
    }
    Ok(Layout {
        features,
        label,
        attack_cat,
        width: header.len(),
        skip_first: true,
    })
}

fn nsl_layout(source: &str, first: &[String], labels: Labels) -> Result<Layout> {
    let has_header = first
        .first()
        .is_some_and(|f| f.parse::<f64>().is_err());
    let width = first.len();
    let with_labels = match width {
        41 if labels == Labels::Optional => false,
        42 | 43 => true,
        _ => {
            return Err(Error::Schema(format!(
                "{source}: {width} columns, expected 43 (41 features, label, difficulty) for NSL-KDD"
            )))
        }
    };
    Ok(Layout {
        features: (0..41).collect(),
        label: with_labels.then_some(41),
        attack_cat: None,
        width,
        skip_first: has_header,
    })
}

fn unsw_label(source: &str, line: usize, label: &str, cat: &str) -> Result<(Label, String)> {
    let binary = match label {
        "0" => Label::Normal,
        "1" => Label::Abnormal,
        other => {
            return Err(Error::Schema(format!(
                "{source}:{line}: label {other:?} is not 0 or 1"
            )))
        }
    };
    let cat = if cat.is_empty() || cat == "-" { "Normal" } else { cat };
    let known = cat.eq_ignore_ascii_case("normal")
        || UNSW_ATTACK_CATEGORIES.iter().any(|c| c.eq_ignore_ascii_case(cat));
    if !known {
        return Err(Error::Schema(format!(
            "{source}:{line}: unknown attack_cat {cat:?}"
        )));
    }
    Ok((binary, cat.to_string()))
}

fn nsl_label(source: &str, line: usize, label: &str) -> Result<(Label, String)> {
    let name = label.trim_end_matches('.').to_ascii_lowercase();
    match NSL_KDD_ATTACKS.iter().find(|(n, _)| *n == name) {
        Some((_, "normal")) => Ok((Label::Normal, "normal".into())),
        Some((_, family)) => Ok((Label::Abnormal, (*family).to_string())),
        None => Err(Error::Schema(format!(
            "{source}:{line}: unknown NSL-KDD label {label:?}"
        ))),
    }
}

/// Parses records from any reader; `source` names it in diagnostics.
pub fn parse_records<R: Read>(
    reader: R,
    source: &str,
    schema: Schema,
    labels: Labels,
) -> Result<RawDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = rdr.records();
    let first = match rows.next() {
        None => return Err(parse_err(source, 1, "file contains no records")),
        Some(r) => r.map_err(|e| parse_err(source, 1, e.to_string()))?,
    };
    let first: Vec<String> = first.iter().map(str::to_string).collect();
    let layout = match schema {
        Schema::UnswNb15 => unsw_layout(source, &first, labels)?,
        Schema::NslKdd => nsl_layout(source, &first, labels)?,
    };

    let feature_names: Vec<String> = schema.feature_names().iter().map(|s| s.to_string()).collect();
    let categorical_columns: Vec<usize> = feature_names
        .iter()
        .enumerate()
        .filter(|(_, n)| schema.is_categorical(n))
        .map(|(i, _)| i)
        .collect();

    let mut records = Vec::new();
    let mut handle = |line: usize, fields: &[&str]| -> Result<()> {
        if fields.len() != layout.width {
            return Err(parse_err(
                source,
                line,
                format!("{} fields, expected {}", fields.len(), layout.width),
            ));
        }
        let mut numeric = vec![0.0; layout.features.len()];
        let mut categorical = Vec::with_capacity(categorical_columns.len());
        for (slot, &col) in layout.features.iter().enumerate() {
            let raw = fields[col];
            if categorical_columns.contains(&slot) {
                categorical.push(raw.to_string());
            } else {
                numeric[slot] = raw.parse::<f64>().map_err(|_| {
                    parse_err(
                        source,
                        line,
                        format!("column {:?}: {raw:?} is not a number", feature_names[slot]),
                    )
                })?;
                if !numeric[slot].is_finite() {
                    return Err(parse_err(source, line, format!("column {:?} is not finite", feature_names[slot])));
                }
            }
        }
        let (label, attack_category) = match (schema, layout.label) {
            (_, None) => (None, None),
            (Schema::UnswNb15, Some(l)) => {
                let cat = layout.attack_cat.map_or("", |c| fields[c]);
                let (lab, cat) = unsw_label(source, line, fields[l], cat)?;
                (Some(lab), Some(cat))
            }
            (Schema::NslKdd, Some(l)) => {
                let (lab, cat) = nsl_label(source, line, fields[l])?;
                (Some(lab), Some(cat))
            }
        };
        records.push(RawRecord {
            line,
            numeric,
            categorical,
            label,
            attack_category,
        });
        Ok(())
    };

    if !layout.skip_first {
        let fields: Vec<&str> = first.iter().map(String::as_str).collect();
        handle(1, &fields)?;
    }
    for row in rows {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(source, line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        if row.len() == 1 && row[0].is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.iter().collect();
        handle(line, &fields)?;
    }
    if records.is_empty() {
        return Err(parse_err(source, 1, "file contains no data records"));
    }
    Ok(RawDataset {
        schema,
        source: source.to_string(),
        feature_names,
        categorical_columns,
        records,
    })
}
