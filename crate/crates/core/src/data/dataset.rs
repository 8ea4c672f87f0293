use std::collections::BTreeMap;

use crate::data::schema::Label;
use crate::error::{Error, Result};

/// Numeric feature matrix with binary labels, indexed by class for
/// stratified sampling. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    feature_names: Vec<String>,
    features: Vec<f64>,
    labels: Vec<Label>,
    categories: Vec<String>,
    by_class: BTreeMap<Label, Vec<usize>>,
}

/// Borrowed view of one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledSample<'a> {
    pub index: usize,
    pub features: &'a [f64],
    pub label: Label,
    pub category: &'a str,
}

impl Dataset {
    pub fn new(
        feature_names: Vec<String>,
        features: Vec<f64>,
        labels: Vec<Label>,
        categories: Vec<String>,
    ) -> Result<Self> {
        let width = feature_names.len();
        if width == 0 {
            return Err(Error::Schema("dataset has no feature columns".into()));
        }
        if features.len() != width * labels.len() {
            return Err(Error::dimension(
                "dataset",
                format!(
                    "{} values for {} rows of width {width}",
                    features.len(),
                    labels.len()
                ),
            ));
        }
        let categories = if categories.is_empty() {
            labels.iter().map(|l| l.name().to_string()).collect()
        } else {
            categories
        };
        if categories.len() != labels.len() {
            return Err(Error::dimension("dataset", "category metadata length differs from labels"));
        }
        let mut by_class: BTreeMap<Label, Vec<usize>> = BTreeMap::new();
        for (i, l) in labels.iter().enumerate() {
            by_class.entry(*l).or_default().push(i);
        }
        Ok(Self {
            feature_names,
            features,
            labels,
            categories,
            by_class,
        })
    }

    /// Builds a dataset from rows; feature names default to `f0, f1, ...`.
    pub fn from_rows(rows: &[Vec<f64>], labels: &[Label]) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::dimension("dataset", "ragged rows"));
        }
        Self::new(
            (0..width).map(|i| format!("f{i}")).collect(),
            rows.concat(),
            labels.to_vec(),
            Vec::new(),
        )
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn width(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.features[i * w..(i + 1) * w]
    }

    pub fn label(&self, i: usize) -> Label {
        self.labels[i]
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn sample(&self, i: usize) -> LabeledSample<'_> {
        LabeledSample {
            index: i,
            features: self.row(i),
            label: self.labels[i],
            category: &self.categories[i],
        }
    }

    pub fn samples(&self) -> impl Iterator<Item = LabeledSample<'_>> {
        (0..self.len()).map(|i| self.sample(i))
    }

    /// Classes present, in ascending order.
    pub fn classes(&self) -> Vec<Label> {
        self.by_class.keys().copied().collect()
    }

    pub fn class_indices(&self, label: Label) -> &[usize] {
        self.by_class.get(&label).map_or(&[], Vec::as_slice)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.row(i)[j]).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.features
    }

    /// Keeps the given columns, in the given order.
    pub fn select_columns(&self, columns: &[usize]) -> Result<Dataset> {
        if let Some(&bad) = columns.iter().find(|&&c| c >= self.width()) {
            return Err(Error::dimension(
                "select_columns",
                format!("column {bad} out of range for width {}", self.width()),
            ));
        }
        let mut features = Vec::with_capacity(columns.len() * self.len());
        for i in 0..self.len() {
            let row = self.row(i);
            features.extend(columns.iter().map(|&c| row[c]));
        }
        Dataset::new(
            columns.iter().map(|&c| self.feature_names[c].clone()).collect(),
            features,
            self.labels.clone(),
            self.categories.clone(),
        )
    }

    /// Scales every row to unit Euclidean norm. All-zero rows are kept as-is
    /// and counted in the second return value.
    pub fn l2_normalized(&self) -> (Dataset, usize) {
        let mut out = self.clone();
        let w = self.width();
        let mut zero_rows = 0;
        for row in out.features.chunks_exact_mut(w) {
            if !normalize_in_place(row) {
                zero_rows += 1;
            }
        }
        if zero_rows > 0 {
            log::warn!("{zero_rows} all-zero row(s) left unnormalized");
        }
        (out, zero_rows)
    }
}

/// Normalizes `row` to unit norm; returns false (leaving it untouched) for
/// the zero vector.
pub fn normalize_in_place(row: &mut [f64]) -> bool {
    let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return false;
    }
    for v in row.iter_mut() {
        *v /= norm;
    }
    true
}
