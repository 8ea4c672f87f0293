//! Mutual-information ranking with correlation-based pruning.

use std::fmt::Write as _;

use crate::data::dataset::Dataset;
use crate::data::schema::{Label, Schema};
use crate::error::{Error, Result};

pub const DEFAULT_CORRELATION_THRESHOLD: f64 = 0.7;
pub const DEFAULT_MI_BINS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionConfig {
    pub target_count: usize,
    pub correlation_threshold: f64,
    pub bins: usize,
}

impl SelectionConfig {
    pub fn for_schema(schema: Schema) -> Self {
        Self {
            target_count: schema.default_target_count(),
            ..Self::default()
        }
    }

    fn validate(&self, width: usize) -> Result<()> {
        if self.target_count == 0 || self.target_count > width {
            return Err(Error::Selection(format!(
                "target count {} must be in 1..={width}",
                self.target_count
            )));
        }
        if !(self.correlation_threshold > 0.0 && self.correlation_threshold < 1.0) {
            return Err(Error::Selection(format!(
                "correlation threshold {} must lie in (0, 1)",
                self.correlation_threshold
            )));
        }
        if self.bins < 2 {
            return Err(Error::Selection(format!("need at least 2 bins, got {}", self.bins)));
        }
        Ok(())
    }
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            target_count: Schema::UnswNb15.default_target_count(),
            correlation_threshold: DEFAULT_CORRELATION_THRESHOLD,
            bins: DEFAULT_MI_BINS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    Kept,
    /// Kept only because too few uncorrelated features survived.
    Readmitted,
    ZeroInformation,
    /// Dropped in favour of a correlated feature with higher MIS.
    Correlated { partner: usize, correlation: f64 },
    BelowCut,
}

impl Decision {
    pub fn is_kept(&self) -> bool {
        matches!(self, Decision::Kept | Decision::Readmitted)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub index: usize,
    pub name: String,
    pub mis: f64,
    pub decision: Decision,
    /// Position in the final kept order.
    pub rank: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSelectionReport {
    pub features: Vec<FeatureRecord>,
    /// Row-major `F x F` Pearson correlations.
    pub correlation: Vec<f64>,
    pub threshold: f64,
    pub target_count: usize,
    kept: Vec<usize>,
}

impl FeatureSelectionReport {
    /// Kept column indices, highest MIS first.
    pub fn kept_indices(&self) -> Vec<usize> {
        self.kept.clone()
    }

    pub fn kept_names(&self) -> Vec<&str> {
        self.kept.iter().map(|&i| self.features[i].name.as_str()).collect()
    }

    pub fn width(&self) -> usize {
        self.features.len()
    }

    pub fn correlation(&self, i: usize, j: usize) -> f64 {
        self.correlation[i * self.width() + j]
    }

    pub fn readmitted(&self) -> usize {
        self.features
            .iter()
            .filter(|f| f.decision == Decision::Readmitted)
            .count()
    }

    /// One line per feature: `name,mis,decision,reason`.
    pub fn to_text(&self) -> String {
        let mut s = String::from("feature,mis,decision,reason\n");
        for f in &self.features {
            let (decision, reason) = match &f.decision {
                Decision::Kept => ("kept", format!("rank {}", f.rank.unwrap_or(0) + 1)),
                Decision::Readmitted => (
                    "kept",
                    format!("rank {} (readmitted to reach target)", f.rank.unwrap_or(0) + 1),
                ),
                Decision::ZeroInformation => ("dropped", "zero information".to_string()),
                Decision::Correlated {
                    partner,
                    correlation,
                } => (
                    "dropped",
                    format!(
                        "correlated with {} ({correlation:.4})",
                        self.features[*partner].name
                    ),
                ),
                Decision::BelowCut => ("dropped", "below target cut".to_string()),
            };
            let _ = writeln!(s, "{},{:.6},{decision},{reason}", f.name, f.mis);
        }
        s
    }

    /// Correlation matrix as CSV with a header row of feature names.
    pub fn correlation_csv(&self) -> String {
        let names: Vec<&str> = self.features.iter().map(|f| f.name.as_str()).collect();
        let mut s = format!("feature,{}\n", names.join(","));
        for (i, n) in names.iter().enumerate() {
            let row: Vec<String> = (0..names.len())
                .map(|j| format!("{:.6}", self.correlation(i, j)))
                .collect();
            let _ = writeln!(s, "{n},{}", row.join(","));
        }
        s
    }
}

/// Mutual information (nats) between a feature discretized into `bins`
/// equal-width bins and the binary label. Constant columns score 0.
pub fn mutual_information(column: &[f64], labels: &[Label], bins: usize) -> f64 {
    let n = column.len();
    if n == 0 {
        return 0.0;
    }
    let (lo, hi) = column
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(hi > lo) {
        return 0.0;
    }
    let mut joint = vec![[0usize; 2]; bins];
    let span = hi - lo;
    for (&v, l) in column.iter().zip(labels) {
        let b = (((v - lo) / span) * bins as f64).floor() as usize;
        joint[b.min(bins - 1)][l.class_id() as usize] += 1;
    }
    let nf = n as f64;
    let py = [0, 1].map(|y| joint.iter().map(|c| c[y]).sum::<usize>() as f64 / nf);
    let mut mi = 0.0;
    for cell in &joint {
        let pb = (cell[0] + cell[1]) as f64 / nf;
        for y in 0..2 {
            if cell[y] > 0 {
                let p = cell[y] as f64 / nf;
                mi += p * (p / (pb * py[y])).ln();
            }
        }
    }
    mi.max(0.0)
}

/// Pearson correlation matrix (row-major). Pairs involving a constant
/// column are 0; the diagonal is 1 for non-constant columns.
pub fn correlation_matrix(ds: &Dataset) -> Vec<f64> {
    let (n, w) = (ds.len(), ds.width());
    let mut centered: Vec<Vec<f64>> = Vec::with_capacity(w);
    for j in 0..w {
        let col = ds.column(j);
        let mean = col.iter().sum::<f64>() / n.max(1) as f64;
        let mut c: Vec<f64> = col.iter().map(|v| v - mean).collect();
        let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            c.iter_mut().for_each(|v| *v /= norm);
        } else {
            c.iter_mut().for_each(|v| *v = 0.0);
        }
        centered.push(c);
    }
    let mut m = vec![0.0; w * w];
    for i in 0..w {
        for j in i..w {
            let r: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum();
            let r = r.clamp(-1.0, 1.0);
            m[i * w + j] = r;
            m[j * w + i] = r;
        }
    }
    m
}

/// Selects `target_count` features: constant columns are discarded, every
/// pair correlated above the threshold loses its lower-MIS member (ties drop
/// the higher column index), and the survivors are ranked by MIS (ties by
/// column index) and cut. If fewer than `target_count` survive, correlated
/// features are readmitted in MIS order.
pub fn sulov_select(ds: &Dataset, cfg: &SelectionConfig) -> Result<FeatureSelectionReport> {
    let w = ds.width();
    cfg.validate(w)?;
    if ds.classes().len() < 2 {
        log::warn!("feature selection on a single-class dataset: every MIS is 0");
    }
    let labels = ds.labels();
    let mis: Vec<f64> = (0..w)
        .map(|j| mutual_information(&ds.column(j), labels, cfg.bins))
        .collect();
    let correlation = correlation_matrix(ds);
    let constant: Vec<bool> = (0..w).map(|j| correlation[j * w + j] == 0.0).collect();

    // `a` outranks `b`: higher MIS, ties to the lower index.
    let outranks = |a: usize, b: usize| mis[a] > mis[b] || (mis[a] == mis[b] && a < b);

    let mut decisions: Vec<Option<Decision>> = vec![None; w];
    for j in 0..w {
        if constant[j] {
            decisions[j] = Some(Decision::ZeroInformation);
        }
    }
    for i in 0..w {
        for j in (i + 1)..w {
            let r = correlation[i * w + j];
            if constant[i] || constant[j] || r.abs() <= cfg.correlation_threshold {
                continue;
            }
            let (winner, loser) = if outranks(i, j) { (i, j) } else { (j, i) };
            let replace = match &decisions[loser] {
                None => true,
                Some(Decision::Correlated { partner, .. }) => outranks(winner, *partner),
                Some(_) => false,
            };
            if replace {
                decisions[loser] = Some(Decision::Correlated {
                    partner: winner,
                    correlation: r,
                });
            }
        }
    }

    let by_rank = |v: &mut Vec<usize>| {
        v.sort_by(|&a, &b| mis[b].total_cmp(&mis[a]).then(a.cmp(&b)));
    };
    let mut survivors: Vec<usize> = (0..w).filter(|&j| decisions[j].is_none()).collect();
    by_rank(&mut survivors);
    let mut kept: Vec<usize> = survivors.iter().copied().take(cfg.target_count).collect();
    for &j in &survivors {
        decisions[j] = Some(if kept.contains(&j) {
            Decision::Kept
        } else {
            Decision::BelowCut
        });
    }
    if kept.len() < cfg.target_count {
        let mut pool: Vec<usize> = (0..w)
            .filter(|&j| matches!(decisions[j], Some(Decision::Correlated { .. })))
            .collect();
        by_rank(&mut pool);
        for j in pool.into_iter().take(cfg.target_count - kept.len()) {
            log::warn!("readmitting correlated feature {} to reach target", ds.feature_names()[j]);
            decisions[j] = Some(Decision::Readmitted);
            kept.push(j);
        }
        if kept.len() < cfg.target_count {
            return Err(Error::Selection(format!(
                "only {} informative features available, target is {}",
                kept.len(),
                cfg.target_count
            )));
        }
        by_rank(&mut kept);
    }

    let mut features: Vec<FeatureRecord> = (0..w)
        .map(|j| FeatureRecord {
            index: j,
            name: ds.feature_names()[j].clone(),
            mis: mis[j],
            decision: decisions[j].clone().expect("every feature decided"),
            rank: None,
        })
        .collect();
    for (r, &j) in kept.iter().enumerate() {
        features[j].rank = Some(r);
    }
    Ok(FeatureSelectionReport {
        features,
        correlation,
        threshold: cfg.correlation_threshold,
        target_count: cfg.target_count,
        kept,
    })
}
