use std::ops::AddAssign;

/// Binary confusion counts with "abnormal" as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        Self { tp, fp, tn, fn_ }
    }

    /// Records one prediction; `true` means abnormal.
    pub fn record(&mut self, actual_abnormal: bool, predicted_abnormal: bool) {
        match (actual_abnormal, predicted_abnormal) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

impl AddAssign for Confusion {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.tn += o.tn;
        self.fn_ += o.fn_;
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Detection metrics as fractions in `[0, 1]`; a ratio with a zero
/// denominator is reported as 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub counts: Confusion,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub far: f64,
    pub accuracy: f64,
}

impl MetricsReport {
    pub fn from_counts(counts: Confusion) -> Self {
        let Confusion { tp, fp, tn, fn_ } = counts;
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            counts,
            precision,
            recall,
            f1,
            far: ratio(fp, fp + tn),
            accuracy: ratio(tp + tn, counts.total()),
        }
    }

    /// Specificity `TN / (TN + FP)`; equals `1 - far` when defined.
    pub fn specificity(&self) -> f64 {
        ratio(self.counts.tn, self.counts.tn + self.counts.fp)
    }

    /// `(name, value)` pairs in percent.
    pub fn percentages(&self) -> [(&'static str, f64); 5] {
        [
            ("precision", 100.0 * self.precision),
            ("recall", 100.0 * self.recall),
            ("f1", 100.0 * self.f1),
            ("far", 100.0 * self.far),
            ("accuracy", 100.0 * self.accuracy),
        ]
    }
}

/// Per-metric mean over several runs, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricSummary {
    pub runs: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub far: f64,
    pub accuracy: f64,
}

impl MetricSummary {
    pub fn mean(reports: &[MetricsReport]) -> Option<Self> {
        if reports.is_empty() {
            return None;
        }
        let n = reports.len() as f64;
        let avg = |f: fn(&MetricsReport) -> f64| 100.0 * reports.iter().map(f).sum::<f64>() / n;
        Some(Self {
            runs: reports.len(),
            precision: avg(|r| r.precision),
            recall: avg(|r| r.recall),
            f1: avg(|r| r.f1),
            far: avg(|r| r.far),
            accuracy: avg(|r| r.accuracy),
        })
    }

    pub fn cells(&self) -> [String; 5] {
        [self.precision, self.recall, self.f1, self.far, self.accuracy].map(|v| format!("{v:.2}"))
    }
}
