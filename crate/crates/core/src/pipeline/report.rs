//! Plain-text run records.

use std::fmt::Write;

use crate::pipeline::experiment::RunRecord;
use crate::pipeline::metrics::MetricsReport;

/// `key = value` lines for a metrics report. Fractions are written with
/// round-trip precision so each ratio can be recomputed from the counts.
pub fn metrics_text(m: &MetricsReport) -> String {
    let c = m.counts;
    let mut out = String::new();
    for (k, v) in [("tp", c.tp), ("fp", c.fp), ("tn", c.tn), ("fn", c.fn_)] {
        writeln!(out, "{k} = {v}").unwrap();
    }
    for (k, v) in [
        ("precision", m.precision),
        ("recall", m.recall),
        ("f1", m.f1),
        ("far", m.far),
        ("accuracy", m.accuracy),
    ] {
        writeln!(out, "{k} = {v}").unwrap();
    }
    for (k, v) in m.percentages() {
        writeln!(out, "{k}_percent = {v:.2}").unwrap();
    }
    out
}

/// One run record preceded by the resolved configuration echo. Wall time
/// is left out so reruns produce identical bytes.
pub fn run_text(echo: &str, run: &RunRecord) -> String {
    let mut out = String::new();
    out.push_str("[config]\n");
    out.push_str(echo.trim_end());
    out.push_str("\n\n[run]\n");
    writeln!(out, "seed = {}", run.seed).unwrap();
    let opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), |v| format!("{v}"));
    writeln!(out, "pretrain_tail_loss = {}", opt(run.pretrain_loss)).unwrap();
    writeln!(out, "classifier_tail_loss = {}", opt(run.classifier_loss)).unwrap();
    writeln!(out, "skipped_anchors = {}", run.skipped_anchors).unwrap();
    writeln!(out, "clamped_probabilities = {}", run.clamped).unwrap();
    writeln!(out, "dropped_terms = {}", run.dropped_terms).unwrap();
    out.push_str("\n[metrics]\n");
    out.push_str(&metrics_text(&run.metrics));
    out
}
