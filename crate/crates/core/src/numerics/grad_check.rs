//! Central finite-difference verification of analytic gradients.
//!
//! The function under test returns a [`Probe`]: its scalar value plus a
//! signature of any piecewise structure it passed through (for example the
//! ReLU activation pattern). A coordinate whose `x ± step` probes land on a
//! different piece than the unperturbed point straddles a kink, where the
//! finite difference is not a derivative; such coordinates are excluded and
//! counted rather than compared.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    /// Finite-difference step.
    pub step: f64,
    /// Maximum admissible relative error.
    pub tolerance: f64,
    /// Lower bound on the relative-error denominator, so gradients that are
    /// analytically zero are compared in absolute terms.
    pub floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-4,
            floor: 1e-6,
        }
    }
}

impl GradCheckConfig {
    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }
}

/// One evaluation of the function under test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    pub value: f64,
    pub signature: u64,
}

impl Probe {
    /// A probe of an everywhere-differentiable function.
    pub fn smooth(value: f64) -> Self {
        Self {
            value,
            signature: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub excluded: usize,
    pub max_rel_error: f64,
    pub worst_coordinate: Option<usize>,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
    pub passed: bool,
}

impl GradCheckReport {
    /// Folds another report into this one (for multi-tensor checks).
    pub fn merge(&mut self, other: &GradCheckReport) {
        self.checked += other.checked;
        self.excluded += other.excluded;
        if other.max_rel_error > self.max_rel_error || self.worst_coordinate.is_none() {
            self.max_rel_error = self.max_rel_error.max(other.max_rel_error);
            self.worst_coordinate = other.worst_coordinate;
            self.analytic_at_worst = other.analytic_at_worst;
            self.numeric_at_worst = other.numeric_at_worst;
        }
        self.passed &= other.passed;
    }

    pub fn empty() -> Self {
        Self {
            checked: 0,
            excluded: 0,
            max_rel_error: 0.0,
            worst_coordinate: None,
            analytic_at_worst: 0.0,
            numeric_at_worst: 0.0,
            passed: true,
        }
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares `analytic` against central differences of `f` at `x`.
///
/// `coords` restricts the check to a subset of coordinates (all when `None`).
pub fn grad_check<F>(
    mut f: F,
    x: &[f64],
    analytic: &[f64],
    coords: Option<&[usize]>,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> Result<Probe>,
{
    if analytic.len() != x.len() {
        return Err(Error::dimension(
            "grad_check",
            format!("{} analytic entries for {} inputs", analytic.len(), x.len()),
        ));
    }
    let base = f(x)?;
    if !base.value.is_finite() {
        return Err(Error::Numeric(format!(
            "grad_check: non-finite value {} at the unperturbed point",
            base.value
        )));
    }
    let all: Vec<usize>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = (0..x.len()).collect();
            &all
        }
    };

    let mut report = GradCheckReport::empty();
    let mut point = x.to_vec();
    for &i in coords {
        let original = point[i];
        point[i] = original + cfg.step;
        let plus = f(&point)?;
        point[i] = original - cfg.step;
        let minus = f(&point)?;
        point[i] = original;

        if !plus.value.is_finite() || !minus.value.is_finite() || !analytic[i].is_finite() {
            return Err(Error::Numeric(format!(
                "grad_check: non-finite value at coordinate {i}"
            )));
        }
        if plus.signature != base.signature || minus.signature != base.signature {
            report.excluded += 1;
            continue;
        }
        let numeric = (plus.value - minus.value) / (2.0 * cfg.step);
        let err = relative_error(analytic[i], numeric, cfg.floor);
        report.checked += 1;
        if err > report.max_rel_error || report.worst_coordinate.is_none() {
            report.max_rel_error = err;
            report.worst_coordinate = Some(i);
            report.analytic_at_worst = analytic[i];
            report.numeric_at_worst = numeric;
        }
    }
    report.passed = report.max_rel_error < cfg.tolerance;
    Ok(report)
}
