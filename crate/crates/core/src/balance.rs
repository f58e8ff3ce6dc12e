//! Covariate balance constraints.
//!
//! A constraint holds the value of some function `f` at every treated and
//! every control unit plus a tolerance `b`. A match satisfies it when the
//! mean of `f(treated) - f(control)` over matched pairs lies in `[-b, b]`.
//! Because the pair difference separates, the mean depends only on which
//! units are selected:
//!
//! ```text
//! Σ_t Σ_c a_tc (f_t - f_c) = L·Σ_{selected t} f_t - Σ_{selected c} f_c
//! ```
//!
//! so constraints are stored as per-unit value vectors, never as T×C grids.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cardmatch::MatchSolution;
use crate::data::{ColumnKind, CovariateValue, StudyData};

/// Absolute slack allowed when comparing a mean imbalance with its tolerance.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum BalanceError {
    #[error("unknown column {0}")]
    UnknownColumn(String),
    #[error("column {0} is not categorical")]
    NotCategorical(String),
    #[error("column {0} is not numeric")]
    NotNumeric(String),
    #[error("slack must be nonnegative, got {0}")]
    NegativeSlack(f64),
    #[error("tolerance must be nonnegative and finite, got {0}")]
    BadTolerance(f64),
    #[error("column {0} has fewer than two observed values; its standard deviation is undefined")]
    ZeroVariance(String),
    #[error("grid for column {0} must be nonempty and strictly increasing")]
    BadGrid(String),
    #[error("the match selects no units")]
    EmptyMatch,
    #[error("constraint label {0} is used twice")]
    DuplicateLabel(String),
    #[error("constraint {label} has {found} {group} values, data has {expected}")]
    LengthMismatch { label: String, group: &'static str, found: usize, expected: usize },
}

/// One linear balance inequality in separable form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceConstraint {
    pub label: String,
    /// `f` at each treated unit, indexed like `StudyData::treated`.
    pub treated_values: Vec<f64>,
    /// `f` at each control unit, indexed like `StudyData::controls`.
    pub control_values: Vec<f64>,
    pub tolerance: f64,
    /// Set when the constraint was built but is degenerate (for example a
    /// mean constraint on a constant column).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl BalanceConstraint {
    pub fn new(label: impl Into<String>, treated_values: Vec<f64>, control_values: Vec<f64>, tolerance: f64) -> Result<Self, BalanceError> {
        if !(tolerance >= 0.0 && tolerance.is_finite()) {
            return Err(BalanceError::BadTolerance(tolerance));
        }
        Ok(BalanceConstraint { label: label.into(), treated_values, control_values, tolerance, warning: None })
    }

    /// Mean imbalance of `f` for a selection with `ratio` controls per
    /// treated unit.
    pub fn mean_imbalance(&self, treated: &[usize], controls: &[usize], ratio: usize) -> Option<f64> {
        let pairs = ratio * treated.len();
        if pairs == 0 {
            return None;
        }
        let ts: f64 = treated.iter().map(|&t| self.treated_values[t]).sum();
        let cs: f64 = controls.iter().map(|&c| self.control_values[c]).sum();
        Some((ratio as f64 * ts - cs) / pairs as f64)
    }

    pub fn is_satisfied_by(&self, imbalance: f64) -> bool {
        imbalance.abs() <= self.tolerance + FEASIBILITY_TOLERANCE
    }
}

/// Ordered collection of constraints with unique labels.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BalanceSpec {
    pub constraints: Vec<BalanceConstraint>,
}

impl BalanceSpec {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    /// Adds a constraint. An identical constraint already present (the
    /// automatic missingness indicator, typically) is skipped; a different
    /// constraint under an existing label is an error.
    pub fn push(&mut self, c: BalanceConstraint) -> Result<(), BalanceError> {
        if let Some(existing) = self.constraints.iter().find(|e| e.label == c.label) {
            if *existing == c {
                return Ok(());
            }
            return Err(BalanceError::DuplicateLabel(c.label));
        }
        self.constraints.push(c);
        Ok(())
    }

    pub fn extend(&mut self, cs: impl IntoIterator<Item = BalanceConstraint>) -> Result<(), BalanceError> {
        for c in cs {
            self.push(c)?;
        }
        Ok(())
    }

    /// Checks every constraint is sized to `data`.
    pub fn check_sizes(&self, data: &StudyData) -> Result<(), BalanceError> {
        let mut labels = HashSet::new();
        for c in &self.constraints {
            if !labels.insert(c.label.as_str()) {
                return Err(BalanceError::DuplicateLabel(c.label.clone()));
            }
            if c.treated_values.len() != data.n_treated() {
                return Err(BalanceError::LengthMismatch {
                    label: c.label.clone(),
                    group: "treated",
                    found: c.treated_values.len(),
                    expected: data.n_treated(),
                });
            }
            if c.control_values.len() != data.n_controls() {
                return Err(BalanceError::LengthMismatch {
                    label: c.label.clone(),
                    group: "control",
                    found: c.control_values.len(),
                    expected: data.n_controls(),
                });
            }
        }
        Ok(())
    }
}

/// Per-constraint outcome of [`evaluate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceCheck {
    pub label: String,
    pub mean_imbalance: f64,
    pub tolerance: f64,
    pub satisfied: bool,
}

/// Mean imbalance of every constraint over the matched pairs.
pub fn evaluate(spec: &BalanceSpec, matched: &MatchSolution) -> Result<Vec<BalanceCheck>, BalanceError> {
    if matched.selected_treated.is_empty() {
        return Err(BalanceError::EmptyMatch);
    }
    Ok(spec
        .constraints
        .iter()
        .map(|c| {
            let imb = c
                .mean_imbalance(&matched.selected_treated, &matched.selected_controls, matched.ratio)
                .expect("nonempty match");
            BalanceCheck {
                label: c.label.clone(),
                mean_imbalance: imb,
                tolerance: c.tolerance,
                satisfied: c.is_satisfied_by(imb),
            }
        })
        .collect())
}

fn column(data: &StudyData, name: &str) -> Result<usize, BalanceError> {
    data.column_index(name).ok_or_else(|| BalanceError::UnknownColumn(name.to_string()))
}

fn categorical(data: &StudyData, name: &str) -> Result<usize, BalanceError> {
    let k = column(data, name)?;
    if data.schema[k].kind != ColumnKind::Categorical {
        return Err(BalanceError::NotCategorical(name.to_string()));
    }
    Ok(k)
}

fn numeric(data: &StudyData, name: &str) -> Result<usize, BalanceError> {
    let k = column(data, name)?;
    if data.schema[k].kind != ColumnKind::Numeric {
        return Err(BalanceError::NotNumeric(name.to_string()));
    }
    Ok(k)
}

fn indicator<F: Fn(&CovariateValue) -> bool>(data: &StudyData, k: usize, f: F) -> (Vec<f64>, Vec<f64>) {
    let ind = |u: &crate::data::Unit| if f(&u.covariates[k]) { 1.0 } else { 0.0 };
    (data.treated.iter().map(ind).collect(), data.controls.iter().map(ind).collect())
}

/// One zero-tolerance indicator per level, plus one for missing values when
/// the column has any.
pub fn fine_balance(data: &StudyData, column: &str) -> Result<Vec<BalanceConstraint>, BalanceError> {
    near_fine_balance(data, column, 0.0)
}

/// Level indicators with tolerance `slack`, a fraction of the matched count.
pub fn near_fine_balance(data: &StudyData, column: &str, slack: f64) -> Result<Vec<BalanceConstraint>, BalanceError> {
    if slack < 0.0 || slack.is_nan() {
        return Err(BalanceError::NegativeSlack(slack));
    }
    let k = categorical(data, column)?;
    let col = &data.schema[k];
    let mut out = Vec::with_capacity(col.levels.len() + 1);
    for (l, level) in col.levels.iter().enumerate() {
        let (t, c) = indicator(data, k, |v| v.as_level() == Some(l as u32));
        out.push(BalanceConstraint::new(format!("{column}={level}"), t, c, slack)?);
    }
    if data.units().any(|u| u.covariates[k].is_missing()) {
        let (t, c) = indicator(data, k, CovariateValue::is_missing);
        out.push(BalanceConstraint::new(format!("{column}=<missing>"), t, c, slack)?);
    }
    Ok(out)
}

/// Pre-match summary of a numeric column over all units with a value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnSummary {
    pub mean: f64,
    pub sd: f64,
    pub observed: usize,
    pub missing: usize,
}

/// Mean and standard deviation of a numeric column pooled over treated and
/// control units, before matching.
pub fn column_summary(data: &StudyData, column: &str) -> Result<ColumnSummary, BalanceError> {
    let k = numeric(data, column)?;
    let vals: Vec<f64> = data.units().filter_map(|u| u.covariates[k].as_numeric()).collect();
    let missing = data.n_treated() + data.n_controls() - vals.len();
    if vals.len() < 2 {
        return Err(BalanceError::ZeroVariance(column.to_string()));
    }
    Ok(ColumnSummary {
        mean: crate::stats::mean(&vals),
        sd: crate::stats::sample_sd(&vals),
        observed: vals.len(),
        missing,
    })
}

fn missing_indicator(data: &StudyData, column: &str, k: usize) -> Result<Option<BalanceConstraint>, BalanceError> {
    if !data.units().any(|u| u.covariates[k].is_missing()) {
        return Ok(None);
    }
    let (t, c) = indicator(data, k, CovariateValue::is_missing);
    Ok(Some(BalanceConstraint::new(format!("{column}:missing"), t, c, 0.0)?))
}

/// Values of a numeric column with missing entries replaced by the pooled
/// pre-match mean.
fn imputed(data: &StudyData, k: usize, mean: f64) -> (Vec<f64>, Vec<f64>) {
    let v = |u: &crate::data::Unit| u.covariates[k].as_numeric().unwrap_or(mean);
    (data.treated.iter().map(v).collect(), data.controls.iter().map(v).collect())
}

/// Mean balance with tolerance `tolerance_sd` pooled standard deviations.
///
/// Missing values enter `f` as the pooled mean and add a zero-tolerance
/// missingness indicator, so the result has one or two constraints.
pub fn mean_balance(data: &StudyData, column: &str, tolerance_sd: f64) -> Result<Vec<BalanceConstraint>, BalanceError> {
    if !(tolerance_sd >= 0.0 && tolerance_sd.is_finite()) {
        return Err(BalanceError::BadTolerance(tolerance_sd));
    }
    let k = numeric(data, column)?;
    let s = column_summary(data, column)?;
    let (t, c) = imputed(data, k, s.mean);
    let mut main = BalanceConstraint::new(format!("mean({column})"), t, c, tolerance_sd * s.sd)?;
    if s.sd == 0.0 && tolerance_sd > 0.0 {
        main.warning = Some(format!("column {column} is constant; tolerance is zero"));
    }
    let mut out = vec![main];
    out.extend(missing_indicator(data, column, k)?);
    Ok(out)
}

/// Balance of the product of two standardized numeric columns; the same
/// column twice gives the second moment.
pub fn moment_balance(data: &StudyData, column_a: &str, column_b: &str, tolerance: f64) -> Result<Vec<BalanceConstraint>, BalanceError> {
    let ka = numeric(data, column_a)?;
    let kb = numeric(data, column_b)?;
    let sa = column_summary(data, column_a)?;
    let sb = column_summary(data, column_b)?;
    let z = |v: &CovariateValue, s: &ColumnSummary| match v.as_numeric() {
        Some(x) if s.sd > 0.0 => (x - s.mean) / s.sd,
        _ => 0.0,
    };
    let f = |u: &crate::data::Unit| z(&u.covariates[ka], &sa) * z(&u.covariates[kb], &sb);
    let label = if column_a == column_b {
        format!("moment({column_a}^2)")
    } else {
        format!("moment({column_a}*{column_b})")
    };
    let mut out = vec![BalanceConstraint::new(
        label,
        data.treated.iter().map(f).collect(),
        data.controls.iter().map(f).collect(),
        tolerance,
    )?];
    out.extend(missing_indicator(data, column_a, ka)?);
    if kb != ka {
        out.extend(missing_indicator(data, column_b, kb)?);
    }
    Ok(out)
}

/// Indicators `1{x <= g}` at each grid point, with tolerance `slack`.
pub fn quantile_grid_balance(data: &StudyData, column: &str, grid: &[f64], slack: f64) -> Result<Vec<BalanceConstraint>, BalanceError> {
    if slack < 0.0 || slack.is_nan() {
        return Err(BalanceError::NegativeSlack(slack));
    }
    let k = numeric(data, column)?;
    if grid.is_empty() || grid.iter().any(|g| !g.is_finite()) || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(BalanceError::BadGrid(column.to_string()));
    }
    let s = column_summary(data, column)?;
    let (tv, cv) = imputed(data, k, s.mean);
    let mut out = Vec::with_capacity(grid.len() + 1);
    for g in grid {
        out.push(BalanceConstraint::new(
            format!("{column}<={g}"),
            tv.iter().map(|&x| (x <= *g) as u8 as f64).collect(),
            cv.iter().map(|&x| (x <= *g) as u8 as f64).collect(),
            slack,
        )?);
    }
    out.extend(missing_indicator(data, column, k)?);
    Ok(out)
}

/// Interior cut points splitting the pooled pre-match distribution of a
/// numeric column into `groups` equal-probability groups (linear
/// interpolation between order statistics). Repeated cuts are dropped.
pub fn pooled_quantile_grid(data: &StudyData, column: &str, groups: usize) -> Result<Vec<f64>, BalanceError> {
    let k = numeric(data, column)?;
    let mut vals: Vec<f64> = data.units().filter_map(|u| u.covariates[k].as_numeric()).collect();
    if vals.len() < 2 || groups < 2 {
        return Err(BalanceError::BadGrid(column.to_string()));
    }
    vals.sort_by(f64::total_cmp);
    let n = vals.len();
    let mut grid: Vec<f64> = Vec::with_capacity(groups - 1);
    for q in 1..groups {
        let h = (n - 1) as f64 * q as f64 / groups as f64;
        let lo = h.floor() as usize;
        let frac = h - lo as f64;
        let v = if lo + 1 < n { vals[lo] + frac * (vals[lo + 1] - vals[lo]) } else { vals[lo] };
        if grid.last().is_none_or(|&last| v > last) {
            grid.push(v);
        }
    }
    Ok(grid)
}

/// Declarative balance requirement, as read from configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum BalanceDecl {
    Fine {
        column: String,
    },
    NearFine {
        column: String,
        #[serde(default = "default_slack")]
        slack: f64,
    },
    Mean {
        column: String,
        #[serde(default = "default_tolerance_sd")]
        tolerance_sd: f64,
    },
    Moment {
        column_a: String,
        column_b: String,
        tolerance: f64,
    },
    QuantileGrid {
        column: String,
        /// Explicit grid points.
        #[serde(default)]
        grid: Option<Vec<f64>>,
        /// Number of equal-probability groups for a pooled quantile grid.
        #[serde(default)]
        quantiles: Option<usize>,
        #[serde(default)]
        slack: f64,
    },
}

fn default_slack() -> f64 {
    0.01
}

fn default_tolerance_sd() -> f64 {
    0.05
}

/// Builds the constraints of every declaration, in order.
pub fn build_spec(data: &StudyData, decls: &[BalanceDecl]) -> Result<BalanceSpec, BalanceError> {
    let mut spec = BalanceSpec::new();
    for d in decls {
        let cs = match d {
            BalanceDecl::Fine { column } => fine_balance(data, column)?,
            BalanceDecl::NearFine { column, slack } => near_fine_balance(data, column, *slack)?,
            BalanceDecl::Mean { column, tolerance_sd } => mean_balance(data, column, *tolerance_sd)?,
            BalanceDecl::Moment { column_a, column_b, tolerance } => moment_balance(data, column_a, column_b, *tolerance)?,
            BalanceDecl::QuantileGrid { column, grid, quantiles, slack } => {
                let g = match (grid, quantiles) {
                    (Some(g), None) => g.clone(),
                    (None, Some(q)) => pooled_quantile_grid(data, column, *q)?,
                    _ => return Err(BalanceError::BadGrid(column.clone())),
                };
                quantile_grid_balance(data, column, &g, *slack)?
            }
        };
        spec.extend(cs)?;
    }
    Ok(spec)
}
