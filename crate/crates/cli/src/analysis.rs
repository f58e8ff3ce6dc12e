//! Sensitivity tables for one vector of pair differences.

use balmatch::multitest::{corrected_pvalue, MvnOptions};
use balmatch::scores::{compute_scores, normalized_weight_curve, statistic_value, StatFamily};
use balmatch::sens::{amplify, hl_interval, sensitivity_table, sensitivity_value, AmplificationPoint, BoundMethod, ExactOptions, GammaModel};
use balmatch::Differences;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AtStage, CliError, Stage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

/// One Γ row; `bounds[k]` belongs to the k-th family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensRow {
    pub gamma: f64,
    pub bounds: Vec<Bounds>,
    /// Joint bound over all families, when requested.
    pub combined: Option<f64>,
    pub combined_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HlRow {
    pub gamma: f64,
    /// `None` for families without a fixed score total.
    pub estimates: Vec<Option<(f64, f64)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySummary {
    pub family: String,
    pub statistic: f64,
    pub sum_q: f64,
    /// Largest Γ with upper bound <= α; 0 when not significant at Γ = 1.
    pub sensitivity_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityAnalysis {
    pub families: Vec<FamilySummary>,
    pub method: String,
    pub alpha: f64,
    pub rows: Vec<SensRow>,
    pub hl: Vec<HlRow>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisOptions {
    pub alpha: f64,
    pub exact: bool,
    pub combine: bool,
    pub with_hl: bool,
}

impl AnalysisOptions {
    pub fn method(&self) -> BoundMethod {
        if self.exact {
            BoundMethod::Exact(ExactOptions::default())
        } else {
            BoundMethod::Normal
        }
    }
}

pub fn analyze(y: &Differences, families: &[StatFamily], gammas: &[f64], opts: AnalysisOptions) -> Result<SensitivityAnalysis, CliError> {
    let method = opts.method();
    let mut summaries = Vec::with_capacity(families.len());
    let mut columns = Vec::with_capacity(families.len());
    for &f in families {
        let s = compute_scores(y, f).at(Stage::Scores)?;
        let t = statistic_value(&s);
        let gstar = sensitivity_value(&s, t, opts.alpha, method).at(Stage::Sens)?;
        columns.push(sensitivity_table(&s, t, gammas, method).at(Stage::Sens)?);
        summaries.push(FamilySummary { family: f.to_string(), statistic: t, sum_q: s.sum_q(), sensitivity_value: gstar });
    }
    let combined = if opts.combine && families.len() >= 2 {
        let mvn = MvnOptions::default();
        gammas
            .par_iter()
            .map(|&g| {
                let model = GammaModel::new(g).at(Stage::Multitest)?;
                let j = corrected_pvalue(y, families, model, &mvn).at(Stage::Multitest)?;
                Ok(Some((j.corrected, j.error)))
            })
            .collect::<Result<Vec<_>, CliError>>()?
    } else {
        vec![None; gammas.len()]
    };
    let rows = gammas
        .iter()
        .enumerate()
        .map(|(i, &g)| SensRow {
            gamma: g,
            bounds: columns.iter().map(|c| Bounds { lower: c[i].bounds.lower, upper: c[i].bounds.upper }).collect(),
            combined: combined[i].map(|c| c.0),
            combined_error: combined[i].map(|c| c.1),
        })
        .collect();
    let hl = if opts.with_hl { hl_table(y, families, gammas)? } else { Vec::new() };
    Ok(SensitivityAnalysis {
        families: summaries,
        method: if opts.exact { "exact" } else { "normal" }.into(),
        alpha: opts.alpha,
        rows,
        hl,
    })
}

pub fn hl_table(y: &Differences, families: &[StatFamily], gammas: &[f64]) -> Result<Vec<HlRow>, CliError> {
    gammas
        .par_iter()
        .map(|&g| {
            let model = GammaModel::new(g).at(Stage::Hl)?;
            let estimates = families
                .iter()
                .map(|&f| {
                    if !f.is_rank_based() {
                        return Ok(None);
                    }
                    let e = hl_interval(y, f, model).at(Stage::Hl)?;
                    Ok(Some((e.min_estimate, e.max_estimate)))
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            Ok(HlRow { gamma: g, estimates })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplificationCurve {
    pub gamma: f64,
    pub points: Vec<AmplificationPoint>,
}

/// Default Λ grid: 40 points from 1.25 Γ to 11 Γ.
pub fn default_lambdas(gamma: f64) -> Vec<f64> {
    (1..=40).map(|k| gamma * (1.0 + 0.25 * k as f64)).collect()
}

/// Curve through `gamma`, keeping only the Λ values above it.
pub fn amplification(gamma: f64, lambdas: &[f64]) -> Result<AmplificationCurve, CliError> {
    let keep: Vec<f64> = lambdas.iter().copied().filter(|&l| l > gamma).collect();
    Ok(AmplificationCurve { gamma, points: amplify(gamma, &keep).at(Stage::Amplify)? })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightCurve {
    pub family: String,
    pub points: Vec<(f64, f64)>,
}

/// Normalised score curves of the rank-based families for `n` pairs.
pub fn weight_curves(families: &[StatFamily], n: usize) -> Result<Vec<WeightCurve>, CliError> {
    families
        .iter()
        .filter(|f| f.is_rank_based())
        .map(|&f| Ok(WeightCurve { family: f.to_string(), points: normalized_weight_curve(f, n).at(Stage::Scores)? }))
        .collect()
}
