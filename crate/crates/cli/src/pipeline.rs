//! End-to-end study: load, match, pair, differences, sensitivity.

use balmatch::balance::{build_spec, evaluate, BalanceCheck};
use balmatch::cardmatch::{closest_largest_match, escalate_ratio, Certificate, MatchSolution};
use balmatch::data::{pair_differences, ColumnKind, StudyData};
use balmatch::pairing::{heterogeneity, histogram, optimal_pairing, robust_mahalanobis, robust_mahalanobis_all, Histogram};
use balmatch::Heterogeneity;
use serde::{Deserialize, Serialize};

use crate::analysis::{amplification, analyze, default_lambdas, weight_curves, AmplificationCurve, AnalysisOptions, SensitivityAnalysis, WeightCurve};
use crate::config::{load_balance, RunConfig, Validated};
use crate::error::{AtStage, CliError, ErrorClass, Stage};
use crate::io::{load_study, pair_records, MatchFile, PairsFile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchSummary {
    pub n_treated_available: usize,
    pub n_controls_available: usize,
    pub n_matched_treated: usize,
    pub ratio: usize,
    pub certificate: Certificate,
    pub nodes: usize,
}

/// One re-pairing of the matched sample and its analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairingReport {
    pub label: String,
    pub columns: Vec<String>,
    pub total_distance: f64,
    /// Present for 1-to-1 matches only.
    pub heterogeneity: Option<Heterogeneity>,
    pub histogram: Option<Histogram>,
    pub sensitivity: Option<SensitivityAnalysis>,
    /// Through the first family's sensitivity value, when it exceeds one.
    pub amplification: Option<AmplificationCurve>,
}

/// Files written next to the report; not part of `report.json`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Artifacts {
    pub match_file: Option<MatchFile>,
    pub pairs_files: Vec<(String, PairsFile)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub match_summary: MatchSummary,
    pub balance: Vec<BalanceCheck>,
    pub families: Vec<String>,
    pub gammas: Vec<f64>,
    pub pairings: Vec<PairingReport>,
    pub weight_curves: Vec<WeightCurve>,
    pub notes: Vec<String>,
    #[serde(skip)]
    pub artifacts: Artifacts,
}

impl StudyReport {
    pub fn pairing(&self, label: &str) -> Option<&PairingReport> {
        self.pairings.iter().find(|p| p.label == label)
    }
}

pub const ALL_COVARIATE: &str = "all-covariate";
pub const KEY_COVARIATE: &str = "key-covariate";

/// Every numeric covariate, in schema order.
pub fn numeric_columns(data: &StudyData) -> Vec<String> {
    data.schema.iter().filter(|c| c.kind == ColumnKind::Numeric).map(|c| c.name.clone()).collect()
}

pub fn run_pipeline(cfg: &RunConfig) -> Result<StudyReport, CliError> {
    let v = cfg.validate()?;
    let (_, data) = load_study(&cfg.data, &cfg.schema, None)?;
    let decls = load_balance(&cfg.balance)?;
    let spec = build_spec(&data, &decls).at(Stage::Balance)?;
    let opts = cfg.solver.options(cfg.seed);

    let all_columns = cfg.pairing_columns.clone().unwrap_or_else(|| numeric_columns(&data));
    let all_refs: Vec<&str> = all_columns.iter().map(String::as_str).collect();
    let matched = if cfg.enhanced {
        let d = robust_mahalanobis_all(&data, &all_refs).at(Stage::Pair)?;
        closest_largest_match(&data, &spec, &d, &opts).at(Stage::Match)?
    } else {
        escalate_ratio(&data, &spec, &opts).at(Stage::Match)?
    };
    if matched.certificate == Certificate::Infeasible || matched.selected_treated.is_empty() {
        return Err(CliError::new(Stage::Match, ErrorClass::Infeasible, "no balanced match exists, even with one treated unit"));
    }
    let balance = evaluate(&spec, &matched).at(Stage::Balance)?;
    let summary = MatchSummary {
        n_treated_available: data.n_treated(),
        n_controls_available: data.n_controls(),
        n_matched_treated: matched.n_matched_treated(),
        ratio: matched.ratio,
        certificate: matched.certificate,
        nodes: matched.nodes,
    };

    let mut notes = Vec::new();
    if matched.ratio > 1 {
        notes.push(format!("{}-to-1 match: pair differences and sensitivity tables are not computed", matched.ratio));
    }
    let mut layouts = vec![(ALL_COVARIATE, all_columns.clone())];
    if let Some(k) = &cfg.key_columns {
        layouts.push((KEY_COVARIATE, k.clone()));
    }
    let mut pairings = Vec::new();
    let mut pairs_files = Vec::new();
    let mut n_pairs = 0;
    for (label, columns) in layouts {
        let (report, sol) = pair_and_analyze(&data, &matched, label, &columns, cfg, &v)?;
        n_pairs = sol.pairing.len();
        pairs_files.push((
            label.to_string(),
            PairsFile {
                data: crate::io::absolute(&cfg.data),
                schema: crate::io::absolute(&cfg.schema),
                columns: columns.clone(),
                ratio: sol.ratio,
                total_distance: report.total_distance,
                pairs: pair_records(&data, &sol),
            },
        ));
        pairings.push(report);
    }
    let weight_curves = if matched.ratio == 1 { weight_curves(&v.families, n_pairs)? } else { Vec::new() };

    Ok(StudyReport {
        match_summary: summary,
        families: v.families.iter().map(|f| f.to_string()).collect(),
        gammas: v.gammas.clone(),
        artifacts: Artifacts {
            match_file: Some(MatchFile::new(&cfg.data, &cfg.schema, &cfg.balance, &data, &matched, balance.clone())),
            pairs_files,
        },
        balance,
        pairings,
        weight_curves,
        notes,
    })
}

fn pair_and_analyze(
    data: &StudyData,
    matched: &MatchSolution,
    label: &str,
    columns: &[String],
    cfg: &RunConfig,
    v: &Validated,
) -> Result<(PairingReport, MatchSolution), CliError> {
    let refs: Vec<&str> = columns.iter().map(String::as_str).collect();
    let d = robust_mahalanobis(data, matched, &refs).at(Stage::Pair)?;
    let paired = optimal_pairing(&d, matched.ratio).at(Stage::Pair)?;
    let sol = paired.apply_to(matched);
    let total_distance = paired.total_distance;
    let mut report = PairingReport {
        label: label.to_string(),
        columns: columns.to_vec(),
        total_distance,
        heterogeneity: None,
        histogram: None,
        sensitivity: None,
        amplification: None,
    };
    if sol.ratio == 1 {
        let y = pair_differences(&sol, data).at(Stage::Differences)?;
        report.heterogeneity = Some(heterogeneity(&y).at(Stage::Differences)?);
        report.histogram = Some(histogram(&y.y, cfg.histogram_bins));
        let opts = AnalysisOptions { alpha: cfg.alpha, exact: cfg.exact, combine: cfg.combine, with_hl: true };
        let a = analyze(&y, &v.families, &v.gammas, opts)?;
        let gstar = a.families[0].sensitivity_value;
        if gstar > 1.0 && gstar.is_finite() {
            let lambdas = v.lambdas.clone().unwrap_or_else(|| default_lambdas(gstar));
            report.amplification = Some(amplification(gstar, &lambdas)?);
        }
        report.sensitivity = Some(a);
    }
    Ok((report, sol))
}
