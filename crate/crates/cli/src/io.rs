//! `match.json` and `pairs.json` documents, which carry unit ids so that a
//! later subcommand can reload the study and rebuild the match.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use balmatch::balance::BalanceCheck;
use balmatch::cardmatch::{Certificate, MatchSolution};
use balmatch::data::{load_csv, SchemaSpec, StudyData};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::load_schema;
use crate::error::{AtStage, CliError, ErrorClass, Stage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub treated: String,
    pub controls: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchFile {
    pub data: PathBuf,
    pub schema: PathBuf,
    pub balance: PathBuf,
    pub ratio: usize,
    pub certificate: Certificate,
    pub nodes: usize,
    pub objective: usize,
    pub selected_treated: Vec<String>,
    pub selected_controls: Vec<String>,
    pub pairs: Vec<PairRecord>,
    pub balance_table: Vec<BalanceCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairsFile {
    pub data: PathBuf,
    pub schema: PathBuf,
    pub columns: Vec<String>,
    pub ratio: usize,
    pub total_distance: f64,
    pub pairs: Vec<PairRecord>,
}

pub fn pair_records(data: &StudyData, sol: &MatchSolution) -> Vec<PairRecord> {
    sol.pairing
        .iter()
        .map(|(t, cs)| PairRecord {
            treated: data.treated[*t].id.clone(),
            controls: cs.iter().map(|c| data.controls[*c].id.clone()).collect(),
        })
        .collect()
}

impl MatchFile {
    pub fn new(data_path: &Path, schema_path: &Path, balance_path: &Path, data: &StudyData, sol: &MatchSolution, balance_table: Vec<BalanceCheck>) -> Self {
        MatchFile {
            data: absolute(data_path),
            schema: absolute(schema_path),
            balance: absolute(balance_path),
            ratio: sol.ratio,
            certificate: sol.certificate,
            nodes: sol.nodes,
            objective: sol.objective,
            selected_treated: sol.selected_treated.iter().map(|&t| data.treated[t].id.clone()).collect(),
            selected_controls: sol.selected_controls.iter().map(|&c| data.controls[c].id.clone()).collect(),
            pairs: pair_records(data, sol),
            balance_table,
        }
    }
}

/// Absolute form of a path, left unchanged if the working directory is
/// unavailable.
pub fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T, stage: Stage) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::new(stage, ErrorClass::Solver, e.to_string()))?;
    text.push('\n');
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::config(stage, format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::config(stage, format!("{}: {e}", path.display())))
}

pub fn read_json<T: DeserializeOwned>(path: &Path, stage: Stage) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::config(stage, format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::config(stage, format!("{}: {e}", path.display())))
}

/// Loads the study, replacing the schema's outcome column when asked.
pub fn load_study(data: &Path, schema: &Path, outcome: Option<&str>) -> Result<(SchemaSpec, StudyData), CliError> {
    let mut spec = load_schema(schema)?;
    if let Some(o) = outcome {
        spec.outcome = Some(o.to_string());
    }
    let study = load_csv(data, &spec).at(Stage::Load)?;
    Ok((spec, study))
}

/// Rebuilds a match from id records.
pub fn solution_from_records(data: &StudyData, ratio: usize, pairs: &[PairRecord], certificate: Certificate, nodes: usize) -> Result<MatchSolution, CliError> {
    let bad = |m: String| CliError::new(Stage::Load, ErrorClass::Data, m);
    let t_index: BTreeMap<&str, usize> = data.treated.iter().enumerate().map(|(i, u)| (u.id.as_str(), i)).collect();
    let c_index: BTreeMap<&str, usize> = data.controls.iter().enumerate().map(|(i, u)| (u.id.as_str(), i)).collect();
    let mut pairing = BTreeMap::new();
    let mut used = std::collections::BTreeSet::new();
    for p in pairs {
        let t = *t_index.get(p.treated.as_str()).ok_or_else(|| bad(format!("treated id {} not in data", p.treated)))?;
        if p.controls.len() != ratio {
            return Err(bad(format!("treated id {} has {} controls, ratio is {ratio}", p.treated, p.controls.len())));
        }
        let mut cs = Vec::with_capacity(ratio);
        for id in &p.controls {
            let c = *c_index.get(id.as_str()).ok_or_else(|| bad(format!("control id {id} not in data")))?;
            if !used.insert(c) {
                return Err(bad(format!("control id {id} is used twice")));
            }
            cs.push(c);
        }
        cs.sort_unstable();
        if pairing.insert(t, cs).is_some() {
            return Err(bad(format!("treated id {} is used twice", p.treated)));
        }
    }
    let treated: Vec<usize> = pairing.keys().copied().collect();
    let controls: Vec<usize> = used.into_iter().collect();
    Ok(MatchSolution {
        objective: ratio * treated.len(),
        selected_treated: treated,
        selected_controls: controls,
        ratio,
        pairing,
        certificate,
        nodes,
    })
}

/// Study and match described by a `pairs.json` file.
pub fn load_pairs(path: &Path, outcome: Option<&str>) -> Result<(PairsFile, StudyData, MatchSolution), CliError> {
    let file: PairsFile = read_json(path, Stage::Load)?;
    let (_, data) = load_study(&file.data, &file.schema, outcome)?;
    let sol = solution_from_records(&data, file.ratio, &file.pairs, Certificate::ProvedOptimal, 0)?;
    Ok((file, data, sol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use balmatch::data::{Column, ColumnKind, CovariateValue, Group, Unit};

    fn study() -> StudyData {
        let unit = |id: &str, g| Unit { id: id.into(), group: g, covariates: vec![CovariateValue::Numeric(0.0)], outcome: Some(1.0), row: 0 };
        StudyData {
            schema: vec![Column { name: "x".into(), kind: ColumnKind::Numeric, levels: vec![], missing_allowed: false }],
            treated: vec![unit("t0", Group::Treated), unit("t1", Group::Treated)],
            controls: vec![unit("c0", Group::Control), unit("c1", Group::Control), unit("c2", Group::Control)],
        }
    }

    #[test]
    fn records_round_trip() {
        let d = study();
        let mut pairing = BTreeMap::new();
        pairing.insert(0, vec![2]);
        pairing.insert(1, vec![0]);
        let sol = MatchSolution::from_selection(vec![0, 1], vec![0, 2], 1, Certificate::ProvedOptimal, 3).with_pairing(pairing);
        let rec = pair_records(&d, &sol);
        assert_eq!(rec[0].controls, vec!["c2".to_string()]);
        let back = solution_from_records(&d, 1, &rec, Certificate::ProvedOptimal, 3).unwrap();
        assert_eq!(back, sol);
    }

    #[test]
    fn reused_control_is_a_data_error() {
        let d = study();
        let rec = vec![
            PairRecord { treated: "t0".into(), controls: vec!["c1".into()] },
            PairRecord { treated: "t1".into(), controls: vec!["c1".into()] },
        ];
        let e = solution_from_records(&d, 1, &rec, Certificate::ProvedOptimal, 0).unwrap_err();
        assert_eq!(e.exit_code(), 3);
    }
}
