//! Study data ingestion.
//!
//! A study is read from a headed, comma-delimited CSV file and a
//! [`SchemaSpec`] naming the id, group and outcome columns plus one
//! declaration per covariate. Loaded data are immutable.

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cardmatch::MatchSolution;
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}: expected {expected} fields, found {found}")]
    MalformedRow { row: usize, expected: usize, found: usize },
    #[error("row {row}: value {value:?} is not a declared level of column {column}")]
    UnknownLevel { row: usize, column: String, value: String },
    #[error("row {row}: cannot parse {value:?} in numeric column {column}")]
    InvalidNumber { row: usize, column: String, value: String },
    #[error("row {row}: column {column} is missing but not declared missing-allowed")]
    UnexpectedMissing { row: usize, column: String },
    #[error("row {row}: group code {value:?} is neither the treated nor the control code")]
    UnknownGroup { row: usize, value: String },
    #[error("no {0} units in the data")]
    EmptyGroup(Group),
    #[error("column {0} is not present in the header")]
    MissingColumn(String),
    #[error("duplicate unit id {0}")]
    DuplicateId(String),
    #[error("schema: {0}")]
    Schema(String),
    #[error("unit {0} has no outcome")]
    MissingOutcome(String),
    #[error("match has {0} controls per treated unit; pair differences need a 1-to-1 match")]
    NotOneToOne(usize),
    #[error("pair differences must be finite and nonempty")]
    EmptyDifferences,
    #[error("match refers to unit index {0} outside the data")]
    IndexOutOfRange(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Group {
    Treated,
    Control,
}

impl std::fmt::Display for Group {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Group::Treated => f.write_str("treated"),
            Group::Control => f.write_str("control"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CovariateValue {
    Numeric(f64),
    Categorical(u32),
    Missing,
}

impl CovariateValue {
    pub fn as_numeric(&self) -> Option<f64> {
        match *self {
            CovariateValue::Numeric(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_level(&self) -> Option<u32> {
        match *self {
            CovariateValue::Categorical(l) => Some(l),
            _ => None,
        }
    }

    pub fn is_missing(&self) -> bool {
        matches!(self, CovariateValue::Missing)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unit {
    pub id: String,
    pub group: Group,
    pub covariates: Vec<CovariateValue>,
    pub outcome: Option<f64>,
    /// Zero-based data row the unit was read from.
    pub row: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

/// Loaded column: kind plus the enumerated levels for categorical columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
    pub levels: Vec<String>,
    pub missing_allowed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub column: String,
    pub treated: String,
    pub control: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    /// Closed level set for categorical columns. When absent, levels are
    /// enumerated in order of first appearance.
    #[serde(default)]
    pub levels: Option<Vec<String>>,
    #[serde(default)]
    pub missing_allowed: bool,
}

fn default_missing_tokens() -> Vec<String> {
    vec![String::new(), "NA".to_string()]
}

/// Column declarations consumed by [`load_csv`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaSpec {
    pub id: String,
    pub group: GroupSpec,
    #[serde(default)]
    pub outcome: Option<String>,
    #[serde(default = "default_missing_tokens")]
    pub missing_tokens: Vec<String>,
    pub columns: Vec<ColumnSpec>,
}

impl SchemaSpec {
    fn validate(&self) -> Result<(), DataError> {
        let mut seen = HashSet::new();
        for c in &self.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(DataError::Schema(format!("column {} declared twice", c.name)));
            }
            if c.kind == ColumnKind::Numeric && c.levels.is_some() {
                return Err(DataError::Schema(format!("numeric column {} declares levels", c.name)));
            }
            if let Some(levels) = &c.levels {
                let distinct: HashSet<&String> = levels.iter().collect();
                if distinct.len() != levels.len() {
                    return Err(DataError::Schema(format!("column {} repeats a level", c.name)));
                }
            }
        }
        if self.group.treated == self.group.control {
            return Err(DataError::Schema("treated and control codes coincide".into()));
        }
        Ok(())
    }
}

/// Treated and control units conforming to one schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyData {
    pub schema: Vec<Column>,
    pub treated: Vec<Unit>,
    pub controls: Vec<Unit>,
}

impl StudyData {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.schema.iter().find(|c| c.name == name)
    }

    pub fn n_treated(&self) -> usize {
        self.treated.len()
    }

    pub fn n_controls(&self) -> usize {
        self.controls.len()
    }

    /// All units, treated first.
    pub fn units(&self) -> impl Iterator<Item = &Unit> {
        self.treated.iter().chain(self.controls.iter())
    }
}

/// Treated-minus-control outcome differences, one per matched pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDifferences<S = f64> {
    pub y: Vec<S>,
}

impl<S: Scalar> PairDifferences<S> {
    pub fn new(y: Vec<S>) -> Result<Self, DataError> {
        if y.is_empty() || y.iter().any(|v| !v.is_finite()) {
            return Err(DataError::EmptyDifferences);
        }
        Ok(PairDifferences { y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn as_slice(&self) -> &[S] {
        &self.y
    }

    /// Differences with the roles of treated and control swapped.
    pub fn negated(&self) -> Self {
        PairDifferences { y: self.y.iter().map(|&v| -v).collect() }
    }

    /// Differences `y_i - tau`, as under a constant shift effect `tau`.
    pub fn shifted(&self, tau: S) -> Self {
        PairDifferences { y: self.y.iter().map(|&v| v - tau).collect() }
    }
}

/// Reads a study from `path`.
pub fn load_csv(path: impl AsRef<Path>, spec: &SchemaSpec) -> Result<StudyData, DataError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_csv(file, spec)
}

/// Reads a study from any CSV source.
pub fn read_csv<R: Read>(reader: R, spec: &SchemaSpec) -> Result<StudyData, DataError> {
    spec.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let id_col = find(&spec.id)?;
    let group_col = find(&spec.group.column)?;
    let outcome_col = spec.outcome.as_deref().map(find).transpose()?;
    let cov_cols = spec
        .columns
        .iter()
        .map(|c| find(&c.name))
        .collect::<Result<Vec<_>, _>>()?;

    let mut schema: Vec<Column> = spec
        .columns
        .iter()
        .map(|c| Column {
            name: c.name.clone(),
            kind: c.kind,
            levels: c.levels.clone().unwrap_or_default(),
            missing_allowed: c.missing_allowed,
        })
        .collect();
    let mut level_maps: Vec<HashMap<String, u32>> = schema
        .iter()
        .map(|c| c.levels.iter().enumerate().map(|(i, l)| (l.clone(), i as u32)).collect())
        .collect();

    let is_missing = |s: &str| spec.missing_tokens.iter().any(|t| t == s);
    let mut ids = HashSet::new();
    let mut treated = Vec::new();
    let mut controls = Vec::new();

    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        // Data rows are numbered from 1, the header being row 0.
        let row_no = row + 1;
        if record.len() != header.len() {
            return Err(DataError::MalformedRow {
                row: row_no,
                expected: header.len(),
                found: record.len(),
            });
        }
        let id = record[id_col].trim().to_string();
        if !ids.insert(id.clone()) {
            return Err(DataError::DuplicateId(id));
        }
        let code = record[group_col].trim();
        let group = if code == spec.group.treated {
            Group::Treated
        } else if code == spec.group.control {
            Group::Control
        } else {
            return Err(DataError::UnknownGroup { row: row_no, value: code.to_string() });
        };

        let mut covariates = Vec::with_capacity(schema.len());
        for (k, col) in schema.iter_mut().enumerate() {
            let raw = record[cov_cols[k]].trim();
            let declared_closed = spec.columns[k].levels.is_some();
            let value = match col.kind {
                ColumnKind::Numeric => {
                    if is_missing(raw) {
                        if !col.missing_allowed {
                            return Err(DataError::UnexpectedMissing { row: row_no, column: col.name.clone() });
                        }
                        CovariateValue::Missing
                    } else {
                        match raw.parse::<f64>() {
                            Ok(v) if v.is_finite() => CovariateValue::Numeric(v),
                            _ if col.missing_allowed => CovariateValue::Missing,
                            _ => {
                                return Err(DataError::InvalidNumber {
                                    row: row_no,
                                    column: col.name.clone(),
                                    value: raw.to_string(),
                                })
                            }
                        }
                    }
                }
                ColumnKind::Categorical => {
                    if is_missing(raw) && !level_maps[k].contains_key(raw) {
                        if !col.missing_allowed {
                            return Err(DataError::UnexpectedMissing { row: row_no, column: col.name.clone() });
                        }
                        CovariateValue::Missing
                    } else if let Some(&l) = level_maps[k].get(raw) {
                        CovariateValue::Categorical(l)
                    } else if declared_closed {
                        return Err(DataError::UnknownLevel {
                            row: row_no,
                            column: col.name.clone(),
                            value: raw.to_string(),
                        });
                    } else {
                        let l = col.levels.len() as u32;
                        col.levels.push(raw.to_string());
                        level_maps[k].insert(raw.to_string(), l);
                        CovariateValue::Categorical(l)
                    }
                }
            };
            covariates.push(value);
        }

        let outcome = match outcome_col {
            None => None,
            Some(c) => {
                let raw = record[c].trim();
                if is_missing(raw) {
                    None
                } else {
                    match raw.parse::<f64>() {
                        Ok(v) if v.is_finite() => Some(v),
                        _ => {
                            return Err(DataError::InvalidNumber {
                                row: row_no,
                                column: header[c].to_string(),
                                value: raw.to_string(),
                            })
                        }
                    }
                }
            }
        };

        let unit = Unit { id, group, covariates, outcome, row };
        match group {
            Group::Treated => treated.push(unit),
            Group::Control => controls.push(unit),
        }
    }

    if treated.is_empty() {
        return Err(DataError::EmptyGroup(Group::Treated));
    }
    if controls.is_empty() {
        return Err(DataError::EmptyGroup(Group::Control));
    }
    Ok(StudyData { schema, treated, controls })
}

/// Writes `data` in the layout [`read_csv`] expects for `spec`, rows in
/// their original order.
pub fn write_csv<W: Write>(data: &StudyData, spec: &SchemaSpec, writer: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    let missing = spec.missing_tokens.iter().find(|t| !t.is_empty()).cloned().unwrap_or_default();
    let mut header = vec![spec.id.clone(), spec.group.column.clone()];
    if let Some(o) = &spec.outcome {
        header.push(o.clone());
    }
    header.extend(data.schema.iter().map(|c| c.name.clone()));
    w.write_record(&header)?;

    let mut units: Vec<&Unit> = data.units().collect();
    units.sort_by_key(|u| u.row);
    for u in units {
        let mut rec = vec![
            u.id.clone(),
            match u.group {
                Group::Treated => spec.group.treated.clone(),
                Group::Control => spec.group.control.clone(),
            },
        ];
        if spec.outcome.is_some() {
            rec.push(u.outcome.map(|v| v.to_string()).unwrap_or_else(|| missing.clone()));
        }
        for (k, v) in u.covariates.iter().enumerate() {
            rec.push(match *v {
                CovariateValue::Numeric(x) => x.to_string(),
                CovariateValue::Categorical(l) => data.schema[k].levels[l as usize].clone(),
                CovariateValue::Missing => missing.clone(),
            });
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|source| DataError::Io { path: "<writer>".into(), source })?;
    Ok(())
}

/// Outcome differences for a 1-to-1 match, in treated-index order.
pub fn pair_differences(matched: &MatchSolution, data: &StudyData) -> Result<PairDifferences, DataError> {
    if matched.ratio != 1 {
        return Err(DataError::NotOneToOne(matched.ratio));
    }
    let mut y = Vec::with_capacity(matched.pairing.len());
    for (t, controls) in &matched.pairing {
        let tu = data.treated.get(*t).ok_or(DataError::IndexOutOfRange(*t))?;
        let c = controls[0];
        let cu = data.controls.get(c).ok_or(DataError::IndexOutOfRange(c))?;
        let yt = tu.outcome.ok_or_else(|| DataError::MissingOutcome(tu.id.clone()))?;
        let yc = cu.outcome.ok_or_else(|| DataError::MissingOutcome(cu.id.clone()))?;
        y.push(yt - yc);
    }
    PairDifferences::new(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(columns: Vec<ColumnSpec>) -> SchemaSpec {
        SchemaSpec {
            id: "id".into(),
            group: GroupSpec { column: "z".into(), treated: "1".into(), control: "0".into() },
            outcome: Some("y".into()),
            missing_tokens: default_missing_tokens(),
            columns,
        }
    }

    fn numeric(name: &str) -> ColumnSpec {
        ColumnSpec { name: name.into(), kind: ColumnKind::Numeric, levels: None, missing_allowed: false }
    }

    #[test]
    fn minimal_file() {
        let csv = "id,z,y,x\na,1,3,0.5\nb,0,2,1.5\n";
        let d = read_csv(csv.as_bytes(), &spec(vec![numeric("x")])).unwrap();
        assert_eq!(d.n_treated(), 1);
        assert_eq!(d.n_controls(), 1);
        assert_eq!(d.treated[0].covariates[0], CovariateValue::Numeric(0.5));
    }

    #[test]
    fn wrong_arity_reports_row() {
        let csv = "id,z,y,x\na,1,3,0.5\nb,0,2\n";
        match read_csv(csv.as_bytes(), &spec(vec![numeric("x")])) {
            Err(DataError::MalformedRow { row, .. }) => assert_eq!(row, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn closed_levels_reject_unknown() {
        let gender = ColumnSpec {
            name: "g".into(),
            kind: ColumnKind::Categorical,
            levels: Some(vec!["M".into(), "F".into()]),
            missing_allowed: false,
        };
        let csv = "id,z,y,g\na,1,3,M\nb,0,2,X\n";
        assert!(matches!(
            read_csv(csv.as_bytes(), &spec(vec![gender])),
            Err(DataError::UnknownLevel { row: 2, .. })
        ));
    }

    #[test]
    fn open_levels_in_first_appearance_order() {
        let c = ColumnSpec { name: "g".into(), kind: ColumnKind::Categorical, levels: None, missing_allowed: false };
        let csv = "id,z,y,g\na,1,3,F\nb,0,2,M\nc,0,2,F\n";
        let d = read_csv(csv.as_bytes(), &spec(vec![c])).unwrap();
        assert_eq!(d.schema[0].levels, vec!["F".to_string(), "M".to_string()]);
        assert_eq!(d.controls[1].covariates[0], CovariateValue::Categorical(0));
    }

    #[test]
    fn empty_group() {
        let csv = "id,z,y,x\na,1,3,0.5\nb,1,2,1.5\n";
        assert!(matches!(
            read_csv(csv.as_bytes(), &spec(vec![numeric("x")])),
            Err(DataError::EmptyGroup(Group::Control))
        ));
    }

    #[test]
    fn numeric_missing_only_when_allowed() {
        let csv = "id,z,y,x\na,1,3,oops\nb,0,2,1.5\n";
        assert!(matches!(
            read_csv(csv.as_bytes(), &spec(vec![numeric("x")])),
            Err(DataError::InvalidNumber { .. })
        ));
        let mut c = numeric("x");
        c.missing_allowed = true;
        let d = read_csv(csv.as_bytes(), &spec(vec![c])).unwrap();
        assert!(d.treated[0].covariates[0].is_missing());
    }

    #[test]
    fn unknown_group_code() {
        let csv = "id,z,y,x\na,2,3,0.5\nb,0,2,1.5\n";
        assert!(matches!(
            read_csv(csv.as_bytes(), &spec(vec![numeric("x")])),
            Err(DataError::UnknownGroup { row: 1, .. })
        ));
    }
}
