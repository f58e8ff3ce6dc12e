//! Run configuration, schema and balance files.

use std::path::{Path, PathBuf};

use balmatch::balance::BalanceDecl;
use balmatch::cardmatch::SolverOptions;
use balmatch::data::SchemaSpec;
use balmatch::scores::StatFamily;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Stage};
use crate::grid::parse_grid;

/// A grid given either as `"start:stop:step"` / `"a,b,c"` or as an array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Text(String),
    List(Vec<f64>),
}

impl GridSpec {
    pub fn values(&self) -> Result<Vec<f64>, String> {
        match self {
            GridSpec::Text(s) => parse_grid(s),
            GridSpec::List(v) => Ok(v.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub node_limit: usize,
    pub integrality_tolerance: f64,
    pub exhaustive_ratio_scan: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = SolverOptions::default();
        SolverConfig {
            node_limit: d.node_limit,
            integrality_tolerance: d.integrality_tolerance,
            exhaustive_ratio_scan: d.exhaustive_ratio_scan,
        }
    }
}

impl SolverConfig {
    pub fn options(&self, seed: u64) -> SolverOptions {
        SolverOptions {
            integrality_tolerance: self.integrality_tolerance,
            node_limit: self.node_limit,
            deterministic_seed: seed,
            exhaustive_ratio_scan: self.exhaustive_ratio_scan,
        }
    }
}

fn default_families() -> Vec<String> {
    vec!["wilcoxon".into()]
}

fn default_gammas() -> GridSpec {
    GridSpec::Text("1:3:0.25".into())
}

fn default_alpha() -> f64 {
    0.05
}

fn default_bins() -> usize {
    30
}

/// Everything `balmatch report` needs. Relative paths are resolved against
/// the directory of the configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: PathBuf,
    pub schema: PathBuf,
    pub balance: PathBuf,
    /// Columns of the all-covariate distance. Defaults to every numeric
    /// covariate of the schema.
    #[serde(default)]
    pub pairing_columns: Option<Vec<String>>,
    /// Columns of the key-covariate distance; when present a second
    /// pairing is built and compared with the first.
    #[serde(default)]
    pub key_columns: Option<Vec<String>>,
    #[serde(default = "default_families")]
    pub families: Vec<String>,
    #[serde(default = "default_gammas")]
    pub gammas: GridSpec,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Exact bounds instead of the Normal approximation.
    #[serde(default)]
    pub exact: bool,
    /// Also report the joint test of all families.
    #[serde(default)]
    pub combine: bool,
    /// Λ values for the amplification curve; by default a grid above Γ*.
    #[serde(default)]
    pub lambdas: Option<GridSpec>,
    /// Minimise total distance among the largest balanced matches.
    #[serde(default)]
    pub enhanced: bool,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
    #[serde(default)]
    pub solver: SolverConfig,
}

/// Parsed and checked form of a [`RunConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct Validated {
    pub families: Vec<StatFamily>,
    pub gammas: Vec<f64>,
    pub lambdas: Option<Vec<f64>>,
}

impl RunConfig {
    /// Reads a TOML run file and resolves its relative paths.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let mut cfg: RunConfig = read_structured(path, Stage::Config)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.data, &mut cfg.schema, &mut cfg.balance, &mut cfg.output_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<Validated, CliError> {
        let bad = |m: String| CliError::config(Stage::Config, m);
        if self.families.is_empty() {
            return Err(bad("no statistic families".into()));
        }
        let families = self
            .families
            .iter()
            .map(|f| f.parse::<StatFamily>().map_err(|e| bad(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        let gammas = self.gammas.values().map_err(bad)?;
        if gammas.is_empty() || gammas.iter().any(|g| !(*g >= 1.0)) {
            return Err(bad("Γ grid values must be >= 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(bad(format!("α = {} outside (0, 0.5)", self.alpha)));
        }
        if self.histogram_bins == 0 {
            return Err(bad("histogram_bins must be positive".into()));
        }
        let lambdas = self.lambdas.as_ref().map(|g| g.values().map_err(bad)).transpose()?;
        Ok(Validated { families, gammas, lambdas })
    }
}

/// Balance file: a list of `[[balance]]` tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BalanceFile {
    #[serde(default)]
    pub balance: Vec<BalanceDecl>,
}

/// Reads TOML, or JSON when the file name ends in `.json`.
pub fn read_structured<T: DeserializeOwned>(path: &Path, stage: Stage) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::config(stage, format!("{}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| CliError::config(stage, format!("{}: {e}", path.display())))
    } else {
        toml::from_str(&text).map_err(|e| CliError::config(stage, format!("{}: {e}", path.display())))
    }
}

pub fn load_schema(path: &Path) -> Result<SchemaSpec, CliError> {
    read_structured(path, Stage::Load)
}

pub fn load_balance(path: &Path) -> Result<Vec<BalanceDecl>, CliError> {
    Ok(read_structured::<BalanceFile>(path, Stage::Balance)?.balance)
}

#[cfg(test)]
mod tests {
    use super::*;

    const RUN: &str = r#"
data = "d.csv"
schema = "s.toml"
balance = "b.toml"
families = ["wilcoxon", "ustat:8,7,8"]
gammas = "1:2:0.5"
seed = 3
output_dir = "out"
"#;

    #[test]
    fn run_config_defaults_and_validation() {
        let cfg: RunConfig = toml::from_str(RUN).unwrap();
        let v = cfg.validate().unwrap();
        assert_eq!(v.gammas, vec![1.0, 1.5, 2.0]);
        assert_eq!(v.families[1], StatFamily::UStat { m: 8, lower: 7, upper: 8 });
        assert_eq!(cfg.alpha, 0.05);
        assert!(!cfg.exact);

        let mut bad = cfg.clone();
        bad.gammas = GridSpec::List(vec![0.5, 1.0]);
        assert_eq!(bad.validate().unwrap_err().exit_code(), 2);
        let mut bad = cfg;
        bad.alpha = 0.5;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{RUN}\nbogus = 1\n");
        assert!(toml::from_str::<RunConfig>(&text).is_err());
    }

    #[test]
    fn balance_file_parses_every_kind() {
        let text = r#"
[[balance]]
type = "fine"
column = "region"

[[balance]]
type = "near-fine"
column = "school"
slack = 0.02

[[balance]]
type = "mean"
column = "x1"

[[balance]]
type = "moment"
column_a = "x1"
column_b = "x2"
tolerance = 0.1

[[balance]]
type = "quantile-grid"
column = "x3"
quantiles = 4
"#;
        let f: BalanceFile = toml::from_str(text).unwrap();
        assert_eq!(f.balance.len(), 5);
        assert_eq!(f.balance[0], BalanceDecl::Fine { column: "region".into() });
    }
}
