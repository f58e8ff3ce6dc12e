//! Subcommands of the `balmatch` binary.

use std::io::Write;
use std::path::{Path, PathBuf};

use balmatch::balance::{build_spec, evaluate};
use balmatch::cardmatch::{closest_largest_match, escalate_ratio, Certificate, SolverOptions};
use balmatch::data::pair_differences;
use balmatch::pairing::{heterogeneity, histogram, optimal_pairing, robust_mahalanobis, robust_mahalanobis_all};
use balmatch::power::{estimate_design_sensitivity, Dgp, Noise, Replications};
use balmatch::scores::{compute_scores, StatFamily};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::analysis::{amplification, analyze, hl_table, AnalysisOptions};
use crate::config::{load_balance, RunConfig};
use crate::error::{AtStage, CliError, ErrorClass, Stage};
use crate::grid::parse_grid;
use crate::io::{load_pairs, load_study, pair_records, write_json, MatchFile, PairsFile};
use crate::pipeline::{numeric_columns, run_pipeline};
use crate::report::{amplification_csv, fmt, hl_csv, write_csv, write_report};

/// Thread-count override read by the binary.
pub const THREADS_ENV: &str = "BALMATCH_THREADS";

#[derive(Debug, Parser)]
#[command(name = "balmatch", version, about = "Balanced cardinality matching and sensitivity analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Largest balanced match, escalating the control ratio.
    Match(MatchArgs),
    /// Optimal re-pairing of a match on a robust Mahalanobis distance.
    Pair(PairArgs),
    /// Mean, SD and MAD of the pair differences, plus a histogram table.
    Stats(StatsArgs),
    /// Per-pair scores as CSV.
    Scores(ScoresArgs),
    /// Upper and lower P-value bounds over a Γ grid.
    Sens(SensArgs),
    /// Hodges-Lehmann estimate intervals over a Γ grid.
    Hl(HlArgs),
    /// (Λ, Δ) curve of one Γ.
    Amplify(AmplifyArgs),
    /// Monte-Carlo power of the sensitivity analysis.
    Power(PowerArgs),
    /// Full pipeline from a run configuration.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    #[arg(long)]
    pub balance: PathBuf,
    /// Minimise total distance among the largest balanced matches.
    #[arg(long)]
    pub enhanced: bool,
    /// Distance columns for --enhanced; all numeric covariates by default.
    #[arg(long, value_delimiter = ',')]
    pub columns: Option<Vec<String>>,
    #[arg(long)]
    pub exhaustive_ratio_scan: bool,
    #[arg(long)]
    pub node_limit: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PairArgs {
    #[arg(long = "match")]
    pub match_file: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub columns: Option<Vec<String>>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PairsInput {
    #[arg(long)]
    pub pairs: PathBuf,
    /// Outcome column; the schema's outcome by default.
    #[arg(long)]
    pub outcome: Option<String>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub input: PairsInput,
    #[arg(long, default_value_t = 30)]
    pub bins: usize,
    /// Histogram table as CSV.
    #[arg(long)]
    pub histogram: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoresArgs {
    #[command(flatten)]
    pub input: PairsInput,
    #[arg(long)]
    pub family: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SensArgs {
    #[command(flatten)]
    pub input: PairsInput,
    /// One statistic, e.g. `wilcoxon` or `ustat:20,18,20`.
    #[arg(long, conflicts_with = "families")]
    pub family: Option<String>,
    /// Several statistics separated by `;`.
    #[arg(long)]
    pub families: Option<String>,
    #[arg(long, default_value = "1:3:0.25")]
    pub gammas: String,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long)]
    pub exact: bool,
    /// Add the joint bound over all families.
    #[arg(long)]
    pub combine: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HlArgs {
    #[command(flatten)]
    pub input: PairsInput,
    #[arg(long, default_value = "wilcoxon")]
    pub family: String,
    #[arg(long, default_value = "1:3:0.25")]
    pub gammas: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AmplifyArgs {
    #[arg(long)]
    pub gamma: f64,
    #[arg(long)]
    pub lambdas: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PowerArgs {
    /// `normal:tau,sigma` or `t:tau,df`.
    #[arg(long)]
    pub dgp: String,
    #[arg(long, default_value = "wilcoxon")]
    pub family: String,
    /// Γ values; omit to estimate the design sensitivity only.
    #[arg(long)]
    pub gamma: Option<String>,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 500)]
    pub reps: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Also estimate the Γ where power crosses one half.
    #[arg(long)]
    pub design_sensitivity: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the configured output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_family(s: &str) -> Result<StatFamily, CliError> {
    s.parse::<StatFamily>().map_err(|e| CliError::config(Stage::Config, e.to_string()))
}

fn parse_gammas(s: &str) -> Result<Vec<f64>, CliError> {
    let g = parse_grid(s).map_err(|e| CliError::config(Stage::Config, e))?;
    if g.iter().any(|v| !(*v >= 1.0)) {
        return Err(CliError::config(Stage::Config, "Γ values must be >= 1"));
    }
    Ok(g)
}

/// JSON to `out`, or to standard output.
fn emit_json<T: Serialize>(out: Option<&Path>, value: &T, stage: Stage) -> Result<(), CliError> {
    match out {
        Some(p) => write_json(p, value, stage),
        None => {
            let text = serde_json::to_string_pretty(value).map_err(|e| CliError::new(stage, ErrorClass::Solver, e.to_string()))?;
            println!("{text}");
            Ok(())
        }
    }
}

/// CSV to `out`, or to standard output.
fn emit_csv(out: Option<&Path>, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
    match out {
        Some(p) => write_csv(p, header, rows),
        None => {
            let mut w = csv::Writer::from_writer(std::io::stdout().lock());
            let err = |e: csv::Error| CliError::config(Stage::Report, e.to_string());
            w.write_record(header).map_err(err)?;
            for r in rows {
                w.write_record(r).map_err(err)?;
            }
            w.flush().map_err(|e| CliError::config(Stage::Report, e.to_string()))
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Match(a) => cmd_match(a),
        Command::Pair(a) => cmd_pair(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Scores(a) => cmd_scores(a),
        Command::Sens(a) => cmd_sens(a),
        Command::Hl(a) => cmd_hl(a),
        Command::Amplify(a) => cmd_amplify(a),
        Command::Power(a) => cmd_power(a),
        Command::Report(a) => cmd_report(a),
    }
}

fn cmd_match(a: MatchArgs) -> Result<(), CliError> {
    let (_, data) = load_study(&a.data, &a.schema, None)?;
    let decls = load_balance(&a.balance)?;
    let spec = build_spec(&data, &decls).at(Stage::Balance)?;
    let mut opts = SolverOptions { exhaustive_ratio_scan: a.exhaustive_ratio_scan, ..SolverOptions::default() };
    if let Some(n) = a.node_limit {
        opts.node_limit = n;
    }
    let sol = if a.enhanced {
        let cols = a.columns.unwrap_or_else(|| numeric_columns(&data));
        let refs: Vec<&str> = cols.iter().map(String::as_str).collect();
        let d = robust_mahalanobis_all(&data, &refs).at(Stage::Pair)?;
        closest_largest_match(&data, &spec, &d, &opts).at(Stage::Match)?
    } else {
        escalate_ratio(&data, &spec, &opts).at(Stage::Match)?
    };
    if sol.certificate == Certificate::Infeasible || sol.selected_treated.is_empty() {
        return Err(CliError::new(Stage::Match, ErrorClass::Infeasible, "no balanced match exists"));
    }
    let table = evaluate(&spec, &sol).at(Stage::Balance)?;
    let file = MatchFile::new(&a.data, &a.schema, &a.balance, &data, &sol, table);
    write_json(&a.out, &file, Stage::Match)
}

fn cmd_pair(a: PairArgs) -> Result<(), CliError> {
    let m: MatchFile = crate::io::read_json(&a.match_file, Stage::Load)?;
    let (_, data) = load_study(&m.data, &m.schema, None)?;
    let sol = crate::io::solution_from_records(&data, m.ratio, &m.pairs, m.certificate, m.nodes)?;
    let cols = a.columns.unwrap_or_else(|| numeric_columns(&data));
    let refs: Vec<&str> = cols.iter().map(String::as_str).collect();
    let d = robust_mahalanobis(&data, &sol, &refs).at(Stage::Pair)?;
    let paired = optimal_pairing(&d, sol.ratio).at(Stage::Pair)?;
    let repaired = paired.apply_to(&sol);
    let file = PairsFile {
        data: m.data,
        schema: m.schema,
        columns: cols,
        ratio: sol.ratio,
        total_distance: paired.total_distance,
        pairs: pair_records(&data, &repaired),
    };
    write_json(&a.out, &file, Stage::Pair)
}

fn differences(input: &PairsInput) -> Result<(Vec<crate::io::PairRecord>, balmatch::Differences), CliError> {
    let (file, data, sol) = load_pairs(&input.pairs, input.outcome.as_deref())?;
    let y = pair_differences(&sol, &data).at(Stage::Differences)?;
    // `pair_differences` follows treated index order; so does this.
    let records = pair_records(&data, &sol);
    debug_assert_eq!(records.len(), file.pairs.len());
    Ok((records, y))
}

#[derive(Serialize)]
struct StatsOutput {
    pairs: usize,
    heterogeneity: balmatch::Heterogeneity,
    histogram: balmatch::pairing::Histogram,
}

fn cmd_stats(a: StatsArgs) -> Result<(), CliError> {
    let (_, y) = differences(&a.input)?;
    let h = histogram(&y.y, a.bins);
    if let Some(p) = &a.histogram {
        let rows: Vec<Vec<String>> = h.counts.iter().enumerate().map(|(i, c)| vec![fmt(h.edges[i]), fmt(h.edges[i + 1]), c.to_string()]).collect();
        write_csv(p, &["lower", "upper", "count"].map(String::from), &rows)?;
    }
    let out = StatsOutput { pairs: y.len(), heterogeneity: heterogeneity(&y).at(Stage::Differences)?, histogram: h };
    emit_json(a.out.as_deref(), &out, Stage::Report)
}

fn cmd_scores(a: ScoresArgs) -> Result<(), CliError> {
    let family = parse_family(&a.family)?;
    let (records, y) = differences(&a.input)?;
    let s = compute_scores(&y, family).at(Stage::Scores)?;
    let header = ["treated", "control", "difference", "q", "positive"].map(String::from);
    let rows: Vec<Vec<String>> = records
        .iter()
        .enumerate()
        .map(|(i, r)| vec![r.treated.clone(), r.controls[0].clone(), fmt(y.y[i]), fmt(s.q[i]), s.signs[i].to_string()])
        .collect();
    emit_csv(a.out.as_deref(), &header, &rows)
}

fn cmd_sens(a: SensArgs) -> Result<(), CliError> {
    let families: Vec<StatFamily> = match (&a.family, &a.families) {
        (Some(f), None) => vec![parse_family(f)?],
        (None, Some(fs)) => fs.split(';').filter(|s| !s.trim().is_empty()).map(parse_family).collect::<Result<_, _>>()?,
        (None, None) => vec![StatFamily::Wilcoxon],
        (Some(_), Some(_)) => unreachable!("clap rejects --family with --families"),
    };
    if a.combine && families.len() < 2 {
        return Err(CliError::config(Stage::Config, "--combine needs at least two families"));
    }
    if !(a.alpha > 0.0 && a.alpha < 0.5) {
        return Err(CliError::config(Stage::Config, format!("α = {} outside (0, 0.5)", a.alpha)));
    }
    let gammas = parse_gammas(&a.gammas)?;
    let (_, y) = differences(&a.input)?;
    let opts = AnalysisOptions { alpha: a.alpha, exact: a.exact, combine: a.combine, with_hl: false };
    let analysis = analyze(&y, &families, &gammas, opts)?;
    emit_json(a.out.as_deref(), &analysis, Stage::Sens)
}

fn cmd_hl(a: HlArgs) -> Result<(), CliError> {
    let family = parse_family(&a.family)?;
    let gammas = parse_gammas(&a.gammas)?;
    let (_, y) = differences(&a.input)?;
    let rows = hl_table(&y, &[family], &gammas)?;
    let analysis = crate::analysis::SensitivityAnalysis {
        families: vec![crate::analysis::FamilySummary { family: family.to_string(), statistic: f64::NAN, sum_q: f64::NAN, sensitivity_value: f64::NAN }],
        method: String::new(),
        alpha: f64::NAN,
        rows: Vec::new(),
        hl: rows,
    };
    let (header, rows) = hl_csv(&analysis);
    emit_csv(a.out.as_deref(), &header, &rows)
}

fn cmd_amplify(a: AmplifyArgs) -> Result<(), CliError> {
    let lambdas = parse_grid(&a.lambdas).map_err(|e| CliError::config(Stage::Config, e))?;
    let curve = amplification(a.gamma, &lambdas)?;
    let (header, rows) = amplification_csv(&curve);
    emit_csv(a.out.as_deref(), &header, &rows)
}

#[derive(Serialize)]
struct PowerRow {
    gamma: f64,
    power: f64,
    std_error: f64,
}

#[derive(Serialize)]
struct PowerOutput {
    dgp: Dgp,
    family: String,
    alpha: f64,
    replications: usize,
    rows: Vec<PowerRow>,
    design_sensitivity: Option<balmatch::power::DesignSensitivity>,
}

fn cmd_power(a: PowerArgs) -> Result<(), CliError> {
    let noise: Noise = a.dgp.parse().at(Stage::Config)?;
    let dgp = Dgp::new(noise, a.n, a.seed).at(Stage::Config)?;
    let family = parse_family(&a.family)?;
    let gammas = a.gamma.as_deref().map(parse_gammas).transpose()?.unwrap_or_default();
    if gammas.is_empty() && !a.design_sensitivity {
        return Err(CliError::config(Stage::Config, "give --gamma or --design-sensitivity"));
    }
    let reps = Replications::simulate(&dgp, family, a.reps).at(Stage::Power)?;
    let rows = gammas
        .iter()
        .map(|&g| {
            let p = reps.power(g, a.alpha).at(Stage::Power)?;
            Ok(PowerRow { gamma: g, power: p.power, std_error: p.std_error })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let design_sensitivity = if a.design_sensitivity { Some(estimate_design_sensitivity(&dgp, family, a.alpha, a.reps).at(Stage::Power)?) } else { None };
    let out = PowerOutput { dgp, family: family.to_string(), alpha: a.alpha, replications: a.reps, rows, design_sensitivity };
    emit_json(a.out.as_deref(), &out, Stage::Power)
}

fn cmd_report(a: ReportArgs) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(&a.config)?;
    if let Some(o) = a.out {
        cfg.output_dir = o;
    }
    let report = run_pipeline(&cfg)?;
    let written = write_report(&report, &cfg.output_dir)?;
    let mut err = std::io::stderr().lock();
    for p in written {
        let _ = writeln!(err, "wrote {}", p.display());
    }
    Ok(())
}
