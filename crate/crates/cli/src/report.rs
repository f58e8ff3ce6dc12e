//! `report.json` plus one flat CSV per table.

use std::path::{Path, PathBuf};

use csv::Writer;

use crate::analysis::{AmplificationCurve, SensitivityAnalysis};
use crate::error::{CliError, Stage};
use crate::io::write_json;
use crate::pipeline::StudyReport;

fn csv_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::config(Stage::Report, format!("{}: {e}", path.display()))
}

/// Writes `rows` (header first) to `path`.
pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| csv_err(path, e))
}

/// Shortest round-tripping decimal form; empty for a missing value.
pub fn fmt(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

pub fn sensitivity_csv(a: &SensitivityAnalysis) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = vec!["gamma".to_string()];
    for f in &a.families {
        header.push(format!("{}_lower", f.family));
        header.push(format!("{}_upper", f.family));
    }
    let combine = a.rows.iter().any(|r| r.combined.is_some());
    if combine {
        header.push("combined_upper".into());
        header.push("combined_error".into());
    }
    let rows = a
        .rows
        .iter()
        .map(|r| {
            let mut row = vec![fmt(r.gamma)];
            for b in &r.bounds {
                row.push(fmt(b.lower));
                row.push(fmt(b.upper));
            }
            if combine {
                row.push(fmt_opt(r.combined));
                row.push(fmt_opt(r.combined_error));
            }
            row
        })
        .collect();
    (header, rows)
}

pub fn hl_csv(a: &SensitivityAnalysis) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = vec!["gamma".to_string()];
    for f in &a.families {
        header.push(format!("{}_min", f.family));
        header.push(format!("{}_max", f.family));
    }
    let rows = a
        .hl
        .iter()
        .map(|r| {
            let mut row = vec![fmt(r.gamma)];
            for e in &r.estimates {
                row.push(fmt_opt(e.map(|x| x.0)));
                row.push(fmt_opt(e.map(|x| x.1)));
            }
            row
        })
        .collect();
    (header, rows)
}

pub fn amplification_csv(c: &AmplificationCurve) -> (Vec<String>, Vec<Vec<String>>) {
    let header = ["gamma", "lambda", "delta"].map(String::from).to_vec();
    let rows = c.points.iter().map(|p| vec![fmt(p.gamma), fmt(p.lambda), fmt(p.delta)]).collect();
    (header, rows)
}

/// Writes the report and its tables into `dir`; returns the paths written.
pub fn write_report(report: &StudyReport, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| csv_err(dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: String, (header, rows): (Vec<String>, Vec<Vec<String>>)| -> Result<(), CliError> {
        let p = dir.join(name);
        write_csv(&p, &header, &rows)?;
        written.push(p);
        Ok(())
    };

    let balance = report
        .balance
        .iter()
        .map(|b| vec![b.label.clone(), fmt(b.mean_imbalance), fmt(b.tolerance), b.satisfied.to_string()])
        .collect();
    put("balance.csv".into(), (["constraint", "mean_imbalance", "tolerance", "satisfied"].map(String::from).to_vec(), balance))?;

    let comparison = report
        .pairings
        .iter()
        .map(|p| {
            let h = p.heterogeneity;
            let gstar = p.sensitivity.as_ref().map(|a| a.families[0].sensitivity_value);
            vec![
                p.label.clone(),
                fmt(p.total_distance),
                fmt_opt(h.map(|h| h.mean)),
                fmt_opt(h.map(|h| h.sd)),
                fmt_opt(h.map(|h| h.mad)),
                fmt_opt(gstar),
            ]
        })
        .collect();
    put(
        "pairings.csv".into(),
        (["pairing", "total_distance", "mean", "sd", "mad", "sensitivity_value"].map(String::from).to_vec(), comparison),
    )?;

    for p in &report.pairings {
        if let Some(h) = &p.histogram {
            let rows = h.counts.iter().enumerate().map(|(i, c)| vec![fmt(h.edges[i]), fmt(h.edges[i + 1]), c.to_string()]).collect();
            put(format!("histogram_{}.csv", p.label), (["lower", "upper", "count"].map(String::from).to_vec(), rows))?;
        }
        if let Some(a) = &p.sensitivity {
            put(format!("sens_{}.csv", p.label), sensitivity_csv(a))?;
            put(format!("hl_{}.csv", p.label), hl_csv(a))?;
        }
        if let Some(c) = &p.amplification {
            put(format!("amplification_{}.csv", p.label), amplification_csv(c))?;
        }
    }
    if !report.weight_curves.is_empty() {
        let rows = report
            .weight_curves
            .iter()
            .flat_map(|w| w.points.iter().map(move |&(x, q)| vec![w.family.clone(), fmt(x), fmt(q)]))
            .collect();
        put("weights.csv".into(), (["family", "rank_fraction", "weight"].map(String::from).to_vec(), rows))?;
    }

    let json = dir.join("report.json");
    write_json(&json, report, Stage::Report)?;
    written.push(json);
    if let Some(m) = &report.artifacts.match_file {
        let p = dir.join("match.json");
        write_json(&p, m, Stage::Report)?;
        written.push(p);
    }
    for (label, f) in &report.artifacts.pairs_files {
        let p = dir.join(format!("pairs_{label}.json"));
        write_json(&p, f, Stage::Report)?;
        written.push(p);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{Bounds, FamilySummary, SensRow};

    #[test]
    fn sensitivity_layout_is_gamma_by_statistic() {
        let a = SensitivityAnalysis {
            families: vec![
                FamilySummary { family: "wilcoxon".into(), statistic: 1.0, sum_q: 2.0, sensitivity_value: 1.2 },
                FamilySummary { family: "sign".into(), statistic: 1.0, sum_q: 2.0, sensitivity_value: 1.1 },
            ],
            method: "normal".into(),
            alpha: 0.05,
            rows: vec![SensRow { gamma: 1.0, bounds: vec![Bounds { lower: 0.1, upper: 0.2 }; 2], combined: None, combined_error: None }],
            hl: vec![],
        };
        let (h, r) = sensitivity_csv(&a);
        assert_eq!(h, vec!["gamma", "wilcoxon_lower", "wilcoxon_upper", "sign_lower", "sign_upper"]);
        assert_eq!(r[0], vec!["1", "0.1", "0.2", "0.1", "0.2"]);
    }
}
