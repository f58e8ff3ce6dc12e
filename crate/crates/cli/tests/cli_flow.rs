//! The `balmatch` binary end to end on a small synthetic study.

mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::{write_study, Study, Written, KEY};
use serde_json::Value;

fn balmatch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_balmatch")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = balmatch(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    balmatch(args).status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn config_toml(w: &Written, out: &Path) -> String {
    format!(
        "data = {:?}\nschema = {:?}\nbalance = {:?}\noutput_dir = {:?}\nkey_columns = {:?}\nfamilies = [\"wilcoxon\", \"ustat:8,7,8\"]\ngammas = \"1:2:0.5\"\nseed = 3\n",
        p(&w.data),
        p(&w.schema),
        p(&w.balance),
        p(out),
        KEY
    )
}

#[test]
fn match_pair_and_analyse() {
    let dir = tempfile::tempdir().unwrap();
    let w = write_study(dir.path(), &Study::small());
    let m = dir.path().join("match.json");
    ok(&["match", "--data", p(&w.data), "--schema", p(&w.schema), "--balance", p(&w.balance), "--out", p(&m)]);
    let mf: Value = serde_json::from_str(&std::fs::read_to_string(&m).unwrap()).unwrap();
    assert_eq!(mf["ratio"], 1);
    let n = mf["pairs"].as_array().unwrap().len();
    assert!(n > 0 && n <= 100);

    let pairs = dir.path().join("pairs.json");
    ok(&["pair", "--match", p(&m), "--columns", &KEY.join(","), "--out", p(&pairs)]);
    let pf: Value = serde_json::from_str(&std::fs::read_to_string(&pairs).unwrap()).unwrap();
    assert_eq!(pf["pairs"].as_array().unwrap().len(), n);

    let stats: Value = serde_json::from_str(&ok(&["stats", "--pairs", p(&pairs), "--bins", "10"])).unwrap();
    assert_eq!(stats["pairs"], n);
    assert!(stats["heterogeneity"]["sd"].as_f64().unwrap() > 0.0);

    let scores = ok(&["scores", "--pairs", p(&pairs), "--family", "wilcoxon"]);
    assert_eq!(scores.lines().count(), n + 1);
    assert!(scores.starts_with("treated,control,difference,q,positive"));

    let sens: Value =
        serde_json::from_str(&ok(&["sens", "--pairs", p(&pairs), "--families", "wilcoxon;sign", "--gammas", "1,1.5,2", "--combine"])).unwrap();
    let rows = sens["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    let upper: Vec<f64> = rows.iter().map(|r| r["bounds"][0]["upper"].as_f64().unwrap()).collect();
    assert!(upper.windows(2).all(|u| u[0] <= u[1]));

    let hl = ok(&["hl", "--pairs", p(&pairs), "--gammas", "1:2:0.5"]);
    assert_eq!(hl.lines().count(), 4);
    let amp = ok(&["amplify", "--gamma", "1.5", "--lambdas", "2"]);
    assert_eq!(amp.lines().nth(1), Some("1.5,2,4"));
}

#[test]
fn single_gamma_grid() {
    let dir = tempfile::tempdir().unwrap();
    let w = write_study(dir.path(), &Study::small());
    let m = dir.path().join("match.json");
    let pairs = dir.path().join("pairs.json");
    ok(&["match", "--data", p(&w.data), "--schema", p(&w.schema), "--balance", p(&w.balance), "--out", p(&m)]);
    ok(&["pair", "--match", p(&m), "--out", p(&pairs)]);
    let sens: Value = serde_json::from_str(&ok(&["sens", "--pairs", p(&pairs), "--family", "wilcoxon", "--gammas", "1"])).unwrap();
    let rows = sens["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 1);
    let b = &rows[0]["bounds"][0];
    assert_eq!(b["lower"], b["upper"]);
}

#[test]
fn report_is_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let w = write_study(dir.path(), &Study::small());
    let mut reports = Vec::new();
    for (i, threads) in ["1", "4"].iter().enumerate() {
        let out = dir.path().join(format!("out{i}"));
        let cfg = dir.path().join(format!("run{i}.toml"));
        std::fs::write(&cfg, config_toml(&w, &out)).unwrap();
        let status = Command::new(env!("CARGO_BIN_EXE_balmatch"))
            .args(["report", "--config", p(&cfg)])
            .env("BALMATCH_THREADS", threads)
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        for f in ["report.json", "balance.csv", "pairings.csv", "match.json", "sens_all-covariate.csv", "hl_key-covariate.csv"] {
            assert!(out.join(f).exists(), "{f} missing");
        }
        reports.push(std::fs::read(out.join("report.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    let r: Value = serde_json::from_slice(&reports[0]).unwrap();
    assert_eq!(r["pairings"].as_array().unwrap().len(), 2);
}

#[test]
fn power_is_reproducible() {
    let args = ["power", "--dgp", "normal:0.5,1", "--n", "200", "--reps", "40", "--seed", "11", "--gamma", "1,2"];
    assert_eq!(ok(&args), ok(&args));
}

#[test]
fn bad_configuration_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let w = write_study(dir.path(), &Study::small());
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, config_toml(&w, &dir.path().join("out")) + "unknown_knob = 1\n").unwrap();
    assert_eq!(code(&["report", "--config", p(&cfg)]), 2);
    assert_eq!(code(&["amplify", "--gamma", "0.5", "--lambdas", "2"]), 2);
    assert_eq!(code(&["power", "--dgp", "normal:0.5,-1", "--n", "100", "--gamma", "2", "--seed", "1"]), 2);
}

#[test]
fn no_treated_units_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let w = write_study(dir.path(), &Study::small());
    let text = std::fs::read_to_string(&w.data).unwrap();
    let controls_only: String = text.lines().filter(|l| !l.contains(",1,")).map(|l| format!("{l}\n")).collect();
    std::fs::write(&w.data, controls_only).unwrap();
    let out = balmatch(&["match", "--data", p(&w.data), "--schema", p(&w.schema), "--balance", p(&w.balance), "--out", p(&dir.path().join("m.json"))]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("[load]"));
}

#[test]
fn infeasible_match_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let w = write_study(dir.path(), &Study::small());
    // Treated units only in region A, controls only elsewhere.
    let mut text = String::from("id,z,y,region");
    for j in 1..=common::NUMERIC {
        text.push_str(&format!(",x{j}"));
    }
    text.push('\n');
    for (i, (z, r)) in [(1, "A"), (1, "A"), (0, "B"), (0, "C"), (0, "D")].iter().enumerate() {
        text.push_str(&format!("u{i},{z},0.5,{r}{}\n", ",0".repeat(common::NUMERIC)));
    }
    std::fs::write(&w.data, text).unwrap();
    std::fs::write(&w.balance, "[[balance]]\ntype = \"fine\"\ncolumn = \"region\"\n").unwrap();
    let out = balmatch(&["match", "--data", p(&w.data), "--schema", p(&w.schema), "--balance", p(&w.balance), "--out", p(&dir.path().join("m.json"))]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}
