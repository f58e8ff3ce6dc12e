//! Synthetic observational study written to disk for pipeline tests.

#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use balmatch_cli::config::{GridSpec, RunConfig, SolverConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const REGIONS: [&str; 5] = ["A", "B", "C", "D", "E"];
pub const NUMERIC: usize = 11;
/// Covariates that drive the outcome.
pub const KEY: [&str; 4] = ["x1", "x2", "x3", "x4"];

pub struct Study {
    pub n_treated: usize,
    pub n_controls: usize,
    /// Units per region, treated then control.
    pub treated_regions: [usize; 5],
    pub control_regions: [usize; 5],
    pub effect: f64,
    /// Treated covariates are shifted by this much.
    pub selection: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Study {
    /// 2000 treated, 6000 controls; region D holds 200 treated and 300
    /// controls, so no 2-to-1 finely balanced match exists.
    pub fn large() -> Self {
        Study {
            n_treated: 2000,
            n_controls: 6000,
            treated_regions: [500, 500, 400, 200, 400],
            control_regions: [1500, 1500, 1400, 300, 1300],
            effect: 1.0,
            selection: 0.2,
            noise_sd: 1.0,
            seed: 2024,
        }
    }

    pub fn small() -> Self {
        Study {
            n_treated: 100,
            n_controls: 300,
            treated_regions: [25, 25, 20, 10, 20],
            control_regions: [75, 75, 70, 15, 65],
            effect: 1.0,
            selection: 0.2,
            noise_sd: 1.0,
            seed: 5,
        }
    }

    pub fn csv(&self) -> String {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let noise = Normal::new(0.0, self.noise_sd).unwrap();
        let std = Normal::new(0.0, 1.0).unwrap();
        let mut out = String::from("id,z,y,region");
        for j in 1..=NUMERIC {
            write!(out, ",x{j}").unwrap();
        }
        out.push('\n');
        let mut id = 0;
        for (z, counts) in [(1, self.treated_regions), (0, self.control_regions)] {
            for (r, &n) in counts.iter().enumerate() {
                for _ in 0..n {
                    let shift = if z == 1 { self.selection } else { 0.0 };
                    // Rounded to one decimal so that ranks have ties.
                    let x: Vec<f64> = (0..NUMERIC).map(|_| ((std.sample(&mut rng) + shift) * 10.0).round() / 10.0).collect();
                    let y = self.effect * z as f64 + 2.0 * x[..4].iter().sum::<f64>() + 0.2 * x[4] + noise.sample(&mut rng);
                    write!(out, "u{id},{z},{y:.4},{}", REGIONS[r]).unwrap();
                    for v in &x {
                        write!(out, ",{v}").unwrap();
                    }
                    out.push('\n');
                    id += 1;
                }
            }
        }
        // Shuffle rows so that group and region are not sorted.
        let mut lines: Vec<&str> = out.lines().skip(1).collect();
        for i in (1..lines.len()).rev() {
            lines.swap(i, rng.random_range(0..=i));
        }
        let header = out.lines().next().unwrap().to_string();
        std::iter::once(header.as_str()).chain(lines).map(|l| format!("{l}\n")).collect()
    }
}

pub fn schema_toml() -> String {
    let mut s = String::from("id = \"id\"\noutcome = \"y\"\n\n[group]\ncolumn = \"z\"\ntreated = \"1\"\ncontrol = \"0\"\n\n");
    s.push_str("[[columns]]\nname = \"region\"\nkind = \"categorical\"\nlevels = [\"A\", \"B\", \"C\", \"D\", \"E\"]\n\n");
    for j in 1..=NUMERIC {
        writeln!(s, "[[columns]]\nname = \"x{j}\"\nkind = \"numeric\"\n").unwrap();
    }
    s
}

pub fn balance_toml() -> String {
    let mut s = String::from("[[balance]]\ntype = \"fine\"\ncolumn = \"region\"\n\n");
    for j in 1..=NUMERIC {
        writeln!(s, "[[balance]]\ntype = \"mean\"\ncolumn = \"x{j}\"\ntolerance_sd = 0.05\n").unwrap();
    }
    s
}

pub struct Written {
    pub data: PathBuf,
    pub schema: PathBuf,
    pub balance: PathBuf,
}

pub fn write_study(dir: &Path, study: &Study) -> Written {
    let w = Written { data: dir.join("study.csv"), schema: dir.join("schema.toml"), balance: dir.join("balance.toml") };
    std::fs::write(&w.data, study.csv()).unwrap();
    std::fs::write(&w.schema, schema_toml()).unwrap();
    std::fs::write(&w.balance, balance_toml()).unwrap();
    w
}

pub fn run_config(w: &Written, out: &Path) -> RunConfig {
    RunConfig {
        data: w.data.clone(),
        schema: w.schema.clone(),
        balance: w.balance.clone(),
        pairing_columns: None,
        key_columns: Some(KEY.iter().map(|s| s.to_string()).collect()),
        families: vec!["wilcoxon".into(), "ustat:8,7,8".into()],
        gammas: GridSpec::Text("1:3:0.25".into()),
        alpha: 0.05,
        seed: 1,
        output_dir: out.to_path_buf(),
        exact: false,
        combine: false,
        lambdas: None,
        enhanced: false,
        histogram_bins: 30,
        solver: SolverConfig::default(),
    }
}
