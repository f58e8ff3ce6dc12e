//! Monte-Carlo power of a sensitivity analysis and design sensitivity.
//!
//! Power is the chance that `T` reaches the Normal-approximation critical
//! value `t_{Γ,α}` when differences come from a treatment effect with no
//! bias. Each replication draws from its own ChaCha stream, so results do
//! not depend on thread scheduling. A replication's statistic is computed
//! once and compared against every Γ.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::PairDifferences;
use crate::scores::{compute_scores, statistic_value, ScoreError, StatFamily};
use crate::sens::{critical_value, GammaModel, SensError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PowerError {
    #[error("invalid data-generating model: {0}")]
    BadModel(String),
    #[error("replication count must be positive")]
    NoReplications,
    #[error("power at Γ = 1 is {0}, below one half; no crossing")]
    NoCrossing(f64),
    #[error(transparent)]
    Scores(#[from] ScoreError),
    #[error(transparent)]
    Sens(#[from] SensError),
}

/// Distribution of a pair difference `τ + ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Noise {
    /// `ε ~ N(0, σ²)`.
    Normal { tau: f64, sigma: f64 },
    /// `ε` Student t with `df` degrees of freedom.
    T { tau: f64, df: f64 },
}

impl Noise {
    pub fn tau(&self) -> f64 {
        match *self {
            Noise::Normal { tau, .. } | Noise::T { tau, .. } => tau,
        }
    }

    fn validate(&self) -> Result<(), PowerError> {
        match *self {
            Noise::Normal { sigma, .. } if !(sigma > 0.0 && sigma.is_finite()) => {
                Err(PowerError::BadModel(format!("sigma = {sigma}")))
            }
            Noise::T { df, .. } if !(df >= 1.0 && df.is_finite()) => Err(PowerError::BadModel(format!("df = {df}"))),
            _ => Ok(()),
        }
    }
}

impl std::str::FromStr for Noise {
    type Err = PowerError;

    /// `normal:tau,sigma` or `t:tau,df`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || PowerError::BadModel(s.to_string());
        let (name, args) = s.trim().split_once(':').ok_or_else(bad)?;
        let v: Vec<f64> = args.split(',').map(|x| x.trim().parse::<f64>().map_err(|_| bad())).collect::<Result<_, _>>()?;
        let noise = match (name.trim().to_ascii_lowercase().as_str(), v.as_slice()) {
            ("normal", [tau, sigma]) => Noise::Normal { tau: *tau, sigma: *sigma },
            ("t", [tau, df]) => Noise::T { tau: *tau, df: *df },
            _ => return Err(bad()),
        };
        noise.validate()?;
        Ok(noise)
    }
}

/// Data-generating process: `sample_size` i.i.d. pair differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dgp {
    pub noise: Noise,
    pub sample_size: usize,
    pub seed: u64,
}

impl Dgp {
    pub fn new(noise: Noise, sample_size: usize, seed: u64) -> Result<Self, PowerError> {
        noise.validate()?;
        if sample_size < 2 {
            return Err(PowerError::BadModel(format!("sample size {sample_size}")));
        }
        Ok(Dgp { noise, sample_size, seed })
    }

    /// Differences for replication `rep`.
    pub fn draw(&self, rep: u64) -> PairDifferences {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(rep);
        let y = match self.noise {
            Noise::Normal { tau, sigma } => {
                let d = Normal::new(tau, sigma).expect("validated");
                (0..self.sample_size).map(|_| d.sample(&mut rng)).collect()
            }
            Noise::T { tau, df } => {
                let d = StudentT::new(df).expect("validated");
                (0..self.sample_size).map(|_| tau + d.sample(&mut rng)).collect()
            }
        };
        PairDifferences { y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerEstimate {
    pub power: f64,
    pub replications: usize,
    pub std_error: f64,
}

impl PowerEstimate {
    fn from_hits(hits: usize, reps: usize) -> Self {
        let power = hits as f64 / reps as f64;
        PowerEstimate { power, replications: reps, std_error: (power * (1.0 - power) / reps as f64).sqrt() }
    }
}

/// Statistic and score sums of each replication.
#[derive(Debug, Clone)]
pub struct Replications {
    stats: Vec<(f64, f64, f64)>,
}

impl Replications {
    pub fn simulate(dgp: &Dgp, family: StatFamily, reps: usize) -> Result<Self, PowerError> {
        if reps == 0 {
            return Err(PowerError::NoReplications);
        }
        let stats = (0..reps as u64)
            .into_par_iter()
            .map(|rep| {
                let s = compute_scores(&dgp.draw(rep), family)?;
                Ok((statistic_value(&s), s.sum_q(), s.sum_q2()))
            })
            .collect::<Result<Vec<_>, ScoreError>>()?;
        Ok(Replications { stats })
    }

    pub fn power(&self, gamma: f64, alpha: f64) -> Result<PowerEstimate, PowerError> {
        let model = GammaModel::new(gamma)?;
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(SensError::BadAlpha(alpha).into());
        }
        let hits = self.stats.iter().filter(|&&(t, sq, sq2)| t >= critical_value(sq, sq2, model, alpha)).count();
        Ok(PowerEstimate::from_hits(hits, self.stats.len()))
    }
}

/// Fraction of replications in which the Γ sensitivity analysis rejects.
pub fn power_of_sensitivity(dgp: &Dgp, family: StatFamily, gamma: f64, alpha: f64, reps: usize) -> Result<PowerEstimate, PowerError> {
    Replications::simulate(dgp, family, reps)?.power(gamma, alpha)
}

/// Power at each Γ from one shared set of replications.
pub fn power_curve(dgp: &Dgp, family: StatFamily, gammas: &[f64], alpha: f64, reps: usize) -> Result<Vec<PowerEstimate>, PowerError> {
    let r = Replications::simulate(dgp, family, reps)?;
    gammas.iter().map(|&g| r.power(g, alpha)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignSensitivity {
    /// Γ where the estimated power crosses one half.
    pub gamma: f64,
    /// Final bisection bracket: power >= 1/2 at the left end, < 1/2 at the right.
    pub bracket: (f64, f64),
}

/// Γ at which power falls through one half, for the sample size of `dgp`.
pub fn estimate_design_sensitivity(dgp: &Dgp, family: StatFamily, alpha: f64, reps: usize) -> Result<DesignSensitivity, PowerError> {
    let r = Replications::simulate(dgp, family, reps)?;
    let at = |g: f64| r.power(g, alpha).map(|p| p.power);
    let p1 = at(1.0)?;
    if p1 < 0.5 {
        return Err(PowerError::NoCrossing(p1));
    }
    let (mut lo, mut hi) = (1.0, 2.0);
    while at(hi)? >= 0.5 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e9 {
            return Err(PowerError::BadModel("power never falls below one half".into()));
        }
    }
    while hi - lo > 1e-3 * lo {
        let mid = 0.5 * (lo + hi);
        if at(mid)? >= 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(DesignSensitivity { gamma: 0.5 * (lo + hi), bracket: (lo, hi) })
}
