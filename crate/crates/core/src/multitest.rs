//! One hypothesis, several statistics: the smallest upper-bound P-value
//! corrected for multiplicity with a joint Normal approximation.
//!
//! Under the upper bounding distribution every family shares the same
//! independent sign indicators, so the standardised statistics are jointly
//! Normal with correlation `ρ_kl = Σ q_ki q_li / sqrt(Σ q_ki² Σ q_li²)`.
//! The corrected bound is `Pr(max_k Z_k >= max_k d_k)`, evaluated with
//! randomised lattice integration of the separated-variables form of the
//! multivariate Normal distribution function.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::PairDifferences;
use crate::scalar::Scalar;
use crate::scores::{compute_scores, statistic_value, ScoreError, StatFamily};
use crate::sens::{upper_deviate, GammaModel, SensError};
use crate::stats::{norm_cdf, norm_quantile, norm_sf};

pub const MAX_FAMILIES: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MultiError {
    #[error("between 2 and {MAX_FAMILIES} statistics are needed, got {0}")]
    TooManyFamilies(usize),
    #[error("all scores of {0} are zero")]
    DegenerateScores(StatFamily),
    #[error("correlation matrix is not positive semidefinite")]
    NotPsd,
    #[error(transparent)]
    Scores(#[from] ScoreError),
    #[error(transparent)]
    Sens(#[from] SensError),
}

/// Integration settings for the multivariate Normal probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MvnOptions {
    /// Lattice points per random shift.
    pub points: usize,
    /// Number of random shifts; their spread gives the error estimate.
    pub shifts: usize,
    pub seed: u64,
}

impl Default for MvnOptions {
    fn default() -> Self {
        MvnOptions { points: 4096, shifts: 16, seed: 0x5eed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointTest {
    pub families: Vec<StatFamily>,
    /// Row-major `K×K` correlation matrix.
    pub correlation: Vec<Vec<f64>>,
    pub deviates: Vec<f64>,
    /// Single-test upper bounds `1 - Φ(d_k)`.
    pub single_bounds: Vec<f64>,
    pub corrected: f64,
    /// Three standard errors of the lattice estimate.
    pub error: f64,
}

/// Joint test of `families` on the differences `y` at sensitivity `model`.
pub fn corrected_pvalue<S: Scalar>(
    y: &PairDifferences<S>,
    families: &[StatFamily],
    model: GammaModel,
    opts: &MvnOptions,
) -> Result<JointTest, MultiError> {
    let k = families.len();
    if !(2..=MAX_FAMILIES).contains(&k) {
        return Err(MultiError::TooManyFamilies(k));
    }
    let mut q = Vec::with_capacity(k);
    let mut deviates = Vec::with_capacity(k);
    for &f in families {
        let s = compute_scores(y, f)?;
        let (sq, sq2) = (s.sum_q(), s.sum_q2());
        if sq2 <= 0.0 {
            return Err(MultiError::DegenerateScores(f));
        }
        deviates.push(upper_deviate(sq, sq2, model, statistic_value(&s).f64())?);
        q.push(s.q.iter().map(|v| v.f64()).collect::<Vec<f64>>());
    }
    let correlation: Vec<Vec<f64>> = (0..k)
        .map(|a| {
            (0..k)
                .map(|b| {
                    if a == b {
                        return 1.0;
                    }
                    let num: f64 = q[a].iter().zip(&q[b]).map(|(x, y)| x * y).sum();
                    let den = (q[a].iter().map(|x| x * x).sum::<f64>() * q[b].iter().map(|x| x * x).sum::<f64>()).sqrt();
                    (num / den).clamp(-1.0, 1.0)
                })
                .collect()
        })
        .collect();
    let single_bounds: Vec<f64> = deviates.iter().map(|&d| norm_sf(d)).collect();
    let dmax = deviates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (corrected, error) = max_exceedance(&correlation, dmax, opts)?;
    Ok(JointTest { families: families.to_vec(), correlation, deviates, single_bounds, corrected, error })
}

/// `Pr(max_k Z_k >= d)` for `Z ~ N(0, corr)`, clamped to the
/// Bonferroni range, with its error estimate.
pub fn max_exceedance(corr: &[Vec<f64>], d: f64, opts: &MvnOptions) -> Result<(f64, f64), MultiError> {
    let k = corr.len();
    let single = norm_sf(d);
    // Components perfectly correlated with an earlier one add nothing.
    let keep: Vec<usize> = (0..k).filter(|&i| (0..i).all(|j| corr[i][j] < 1.0 - 1e-12)).collect();
    let sub: Vec<Vec<f64>> = keep.iter().map(|&i| keep.iter().map(|&j| corr[i][j]).collect()).collect();
    let (cdf, err) = if sub.len() == 1 { (norm_cdf(d), 0.0) } else { mvn_cdf_equal(&sub, d, opts)? };
    let p = (1.0 - cdf).clamp(single, (k as f64 * single).min(1.0));
    Ok((p, err))
}

/// Cholesky factor allowing zero pivots (semidefinite input).
fn semidefinite_cholesky(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, MultiError> {
    let k = a.len();
    let mut l = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..=i {
            let s: f64 = (0..j).map(|p| l[i][p] * l[j][p]).sum();
            if i == j {
                let d = a[i][i] - s;
                if d < -1e-8 {
                    return Err(MultiError::NotPsd);
                }
                l[i][i] = d.max(0.0).sqrt();
            } else if l[j][j] > 1e-10 {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    Ok(l)
}

fn is_prime(n: u64) -> bool {
    n >= 2 && (2..).take_while(|p| p * p <= n).all(|p| !n.is_multiple_of(p))
}

/// `Φ_K(d, …, d; corr)` by the separated-variables transform on a
/// randomised Richtmyer lattice with the periodising tent transform.
fn mvn_cdf_equal(corr: &[Vec<f64>], d: f64, opts: &MvnOptions) -> Result<(f64, f64), MultiError> {
    let k = corr.len();
    let l = semidefinite_cholesky(corr)?;
    let generators: Vec<f64> = (2u64..).filter(|&p| is_prime(p)).take(k - 1).map(|p| (p as f64).sqrt().fract()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut means = Vec::with_capacity(opts.shifts);
    let mut y = vec![0.0; k];
    for _ in 0..opts.shifts {
        let shift: Vec<f64> = (0..k - 1).map(|_| rng.random::<f64>()).collect();
        let mut acc = 0.0;
        for n in 1..=opts.points {
            let mut prob = 1.0;
            for i in 0..k {
                let s: f64 = (0..i).map(|j| l[i][j] * y[j]).sum();
                let e = if l[i][i] > 1e-10 {
                    norm_cdf((d - s) / l[i][i])
                } else if d - s >= 0.0 {
                    1.0
                } else {
                    0.0
                };
                prob *= e;
                if prob == 0.0 {
                    break;
                }
                if i + 1 < k {
                    let x = (n as f64 * generators[i] + shift[i]).fract();
                    let w = (2.0 * x - 1.0).abs();
                    y[i] = norm_quantile((w * e).clamp(1e-300, 1.0 - 1e-16));
                }
            }
            acc += prob;
        }
        means.push(acc / opts.points as f64);
    }
    let m = means.len() as f64;
    let mean = means.iter().sum::<f64>() / m;
    let var = means.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
    Ok((mean, 3.0 * (var / m).sqrt()))
}
