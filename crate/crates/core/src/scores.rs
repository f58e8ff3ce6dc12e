//! Signed-rank scores `q_i` for the supported test statistics.
//!
//! Every statistic has the form `T = Σ sgn(Y_i) q_i` with `sgn(y) = 1` for
//! `y > 0` and 0 otherwise. Zero differences are left out of the ranking
//! and score `q_i = 0`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::data::PairDifferences;
use crate::scalar::Scalar;
use crate::stats::{median, midranks};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoreError {
    #[error("bad statistic parameters: {0}")]
    BadParams(String),
    #[error("at least two pairs are needed, found {0}")]
    TooFewPairs(usize),
    #[error("cannot parse statistic {0:?}")]
    Parse(String),
    #[error("{0} scores depend on the data, not only on ranks")]
    DataDependent(StatFamily),
}

/// Test statistic family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum StatFamily {
    Sign,
    Wilcoxon,
    /// U-statistic: averages, over subsets of `m` pairs,
    /// the count of positive differences among those with rank between
    /// `lower` and `upper` within the subset.
    #[serde(rename = "ustat")]
    UStat { m: usize, lower: usize, upper: usize },
    #[serde(rename = "permt")]
    PermT,
    /// Trimmed score `ψ(|y| / median|y|)`: 0 below `inner`, 1 above
    /// `outer`, linear between.
    #[serde(rename = "mstat")]
    MStat { inner: f64, outer: f64 },
}

impl StatFamily {
    pub const HUBER_DEFAULT: StatFamily = StatFamily::MStat { inner: 0.5, outer: 3.0 };

    pub fn validate(&self) -> Result<(), ScoreError> {
        match *self {
            StatFamily::UStat { m, lower, upper } if !(1 <= lower && lower <= upper && upper <= m) => Err(
                ScoreError::BadParams(format!("need 1 <= {lower} <= {upper} <= {m}")),
            ),
            StatFamily::MStat { inner, outer } if !(0.0 <= inner && inner < outer && outer.is_finite()) => {
                Err(ScoreError::BadParams(format!("need 0 <= {inner} < {outer}")))
            }
            _ => Ok(()),
        }
    }

    /// True when `q` depends only on the ranks of `|Y|`, so `Σ q_i` is fixed
    /// by the number of pairs.
    pub fn is_rank_based(&self) -> bool {
        matches!(self, StatFamily::Sign | StatFamily::Wilcoxon | StatFamily::UStat { .. })
    }
}

impl fmt::Display for StatFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StatFamily::Sign => f.write_str("sign"),
            StatFamily::Wilcoxon => f.write_str("wilcoxon"),
            StatFamily::UStat { m, lower, upper } => write!(f, "ustat:{m},{lower},{upper}"),
            StatFamily::PermT => f.write_str("permt"),
            StatFamily::MStat { inner, outer } => write!(f, "mstat:{inner},{outer}"),
        }
    }
}

impl FromStr for StatFamily {
    type Err = ScoreError;

    /// Parses `sign`, `wilcoxon`, `ustat:m,lower,upper`, `permt` and
    /// `mstat[:inner,outer]`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (name, args) = s.split_once(':').map_or((s, None), |(n, a)| (n, Some(a)));
        let nums = |a: &str| -> Result<Vec<f64>, ScoreError> {
            a.split(',').map(|v| v.trim().parse::<f64>().map_err(|_| ScoreError::Parse(s.to_string()))).collect()
        };
        let fam = match (name.to_ascii_lowercase().as_str(), args) {
            ("sign", None) => StatFamily::Sign,
            ("wilcoxon", None) => StatFamily::Wilcoxon,
            ("permt", None) => StatFamily::PermT,
            ("mstat", None) => StatFamily::HUBER_DEFAULT,
            ("mstat", Some(a)) => match nums(a)?.as_slice() {
                [i, o] => StatFamily::MStat { inner: *i, outer: *o },
                _ => return Err(ScoreError::Parse(s.to_string())),
            },
            ("ustat", Some(a)) => {
                let v: Vec<usize> = a
                    .split(',')
                    .map(|x| x.trim().parse::<usize>().map_err(|_| ScoreError::Parse(s.to_string())))
                    .collect::<Result<_, _>>()?;
                match v.as_slice() {
                    [m, l, u] => StatFamily::UStat { m: *m, lower: *l, upper: *u },
                    _ => return Err(ScoreError::Parse(s.to_string())),
                }
            }
            _ => return Err(ScoreError::Parse(s.to_string())),
        };
        fam.validate()?;
        Ok(fam)
    }
}

/// Per-pair scores and sign indicators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector<S = f64> {
    pub q: Vec<S>,
    /// 1 when `Y_i > 0`, else 0.
    pub signs: Vec<u8>,
    pub family: StatFamily,
    /// Multiplier that makes every `q_i` an integer, when one is known.
    pub integer_scale: Option<f64>,
}

impl<S: Scalar> ScoreVector<S> {
    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn sum_q(&self) -> f64 {
        self.q.iter().map(|v| v.f64()).sum()
    }

    pub fn sum_q2(&self) -> f64 {
        self.q.iter().map(|v| v.f64() * v.f64()).sum()
    }
}

fn ln_choose(n: usize, k: usize) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// `C(n, k)` in floating point, exact while it stays below 2^53.
fn choose(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut c = 1.0f64;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
        if c > 9.0e15 {
            return ln_choose(n, k).exp();
        }
    }
    c.round()
}

/// U-statistic score for rank `a` among `n` nonzero differences:
/// `Σ_{ℓ=lower}^{upper} C(a-1, ℓ-1) C(n-a, m-ℓ) / C(n, m)`.
pub fn ustat_score(a: usize, n: usize, m: usize, lower: usize, upper: usize) -> f64 {
    debug_assert!(1 <= a && a <= n && m <= n);
    let log_total = ln_choose(n, m);
    (lower..=upper)
        .filter(|&l| l <= a && m - l <= n - a)
        .map(|l| (ln_choose(a - 1, l - 1) + ln_choose(n - a, m - l) - log_total).exp())
        .sum()
}

/// Scores as a function of the rank `a = 1..=n` of `|Y|` among `n` untied
/// nonzero differences.
pub fn rank_scores(family: StatFamily, n: usize) -> Result<Vec<f64>, ScoreError> {
    family.validate()?;
    match family {
        StatFamily::Sign => Ok(vec![1.0; n]),
        StatFamily::Wilcoxon => Ok((1..=n).map(|a| a as f64).collect()),
        StatFamily::UStat { m, lower, upper } => {
            if m > n {
                return Err(ScoreError::BadParams(format!("m = {m} exceeds the {n} nonzero differences")));
            }
            Ok((1..=n).map(|a| ustat_score(a, n, m, lower, upper)).collect())
        }
        f => Err(ScoreError::DataDependent(f)),
    }
}

/// Rounds a midrank to an integer rank; half-integers move toward the
/// average rank `(n + 1) / 2`.
fn integer_rank(midrank: f64, n: usize) -> usize {
    let centre = (n as f64 + 1.0) / 2.0;
    let fl = midrank.floor();
    if midrank == fl {
        return fl as usize;
    }
    if midrank < centre {
        fl as usize + 1
    } else {
        fl as usize
    }
}

fn mstat_psi(r: f64, inner: f64, outer: f64) -> f64 {
    if r < inner {
        0.0
    } else if r > outer {
        1.0
    } else {
        (r - inner) / (outer - inner)
    }
}

/// Scores `q_i` and signs for the differences `y`.
pub fn compute_scores<S: Scalar>(y: &PairDifferences<S>, family: StatFamily) -> Result<ScoreVector<S>, ScoreError> {
    family.validate()?;
    let n_all = y.len();
    if n_all < 2 {
        return Err(ScoreError::TooFewPairs(n_all));
    }
    let signs: Vec<u8> = y.y.iter().map(|v| (*v > S::zero()) as u8).collect();
    let abs: Vec<S> = y.y.iter().map(|v| v.abs()).collect();
    let nonzero: Vec<usize> = (0..n_all).filter(|&i| abs[i] != S::zero()).collect();
    let n = nonzero.len();
    let mut q = vec![S::zero(); n_all];
    let ranks = || midranks(&nonzero.iter().map(|&i| abs[i]).collect::<Vec<_>>());

    let integer_scale = match family {
        StatFamily::Sign => {
            nonzero.iter().for_each(|&i| q[i] = S::one());
            Some(1.0)
        }
        StatFamily::Wilcoxon => {
            for (&i, r) in nonzero.iter().zip(ranks()) {
                q[i] = r;
            }
            Some(2.0)
        }
        StatFamily::UStat { m, .. } => {
            if m > n {
                return Err(ScoreError::BadParams(format!("m = {m} exceeds the {n} nonzero differences")));
            }
            let table = rank_scores(family, n)?;
            for (&i, r) in nonzero.iter().zip(ranks()) {
                q[i] = S::of(table[integer_rank(r.f64(), n) - 1]);
            }
            let denom = choose(n, m);
            (denom < 9.0e15).then_some(denom)
        }
        StatFamily::PermT => {
            q.copy_from_slice(&abs);
            None
        }
        StatFamily::MStat { inner, outer } => {
            let med = median(&abs).f64();
            for &i in &nonzero {
                let r = if med > 0.0 { abs[i].f64() / med } else { f64::INFINITY };
                q[i] = S::of(mstat_psi(r, inner, outer));
            }
            None
        }
    };
    Ok(ScoreVector { q, signs, family, integer_scale })
}

/// `T = Σ sgn(Y_i) q_i`.
pub fn statistic_value<S: Scalar>(scores: &ScoreVector<S>) -> S {
    scores.q.iter().zip(&scores.signs).filter(|(_, &s)| s == 1).map(|(q, _)| *q).sum()
}

/// Normalised weight curve `(a / n, q(a) / max q)` for `a = 1..=n`.
pub fn normalized_weight_curve(family: StatFamily, n: usize) -> Result<Vec<(f64, f64)>, ScoreError> {
    let q = rank_scores(family, n)?;
    let max = q.iter().copied().fold(0.0, f64::max);
    Ok(q.iter()
        .enumerate()
        .map(|(i, &v)| ((i + 1) as f64 / n as f64, if max > 0.0 { v / max } else { 0.0 }))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pd(y: &[f64]) -> PairDifferences {
        PairDifferences::new(y.to_vec()).unwrap()
    }

    #[test]
    fn ustat_111_is_constant() {
        let q = rank_scores(StatFamily::UStat { m: 1, lower: 1, upper: 1 }, 5).unwrap();
        for v in q {
            assert!((v - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn ustat_222_rank_three() {
        assert!((ustat_score(3, 5, 2, 2, 2) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn mstat_pieces() {
        // median |y| = 10
        let s = compute_scores(&pd(&[4.0, -30.0, 17.5, 10.0, 10.0]), StatFamily::HUBER_DEFAULT).unwrap();
        assert_eq!(s.q[0], 0.0);
        assert_eq!(s.q[1], 1.0);
        assert!((s.q[2] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn statistic_examples() {
        let s = compute_scores(&pd(&[3.0, -1.0, 2.0]), StatFamily::Wilcoxon).unwrap();
        assert_eq!(s.q, vec![3.0, 1.0, 2.0]);
        assert_eq!(statistic_value(&s), 5.0);
        let s = compute_scores(&pd(&[5.0, -2.0]), StatFamily::PermT).unwrap();
        assert_eq!(statistic_value(&s), 5.0);
        let s = compute_scores(&pd(&[-5.0, -2.0, -1.0]), StatFamily::Sign).unwrap();
        assert_eq!(statistic_value(&s), 0.0);
    }

    #[test]
    fn zeros_score_zero() {
        let s = compute_scores(&pd(&[0.0, 2.0, -1.0, 0.0]), StatFamily::Wilcoxon).unwrap();
        assert_eq!(s.q, vec![0.0, 2.0, 1.0, 0.0]);
        assert_eq!(s.signs, vec![0, 1, 0, 0]);
    }

    #[test]
    fn ties_use_midranks() {
        let s = compute_scores(&pd(&[1.0, -1.0, 3.0]), StatFamily::Wilcoxon).unwrap();
        assert_eq!(s.q, vec![1.5, 1.5, 3.0]);
    }

    #[test]
    fn tied_ustat_rank_moves_to_centre() {
        assert_eq!(integer_rank(1.5, 5), 2);
        assert_eq!(integer_rank(4.5, 5), 4);
        assert_eq!(integer_rank(3.0, 5), 3);
    }

    #[test]
    fn parse_round_trip() {
        for s in ["sign", "wilcoxon", "ustat:20,18,20", "permt", "mstat:0.5,3"] {
            let f: StatFamily = s.parse().unwrap();
            assert_eq!(f.to_string().parse::<StatFamily>().unwrap(), f);
        }
        assert_eq!("mstat".parse::<StatFamily>().unwrap(), StatFamily::HUBER_DEFAULT);
        assert!("ustat:3,4,3".parse::<StatFamily>().is_err());
        assert!("median".parse::<StatFamily>().is_err());
    }

    #[test]
    fn ustat_needs_enough_pairs() {
        let r = compute_scores(&pd(&[1.0, 2.0, 0.0]), StatFamily::UStat { m: 3, lower: 3, upper: 3 });
        assert!(matches!(r, Err(ScoreError::BadParams(_))));
    }

    #[test]
    fn weight_curves() {
        let w = normalized_weight_curve(StatFamily::Wilcoxon, 4).unwrap();
        assert!(w.iter().all(|(a, q)| (a - q).abs() < 1e-12));
        let s = normalized_weight_curve(StatFamily::UStat { m: 1, lower: 1, upper: 1 }, 7).unwrap();
        assert!(s.iter().all(|(_, q)| (q - 1.0).abs() < 1e-12));
        let u = normalized_weight_curve(StatFamily::UStat { m: 20, lower: 20, upper: 20 }, 100).unwrap();
        assert!(u[9].1 < 1e-6);
        assert_eq!(u[99].1, 1.0);
        assert!(matches!(normalized_weight_curve(StatFamily::PermT, 3), Err(ScoreError::DataDependent(_))));
    }

    #[test]
    fn f32_scores() {
        let y = PairDifferences::new(vec![3.0f32, -1.0, 2.0]).unwrap();
        let s = compute_scores(&y, StatFamily::Wilcoxon).unwrap();
        assert_eq!(statistic_value(&s), 5.0f32);
    }
}
