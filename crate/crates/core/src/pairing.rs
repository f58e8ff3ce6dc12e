//! Re-pairing a fixed matched sample: rank-based Mahalanobis distances,
//! optimal assignment and heterogeneity of the resulting differences.
//!
//! The distance ranks each column over the units involved (midranks for
//! ties), takes the covariance of the ranks and rescales it so every
//! diagonal entry equals the variance of the untied ranks `1..n`, keeping
//! the correlations. Ties therefore do not shrink a column's influence.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::{solve_assignment, AssignmentError};
use crate::cardmatch::MatchSolution;
use crate::data::{ColumnKind, PairDifferences, StudyData};
use crate::scalar::Scalar;
use crate::stats::{mad, mean, midranks, sample_sd};

#[derive(Debug, Error)]
pub enum PairingError {
    #[error("no distance columns given")]
    NoColumns,
    #[error("unknown column {0}")]
    UnknownColumn(String),
    #[error("column {0} is not numeric")]
    NotNumeric(String),
    #[error("unit {id} is missing column {column}")]
    MissingValue { id: String, column: String },
    #[error("rank covariance is singular; drop collinear or constant columns")]
    SingularCovariance,
    #[error("distance matrix is {rows}x{cols}; ratio {ratio} needs {expected} columns")]
    DimensionMismatch { rows: usize, cols: usize, ratio: usize, expected: usize },
    #[error("distance for treated {0} / control {1} is not a finite nonnegative number")]
    BadEntry(usize, usize),
    #[error("id {0} is not covered by the distance matrix")]
    UncoveredId(usize),
    #[error("at least two pairs are needed, found {0}")]
    TooFewPairs(usize),
    #[error(transparent)]
    Assignment(#[from] AssignmentError),
}

/// Treated-by-control distances. Row and column ids index
/// `StudyData::treated` and `StudyData::controls`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub row_ids: Vec<usize>,
    pub col_ids: Vec<usize>,
    /// Row-major entries.
    pub entries: Vec<f64>,
}

impl DistanceMatrix {
    pub fn new(row_ids: Vec<usize>, col_ids: Vec<usize>, entries: Vec<f64>) -> Result<Self, PairingError> {
        let (r, c) = (row_ids.len(), col_ids.len());
        if entries.len() != r * c {
            return Err(AssignmentError::DimensionMismatch { rows: r, cols: c, len: entries.len() }.into());
        }
        if let Some(k) = entries.iter().position(|e| !(e.is_finite() && *e >= 0.0)) {
            return Err(PairingError::BadEntry(row_ids[k / c], col_ids[k % c]));
        }
        Ok(DistanceMatrix { row_ids, col_ids, entries })
    }

    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.col_ids.len()
    }

    /// Entry at row position `r`, column position `c`.
    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.entries[r * self.col_ids.len() + c]
    }

    /// Sub-grid over the given treated and control ids.
    pub fn restrict(&self, rows: &[usize], cols: &[usize]) -> Result<DistanceMatrix, PairingError> {
        let rpos: HashMap<usize, usize> = self.row_ids.iter().enumerate().map(|(p, &id)| (id, p)).collect();
        let cpos: HashMap<usize, usize> = self.col_ids.iter().enumerate().map(|(p, &id)| (id, p)).collect();
        let rp: Vec<usize> = rows.iter().map(|id| rpos.get(id).copied().ok_or(PairingError::UncoveredId(*id))).collect::<Result<_, _>>()?;
        let cp: Vec<usize> = cols.iter().map(|id| cpos.get(id).copied().ok_or(PairingError::UncoveredId(*id))).collect::<Result<_, _>>()?;
        let entries = rp.iter().flat_map(|&r| cp.iter().map(move |&c| self.get(r, c))).collect();
        Ok(DistanceMatrix { row_ids: rows.to_vec(), col_ids: cols.to_vec(), entries })
    }
}

/// Each treated id with its controls, plus the summed distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSample {
    pub pairs: Vec<(usize, Vec<usize>)>,
    pub total_distance: f64,
}

impl PairedSample {
    pub fn pairing(&self) -> BTreeMap<usize, Vec<usize>> {
        self.pairs.iter().cloned().collect()
    }

    /// `matched` with its pairing replaced by this one.
    pub fn apply_to(&self, matched: &MatchSolution) -> MatchSolution {
        matched.with_pairing(self.pairing())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeterogeneityStats<S = f64> {
    pub mean: S,
    pub sd: S,
    pub mad: S,
}

fn numeric_columns(data: &StudyData, columns: &[&str]) -> Result<Vec<usize>, PairingError> {
    if columns.is_empty() {
        return Err(PairingError::NoColumns);
    }
    columns
        .iter()
        .map(|name| {
            let k = data.column_index(name).ok_or_else(|| PairingError::UnknownColumn(name.to_string()))?;
            if data.schema[k].kind != ColumnKind::Numeric {
                return Err(PairingError::NotNumeric(name.to_string()));
            }
            Ok(k)
        })
        .collect()
}

/// Lower Cholesky factor of a symmetric matrix, or `None` if it is not
/// numerically positive definite.
fn cholesky(a: &[f64], k: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..=i {
            let s: f64 = (0..j).map(|p| l[i * k + p] * l[j * k + p]).sum();
            if i == j {
                let d = a[i * k + i] - s;
                if d <= 1e-9 * a[i * k + i] {
                    return None;
                }
                l[i * k + i] = d.sqrt();
            } else {
                l[i * k + j] = (a[i * k + j] - s) / l[j * k + j];
            }
        }
    }
    Some(l)
}

/// Robust Mahalanobis distances between the given treated and control
/// units, ranking over exactly those units.
pub fn robust_mahalanobis_between(
    data: &StudyData,
    treated: &[usize],
    controls: &[usize],
    columns: &[&str],
) -> Result<DistanceMatrix, PairingError> {
    let cols = numeric_columns(data, columns)?;
    let k = cols.len();
    let units: Vec<_> = treated.iter().map(|&t| &data.treated[t]).chain(controls.iter().map(|&c| &data.controls[c])).collect();
    let n = units.len();

    let mut ranks: Vec<Vec<f64>> = Vec::with_capacity(k);
    for (&col, name) in cols.iter().zip(columns) {
        let values = units
            .iter()
            .map(|u| {
                u.covariates[col]
                    .as_numeric()
                    .ok_or_else(|| PairingError::MissingValue { id: u.id.clone(), column: name.to_string() })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        ranks.push(midranks(&values));
    }
    if n < 2 {
        return DistanceMatrix::new(treated.to_vec(), controls.to_vec(), vec![0.0; treated.len() * controls.len()]);
    }

    let centre = (n as f64 + 1.0) / 2.0;
    let mut cov = vec![0.0; k * k];
    for a in 0..k {
        for b in 0..=a {
            let s: f64 = (0..n).map(|i| (ranks[a][i] - centre) * (ranks[b][i] - centre)).sum::<f64>() / (n as f64 - 1.0);
            cov[a * k + b] = s;
            cov[b * k + a] = s;
        }
    }
    let untied = n as f64 * (n as f64 + 1.0) / 12.0;
    let mut scale = vec![0.0; k];
    for a in 0..k {
        if cov[a * k + a] <= 0.0 {
            return Err(PairingError::SingularCovariance);
        }
        scale[a] = (untied / cov[a * k + a]).sqrt();
    }
    for a in 0..k {
        for b in 0..k {
            cov[a * k + b] *= scale[a] * scale[b];
        }
    }
    let l = cholesky(&cov, k).ok_or(PairingError::SingularCovariance)?;

    // Whitened rank vectors: solve L z = r.
    let whiten = |i: usize| -> Vec<f64> {
        let mut z = vec![0.0; k];
        for a in 0..k {
            let s: f64 = (0..a).map(|p| l[a * k + p] * z[p]).sum();
            z[a] = (ranks[a][i] - s) / l[a * k + a];
        }
        z
    };
    let z: Vec<Vec<f64>> = (0..n).map(whiten).collect();
    let (zt, zc) = z.split_at(treated.len());
    let entries: Vec<f64> = zt
        .par_iter()
        .flat_map_iter(|a| zc.iter().map(move |b| a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>()))
        .collect();
    DistanceMatrix::new(treated.to_vec(), controls.to_vec(), entries)
}

/// Distances between the matched treated units (rows) and matched controls
/// (columns), ranking over the matched units only.
pub fn robust_mahalanobis(data: &StudyData, matched: &MatchSolution, columns: &[&str]) -> Result<DistanceMatrix, PairingError> {
    robust_mahalanobis_between(data, &matched.selected_treated, &matched.selected_controls, columns)
}

/// Distances between every treated unit and every control.
pub fn robust_mahalanobis_all(data: &StudyData, columns: &[&str]) -> Result<DistanceMatrix, PairingError> {
    let t: Vec<usize> = (0..data.n_treated()).collect();
    let c: Vec<usize> = (0..data.n_controls()).collect();
    robust_mahalanobis_between(data, &t, &c, columns)
}

/// Minimum-total-distance assignment of `ratio` distinct controls to each
/// treated row. Needs exactly `ratio × rows` columns.
pub fn optimal_pairing(distances: &DistanceMatrix, ratio: usize) -> Result<PairedSample, PairingError> {
    let (n, m) = (distances.n_rows(), distances.n_cols());
    if ratio == 0 || m != ratio * n {
        return Err(PairingError::DimensionMismatch { rows: n, cols: m, ratio, expected: ratio * n });
    }
    // Each treated row is repeated `ratio` times.
    let mut costs = Vec::with_capacity(m * m);
    for r in 0..n {
        let row = &distances.entries[r * m..(r + 1) * m];
        for _ in 0..ratio {
            costs.extend_from_slice(row);
        }
    }
    let a = solve_assignment(&costs, m, m)?;
    let pairs = (0..n)
        .map(|r| {
            let mut cs: Vec<usize> = (0..ratio).map(|k| distances.col_ids[a.row_to_col[r * ratio + k]]).collect();
            cs.sort_unstable();
            (distances.row_ids[r], cs)
        })
        .collect();
    Ok(PairedSample { pairs, total_distance: a.total })
}

/// Re-pairs `matched` optimally using a distance grid that covers (at
/// least) its selected units.
pub fn optimal_pairing_within(matched: &MatchSolution, distances: &DistanceMatrix) -> Result<MatchSolution, PairingError> {
    let sub = distances.restrict(&matched.selected_treated, &matched.selected_controls)?;
    Ok(optimal_pairing(&sub, matched.ratio)?.apply_to(matched))
}

/// Mean, sample SD (denominator `I-1`) and unscaled MAD of the differences.
pub fn heterogeneity<S: Scalar>(y: &PairDifferences<S>) -> Result<HeterogeneityStats<S>, PairingError> {
    if y.len() < 2 {
        return Err(PairingError::TooFewPairs(y.len()));
    }
    Ok(HeterogeneityStats { mean: mean(&y.y), sd: sample_sd(&y.y), mad: mad(&y.y) })
}

/// Equal-width histogram for external plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` edges; the last bin is closed on the right.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

pub fn histogram(values: &[f64], bins: usize) -> Histogram {
    let bins = bins.max(1);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if !lo.is_finite() {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    };
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
    let mut counts = vec![0; bins];
    for &v in values {
        let b = (((v - lo) / width).floor() as usize).min(bins - 1);
        counts[b] += 1;
    }
    Histogram { edges, counts }
}
