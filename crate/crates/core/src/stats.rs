//! Small descriptive-statistics helpers used across modules.

use std::cmp::Ordering;

use statrs::distribution::{ContinuousCDF, Normal};

use crate::scalar::Scalar;

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// Standard Normal distribution function.
pub fn norm_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

/// Upper tail `1 - Φ(x)`, accurate far into the tail.
pub fn norm_sf(x: f64) -> f64 {
    std_normal().sf(x)
}

/// Standard Normal quantile `Φ⁻¹(p)`.
pub fn norm_quantile(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

pub(crate) fn total_cmp<S: Scalar>(a: &S, b: &S) -> Ordering {
    a.partial_cmp(b).unwrap_or(Ordering::Equal)
}

/// Midranks (1-based) of `values`; tied values share the average of the
/// positions they occupy.
pub fn midranks<S: Scalar>(values: &[S]) -> Vec<S> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| total_cmp(&values[i], &values[j]).then(i.cmp(&j)));
    let mut ranks = vec![S::zero(); n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end
        let avg = S::of((start + 1 + end) as f64 / 2.0);
        for &k in &order[start..end] {
            ranks[k] = avg;
        }
        start = end;
    }
    ranks
}

pub fn mean<S: Scalar>(values: &[S]) -> S {
    if values.is_empty() {
        return S::nan();
    }
    values.iter().copied().sum::<S>() / S::of_usize(values.len())
}

/// Sample standard deviation with denominator `n - 1`.
pub fn sample_sd<S: Scalar>(values: &[S]) -> S {
    let n = values.len();
    if n < 2 {
        return S::nan();
    }
    let m = mean(values);
    let ss: S = values.iter().map(|&v| (v - m) * (v - m)).sum();
    (ss / S::of_usize(n - 1)).sqrt()
}

pub fn median<S: Scalar>(values: &[S]) -> S {
    if values.is_empty() {
        return S::nan();
    }
    let mut v = values.to_vec();
    v.sort_by(total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / S::of(2.0)
    }
}

/// Median absolute deviation from the median, without a consistency factor.
pub fn mad<S: Scalar>(values: &[S]) -> S {
    let med = median(values);
    let dev: Vec<S> = values.iter().map(|&v| (v - med).abs()).collect();
    median(&dev)
}
