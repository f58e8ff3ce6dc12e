//! Exact minimum-cost assignment (shortest augmenting paths with dual
//! potentials), `O(rows² · cols)`.

use thiserror::Error;

use crate::scalar::Cost;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssignmentError {
    #[error("cost grid has {len} entries, expected {rows}x{cols}")]
    DimensionMismatch { rows: usize, cols: usize, len: usize },
    #[error("{rows} rows cannot be assigned to {cols} columns")]
    TooFewColumns { rows: usize, cols: usize },
    #[error("cost at ({row}, {col}) is not finite")]
    NonFiniteCost { row: usize, col: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment<C> {
    /// Column assigned to each row.
    pub row_to_col: Vec<usize>,
    pub total: C,
}

/// Assigns every row a distinct column minimising the summed cost.
/// `costs` is row-major with `rows <= cols`.
pub fn solve_assignment<C: Cost>(costs: &[C], rows: usize, cols: usize) -> Result<Assignment<C>, AssignmentError> {
    if costs.len() != rows * cols {
        return Err(AssignmentError::DimensionMismatch { rows, cols, len: costs.len() });
    }
    if rows > cols {
        return Err(AssignmentError::TooFewColumns { rows, cols });
    }
    if let Some(k) = costs.iter().position(|c| !c.is_finite_cost()) {
        return Err(AssignmentError::NonFiniteCost { row: k / cols, col: k % cols });
    }
    let inf = C::infinity();
    let zero = C::zero();
    // 1-based potentials; column 0 is the virtual source.
    let mut u = vec![zero; rows + 1];
    let mut v = vec![zero; cols + 1];
    let mut owner = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    let mut minv = vec![inf; cols + 1];
    let mut used = vec![false; cols + 1];

    for i in 1..=rows {
        owner[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|m| *m = inf);
        used.iter_mut().for_each(|b| *b = false);
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let row = &costs[(i0 - 1) * cols..i0 * cols];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=cols {
                if used[j] {
                    continue;
                }
                let cur = row[j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=cols {
                if used[j] {
                    u[owner[j]] = u[owner[j]] + delta;
                    v[j] = v[j] - delta;
                } else {
                    minv[j] = minv[j] - delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![usize::MAX; rows];
    for j in 1..=cols {
        if owner[j] != 0 {
            row_to_col[owner[j] - 1] = j - 1;
        }
    }
    let total = row_to_col
        .iter()
        .enumerate()
        .fold(zero, |acc, (r, &c)| acc + costs[r * cols + c]);
    Ok(Assignment { row_to_col, total })
}
