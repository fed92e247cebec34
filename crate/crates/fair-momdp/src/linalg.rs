//! Dense linear solves via Gaussian elimination with partial pivoting.
//!
//! State spaces here are desk-scale, so a direct dense solve keeps policy
//! evaluation exact enough to serve as an oracle for everything downstream.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is singular (no usable pivot in column {0})")]
    Singular(usize),
    #[error("dimension mismatch: matrix is {rows}x{cols}, rhs has {rhs} rows")]
    DimensionMismatch { rows: usize, cols: usize, rhs: usize },
}

/// Solve `A x = b` for each right-hand side column in `rhs`.
///
/// `a` is row-major `n x n`; `rhs` is a list of length-`n` columns. The matrix
/// is factored once and reused across right-hand sides.
pub fn solve_multi(a: &[Vec<f64>], rhs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, LinalgError> {
    let n = a.len();
    for row in a {
        if row.len() != n {
            return Err(LinalgError::DimensionMismatch {
                rows: n,
                cols: row.len(),
                rhs: n,
            });
        }
    }
    for b in rhs {
        if b.len() != n {
            return Err(LinalgError::DimensionMismatch {
                rows: n,
                cols: n,
                rhs: b.len(),
            });
        }
    }

    // In-place LU with a pivot permutation vector.
    let mut lu: Vec<Vec<f64>> = a.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| lu[i][col].abs().total_cmp(&lu[j][col].abs()))
            .unwrap();
        if lu[pivot][col].abs() < 1e-300 {
            return Err(LinalgError::Singular(col));
        }
        lu.swap(col, pivot);
        perm.swap(col, pivot);
        let inv_pivot = 1.0 / lu[col][col];
        for row in col + 1..n {
            let factor = lu[row][col] * inv_pivot;
            lu[row][col] = factor;
            for k in col + 1..n {
                let sub = factor * lu[col][k];
                lu[row][k] -= sub;
            }
        }
    }

    let mut solutions = Vec::with_capacity(rhs.len());
    for b in rhs {
        // Forward substitution on the permuted rhs.
        let mut y: Vec<f64> = perm.iter().map(|&p| b[p]).collect();
        for row in 1..n {
            for col in 0..row {
                y[row] -= lu[row][col] * y[col];
            }
        }
        // Back substitution.
        let mut x = y;
        for row in (0..n).rev() {
            for col in row + 1..n {
                let sub = lu[row][col] * x[col];
                x[row] -= sub;
            }
            x[row] /= lu[row][row];
        }
        solutions.push(x);
    }
    Ok(solutions)
}

/// Solve `A x = b` for a single right-hand side.
pub fn solve(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    Ok(solve_multi(a, &[b.to_vec()])?.pop().unwrap())
}
