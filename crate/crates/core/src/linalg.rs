//! Dense Gaussian elimination for the small systems in the subset chains.

/// Solves `a x = b`; `None` when `a` is numerically singular.
pub(crate) fn solve(a: Vec<Vec<f64>>, b: Vec<f64>) -> Option<Vec<f64>> {
    let rhs = b.into_iter().map(|x| vec![x]).collect();
    solve_multi(a, rhs).map(|x| x.into_iter().map(|row| row[0]).collect())
}

/// Solves `a X = B` for a matrix right-hand side (rows of `b` match rows of `a`).
pub(crate) fn solve_multi(mut a: Vec<Vec<f64>>, mut b: Vec<Vec<f64>>) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            for k in 0..b[row].len() {
                b[row][k] -= factor * b[col][k];
            }
        }
    }
    for col in (0..n).rev() {
        for k in 0..b[col].len() {
            let s: f64 = (col + 1..n).map(|j| a[col][j] * b[j][k]).sum();
            b[col][k] = (b[col][k] - s) / a[col][col];
        }
    }
    Some(b)
}
