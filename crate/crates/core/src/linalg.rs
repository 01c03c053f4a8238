//! Small dense solvers for least-squares fits.

use crate::error::{Error, Result};

/// Solves `(A + lambda I) x = b` for a symmetric positive semi-definite `A`
/// (row-major, `n x n`) with a ridge scaled to the trace. Gaussian elimination
/// with partial pivoting.
pub fn solve_spd_regularized(a: &[f64], b: &[f64], n: usize) -> Result<Vec<f64>> {
    if a.len() != n * n {
        return Err(Error::dim("matrix", n * n, a.len()));
    }
    if b.len() != n {
        return Err(Error::dim("right-hand side", n, b.len()));
    }
    let trace: f64 = (0..n).map(|i| a[i * n + i]).sum();
    let ridge = 1e-14 * (trace / n.max(1) as f64).max(1e-300);
    let mut m = a.to_vec();
    for i in 0..n {
        m[i * n + i] += ridge;
    }
    solve(&mut m, b.to_vec(), n)
}

/// General square solve; consumes scratch copies.
pub fn solve(m: &mut [f64], mut rhs: Vec<f64>, n: usize) -> Result<Vec<f64>> {
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i * n + col].abs().total_cmp(&m[j * n + col].abs()))
            .unwrap();
        if m[pivot * n + col].abs() < 1e-300 {
            return Err(Error::InvalidParam("singular linear system".into()));
        }
        if pivot != col {
            for k in 0..n {
                m.swap(pivot * n + k, col * n + k);
            }
            rhs.swap(pivot, col);
        }
        let diag = m[col * n + col];
        for row in col + 1..n {
            let factor = m[row * n + col] / diag;
            if factor != 0.0 {
                for k in col..n {
                    m[row * n + k] -= factor * m[col * n + k];
                }
                rhs[row] -= factor * rhs[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| m[row * n + k] * x[k]).sum();
        x[row] = (rhs[row] - s) / m[row * n + row];
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "linear solve",
            layer: 0,
        });
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let mut a = vec![2.0, 1.0, 1.0, 3.0];
        let x = solve(&mut a, vec![3.0, 5.0], 2).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-12);
        assert!((x[1] - 1.4).abs() < 1e-12);
    }
}
