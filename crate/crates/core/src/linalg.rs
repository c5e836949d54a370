//! Thin helpers over `faer` for the dense kernels: index gathers, LU with a
//! reciprocal condition estimate, and a few norms.

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::{Col, Mat, MatRef};

/// Copies `m[rows, cols]` into a new matrix.
pub fn gather(m: MatRef<'_, f64>, rows: &[usize], cols: &[usize]) -> Mat<f64> {
    Mat::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// Copies the listed rows of `m`.
pub fn gather_rows(m: MatRef<'_, f64>, rows: &[usize]) -> Mat<f64> {
    Mat::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

/// Operator 1-norm (maximum absolute column sum).
pub fn norm_one(m: MatRef<'_, f64>) -> f64 {
    (0..m.ncols())
        .map(|j| (0..m.nrows()).map(|i| m[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Largest absolute entry.
pub fn max_abs(m: MatRef<'_, f64>) -> f64 {
    let mut out = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            out = out.max(m[(i, j)].abs());
        }
    }
    out
}

/// An LU factorization with partial pivoting together with an estimate of
/// the reciprocal 1-norm condition number of the factored matrix.
pub struct Factored {
    lu: PartialPivLu<f64>,
    pub rcond: f64,
}

impl Factored {
    pub fn new(a: MatRef<'_, f64>) -> Self {
        let n = a.nrows();
        let lu = a.partial_piv_lu();
        let anorm = norm_one(a);
        let rcond = if n == 0 {
            1.0
        } else if anorm == 0.0 || !anorm.is_finite() {
            0.0
        } else {
            let inv_norm = inverse_norm_one_estimate(&lu, n);
            if inv_norm.is_finite() && inv_norm > 0.0 {
                1.0 / (anorm * inv_norm)
            } else {
                0.0
            }
        };
        Self { lu, rcond }
    }

    pub fn solve(&self, rhs: MatRef<'_, f64>) -> Mat<f64> {
        self.lu.solve(rhs)
    }

    pub fn solve_col(&self, rhs: &Col<f64>) -> Col<f64> {
        self.lu.solve(rhs)
    }
}

/// Hager's estimator of ‖A⁻¹‖₁ (with Higham's alternating-sign safeguard),
/// using only solves with the existing factorization.
fn inverse_norm_one_estimate(lu: &PartialPivLu<f64>, n: usize) -> f64 {
    let nf = n as f64;
    let mut x = Col::<f64>::from_fn(n, |_| 1.0 / nf);
    let mut est = 0.0f64;
    let mut last_j = usize::MAX;
    for _ in 0..5 {
        let y = lu.solve(&x);
        est = est.max(col_norm_one(&y));
        let xi = Col::<f64>::from_fn(n, |i| if y[i] >= 0.0 { 1.0 } else { -1.0 });
        let z = lu.solve_transpose(&xi);
        let (j, zmax) = (0..n)
            .map(|i| (i, z[i].abs()))
            .fold((0, -1.0), |acc, v| if v.1 > acc.1 { v } else { acc });
        let ztx: f64 = (0..n).map(|i| z[i] * x[i]).sum();
        if zmax <= ztx || j == last_j {
            break;
        }
        last_j = j;
        x = Col::<f64>::zeros(n);
        x[j] = 1.0;
    }
    let alt = Col::<f64>::from_fn(n, |i| {
        let s = if i % 2 == 0 { 1.0 } else { -1.0 };
        s * (1.0 + i as f64 / (nf - 1.0).max(1.0))
    });
    let y = lu.solve(&alt);
    est.max(2.0 * col_norm_one(&y) / (3.0 * nf))
}

fn col_norm_one(c: &Col<f64>) -> f64 {
    (0..c.nrows()).map(|i| c[i].abs()).sum()
}
