//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

/// Ridge penalty used when the design matrix is rank deficient.
pub const RIDGE_FALLBACK: f64 = 1e-8;

/// Relative pivot size below which a QR factorization is treated as rank
/// deficient.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub coefficients: DVector<f64>,
    /// The design was rank deficient and the ridge fallback was used.
    pub collinear: bool,
}

/// Least squares via Householder QR, falling back to a ridge solve of the
/// normal equations when R has a negligible pivot.
pub fn least_squares(design: &DMatrix<f64>, y: &DVector<f64>) -> LeastSquares {
    let p = design.ncols();
    if design.nrows() >= p && p > 0 {
        let qr = design.clone().qr();
        let r = qr.r();
        let max_pivot = (0..p).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
        let full_rank = max_pivot > 0.0 && (0..p).all(|i| r[(i, i)].abs() > RANK_TOL * max_pivot);
        if full_rank {
            let qty = qr.q().transpose() * y;
            if let Some(beta) = r.solve_upper_triangular(&qty) {
                if beta.iter().all(|b| b.is_finite()) {
                    return LeastSquares {
                        coefficients: beta,
                        collinear: false,
                    };
                }
            }
        }
    }
    LeastSquares {
        coefficients: ridge(design, y, RIDGE_FALLBACK),
        collinear: true,
    }
}

/// Solves `(XᵀX + λI) β = Xᵀy`.
pub fn ridge(design: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> DVector<f64> {
    let p = design.ncols();
    let mut gram = design.transpose() * design;
    for i in 0..p {
        gram[(i, i)] += lambda;
    }
    let rhs = design.transpose() * y;
    match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => gram
            .svd(true, true)
            .solve(&rhs, 1e-14)
            .unwrap_or_else(|_| DVector::zeros(p)),
    }
}

/// Lower-triangular `L` with `L Lᵀ = m` for a symmetric positive
/// semidefinite `m`. Pivots within `tol` of zero produce a zero column;
/// returns `Err(pivot)` when a pivot is more negative than `-tol`.
pub fn psd_cholesky(m: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>, f64> {
    let n = m.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut diag = m[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if diag < -tol {
            return Err(diag);
        }
        if diag <= tol {
            continue;
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Sample covariance (divisor N - 1) of the given columns.
pub fn covariance(columns: &[&[f64]]) -> DMatrix<f64> {
    let d = columns.len();
    let n = columns.first().map_or(0, |c| c.len());
    let means: Vec<f64> = columns
        .iter()
        .map(|c| c.iter().sum::<f64>() / n as f64)
        .collect();
    let mut cov = DMatrix::zeros(d, d);
    for a in 0..d {
        for b in a..d {
            let s: f64 = columns[a]
                .iter()
                .zip(columns[b].iter())
                .map(|(x, y)| (x - means[a]) * (y - means[b]))
                .sum();
            let v = s / (n as f64 - 1.0);
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    cov
}

/// Frobenius norm of `a - b`.
pub fn frobenius_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qr_matches_pseudo_inverse() {
        let x = DMatrix::from_row_slice(5, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0, 1.0, 4.0]);
        let y = DVector::from_vec(vec![1.1, 2.9, 5.2, 7.1, 8.8]);
        let fit = least_squares(&x, &y);
        assert!(!fit.collinear);
        let pinv = x.clone().pseudo_inverse(1e-14).unwrap();
        let want = pinv * &y;
        assert!((fit.coefficients - want).norm() < 1e-10);
    }

    #[test]
    fn collinear_design_uses_ridge() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0, 4.0, 8.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let fit = least_squares(&x, &y);
        assert!(fit.collinear);
        let resid = &y - &x * &fit.coefficients;
        assert!(resid.norm() < 1e-6);
    }

    #[test]
    fn psd_cholesky_handles_zero_and_rejects_negative() {
        let z = DMatrix::<f64>::zeros(3, 3);
        assert_eq!(psd_cholesky(&z, 1e-10).unwrap(), z);
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 3.0]);
        let l = psd_cholesky(&m, 1e-10).unwrap();
        assert!((&l * l.transpose() - &m).norm() < 1e-14);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(psd_cholesky(&bad, 1e-10).is_err());
    }
}
