//! One-sided cyclic Jacobi SVD for small dense square matrices.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const MAX_SWEEPS: usize = 60;

/// `M = U * diag(sigma) * V^T` with singular values in descending order.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl Svd {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.u * DMatrix::from_diagonal(&self.sigma) * self.v.transpose()
    }
}

/// SVD of a square matrix by Hestenes one-sided Jacobi rotations.
///
/// Columns of a working copy of `M` are orthogonalized pairwise by plane
/// rotations accumulated into `V`; the column norms are the singular values
/// and the normalized columns form `U`. Columns whose singular value is
/// negligible are rebuilt by Gram-Schmidt so `U` stays orthogonal for
/// rank-deficient input. Signs are fixed so the largest-magnitude entry of
/// every column of `U` is positive (lowest row on ties).
pub fn svd_dxd(m: &DMatrix<f64>) -> Result<Svd> {
    if !m.is_square() {
        return Err(Error::invalid("svd_dxd expects a square matrix"));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("svd input has non-finite entries".into()));
    }
    let d = m.nrows();
    let mut a = m.clone();
    let mut v = DMatrix::<f64>::identity(d, d);
    let tol = (d.max(1) as f64) * f64::EPSILON;
    // Columns below this squared norm are treated as zero.
    let negligible = 1e-30 * m.norm_squared();

    let mut converged = d < 2;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..d {
            for q in p + 1..d {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for r in 0..d {
                    let (x, y) = (a[(r, p)], a[(r, q)]);
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma == 0.0
                    || gamma.abs() <= tol * (alpha * beta).sqrt()
                    || alpha.min(beta) <= negligible
                {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for r in 0..d {
                    let (x, y) = (a[(r, p)], a[(r, q)]);
                    a[(r, p)] = c * x - s * y;
                    a[(r, q)] = s * x + c * y;
                    let (x, y) = (v[(r, p)], v[(r, q)]);
                    v[(r, p)] = c * x - s * y;
                    v[(r, q)] = s * x + c * y;
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical(format!(
            "Jacobi SVD did not converge in {MAX_SWEEPS} sweeps"
        )));
    }

    let norms: Vec<f64> = (0..d).map(|c| a.column(c).norm()).collect();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
    let scale = norms.iter().copied().fold(0.0, f64::max);

    let mut u = DMatrix::<f64>::zeros(d, d);
    let mut vs = DMatrix::<f64>::zeros(d, d);
    let mut sigma = DVector::<f64>::zeros(d);
    for (k, &c) in order.iter().enumerate() {
        sigma[k] = norms[c];
        vs.set_column(k, &v.column(c));
        if norms[c] > 1e-14 * scale && norms[c] > 0.0 {
            u.set_column(k, &(a.column(c) / norms[c]));
        } else {
            let seed = if norms[c] > 0.0 {
                a.column(c) / norms[c]
            } else {
                DVector::zeros(d)
            };
            let col = complete_basis(&u, k, seed);
            u.set_column(k, &col);
        }
    }

    for k in 0..d {
        let col = u.column(k);
        let mut best = 0;
        for r in 1..d {
            if col[r].abs() > col[best].abs() {
                best = r;
            }
        }
        if col[best] < 0.0 {
            u.column_mut(k).neg_mut();
            vs.column_mut(k).neg_mut();
        }
    }
    Ok(Svd { u, sigma, v: vs })
}

/// Unit vector orthogonal to the first `k` columns of `u`, starting from
/// `seed` and falling back to the coordinate axis with the largest residual.
fn complete_basis(u: &DMatrix<f64>, k: usize, seed: DVector<f64>) -> DVector<f64> {
    let d = u.nrows();
    let project = |mut x: DVector<f64>| {
        for _ in 0..2 {
            for j in 0..k {
                let uj = u.column(j);
                let proj = uj.dot(&x);
                x -= uj * proj;
            }
        }
        x
    };
    let x = project(seed);
    let norm = x.norm();
    if norm > 0.5 {
        return x / norm;
    }
    // Residual of axis e is 1 - |row e of U_k|^2; these sum to d - k > 0.
    let best = (0..d)
        .map(|e| (e, 1.0 - (0..k).map(|j| u[(e, j)] * u[(e, j)]).sum::<f64>()))
        .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc })
        .0;
    let x = project(project(DVector::from_fn(d, |r, _| if r == best { 1.0 } else { 0.0 })));
    let norm = x.norm();
    x / norm
}

/// Nearest orthogonal matrix `U V^T` (polar factor).
pub fn nearest_orthogonal(r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = svd_dxd(r)?;
    Ok(&svd.u * svd.v.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::orthogonality_error;

    fn check(m: &DMatrix<f64>) -> Svd {
        let s = svd_dxd(m).unwrap();
        let scale = m.norm().max(f64::MIN_POSITIVE);
        assert!((s.reconstruct() - m).norm() <= 1e-9 * scale.max(1e-300));
        assert!(orthogonality_error(&s.u) <= 1e-10);
        assert!(orthogonality_error(&s.v) <= 1e-10);
        for w in s.sigma.as_slice().windows(2) {
            assert!(w[0] >= w[1]);
        }
        assert!(s.sigma.iter().all(|x| *x >= 0.0));
        s
    }

    #[test]
    fn identity_and_diagonal() {
        let s = check(&DMatrix::identity(4, 4));
        assert_eq!(s.u, DMatrix::identity(4, 4));
        assert_eq!(s.v, DMatrix::identity(4, 4));
        assert_eq!(s.sigma, DVector::from_element(4, 1.0));
        let s = check(&DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 2.0, 1.0])));
        assert_eq!(s.sigma.as_slice(), &[3.0, 2.0, 1.0]);
    }

    #[test]
    fn random_square_matrices() {
        let mut state = 12345u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        for d in [1, 2, 5, 9, 20] {
            let m = DMatrix::from_fn(d, d, |_, _| next());
            check(&m);
        }
    }

    #[test]
    fn rank_deficient_and_zero() {
        let x = DVector::from_vec(vec![1.0, 2.0, -1.0]);
        let y = DVector::from_vec(vec![0.5, 0.0, 3.0]);
        check(&(&x * y.transpose()));
        let s = check(&DMatrix::zeros(3, 3));
        assert_eq!(s.u, DMatrix::identity(3, 3));
    }

    #[test]
    fn low_rank_in_high_dimension() {
        let d = 60;
        let mut state = 99u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let x = DMatrix::from_fn(d, 3, |_, _| next());
        let y = DMatrix::from_fn(3, d, |_, _| next());
        let s = check(&(x * y));
        assert!(s.sigma[3] <= 1e-12 * s.sigma[0]);
    }

    #[test]
    fn sign_convention() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -2.0, -1.0, 0.0]);
        let s = check(&m);
        for k in 0..2 {
            let col = s.u.column(k);
            let big = col.iter().copied().fold(0.0f64, |b, x| if x.abs() > b.abs() { x } else { b });
            assert!(big > 0.0);
        }
    }

    #[test]
    fn rejects_non_finite() {
        let m = DMatrix::from_row_slice(1, 1, &[f64::NAN]);
        assert!(svd_dxd(&m).is_err());
    }
}
