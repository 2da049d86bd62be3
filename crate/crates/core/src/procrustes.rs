//! Weighted orthogonal Procrustes update for a fixed flow.
//!
//! With the flow held fixed, the best rigid transform of `B` onto `A` is the
//! centered Procrustes solution: rotate about the flow-weighted centroids with
//! `R = U V^T` from the SVD of the centered cross-covariance
//! `sum_ij f_ij (a_i - mu_A)(b_j - mu_B)^T`, then translate by
//! `mu_A - R mu_B`. The cross-covariance is accumulated directly from the
//! sparse flow instead of materializing the expanded `d x (n1 n2)` matrices.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{sq_dist, RigidTransform, WeightedPointSet};
use crate::svd::svd_dxd;
use crate::transport::FlowPlan;

/// Smallest-to-largest singular value ratio below which the update is
/// reported as rank deficient (the optimal rotation is then not unique).
pub const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct CrossCovariance {
    pub matrix: DMatrix<f64>,
    pub flow_mass: f64,
}

fn check_plan(a: &WeightedPointSet, b: &WeightedPointSet, plan: &FlowPlan) -> Result<()> {
    Error::check_dim(a.dim(), b.dim())?;
    if plan.n1() != a.len() || plan.n2() != b.len() {
        return Err(Error::InfeasibleFlow(format!(
            "plan is {}x{} but the sets have {} and {} points",
            plan.n1(),
            plan.n2(),
            a.len(),
            b.len()
        )));
    }
    if !(plan.total_flow() > 0.0) {
        return Err(Error::InfeasibleFlow("flow plan carries no mass".into()));
    }
    Ok(())
}

/// Flow-weighted centroids `(sum f_ij a_i / F, sum f_ij b_j / F)`.
pub fn flow_centroids(
    a: &WeightedPointSet,
    b: &WeightedPointSet,
    plan: &FlowPlan,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_plan(a, b, plan)?;
    let d = a.dim();
    let mut mu_a = vec![0.0; d];
    let mut mu_b = vec![0.0; d];
    for e in plan.entries() {
        for (k, (pa, pb)) in a.point(e.i).iter().zip(b.point(e.j)).enumerate() {
            mu_a[k] += e.flow * pa;
            mu_b[k] += e.flow * pb;
        }
    }
    let mass = plan.total_flow();
    mu_a.iter_mut().for_each(|x| *x /= mass);
    mu_b.iter_mut().for_each(|x| *x /= mass);
    Ok((mu_a, mu_b))
}

/// Centered cross-covariance `sum f_ij (a_i - mu_A)(b_j - mu_B)^T`.
///
/// Flow is first aggregated per point of the smaller side, so the cost is
/// `O(nnz * d + min(n1, n2) * d^2)`.
pub fn cross_covariance(
    a: &WeightedPointSet,
    b: &WeightedPointSet,
    plan: &FlowPlan,
    mu_a: &[f64],
    mu_b: &[f64],
) -> Result<CrossCovariance> {
    check_plan(a, b, plan)?;
    let d = a.dim();
    Error::check_dim(d, mu_a.len())?;
    Error::check_dim(d, mu_b.len())?;
    let mut m = DMatrix::<f64>::zeros(d, d);
    let by_a = a.len() <= b.len();
    let groups = if by_a { a.len() } else { b.len() };
    // agg[g] = sum over the group's entries of f * (other side's centered point)
    let mut agg = vec![0.0; groups * d];
    let mut touched = vec![false; groups];
    for e in plan.entries() {
        let (g, other, mu_other) = if by_a {
            (e.i, b.point(e.j), mu_b)
        } else {
            (e.j, a.point(e.i), mu_a)
        };
        touched[g] = true;
        let row = &mut agg[g * d..(g + 1) * d];
        for k in 0..d {
            row[k] += e.flow * (other[k] - mu_other[k]);
        }
    }
    for g in (0..groups).filter(|&g| touched[g]) {
        let (own, mu_own) = if by_a { (a.point(g), mu_a) } else { (b.point(g), mu_b) };
        let row = &agg[g * d..(g + 1) * d];
        for r in 0..d {
            for c in 0..d {
                if by_a {
                    m[(r, c)] += (own[r] - mu_own[r]) * row[c];
                } else {
                    m[(r, c)] += row[r] * (own[c] - mu_own[c]);
                }
            }
        }
    }
    Ok(CrossCovariance {
        matrix: m,
        flow_mass: plan.total_flow(),
    })
}

/// Result of one Procrustes update together with the spectrum that produced it.
#[derive(Debug, Clone)]
pub struct ProcrustesUpdate {
    pub transform: RigidTransform,
    pub singular_values: DVector<f64>,
    /// True when the cross-covariance is (numerically) rank deficient.
    pub rank_deficient: bool,
}

pub fn procrustes_update(
    a: &WeightedPointSet,
    b: &WeightedPointSet,
    plan: &FlowPlan,
    proper_rotations_only: bool,
) -> Result<ProcrustesUpdate> {
    let (mu_a, mu_b) = flow_centroids(a, b, plan)?;
    let cov = cross_covariance(a, b, plan, &mu_a, &mu_b)?;
    let svd = svd_dxd(&cov.matrix)?;
    let mut u = svd.u;
    let mut r = &u * svd.v.transpose();
    if proper_rotations_only && r.determinant() < 0.0 {
        let last = u.ncols() - 1;
        u.column_mut(last).neg_mut();
        r = &u * svd.v.transpose();
    }
    let mu_b = DVector::from_column_slice(&mu_b);
    let v = DVector::from_column_slice(&mu_a) - &r * mu_b;
    let top = svd.sigma.iter().copied().fold(0.0, f64::max);
    let bottom = svd.sigma.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(ProcrustesUpdate {
        transform: RigidTransform::from_parts_unchecked(r, v),
        rank_deficient: bottom <= RANK_TOL * top,
        singular_values: svd.sigma,
    })
}

/// Rigid transform minimizing `sum f_ij |a_i - (R b_j + v)|^2` over orthogonal `R`
/// (restricted to `det R = +1` when `proper_rotations_only`) and translations `v`.
pub fn optimal_transform(
    a: &WeightedPointSet,
    b: &WeightedPointSet,
    plan: &FlowPlan,
    proper_rotations_only: bool,
) -> Result<RigidTransform> {
    procrustes_update(a, b, plan, proper_rotations_only).map(|u| u.transform)
}

/// Unnormalized objective `sum f_ij |a_i - T(b_j)|^2` for a fixed plan.
pub fn flow_objective(
    a: &WeightedPointSet,
    b: &WeightedPointSet,
    plan: &FlowPlan,
    t: &RigidTransform,
) -> Result<f64> {
    check_plan(a, b, plan)?;
    let mut total = 0.0;
    for e in plan.entries() {
        let tb = t.apply_point(b.point(e.j))?;
        total += e.flow * sq_dist(a.point(e.i), &tb);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::orthogonality_error;
    use crate::transport::FlowEntry;

    fn diag_plan(n: usize, w: f64) -> FlowPlan {
        FlowPlan::new(n, n, (0..n).map(|i| FlowEntry { i, j: i, flow: w }).collect()).unwrap()
    }

    fn tri() -> WeightedPointSet {
        WeightedPointSet::uniform(vec![0.0, 0.0, 2.0, 0.0, 0.0, 1.0, 1.0, 3.0], 2).unwrap()
    }

    #[test]
    fn singleton_centroids_and_zero_covariance() {
        let a = WeightedPointSet::uniform(vec![1.0, 2.0], 2).unwrap();
        let b = WeightedPointSet::uniform(vec![-3.0, 5.0], 2).unwrap();
        let plan = diag_plan(1, 1.0);
        let (ma, mb) = flow_centroids(&a, &b, &plan).unwrap();
        assert_eq!(ma, vec![1.0, 2.0]);
        assert_eq!(mb, vec![-3.0, 5.0]);
        let cov = cross_covariance(&a, &b, &plan, &ma, &mb).unwrap();
        assert_eq!(cov.matrix, DMatrix::zeros(2, 2));
    }

    #[test]
    fn symmetric_flow_centroid() {
        let a = WeightedPointSet::uniform(vec![-1.0, 0.0, 1.0, 0.0], 2).unwrap();
        let b = WeightedPointSet::uniform(vec![0.0, -2.0, 0.0, 2.0], 2).unwrap();
        let (ma, mb) = flow_centroids(&a, &b, &diag_plan(2, 1.0)).unwrap();
        assert_eq!(ma, vec![0.0, 0.0]);
        assert_eq!(mb, vec![0.0, 0.0]);
    }

    #[test]
    fn self_covariance_is_psd() {
        let a = tri();
        let plan = diag_plan(4, 0.25);
        let (ma, mb) = flow_centroids(&a, &a, &plan).unwrap();
        let cov = cross_covariance(&a, &a, &plan, &ma, &mb).unwrap().matrix;
        assert!((&cov - cov.transpose()).amax() <= 1e-12);
        let eig = cov.symmetric_eigen();
        assert!(eig.eigenvalues.iter().all(|x| *x >= -1e-9));
    }

    #[test]
    fn identity_for_identical_sets() {
        let a = tri();
        let t = optimal_transform(&a, &a, &diag_plan(4, 1.0), false).unwrap();
        assert!((t.rotation() - DMatrix::identity(2, 2)).amax() <= 1e-9);
        assert!(t.translation().amax() <= 1e-9);
    }

    #[test]
    fn recovers_a_known_rotation_and_translation() {
        let a = tri();
        let theta = 30f64.to_radians();
        let (s, c) = theta.sin_cos();
        let rot = RigidTransform::new(
            DMatrix::from_row_slice(2, 2, &[c, -s, s, c]),
            DVector::from_vec(vec![0.7, -1.3]),
        )
        .unwrap();
        let b = rot.apply(&a).unwrap();
        let plan = diag_plan(4, 1.0);
        let t = optimal_transform(&a, &b, &plan, false).unwrap();
        assert!(flow_objective(&a, &b, &plan, &t).unwrap() <= 1e-12);
        let expected = rot.inverse();
        assert!((t.rotation() - expected.rotation()).amax() <= 1e-9);
        assert!((t.translation() - expected.translation()).amax() <= 1e-9);
    }

    #[test]
    fn proper_rotation_switch() {
        let a = tri();
        let mirror = RigidTransform::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
            DVector::zeros(2),
        )
        .unwrap();
        let b = mirror.apply(&a).unwrap();
        let plan = diag_plan(4, 1.0);
        let free = optimal_transform(&a, &b, &plan, false).unwrap();
        assert!((free.determinant() + 1.0).abs() <= 1e-9);
        let proper = optimal_transform(&a, &b, &plan, true).unwrap();
        assert!((proper.determinant() - 1.0).abs() <= 1e-9);
        assert!(orthogonality_error(proper.rotation()) <= 1e-9);
        assert!(
            flow_objective(&a, &b, &plan, &proper).unwrap()
                >= flow_objective(&a, &b, &plan, &free).unwrap()
        );
    }

    #[test]
    fn zero_flow_is_an_error() {
        let a = tri();
        let plan = FlowPlan::new(4, 4, vec![]).unwrap();
        assert!(optimal_transform(&a, &a, &plan, false).is_err());
        assert!(flow_centroids(&a, &a, &plan).is_err());
    }
}
