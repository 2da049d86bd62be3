//! Weighted point sets in R^d and rigid transformations acting on them.
//!
//! Points are stored row-major, one point per row, so `point(i)` is a
//! contiguous slice. A rigid transform acts as `x -> R x + v` with `R`
//! orthogonal; reflections (`det R = -1`) are valid transforms.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Orthogonality tolerance on `max |R^T R - I|`.
pub const ORTHOGONALITY_TOL: f64 = 1e-9;

/// Compensated (Neumaier) summation.
pub(crate) fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in values {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[inline]
pub(crate) fn sq_dist(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Squared Euclidean distance between two points of equal dimension.
pub fn squared_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    Error::check_dim(p.len(), q.len())?;
    Ok(sq_dist(p, q))
}

/// A finite set of points in R^d, each carrying a strictly positive weight.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedPointSet {
    coords: Vec<f64>,
    weights: Vec<f64>,
    dim: usize,
}

impl WeightedPointSet {
    /// Builds a set from row-major coordinates (`weights.len()` rows of `dim` entries).
    pub fn new(coords: Vec<f64>, weights: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("point dimension must be at least 1"));
        }
        if weights.is_empty() {
            return Err(Error::invalid("point set must contain at least one point"));
        }
        if coords.len() != weights.len() * dim {
            return Err(Error::invalid(format!(
                "expected {} coordinates for {} points in dimension {}, got {}",
                weights.len() * dim,
                weights.len(),
                dim,
                coords.len()
            )));
        }
        if let Some(pos) = coords.iter().position(|x| !x.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite coordinate at point {}, axis {}",
                pos / dim,
                pos % dim
            )));
        }
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::invalid(format!(
                "weight of point {} must be finite and strictly positive, got {}",
                i, weights[i]
            )));
        }
        Ok(Self {
            coords,
            weights,
            dim,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], weights: Vec<f64>) -> Result<Self> {
        let dim = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.len() != weights.len() {
            return Err(Error::invalid(format!(
                "{} rows but {} weights",
                rows.len(),
                weights.len()
            )));
        }
        let mut coords = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            Error::check_dim(dim, row.len())?;
            coords.extend_from_slice(row);
        }
        Self::new(coords, weights, dim)
    }

    /// Unit-weight set.
    pub fn uniform(coords: Vec<f64>, dim: usize) -> Result<Self> {
        let n = if dim == 0 { 0 } else { coords.len() / dim };
        Self::new(coords, vec![1.0; n], dim)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_weight(&self) -> f64 {
        compensated_sum(self.weights.iter().copied())
    }

    /// Weight-weighted centroid `sum w_i x_i / sum w_i`.
    pub fn weighted_mean(&self) -> Vec<f64> {
        let total = self.total_weight();
        (0..self.dim)
            .map(|k| {
                compensated_sum(
                    self.points()
                        .zip(&self.weights)
                        .map(|(p, w)| w * p[k]),
                ) / total
            })
            .collect()
    }

    /// Exact diameter: maximum pairwise Euclidean distance over all pairs.
    pub fn diameter(&self) -> f64 {
        let n = self.len();
        let max_sq = (0..n)
            .into_par_iter()
            .map(|i| {
                let p = self.point(i);
                (i + 1..n)
                    .map(|j| sq_dist(p, self.point(j)))
                    .fold(0.0f64, f64::max)
            })
            .reduce(|| 0.0, f64::max);
        max_sq.sqrt()
    }

    /// Same weights, new coordinates (used by transforms and noise).
    pub(crate) fn with_coords(&self, coords: Vec<f64>) -> Result<Self> {
        Self::new(coords, self.weights.clone(), self.dim)
    }

    /// Subset of points by index, in the given order, with the given weights.
    pub(crate) fn gather(&self, indices: &[usize], weights: Vec<f64>) -> Result<Self> {
        let mut coords = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            coords.extend_from_slice(self.point(i));
        }
        Self::new(coords, weights, self.dim)
    }
}

/// Rigid transformation `x -> R x + v` with orthogonal `R`.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidTransform {
    rotation: DMatrix<f64>,
    translation: DVector<f64>,
}

/// Largest entry of `|R^T R - I|`.
pub fn orthogonality_error(r: &DMatrix<f64>) -> f64 {
    let gram = r.transpose() * r;
    let n = gram.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    worst
}

impl RigidTransform {
    /// Validates orthogonality of `rotation` and matching dimensions.
    pub fn new(rotation: DMatrix<f64>, translation: DVector<f64>) -> Result<Self> {
        if !rotation.is_square() {
            return Err(Error::invalid("rotation must be square"));
        }
        Error::check_dim(rotation.nrows(), translation.len())?;
        if rotation.iter().chain(translation.iter()).any(|x| !x.is_finite()) {
            return Err(Error::invalid("transform has non-finite entries"));
        }
        let err = orthogonality_error(&rotation);
        if err > ORTHOGONALITY_TOL {
            return Err(Error::invalid(format!(
                "rotation is not orthogonal (max |R^T R - I| = {err:e})"
            )));
        }
        let det = rotation.determinant();
        if (det.abs() - 1.0).abs() > ORTHOGONALITY_TOL {
            return Err(Error::invalid(format!("rotation determinant {det} is not +-1")));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub(crate) fn from_parts_unchecked(rotation: DMatrix<f64>, translation: DVector<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            rotation: DMatrix::identity(dim, dim),
            translation: DVector::zeros(dim),
        }
    }

    pub fn translation_only(v: &[f64]) -> Self {
        Self {
            rotation: DMatrix::identity(v.len(), v.len()),
            translation: DVector::from_column_slice(v),
        }
    }

    pub fn dim(&self) -> usize {
        self.translation.len()
    }

    pub fn rotation(&self) -> &DMatrix<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &DVector<f64> {
        &self.translation
    }

    pub fn determinant(&self) -> f64 {
        self.rotation.determinant()
    }

    /// `(R^T, -R^T v)`.
    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        let v = -(&rt * &self.translation);
        Self {
            rotation: rt,
            translation: v,
        }
    }

    /// The transform that applies `self` first and `next` second.
    pub fn then(&self, next: &RigidTransform) -> Self {
        Self {
            rotation: &next.rotation * &self.rotation,
            translation: &next.rotation * &self.translation + &next.translation,
        }
    }

    pub fn apply_point(&self, p: &[f64]) -> Result<Vec<f64>> {
        Error::check_dim(self.dim(), p.len())?;
        let mut out = vec![0.0; p.len()];
        self.apply_into(p, &mut out);
        Ok(out)
    }

    #[inline]
    fn apply_into(&self, p: &[f64], out: &mut [f64]) {
        let d = p.len();
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = self.translation[r];
            for c in 0..d {
                acc += self.rotation[(r, c)] * p[c];
            }
            *o = acc;
        }
    }

    /// Applies the transform to every point; weights are carried over.
    pub fn apply(&self, set: &WeightedPointSet) -> Result<WeightedPointSet> {
        Error::check_dim(self.dim(), set.dim())?;
        let d = set.dim();
        let mut coords = vec![0.0; set.coords.len()];
        coords
            .par_chunks_mut(d)
            .zip(set.coords.par_chunks(d))
            .for_each(|(out, p)| self.apply_into(p, out));
        set.with_coords(coords)
    }

    /// Largest operator-norm-style distance used for fixed-point checks:
    /// spectral norm of the rotation difference plus translation difference norm.
    pub fn distance_to(&self, other: &RigidTransform) -> f64 {
        let dr = &self.rotation - &other.rotation;
        let spectral = dr.singular_values().iter().copied().fold(0.0, f64::max);
        spectral + (&self.translation - &other.translation).norm()
    }
}

/// Applies a transform to a point set (free-function form).
pub fn apply_transform(t: &RigidTransform, set: &WeightedPointSet) -> Result<WeightedPointSet> {
    t.apply(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand_chacha::rand_core::{RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unif(rng: &mut ChaCha8Rng) -> f64 {
        (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    fn random_set(rng: &mut ChaCha8Rng, n: usize, d: usize) -> WeightedPointSet {
        let coords = (0..n * d).map(|_| unif(rng) * 4.0 - 2.0).collect();
        let weights = (0..n).map(|_| 0.1 + unif(rng)).collect();
        WeightedPointSet::new(coords, weights, d).unwrap()
    }

    fn rotation_2d(theta: f64) -> RigidTransform {
        let (s, c) = theta.sin_cos();
        RigidTransform::new(
            DMatrix::from_row_slice(2, 2, &[c, -s, s, c]),
            DVector::zeros(2),
        )
        .unwrap()
    }

    #[test]
    fn squared_distance_basics() {
        assert_eq!(squared_distance(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(squared_distance(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 25.0);
        assert!(matches!(
            squared_distance(&[0.0], &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn squared_distance_matches_per_coordinate_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p: Vec<f64> = (0..50).map(|_| unif(&mut rng)).collect();
        let q: Vec<f64> = (0..50).map(|_| unif(&mut rng)).collect();
        let mut oracle = 0.0;
        for k in 0..50 {
            let diff = p[k] - q[k];
            oracle += diff * diff;
        }
        assert_relative_eq!(squared_distance(&p, &q).unwrap(), oracle, max_relative = 1e-12);
    }

    #[test]
    fn construction_rejects_bad_inputs() {
        assert!(WeightedPointSet::new(vec![0.0, 1.0], vec![1.0, 0.0], 1).is_err());
        assert!(WeightedPointSet::new(vec![f64::NAN], vec![1.0], 1).is_err());
        assert!(WeightedPointSet::new(vec![], vec![], 1).is_err());
        assert!(WeightedPointSet::new(vec![1.0], vec![1.0], 0).is_err());
        assert!(WeightedPointSet::new(vec![1.0, 2.0, 3.0], vec![1.0], 2).is_err());
    }

    #[test]
    fn diameter_cases() {
        let single = WeightedPointSet::uniform(vec![1.0, 2.0], 2).unwrap();
        assert_eq!(single.diameter(), 0.0);
        let pair = WeightedPointSet::uniform(vec![0.0, 0.0, 0.0, 5.0], 2).unwrap();
        assert_eq!(pair.diameter(), 5.0);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let set = random_set(&mut rng, 100, 7);
        let mut oracle = 0.0f64;
        for i in 0..100 {
            for j in 0..100 {
                let d: f64 = (0..7)
                    .map(|k| (set.point(i)[k] - set.point(j)[k]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                oracle = oracle.max(d);
            }
        }
        assert_eq!(set.diameter(), oracle);
    }

    #[test]
    fn weights_and_mean() {
        let set = WeightedPointSet::uniform(vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0], 2).unwrap();
        assert_eq!(set.total_weight(), 4.0);
        let sym = WeightedPointSet::uniform(vec![-1.0, 0.0, 1.0, 0.0], 2).unwrap();
        assert_eq!(sym.weighted_mean(), vec![0.0, 0.0]);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let set = random_set(&mut rng, 40, 3);
        let mut w = 0.0;
        let mut m = [0.0; 3];
        for i in 0..40 {
            w += set.weight(i);
            for k in 0..3 {
                m[k] += set.weight(i) * set.point(i)[k];
            }
        }
        assert_relative_eq!(set.total_weight(), w, max_relative = 1e-12);
        for (k, mk) in set.weighted_mean().iter().enumerate() {
            assert_relative_eq!(*mk, m[k] / w, max_relative = 1e-12, epsilon = 1e-14);
        }
    }

    #[test]
    fn transform_basics() {
        let set = WeightedPointSet::uniform(vec![1.0, 0.0], 2).unwrap();
        let id = RigidTransform::identity(2);
        assert_eq!(id.apply(&set).unwrap(), set);
        let rotated = rotation_2d(std::f64::consts::FRAC_PI_2).apply(&set).unwrap();
        assert!((rotated.point(0)[0] - 0.0).abs() < 1e-12);
        assert!((rotated.point(0)[1] - 1.0).abs() < 1e-12);
        let three = WeightedPointSet::uniform(vec![1.0, 0.0, 0.0], 3).unwrap();
        assert!(id.apply(&three).is_err());
    }

    #[test]
    fn transform_validation() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(RigidTransform::new(bad, DVector::zeros(2)).is_err());
        let reflect = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let t = RigidTransform::new(reflect, DVector::zeros(2)).unwrap();
        assert!((t.determinant() + 1.0).abs() < 1e-12);
    }
}
