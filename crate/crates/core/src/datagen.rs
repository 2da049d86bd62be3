//! Synthetic instances: point sets sampled from random polynomial manifolds,
//! Gaussian-noise corruption, and rotated low-dimensional hypercubes.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{RigidTransform, WeightedPointSet};
use crate::rng::{tags, StreamRng};

/// Random polynomial-manifold instance description.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldSpec {
    pub latent_dim: usize,
    pub ambient_dim: usize,
    pub degree: u32,
    pub n1: usize,
    pub n2: usize,
    /// Weights are drawn uniformly from `(low, high]`.
    pub weight_range: (f64, f64),
    pub seed: u64,
}

impl ManifoldSpec {
    pub fn new(latent_dim: usize, ambient_dim: usize, n1: usize, n2: usize, seed: u64) -> Self {
        Self {
            latent_dim,
            ambient_dim,
            degree: 2,
            n1,
            n2,
            weight_range: (1e-3, 1.0),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim < 1 || self.latent_dim > self.ambient_dim {
            return Err(Error::invalid(format!(
                "latent dimension {} must lie in 1..={}",
                self.latent_dim, self.ambient_dim
            )));
        }
        if self.degree < 1 {
            return Err(Error::invalid("polynomial degree must be at least 1"));
        }
        if self.n1 < 1 || self.n2 < 1 {
            return Err(Error::invalid("sample counts must be positive"));
        }
        let (low, high) = self.weight_range;
        if !(low > 0.0 && high >= low && high.is_finite()) {
            return Err(Error::invalid(format!(
                "weight range ({low}, {high}] must satisfy 0 < low <= high"
            )));
        }
        Ok(())
    }
}

/// Map `[0,1]^latent -> R^ambient` whose coordinates are polynomials of total
/// degree at most `degree` in the latent variables.
#[derive(Debug, Clone)]
pub struct PolynomialMap {
    latent_dim: usize,
    exponents: Vec<Vec<u32>>,
    /// `ambient_dim x monomials`.
    coeffs: DMatrix<f64>,
}

/// All exponent vectors of total degree `<= degree`, constant term first,
/// graded by total degree and lexicographic within a degree.
fn monomials(latent_dim: usize, degree: u32) -> Vec<Vec<u32>> {
    fn fill(pos: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if pos + 1 == cur.len() {
            cur[pos] = left;
            out.push(cur.clone());
            return;
        }
        for e in (0..=left).rev() {
            cur[pos] = e;
            fill(pos + 1, left - e, cur, out);
        }
    }
    let mut out = Vec::new();
    for total in 0..=degree {
        let mut cur = vec![0; latent_dim];
        fill(0, total, &mut cur, &mut out);
    }
    out
}

impl PolynomialMap {
    /// Coefficients uniform in `[-1, 1]`, one random stream per ambient coordinate.
    pub fn random(latent_dim: usize, ambient_dim: usize, degree: u32, seed: u64, tag: u64) -> Self {
        let exponents = monomials(latent_dim, degree);
        let terms = exponents.len();
        let mut coeffs = DMatrix::zeros(ambient_dim, terms);
        for r in 0..ambient_dim {
            let mut rng = StreamRng::new(seed, tag, r as u64);
            for c in 0..terms {
                coeffs[(r, c)] = rng.uniform_in(-1.0, 1.0);
            }
        }
        Self {
            latent_dim,
            exponents,
            coeffs,
        }
    }

    /// Explicit coefficients, columns ordered as [`PolynomialMap::monomial_exponents`].
    pub fn from_coefficients(latent_dim: usize, degree: u32, coeffs: DMatrix<f64>) -> Result<Self> {
        let exponents = monomials(latent_dim, degree);
        Error::check_dim(exponents.len(), coeffs.ncols())?;
        Ok(Self {
            latent_dim,
            exponents,
            coeffs,
        })
    }

    pub fn monomial_exponents(&self) -> &[Vec<u32>] {
        &self.exponents
    }

    pub fn ambient_dim(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn eval(&self, latent: &[f64]) -> Vec<f64> {
        debug_assert_eq!(latent.len(), self.latent_dim);
        let basis: Vec<f64> = self
            .exponents
            .iter()
            .map(|e| e.iter().zip(latent).map(|(&p, &x)| x.powi(p as i32)).product())
            .collect();
        (0..self.coeffs.nrows())
            .map(|r| (0..basis.len()).map(|c| self.coeffs[(r, c)] * basis[c]).sum())
            .collect()
    }

    /// `n` points with latent coordinates uniform in `[0,1]^latent_dim`.
    pub fn sample(
        &self,
        n: usize,
        weight_range: (f64, f64),
        seed: u64,
        latent_tag: u64,
        weight_tag: u64,
    ) -> Result<WeightedPointSet> {
        let rows: Vec<(Vec<f64>, f64)> = (0..n)
            .into_par_iter()
            .map(|p| {
                let mut rng = StreamRng::new(seed, latent_tag, p as u64);
                let latent: Vec<f64> = (0..self.latent_dim).map(|_| rng.uniform()).collect();
                let mut wrng = StreamRng::new(seed, weight_tag, p as u64);
                let (low, high) = weight_range;
                let w = low + (high - low) * wrng.uniform_positive();
                (self.eval(&latent), w)
            })
            .collect();
        let d = self.ambient_dim();
        let mut coords = Vec::with_capacity(n * d);
        let mut weights = Vec::with_capacity(n);
        for (x, w) in rows {
            coords.extend(x);
            weights.push(w);
        }
        WeightedPointSet::new(coords, weights, d)
    }
}

/// Two point sets sampled from two independently drawn random manifolds.
pub fn random_manifold_instance(spec: &ManifoldSpec) -> Result<(WeightedPointSet, WeightedPointSet)> {
    spec.validate()?;
    let map_a = PolynomialMap::random(spec.latent_dim, spec.ambient_dim, spec.degree, spec.seed, tags::COEFFS_A);
    let map_b = PolynomialMap::random(spec.latent_dim, spec.ambient_dim, spec.degree, spec.seed, tags::COEFFS_B);
    let a = map_a.sample(spec.n1, spec.weight_range, spec.seed, tags::LATENT_A, tags::WEIGHTS_A)?;
    let b = map_b.sample(spec.n2, spec.weight_range, spec.seed, tags::LATENT_B, tags::WEIGHTS_B)?;
    Ok((a, b))
}

/// Adds independent `N(0, sigma^2)` noise to every coordinate; weights are kept.
pub fn add_gaussian_noise_sigma(set: &WeightedPointSet, sigma: f64, seed: u64) -> Result<WeightedPointSet> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("noise level must be nonnegative, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(set.clone());
    }
    let d = set.dim();
    let mut coords = set.coords().to_vec();
    coords.par_chunks_mut(d).enumerate().for_each(|(p, row)| {
        let mut rng = StreamRng::new(seed, tags::NOISE, p as u64);
        for x in row.iter_mut() {
            *x += sigma * rng.gaussian();
        }
    });
    WeightedPointSet::new(coords, set.weights().to_vec(), d)
}

/// Noise with standard deviation `eta * diameter(set)` per coordinate.
pub fn add_gaussian_noise(set: &WeightedPointSet, eta: f64, seed: u64) -> Result<WeightedPointSet> {
    if !(eta >= 0.0) {
        return Err(Error::invalid(format!("eta must be nonnegative, got {eta}")));
    }
    if eta == 0.0 {
        return Ok(set.clone());
    }
    add_gaussian_noise_sigma(set, eta * set.diameter(), seed)
}

/// Random orthogonal `d x d` matrix: Gram-Schmidt on a Gaussian matrix.
pub fn random_orthogonal(d: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = StreamRng::new(seed, tags::ROTATION, 0);
    let mut q = DMatrix::<f64>::zeros(d, d);
    let mut c = 0;
    while c < d {
        let mut x = DVector::from_fn(d, |_, _| rng.gaussian());
        for _ in 0..2 {
            for j in 0..c {
                let qj = q.column(j);
                let proj = qj.dot(&x);
                x -= qj * proj;
            }
        }
        let norm = x.norm();
        if norm > 1e-8 {
            q.set_column(c, &(x / norm));
            c += 1;
        }
    }
    q
}

/// Random rigid transform with translation entries uniform in `[-scale, scale]`.
pub fn random_rigid_transform(d: usize, translation_scale: f64, seed: u64) -> RigidTransform {
    let r = random_orthogonal(d, seed);
    let mut rng = StreamRng::new(seed, tags::ROTATION, 1);
    let v = DVector::from_fn(d, |_, _| rng.uniform_in(-translation_scale, translation_scale));
    RigidTransform::from_parts_unchecked(r, v)
}

/// Unrotated hypercube sample (first `rho` coordinates uniform in `[0,1]`,
/// the rest zero) and the rotation that embeds it.
pub fn hypercube_parts(rho: usize, d: usize, n: usize, seed: u64) -> Result<(WeightedPointSet, RigidTransform)> {
    if rho < 1 || rho > d {
        return Err(Error::invalid(format!("hypercube dimension {rho} must lie in 1..={d}")));
    }
    if n < 1 {
        return Err(Error::invalid("hypercube instance needs at least one point"));
    }
    let mut coords = vec![0.0; n * d];
    coords.par_chunks_mut(d).enumerate().for_each(|(p, row)| {
        let mut rng = StreamRng::new(seed, tags::HYPERCUBE, p as u64);
        for x in row.iter_mut().take(rho) {
            *x = rng.uniform();
        }
    });
    let latent = WeightedPointSet::uniform(coords, d)?;
    let rotation = RigidTransform::from_parts_unchecked(random_orthogonal(d, seed), DVector::zeros(d));
    Ok((latent, rotation))
}

/// Unit-weight samples from `[0,1]^rho`, embedded in `R^d` by a random rotation.
pub fn hypercube_instance(rho: usize, d: usize, n: usize, seed: u64) -> Result<WeightedPointSet> {
    let (latent, rotation) = hypercube_parts(rho, d, n, seed)?;
    rotation.apply(&latent)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::orthogonality_error;

    #[test]
    fn monomial_enumeration() {
        let m = monomials(2, 2);
        assert_eq!(m, vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]]);
        assert_eq!(monomials(5, 2).len(), 21);
    }

    #[test]
    fn linear_map_samples_a_box() {
        // degree 1, latent = ambient, coefficient matrix [0 | I]
        let d = 3;
        let mut coeffs = DMatrix::zeros(d, d + 1);
        for r in 0..d {
            coeffs[(r, r + 1)] = 1.0;
        }
        let map = PolynomialMap::from_coefficients(d, 1, coeffs).unwrap();
        let set = map.sample(500, (1.0, 1.0), 9, tags::LATENT_A, tags::WEIGHTS_A).unwrap();
        for p in set.points() {
            assert!(p.iter().all(|x| (0.0..1.0).contains(x)));
        }
        assert!(set.weights().iter().all(|w| *w == 1.0));
    }

    #[test]
    fn manifold_instances_are_deterministic() {
        let spec = ManifoldSpec::new(3, 10, 40, 50, 42);
        let (a1, b1) = random_manifold_instance(&spec).unwrap();
        let (a2, b2) = random_manifold_instance(&spec).unwrap();
        assert_eq!(a1, a2);
        assert_eq!(b1, b2);
        assert_eq!((a1.len(), b1.len(), a1.dim()), (40, 50, 10));
        assert!(a1.weights().iter().all(|w| *w > 1e-3 && *w <= 1.0));
        let other = random_manifold_instance(&ManifoldSpec { seed: 43, ..spec }).unwrap();
        assert_ne!(other.0, a1);
    }

    #[test]
    fn invalid_specs() {
        let mut spec = ManifoldSpec::new(3, 2, 10, 10, 1);
        assert!(random_manifold_instance(&spec).is_err());
        spec = ManifoldSpec::new(2, 3, 10, 10, 1);
        spec.degree = 0;
        assert!(spec.validate().is_err());
        spec.degree = 2;
        spec.weight_range = (0.0, 1.0);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn zero_noise_and_determinism() {
        let set = hypercube_instance(2, 5, 100, 3).unwrap();
        assert_eq!(add_gaussian_noise(&set, 0.0, 1).unwrap(), set);
        let x = add_gaussian_noise(&set, 0.01, 7).unwrap();
        let y = add_gaussian_noise(&set, 0.01, 7).unwrap();
        assert_eq!(x, y);
        assert_ne!(x, set);
        assert_eq!(x.weights(), set.weights());
        assert!(add_gaussian_noise(&set, -1.0, 7).is_err());
    }

    #[test]
    fn random_orthogonal_is_orthogonal() {
        for d in [1, 2, 7, 30] {
            assert!(orthogonality_error(&random_orthogonal(d, d as u64)) <= 1e-12);
        }
    }
}
