//! Compress, align the compressed sets, lift the transform back to the full
//! sets and recompute the full EMD, with certificate checks relating the
//! compressed and full objectives.

use std::time::Instant;

use crate::alignment::{align, AlignConfig};
use crate::clustering::{compress, k_from_epsilon, Clustering};
use crate::error::{Error, Result};
use crate::geometry::{RigidTransform, WeightedPointSet};
use crate::transport::{solve_emd_with, FlowPlan};

/// Absolute slack, in units of `diameter^2`, allowed by the certificate checks.
pub const CERTIFICATE_SLACK: f64 = 1e-9;

/// How many centers each side is compressed to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CompressionLevel {
    /// `k = ceil(gamma * max(n1, n2))`, `gamma` in `(0, 1]`.
    Gamma(f64),
    /// `k = ceil((2 / epsilon)^rho)`.
    Epsilon { epsilon: f64, rho: f64 },
    K(usize),
}

impl CompressionLevel {
    pub fn k(&self, n1: usize, n2: usize) -> Result<usize> {
        match *self {
            CompressionLevel::Gamma(gamma) => k_from_gamma(gamma, n1.max(n2)),
            CompressionLevel::Epsilon { epsilon, rho } => k_from_epsilon(epsilon, rho),
            CompressionLevel::K(k) if k >= 1 => Ok(k),
            CompressionLevel::K(_) => Err(Error::invalid("k must be at least 1")),
        }
    }

    /// The requested epsilon, when the level was given that way.
    pub fn epsilon(&self) -> Option<f64> {
        match *self {
            CompressionLevel::Epsilon { epsilon, .. } => Some(epsilon),
            _ => None,
        }
    }
}

/// `ceil(gamma * n)`, snapping products that are integral up to rounding.
pub fn k_from_gamma(gamma: f64, n: usize) -> Result<usize> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::invalid(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    let x = gamma * n as f64;
    let nearest = x.round();
    let k = if (x - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest
    } else {
        x.ceil()
    };
    Ok((k as usize).max(1))
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub level: CompressionLevel,
    /// Separate `(k_A, k_B)`, overriding `level`.
    pub k_override: Option<(usize, usize)>,
    pub seed: u64,
    pub align: AlignConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            level: CompressionLevel::Gamma(1.0),
            k_override: None,
            seed: 0,
            align: AlignConfig::default(),
        }
    }
}

/// Both sides of the two certificate inequalities.
///
/// Forward: `EMD(A, T B) <= (1 + 2e) EMD(S_A, T S_B) + (2e + 4e^2) D^2`.
/// Backward: the same with the full and compressed objectives exchanged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certificates {
    pub forward_lhs: f64,
    pub forward_rhs: f64,
    pub backward_lhs: f64,
    pub backward_rhs: f64,
    pub epsilon: f64,
    pub diameter: f64,
}

impl Certificates {
    pub fn from_values(emd_full: f64, emd_compressed: f64, epsilon: f64, diameter: f64) -> Self {
        let factor = 1.0 + 2.0 * epsilon;
        let additive = (2.0 * epsilon + 4.0 * epsilon * epsilon) * diameter * diameter;
        Self {
            forward_lhs: emd_full,
            forward_rhs: factor * emd_compressed + additive,
            backward_lhs: emd_compressed,
            backward_rhs: factor * emd_full + additive,
            epsilon,
            diameter,
        }
    }

    fn slack(&self) -> f64 {
        CERTIFICATE_SLACK * self.diameter * self.diameter
    }

    pub fn forward_holds(&self) -> bool {
        self.forward_lhs <= self.forward_rhs + self.slack()
    }

    pub fn backward_holds(&self) -> bool {
        self.backward_lhs <= self.backward_rhs + self.slack()
    }

    pub fn holds(&self) -> bool {
        self.forward_holds() && self.backward_holds()
    }
}

/// `max(r_A, r_B) / D`, zero for a zero diameter.
pub fn effective_epsilon(radius_a: f64, radius_b: f64, diameter: f64) -> f64 {
    if diameter > 0.0 {
        radius_a.max(radius_b) / diameter
    } else {
        0.0
    }
}

/// Evaluates both certificate inequalities for transform `t` by solving the
/// full and compressed transport problems.
pub fn certificate_check(
    a: &WeightedPointSet,
    b: &WeightedPointSet,
    sa: &WeightedPointSet,
    sb: &WeightedPointSet,
    t: &RigidTransform,
    epsilon_eff: f64,
) -> Result<Certificates> {
    let opts = Default::default();
    let full = solve_emd_with(a, &t.apply(b)?, &opts)?.value;
    let comp = solve_emd_with(sa, &t.apply(sb)?, &opts)?.value;
    let diameter = a.diameter().max(b.diameter());
    Ok(Certificates::from_values(full, comp, epsilon_eff, diameter))
}

/// Wall-clock stage times in milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Timings {
    pub compress_ms: f64,
    pub align_ms: f64,
    pub final_emd_ms: f64,
    /// Sum of the three stages above.
    pub total_ms: f64,
    /// Diameter scan for the certificates; not part of `total_ms`.
    pub diameter_ms: f64,
}

#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub n: (usize, usize),
    pub dim: usize,
    pub total_weights: (f64, f64),
    pub diameters: (f64, f64),
    pub requested_k: (usize, usize),
    pub compressed_sizes: (usize, usize),
    pub compression_radii: (f64, f64),
    pub requested_epsilon: Option<f64>,
    pub epsilon_eff: f64,
    pub transform: RigidTransform,
    pub iterations: usize,
    pub converged: bool,
    pub rank_deficient: bool,
    pub objective_trace: Vec<f64>,
    pub emd_full: f64,
    pub emd_compressed: f64,
    pub flow: FlowPlan,
    pub certificates: Certificates,
    pub timings: Timings,
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Compressed alignment of `b` onto `a`.
pub fn align_compressed(
    a: &WeightedPointSet,
    b: &WeightedPointSet,
    config: &PipelineConfig,
) -> Result<PipelineReport> {
    Error::check_dim(a.dim(), b.dim())?;
    config.align.validate()?;
    let (ka, kb) = match config.k_override {
        Some((ka, kb)) if ka >= 1 && kb >= 1 => (ka, kb),
        Some(_) => return Err(Error::invalid("per-side k must be at least 1")),
        None => {
            let k = config.level.k(a.len(), b.len())?;
            (k, k)
        }
    };

    let start = Instant::now();
    let (ca, cb) = rayon::join(|| compress(a, ka, config.seed), || compress(b, kb, config.seed));
    let ((sa, clus_a), (sb, clus_b)): ((WeightedPointSet, Clustering), (WeightedPointSet, Clustering)) =
        (ca?, cb?);
    let compress_ms = elapsed_ms(start);

    let start = Instant::now();
    let aligned = align(&sa, &sb, &config.align)?;
    let align_ms = elapsed_ms(start);

    let start = Instant::now();
    let full = solve_emd_with(a, &aligned.transform.apply(b)?, &config.align.transport)?;
    let final_emd_ms = elapsed_ms(start);

    let start = Instant::now();
    let (da, db) = rayon::join(|| a.diameter(), || b.diameter());
    let diameter_ms = elapsed_ms(start);

    let diameter = da.max(db);
    let radii = (clus_a.radius(), clus_b.radius());
    let epsilon_eff = effective_epsilon(radii.0, radii.1, diameter);
    let emd_compressed = aligned.final_objective();
    Ok(PipelineReport {
        n: (a.len(), b.len()),
        dim: a.dim(),
        total_weights: (a.total_weight(), b.total_weight()),
        diameters: (da, db),
        requested_k: (ka, kb),
        compressed_sizes: (sa.len(), sb.len()),
        compression_radii: radii,
        requested_epsilon: config.level.epsilon(),
        epsilon_eff,
        iterations: aligned.iterations,
        converged: aligned.converged,
        rank_deficient: aligned.rank_deficient,
        certificates: Certificates::from_values(full.value, emd_compressed, epsilon_eff, diameter),
        transform: aligned.transform,
        objective_trace: aligned.objective_trace,
        emd_full: full.value,
        emd_compressed,
        flow: full.plan,
        timings: Timings {
            compress_ms,
            align_ms,
            final_emd_ms,
            total_ms: compress_ms + align_ms + final_emd_ms,
            diameter_ms,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair() -> (WeightedPointSet, WeightedPointSet) {
        let a = WeightedPointSet::new(
            vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 2.0, 2.0, 0.1, 0.1],
            vec![1.0, 2.0, 1.0, 0.5, 0.5],
            2,
        )
        .unwrap();
        let b = WeightedPointSet::uniform(vec![0.5, 0.2, 1.4, 0.3, 0.2, 1.9, 2.1, 1.5], 2).unwrap();
        (a, b)
    }

    #[test]
    fn gamma_rounding() {
        assert_eq!(k_from_gamma(1.0, 2000).unwrap(), 2000);
        assert_eq!(k_from_gamma(0.1, 2000).unwrap(), 200);
        assert_eq!(k_from_gamma(1.0 / 30.0, 2000).unwrap(), 67);
        assert_eq!(k_from_gamma(0.02, 10).unwrap(), 1);
        assert!(k_from_gamma(0.0, 10).is_err());
        assert!(k_from_gamma(1.5, 10).is_err());
    }

    #[test]
    fn zero_radius_certificates_are_equalities() {
        let c = Certificates::from_values(0.7, 0.7, 0.0, 3.0);
        assert_eq!(c.forward_lhs, c.forward_rhs);
        assert_eq!(c.backward_lhs, c.backward_rhs);
        assert!(c.holds());
        let bad = Certificates::from_values(1.0, 0.5, 0.0, 3.0);
        assert!(!bad.forward_holds());
        assert!(bad.backward_holds());
    }

    #[test]
    fn lossless_compression_matches_plain_alignment() {
        let (a, b) = pair();
        let cfg = PipelineConfig {
            level: CompressionLevel::K(100),
            ..PipelineConfig::default()
        };
        let r = align_compressed(&a, &b, &cfg).unwrap();
        let plain = align(&a, &b, &cfg.align).unwrap();
        assert_eq!(r.compressed_sizes, (5, 4));
        assert_eq!(r.epsilon_eff, 0.0);
        assert!((r.emd_full - plain.final_objective()).abs() <= 1e-9);
        assert!((r.emd_full - r.emd_compressed).abs() <= 1e-9);
        assert!(r.transform.distance_to(&plain.transform) <= 1e-9);
        assert!(r.certificates.holds());
        let mass = a.total_weight().min(b.total_weight());
        assert!((r.flow.total_flow() - mass).abs() <= 1e-9 * mass);
    }

    #[test]
    fn compressed_run_certificates_hold() {
        let (a, b) = pair();
        let cfg = PipelineConfig {
            level: CompressionLevel::K(2),
            seed: 5,
            ..PipelineConfig::default()
        };
        let r = align_compressed(&a, &b, &cfg).unwrap();
        assert_eq!(r.compressed_sizes, (2, 2));
        assert!(r.epsilon_eff > 0.0);
        assert!(r.certificates.holds());
        let direct = certificate_check(
            &a,
            &b,
            &compress(&a, 2, 5).unwrap().0,
            &compress(&b, 2, 5).unwrap().0,
            &r.transform,
            r.epsilon_eff,
        )
        .unwrap();
        assert!((direct.forward_lhs - r.certificates.forward_lhs).abs() <= 1e-12);
        assert!((direct.backward_lhs - r.certificates.backward_lhs).abs() <= 1e-12);
    }

    #[test]
    fn per_side_override_and_errors() {
        let (a, b) = pair();
        let cfg = PipelineConfig {
            k_override: Some((3, 1)),
            ..PipelineConfig::default()
        };
        assert_eq!(align_compressed(&a, &b, &cfg).unwrap().compressed_sizes, (3, 1));
        let cfg = PipelineConfig {
            k_override: Some((0, 1)),
            ..PipelineConfig::default()
        };
        assert!(align_compressed(&a, &b, &cfg).is_err());
        let c = WeightedPointSet::uniform(vec![1.0, 2.0, 3.0], 3).unwrap();
        assert!(matches!(
            align_compressed(&a, &c, &PipelineConfig::default()),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
