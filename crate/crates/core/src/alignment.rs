//! Alternating minimization of `EMD(A, T(B))` over rigid transforms `T`.
//!
//! Each round solves the transport problem for the current placement of `B`
//! and then the Procrustes problem for the resulting flow. Both steps are
//! exact minimizations of the same objective, so the recorded EMD values
//! never increase; the loop stops once the change drops below the tolerance.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::geometry::{RigidTransform, WeightedPointSet};
use crate::procrustes::procrustes_update;
use crate::svd::nearest_orthogonal;
use crate::transport::{solve_emd_warm, FlowPlan, TransportOptions, WarmStart};

/// Products of this many rotations are re-projected onto the orthogonal group.
pub const REORTHOGONALIZE_EVERY: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    Identity,
    /// Translate `B`'s weighted mean onto `A`'s.
    Centroid,
}

impl std::str::FromStr for InitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(InitMode::Identity),
            "centroid" => Ok(InitMode::Centroid),
            other => Err(Error::invalid(format!("unknown init mode `{other}`"))),
        }
    }
}

impl InitMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            InitMode::Identity => "identity",
            InitMode::Centroid => "centroid",
        }
    }
}

#[derive(Debug, Clone)]
pub struct AlignConfig {
    /// Stop when the absolute change of the objective falls below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub init_mode: InitMode,
    pub proper_rotations_only: bool,
    pub transport: TransportOptions,
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-3,
            max_iterations: 100,
            init_mode: InitMode::Centroid,
            proper_rotations_only: false,
            transport: TransportOptions::default(),
        }
    }
}

impl AlignConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid("tolerance must be positive"));
        }
        if self.max_iterations < 1 {
            return Err(Error::invalid("max_iterations must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AlignmentResult {
    pub transform: RigidTransform,
    /// Optimal flow between `A` and `transform(B)`.
    pub flow: FlowPlan,
    /// EMD after each flow step; the last entry belongs to `flow`.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// The last Procrustes update saw a rank-deficient cross-covariance, so
    /// the optimal rotation was not unique.
    pub rank_deficient: bool,
}

impl AlignmentResult {
    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace is never empty")
    }
}

/// Running composition of rigid transforms applied one after another.
#[derive(Debug, Clone)]
pub struct TransformChain {
    current: RigidTransform,
    since_reorthogonalized: usize,
}

impl TransformChain {
    pub fn new(start: RigidTransform) -> Self {
        Self {
            current: start,
            since_reorthogonalized: 0,
        }
    }

    /// Appends `next`, to be applied after everything already in the chain.
    pub fn push(&mut self, next: &RigidTransform) -> Result<()> {
        self.current = self.current.then(next);
        self.since_reorthogonalized += 1;
        if self.since_reorthogonalized >= REORTHOGONALIZE_EVERY {
            self.current = reorthogonalized(&self.current)?;
            self.since_reorthogonalized = 0;
        }
        Ok(())
    }

    pub fn current(&self) -> &RigidTransform {
        &self.current
    }
}

fn reorthogonalized(t: &RigidTransform) -> Result<RigidTransform> {
    Ok(RigidTransform::from_parts_unchecked(
        nearest_orthogonal(t.rotation())?,
        t.translation().clone(),
    ))
}

/// Single transform equivalent to applying `transforms[0]`, then
/// `transforms[1]`, and so on.
///
/// Rotation is the product `R_n ... R_1`; the translation is
/// `sum_l (R_n ... R_{l+1}) v_l`. Suffix products are built right to left and
/// re-orthogonalized every [`REORTHOGONALIZE_EVERY`] multiplications.
pub fn compose(transforms: &[RigidTransform]) -> Result<RigidTransform> {
    let last = transforms
        .last()
        .ok_or_else(|| Error::invalid("cannot compose an empty list of transforms"))?;
    let d = last.dim();
    for t in transforms {
        Error::check_dim(d, t.dim())?;
    }
    let mut suffix = nalgebra::DMatrix::<f64>::identity(d, d);
    let mut v = DVector::<f64>::zeros(d);
    for (count, t) in transforms.iter().rev().enumerate() {
        v += &suffix * t.translation();
        suffix = &suffix * t.rotation();
        if (count + 1) % REORTHOGONALIZE_EVERY == 0 {
            suffix = nearest_orthogonal(&suffix)?;
        }
    }
    Ok(RigidTransform::from_parts_unchecked(suffix, v))
}

/// Initial placement of `B` before the first flow step.
pub fn initial_transform(a: &WeightedPointSet, b: &WeightedPointSet, mode: InitMode) -> RigidTransform {
    match mode {
        InitMode::Identity => RigidTransform::identity(a.dim()),
        InitMode::Centroid => {
            let shift: Vec<f64> = a
                .weighted_mean()
                .iter()
                .zip(b.weighted_mean())
                .map(|(x, y)| x - y)
                .collect();
            RigidTransform::translation_only(&shift)
        }
    }
}

/// Alternating flow / transform minimization of `EMD(A, T(B))`.
pub fn align(a: &WeightedPointSet, b: &WeightedPointSet, config: &AlignConfig) -> Result<AlignmentResult> {
    config.validate()?;
    Error::check_dim(a.dim(), b.dim())?;
    let mut chain = TransformChain::new(initial_transform(a, b, config.init_mode));
    let mut trace = Vec::new();
    let mut rank_deficient = false;
    let mut converged = false;
    let mut warm = WarmStart::default();
    let flow = loop {
        let moved = chain.current().apply(b)?;
        let sol = solve_emd_warm(a, &moved, &config.transport, &mut warm)?;
        let prev = trace.last().copied();
        trace.push(sol.value);
        if let Some(prev) = prev {
            if (prev - sol.value).abs() < config.tolerance {
                converged = true;
                break sol.plan;
            }
        }
        if trace.len() >= config.max_iterations {
            break sol.plan;
        }
        let update = procrustes_update(a, &moved, &sol.plan, config.proper_rotations_only)?;
        rank_deficient = update.rank_deficient;
        chain.push(&update.transform)?;
    };
    Ok(AlignmentResult {
        transform: chain.current().clone(),
        flow,
        iterations: trace.len(),
        objective_trace: trace,
        converged,
        rank_deficient,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn square() -> WeightedPointSet {
        WeightedPointSet::uniform(vec![0.0, 0.0, 1.0, 0.0, 1.0, 2.0, 0.0, 2.0, 0.3, 0.7], 2).unwrap()
    }

    #[test]
    fn identical_sets_converge_immediately() {
        let a = square();
        let r = align(&a, &a, &AlignConfig::default()).unwrap();
        assert!(r.converged);
        assert!(r.iterations <= 2);
        assert!(r.final_objective() <= 1e-12);
        assert!((r.transform.rotation() - DMatrix::identity(2, 2)).amax() <= 1e-9);
        assert!(r.transform.translation().amax() <= 1e-9);
    }

    #[test]
    fn single_iteration_budget() {
        let a = square();
        let cfg = AlignConfig {
            max_iterations: 1,
            init_mode: InitMode::Identity,
            ..AlignConfig::default()
        };
        let r = align(&a, &a, &cfg).unwrap();
        assert_eq!(r.iterations, 1);
        assert!(!r.converged);
    }

    #[test]
    fn pure_translations_compose_additively() {
        let t1 = RigidTransform::translation_only(&[1.0, 2.0]);
        let t2 = RigidTransform::translation_only(&[-0.5, 4.0]);
        let t = compose(&[t1.clone(), t2]).unwrap();
        assert_eq!(t.rotation(), &DMatrix::identity(2, 2));
        assert_eq!(t.translation().as_slice(), &[0.5, 6.0]);
        assert_eq!(compose(&[t1.clone()]).unwrap(), t1);
        assert!(compose(&[]).is_err());
    }

    #[test]
    fn invalid_config() {
        let a = square();
        let cfg = AlignConfig {
            tolerance: 0.0,
            ..AlignConfig::default()
        };
        assert!(align(&a, &a, &cfg).is_err());
        let cfg = AlignConfig {
            max_iterations: 0,
            ..AlignConfig::default()
        };
        assert!(align(&a, &a, &cfg).is_err());
    }

    #[test]
    fn init_mode_parsing() {
        assert_eq!("identity".parse::<InitMode>().unwrap(), InitMode::Identity);
        assert_eq!("centroid".parse::<InitMode>().unwrap(), InitMode::Centroid);
        assert!("random".parse::<InitMode>().is_err());
    }
}
