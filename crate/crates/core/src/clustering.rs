//! Farthest-point (Gonzalez) k-center clustering and the compression step
//! that replaces a point set by its weighted cluster centers.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{compensated_sum, sq_dist, WeightedPointSet};
use crate::rng::{tags, StreamRng};

/// Output of [`gonzalez`]: centers in selection order, nearest-center
/// assignment (as point indices of centers) and the covering radius.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    centers: Vec<usize>,
    assignment: Vec<usize>,
    radius: f64,
}

impl Clustering {
    /// Center point indices, in the order they were selected.
    pub fn centers(&self) -> &[usize] {
        &self.centers
    }

    /// For each point, the index of the point serving as its center.
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn k(&self) -> usize {
        self.centers.len()
    }

    /// Line `k radius`, then one `point_index center_index` line per point.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {:.16e}", self.centers.len(), self.radius);
        for (i, c) in self.assignment.iter().enumerate() {
            let _ = writeln!(out, "{i} {c}");
        }
        out
    }
}

/// Index of the first center: seed 0 pins it to point 0, any other seed
/// draws it from the seed's stream.
pub fn first_center(n: usize, seed: u64) -> usize {
    if seed == 0 {
        0
    } else {
        StreamRng::new(seed, tags::FIRST_CENTER, 0).below(n)
    }
}

/// Below this many coordinate evaluations per round the distance update runs serially.
const PARALLEL_WORK: usize = 1 << 16;

/// Greedy farthest-point k-center clustering.
///
/// Starts from [`first_center`] and repeatedly adds the point farthest from
/// the current centers (lowest index on ties) until `k` centers are chosen
/// or every point coincides with a center. Each point is assigned to its
/// nearest center, ties going to the center with the lowest point index.
pub fn gonzalez(set: &WeightedPointSet, k: usize, seed: u64) -> Result<Clustering> {
    if k < 1 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let n = set.len();
    let k = k.min(n);
    let first = first_center(n, seed);
    let mut centers = Vec::with_capacity(k);
    centers.push(first);
    let mut nearest: Vec<f64> = set.points().map(|p| sq_dist(p, set.point(first))).collect();
    let mut assignment = vec![first; n];
    let parallel = n * set.dim() >= PARALLEL_WORK;

    while centers.len() < k {
        let (far, far_sq) = nearest
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bd), (i, &d)| {
                if d > bd {
                    (i, d)
                } else {
                    (bi, bd)
                }
            });
        if far_sq <= 0.0 {
            break;
        }
        centers.push(far);
        let c = set.point(far);
        let update = |(i, (near, assigned)): (usize, (&mut f64, &mut usize))| {
            let d = sq_dist(set.point(i), c);
            if d < *near || (d == *near && far < *assigned) {
                *near = d;
                *assigned = far;
            }
        };
        if parallel {
            nearest
                .par_iter_mut()
                .zip(assignment.par_iter_mut())
                .enumerate()
                .for_each(update);
        } else {
            nearest
                .iter_mut()
                .zip(assignment.iter_mut())
                .enumerate()
                .for_each(update);
        }
    }

    let radius = set
        .points()
        .zip(&assignment)
        .map(|(p, &c)| sq_dist(p, set.point(c)))
        .fold(0.0f64, f64::max)
        .sqrt();
    Ok(Clustering {
        centers,
        assignment,
        radius,
    })
}

/// Replaces `set` by its Gonzalez centers, each weighted by the total weight
/// of its cluster. Centers appear in ascending point-index order, so with
/// `k >= n` and distinct positions the output equals the input.
pub fn compress(
    set: &WeightedPointSet,
    k: usize,
    seed: u64,
) -> Result<(WeightedPointSet, Clustering)> {
    let clustering = gonzalez(set, k, seed)?;
    let mut order = clustering.centers.clone();
    order.sort_unstable();
    let mut members: Vec<Vec<f64>> = vec![Vec::new(); set.len()];
    for (i, &c) in clustering.assignment.iter().enumerate() {
        members[c].push(set.weight(i));
    }
    let weights = order
        .iter()
        .map(|&c| compensated_sum(members[c].iter().copied()))
        .collect();
    let compressed = set.gather(&order, weights)?;
    Ok((compressed, clustering))
}

/// Number of centers `ceil((2 / epsilon)^rho)` that guarantees radius at most
/// `epsilon * diameter` when `rho` bounds the doubling dimension.
pub fn k_from_epsilon(epsilon: f64, rho: f64) -> Result<usize> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::invalid(format!("rho must be positive, got {rho}")));
    }
    let x = (2.0 / epsilon).powf(rho);
    // Snap values that are integral up to rounding, e.g. 4^3.
    let nearest = x.round();
    let k = if (x - nearest).abs() <= 1e-9 * nearest {
        nearest
    } else {
        x.ceil()
    };
    if !k.is_finite() || k >= usize::MAX as f64 {
        return Err(Error::invalid(format!(
            "k = (2/{epsilon})^{rho} does not fit in a machine integer"
        )));
    }
    Ok(k as usize)
}
