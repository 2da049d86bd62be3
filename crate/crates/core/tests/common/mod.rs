#![allow(dead_code)]

use geoalign::rng::StreamRng;
use geoalign::WeightedPointSet;

pub fn rng(seed: u64) -> StreamRng {
    StreamRng::new(seed, 0x7e57, 0)
}

/// `n` points with coordinates uniform in `[-scale, scale]^d` and weights
/// uniform in `(0.1, 1.1]` (or all one).
pub fn random_set(rng: &mut StreamRng, n: usize, d: usize, scale: f64, unit_weights: bool) -> WeightedPointSet {
    let coords = (0..n * d).map(|_| rng.uniform_in(-scale, scale)).collect();
    let weights = (0..n)
        .map(|_| if unit_weights { 1.0 } else { 0.1 + rng.uniform_positive() })
        .collect();
    WeightedPointSet::new(coords, weights, d).unwrap()
}

pub fn sq(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn rel_err(x: f64, y: f64) -> f64 {
    (x - y).abs() / y.abs().max(1e-300)
}
