//! Rigid alignment of weighted point sets under the Earth Mover's Distance,
//! accelerated by farthest-point k-center compression.

pub mod alignment;
pub mod cli;
pub mod clustering;
pub mod datagen;
pub mod error;
pub mod geometry;
pub mod io;
pub mod pipeline;
pub mod procrustes;
pub mod rng;
pub mod svd;
pub mod transport;

pub use alignment::{align, compose, AlignConfig, AlignmentResult, InitMode, TransformChain};
pub use clustering::{compress, gonzalez, k_from_epsilon, Clustering};
pub use datagen::{add_gaussian_noise, hypercube_instance, random_manifold_instance, ManifoldSpec};
pub use error::{Error, Result};
pub use geometry::{apply_transform, squared_distance, RigidTransform, WeightedPointSet};
pub use io::{parse_point_set, read_point_set, write_point_set};
pub use pipeline::{align_compressed, certificate_check, Certificates, CompressionLevel, PipelineConfig, PipelineReport};
pub use procrustes::{cross_covariance, optimal_transform};
pub use transport::{emd_cost, solve_emd, solve_emd_warm, EmdSolution, FlowEntry, FlowPlan, WarmStart};
