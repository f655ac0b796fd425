//! Forests of oblique model trees for regression on image spaces.
//!
//! Each tree partitions the space of pixel-intensity vectors with hyperplanes
//! derived from per-axis least-squares fits. Split geometry is tracked through
//! axis-parallel bounding boxes so every cut provably shrinks its block. Forests
//! blend the leaf functions of several trees with weights that vanish on the
//! splitting hyperplanes, and image distortions that permute pixels lift to
//! exact transformations of a trained forest.

pub mod bench;
pub mod data;
pub mod distortion;
pub mod error;
pub mod fitting;
pub mod forest;
pub mod geometry;
pub mod probe;
pub mod space;
pub mod tree;

pub use error::{Error, Result};
pub use fitting::{rms_error, BlockSums, LeafModel};
pub use forest::{build_forest, Forest, ForestMode, ForestParams, WeightSpec};

pub use geometry::{BoundingHR, Hyperplane, Kernel};
pub use space::{extend_sample, ImageSpace, Sample, TargetFunction};
pub use tree::{build, BuildParams, ModelTree, TreeNode};
