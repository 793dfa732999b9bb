//! LiDAR global localization: a rotation-invariant ring-histogram scan
//! descriptor, a siamese network that embeds it into compact fingerprints,
//! a kd-tree prior map, range-only Monte-Carlo localization and ICP
//! refinement, all runnable against a built-in synthetic LiDAR simulator.

mod codec;
pub mod config;
pub mod error;
pub mod geometry;
pub mod icp;
pub mod kdtree;
pub mod manifest;
pub mod map;
pub mod mcl;
pub mod net;
pub mod pipeline;
pub mod recognition;
pub mod representation;
pub mod scan;
pub mod sim;

pub use error::{Error, Result};
pub use geometry::{Point3, Pose2, RigidTransform3};
pub use representation::{build_representation, HistogramConfig, RangeHistogramImage};
pub use scan::{Scan, SensorModel};
