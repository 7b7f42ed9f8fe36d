#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Multi-view, geometrically consistent diffusion sampling for LiDAR range images.
//!
//! A scan is projected to a range image, recast into extra viewpoints, and all
//! views are denoised together; after every reverse step the views are fused in
//! 3D and each image is nudged toward the fused geometry.

pub mod config;
pub mod denoiser;
pub mod error;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod projection;
pub mod range_image;
pub mod recast;
pub mod sampler;
pub mod scene;
pub mod schedule;
pub mod tasks;

pub use error::{Error, Result};
pub use geometry::{Point3, PointCloud, RigidTransform, WorldPointSet};
pub use projection::SensorModel;
pub use range_image::{DenseImage, RangeImage};
pub use recast::ViewSet;
pub use sampler::SamplerConfig;
pub use schedule::NoiseSchedule;
