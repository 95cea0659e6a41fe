//! Neck circumference and neck volume from depth images.
//!
//! The crate covers two measurement routes. The single-view route finds the
//! neck's edges on each row of a front depth frame and integrates the arc
//! length between them. The two-view route turns front and back frames into
//! point clouds, merges them, slices the result horizontally and sums slice
//! areas around the narrowest slice.
//!
//! A phantom renderer ([`phantom`]) produces depth frames of bodies whose
//! volumes are known in closed form, which is what the examples and tests
//! measure against.

pub mod circumference;
pub mod error;
pub mod filtering;
pub mod frame;
pub mod io;
pub mod peaks;
pub mod phantom;
pub mod pipeline;
pub mod reconstruct;
pub mod registration;
pub mod spatial;
pub mod stats;
pub mod volumetry;

pub use error::{Error, Result};
pub use frame::{DepthFrame, NeckTemplate, Rect};
pub use phantom::{PhantomSpec, View};
pub use pipeline::PipelineConfig;
pub use reconstruct::{Point3, PointCloud, ViewTag};
