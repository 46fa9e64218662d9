//! Room layout estimation downstream of layout feature maps.
//!
//! Given corner, boundary and segmentation maps plus a predicted layout
//! complexity, the pipeline proposes generic (not necessarily cuboidal)
//! layout candidates, snaps them to line segments visible in the image,
//! scores them with a max-margin trained ranker and returns the best one.
//! A synthetic oracle renderer stands in for the feature network.

pub mod binary;
pub mod error;
pub mod eval;
pub mod featuremaps;
pub mod geometry;
pub mod io;
pub mod layout;
pub mod pipeline;
pub mod proposal;
pub mod raster;
pub mod refine;
pub mod scoring;
pub mod synth;

pub use error::{Error, Result};
pub use layout::{Layout, WwBoundary};

/// Double-precision point used throughout the pipeline.
pub type Point = geometry::Point2<f64>;
/// Double-precision segment used throughout the pipeline.
pub type Segment = geometry::LineSegment<f64>;
/// Single-precision point, matching the map file precision.
pub type Point32 = geometry::Point2<f32>;
