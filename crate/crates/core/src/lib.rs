//! Adaptive tetrahedral grids built by longest-edge bisection, and a Monte
//! Carlo volumetric path tracer that walks them cell by cell.
//!
//! The crate is organised around the life cycle of a grid:
//!
//! * [`volume`] loads dense voxel data and gathers per-tetrahedron statistics,
//! * [`leb_grid`] holds the conforming bisection forest itself,
//! * [`camera`] provides primary rays and the view-dependent refinement tests,
//! * [`builder`] drives refinement and serialises finished grids,
//! * [`tracer`] renders a grid, and
//! * [`reference_grid`] renders the same data on a plain voxel grid for
//!   comparison.

pub mod builder;
pub mod camera;
pub mod leb_grid;
pub mod ray;
pub mod reference_grid;
pub mod tracer;
pub mod volume;

pub use builder::{build_adaptive_grid, BuildConfig, BuildError, BuildOutcome, MediaPayload};
pub use camera::PinholeCamera;
pub use leb_grid::{FaceNormalId, GridError, TetGrid, TetId, VertexId};
pub use ray::Ray;
pub use reference_grid::RegularGrid;
pub use tracer::{render, ImageAccumulator, RenderConfig};
pub use volume::{DenseVolume, DensityStats, VolumeError};
