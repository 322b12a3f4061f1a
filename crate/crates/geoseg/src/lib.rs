//! Image segmentation by region-based active contours whose evolution is
//! computed with minimal paths under asymmetric Randers metrics.
//!
//! The pipeline: region statistics give a shape gradient on a tube around
//! the current contour; a vector field whose curl equals that gradient turns
//! the region term into a line integral; the resulting Randers metric is fed
//! to an anisotropic fast marching solver, and the next contour is the
//! minimal geodesic (through user landmarks or around a cut wall).

pub mod cli;
pub mod eikonal;
pub mod evolve;
pub mod error;
pub mod features;
pub mod fixtures;
pub mod geom;
pub mod grid;
pub mod io;
pub mod randers;
pub mod server;
pub mod tube;
pub mod vectorfield;

pub use error::{Error, Result};
