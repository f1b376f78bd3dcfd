//! Multi-robot kinodynamic motion planning with discontinuity-bounded
//! motion primitives, priority inheritance and lazy constraint search.

pub mod bench;
pub mod clustering;
pub mod dblacam;
pub mod dbpibt;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod heuristics;
pub mod nn;
pub mod planner;
pub mod plots;
pub mod primitives;
pub mod scenario;
pub mod validate;

pub use error::{Error, Result};
