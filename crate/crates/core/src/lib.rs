//! Inter-slice rigid motion toolkit: simulation of motion-corrupted
//! multi-slice stacks, volumetric reconstruction (scattered-data
//! approximation and least-squares super-resolution), conventional
//! multi-resolution slice-to-volume registration, and a from-scratch
//! recurrent motion estimator with affinity fusion, joined as a
//! coarse-to-fine correction pipeline.

pub mod acquisition;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod motionsim;
pub mod phantom;
pub mod rng;
pub mod sda;
pub mod spline;
pub mod stack;
pub mod volume;

pub use error::{Error, Result};
