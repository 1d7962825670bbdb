//! Planar object tracking over dense optical flow with weighted
//! least-squares homography estimation.

pub mod autodiff;
pub mod bench;
pub mod cli;
pub mod error;
pub mod estimators;
pub mod eval;
pub mod flow;
pub mod geometry;
pub mod io;
pub mod tracker;
pub mod seeds;
pub mod synth;

pub use error::{Error, Result};
