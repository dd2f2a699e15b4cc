//! Restoration of image sequences degraded by turbulence-like geometric
//! warping, blur and noise.
//!
//! The degradation model is `observed = D(H(ideal)) + noise`: a blur `H`
//! followed by a smooth geometric distortion `D`. The crate inverts it with
//! temporal filtering, total-variation blind deconvolution (for `H`) and
//! diffeomorphic registration (for `D`), combined in two pipelines that
//! differ only in the order of the stages.

pub mod cli;
pub mod convolve;
pub mod deconv;
pub mod diffops;
pub mod error;
pub mod image;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod registration;
pub mod sampling;
pub mod simulate;
pub mod temporal;
pub mod transform;

pub use error::{Error, Result};
pub use image::{BoundaryRule, ScalarImage, VectorField};
