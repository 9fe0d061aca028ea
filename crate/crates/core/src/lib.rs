//! Max-min beam coverage with movable-antenna linear arrays.
//!
//! The array weights and the antenna positions are optimized alternately.
//! The weight step lifts `ω` to `V = ωω^H` and runs successive convex
//! approximation on an SDP with a linearized rank-one penalty; the position
//! step replaces every pairwise cosine of the beam gain by a quadratic
//! minorant and solves the resulting concave QCQP.
//!
//! ```no_run
//! use macover_core::{ao_pipeline, array_model::{ArrayConfig, CoverageSpec}};
//!
//! let lambda = 0.3;
//! let cfg = ArrayConfig::new(8, 8.0 * lambda, lambda, lambda / 2.0).unwrap();
//! let spec = CoverageSpec::with_default_density(&[(0.0, std::f64::consts::PI)]).unwrap();
//! let result = ao_pipeline::run_ao(&cfg, &spec, &ao_pipeline::AoConfig::default()).unwrap();
//! println!("max-min gain: {:.2} dB", result.min_gain_db());
//! ```

pub mod ao_pipeline;
pub mod array_model;
pub mod convex_core;
mod error;
pub mod position_optimizer;
pub mod weight_optimizer;

pub use error::{Error, ModelError, Result, SolverError};

/// `10·log10(gain)`.
pub fn to_db(gain: f64) -> f64 {
    10.0 * gain.log10()
}
