//! Right-invariant extended Kalman filter on SE_3(3) with a slip-velocity
//! disturbance observer for differential-drive robots.
//!
//! The state `(R, v, p, u)` holds orientation, velocity, position and the
//! world-frame slip velocity. IMU samples drive the prediction; wheel encoders
//! together with the zero lateral/vertical velocity constraint provide a
//! right-invariant correction of `v + u`. A chi-square test on `u` flags slip.

// `!(x > 0.0)` rejects NaN along with the out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod filter;
pub mod io;
pub mod liegroup;
pub mod metrics;
pub mod models;
pub mod pipeline;
pub mod sim;
pub mod slipdetect;
pub mod stream;

pub use error::{Error, Result};
pub use filter::{Estimator, FilterMode, FilterState};
pub use liegroup::{GroupElement, TangentVec};
pub use models::{EncoderSample, ImuSample, NoiseConfig};
