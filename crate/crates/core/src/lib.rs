//! Finite-sample confidence regions for linear-regression parameters built
//! from the residual intervals of an arbitrary predictor.
//!
//! The region `{theta : C(theta) >= k}` counts how many test points have
//! `theta . x_i` inside the interval spanned by their target and prediction.
//! Membership is a single pass over the test split; linear objectives over
//! the region are solved exactly as a mixed-binary program by [`milp`].

pub mod applications;
pub mod coverage;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod milp;
pub mod region;
pub mod rng;
pub mod synth;

pub use error::{Result, RiiError};
