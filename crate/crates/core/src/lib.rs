//! Density nowcasts of quarterly GDP growth from monthly indicator panels.
//!
//! Three engines produce a predictive density for each quarter at each
//! intra-quarter information set:
//!
//! - [`dfm`]: a single-factor dynamic factor model bridged to quarterly
//!   growth, with a closed-form Gaussian density.
//! - [`bbb`]: a convolutional network with a mean-field Gaussian posterior
//!   over its weights, trained by Bayes by Backprop.
//! - [`mc_dropout`]: the same network with dropout kept on at prediction.
//!
//! [`fredmd`] turns monthly vintages into stationary, standardized panels;
//! [`statespace`] holds the Kalman filter, smoother and likelihood
//! optimizer; [`nn`] the layers, backpropagation and training loop;
//! [`stats`] kernel densities and moment summaries; [`eval`] the rolling
//! out-of-sample harness and accuracy metrics; [`report`] the SVG/HTML
//! rendering; [`app`] the command implementations behind the `densecast`
//! binary. [`fixture`] generates a synthetic panel for offline runs.

// `!(x > 0.0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// index loops mirror the matrix notation they implement
#![allow(clippy::needless_range_loop)]
#![allow(clippy::type_complexity)]

pub mod app;
pub mod bbb;
pub mod calendar;
pub mod dfm;
pub mod error;
pub mod eval;
pub mod fixture;
pub mod fredmd;
pub mod mc_dropout;
pub mod nn;
pub mod report;
pub mod statespace;
pub mod stats;

pub use error::{Error, Result};
