//! Deep ensembles of self-normalizing networks for tabular regression with
//! predictive uncertainty.
//!
//! The crate is organized bottom-up:
//!
//! - [`numerics`]: dense matrices and a reverse-mode gradient tape
//! - [`preprocess`]: imputation, quantile binning, standardization, PCA
//! - [`model`]: the two-head SELU network
//! - [`losses`]: Gaussian NLL, supervised contrastive and crossentropy heads
//! - [`optim`]: Rectified Adam with Lookahead
//! - [`ensemble`]: stratified member training and total-variance aggregation
//! - [`eval`]: error-retention curves and R-AUC MSE
//! - [`data`]: CSV I/O, synthetic shifted data, model containers, the
//!   extrapolation demo
//! - [`plot`]: SVG charts
//! - [`config`]: the `key = value` configuration grammar
//! - [`cli`]: the command-line front end

mod codec;
pub mod error;
pub mod numerics;
pub mod preprocess;
pub mod model;
pub mod losses;
pub mod optim;
pub mod ensemble;
pub mod eval;
pub mod data;
pub mod plot;
pub mod config;
pub mod cli;

pub use error::{ContainerError, Error, Result};
