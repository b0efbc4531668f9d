//! Closed-form grant-free device activity detection for massive MIMO.
//!
//! Devices that were active before leave the network with prior channel state
//! information. When a subset of them wakes up and transmits its unique,
//! non-orthogonal preamble, the receiver stacks the preamble observations,
//! solves one structured least-squares problem for the activity
//! coefficients and thresholds their magnitudes.
//!
//! The crate covers the full simulation chain:
//!
//! - [`geometry`]: AP and device placement for co-located and cell-free layouts.
//! - [`channel`]: path loss, shadowing, Rayleigh fading and the prior-CSI matrix.
//! - [`pilots`]: the random complex Gaussian preamble book and its Gram matrix.
//! - [`signal`]: activity draws and the stacked received signal.
//! - [`detector`]: the structured estimator and per-device thresholding.
//! - [`metrics`]: miss-detection / false-alarm probabilities, floors and ROC sweeps.
//! - [`harness`]: seeded Monte-Carlo campaigns over scenario matrices.
//! - [`csi`]: channel-recurrence correlation and ECDF analysis of snapshot dumps.
//!
//! [`oracle`] holds the dense reference constructions used to cross-check the
//! structured solver, and [`config`] / [`cli`] implement the command-line tool.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod cli;
pub mod config;
pub mod csi;
pub mod detector;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod metrics;
pub mod oracle;
pub mod pilots;
pub mod rng;
pub mod signal;

pub use error::{Error, Result};

/// Complex double used throughout the crate.
pub use faer::c64;

pub(crate) fn norm2(v: impl IntoIterator<Item = c64>) -> f64 {
    v.into_iter().map(|z| z.norm_sqr()).sum()
}
