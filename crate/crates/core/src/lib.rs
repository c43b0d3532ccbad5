//! Training-free Bayesianization of low-rank weight adapters.
//!
//! A trained adapter `ΔW = B·A` is turned into a Gaussian posterior whose
//! only free parameter is a shared scale `σq`. The scale is chosen as the
//! largest value that keeps an anchor-set metric within a tolerance of its
//! deterministic value.
//!
//! Modules, bottom-up:
//! - [`linalg`], [`numeric`], [`rng`]: dense matrices, fixed-order
//!   reductions and keyed random streams.
//! - [`adapter`]: regrouping and posterior sampling.
//! - [`netcore`], [`data`]: a small MLP with adapted layers, its trainer and
//!   synthetic datasets.
//! - [`metrics`], [`search`], [`inference`]: evaluation, `σq` selection and
//!   Monte-Carlo prediction.
//! - [`oracle`]: brute-force covariance and KL checks at tiny scale.

// `!(x > 0.0)` style checks deliberately reject NaN; index loops mirror the
// textbook form of the numeric kernels.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod adapter;
pub mod data;
pub mod error;
pub mod inference;
pub mod linalg;
pub mod metrics;
pub mod netcore;
pub mod numeric;
pub mod oracle;
pub mod rng;
pub mod search;

pub use error::{Error, Result};
