//! Neural ridge features with data-driven hidden weights.
//!
//! Hidden weights `(a, b)` are sampled from distributions built from function
//! values and derivatives; outer weights are fit by ridge regression.

// `!(x > 0.0)` is used deliberately so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod activation;
pub mod benchmarks;
pub mod data;
mod error;
pub mod experiment;
pub mod geometry;
pub mod kernels;
pub mod regression;
pub mod samplers;

pub use activation::{ActivationSpec, PsiTable};
pub use data::DataSet;
pub use error::{Error, Result};
pub use geometry::{Neuron, RngStream};
pub use regression::{FitReport, RidgeModel};
pub use samplers::{Sampled, SamplerSpec};
