//! Bayesian support vector machine classification.
//!
//! The hinge loss of the classical SVM is the negative log of a genuine
//! (pseudo-)likelihood once each observation is augmented with a latent
//! scale variable, which turns the objective into a conditionally Gaussian
//! model. This crate exploits that representation two ways:
//!
//! * **Variational inference** ([`vb`]): fast deterministic coordinate
//!   ascent with a monotone lower bound, for a fixed ridge penalty
//!   ([`vb::fit_vb_basic`]), a self-tuning penalty via a random-effect
//!   variance ([`vb::fit_vb_mixed`]), spike-and-slab variable selection
//!   ([`vb::fit_vb_sparse`]), and joint imputation of missing predictors
//!   ([`vb::fit_vb_missing`]).
//! * **Gibbs sampling** ([`mcmc`]): exact-posterior counterparts of the
//!   same models, used for calibration checks and uncertainty reporting.
//!
//! Supporting modules handle datasets with missing entries ([`data`]),
//! CSV input/output ([`io`]), synthetic benchmarks ([`simulate`]),
//! repeated holdout evaluation ([`evaluate`]), and model persistence
//! ([`model`]).

pub mod data;
pub mod evaluate;
pub mod dist;
pub mod error;
pub mod io;
pub mod linalg;
pub mod mcmc;
pub mod model;
pub mod quad;
pub mod rng;
pub mod simulate;
pub mod special;
pub mod vb;

pub use error::{Error, Result};
