//! Subsampling pseudo-marginal MCMC with difference-estimator control variates.
//!
//! This crate estimates Bayesian posteriors over tall datasets without
//! touching every observation at every MCMC iteration. The log-likelihood is
//! replaced by an unbiased subsample estimate built on a *difference
//! estimator*: a cheap deterministic proxy — a second-order Taylor expansion
//! of the log-density around cluster centroids — absorbs the bulk of the
//! signal, and a small simple random sample corrects the remainder. The
//! resulting noisy likelihood is bias-corrected and embedded in a
//! pseudo-marginal Metropolis–Hastings chain whose subsample can be refreshed
//! infrequently and grown adaptively until the estimator variance falls under
//! a target.
//!
//! Modules follow the pipeline:
//!
//! * [`model`] — observation-level log-densities and data-space derivatives
//! * [`clustering`] — ε-ball clustering, standardization, and proxy moments
//! * [`estimator`] — subsample difference estimator of the log-likelihood
//! * [`sampler`] — exact and pseudo-marginal Metropolis–Hastings
//! * [`diagnostics`] — inefficiency factors and chain comparisons
//! * [`data`] — dataset container, CSV ingestion, synthetic data
//! * [`cli`] — command-line front end

pub mod cli;
pub mod clustering;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod estimator;
pub(crate) mod linalg;
pub mod model;
pub mod sampler;

pub use error::{Error, Result};
