//! Contextual Bayesian optimization with active task selection.
//!
//! The crate implements the full loop of Bayesian optimization for contextual
//! policy search: a Gaussian process surrogate over the joint context-parameter
//! space ([`gp`]), acquisition functions ranging from GP-UCB to an
//! information-theoretic objective that selects the task *and* the parameters
//! of the next trial jointly ([`acquisition`]), the derivative-free optimizers
//! used to maximize those acquisition surfaces ([`optimizers`]), a weighted
//! maximum-likelihood policy update ([`policy`]), an analytic ball-throw
//! benchmark task ([`environment`]), and an experiment harness with CSV/SVG
//! output ([`harness`]).
//!
//! All randomness flows through explicitly passed RNGs; given a seed, every
//! experiment output is reproducible byte for byte.

pub mod acquisition;
pub mod environment;
pub mod error;
pub mod gp;
pub mod harness;
pub mod optimizers;
pub mod policy;
pub mod stats;

pub use error::{Error, Result};
pub use optimizers::BoxBounds;
