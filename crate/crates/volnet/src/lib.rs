//! Dynamic horizon-specific volatility networks and their pricing in the
//! cross-section of stock returns.
//!
//! The crate estimates a locally stationary time-varying-parameter VAR on a
//! panel of daily realized volatilities with kernel-weighted quasi-Bayesian
//! local likelihood, converts posterior coefficient draws into band-limited
//! generalized forecast-error variance decompositions (directed network
//! adjacency matrices per day and frequency band), aggregates them into
//! total/TO/FROM/net connectedness series, builds directional network risk
//! factors from size × connectedness double sorts, and runs the
//! cross-sectional test battery (Fama-MacBeth with Newey-West and Shanken
//! corrections, quintile portfolio sorts, control-factor construction).
//! A Monte-Carlo simulator of a two-tree endowment economy with self- and
//! mutually exciting volatility jumps verifies the model-side propositions.
//!
//! Start with the runnable examples (`cargo run --example full_pipeline`),
//! or the `volnet` binary for the file-in/file-out pipeline.

pub mod connectedness;
pub mod data;
pub mod demo;
pub mod econsim;
pub mod error;
pub mod factors;
pub mod pipeline;
pub mod pricing;
pub mod qbll;
pub mod rng;
pub mod spectral;

pub use error::{Error, Result};
