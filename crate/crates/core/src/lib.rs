//! Common causal support diagnostics with Bayesian additive regression trees.
//!
//! A single BART fit of the outcome on covariates and treatment yields
//! posterior draws of both potential-outcome surfaces for every unit. Units
//! whose counterfactual surface is much less certain than what is typical for
//! their observed arm lack common causal support and can be discarded before
//! estimating effects. Propensity-score baselines, shallow profiling trees
//! and a simulation harness live alongside.

pub mod bart;
pub mod data;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod parallel;
pub mod pipeline;
pub mod profile;
pub mod simulate;
pub mod support;

pub use bart::{fit_bart, BartConfig, PosteriorSurface};
pub use data::{load_csv, Dataset, Group, Seed};
pub use error::{Error, Result};
pub use parallel::Execution;
