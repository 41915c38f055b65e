//! Invariant-feature subspace recovery (ISR) for domain generalization.
//!
//! Multi-environment data with spurious correlations can be decomposed into an
//! invariant-feature subspace (class-conditional distribution identical across
//! environments) and a spurious-feature subspace (environment-dependent). The
//! fitters in [`isr`] recover the invariant subspace from first- or second-order
//! moments of the per-environment data and return an orthonormal projection;
//! linear predictors trained on the projected features generalize to test
//! environments where the spurious correlations are broken.
//!
//! The crate also ships the synthetic linear benchmarks the method family is
//! evaluated on ([`benchgen`]), plain ERM baselines and closed-form oracles
//! ([`predictors`]), an environment-complexity sweep harness ([`harness`]), and
//! a feature-file post-processing path ([`postprocess`]) for applying ISR on
//! top of externally extracted features. The `isr` binary exposes all of it on
//! the command line.

pub mod benchgen;
pub mod config;
pub mod datamodel;
pub mod error;
pub mod harness;
pub mod isr;
pub mod numerics;
pub mod postprocess;
pub mod predictors;
pub mod table;

pub use error::{IsrError, Result};
