//! Differentially private optimization built around per-sample gradient
//! scaling instead of hard clipping.
//!
//! The library implements DP-PSASC (non-monotonous adaptive scaling with a
//! tunable scaling coefficient `s`), its momentum variants, and the three
//! baseline per-sample transforms (vanilla clipping, Auto-S/NSGD
//! normalization, DP-PSAC), together with:
//!
//! - exact per-sample gradients for small dense models ([`model`]),
//! - Gaussian noise calibration and a Rényi-DP accountant for the
//!   subsampled Gaussian mechanism ([`privacy`]),
//! - the optimizer loops sharing one step/state machinery ([`optim`]),
//! - dataset loading (IDX) and synthetic generators ([`data`]),
//! - gradient diagnostics: norm distributions, cosine-similarity
//!   histograms, average scaling weights ([`metrics`]),
//! - a reproducible experiment harness with TOML configs, JSONL/CSV
//!   output, sweeps, and convergence-trend ladders ([`harness`]).

pub mod data;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod privacy;
pub mod rng;
pub mod scaling;
pub mod vector;
pub mod verify;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("closed form invalid: s*r = {sr} >= 1")]
    ClosedFormInvalid { sr: f64 },

    #[error("privacy budget unattainable: {0}")]
    UnattainableBudget(String),

    #[error("divergence: loss {loss:.3e} exceeded {factor:.0e} x initial loss {initial:.3e} at step {step}")]
    Divergence {
        loss: f64,
        initial: f64,
        factor: f64,
        step: usize,
    },

    #[error("bad IDX file {path}: {reason}")]
    BadIdx { path: String, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
