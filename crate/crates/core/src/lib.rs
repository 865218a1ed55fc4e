//! Differentially private imbalanced binary classification.
//!
//! The crate provides, end to end:
//!
//! - privacy-adjusted pre-processing: deterministic oversampling and SMOTE
//!   together with the accountant formulas quantifying how much they
//!   inflate a downstream mechanism's budget, plus a private marginal
//!   synthesizer whose samples cost nothing beyond the fitting budget;
//! - in-processing trainers: class-weighted private ERM by objective
//!   perturbation, class-weighted DP-SGD, and a private bagging ensemble;
//! - a privacy accountant (`dp_core`) with basic and advanced composition,
//!   Laplace/Gaussian calibration, the oversampling/SMOTE adjustments,
//!   kissing-number neighbor-multiplicity bounds, and the intrinsic
//!   bagging budget calculator;
//! - an analytic warm-up for a known 1-d Gaussian mixture (private
//!   threshold classifier, estimation bounds, closed-form imbalanced
//!   metrics);
//! - an evaluation harness: imbalanced metrics, stratified splits, a
//!   multi-seed experiment runner with budget receipts, average-rank
//!   aggregation, and decision-boundary grids.

pub mod analytic;
pub mod data;
pub mod dataset;
pub mod dp_core;
pub mod error;
pub mod eval;
pub mod models;
pub mod preprocess;
pub mod sampling;
pub mod stats;
pub mod synth;

pub use dataset::{Dataset, RowOrigin};
pub use dp_core::PrivacyBudget;
pub use error::{Error, Result};
