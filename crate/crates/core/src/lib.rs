//! Robust out-of-distribution detection on synthetic low-dimensional data.
//!
//! The crate bundles a small dense-network engine with exact input and
//! parameter gradients ([`nn`]), synthetic data generators ([`data`]),
//! confidence-score detectors ([`scores`]: MSP, ODIN, Mahalanobis), the
//! white-box attacks that target them ([`attacks`]), robust training
//! objectives ([`train`]: standard, OE, ADV, AOE, ALOE), evaluation metrics
//! ([`metrics`]) and a Monte-Carlo check of a source-to-target robust risk
//! bound on a disk example ([`theory`]).
//!
//! Batch work (scoring, attacking, Monte-Carlo sampling, per-example inner
//! maximization during training) fans out over rayon when the default
//! `parallel` feature is on. All randomness is seeded per item, so serial and
//! parallel builds produce identical numbers.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod attacks;
pub mod benchmark;
pub mod data;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod par;
pub mod scores;
pub mod seed;
pub mod textio;
pub mod theory;
pub mod train;

pub use error::{Error, Result};
