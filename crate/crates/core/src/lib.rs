//! Degradation-robust single-shot detection trained with an adversarial
//! output-matching objective.
//!
//! A frozen baseline detector sees clean images; a generator detector with
//! the same architecture sees a 1:1 mix of clean and degraded images and is
//! trained so that a one-layer discriminator cannot tell its raw head outputs
//! apart from the baseline's. The crate contains everything needed to run
//! that experiment end to end at desk scale:
//!
//! - [`synthkit`]: seeded shapes-on-texture detection datasets
//! - [`degrade`]: blur and noise distortions plus the half-degraded mini-batches
//! - [`tinyssd`]: a small two-scale single-shot detector with analytic gradients
//! - [`advtrain`]: training loops for the baseline, fine-tuning and adversarial
//!   modes
//! - [`evalkit`]: average precision and degradation analyses
//! - [`orchestrator`]: config-driven experiment runs behind the `gando` binary

// Validation uses `!(x > 0.0)` style checks so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod advtrain;
pub mod degrade;
pub mod error;
pub mod evalkit;
pub mod fsio;
pub mod geometry;
pub mod image;
pub mod orchestrator;
pub mod rng;
pub mod synthkit;
pub mod tinyssd;

pub use error::{Error, Result};
pub use geometry::BoxCoords;
pub use image::{Image, QualityTag};
