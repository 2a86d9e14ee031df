//! Beam-sequence simulation and GRU-based proactive hand-off prediction for
//! mmWave street deployments.
//!
//! The pipeline runs in three stages:
//!
//! 1. [`scenario`] walks a vehicle down a street past several base stations,
//!    synthesizes each link's wideband channel ([`channel`]) and picks the
//!    best codebook beam ([`codebook`]) once per beam coherence time. Each
//!    step is labeled with the base station that serves the following step.
//! 2. [`dataset`] stores those sequences as line-oriented text.
//! 3. [`model`] and [`train`] fit an embedding + GRU + softmax classifier that
//!    predicts the next serving base station from the beams seen so far.

// `!(x > 0.0)` is used on purpose so NaN fails validation too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod checkpoint;
pub mod codebook;
pub mod dataset;
pub mod error;
pub mod geometry;
pub mod manifest;
pub mod model;
pub mod optim;
pub mod plot;
pub mod rng;
pub mod scenario;
pub mod train;

pub use error::{Error, Result};
