//! Simulation and analysis toolkit for a modular decoy-state BB84 source.
//!
//! The source is built from two Sagnac-loop polarization modulators: one
//! followed by a polarizer acts as a two-level intensity modulator, the other
//! encodes the three-state BB84 alphabet (L, R, D). The crate models the
//! optics in Jones calculus, simulates a lossy link into a passive 60:40
//! polarization receiver, and evaluates patterning statistics, QBERs and
//! finite-key secret key rates for the one-decoy protocol.
//!
//! Module map:
//!
//! * [`optics`]: Jones vectors/operators, modulator output state, optical response.
//! * [`transmitter`]: symbol stream, driver settling model, VOA calibration.
//! * [`link`]: channel loss, receiver arms, click statistics and squashing.
//! * [`engine`]: per-pulse Monte Carlo and aggregate expected-count runs.
//! * [`analysis`]: intensity-ratio sweeps, patterning statistics, slot histograms.
//! * [`security`]: decoy bounds (analytic and LP oracle), key rate, optimizer.
//! * [`session`]: block-segmented QKD sessions and receiver calibration.
//! * [`config`]: the full experiment configuration and its validation.

// `!(x > 0.0)` rejects NaN as well; the negated form is deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod engine;
pub mod error;
pub mod link;
pub mod optics;
pub mod security;
pub mod session;
pub mod transmitter;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
