//! Differentiable Neural Computer workbench: configurable planning budgets,
//! temperature-recalibrated and adaptively extended external memory, four
//! algorithmic task generators with exact oracles, a curriculum trainer, and
//! an evaluation harness.
//!
//! Module map:
//! - [`memory`] — external memory state, addressing, runtime extension
//! - [`controller`] — recurrent controller and interface parsing
//! - [`model`] — parameters plus the single-timestep update (plain + taped)
//! - [`tape`] — reverse-mode autodiff
//! - [`episode`] — phase state machine for one task instance
//! - [`budget`] — planning-budget policies and the stochastic extension
//! - [`tasks`] — generators, encoders, oracles, answer checkers
//! - [`trainer`] — curriculum training loop, loss, FLOP accounting
//! - [`eval`] — accuracy curves A_n(p), p*, generalization sweeps
//! - [`config`] / [`manifest`] — run configuration and reproducibility glue

pub mod budget;
pub mod config;
pub mod controller;
pub mod episode;
pub mod error;
pub mod eval;
pub mod manifest;
pub mod math;
pub mod memory;
pub mod model;
pub mod rng;
pub mod tape;
pub mod tasks;
pub mod tensor;
pub mod trainer;

pub use error::{DncError, Result};
