//! Overt-to-covert speech EEG decoding.
//!
//! The crate covers the whole offline pipeline:
//!
//! - [`signal`]: notch and Butterworth band-pass filtering, FastICA artifact
//!   removal, epoching with pre-stimulus baseline correction;
//! - [`features`]: Hilbert envelope (ENV) and temporal fine structure (TFS)
//!   features, and envelope correlation between conditions;
//! - [`nn`]: LSTM/GRU/bidirectional classifiers trained from scratch with
//!   backpropagation through time and Adam;
//! - [`harness`]: stratified cross-validation, hold-out splits, paired
//!   t-tests with Bonferroni correction and experiment reports;
//! - [`transfer`]: freezing the recurrent layers of an overt-speech model and
//!   fine-tuning its dense head on covert-speech budgets;
//! - [`synth`]: a deterministic paired overt/covert EEG generator.

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod features;
pub mod harness;
pub mod io;
pub mod nn;
pub mod rng;
pub mod signal;
pub mod synth;
pub mod transfer;

pub use error::{Error, Result};
pub use features::FeatureTensor;
pub use nn::{LayerSpec, RecurrentModel};

pub use signal::{Condition, EegRecording, EpochSet};
