//! Federated contrastive pre-training laboratory for small speech classifiers.
//!
//! The crate provides the full pipeline as composable modules:
//!
//! * [`tensor`] — dense tensors with reverse-mode autodiff and SGD/Adam,
//! * [`dsp`] — WAV I/O and the 20-dim MFCC front-end,
//! * [`cpc`] — the contrastive predictive coding model and its training loop,
//! * [`classifier`] — CNN and CNN-LSTM downstream classifiers,
//! * [`fed`] — FedAvg orchestration, the weights file format and wire protocol,
//! * [`corpus`] — a synthetic, label-controllable speech corpus generator,
//! * [`metrics`] — confusion matrices, macro precision/recall/F1 and reports,
//! * [`pipeline`] — end-to-end experiment drivers shared by the CLI and tests.
//!
//! Data-parallel inner loops (batch gradients, per-utterance synthesis and
//! feature extraction, per-client training) run on rayon when the default
//! `parallel` feature is enabled and fall back to sequential execution when it
//! is disabled. Both paths produce bit-identical results: parallel maps are
//! index-ordered and every reduction runs left-to-right on the collected
//! per-item outputs.

pub mod classifier;
pub mod corpus;
pub mod cpc;
pub mod dsp;
pub mod error;
pub mod fed;
pub mod gradcheck;
pub mod metrics;
pub mod par;
pub mod pipeline;
pub mod rng;
pub mod tensor;

pub use error::{CoreError, DecodeError, ProtocolError, Result};
