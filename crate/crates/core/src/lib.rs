//! Voice activity detection toolkit.
//!
//! The crate is organised as a pipeline:
//!
//! * [`dsp`] — audio ingestion, log-Mel feature extraction, augmentation and
//!   SNR-controlled mixing.
//! * [`nn`] — a small dense-tensor CRNN (forward and backward) with
//!   linear-softmax temporal pooling.
//! * [`train`] — masked BCE losses, Adam, plateau LR scheduling, balanced
//!   sampling and the training loop.
//! * [`distill`] — teacher-student frame label generation (soft, hard and
//!   dynamic schemes) and the on-disk label archive.
//! * [`eval`] — double-threshold post-processing, segment decoding and the
//!   frame/event metric suite.
//! * [`corpus`] — manifests, reference segment files and a synthetic toy
//!   corpus generator for desk-scale experiments.

pub mod corpus;
pub mod distill;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod nn;
pub mod rng;
pub mod train;

pub use dsp::{AudioClip, ClipId, DspConfig, LogMelSpec, MixSpec, SpecAugConfig};
pub use error::{Error, Result};
pub use nn::{CrnnConfig, CrnnModel, FrameProbs, Tensor};
