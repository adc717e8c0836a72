//! Deterministic audio front-end.
//!
//! Ingestion (PCM-16 WAV), band-limited resampling, log-Mel spectrogram
//! extraction, training-time augmentation (time-frequency masking, circular
//! time shift) and SNR-controlled mixing for corpus synthesis. Every
//! operation here is a pure function of its inputs and an explicit seed.

mod augment;
mod features;
mod mel;
mod mix;
mod resample;
pub mod wav;

pub use augment::{spec_augment, time_shift};
pub use features::{read_lms, write_lms};
pub use mel::{logmel, LogMelExtractor};
pub use mix::{mix_at_snr, mix_components, MixOutput};
pub use resample::resample;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Opaque clip identifier.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClipId(pub String);

impl ClipId {
    pub fn new(id: impl Into<String>) -> Self {
        ClipId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for ClipId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ClipId {
    fn from(s: &str) -> Self {
        ClipId(s.to_owned())
    }
}

/// Mono waveform with amplitudes in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub id: ClipId,
}

impl AudioClip {
    pub fn new(id: impl Into<String>, sample_rate: u32, samples: Vec<f64>) -> Self {
        AudioClip {
            samples,
            sample_rate,
            id: ClipId::new(id),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    /// Mean squared amplitude over the full clip.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64
    }
}

/// Log-Mel spectrogram: `T` frames by `D` mel bins, natural-log power.
#[derive(Debug, Clone, PartialEq)]
pub struct LogMelSpec {
    /// `[T, D]` matrix.
    pub values: Tensor,
    /// Seconds per frame.
    pub frame_hop_s: f64,
    pub clip_id: ClipId,
}

impl LogMelSpec {
    pub fn num_frames(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn num_bins(&self) -> usize {
        self.values.shape()[1]
    }
}

/// Front-end configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DspConfig {
    pub target_sr: u32,
    pub n_fft: usize,
    pub win_s: f64,
    pub hop_s: f64,
    pub n_mels: usize,
    /// Smallest power admitted before the log.
    pub log_floor: f64,
}

impl Default for DspConfig {
    fn default() -> Self {
        DspConfig {
            target_sr: 22050,
            n_fft: 2048,
            win_s: 0.040,
            hop_s: 0.020,
            n_mels: 64,
            log_floor: 1e-10,
        }
    }
}

impl DspConfig {
    pub fn win_samples(&self) -> usize {
        (self.win_s * f64::from(self.target_sr)).round() as usize
    }

    pub fn hop_samples(&self) -> usize {
        (self.hop_s * f64::from(self.target_sr)).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.target_sr == 0 {
            return Err(Error::invalid("target_sr must be positive"));
        }
        if self.win_samples() > self.n_fft {
            return Err(Error::invalid(format!(
                "window of {} samples exceeds n_fft {}",
                self.win_samples(),
                self.n_fft
            )));
        }
        if self.hop_s > self.win_s {
            return Err(Error::invalid("hop_s must not exceed win_s"));
        }
        Ok(())
    }
}

/// Time-frequency masking parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpecAugConfig {
    /// Number of time masks.
    pub gamma_t: usize,
    /// Max time-mask width in frames.
    pub eta_t0: usize,
    /// Number of frequency masks.
    pub gamma_f: usize,
    /// Max frequency-mask width in bins.
    pub eta_f0: usize,
    pub rng_seed: u64,
}

impl Default for SpecAugConfig {
    fn default() -> Self {
        SpecAugConfig {
            gamma_t: 2,
            eta_t0: 60,
            gamma_f: 2,
            eta_f0: 8,
            rng_seed: 0,
        }
    }
}

/// One speech/noise mixing job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixSpec {
    pub speech_clip_id: ClipId,
    pub noise_clip_id: ClipId,
    pub snr_db: f64,
    pub rng_seed: u64,
}
