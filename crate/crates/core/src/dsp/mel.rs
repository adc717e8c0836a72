//! Log-Mel spectrogram extraction.
//!
//! Frames are left-aligned at multiples of the hop and zero-padded at the
//! clip tail, so `T = ceil(len / hop)` and shifting the input by a whole
//! number of hops shifts the frames by the same count.

use std::sync::Arc;

use rustfft::{num_complex::Complex, Fft, FftPlanner};

use crate::dsp::{AudioClip, DspConfig, LogMelSpec};
use crate::error::{Error, Result};
use crate::nn::Tensor;

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Precomputed window, filterbank and FFT plan for one configuration.
pub struct LogMelExtractor {
    cfg: DspConfig,
    window: Vec<f64>,
    /// `n_mels` rows of `n_fft/2 + 1` triangular weights.
    filters: Vec<Vec<f64>>,
    /// Center frequency (Hz) of each mel filter.
    centers_hz: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl LogMelExtractor {
    pub fn new(cfg: &DspConfig) -> Result<Self> {
        cfg.validate()?;
        let win = cfg.win_samples();
        let window: Vec<f64> = (0..win)
            .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / win as f64).cos())
            .collect();
        let (filters, centers_hz) = mel_filterbank(cfg.n_mels, cfg.n_fft, cfg.target_sr);
        let fft = FftPlanner::new().plan_fft_forward(cfg.n_fft);
        Ok(LogMelExtractor {
            cfg: cfg.clone(),
            window,
            filters,
            centers_hz,
            fft,
        })
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    pub fn extract(&self, clip: &AudioClip) -> Result<LogMelSpec> {
        if clip.samples.is_empty() {
            return Err(Error::invalid("cannot extract features from an empty clip"));
        }
        if clip.sample_rate != self.cfg.target_sr {
            return Err(Error::invalid(format!(
                "clip at {} Hz; resample to {} Hz first",
                clip.sample_rate, self.cfg.target_sr
            )));
        }
        let hop = self.cfg.hop_samples();
        let win = self.cfg.win_samples();
        let n_fft = self.cfg.n_fft;
        let n_bins = n_fft / 2 + 1;
        let n = clip.samples.len();
        let frames = n.div_ceil(hop);

        let mut values = Tensor::zeros(&[frames, self.cfg.n_mels]);
        let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
        let mut power = vec![0.0f64; n_bins];
        for t in 0..frames {
            let start = t * hop;
            for (i, slot) in buf.iter_mut().enumerate() {
                let s = if i < win && start + i < n {
                    clip.samples[start + i] * self.window[i]
                } else {
                    0.0
                };
                *slot = Complex::new(s, 0.0);
            }
            self.fft.process(&mut buf);
            for (k, p) in power.iter_mut().enumerate() {
                *p = buf[k].norm_sqr();
            }
            let row = values.row_mut(t);
            for (m, filter) in self.filters.iter().enumerate() {
                let energy: f64 = filter.iter().zip(&power).map(|(w, p)| w * p).sum();
                row[m] = energy.max(self.cfg.log_floor).ln();
            }
        }
        Ok(LogMelSpec {
            values,
            frame_hop_s: self.cfg.hop_s,
            clip_id: clip.id.clone(),
        })
    }
}

/// One-shot extraction; prefer [`LogMelExtractor`] inside loops.
pub fn logmel(clip: &AudioClip, cfg: &DspConfig) -> Result<LogMelSpec> {
    LogMelExtractor::new(cfg)?.extract(clip)
}

/// Triangular area-unnormalized filters with mel-spaced edges from 0 Hz to
/// Nyquist, evaluated at the FFT bin frequencies.
fn mel_filterbank(n_mels: usize, n_fft: usize, sample_rate: u32) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n_bins = n_fft / 2 + 1;
    let nyquist = f64::from(sample_rate) / 2.0;
    let mel_max = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (n_mels + 1) as f64))
        .collect();
    let mut filters = Vec::with_capacity(n_mels);
    for m in 0..n_mels {
        let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let mut row = vec![0.0f64; n_bins];
        for (k, w) in row.iter_mut().enumerate() {
            let f = k as f64 * f64::from(sample_rate) / n_fft as f64;
            let v = if f <= center {
                (f - lo) / (center - lo)
            } else {
                (hi - f) / (hi - center)
            };
            *w = v.max(0.0);
        }
        filters.push(row);
    }
    let centers = edges[1..=n_mels].to_vec();
    (filters, centers)
}
