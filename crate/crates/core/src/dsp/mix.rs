//! SNR-controlled speech/noise mixing.

use crate::dsp::{AudioClip, ClipId, MixSpec};
use crate::error::{Error, Result};

/// Mixing result with the components as they entered the sum, before any
/// peak normalization. Re-measuring the SNR from `speech` and `scaled_noise`
/// reproduces the requested value.
#[derive(Debug, Clone)]
pub struct MixOutput {
    pub mix: AudioClip,
    /// Speech component at mix length.
    pub speech: Vec<f64>,
    /// Noise after looping/truncation and gain.
    pub scaled_noise: Vec<f64>,
    /// Gain applied to the noise.
    pub gain: f64,
    /// Factor the sum was divided by to stay within `[-1, 1]` (1.0 if none).
    pub peak_divisor: f64,
}

impl MixOutput {
    /// SNR in dB recomputed from the stored components.
    pub fn measured_snr_db(&self) -> f64 {
        let p_s = mean_square(&self.speech);
        let p_n = mean_square(&self.scaled_noise);
        10.0 * (p_s / p_n).log10()
    }
}

/// Mixes `noise` into `speech` so the component power ratio equals
/// `spec.snr_db`. Noise shorter than the speech wraps around; longer noise is
/// truncated. The sum is scaled down only if it would clip.
pub fn mix_components(speech: &AudioClip, noise: &AudioClip, spec: &MixSpec) -> Result<MixOutput> {
    if speech.sample_rate != noise.sample_rate {
        return Err(Error::invalid(format!(
            "sample rate mismatch: {} vs {}",
            speech.sample_rate, noise.sample_rate
        )));
    }
    if speech.samples.is_empty() {
        return Err(Error::invalid("speech clip is empty"));
    }
    if noise.samples.is_empty() {
        return Err(Error::invalid("noise clip is empty"));
    }
    if !spec.snr_db.is_finite() {
        return Err(Error::invalid("snr_db must be finite"));
    }
    let n = speech.samples.len();
    let looped: Vec<f64> = noise.samples.iter().cycle().take(n).copied().collect();

    let p_speech = mean_square(&speech.samples);
    let p_noise = mean_square(&looped);
    if p_speech == 0.0 {
        return Err(Error::invalid("speech clip has zero power"));
    }
    if p_noise == 0.0 {
        return Err(Error::invalid("noise clip has zero power"));
    }
    let gain = (p_speech / (p_noise * 10f64.powf(spec.snr_db / 10.0))).sqrt();

    let scaled_noise: Vec<f64> = looped.iter().map(|s| s * gain).collect();
    let mut sum: Vec<f64> = speech
        .samples
        .iter()
        .zip(&scaled_noise)
        .map(|(s, u)| s + u)
        .collect();
    let peak = sum.iter().fold(0.0f64, |m, &s| m.max(s.abs()));
    let peak_divisor = if peak > 1.0 { peak } else { 1.0 };
    if peak_divisor > 1.0 {
        for s in &mut sum {
            *s /= peak_divisor;
        }
    }
    Ok(MixOutput {
        mix: AudioClip {
            samples: sum,
            sample_rate: speech.sample_rate,
            id: ClipId::new(format!("{}+{}@{}dB", speech.id, noise.id, spec.snr_db)),
        },
        speech: speech.samples.clone(),
        scaled_noise,
        gain,
        peak_divisor,
    })
}

/// See [`mix_components`]; returns only the mixture.
pub fn mix_at_snr(speech: &AudioClip, noise: &AudioClip, spec: &MixSpec) -> Result<AudioClip> {
    Ok(mix_components(speech, noise, spec)?.mix)
}

fn mean_square(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|s| s * s).sum::<f64>() / samples.len() as f64
}
