//! Band-limited sample-rate conversion.

use std::f64::consts::PI;

use crate::dsp::AudioClip;
use crate::error::{Error, Result};

/// Half-width of the interpolation kernel in input samples.
const KERNEL_HALF_WIDTH: usize = 48;

/// Resamples a clip with a Hann-windowed sinc kernel, cutoff at the lower of
/// the two Nyquist frequencies. Output length rounds `n · target/src`, so the
/// duration is preserved to within one sample period.
pub fn resample(clip: &AudioClip, target_sr: u32) -> Result<AudioClip> {
    if clip.samples.is_empty() {
        return Err(Error::invalid("cannot resample an empty clip"));
    }
    if clip.sample_rate == 0 || target_sr == 0 {
        return Err(Error::invalid("sample rates must be positive"));
    }
    if clip.sample_rate == target_sr {
        return Ok(clip.clone());
    }

    let src = f64::from(clip.sample_rate);
    let dst = f64::from(target_sr);
    let n_in = clip.samples.len();
    let n_out = ((n_in as u64 * u64::from(target_sr) + u64::from(clip.sample_rate) / 2)
        / u64::from(clip.sample_rate)) as usize;

    // Cutoff in cycles per input sample; 0.5 is the input Nyquist.
    let cutoff = 0.5 * (dst / src).min(1.0);
    let half = KERNEL_HALF_WIDTH as f64;

    let mut out = Vec::with_capacity(n_out);
    for i in 0..n_out {
        let center = i as f64 * src / dst;
        let k_lo = ((center - half).ceil() as isize).max(0) as usize;
        let k_hi = ((center + half).floor() as isize).min(n_in as isize - 1) as usize;
        let mut acc = 0.0;
        for k in k_lo..=k_hi {
            let u = k as f64 - center;
            acc += clip.samples[k] * kernel(u, cutoff, half);
        }
        out.push(acc);
    }
    Ok(AudioClip {
        samples: out,
        sample_rate: target_sr,
        id: clip.id.clone(),
    })
}

#[inline]
fn kernel(u: f64, cutoff: f64, half: f64) -> f64 {
    let window = 0.5 + 0.5 * (PI * u / half).cos();
    2.0 * cutoff * sinc(2.0 * cutoff * u) * window
}

#[inline]
fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::{num_complex::Complex, FftPlanner};

    fn sine(freq: f64, sr: u32, dur_s: f64) -> AudioClip {
        let n = (dur_s * f64::from(sr)).round() as usize;
        AudioClip::new(
            "sine",
            sr,
            (0..n)
                .map(|i| (2.0 * PI * freq * i as f64 / f64::from(sr)).sin())
                .collect(),
        )
    }

    /// Frequency of the magnitude-spectrum peak, via zero-padded FFT.
    fn dominant_frequency(clip: &AudioClip) -> f64 {
        let n_fft = 65536;
        let mut buf: Vec<Complex<f64>> = clip
            .samples
            .iter()
            .take(n_fft)
            .map(|&s| Complex::new(s, 0.0))
            .collect();
        buf.resize(n_fft, Complex::new(0.0, 0.0));
        FftPlanner::new().plan_fft_forward(n_fft).process(&mut buf);
        let peak = (1..n_fft / 2)
            .max_by(|&a, &b| buf[a].norm().partial_cmp(&buf[b].norm()).unwrap())
            .unwrap();
        peak as f64 * f64::from(clip.sample_rate) / n_fft as f64
    }

    #[test]
    fn identity_rate_is_bitwise() {
        let clip = sine(440.0, 22050, 0.5);
        let out = resample(&clip, 22050).unwrap();
        assert_eq!(out.samples, clip.samples);
    }

    #[test]
    fn downsample_preserves_tone_frequency() {
        let clip = sine(1000.0, 44100, 1.0);
        let out = resample(&clip, 22050).unwrap();
        assert_eq!(out.sample_rate, 22050);
        let f = dominant_frequency(&out);
        assert!((f - 1000.0).abs() <= 1.0, "peak at {f} Hz");
    }

    #[test]
    fn upsample_preserves_tone_frequency() {
        let clip = sine(1000.0, 8000, 1.0);
        let out = resample(&clip, 22050).unwrap();
        let f = dominant_frequency(&out);
        assert!((f - 1000.0).abs() <= 1.0, "peak at {f} Hz");
    }

    #[test]
    fn zeros_stay_zero_with_rounded_length() {
        let clip = AudioClip::new("z", 8000, vec![0.0; 100]);
        let out = resample(&clip, 22050).unwrap();
        assert_eq!(out.samples.len(), 276); // round(100 * 22050 / 8000)
        assert!(out.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn empty_input_is_rejected() {
        let clip = AudioClip::new("e", 8000, vec![]);
        assert!(matches!(
            resample(&clip, 22050),
            Err(crate::error::Error::InvalidInput(_))
        ));
    }

    #[test]
    fn duration_preserved_within_one_sample() {
        for (n, src, dst) in [(1000, 44100, 22050), (333, 8000, 22050), (22050, 22050, 16000)] {
            let clip = AudioClip::new("d", src, vec![0.1; n]);
            let out = resample(&clip, dst).unwrap();
            let d_in = n as f64 / f64::from(src);
            let d_out = out.samples.len() as f64 / f64::from(dst);
            assert!((d_in - d_out).abs() <= 1.0 / f64::from(dst));
        }
    }
}
