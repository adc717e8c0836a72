//! Training-time spectrogram augmentation.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dsp::{LogMelSpec, SpecAugConfig};
use crate::nn::Tensor;

/// A drawn mask rectangle: `[start, start + width)` along one axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct MaskDraw {
    pub start: usize,
    pub width: usize,
}

/// Replays the mask draws for a given config and axis lengths. Draw order is
/// fixed: all time masks first, then all frequency masks; per mask the width
/// is drawn before the start.
pub(crate) fn draw_masks(
    cfg: &SpecAugConfig,
    t: usize,
    d: usize,
) -> (Vec<MaskDraw>, Vec<MaskDraw>) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut draw_axis = |count: usize, max_width: usize, len: usize, rng: &mut ChaCha8Rng| {
        (0..count)
            .map(|_| {
                let width = rng.random_range(0..=max_width).min(len);
                let start = rng.random_range(0..=len - width);
                MaskDraw { start, width }
            })
            .collect::<Vec<_>>()
    };
    let time = draw_axis(cfg.gamma_t, cfg.eta_t0, t, &mut rng);
    let freq = draw_axis(cfg.gamma_f, cfg.eta_f0, d, &mut rng);
    (time, freq)
}

/// Zeroes `gamma_t` random time stripes and `gamma_f` random frequency
/// stripes. Widths are uniform integers in `[0, eta0]` (clamped to the axis),
/// starts uniform over the valid range; deterministic for a given seed.
pub fn spec_augment(spec: &LogMelSpec, cfg: &SpecAugConfig) -> LogMelSpec {
    let (t, d) = (spec.num_frames(), spec.num_bins());
    let (time_masks, freq_masks) = draw_masks(cfg, t, d);
    let mut values = spec.values.clone();
    for m in &time_masks {
        for row in m.start..m.start + m.width {
            values.row_mut(row).fill(0.0);
        }
    }
    for m in &freq_masks {
        for row in 0..t {
            values.row_mut(row)[m.start..m.start + m.width].fill(0.0);
        }
    }
    LogMelSpec {
        values,
        frame_hop_s: spec.frame_hop_s,
        clip_id: spec.clip_id.clone(),
    }
}

/// Rolls the frame axis circularly by `round(N(0, sigma))` frames; positive
/// draws move content toward later frames.
pub fn time_shift(spec: &LogMelSpec, sigma: f64, rng_seed: u64) -> LogMelSpec {
    assert!(sigma >= 0.0, "sigma must be non-negative");
    let t = spec.num_frames();
    if sigma == 0.0 || t == 0 {
        return spec.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let shift = Normal::new(0.0, sigma).unwrap().sample(&mut rng).round() as i64;
    roll_frames(spec, shift)
}

/// Circular roll of the frame axis by `shift` (may be negative).
pub fn roll_frames(spec: &LogMelSpec, shift: i64) -> LogMelSpec {
    let t = spec.num_frames() as i64;
    let d = spec.num_bins();
    let mut values = Tensor::zeros(&[t as usize, d]);
    for out_row in 0..t {
        let src = (out_row - shift).rem_euclid(t) as usize;
        values
            .row_mut(out_row as usize)
            .copy_from_slice(spec.values.row(src));
    }
    LogMelSpec {
        values,
        frame_hop_s: spec.frame_hop_s,
        clip_id: spec.clip_id.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::ClipId;

    fn ones_spec(t: usize, d: usize) -> LogMelSpec {
        LogMelSpec {
            values: Tensor::from_fn(&[t, d], |_| 1.0),
            frame_hop_s: 0.02,
            clip_id: ClipId::new("x"),
        }
    }

    #[test]
    fn no_masks_is_identity() {
        let spec = ones_spec(50, 64);
        let cfg = SpecAugConfig {
            gamma_t: 0,
            gamma_f: 0,
            rng_seed: 9,
            ..SpecAugConfig::default()
        };
        assert_eq!(spec_augment(&spec, &cfg).values, spec.values);
    }

    #[test]
    fn zero_width_masks_are_identity() {
        let spec = ones_spec(50, 64);
        let cfg = SpecAugConfig {
            eta_t0: 0,
            eta_f0: 0,
            gamma_t: 3,
            gamma_f: 3,
            rng_seed: 9,
            ..SpecAugConfig::default()
        };
        assert_eq!(spec_augment(&spec, &cfg).values, spec.values);
    }

    #[test]
    fn zeroed_cells_match_replayed_mask_union() {
        let spec = ones_spec(100, 64);
        for seed in 0..20 {
            let cfg = SpecAugConfig {
                rng_seed: seed,
                ..SpecAugConfig::default()
            };
            let out = spec_augment(&spec, &cfg);

            // Oracle: replay the seeded draws and rasterize the union.
            let (tm, fm) = draw_masks(&cfg, 100, 64);
            let mut masked = vec![[false; 64]; 100];
            for m in &tm {
                for row in masked.iter_mut().skip(m.start).take(m.width) {
                    row.fill(true);
                }
            }
            for m in &fm {
                for row in masked.iter_mut() {
                    row[m.start..m.start + m.width].fill(true);
                }
            }
            let expect_zeroed: usize =
                masked.iter().map(|r| r.iter().filter(|&&b| b).count()).sum();
            let got_zeroed = out.values.data().iter().filter(|&&v| v == 0.0).count();
            assert_eq!(got_zeroed, expect_zeroed, "seed {seed}");

            // Unmasked cells must be untouched.
            for t in 0..100 {
                for d in 0..64 {
                    let v = out.values.at2(t, d);
                    assert_eq!(v, if masked[t][d] { 0.0 } else { 1.0 });
                }
            }
        }
    }

    #[test]
    fn masks_wider_than_axis_clamp() {
        let spec = ones_spec(3, 4);
        let cfg = SpecAugConfig {
            gamma_t: 2,
            eta_t0: 100,
            gamma_f: 0,
            eta_f0: 0,
            rng_seed: 1,
        };
        let out = spec_augment(&spec, &cfg); // must not panic
        assert_eq!(out.num_frames(), 3);
    }

    #[test]
    fn determinism_per_seed() {
        let spec = ones_spec(80, 64);
        let cfg = SpecAugConfig {
            rng_seed: 77,
            ..SpecAugConfig::default()
        };
        assert_eq!(
            spec_augment(&spec, &cfg).values,
            spec_augment(&spec, &cfg).values
        );
    }

    #[test]
    fn time_shift_zero_sigma_is_identity() {
        let spec = ones_spec(10, 4);
        assert_eq!(time_shift(&spec, 0.0, 5).values, spec.values);
    }

    #[test]
    fn roll_moves_rows_circularly() {
        let spec = LogMelSpec {
            values: Tensor::from_fn(&[10, 2], |i| (i / 2) as f64),
            frame_hop_s: 0.02,
            clip_id: ClipId::new("r"),
        };
        let out = roll_frames(&spec, 3);
        for i in 0..10usize {
            let src = (i + 10 - 3) % 10;
            assert_eq!(out.values.at2(i, 0), src as f64);
        }
        // Inverse composition.
        let back = roll_frames(&out, -3);
        assert_eq!(back.values, spec.values);
    }
}
