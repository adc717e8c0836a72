//! RIFF/WAVE PCM-16 reader and writer.
//!
//! Only the subset the toolkit ingests: PCM (format tag 1), 16-bit, mono or
//! stereo. Stereo is averaged down to mono on read.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::dsp::AudioClip;
use crate::error::{Error, Result};

/// Reads a PCM-16 WAV file into a mono clip with amplitudes in `[-1, 1]`.
pub fn read_wav(path: &Path, id: impl Into<String>) -> Result<AudioClip> {
    let bytes = fs::read(path)?;
    let display = path.display().to_string();
    parse_wav(&bytes, id)
        .map_err(|reason| Error::format(display, reason))
}

fn parse_wav(bytes: &[u8], id: impl Into<String>) -> std::result::Result<AudioClip, String> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err("not a RIFF/WAVE file".into());
    }
    let mut pos = 12;
    let mut fmt: Option<(u16, u32, u16)> = None; // channels, sample_rate, bits
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let chunk_id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_start = pos + 8;
        let body_end = body_start.checked_add(size).ok_or("chunk size overflow")?;
        if body_end > bytes.len() {
            return Err("truncated chunk".into());
        }
        match chunk_id {
            b"fmt " => {
                if size < 16 {
                    return Err("fmt chunk too short".into());
                }
                let body = &bytes[body_start..body_end];
                let format_tag = u16::from_le_bytes(body[0..2].try_into().unwrap());
                let channels = u16::from_le_bytes(body[2..4].try_into().unwrap());
                let sample_rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
                let bits = u16::from_le_bytes(body[14..16].try_into().unwrap());
                if format_tag != 1 {
                    return Err(format!("unsupported format tag {format_tag} (want PCM)"));
                }
                if bits != 16 {
                    return Err(format!("unsupported bit depth {bits} (want 16)"));
                }
                if channels != 1 && channels != 2 {
                    return Err(format!("unsupported channel count {channels}"));
                }
                fmt = Some((channels, sample_rate, bits));
            }
            b"data" => data = Some(&bytes[body_start..body_end]),
            _ => {}
        }
        // Chunks are word-aligned.
        pos = body_end + (size & 1);
    }
    let (channels, sample_rate, _) = fmt.ok_or("missing fmt chunk")?;
    let data = data.ok_or("missing data chunk")?;
    let frame_bytes = 2 * channels as usize;
    let n_frames = data.len() / frame_bytes;
    let mut samples = Vec::with_capacity(n_frames);
    for f in 0..n_frames {
        let base = f * frame_bytes;
        let mut acc = 0.0f64;
        for c in 0..channels as usize {
            let s = i16::from_le_bytes(data[base + 2 * c..base + 2 * c + 2].try_into().unwrap());
            acc += f64::from(s) / 32768.0;
        }
        samples.push(acc / f64::from(channels));
    }
    Ok(AudioClip::new(id, sample_rate, samples))
}

/// Writes a mono PCM-16 WAV file. Amplitudes are clamped to `[-1, 1]`.
pub fn write_wav(path: &Path, clip: &AudioClip) -> Result<()> {
    let n = clip.samples.len();
    let data_size = (n * 2) as u32;
    let mut out = Vec::with_capacity(44 + n * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_size).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&clip.sample_rate.to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits per sample
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_size.to_le_bytes());
    for &s in &clip.samples {
        let q = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}
