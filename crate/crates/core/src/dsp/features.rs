//! Feature dump format.
//!
//! Flat binary: 16-byte header (magic `LMS0`, `u32` T, `u32` D, `u32`
//! reserved, all little-endian) followed by row-major `T×D` `f32` values.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::dsp::{ClipId, LogMelSpec};
use crate::error::{Error, Result};
use crate::nn::Tensor;

const MAGIC: &[u8; 4] = b"LMS0";

pub fn write_lms(path: &Path, spec: &LogMelSpec) -> Result<()> {
    let (t, d) = (spec.num_frames(), spec.num_bins());
    let mut out = Vec::with_capacity(16 + t * d * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(t as u32).to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for &v in spec.values.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

pub fn read_lms(path: &Path, clip_id: impl Into<String>, frame_hop_s: f64) -> Result<LogMelSpec> {
    let bytes = fs::read(path)?;
    let display = path.display().to_string();
    if bytes.len() < 16 || &bytes[0..4] != MAGIC {
        return Err(Error::format(display, "missing LMS0 magic"));
    }
    let t = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = 16 + t * d * 4;
    if bytes.len() != expected {
        return Err(Error::format(
            display,
            format!("expected {expected} bytes for {t}x{d}, found {}", bytes.len()),
        ));
    }
    let data: Vec<f64> = bytes[16..]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    Ok(LogMelSpec {
        values: Tensor::from_vec(&[t, d], data)?,
        frame_hop_s,
        clip_id: ClipId::new(clip_id),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_preserves_f32_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.lms");
        let mut values = Tensor::from_fn(&[7, 64], |i| (i as f64).sin());
        values.snap_to_f32();
        let spec = LogMelSpec {
            values,
            frame_hop_s: 0.02,
            clip_id: ClipId::new("x"),
        };
        write_lms(&path, &spec).unwrap();
        let back = read_lms(&path, "x", 0.02).unwrap();
        assert_eq!(back.values, spec.values);
    }

    #[test]
    fn header_layout_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.lms");
        let spec = LogMelSpec {
            values: Tensor::zeros(&[3, 2]),
            frame_hop_s: 0.02,
            clip_id: ClipId::new("h"),
        };
        write_lms(&path, &spec).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[0..4], b"LMS0");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 0);
        assert_eq!(bytes.len(), 16 + 6 * 4);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.lms");
        fs::write(&path, b"LMS0\x02\x00\x00\x00\x02\x00\x00\x00\x00\x00\x00\x00ab").unwrap();
        assert!(read_lms(&path, "bad", 0.02).is_err());
    }
}
