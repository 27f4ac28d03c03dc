//! RIFF/WAVE reader for PCM16 and IEEE float32, plus writers used by tools and tests.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{AudioClip, DspError, Result};

const FORMAT_PCM: u16 = 1;
const FORMAT_IEEE_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

struct FmtChunk {
    format_tag: u16,
    channels: u16,
    sample_rate: u32,
    bits: u16,
}

/// Loads a WAV file, downmixes to mono by channel averaging and scales to [-1, 1].
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(DspError::MissingFile(path.to_path_buf()))
        }
        Err(e) => return Err(e.into()),
    };
    read_wav(&bytes)
}

/// Decodes an in-memory WAV file.
pub fn read_wav(bytes: &[u8]) -> Result<AudioClip> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(DspError::MalformedHeader("missing RIFF/WAVE signature".into()));
    }
    let mut pos = 12;
    let mut fmt: Option<FmtChunk> = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_start = pos + 8;
        let body_end = body_start.saturating_add(size);
        match id {
            b"fmt " => {
                if size < 16 || body_end > bytes.len() {
                    return Err(DspError::MalformedHeader("truncated fmt chunk".into()));
                }
                fmt = Some(parse_fmt(&bytes[body_start..body_end])?);
            }
            b"data" => {
                // Some writers leave the data size unset when streaming; clamp to the file.
                data = Some(&bytes[body_start..body_end.min(bytes.len())]);
            }
            _ => {}
        }
        // Chunks are word aligned.
        pos = body_end.saturating_add(size & 1);
    }
    let fmt = fmt.ok_or_else(|| DspError::MalformedHeader("no fmt chunk".into()))?;
    let data = data.ok_or_else(|| DspError::MalformedHeader("no data chunk".into()))?;
    if fmt.channels == 0 || fmt.sample_rate == 0 {
        return Err(DspError::MalformedHeader("zero channels or sample rate".into()));
    }

    let channels = fmt.channels as usize;
    let interleaved: Vec<f32> = match (fmt.format_tag, fmt.bits) {
        (FORMAT_PCM, 16) => data
            .chunks_exact(2)
            .map(|b| i16::from_le_bytes([b[0], b[1]]) as f32 / 32768.0)
            .collect(),
        (FORMAT_IEEE_FLOAT, 32) => data
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]).clamp(-1.0, 1.0))
            .collect(),
        (format_tag, bits) => return Err(DspError::UnsupportedCodec { format_tag, bits }),
    };
    let samples: Vec<f32> = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(channels)
            .map(|frame| (frame.iter().map(|&s| s as f64).sum::<f64>() / channels as f64) as f32)
            .collect()
    };
    if samples.is_empty() {
        return Err(DspError::EmptyClip);
    }
    Ok(AudioClip { samples, sample_rate: fmt.sample_rate })
}

fn parse_fmt(body: &[u8]) -> Result<FmtChunk> {
    let u16_at = |i: usize| u16::from_le_bytes([body[i], body[i + 1]]);
    let mut format_tag = u16_at(0);
    let channels = u16_at(2);
    let sample_rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
    let bits = u16_at(14);
    if format_tag == FORMAT_EXTENSIBLE {
        // cbSize(2) validBits(2) channelMask(4) then the subformat GUID whose
        // first two bytes carry the real format tag.
        if body.len() < 26 {
            return Err(DspError::MalformedHeader("truncated WAVE_FORMAT_EXTENSIBLE".into()));
        }
        format_tag = u16_at(24);
    }
    Ok(FmtChunk { format_tag, channels, sample_rate, bits })
}

fn header(format_tag: u16, channels: u16, sample_rate: u32, bits: u16, data_len: usize) -> Vec<u8> {
    let block_align = channels * bits / 8;
    let mut h = Vec::with_capacity(44);
    h.extend_from_slice(b"RIFF");
    h.extend_from_slice(&(36 + data_len as u32).to_le_bytes());
    h.extend_from_slice(b"WAVEfmt ");
    h.extend_from_slice(&16u32.to_le_bytes());
    h.extend_from_slice(&format_tag.to_le_bytes());
    h.extend_from_slice(&channels.to_le_bytes());
    h.extend_from_slice(&sample_rate.to_le_bytes());
    h.extend_from_slice(&(sample_rate * block_align as u32).to_le_bytes());
    h.extend_from_slice(&block_align.to_le_bytes());
    h.extend_from_slice(&bits.to_le_bytes());
    h.extend_from_slice(b"data");
    h.extend_from_slice(&(data_len as u32).to_le_bytes());
    h
}

/// Writes interleaved samples as 16-bit PCM (values clamped to [-1, 1]).
pub fn write_wav_pcm16(path: impl AsRef<Path>, interleaved: &[f32], channels: u16, sample_rate: u32) -> Result<()> {
    let mut out = header(FORMAT_PCM, channels, sample_rate, 16, interleaved.len() * 2);
    for &s in interleaved {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

/// Writes interleaved samples as IEEE float32.
pub fn write_wav_f32(path: impl AsRef<Path>, interleaved: &[f32], channels: u16, sample_rate: u32) -> Result<()> {
    let mut out = header(FORMAT_IEEE_FLOAT, channels, sample_rate, 32, interleaved.len() * 4);
    for &s in interleaved {
        out.extend_from_slice(&s.to_le_bytes());
    }
    fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pcm16_bytes(samples: &[i16], channels: u16, sample_rate: u32) -> Vec<u8> {
        let mut b = header(FORMAT_PCM, channels, sample_rate, 16, samples.len() * 2);
        for s in samples {
            b.extend_from_slice(&s.to_le_bytes());
        }
        b
    }

    #[test]
    fn silence_mono_pcm16() {
        let clip = read_wav(&pcm16_bytes(&vec![0; 12_000], 1, 12_000)).unwrap();
        assert_eq!(clip.sample_rate, 12_000);
        assert_eq!(clip.samples.len(), 12_000);
        assert!(clip.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn stereo_downmix_cancels() {
        let half = 16384i16;
        let frames: Vec<i16> = (0..100).flat_map(|_| [half, -half]).collect();
        let clip = read_wav(&pcm16_bytes(&frames, 2, 8000)).unwrap();
        assert_eq!(clip.samples.len(), 100);
        assert!(clip.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn full_scale_pcm16() {
        let clip = read_wav(&pcm16_bytes(&[32767, -32768], 1, 8000)).unwrap();
        assert_eq!(clip.samples[0], 32767.0 / 32768.0);
        assert!((clip.samples[0] - 0.99997).abs() < 1e-5);
        assert_eq!(clip.samples[1], -1.0);
    }

    #[test]
    fn float32_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.wav");
        let samples = vec![0.25f32, -0.5, 0.125, 1.0];
        write_wav_f32(&path, &samples, 1, 22_050).unwrap();
        let clip = load_wav(&path).unwrap();
        assert_eq!(clip.samples, samples);
        assert_eq!(clip.sample_rate, 22_050);
    }

    #[test]
    fn distinct_error_kinds() {
        assert!(matches!(load_wav("/definitely/not/here.wav"), Err(DspError::MissingFile(_))));
        assert!(matches!(read_wav(b"RIFX0000WAVE"), Err(DspError::MalformedHeader(_))));
        let mut b = pcm16_bytes(&[0; 4], 1, 8000);
        b[34] = 24; // 24-bit PCM
        assert!(matches!(read_wav(&b), Err(DspError::UnsupportedCodec { format_tag: 1, bits: 24 })));
        let mut b = pcm16_bytes(&[0; 4], 1, 8000);
        b[20] = 2; // ADPCM
        assert!(matches!(read_wav(&b), Err(DspError::UnsupportedCodec { format_tag: 2, .. })));
    }

    #[test]
    fn skips_unknown_chunks() {
        let mut b = pcm16_bytes(&[100, 200], 1, 8000);
        // Insert an odd-sized LIST chunk between fmt and data.
        let list = [b'L', b'I', b'S', b'T', 3, 0, 0, 0, 1, 2, 3, 0];
        b.splice(36..36, list);
        let clip = read_wav(&b).unwrap();
        assert_eq!(clip.samples.len(), 2);
    }
}
