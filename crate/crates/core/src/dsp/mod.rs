//! Audio ingestion and the two feature frontends.
//!
//! The convnet frontend is a decibel-scaled 96-bin log-mel spectrogram with
//! exactly 1360 frames. The baseline frontend summarises 20 MFCCs and their
//! first and second deltas by mean and standard deviation (120 values).
//!
//! Fixed frontend parameters (see [`FrontendConfig::default`]): 12 kHz sample
//! rate, 512-point Hann STFT with hop 256 and reflect padding, Slaney mel
//! scale with area-normalised triangles, power-to-dB with reference-to-max
//! and an 80 dB floor.

mod mel;
mod mfcc;
mod stft;
mod wav;

pub use mel::{hz_to_mel, mel_filterbank, mel_to_hz, melspectrogram, power_to_db, MelFilterbank, MelSpectrogram};
pub use mfcc::{dct_ii_ortho, delta, mfcc, mfcc_feature_vector, mfcc_from_mel, MfccFeature, MFCC_COEFFS, MFCC_FEATURE_LEN};
pub use stft::{hann_window, stft_magnitude, Spectrogram};
pub use wav::{load_wav, read_wav, write_wav_f32, write_wav_pcm16};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("audio file not found: {0}")]
    MissingFile(PathBuf),
    #[error("malformed WAV header: {0}")]
    MalformedHeader(String),
    #[error("unsupported WAV codec: format tag {format_tag}, {bits} bits per sample")]
    UnsupportedCodec { format_tag: u16, bits: u16 },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("empty audio clip")]
    EmptyClip,
    #[error("clip of {len} samples is too short for a {n_fft}-point reflect-padded STFT")]
    ClipTooShort { len: usize, n_fft: usize },
    #[error("invalid frequency range: f_min {f_min} Hz, f_max {f_max} Hz, Nyquist {nyquist} Hz")]
    InvalidFrequencyRange { f_min: f64, f_max: f64, nyquist: f64 },
    #[error("mel filter {0} covers no FFT bin; use fewer mel bands or a longer FFT")]
    EmptyFilter(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, DspError>;

/// Mono audio with amplitudes in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(DspError::EmptyClip);
        }
        if sample_rate == 0 {
            return Err(DspError::InvalidParameter("sample rate must be positive".into()));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Dense row-major `f32` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, value: f32) -> Self {
        Self { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length does not match shape");
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f32) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f32] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f32> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn max(&self) -> f32 {
        self.data.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }

    pub fn min(&self) -> f32 {
        self.data.iter().copied().fold(f32::INFINITY, f32::min)
    }
}

/// Frontend parameters. The defaults are the fixed configuration that turns
/// a 29.12 s clip into a 96 x 1360 log-mel spectrogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrontendConfig {
    pub sample_rate: u32,
    pub n_fft: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub n_frames: usize,
    pub clip_seconds: f64,
    pub f_min: f64,
    /// `None` means Nyquist.
    pub f_max: Option<f64>,
    pub top_db: f32,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            sample_rate: 12_000,
            n_fft: 512,
            hop: 256,
            n_mels: 96,
            n_frames: 1360,
            clip_seconds: 29.12,
            f_min: 0.0,
            f_max: None,
            top_db: 80.0,
        }
    }
}

impl FrontendConfig {
    pub fn f_max(&self) -> f64 {
        self.f_max.unwrap_or(self.sample_rate as f64 / 2.0)
    }
}

/// Linear-interpolation resampler. Output length is `round(len * target / source)`
/// and output sample `i` reads the source at position `i * source / target`,
/// holding the last sample past the end.
pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip> {
    if target_rate == 0 {
        return Err(DspError::InvalidParameter("target rate must be positive".into()));
    }
    if clip.samples.is_empty() {
        return Err(DspError::EmptyClip);
    }
    if target_rate == clip.sample_rate {
        return Ok(clip.clone());
    }
    let ratio = clip.sample_rate as f64 / target_rate as f64;
    let out_len = ((clip.len() as f64) * target_rate as f64 / clip.sample_rate as f64).round() as usize;
    let out_len = out_len.max(1);
    let last = clip.len() - 1;
    let samples = (0..out_len)
        .map(|i| {
            let pos = i as f64 * ratio;
            let lo = (pos.floor() as usize).min(last);
            let hi = (lo + 1).min(last);
            let frac = pos - lo as f64;
            let a = clip.samples[lo] as f64;
            let b = clip.samples[hi] as f64;
            if frac <= 0.0 || lo == hi {
                a as f32
            } else {
                (a + (b - a) * frac) as f32
            }
        })
        .collect();
    Ok(AudioClip { samples, sample_rate: target_rate })
}

/// Tiles the clip end to end and truncates to exactly
/// `round(target_seconds * sample_rate)` samples. Longer clips are truncated.
pub fn repeat_to_length(clip: &AudioClip, target_seconds: f64) -> Result<AudioClip> {
    if clip.samples.is_empty() {
        return Err(DspError::EmptyClip);
    }
    if !(target_seconds > 0.0) {
        return Err(DspError::InvalidParameter(format!("target length {target_seconds} s")));
    }
    let target = (target_seconds * clip.sample_rate as f64).round() as usize;
    let samples = clip.samples.iter().copied().cycle().take(target).collect();
    Ok(AudioClip { samples, sample_rate: clip.sample_rate })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resample_identity() {
        let clip = AudioClip::new(vec![0.1, -0.2, 0.3], 12_000).unwrap();
        assert_eq!(resample(&clip, 12_000).unwrap(), clip);
    }

    #[test]
    fn resample_preserves_constants() {
        let clip = AudioClip::new(vec![0.7; 441], 44_100).unwrap();
        for rate in [8_000, 12_000, 22_050, 48_000] {
            let out = resample(&clip, rate).unwrap();
            assert!(out.samples.iter().all(|&s| (s - 0.7).abs() < 1e-7));
        }
    }

    #[test]
    fn resample_ramp_down_by_two() {
        let clip = AudioClip::new(vec![0.0, 1.0, 2.0, 3.0], 4).unwrap();
        let out = resample(&clip, 2).unwrap();
        assert_eq!(out.samples, vec![0.0, 2.0]);
        assert_eq!(out.sample_rate, 2);
    }

    #[test]
    fn resample_upsample_interpolates() {
        let clip = AudioClip::new(vec![0.0, 1.0], 1).unwrap();
        let out = resample(&clip, 2).unwrap();
        assert_eq!(out.samples, vec![0.0, 0.5, 1.0, 1.0]);
    }

    #[test]
    fn resample_rejects_zero_rate() {
        let clip = AudioClip::new(vec![0.0], 1).unwrap();
        assert!(matches!(resample(&clip, 0), Err(DspError::InvalidParameter(_))));
    }

    #[test]
    fn repeat_identity_at_target() {
        let clip = AudioClip::new((0..2912).map(|i| i as f32 / 3000.0).collect(), 100).unwrap();
        assert_eq!(repeat_to_length(&clip, 29.12).unwrap(), clip);
    }

    #[test]
    fn repeat_tiles_short_clip() {
        let sr = 100;
        let clip = AudioClip::new((0..1000).map(|i| (i as f32 * 0.37).sin()).collect(), sr).unwrap();
        let out = repeat_to_length(&clip, 29.12).unwrap();
        assert_eq!(out.len(), 2912);
        for t in 0..(2912 - 1000) {
            assert_eq!(out.samples[t], out.samples[t + 1000]);
        }
    }

    #[test]
    fn repeat_four_second_clip() {
        // 29.12 / 4 = 7.28 copies: 7 whole tiles plus 0.28 of an eighth.
        let sr = 1000;
        let clip = AudioClip::new((0..4000).map(|i| i as f32).collect(), sr).unwrap();
        let out = repeat_to_length(&clip, 29.12).unwrap();
        assert_eq!(out.len(), 29_120);
        assert_eq!(out.samples[7 * 4000], 0.0);
        assert_eq!(*out.samples.last().unwrap(), 1119.0);
    }

    #[test]
    fn repeat_truncates_long_clip() {
        let clip = AudioClip::new(vec![0.5; 5000], 100).unwrap();
        assert_eq!(repeat_to_length(&clip, 29.12).unwrap().len(), 2912);
    }

    #[test]
    fn empty_clip_rejected() {
        assert!(matches!(AudioClip::new(vec![], 100), Err(DspError::EmptyClip)));
        let clip = AudioClip { samples: vec![], sample_rate: 100 };
        assert!(matches!(repeat_to_length(&clip, 1.0), Err(DspError::EmptyClip)));
    }
}
