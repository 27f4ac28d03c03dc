//! Synthetic band-limited noise datasets for end-to-end runs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{write_file, HarnessError, Result};
use crate::dsp::write_wav_pcm16;

pub const LOW_BAND: (f64, f64) = (200.0, 800.0);
pub const HIGH_BAND: (f64, f64) = (2500.0, 5000.0);

/// Gaussian noise band-passed to `band` Hz by zeroing FFT bins, scaled to
/// a 0.5 peak.
pub fn band_noise(seed: u64, sample_rate: u32, seconds: f64, band: (f64, f64)) -> Vec<f32> {
    let n = (seconds * sample_rate as f64).round() as usize;
    if n == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf: Vec<Complex<f64>> = (0..n).map(|_| Complex::new(StandardNormal.sample(&mut rng), 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let bin = k.min(n - k);
        let hz = bin as f64 * sample_rate as f64 / n as f64;
        if hz < band.0 || hz > band.1 {
            *c = Complex::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let peak = buf.iter().map(|c| c.re.abs()).fold(0.0, f64::max);
    let scale = if peak > 0.0 { 0.5 / peak } else { 0.0 };
    buf.iter().map(|c| (c.re * scale) as f32).collect()
}

fn mix(parts: &[Vec<f32>]) -> Vec<f32> {
    let n = parts.iter().map(Vec::len).max().unwrap_or(0);
    let mut out = vec![0.0f32; n];
    for p in parts {
        for (o, v) in out.iter_mut().zip(p) {
            *o += v / parts.len() as f32;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_clips: usize,
    pub seconds: f64,
    pub sample_rate: u32,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self { n_clips: 200, seconds: 4.0, sample_rate: 16_000, seed: 7 }
    }
}

fn clip_seed(spec: &SynthSpec, i: usize, part: u64) -> u64 {
    spec.seed.wrapping_mul(1_000_003).wrapping_add(i as u64 * 4 + part)
}

/// Two classes, `low` and `high`, alternating; writes WAVs and
/// `manifest.csv` into `dir` and returns the manifest path.
pub fn write_band_dataset(dir: &Path, spec: &SynthSpec) -> Result<PathBuf> {
    let audio = dir.join("audio");
    let mut manifest = String::from("clip_id,path,label\n");
    for i in 0..spec.n_clips {
        let (label, band) = if i % 2 == 0 { ("low", LOW_BAND) } else { ("high", HIGH_BAND) };
        let samples = band_noise(clip_seed(spec, i, 0), spec.sample_rate, spec.seconds, band);
        let name = format!("clip{i:04}.wav");
        write_wav(&audio.join(&name), &samples, spec.sample_rate)?;
        let _ = writeln!(manifest, "clip{i:04},audio/{name},{label}");
    }
    let path = dir.join("manifest.csv");
    write_file(&path, manifest)?;
    Ok(path)
}

/// Two-tag set: each clip carries `low`, `high`, both or neither, and
/// contains the matching bands over a faint broadband floor.
pub fn write_tagging_dataset(dir: &Path, spec: &SynthSpec) -> Result<PathBuf> {
    let audio = dir.join("audio");
    let mut manifest = String::from("clip_id,path,label\n");
    for i in 0..spec.n_clips {
        let (low, high) = (i % 4 == 1 || i % 4 == 3, i % 4 == 2 || i % 4 == 3);
        let mut parts = Vec::new();
        let mut tags = Vec::new();
        if low {
            parts.push(band_noise(clip_seed(spec, i, 0), spec.sample_rate, spec.seconds, LOW_BAND));
            tags.push("low");
        }
        if high {
            parts.push(band_noise(clip_seed(spec, i, 1), spec.sample_rate, spec.seconds, HIGH_BAND));
            tags.push("high");
        }
        let floor = band_noise(clip_seed(spec, i, 2), spec.sample_rate, spec.seconds, (0.0, spec.sample_rate as f64 / 2.0));
        let mut samples = if parts.is_empty() { vec![0.0; floor.len()] } else { mix(&parts) };
        for (s, f) in samples.iter_mut().zip(&floor) {
            *s += 0.02 * f;
        }
        let name = format!("clip{i:04}.wav");
        write_wav(&audio.join(&name), &samples, spec.sample_rate)?;
        let label = if tags.is_empty() { "none".to_string() } else { tags.join(";") };
        let _ = writeln!(manifest, "clip{i:04},audio/{name},{label}");
    }
    let path = dir.join("manifest.csv");
    write_file(&path, manifest)?;
    Ok(path)
}

fn write_wav(path: &Path, samples: &[f32], sample_rate: u32) -> Result<()> {
    if let Some(d) = path.parent() {
        std::fs::create_dir_all(d).map_err(super::io_err(d))?;
    }
    write_wav_pcm16(path, samples, 1, sample_rate).map_err(HarnessError::from)
}
