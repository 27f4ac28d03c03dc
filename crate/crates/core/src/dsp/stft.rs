use std::f64::consts::PI;

use rustfft::{num_complex::Complex, FftPlanner};

use super::{AudioClip, DspError, Matrix, Result};

/// One-sided STFT magnitudes, `n_fft / 2 + 1` rows by frame columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub magnitudes: Matrix,
    pub n_fft: usize,
    pub hop: usize,
}

impl Spectrogram {
    pub fn n_bins(&self) -> usize {
        self.magnitudes.rows()
    }

    pub fn n_frames(&self) -> usize {
        self.magnitudes.cols()
    }
}

/// Periodic Hann window.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect()
}

fn reflect_pad(x: &[f32], pad: usize) -> Vec<f64> {
    let n = x.len();
    let mut out = Vec::with_capacity(n + 2 * pad);
    out.extend((1..=pad).rev().map(|i| x[i] as f64));
    out.extend(x.iter().map(|&v| v as f64));
    out.extend((0..pad).map(|i| x[n - 2 - i] as f64));
    out
}

/// Magnitude STFT with a Hann window and `n_fft / 2` reflect padding at both ends,
/// so frame `t` is centred on sample `t * hop`.
pub fn stft_magnitude(clip: &AudioClip, n_fft: usize, hop: usize) -> Result<Spectrogram> {
    if clip.samples.is_empty() {
        return Err(DspError::EmptyClip);
    }
    if n_fft < 2 || hop == 0 {
        return Err(DspError::InvalidParameter(format!("n_fft {n_fft}, hop {hop}")));
    }
    let pad = n_fft / 2;
    if clip.len() <= pad {
        return Err(DspError::ClipTooShort { len: clip.len(), n_fft });
    }
    let padded = reflect_pad(&clip.samples, pad);
    let n_frames = (padded.len() - n_fft) / hop + 1;
    let n_bins = n_fft / 2 + 1;
    let window = hann_window(n_fft);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);

    let mut mags = Matrix::zeros(n_bins, n_frames);
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for t in 0..n_frames {
        let frame = &padded[t * hop..t * hop + n_fft];
        for ((b, &x), &w) in buf.iter_mut().zip(frame).zip(&window) {
            *b = Complex::new(x * w, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (k, c) in buf.iter().take(n_bins).enumerate() {
            mags.set(k, t, c.norm() as f32);
        }
    }
    Ok(Spectrogram { magnitudes: mags, n_fft, hop })
}
