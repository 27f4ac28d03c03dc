use super::{repeat_to_length, resample, stft_magnitude, AudioClip, DspError, FrontendConfig, Matrix, Result};

const F_SP: f64 = 200.0 / 3.0;
const MIN_LOG_HZ: f64 = 1000.0;
const MIN_LOG_MEL: f64 = MIN_LOG_HZ / F_SP;

fn log_step() -> f64 {
    6.4f64.ln() / 27.0
}

/// Slaney mel scale: linear below 1 kHz, logarithmic above.
pub fn hz_to_mel(hz: f64) -> f64 {
    if hz < MIN_LOG_HZ {
        hz / F_SP
    } else {
        MIN_LOG_MEL + (hz / MIN_LOG_HZ).ln() / log_step()
    }
}

pub fn mel_to_hz(mel: f64) -> f64 {
    if mel < MIN_LOG_MEL {
        mel * F_SP
    } else {
        MIN_LOG_HZ * (log_step() * (mel - MIN_LOG_MEL)).exp()
    }
}

/// Triangular mel filters with Slaney area normalisation (`2 / bandwidth`).
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    pub weights: Matrix,
    pub n_mels: usize,
    pub f_min: f64,
    pub f_max: f64,
    /// Centre frequency of each filter in Hz.
    pub centers: Vec<f64>,
}

pub fn mel_filterbank(sample_rate: u32, n_fft: usize, n_mels: usize, f_min: f64, f_max: f64) -> Result<MelFilterbank> {
    let nyquist = sample_rate as f64 / 2.0;
    if !(f_min >= 0.0 && f_min < f_max && f_max <= nyquist) {
        return Err(DspError::InvalidFrequencyRange { f_min, f_max, nyquist });
    }
    if n_mels == 0 || n_fft < 2 {
        return Err(DspError::InvalidParameter(format!("n_mels {n_mels}, n_fft {n_fft}")));
    }
    let n_bins = n_fft / 2 + 1;
    let fft_freqs: Vec<f64> = (0..n_bins).map(|k| k as f64 * sample_rate as f64 / n_fft as f64).collect();
    let (mel_lo, mel_hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64))
        .collect();

    let mut weights = Matrix::zeros(n_mels, n_bins);
    for m in 0..n_mels {
        let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let norm = 2.0 / (hi - lo);
        let row = weights.row_mut(m);
        for (w, &f) in row.iter_mut().zip(&fft_freqs) {
            let rising = (f - lo) / (mid - lo);
            let falling = (hi - f) / (hi - mid);
            *w = (rising.min(falling).max(0.0) * norm) as f32;
        }
        if row.iter().all(|&w| w <= 0.0) {
            return Err(DspError::EmptyFilter(m));
        }
    }
    Ok(MelFilterbank { weights, n_mels, f_min, f_max, centers: edges[1..=n_mels].to_vec() })
}

impl MelFilterbank {
    /// Applies the filterbank to a power spectrogram (bins x frames) in `f64`.
    fn apply(&self, power: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n_frames = power.first().map_or(0, Vec::len);
        (0..self.n_mels)
            .map(|m| {
                let w = self.weights.row(m);
                let mut out = vec![0.0f64; n_frames];
                for (k, &wk) in w.iter().enumerate() {
                    if wk > 0.0 {
                        let wk = wk as f64;
                        for (o, &p) in out.iter_mut().zip(&power[k]) {
                            *o += wk * p;
                        }
                    }
                }
                out
            })
            .collect()
    }
}

/// Decibel-scaled log-mel spectrogram, the convnet input.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    /// n_mels x n_frames, maximum entry 0 dB.
    pub db_values: Matrix,
    pub floor_db: f32,
}

impl MelSpectrogram {
    pub fn n_mels(&self) -> usize {
        self.db_values.rows()
    }

    pub fn n_frames(&self) -> usize {
        self.db_values.cols()
    }
}

/// `10 log10(max(P, 1e-10))` shifted so the maximum is 0 and clamped at
/// `-top_db`. An all-zero input maps to all zeros.
pub fn power_to_db(power: &[Vec<f64>], top_db: f32) -> Matrix {
    let rows = power.len();
    let cols = power.first().map_or(0, Vec::len);
    if power.iter().flatten().all(|&p| p == 0.0) {
        return Matrix::zeros(rows, cols);
    }
    let db: Vec<f64> = power.iter().flatten().map(|&p| 10.0 * p.max(1e-10).log10()).collect();
    let reference = db.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let floor = -(top_db as f64);
    let data = db.into_iter().map(|d| ((d - reference).max(floor)) as f32).collect();
    Matrix::from_vec(rows, cols, data)
}

/// repeat to `clip_seconds` -> resample -> STFT -> mel(power) -> dB -> crop/pad to `n_frames`.
pub fn melspectrogram(clip: &AudioClip, cfg: &FrontendConfig) -> Result<MelSpectrogram> {
    let tiled = repeat_to_length(clip, cfg.clip_seconds)?;
    let resampled = resample(&tiled, cfg.sample_rate)?;
    let spec = stft_magnitude(&resampled, cfg.n_fft, cfg.hop)?;
    let fb = mel_filterbank(cfg.sample_rate, cfg.n_fft, cfg.n_mels, cfg.f_min, cfg.f_max())?;

    let frames = spec.n_frames();
    let power: Vec<Vec<f64>> = (0..spec.n_bins())
        .map(|k| spec.magnitudes.row(k).iter().map(|&m| (m as f64) * (m as f64)).collect())
        .collect();
    let mel_power = fb.apply(&power);
    let db = power_to_db(&mel_power, cfg.top_db);

    let floor_db = -cfg.top_db;
    let mut out = Matrix::filled(cfg.n_mels, cfg.n_frames, floor_db);
    let keep = frames.min(cfg.n_frames);
    for m in 0..cfg.n_mels {
        out.row_mut(m)[..keep].copy_from_slice(&db.row(m)[..keep]);
    }
    if keep < cfg.n_frames && db.as_slice().iter().all(|&v| v == 0.0) {
        // Zero-signal guard extends to the padded columns.
        out = Matrix::zeros(cfg.n_mels, cfg.n_frames);
    }
    Ok(MelSpectrogram { db_values: out, floor_db })
}
