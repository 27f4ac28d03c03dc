use std::f64::consts::PI;

use super::{melspectrogram, AudioClip, DspError, FrontendConfig, Matrix, MelSpectrogram, Result};

pub const MFCC_COEFFS: usize = 20;
/// mean and std of MFCC, delta and delta-delta: 20 x 3 x 2.
pub const MFCC_FEATURE_LEN: usize = MFCC_COEFFS * 6;
const DELTA_WIDTH: usize = 9;

/// Orthonormal DCT-II basis, `n_out x n_in`.
pub fn dct_ii_ortho(n_in: usize, n_out: usize) -> Matrix {
    let mut basis = Matrix::zeros(n_out, n_in);
    let n = n_in as f64;
    for k in 0..n_out {
        let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
        for i in 0..n_in {
            let v = scale * (PI * k as f64 * (2 * i + 1) as f64 / (2.0 * n)).cos();
            basis.set(k, i, v as f32);
        }
    }
    basis
}

fn dct_columns(log_mel: &Matrix, n_coeffs: usize) -> Matrix {
    let basis = dct_ii_ortho(log_mel.rows(), n_coeffs);
    let mut out = Matrix::zeros(n_coeffs, log_mel.cols());
    for k in 0..n_coeffs {
        let b = basis.row(k);
        let mut acc = vec![0.0f64; log_mel.cols()];
        for (m, &bm) in b.iter().enumerate() {
            for (a, &x) in acc.iter_mut().zip(log_mel.row(m)) {
                *a += bm as f64 * x as f64;
            }
        }
        out.row_mut(k).iter_mut().zip(acc).for_each(|(o, a)| *o = a as f32);
    }
    out
}

/// MFCCs (`n_coeffs x frames`): orthonormal DCT-II of each log-mel column.
pub fn mfcc(clip: &AudioClip, n_coeffs: usize, cfg: &FrontendConfig) -> Result<Matrix> {
    if n_coeffs == 0 || n_coeffs > cfg.n_mels {
        return Err(DspError::InvalidParameter(format!("{n_coeffs} coefficients from {} mel bands", cfg.n_mels)));
    }
    let mel = melspectrogram(clip, cfg)?;
    Ok(dct_columns(&mel.db_values, n_coeffs))
}

/// Local regression slope over a centred window of `width` frames with the
/// edge frames replicated: `d[t] = sum_n n (c[t+n] - c[t-n]) / (2 sum_n n^2)`.
pub fn delta(m: &Matrix, width: usize) -> Result<Matrix> {
    if width < 3 || width.is_multiple_of(2) {
        return Err(DspError::InvalidParameter(format!("delta width must be odd and >= 3, got {width}")));
    }
    let half = (width / 2) as isize;
    let denom: f64 = 2.0 * (1..=half).map(|n| (n * n) as f64).sum::<f64>();
    let cols = m.cols() as isize;
    let mut out = Matrix::zeros(m.rows(), m.cols());
    for r in 0..m.rows() {
        let row = m.row(r);
        let at = |t: isize| row[t.clamp(0, cols - 1) as usize] as f64;
        for t in 0..cols {
            let num: f64 = (1..=half).map(|n| n as f64 * (at(t + n) - at(t - n))).sum();
            out.set(r, t as usize, (num / denom) as f32);
        }
    }
    Ok(out)
}

/// The 120-dimensional MFCC baseline vector.
#[derive(Debug, Clone, PartialEq)]
pub struct MfccFeature {
    pub values: Vec<f32>,
}

fn mean_std(row: &[f32]) -> (f32, f32) {
    let n = row.len() as f64;
    let mean = row.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = row.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    (mean as f32, var.sqrt() as f32)
}

/// `[mean(MFCC), std(MFCC), mean(d), std(d), mean(dd), std(dd)]`, population std.
pub fn mfcc_feature_vector(clip: &AudioClip, cfg: &FrontendConfig) -> Result<MfccFeature> {
    let coeffs = mfcc(clip, MFCC_COEFFS, cfg)?;
    mfcc_summary(&coeffs)
}

/// The MFCC vector of an already computed log-mel spectrogram.
pub fn mfcc_from_mel(mel: &MelSpectrogram) -> Result<MfccFeature> {
    if mel.n_mels() < MFCC_COEFFS {
        return Err(DspError::InvalidParameter(format!("{MFCC_COEFFS} coefficients from {} mel bands", mel.n_mels())));
    }
    mfcc_summary(&dct_columns(&mel.db_values, MFCC_COEFFS))
}

pub(crate) fn mfcc_summary(coeffs: &Matrix) -> Result<MfccFeature> {
    let d1 = delta(coeffs, DELTA_WIDTH)?;
    let d2 = delta(&d1, DELTA_WIDTH)?;
    let mut values = Vec::with_capacity(coeffs.rows() * 6);
    for m in [coeffs, &d1, &d2] {
        let stats: Vec<(f32, f32)> = (0..m.rows()).map(|r| mean_std(m.row(r))).collect();
        values.extend(stats.iter().map(|s| s.0));
        values.extend(stats.iter().map(|s| s.1));
    }
    Ok(MfccFeature { values })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dct_of_constant_has_only_dc() {
        let col = Matrix::filled(96, 1, -12.5);
        let c = dct_columns(&col, 20);
        assert!((c.get(0, 0) as f64 - (-12.5 * 96f64.sqrt())).abs() < 1e-3);
        for k in 1..20 {
            assert!(c.get(k, 0).abs() < 1e-4, "coef {k} = {}", c.get(k, 0));
        }
    }

    #[test]
    fn dct_is_orthonormal() {
        // B * B^T = I, so the transpose inverts the full transform.
        let n = 96;
        let b = dct_ii_ortho(n, n);
        let x: Vec<f64> = (0..n).map(|i| ((i * 31) % 17) as f64 - 8.0).collect();
        let y: Vec<f64> = (0..n).map(|k| (0..n).map(|i| b.get(k, i) as f64 * x[i]).sum()).collect();
        for i in 0..n {
            let back: f64 = (0..n).map(|k| b.get(k, i) as f64 * y[k]).sum();
            assert!((back - x[i]).abs() < 1e-5, "index {i}");
        }
    }

    #[test]
    fn delta_of_constant_is_zero() {
        let m = Matrix::filled(3, 20, 4.0);
        assert!(delta(&m, 9).unwrap().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn delta_of_ramp_is_slope_in_interior() {
        let slope = 0.75f32;
        let m = Matrix::from_vec(1, 30, (0..30).map(|t| 2.0 + slope * t as f32).collect());
        let d = delta(&m, 9).unwrap();
        for t in 4..26 {
            assert!((d.get(0, t) - slope).abs() < 1e-5);
        }
    }

    #[test]
    fn delta_width_three_hand_values() {
        // Least-squares slope over {t-1, t, t+1} is (c[t+1] - c[t-1]) / 2; edges replicate.
        let m = Matrix::from_vec(1, 5, vec![1.0, 4.0, 2.0, 8.0, 5.0]);
        let d = delta(&m, 3).unwrap();
        let expected = [1.5, 0.5, 2.0, 1.5, -1.5];
        for (t, e) in expected.iter().enumerate() {
            assert!((d.get(0, t) - e).abs() < 1e-7, "frame {t}");
        }
    }

    #[test]
    fn delta_rejects_bad_width() {
        let m = Matrix::zeros(1, 5);
        assert!(delta(&m, 4).is_err());
        assert!(delta(&m, 1).is_err());
    }

    #[test]
    fn summary_matches_brute_force_statistics() {
        let coeffs = Matrix::from_vec(20, 50, (0..1000).map(|i| ((i * 37 % 101) as f32).sin()).collect());
        let f = mfcc_summary(&coeffs).unwrap();
        assert_eq!(f.values.len(), MFCC_FEATURE_LEN);
        let d1 = delta(&coeffs, 9).unwrap();
        for r in 0..20 {
            let row = coeffs.row(r);
            let mean: f64 = row.iter().map(|&v| v as f64).sum::<f64>() / 50.0;
            let var: f64 = row.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / 50.0;
            assert!((f.values[r] as f64 - mean).abs() < 1e-6);
            assert!((f.values[20 + r] as f64 - var.sqrt()).abs() < 1e-6);
            let drow = d1.row(r);
            let dmean: f64 = drow.iter().map(|&v| v as f64).sum::<f64>() / 50.0;
            assert!((f.values[40 + r] as f64 - dmean).abs() < 1e-6);
        }
        assert!(f.values[20..40].iter().all(|&s| s >= 0.0));
    }

    #[test]
    fn frame_permutation_keeps_means() {
        let coeffs = Matrix::from_vec(20, 40, (0..800).map(|i| (i as f32 * 0.13).cos()).collect());
        let mut permuted = Matrix::zeros(20, 40);
        for r in 0..20 {
            for t in 0..40 {
                permuted.set(r, t, coeffs.get(r, (t * 7) % 40));
            }
        }
        let a = mfcc_summary(&coeffs).unwrap();
        let b = mfcc_summary(&permuted).unwrap();
        for i in 0..40 {
            assert!((a.values[i] - b.values[i]).abs() < 1e-5);
        }
    }

    #[test]
    fn from_mel_matches_clip_path() {
        let cfg = FrontendConfig { clip_seconds: 1.0, n_frames: 40, ..Default::default() };
        let samples = (0..12_000).map(|i| (i as f32 * 0.07).sin() * 0.3 + (i as f32 * 0.011).cos() * 0.2).collect();
        let clip = AudioClip::new(samples, 12_000).unwrap();
        let mel = melspectrogram(&clip, &cfg).unwrap();
        assert_eq!(mfcc_from_mel(&mel).unwrap(), mfcc_feature_vector(&clip, &cfg).unwrap());
    }
}
