use convfeat::dsp::{melspectrogram, AudioClip, FrontendConfig};
use convfeat::features::extract_layer_features;
use convfeat::harness::synth::band_noise;
use convfeat::nn::{he_normal_init, ArchitectureSpec, Mode};
use convfeat::svm::{svc_train_binary, KernelSpec, SolverParams};

pub const MEL_BANDS: usize = 96;
pub const MEL_FRAMES: usize = 120;
const SAMPLE_RATE: u32 = 12_000;
const SECONDS: f64 = 2.56;

/// `tone` (sine), `noise` (one-octave band around `freq`) or `sweep`
/// (exponential chirp from `freq / 4` to `freq`).
pub fn test_signal(kind: &str, freq: f64) -> Result<Vec<f32>, String> {
    let nyquist = SAMPLE_RATE as f64 / 2.0;
    if !(freq > 20.0 && freq < nyquist) {
        return Err(format!("frequency must lie in (20, {nyquist}) Hz"));
    }
    let n = (SECONDS * SAMPLE_RATE as f64) as usize;
    let t = |i: usize| i as f64 / SAMPLE_RATE as f64;
    let tau = std::f64::consts::TAU;
    match kind {
        "tone" => Ok((0..n).map(|i| (0.5 * (tau * freq * t(i)).sin()) as f32).collect()),
        "noise" => Ok(band_noise(freq.to_bits(), SAMPLE_RATE, SECONDS, (freq / 1.414, (freq * 1.414).min(nyquist)))),
        "sweep" => {
            let (f0, rate) = (freq / 4.0, 4f64.ln() / SECONDS);
            Ok((0..n).map(|i| (0.5 * (tau * f0 * ((rate * t(i)).exp() - 1.0) / rate).sin()) as f32).collect())
        }
        other => Err(format!("unknown signal '{other}' (tone, noise, sweep)")),
    }
}

fn clip(kind: &str, freq: f64) -> Result<AudioClip, String> {
    AudioClip::new(test_signal(kind, freq)?, SAMPLE_RATE).map_err(|e| e.to_string())
}

pub fn mel_image(kind: &str, freq: f64) -> Result<Vec<f32>, String> {
    let cfg = FrontendConfig { n_mels: MEL_BANDS, n_frames: MEL_FRAMES, clip_seconds: SECONDS, ..Default::default() };
    let mel = melspectrogram(&clip(kind, freq)?, &cfg).map_err(|e| e.to_string())?;
    Ok(mel.db_values.into_vec())
}

pub fn layer_features(kind: &str, freq: f64, seed: u64) -> Result<Vec<f32>, String> {
    let mut model = he_normal_init(&ArchitectureSpec::tagger5(), seed).map_err(|e| e.to_string())?;
    model.mode = Mode::Inference;
    let mel = melspectrogram(&clip(kind, freq)?, &FrontendConfig::default()).map_err(|e| e.to_string())?;
    let layers = extract_layer_features(&model, &mel).map_err(|e| e.to_string())?;
    Ok(layers.per_layer.concat())
}

pub fn svm_field(xs: &[f64], ys: &[f64], labels: &[u32], gamma: f64, c: f64, res: usize) -> Result<Vec<f64>, String> {
    if xs.len() != ys.len() || xs.len() != labels.len() {
        return Err("coordinate and label counts differ".into());
    }
    if !labels.contains(&0) || !labels.contains(&1) || labels.iter().any(|&l| l > 1) {
        return Err("place at least one point of each class".into());
    }
    if !(2..=256).contains(&res) {
        return Err("grid resolution must be between 2 and 256".into());
    }
    let kernel = KernelSpec::rbf(gamma).map_err(|e| e.to_string())?;
    let x: Vec<Vec<f64>> = xs.iter().zip(ys).map(|(&a, &b)| vec![a, b]).collect();
    let y: Vec<f64> = labels.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
    let machine = svc_train_binary(&x, &y, c, kernel, &SolverParams::default()).map_err(|e| e.to_string())?;
    let step = 1.0 / (res - 1) as f64;
    let mut field = Vec::with_capacity(res * res);
    for row in 0..res {
        for col in 0..res {
            field.push(machine.decision(&kernel, &[col as f64 * step, 1.0 - row as f64 * step]));
        }
    }
    Ok(field)
}
