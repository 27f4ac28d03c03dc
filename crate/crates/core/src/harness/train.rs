use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::config::TrainSourceConfig;
use super::{write_file, HarnessError, Result};
use crate::dsp::{load_wav, melspectrogram};
use crate::eval::read_manifest;
use crate::nn::{he_normal_init, input_from_mel, train_source, ArchitectureSpec, TrainExample, TrainReport};
use crate::weights::{save_model, ModelMeta, ModelSource};

/// Splits a `;`-separated tag list, trimming blanks and dropping the
/// `none` placeholder.
pub fn parse_tags(label: &str) -> Vec<String> {
    label.split(';').map(str::trim).filter(|t| !t.is_empty() && *t != "none").map(str::to_string).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSourceOutcome {
    pub report: TrainReport,
    /// Sorted vocabulary; output unit `i` predicts `tags[i]`.
    pub tags: Vec<String>,
    pub output: PathBuf,
}

fn loss_csv(report: &TrainReport) -> String {
    let mut s = String::from("epoch,loss\n");
    let _ = writeln!(s, "0,{}", report.initial_loss);
    for (e, l) in report.epoch_losses.iter().enumerate() {
        let _ = writeln!(s, "{},{l}", e + 1);
    }
    s
}

/// Trains a tagging convnet on the manifest's multi-hot tags and saves it
/// as a CNF1 file. Row 0 of the loss trace is the loss at initialization.
pub fn cmd_train_source(cfg: &TrainSourceConfig) -> Result<TrainSourceOutcome> {
    let path = cfg.manifest.as_ref().ok_or_else(|| HarnessError::Config("a tagging manifest is required".into()))?;
    let manifest = read_manifest(path)?;
    let row_tags: Vec<Vec<String>> = manifest.rows.iter().map(|r| parse_tags(&r.label)).collect();
    let mut tags: Vec<String> = row_tags.iter().flatten().cloned().collect();
    tags.sort();
    tags.dedup();
    if tags.is_empty() {
        return Err(HarnessError::Config("the manifest names no tags".into()));
    }

    let mut spec = ArchitectureSpec::preset(&cfg.preset)?;
    spec.n_outputs = tags.len();
    spec.input_shape = (1, cfg.frontend.n_mels, cfg.frontend.n_frames);
    spec.validate()?;

    let mut data = Vec::with_capacity(manifest.rows.len());
    for (row, clip_tags) in manifest.rows.iter().zip(&row_tags) {
        let mel = melspectrogram(&load_wav(&row.path)?, &cfg.frontend)?;
        let targets = tags.iter().map(|t| if clip_tags.contains(t) { 1.0 } else { 0.0 }).collect();
        data.push(TrainExample { input: input_from_mel(&mel), targets });
    }
    let init = he_normal_init(&spec, cfg.init_seed)?;
    let (model, report) = train_source(init, &data, &cfg.train)?;

    let mut meta = ModelMeta::new(&spec, ModelSource::Trained, Some(cfg.init_seed));
    meta.provenance = serde_json::json!({
        "manifest": path.display().to_string(),
        "clips": data.len(),
        "tags": tags,
        "train": cfg.train,
        "frontend": cfg.frontend,
        "initial_loss": report.initial_loss,
        "epoch_losses": report.epoch_losses,
    });
    save_model(&model, &meta, &cfg.output)?;
    if let Some(p) = &cfg.loss_csv {
        write_file(p, loss_csv(&report))?;
    }
    Ok(TrainSourceOutcome { report, tags, output: cfg.output.clone() })
}

/// Saves a He-normal model marked `source = random`.
pub fn cmd_init_random(preset: &str, seed: u64, output: &Path) -> Result<()> {
    let spec = ArchitectureSpec::preset(preset)?;
    let model = he_normal_init(&spec, seed)?;
    let mut meta = ModelMeta::new(&spec, ModelSource::Random, Some(seed));
    meta.provenance = serde_json::json!({ "preset": preset, "init": "he_normal" });
    save_model(&model, &meta, output)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tags_split_and_trim() {
        assert_eq!(parse_tags("rock; guitar;;"), ["rock", "guitar"]);
        assert!(parse_tags("none").is_empty());
    }

    #[test]
    fn loss_trace_starts_at_initialization() {
        let r = TrainReport { initial_loss: 0.75, epoch_losses: vec![0.5, 0.25], steps: 4 };
        assert_eq!(loss_csv(&r), "epoch,loss\n0,0.75\n1,0.5\n2,0.25\n");
    }
}
