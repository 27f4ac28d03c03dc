use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{io_err, write_file, HarnessError, Result};
use crate::dsp::FrontendConfig;
use crate::features::{all_combos, parse_combo, LayerCombo};
use crate::nn::TrainConfig;
use crate::svm::{GridSpec, SvmParams};

/// `"all31"` or an explicit list of strategy names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Strategies {
    Named(String),
    List(Vec<String>),
}

impl Default for Strategies {
    fn default() -> Self {
        Strategies::Named("all31".into())
    }
}

impl Strategies {
    pub fn parse(text: &str) -> Self {
        if text.trim() == "all31" {
            Strategies::Named("all31".into())
        } else {
            Strategies::List(text.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
        }
    }

    pub fn resolve(&self) -> Result<Vec<LayerCombo>> {
        let combos = match self {
            Strategies::Named(n) if n == "all31" => all_combos(),
            Strategies::Named(n) => vec![parse_combo(n)?],
            Strategies::List(l) => l.iter().map(|n| parse_combo(n)).collect::<std::result::Result<_, _>>()?,
        };
        if combos.is_empty() {
            return Err(HarnessError::Config("no strategies selected".into()));
        }
        Ok(combos)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Baselines {
    pub mfcc: bool,
    /// Convnet strategy concatenated with the MFCC vector.
    pub combo_mfcc: bool,
    pub combo: String,
}

impl Default for Baselines {
    fn default() -> Self {
        Self { mfcc: true, combo_mfcc: true, combo: "12345".into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CvKind {
    /// Predefined if the manifest has a split column, grouped if it has a
    /// group column, else stratified (classes) or k-fold (regression).
    Auto,
    Stratified,
    Grouped,
    Kfold,
    Predefined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    pub kind: CvKind,
    pub k: usize,
    pub inner_folds: usize,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self { kind: CvKind::Auto, k: 10, inner_folds: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    /// Two-target regression if the manifest has `target2`, else classification.
    Auto,
    Classify,
    Regress,
}

/// One evaluation run. Every field has a default, so a JSON file only
/// needs the fields it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub manifest: Option<PathBuf>,
    /// Feature CSV written by `extract`; when absent features are extracted
    /// from the manifest audio.
    pub features: Option<PathBuf>,
    pub trained_model: Option<PathBuf>,
    pub random_model: Option<PathBuf>,
    /// Builds a He-normal model in memory when no random model file is given.
    pub random_seed: Option<u64>,
    pub preset: String,
    pub strategies: Strategies,
    pub baselines: Baselines,
    pub cv: CvConfig,
    pub task: TaskKind,
    pub grid: GridSpec,
    pub svm: SvmParams,
    pub standardize: bool,
    pub frontend: FrontendConfig,
    /// Experiment seed; fold and selection seeds are fixed offsets of it.
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            features: None,
            trained_model: None,
            random_model: None,
            random_seed: None,
            preset: "tagger5".into(),
            strategies: Strategies::default(),
            baselines: Baselines::default(),
            cv: CvConfig::default(),
            task: TaskKind::Auto,
            grid: GridSpec::default(),
            svm: SvmParams::default(),
            standardize: true,
            frontend: FrontendConfig::default(),
            seed: 0,
            output_dir: PathBuf::from("results"),
        }
    }
}

fn must_exist(label: &str, p: &Option<PathBuf>) -> Result<()> {
    match p {
        Some(p) if !p.exists() => Err(HarnessError::Config(format!("{label} '{}' does not exist", p.display()))),
        _ => Ok(()),
    }
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path.as_ref())
    }

    pub fn validate(&self) -> Result<()> {
        if self.manifest.is_none() {
            return Err(HarnessError::Config("a manifest is required".into()));
        }
        must_exist("manifest", &self.manifest)?;
        must_exist("features file", &self.features)?;
        must_exist("trained model", &self.trained_model)?;
        must_exist("random model", &self.random_model)?;
        if self.features.is_none() && self.trained_model.is_none() && self.random_model.is_none() && self.random_seed.is_none() && !self.baselines.mfcc {
            return Err(HarnessError::Config("nothing to evaluate: no model, no features and the MFCC baseline is off".into()));
        }
        self.strategies.resolve()?;
        parse_combo(&self.baselines.combo)?;
        if self.cv.k < 2 || self.cv.inner_folds < 2 {
            return Err(HarnessError::Config("fold counts must be at least 2".into()));
        }
        Ok(())
    }

    /// Writes the fully defaulted configuration as `resolved_config.json`.
    pub fn write_resolved(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("resolved_config.json");
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_file(&path, text)?;
        Ok(path)
    }
}

/// Source-task training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSourceConfig {
    /// Tagging manifest; `label` holds `;`-separated tags.
    pub manifest: Option<PathBuf>,
    pub preset: String,
    pub frontend: FrontendConfig,
    pub train: TrainConfig,
    pub init_seed: u64,
    pub output: PathBuf,
    pub loss_csv: Option<PathBuf>,
}

impl Default for TrainSourceConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            preset: "tagger5".into(),
            frontend: FrontendConfig::default(),
            train: TrainConfig::default(),
            init_seed: 0,
            output: PathBuf::from("trained.cnf"),
            loss_csv: None,
        }
    }
}

impl TrainSourceConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path.as_ref())
    }
}
