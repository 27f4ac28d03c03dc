use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::Strategies;
use super::{io_err, HarnessError, Result};
use crate::dsp::{load_wav, melspectrogram, mfcc_from_mel, FrontendConfig, MfccFeature, MFCC_COEFFS};
use crate::eval::{read_manifest, Manifest};
use crate::features::{combine, combo_name, extract_layer_features, LayerCombo, LayerFeatures};
use crate::nn::{he_normal_init, ArchitectureSpec, Mode, ModelState};
use crate::par::map_ordered;
use crate::weights::{load_model, ModelSource};

/// `source` and `combo` value of MFCC rows.
pub const SOURCE_MFCC: &str = "mfcc";

/// A model ready for extraction, in inference mode.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub model: ModelState<f32>,
    pub source: ModelSource,
    /// File name plus CRC-32 of the file, or the seed of an in-memory model.
    pub id: String,
}

pub fn load_model_file(path: &Path) -> Result<LoadedModel> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    let (mut model, meta) = load_model(path)?;
    model.mode = Mode::Inference;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(LoadedModel { model, source: meta.source, id: format!("{name}#{:08x}", crc32fast::hash(&bytes)) })
}

pub fn random_model(preset: &str, seed: u64) -> Result<LoadedModel> {
    let spec = ArchitectureSpec::preset(preset)?;
    let mut model = he_normal_init(&spec, seed)?;
    model.mode = Mode::Inference;
    Ok(LoadedModel { model, source: ModelSource::Random, id: format!("{preset}-seed{seed}") })
}

pub(crate) fn check_models(models: &[LoadedModel], frontend: &FrontendConfig, mfcc: bool) -> Result<()> {
    for (i, m) in models.iter().enumerate() {
        let (_, f, t) = m.model.spec.input_shape;
        if (f, t) != (frontend.n_mels, frontend.n_frames) {
            return Err(HarnessError::Config(format!(
                "model {} expects {f}x{t} input, frontend produces {}x{}",
                m.id, frontend.n_mels, frontend.n_frames
            )));
        }
        if models[..i].iter().any(|o| o.source == m.source) {
            return Err(HarnessError::Config(format!("two {} models given; at most one per source", m.source.as_str())));
        }
    }
    if mfcc && frontend.n_mels < MFCC_COEFFS {
        return Err(HarnessError::Config(format!("MFCC needs at least {MFCC_COEFFS} mel bands, frontend has {}", frontend.n_mels)));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClipFeatures {
    /// One entry per model, in model order.
    pub per_model: Vec<LayerFeatures>,
    pub mfcc: Option<MfccFeature>,
}

/// Successful clips in manifest order plus the clips that failed.
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub clip_ids: Vec<String>,
    pub features: Vec<ClipFeatures>,
    pub failures: Vec<(String, String)>,
}

fn extract_clip(path: &Path, models: &[LoadedModel], frontend: &FrontendConfig, mfcc: bool) -> Result<ClipFeatures> {
    let clip = load_wav(path)?;
    let mel = melspectrogram(&clip, frontend)?;
    let per_model = models.iter().map(|m| extract_layer_features(&m.model, &mel)).collect::<std::result::Result<_, _>>()?;
    let mfcc = if mfcc { Some(mfcc_from_mel(&mel)?) } else { None };
    Ok(ClipFeatures { per_model, mfcc })
}

/// Extracts every manifest clip; a clip that fails to decode is recorded
/// and skipped.
pub fn extract_manifest(manifest: &Manifest, models: &[LoadedModel], frontend: &FrontendConfig, mfcc: bool) -> Result<Extraction> {
    check_models(models, frontend, mfcc)?;
    let results = map_ordered(&manifest.rows, |r| extract_clip(&r.path, models, frontend, mfcc));
    let mut out = Extraction { clip_ids: Vec::new(), features: Vec::new(), failures: Vec::new() };
    for (row, res) in manifest.rows.iter().zip(results) {
        match res {
            Ok(f) => {
                out.clip_ids.push(row.clip_id.clone());
                out.features.push(f);
            }
            Err(e) => {
                log::warn!("skipping {}: {e}", row.clip_id);
                out.failures.push((row.clip_id.clone(), e.to_string()));
            }
        }
    }
    Ok(out)
}

/// One line of a feature CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub clip_id: String,
    pub combo: String,
    pub source: String,
    pub values: Vec<f32>,
}

/// Per clip: every combo of every model, then the MFCC row.
pub fn feature_rows(ex: &Extraction, models: &[LoadedModel], combos: &[LayerCombo]) -> Result<Vec<FeatureRow>> {
    let mut rows = Vec::new();
    for (clip_id, f) in ex.clip_ids.iter().zip(&ex.features) {
        for (m, lf) in models.iter().zip(&f.per_model) {
            for &c in combos {
                let cf = combine(lf, c, m.source, &m.id)?;
                rows.push(FeatureRow { clip_id: clip_id.clone(), combo: combo_name(&c), source: m.source.as_str().into(), values: cf.values });
            }
        }
        if let Some(mf) = &f.mfcc {
            rows.push(FeatureRow { clip_id: clip_id.clone(), combo: SOURCE_MFCC.into(), source: SOURCE_MFCC.into(), values: mf.values.clone() });
        }
    }
    Ok(rows)
}

/// `clip_id,combo,source,v0..vN`; rows shorter than the widest leave the
/// trailing value fields empty.
pub fn write_feature_csv<W: std::io::Write>(writer: W, rows: &[FeatureRow]) -> Result<()> {
    let width = rows.iter().map(|r| r.values.len()).max().unwrap_or(0);
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["clip_id".to_string(), "combo".into(), "source".into()];
    header.extend((0..width).map(|i| format!("v{i}")));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.clip_id.clone(), r.combo.clone(), r.source.clone()];
        rec.extend(r.values.iter().map(|v| v.to_string()));
        rec.resize(width + 3, String::new());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| HarnessError::Csv(e.into()))?;
    Ok(())
}

pub fn read_feature_csv(path: &Path) -> Result<Vec<FeatureRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    if header.len() < 3 || &header[0] != "clip_id" || &header[1] != "combo" || &header[2] != "source" {
        return Err(HarnessError::Config(format!("{}: header must start with clip_id,combo,source", path.display())));
    }
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let mut values = Vec::with_capacity(rec.len() - 3);
        for field in rec.iter().skip(3).take_while(|f| !f.is_empty()) {
            let v: f32 = field
                .parse()
                .map_err(|_| HarnessError::Config(format!("{} row {}: bad value '{field}'", path.display(), line + 2)))?;
            values.push(v);
        }
        rows.push(FeatureRow { clip_id: rec[0].to_string(), combo: rec[1].to_string(), source: rec[2].to_string(), values });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractArgs {
    pub manifest: PathBuf,
    pub models: Vec<PathBuf>,
    pub random_seed: Option<u64>,
    pub preset: String,
    pub strategies: Strategies,
    pub mfcc: bool,
    pub frontend: FrontendConfig,
    pub output: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractOutcome {
    pub rows: usize,
    pub clips: usize,
    pub failures: Vec<(String, String)>,
}

#[derive(Serialize, Deserialize)]
struct ModelProvenance {
    source: ModelSource,
    id: String,
    spec: crate::nn::ArchitectureSpec,
}

/// Extracts `args.manifest` and writes the feature CSV plus a
/// `<output>.json` sidecar naming the models behind each source.
pub fn cmd_extract(args: &ExtractArgs) -> Result<ExtractOutcome> {
    let manifest = read_manifest(&args.manifest)?;
    let mut models = args.models.iter().map(|p| load_model_file(p)).collect::<Result<Vec<_>>>()?;
    if let Some(seed) = args.random_seed {
        models.push(random_model(&args.preset, seed)?);
    }
    if models.is_empty() && !args.mfcc {
        return Err(HarnessError::Config("no model and no MFCC requested".into()));
    }
    let combos = args.strategies.resolve()?;
    let ex = extract_manifest(&manifest, &models, &args.frontend, args.mfcc)?;
    let rows = feature_rows(&ex, &models, &combos)?;
    let mut buf = Vec::new();
    write_feature_csv(&mut buf, &rows)?;
    super::write_file(&args.output, buf)?;
    let provenance: Vec<ModelProvenance> =
        models.iter().map(|m| ModelProvenance { source: m.source, id: m.id.clone(), spec: m.model.spec.clone() }).collect();
    let side = serde_json::json!({
        "models": provenance,
        "frontend": args.frontend,
        "failures": ex.failures.iter().map(|(c, e)| serde_json::json!({"clip_id": c, "error": e})).collect::<Vec<_>>(),
    });
    let mut side_path = args.output.clone().into_os_string();
    side_path.push(".json");
    super::write_file(Path::new(&side_path), serde_json::to_string_pretty(&side)? + "\n")?;
    Ok(ExtractOutcome { rows: rows.len(), clips: ex.clip_ids.len(), failures: ex.failures })
}
