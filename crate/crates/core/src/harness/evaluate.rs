use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use super::config::{CvKind, ExperimentConfig, TaskKind};
use super::extract::{extract_manifest, feature_rows, load_model_file, random_model, read_feature_csv, FeatureRow, LoadedModel, SOURCE_MFCC};
use super::report::{cmd_report, render_markdown, write_results_csv, ReportOutcome, ResultRow, MEAN_FOLD, SOURCE_COMBO_MFCC, SOURCE_RANDOM, SOURCE_TRAINED};
use super::{write_file, HarnessError, Result};
use crate::eval::{
    cross_validate, encode_labels, grouped_kfold, kfold, predefined_split, read_manifest, stratified_kfold, DatasetTargets, FoldPlan, FoldScore,
    LabeledDataset, Manifest, SvmPipeline, TargetData,
};
use crate::features::{combo_name, parse_combo, LayerCombo};
use crate::par::map_ordered;

/// One evaluated strategy on one target.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyResult {
    pub strategy: String,
    /// `trained`, `random`, `mfcc` or `combo+mfcc`.
    pub source: String,
    pub metric: String,
    pub folds: Vec<FoldScore>,
    /// Unweighted mean of the fold scores.
    pub mean: f64,
    /// Class name and accuracy over all held-out predictions.
    pub per_class: Option<Vec<(String, f64)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluateOutcome {
    pub results: Vec<StrategyResult>,
    pub results_csv: PathBuf,
    pub n_clips: usize,
    /// Manifest clips left out, with the reason.
    pub skipped: Vec<(String, String)>,
    pub plan: FoldPlan,
    pub report: ReportOutcome,
}

/// Feature parts concatenated into one strategy's vectors.
struct StrategySpec {
    name: String,
    source: String,
    parts: Vec<(String, String)>,
}

fn strategy_specs(cfg: &ExperimentConfig, combos: &[LayerCombo], rows: &[FeatureRow]) -> Result<Vec<StrategySpec>> {
    let has = |src: &str| rows.iter().any(|r| r.source == src);
    let mut specs = Vec::new();
    for src in [SOURCE_TRAINED, SOURCE_RANDOM].into_iter().filter(|s| has(s)) {
        for c in combos {
            let name = combo_name(c);
            specs.push(StrategySpec { name: name.clone(), source: src.into(), parts: vec![(src.into(), name)] });
        }
    }
    if has(SOURCE_MFCC) {
        if cfg.baselines.mfcc {
            specs.push(StrategySpec { name: SOURCE_MFCC.into(), source: SOURCE_MFCC.into(), parts: vec![(SOURCE_MFCC.into(), SOURCE_MFCC.into())] });
        }
        let primary = [SOURCE_TRAINED, SOURCE_RANDOM].into_iter().find(|s| has(s));
        if let (true, Some(src)) = (cfg.baselines.combo_mfcc, primary) {
            let combo = combo_name(&parse_combo(&cfg.baselines.combo)?);
            specs.push(StrategySpec {
                name: format!("{combo}+{SOURCE_MFCC}"),
                source: SOURCE_COMBO_MFCC.into(),
                parts: vec![(src.into(), combo), (SOURCE_MFCC.into(), SOURCE_MFCC.into())],
            });
        }
    }
    if specs.is_empty() {
        return Err(HarnessError::Config("no strategy has features available".into()));
    }
    Ok(specs)
}

fn gather_rows(cfg: &ExperimentConfig, manifest: &Manifest, combos: &[LayerCombo]) -> Result<(Vec<FeatureRow>, Vec<(String, String)>, Vec<String>)> {
    if let Some(path) = &cfg.features {
        return Ok((read_feature_csv(path)?, Vec::new(), vec![format!("features read from {}", path.display())]));
    }
    let mut models: Vec<LoadedModel> = Vec::new();
    if let Some(p) = &cfg.trained_model {
        models.push(load_model_file(p)?);
    }
    if let Some(p) = &cfg.random_model {
        models.push(load_model_file(p)?);
    } else if let Some(seed) = cfg.random_seed {
        models.push(random_model(&cfg.preset, seed)?);
    }
    let mut needed = combos.to_vec();
    let baseline = parse_combo(&cfg.baselines.combo)?;
    if cfg.baselines.combo_mfcc && !needed.contains(&baseline) {
        needed.push(baseline);
    }
    let mfcc = cfg.baselines.mfcc || cfg.baselines.combo_mfcc;
    let ex = extract_manifest(manifest, &models, &cfg.frontend, mfcc)?;
    let notes = models.iter().map(|m| format!("{} model: {}", m.source.as_str(), m.id)).collect();
    Ok((feature_rows(&ex, &models, &needed)?, ex.failures, notes))
}

fn target_blocks(cfg: &ExperimentConfig, manifest: &Manifest) -> Result<Vec<(String, TargetData, Option<Vec<String>>)>> {
    let targets = match cfg.task {
        TaskKind::Classify => {
            let (names, ids) = encode_labels(&manifest.rows.iter().map(|r| r.label.as_str()).collect::<Vec<_>>());
            DatasetTargets::Classes { names, ids }
        }
        TaskKind::Regress => LabeledDataset::targets_of(manifest, true)?,
        TaskKind::Auto => LabeledDataset::targets_of(manifest, false)?,
    };
    Ok(match targets {
        DatasetTargets::Classes { names, ids } => vec![("accuracy".into(), TargetData::Classes(ids), Some(names))],
        DatasetTargets::Regression { names, values } if names.len() == 1 => vec![("r2".into(), TargetData::Values(values[0].clone()), None)],
        DatasetTargets::Regression { names, values } => {
            names.into_iter().zip(values).map(|(n, v)| (format!("r2_{n}"), TargetData::Values(v), None)).collect()
        }
    })
}

fn outer_plan(cfg: &ExperimentConfig, manifest: &Manifest, first: &TargetData) -> Result<FoldPlan> {
    let groups = manifest.has_group.then(|| manifest.rows.iter().map(|r| r.group.clone().unwrap_or_default()).collect::<Vec<_>>());
    let split = manifest.has_split.then(|| manifest.rows.iter().map(|r| r.split.clone().unwrap_or_default()).collect::<Vec<_>>());
    let (k, seed) = (cfg.cv.k, cfg.seed);
    let missing = |col: &str| HarnessError::Config(format!("plan '{col}' needs a {col} column in the manifest"));
    Ok(match cfg.cv.kind {
        CvKind::Auto => {
            let targets = match first {
                TargetData::Classes(ids) => DatasetTargets::Classes { names: Vec::new(), ids: ids.clone() },
                TargetData::Values(v) => DatasetTargets::Regression { names: Vec::new(), values: vec![v.clone()] },
            };
            let ds = LabeledDataset { clip_ids: Vec::new(), features: vec![Vec::new(); first.len()], targets, groups, split };
            ds.default_plan(k, seed)?
        }
        CvKind::Stratified => match first {
            TargetData::Classes(ids) => stratified_kfold(ids, k, seed)?,
            TargetData::Values(_) => return Err(HarnessError::Config("stratified folds need class labels".into())),
        },
        CvKind::Kfold => kfold(first.len(), k, seed)?,
        CvKind::Grouped => grouped_kfold(&groups.ok_or_else(|| missing("group"))?, k, seed)?,
        CvKind::Predefined => predefined_split(&split.ok_or_else(|| missing("split"))?)?,
    })
}

fn result_rows(results: &[StrategyResult]) -> Vec<ResultRow> {
    let mut rows = Vec::new();
    for r in results {
        for f in &r.folds {
            let cfg = f.config.as_ref();
            rows.push(ResultRow {
                strategy: r.strategy.clone(),
                source: r.source.clone(),
                fold: f.fold.to_string(),
                metric: r.metric.clone(),
                score: f.score,
                kernel: cfg.map(|c| c.kernel.name().to_string()).unwrap_or_default(),
                gamma: cfg.and_then(|c| c.kernel.gamma()),
                c: cfg.map(|c| c.c),
            });
        }
        rows.push(ResultRow {
            strategy: r.strategy.clone(),
            source: r.source.clone(),
            fold: MEAN_FOLD.into(),
            metric: r.metric.clone(),
            score: r.mean,
            kernel: String::new(),
            gamma: None,
            c: None,
        });
    }
    rows
}

fn per_class_csv(results: &[StrategyResult]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["strategy", "source", "class", "accuracy"])?;
    for r in results {
        for (class, acc) in r.per_class.iter().flatten() {
            w.write_record([&r.strategy, &r.source, class, &acc.to_string()])?;
        }
    }
    w.into_inner().map_err(|e| HarnessError::Results(e.to_string()))
}

/// Cross-validates every strategy and baseline and writes `results.csv`,
/// `per_class_accuracy.csv`, `summary.md`, `resolved_config.json` and the
/// report into the output directory.
pub fn cmd_evaluate(cfg: &ExperimentConfig) -> Result<EvaluateOutcome> {
    cfg.validate()?;
    let out = &cfg.output_dir;
    cfg.write_resolved(out)?;
    let full = read_manifest(cfg.manifest.as_ref().expect("validated"))?;
    let combos = cfg.strategies.resolve()?;
    let (rows, mut skipped, notes) = gather_rows(cfg, &full, &combos)?;
    let specs = strategy_specs(cfg, &combos, &rows)?;

    let index: HashMap<(&str, &str, &str), &[f32]> =
        rows.iter().map(|r| ((r.clip_id.as_str(), r.source.as_str(), r.combo.as_str()), r.values.as_slice())).collect();
    let mut manifest = full.clone();
    manifest.rows.retain(|row| {
        let present = specs.iter().all(|s| s.parts.iter().all(|(src, c)| index.contains_key(&(row.clip_id.as_str(), src.as_str(), c.as_str()))));
        if !present && !skipped.iter().any(|(id, _)| *id == row.clip_id) {
            skipped.push((row.clip_id.clone(), "missing features".into()));
        }
        present
    });
    if manifest.rows.is_empty() {
        let missing: Vec<String> = specs
            .iter()
            .flat_map(|s| &s.parts)
            .filter(|(src, c)| !rows.iter().any(|r| r.source == *src && r.combo == *c))
            .map(|(src, c)| format!("{c} ({src})"))
            .collect();
        return Err(HarnessError::Config(format!("no manifest clip has features for every strategy; missing {}", missing.join(", "))));
    }

    let matrices: Vec<Vec<Vec<f64>>> = specs
        .iter()
        .map(|s| {
            manifest
                .rows
                .iter()
                .map(|row| s.parts.iter().flat_map(|(src, c)| index[&(row.clip_id.as_str(), src.as_str(), c.as_str())].iter().map(|&v| v as f64)).collect())
                .collect()
        })
        .collect();
    let blocks = target_blocks(cfg, &manifest)?;
    let plan = outer_plan(cfg, &manifest, &blocks[0].1)?;
    let pipeline = SvmPipeline { grid: cfg.grid.clone(), params: cfg.svm, standardize: cfg.standardize, inner_folds: cfg.cv.inner_folds, seed: cfg.seed };

    let jobs: Vec<(usize, usize)> = (0..blocks.len()).flat_map(|b| (0..specs.len()).map(move |s| (b, s))).collect();
    let outcomes = map_ordered(&jobs, |&(b, s)| cross_validate(&matrices[s], &blocks[b].1, &plan, &pipeline));
    let mut results = Vec::with_capacity(jobs.len());
    for (&(b, s), cv) in jobs.iter().zip(outcomes) {
        let cv = cv?;
        let (metric, truth, names) = &blocks[b];
        let per_class = match names {
            Some(names) => Some(cv.per_class(truth)?.into_iter().map(|(c, a)| (names[c as usize].clone(), a)).collect()),
            None => None,
        };
        results.push(StrategyResult {
            strategy: specs[s].name.clone(),
            source: specs[s].source.clone(),
            metric: metric.clone(),
            mean: cv.unweighted_mean(),
            folds: cv.folds,
            per_class,
        });
    }

    let results_csv = out.join("results.csv");
    write_file(&results_csv, write_results_csv(&result_rows(&results))?)?;
    if blocks.iter().any(|b| b.2.is_some()) {
        write_file(&out.join("per_class_accuracy.csv"), per_class_csv(&results)?)?;
    }
    let report = cmd_report(&results_csv, out)?;
    write_file(&out.join("summary.md"), summary(cfg, &manifest, &plan, &skipped, &notes, &report))?;
    Ok(EvaluateOutcome { results, results_csv, n_clips: manifest.rows.len(), skipped, plan, report })
}

fn summary(cfg: &ExperimentConfig, manifest: &Manifest, plan: &FoldPlan, skipped: &[(String, String)], notes: &[String], report: &ReportOutcome) -> String {
    let mut s = String::from("# Evaluation summary\n\n");
    let _ = writeln!(s, "- clips evaluated: {}", manifest.rows.len());
    let _ = writeln!(s, "- outer plan: {:?}, {} folds, seed {}", plan.kind, plan.outer_folds().len(), plan.seed);
    let _ = writeln!(s, "- inner selection: {} folds per outer training portion", cfg.cv.inner_folds);
    let _ = writeln!(s, "- standardization: {}", if cfg.standardize { "on (fit on each training portion)" } else { "off" });
    let _ = writeln!(s, "- reported mean: unweighted mean of fold scores");
    for n in notes {
        let _ = writeln!(s, "- {n}");
    }
    for w in &plan.warnings {
        let _ = writeln!(s, "- warning: {w}");
    }
    if !skipped.is_empty() {
        let _ = writeln!(s, "\n## Skipped clips\n");
        for (id, why) in skipped {
            let _ = writeln!(s, "- {id}: {why}");
        }
    }
    s.push('\n');
    s.push_str(&render_markdown(&report.aggregates));
    s
}
