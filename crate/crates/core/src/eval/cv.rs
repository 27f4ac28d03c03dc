use serde::{Deserialize, Serialize};

use super::folds::{kfold, stratified_kfold, FoldPlan, OuterFold};
use super::metrics::{accuracy, per_class_accuracy, r_squared};
use super::standardize::Standardizer;
use super::{EvalError, Result};
use crate::par::map_ordered;
use crate::svm::{grid_search, GridSpec, SelectionSplit, SvmConfig, SvmParams, Targets};

#[derive(Debug, Clone, PartialEq)]
pub enum TargetData {
    Classes(Vec<u32>),
    Values(Vec<f64>),
}

impl TargetData {
    pub fn len(&self) -> usize {
        match self {
            TargetData::Classes(c) => c.len(),
            TargetData::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_targets(&self) -> Targets<'_> {
        match self {
            TargetData::Classes(c) => Targets::Classes(c),
            TargetData::Values(v) => Targets::Values(v),
        }
    }

    pub fn subset(&self, idx: &[usize]) -> TargetData {
        match self {
            TargetData::Classes(c) => TargetData::Classes(idx.iter().map(|&i| c[i]).collect()),
            TargetData::Values(v) => TargetData::Values(idx.iter().map(|&i| v[i]).collect()),
        }
    }

    pub fn metric(&self) -> Metric {
        match self {
            TargetData::Classes(_) => Metric::Accuracy,
            TargetData::Values(_) => Metric::RSquared,
        }
    }
}

pub type Predictions = TargetData;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Accuracy,
    #[serde(rename = "r2")]
    RSquared,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::RSquared => "r2",
        }
    }

    pub fn score(&self, pred: &Predictions, truth: &TargetData) -> Result<f64> {
        match (self, pred, truth) {
            (Metric::Accuracy, TargetData::Classes(p), TargetData::Classes(t)) => accuracy(p, t),
            (Metric::RSquared, TargetData::Values(p), TargetData::Values(t)) => r_squared(p, t),
            _ => Err(EvalError::TargetKind),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldOutput {
    pub predictions: Predictions,
    /// Hyperparameters the pipeline selected, if it selects any.
    pub config: Option<SvmConfig>,
}

/// Fits on one training portion and predicts held-out rows. Implementations
/// only ever see the training rows while fitting.
pub trait Pipeline: Sync {
    fn fit_predict(
        &self,
        fold: usize,
        train_x: &[Vec<f64>],
        train_y: &TargetData,
        test_x: &[Vec<f64>],
        selection: Option<&SelectionSplit>,
    ) -> Result<FoldOutput>;
}

/// Standardize, grid-search on an inner plan, refit, predict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmPipeline {
    pub grid: GridSpec,
    pub params: SvmParams,
    pub standardize: bool,
    pub inner_folds: usize,
    pub seed: u64,
}

impl Default for SvmPipeline {
    fn default() -> Self {
        Self { grid: GridSpec::default(), params: SvmParams::default(), standardize: true, inner_folds: 3, seed: 0 }
    }
}

impl SvmPipeline {
    /// Inner selection seed of an outer fold.
    pub fn inner_seed(&self, fold: usize) -> u64 {
        self.seed.wrapping_add(1000 + fold as u64)
    }

    fn inner_splits(&self, fold: usize, y: &TargetData) -> Result<Vec<SelectionSplit>> {
        let k = self.inner_folds.min(y.len());
        let plan = match y {
            TargetData::Classes(l) => stratified_kfold(l, k, self.inner_seed(fold))?,
            TargetData::Values(v) => kfold(v.len(), k, self.inner_seed(fold))?,
        };
        Ok(plan.outer_folds().into_iter().map(|f| (f.train, f.test)).collect())
    }
}

impl Pipeline for SvmPipeline {
    fn fit_predict(
        &self,
        fold: usize,
        train_x: &[Vec<f64>],
        train_y: &TargetData,
        test_x: &[Vec<f64>],
        selection: Option<&SelectionSplit>,
    ) -> Result<FoldOutput> {
        let (tx, sx) = if self.standardize {
            let s = Standardizer::fit(train_x)?;
            (s.apply(train_x)?, s.apply(test_x)?)
        } else {
            (train_x.to_vec(), test_x.to_vec())
        };
        let splits = match selection {
            Some(s) => vec![s.clone()],
            None => self.inner_splits(fold, train_y)?,
        };
        let r = grid_search(&tx, train_y.as_targets(), &self.grid, &splits, &self.params)?;
        let predictions = match train_y {
            TargetData::Classes(_) => TargetData::Classes(sx.iter().map(|x| r.model.predict_class(x)).collect::<std::result::Result<_, _>>()?),
            TargetData::Values(_) => TargetData::Values(sx.iter().map(|x| r.model.predict_value(x)).collect::<std::result::Result<_, _>>()?),
        };
        Ok(FoldOutput { predictions, config: Some(r.best()) })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldScore {
    pub fold: usize,
    pub n_test: usize,
    pub score: f64,
    pub config: Option<SvmConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub metric: Metric,
    pub folds: Vec<FoldScore>,
    /// Fold scores weighted by fold size.
    pub mean: f64,
    /// Held-out rows in fold order, with their predictions.
    pub rows: Vec<usize>,
    pub predictions: Predictions,
}

impl CvResult {
    pub fn unweighted_mean(&self) -> f64 {
        self.folds.iter().map(|f| f.score).sum::<f64>() / self.folds.len() as f64
    }

    /// Per-class accuracy over all held-out predictions.
    pub fn per_class(&self, truth: &TargetData) -> Result<Vec<(u32, f64)>> {
        match (&self.predictions, truth) {
            (TargetData::Classes(p), TargetData::Classes(t)) => {
                let t: Vec<u32> = self.rows.iter().map(|&i| t[i]).collect();
                per_class_accuracy(p, &t)
            }
            _ => Err(EvalError::TargetKind),
        }
    }
}

fn guard(fold: &OuterFold, n: usize) -> Result<()> {
    let mut in_train = vec![false; n];
    for &i in &fold.train {
        if i >= n {
            return Err(EvalError::Leakage(format!("fold {} trains on row {i} outside the dataset", fold.fold)));
        }
        in_train[i] = true;
    }
    if let Some(&i) = fold.test.iter().find(|&&i| i >= n || in_train[i]) {
        return Err(EvalError::Leakage(format!("fold {} trains on held-out row {i}", fold.fold)));
    }
    if fold.test.is_empty() || fold.train.is_empty() {
        return Err(EvalError::Leakage(format!("fold {} has an empty portion", fold.fold)));
    }
    Ok(())
}

/// Runs `pipeline` on every outer fold of `plan`, handing it copies of the
/// training rows only.
pub fn cross_validate<P: Pipeline>(x: &[Vec<f64>], y: &TargetData, plan: &FoldPlan, pipeline: &P) -> Result<CvResult> {
    if x.len() != y.len() || plan.len() != y.len() {
        return Err(EvalError::LengthMismatch { expected: y.len(), got: plan.len().min(x.len()) });
    }
    let metric = y.metric();
    let folds = plan.outer_folds();
    for f in &folds {
        guard(f, x.len())?;
    }
    let outputs = map_ordered(&folds, |f| {
        let train_x: Vec<Vec<f64>> = f.train.iter().map(|&i| x[i].clone()).collect();
        let test_x: Vec<Vec<f64>> = f.test.iter().map(|&i| x[i].clone()).collect();
        let out = pipeline.fit_predict(f.fold, &train_x, &y.subset(&f.train), &test_x, f.selection.as_ref())?;
        let score = metric.score(&out.predictions, &y.subset(&f.test))?;
        Ok::<_, EvalError>((out, score))
    });
    let mut scores = Vec::with_capacity(folds.len());
    let mut rows = Vec::new();
    let mut pooled = match y {
        TargetData::Classes(_) => TargetData::Classes(Vec::new()),
        TargetData::Values(_) => TargetData::Values(Vec::new()),
    };
    for (f, out) in folds.iter().zip(outputs) {
        let (out, score) = out?;
        match (&mut pooled, out.predictions) {
            (TargetData::Classes(a), TargetData::Classes(b)) if b.len() == f.test.len() => a.extend(b),
            (TargetData::Values(a), TargetData::Values(b)) if b.len() == f.test.len() => a.extend(b),
            _ => return Err(EvalError::TargetKind),
        }
        rows.extend(&f.test);
        scores.push(FoldScore { fold: f.fold, n_test: f.test.len(), score, config: out.config });
    }
    let total: usize = scores.iter().map(|s| s.n_test).sum();
    let mean = scores.iter().map(|s| s.score * s.n_test as f64).sum::<f64>() / total as f64;
    Ok(CvResult { metric, folds: scores, mean, rows, predictions: pooled })
}
