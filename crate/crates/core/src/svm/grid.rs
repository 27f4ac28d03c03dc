use serde::{Deserialize, Serialize};

use super::kernel::{KernelSpec, Pairwise};
use super::solver::SolverParams;
use super::svc::{class_positions, fit_pairs, svc_train, vote, SvcModel};
use super::svr::{fit_regressor, svr_train, SvrModel, DEFAULT_EPSILON};
use super::{check_matrix, Result, SvmError};
use crate::eval::{accuracy, r_squared};
use crate::par::map_ordered;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub linear: bool,
    pub rbf: bool,
    pub costs: Vec<f64>,
    pub gammas: Vec<f64>,
    /// Adds `1 / n_features` to the gamma list.
    pub inverse_dim_gamma: bool,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            linear: true,
            rbf: true,
            costs: vec![0.1, 2.0, 8.0, 32.0],
            gammas: [3, 5, 7, 9, 11, 13].iter().map(|&e| 2f64.powi(-e)).collect(),
            inverse_dim_gamma: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub kernel: KernelSpec,
    pub c: f64,
}

impl GridSpec {
    /// Canonical order: linear by ascending C, then rbf by ascending gamma
    /// and ascending C. Equal gammas keep their listed order.
    pub fn configs(&self, n_features: usize) -> Vec<SvmConfig> {
        let mut costs = self.costs.clone();
        costs.sort_by(f64::total_cmp);
        let mut out = Vec::new();
        if self.linear {
            out.extend(costs.iter().map(|&c| SvmConfig { kernel: KernelSpec::Linear, c }));
        }
        if self.rbf {
            let mut gammas = self.gammas.clone();
            if self.inverse_dim_gamma && n_features > 0 {
                gammas.push(1.0 / n_features as f64);
            }
            gammas.sort_by(f64::total_cmp);
            for g in gammas {
                out.extend(costs.iter().map(|&c| SvmConfig { kernel: KernelSpec::Rbf { gamma: g }, c }));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmParams {
    pub solver: SolverParams,
    /// Tube half-width of the regressor.
    pub epsilon: f64,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self { solver: SolverParams::default(), epsilon: DEFAULT_EPSILON }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Targets<'a> {
    Classes(&'a [u32]),
    Values(&'a [f64]),
}

impl Targets<'_> {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(c) => c.len(),
            Targets::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "lowercase")]
pub enum TrainedSvm {
    Classifier(SvcModel),
    Regressor(SvrModel),
}

impl TrainedSvm {
    pub fn fit(x: &[Vec<f64>], targets: Targets<'_>, cfg: &SvmConfig, params: &SvmParams) -> Result<Self> {
        Ok(match targets {
            Targets::Classes(l) => TrainedSvm::Classifier(svc_train(x, l, cfg.c, cfg.kernel, &params.solver)?),
            Targets::Values(v) => TrainedSvm::Regressor(svr_train(x, v, cfg.c, params.epsilon, cfg.kernel, &params.solver)?),
        })
    }

    pub fn config(&self) -> SvmConfig {
        match self {
            TrainedSvm::Classifier(m) => SvmConfig { kernel: m.kernel, c: m.c },
            TrainedSvm::Regressor(m) => SvmConfig { kernel: m.kernel, c: m.c },
        }
    }

    pub fn predict_class(&self, x: &[f64]) -> Result<u32> {
        match self {
            TrainedSvm::Classifier(m) => m.predict(x),
            TrainedSvm::Regressor(_) => Err(SvmError::InvalidParameter("class prediction from a regressor".into())),
        }
    }

    pub fn predict_value(&self, x: &[f64]) -> Result<f64> {
        match self {
            TrainedSvm::Regressor(m) => m.predict(x),
            TrainedSvm::Classifier(_) => Err(SvmError::InvalidParameter("value prediction from a classifier".into())),
        }
    }
}

/// A fit/validation partition of the rows given to [`grid_search`].
pub type SelectionSplit = (Vec<usize>, Vec<usize>);

#[derive(Debug, Clone)]
pub struct GridResult {
    pub configs: Vec<SvmConfig>,
    /// Accuracy or r^2 of the pooled validation predictions, per config.
    /// NaN where the metric is undefined.
    pub scores: Vec<f64>,
    pub best_index: usize,
    /// The best configuration refitted on every row.
    pub model: TrainedSvm,
}

impl GridResult {
    pub fn best(&self) -> SvmConfig {
        self.configs[self.best_index]
    }
}

enum Pooled {
    Classes(Vec<u32>),
    Values(Vec<f64>),
}

fn check_splits(splits: &[SelectionSplit], n: usize) -> Result<()> {
    if splits.is_empty() {
        return Err(SvmError::DegeneratePlan("no selection splits".into()));
    }
    for (k, (fit, valid)) in splits.iter().enumerate() {
        if fit.is_empty() || valid.is_empty() {
            return Err(SvmError::DegeneratePlan(format!("split {k} has an empty portion")));
        }
        let mut seen = vec![false; n];
        for &i in fit.iter().chain(valid) {
            if i >= n || seen[i] {
                return Err(SvmError::DegeneratePlan(format!("split {k} repeats or overruns row {i}")));
            }
            seen[i] = true;
        }
    }
    Ok(())
}

/// Pooled validation predictions of one config on one split, from
/// precomputed pairwise tables.
fn validate_config(
    cfg: &SvmConfig,
    fit_pairs_table: &Pairwise,
    cross: &Pairwise,
    targets: &Targets<'_>,
    fit: &[usize],
    params: &SvmParams,
) -> Result<Pooled> {
    let gram = fit_pairs_table.kernel_matrix(&cfg.kernel);
    let kx = cross.kernel_matrix(&cfg.kernel);
    match targets {
        Targets::Classes(labels) => {
            let fit_labels: Vec<u32> = fit.iter().map(|&i| labels[i]).collect();
            let (classes, pos) = class_positions(&fit_labels);
            if classes.len() < 2 {
                return Err(SvmError::DegeneratePlan("a selection split trains on a single class".into()));
            }
            let machines = fit_pairs(&gram, &pos, classes.len(), cfg.c, &params.solver)?;
            let preds = (0..kx.rows)
                .map(|v| {
                    let row = kx.row(v);
                    let d = machines.iter().map(|m| {
                        let f = m.support.iter().zip(&m.dual_coef).map(|(&s, a)| a * row[s]).sum::<f64>() + m.bias;
                        (m.positive, m.negative, f)
                    });
                    classes[vote(classes.len(), d)]
                })
                .collect();
            Ok(Pooled::Classes(preds))
        }
        Targets::Values(values) => {
            let fit_values: Vec<f64> = fit.iter().map(|&i| values[i]).collect();
            let r = fit_regressor(&gram, &fit_values, cfg.c, params.epsilon, &params.solver)?;
            let preds = (0..kx.rows)
                .map(|v| {
                    let row = kx.row(v);
                    r.support.iter().zip(&r.coef).map(|(&s, b)| b * row[s]).sum::<f64>() + r.bias
                })
                .collect();
            Ok(Pooled::Values(preds))
        }
    }
}

/// Scores every configuration on the pooled validation predictions of
/// `splits`, keeps the first maximum, and refits it on all rows.
pub fn grid_search(x: &[Vec<f64>], targets: Targets<'_>, grid: &GridSpec, splits: &[SelectionSplit], params: &SvmParams) -> Result<GridResult> {
    check_matrix(x, targets.len())?;
    check_splits(splits, x.len())?;
    let configs = grid.configs(x[0].len());
    if configs.is_empty() {
        return Err(SvmError::EmptyGrid);
    }
    let mut pooled_class: Vec<Vec<u32>> = vec![Vec::new(); configs.len()];
    let mut pooled_value: Vec<Vec<f64>> = vec![Vec::new(); configs.len()];
    let mut truth_class = Vec::new();
    let mut truth_value = Vec::new();
    for (fit, valid) in splits {
        let fit_rows: Vec<&[f64]> = fit.iter().map(|&i| x[i].as_slice()).collect();
        let valid_rows: Vec<&[f64]> = valid.iter().map(|&i| x[i].as_slice()).collect();
        let table = Pairwise::symmetric(&fit_rows);
        let cross = Pairwise::between(&valid_rows, &fit_rows);
        let results = map_ordered(&configs, |cfg| validate_config(cfg, &table, &cross, &targets, fit, params));
        for (k, r) in results.into_iter().enumerate() {
            match r? {
                Pooled::Classes(p) => pooled_class[k].extend(p),
                Pooled::Values(p) => pooled_value[k].extend(p),
            }
        }
        match targets {
            Targets::Classes(l) => truth_class.extend(valid.iter().map(|&i| l[i])),
            Targets::Values(v) => truth_value.extend(valid.iter().map(|&i| v[i])),
        }
    }
    let scores: Vec<f64> = (0..configs.len())
        .map(|k| match targets {
            Targets::Classes(_) => accuracy(&pooled_class[k], &truth_class).unwrap_or(f64::NAN),
            Targets::Values(_) => r_squared(&pooled_value[k], &truth_value).unwrap_or(f64::NAN),
        })
        .collect();
    let mut best_index = 0;
    let mut best = f64::NEG_INFINITY;
    for (k, &s) in scores.iter().enumerate() {
        if s > best {
            best = s;
            best_index = k;
        }
    }
    let model = TrainedSvm::fit(x, targets, &configs[best_index], params)?;
    Ok(GridResult { configs, scores, best_index, model })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_has_32_configs_in_canonical_order() {
        let c = GridSpec::default().configs(160);
        assert_eq!(c.len(), 32);
        assert!(c[..4].iter().all(|s| s.kernel == KernelSpec::Linear));
        assert_eq!(c.iter().map(|s| s.c).take(4).collect::<Vec<_>>(), [0.1, 2.0, 8.0, 32.0]);
        let gammas: Vec<f64> = c[4..].iter().step_by(4).map(|s| s.kernel.gamma().unwrap()).collect();
        assert_eq!(gammas.len(), 7);
        assert!(gammas.windows(2).all(|w| w[0] <= w[1]));
        assert!(gammas.contains(&(1.0 / 160.0)));
        assert_eq!(gammas[0], 2f64.powi(-13));
        // 1/32 coincides with 2^-5 and is still its own entry.
        assert_eq!(GridSpec::default().configs(32).len(), 32);
    }

    fn two_fold(n: usize) -> Vec<SelectionSplit> {
        let even: Vec<usize> = (0..n).filter(|i| i % 2 == 0).collect();
        let odd: Vec<usize> = (0..n).filter(|i| i % 2 == 1).collect();
        vec![(even.clone(), odd.clone()), (odd, even)]
    }

    #[test]
    fn rings_select_rbf() {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..60 {
            let t = i as f64 * 0.7;
            let r = if i % 2 == 0 { 1.0 } else { 3.0 };
            x.push(vec![r * t.cos(), r * t.sin()]);
            y.push((i % 2) as u32);
        }
        let grid = GridSpec { gammas: vec![0.5, 0.125], inverse_dim_gamma: false, ..Default::default() };
        let splits = vec![((0..40).collect(), (40..60).collect()), ((20..60).collect(), (0..20).collect())];
        let r = grid_search(&x, Targets::Classes(&y), &grid, &splits, &SvmParams::default()).unwrap();
        assert_eq!(r.best().kernel.name(), "rbf");
        assert_eq!(r.scores[r.best_index], 1.0);
        assert!(r.scores[..4].iter().all(|&s| s < 0.9));
    }

    #[test]
    fn ties_pick_first_config() {
        let x: Vec<Vec<f64>> = (0..12).map(|i| vec![if i % 2 == 0 { -5.0 } else { 5.0 }, 0.1 * i as f64]).collect();
        let y: Vec<u32> = (0..12).map(|i| (i % 2) as u32).collect();
        let halves = vec![((0..6).collect(), (6..12).collect()), ((6..12).collect(), (0..6).collect())];
        let r = grid_search(&x, Targets::Classes(&y), &GridSpec::default(), &halves, &SvmParams::default()).unwrap();
        assert!(r.scores.iter().all(|&s| s == 1.0));
        assert_eq!(r.best_index, 0);
        assert_eq!(r.best(), SvmConfig { kernel: KernelSpec::Linear, c: 0.1 });
    }

    #[test]
    fn fast_path_matches_direct_training() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![(i as f64 * 0.9).sin(), (i as f64 * 0.4).cos()]).collect();
        let y: Vec<f64> = x.iter().map(|v| v[0] * 2.0 - v[1]).collect();
        let splits = two_fold(20);
        let grid = GridSpec { costs: vec![2.0], gammas: vec![0.5], inverse_dim_gamma: false, ..Default::default() };
        let params = SvmParams::default();
        let r = grid_search(&x, Targets::Values(&y), &grid, &splits, &params).unwrap();
        for (k, cfg) in r.configs.iter().enumerate() {
            let mut pred = Vec::new();
            let mut truth = Vec::new();
            for (fit, valid) in &splits {
                let fx: Vec<Vec<f64>> = fit.iter().map(|&i| x[i].clone()).collect();
                let fy: Vec<f64> = fit.iter().map(|&i| y[i]).collect();
                let m = svr_train(&fx, &fy, cfg.c, params.epsilon, cfg.kernel, &params.solver).unwrap();
                pred.extend(valid.iter().map(|&i| m.predict(&x[i]).unwrap()));
                truth.extend(valid.iter().map(|&i| y[i]));
            }
            assert!((r_squared(&pred, &truth).unwrap() - r.scores[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_plans_rejected() {
        let x = vec![vec![0.0], vec![1.0], vec![2.0]];
        let y = [0, 1, 0];
        let g = GridSpec::default();
        let p = SvmParams::default();
        assert!(matches!(grid_search(&x, Targets::Classes(&y), &g, &[], &p), Err(SvmError::DegeneratePlan(_))));
        let overlap = vec![(vec![0, 1], vec![1, 2])];
        assert!(matches!(grid_search(&x, Targets::Classes(&y), &g, &overlap, &p), Err(SvmError::DegeneratePlan(_))));
        let none = GridSpec { linear: false, rbf: false, ..Default::default() };
        let ok = vec![(vec![0, 1], vec![2])];
        assert!(matches!(grid_search(&x, Targets::Classes(&y), &none, &ok, &p), Err(SvmError::EmptyGrid)));
    }
}
