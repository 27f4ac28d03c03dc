use serde::{Deserialize, Serialize};

use super::{EvalError, Result};

/// Per-dimension mean and population standard deviation of a training
/// portion. Only obtainable by fitting, so it cannot be applied unfitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &[Vec<f64>]) -> Result<Self> {
        let rows: Vec<&[f64]> = x.iter().map(|r| r.as_slice()).collect();
        Self::fit_refs(&rows)
    }

    /// Fits on `rows` of `x`, refusing any row listed in `held_out`.
    pub fn fit_rows(x: &[Vec<f64>], rows: &[usize], held_out: &[usize]) -> Result<Self> {
        if let Some(r) = rows.iter().find(|r| held_out.contains(r)) {
            return Err(EvalError::Leakage(format!("standardizer fitted on held-out row {r}")));
        }
        let refs: Vec<&[f64]> = rows.iter().map(|&i| x[i].as_slice()).collect();
        Self::fit_refs(&refs)
    }

    fn fit_refs(x: &[&[f64]]) -> Result<Self> {
        let Some(first) = x.first() else { return Err(EvalError::Empty) };
        let d = first.len();
        let n = x.len() as f64;
        let mut mean = vec![0.0; d];
        for row in x {
            if row.len() != d {
                return Err(EvalError::LengthMismatch { expected: d, got: row.len() });
            }
            for (m, v) in mean.iter_mut().zip(*row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for row in x {
            for ((s, v), m) in var.iter_mut().zip(*row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var.into_iter().map(|s| if s > 0.0 { (s / n).sqrt() } else { 1.0 }).collect();
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Standard deviations, with 1 in place of zero.
    pub fn std(&self) -> &[f64] {
        &self.std
    }

    pub fn apply_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.dim() {
            return Err(EvalError::LengthMismatch { expected: self.dim(), got: row.len() });
        }
        Ok(row.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect())
    }

    pub fn apply(&self, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        x.iter().map(|r| self.apply_row(r)).collect()
    }
}

pub fn standardize_fit(x: &[Vec<f64>]) -> Result<Standardizer> {
    Standardizer::fit(x)
}

pub fn standardize_apply(s: &Standardizer, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    s.apply(x)
}
