use serde::{Deserialize, Serialize};

use super::kernel::{KernelSource, KernelSpec, VectorKernel};
use super::solver::{solve, SolverParams};
use super::{check_matrix, Result, SvmError};

pub const DEFAULT_EPSILON: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct IndexedRegressor {
    pub support: Vec<usize>,
    pub coef: Vec<f64>,
    pub bias: f64,
}

/// `f(x) = sum_k coef[k] K(sv_k, x) + bias` with `coef = alpha - alpha*`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    pub kernel: KernelSpec,
    pub c: f64,
    pub epsilon: f64,
    pub n_features: usize,
    pub support_vectors: Vec<Vec<f64>>,
    pub coef: Vec<f64>,
    pub bias: f64,
}

impl SvrModel {
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(SvmError::DimensionMismatch { expected: self.n_features, got: x.len() });
        }
        Ok(self.support_vectors.iter().zip(&self.coef).map(|(sv, b)| b * self.kernel.eval_unchecked(sv, x)).sum::<f64>() + self.bias)
    }
}

/// Epsilon-insensitive dual over `2n` variables: `alpha` (sign +1) then
/// `alpha*` (sign -1), with linear terms `eps - y` and `eps + y`.
pub(crate) fn fit_regressor<S: KernelSource + ?Sized>(
    src: &S,
    targets: &[f64],
    c: f64,
    epsilon: f64,
    params: &SolverParams,
) -> Result<IndexedRegressor> {
    let n = targets.len();
    if n < 2 {
        return Err(SvmError::TooFewSamples(n));
    }
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(SvmError::InvalidParameter(format!("epsilon must be nonnegative, got {epsilon}")));
    }
    let mut y = vec![1.0; 2 * n];
    y[n..].iter_mut().for_each(|v| *v = -1.0);
    let p: Vec<f64> = targets.iter().map(|t| epsilon - t).chain(targets.iter().map(|t| epsilon + t)).collect();
    let sol = solve(src, &y, &p, c, params)?;
    let mut support = Vec::new();
    let mut coef = Vec::new();
    for i in 0..n {
        let beta = sol.alpha[i] - sol.alpha[i + n];
        if beta != 0.0 {
            support.push(i);
            coef.push(beta);
        }
    }
    Ok(IndexedRegressor { support, coef, bias: -sol.rho })
}

pub(crate) fn materialize(x: &[Vec<f64>], kernel: KernelSpec, c: f64, epsilon: f64, r: IndexedRegressor) -> SvrModel {
    SvrModel {
        kernel,
        c,
        epsilon,
        n_features: x.first().map_or(0, |v| v.len()),
        support_vectors: r.support.iter().map(|&i| x[i].clone()).collect(),
        coef: r.coef,
        bias: r.bias,
    }
}

pub fn svr_train(x: &[Vec<f64>], y: &[f64], c: f64, epsilon: f64, kernel: KernelSpec, params: &SolverParams) -> Result<SvrModel> {
    check_matrix(x, y.len())?;
    kernel.validate()?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(SvmError::NonFinite);
    }
    let r = fit_regressor(&VectorKernel { x, kernel }, y, c, epsilon, params)?;
    Ok(materialize(x, kernel, c, epsilon, r))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_targets_give_flat_model() {
        let x: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, -(i as f64)]).collect();
        let m = svr_train(&x, &[4.2; 6], 8.0, DEFAULT_EPSILON, KernelSpec::rbf(0.5).unwrap(), &SolverParams::default()).unwrap();
        assert!(m.coef.is_empty());
        assert!((m.bias - 4.2).abs() < 1e-12);
        assert!((m.predict(&[10.0, 3.0]).unwrap() - 4.2).abs() < 1e-12);
    }

    #[test]
    fn identity_line_within_tube() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 / 9.0]).collect();
        let y: Vec<f64> = x.iter().map(|v| v[0]).collect();
        let params = SolverParams::default();
        let m = svr_train(&x, &y, 32.0, 0.01, KernelSpec::Linear, &params).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            assert!((m.predict(xi).unwrap() - yi).abs() <= 0.01 + params.tol, "x = {}", xi[0]);
        }
        assert!(m.coef.iter().sum::<f64>().abs() < 1e-6);
        assert!(m.coef.iter().all(|b| b.abs() <= 32.0));
    }

    #[test]
    fn duplicated_data_predicts_the_same() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 / 9.0]).collect();
        let y: Vec<f64> = x.iter().map(|v| v[0]).collect();
        let x2: Vec<Vec<f64>> = x.iter().flat_map(|v| [v.clone(), v.clone()]).collect();
        let y2: Vec<f64> = y.iter().flat_map(|&v| [v, v]).collect();
        let params = SolverParams { tol: 1e-8, ..Default::default() };
        let a = svr_train(&x, &y, 32.0, 0.01, KernelSpec::Linear, &params).unwrap();
        let b = svr_train(&x2, &y2, 32.0, 0.01, KernelSpec::Linear, &params).unwrap();
        for t in 0..=20 {
            let v = [t as f64 / 20.0];
            assert!((a.predict(&v).unwrap() - b.predict(&v).unwrap()).abs() < 1e-6);
        }
    }

    #[test]
    fn non_finite_targets_rejected() {
        let x = vec![vec![0.0], vec![1.0]];
        let r = svr_train(&x, &[0.0, f64::NAN], 1.0, 0.1, KernelSpec::Linear, &SolverParams::default());
        assert!(matches!(r, Err(SvmError::NonFinite)));
    }
}
