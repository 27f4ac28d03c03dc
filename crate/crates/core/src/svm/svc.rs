use serde::{Deserialize, Serialize};

use super::kernel::{KernelSource, KernelSpec, Subset, VectorKernel};
use super::solver::{solve, SolverParams};
use super::{check_matrix, Result, SvmError};

/// One pairwise machine trained on index positions of a kernel source.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct IndexedMachine {
    pub positive: usize,
    pub negative: usize,
    pub support: Vec<usize>,
    pub dual_coef: Vec<f64>,
    pub bias: f64,
}

/// `f(x) = sum_k dual_coef[k] K(sv_k, x) + bias`; positive votes for
/// `classes[positive]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryMachine {
    pub positive: usize,
    pub negative: usize,
    pub support_vectors: Vec<Vec<f64>>,
    /// `alpha_i y_i` per support vector.
    pub dual_coef: Vec<f64>,
    pub bias: f64,
}

impl BinaryMachine {
    pub fn decision(&self, kernel: &KernelSpec, x: &[f64]) -> f64 {
        self.support_vectors.iter().zip(&self.dual_coef).map(|(sv, a)| a * kernel.eval_unchecked(sv, x)).sum::<f64>() + self.bias
    }
}

/// One-vs-one classifier over sorted class ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvcModel {
    pub classes: Vec<u32>,
    pub kernel: KernelSpec,
    pub c: f64,
    pub n_features: usize,
    /// Pairs `(a, b)` with `a < b` in lexicographic order.
    pub machines: Vec<BinaryMachine>,
}

/// Majority vote; ties go to the class listed first.
pub(crate) fn vote(n_classes: usize, decisions: impl Iterator<Item = (usize, usize, f64)>) -> usize {
    let mut votes = vec![0usize; n_classes];
    for (pos, neg, d) in decisions {
        votes[if d > 0.0 { pos } else { neg }] += 1;
    }
    let mut best = 0;
    for (k, &v) in votes.iter().enumerate() {
        if v > votes[best] {
            best = k;
        }
    }
    best
}

impl SvcModel {
    pub fn decision_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_features {
            return Err(SvmError::DimensionMismatch { expected: self.n_features, got: x.len() });
        }
        Ok(self.machines.iter().map(|m| m.decision(&self.kernel, x)).collect())
    }

    pub fn predict(&self, x: &[f64]) -> Result<u32> {
        let d = self.decision_values(x)?;
        let k = vote(self.classes.len(), self.machines.iter().zip(d).map(|(m, v)| (m.positive, m.negative, v)));
        Ok(self.classes[k])
    }

    pub fn n_support(&self) -> usize {
        self.machines.iter().map(|m| m.support_vectors.len()).sum()
    }
}

/// Trains the `(a, b)` machines on a kernel source whose samples carry class
/// positions `labels[i] < n_classes`.
pub(crate) fn fit_pairs<S: KernelSource + ?Sized>(
    src: &S,
    labels: &[usize],
    n_classes: usize,
    c: f64,
    params: &SolverParams,
) -> Result<Vec<IndexedMachine>> {
    let mut out = Vec::with_capacity(n_classes * (n_classes - 1) / 2);
    for a in 0..n_classes {
        for b in a + 1..n_classes {
            let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == a || labels[i] == b).collect();
            let y: Vec<f64> = idx.iter().map(|&i| if labels[i] == a { 1.0 } else { -1.0 }).collect();
            if !y.iter().any(|&v| v > 0.0) || !y.iter().any(|&v| v < 0.0) {
                return Err(SvmError::SingleClass);
            }
            let sub = Subset { inner: src, idx: &idx };
            let sol = solve(&sub, &y, &vec![-1.0; y.len()], c, params)?;
            let mut support = Vec::new();
            let mut dual_coef = Vec::new();
            for (k, &a_k) in sol.alpha.iter().enumerate() {
                if a_k > 0.0 {
                    support.push(idx[k]);
                    dual_coef.push(a_k * y[k]);
                }
            }
            out.push(IndexedMachine { positive: a, negative: b, support, dual_coef, bias: -sol.rho });
        }
    }
    Ok(out)
}

/// Sorted distinct classes and each sample's position among them.
pub(crate) fn class_positions(labels: &[u32]) -> (Vec<u32>, Vec<usize>) {
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let pos = labels.iter().map(|l| classes.binary_search(l).expect("label present")).collect();
    (classes, pos)
}

pub(crate) fn materialize(x: &[Vec<f64>], classes: Vec<u32>, kernel: KernelSpec, c: f64, machines: Vec<IndexedMachine>) -> SvcModel {
    let n_features = x.first().map_or(0, |v| v.len());
    let machines = machines
        .into_iter()
        .map(|m| BinaryMachine {
            positive: m.positive,
            negative: m.negative,
            support_vectors: m.support.iter().map(|&i| x[i].clone()).collect(),
            dual_coef: m.dual_coef,
            bias: m.bias,
        })
        .collect();
    SvcModel { classes, kernel, c, n_features, machines }
}

/// Binary machine for `y` in {-1, +1}; the positive class is `+1`.
pub fn svc_train_binary(x: &[Vec<f64>], y: &[f64], c: f64, kernel: KernelSpec, params: &SolverParams) -> Result<BinaryMachine> {
    check_matrix(x, y.len())?;
    kernel.validate()?;
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(SvmError::InvalidParameter("binary targets must be -1 or +1".into()));
    }
    let labels: Vec<usize> = y.iter().map(|&v| if v > 0.0 { 0 } else { 1 }).collect();
    let src = VectorKernel { x, kernel };
    let m = fit_pairs(&src, &labels, 2, c, params)?.remove(0);
    Ok(materialize(x, vec![1, 0], kernel, c, vec![m]).machines.remove(0))
}

/// One-vs-one multiclass training.
pub fn svc_train(x: &[Vec<f64>], labels: &[u32], c: f64, kernel: KernelSpec, params: &SolverParams) -> Result<SvcModel> {
    check_matrix(x, labels.len())?;
    kernel.validate()?;
    let (classes, pos) = class_positions(labels);
    if classes.len() < 2 {
        return Err(SvmError::SingleClass);
    }
    let src = VectorKernel { x, kernel };
    let machines = fit_pairs(&src, &pos, classes.len(), c, params)?;
    Ok(materialize(x, classes, kernel, c, machines))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_qp_decision_is_identity() {
        let x = vec![vec![-1.0], vec![1.0]];
        let m = svc_train_binary(&x, &[-1.0, 1.0], 32.0, KernelSpec::Linear, &SolverParams::default()).unwrap();
        assert_eq!(m.bias, 0.0);
        assert_eq!(m.support_vectors.len(), 2);
        for v in [-3.0, -0.25, 0.0, 2.0] {
            assert!((m.decision(&KernelSpec::Linear, &[v]) - v).abs() < 1e-15);
        }
    }

    #[test]
    fn xor_is_separated_by_rbf() {
        let x = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]];
        let labels = [0, 0, 1, 1];
        let m = svc_train(&x, &labels, 32.0, KernelSpec::rbf(1.0).unwrap(), &SolverParams::default()).unwrap();
        for (xi, &l) in x.iter().zip(&labels) {
            assert_eq!(m.predict(xi).unwrap(), l);
        }
    }

    #[test]
    fn single_class_rejected() {
        let x = vec![vec![0.0], vec![1.0]];
        assert!(matches!(svc_train(&x, &[3, 3], 1.0, KernelSpec::Linear, &SolverParams::default()), Err(SvmError::SingleClass)));
        assert!(matches!(
            svc_train_binary(&x, &[1.0, 1.0], 1.0, KernelSpec::Linear, &SolverParams::default()),
            Err(SvmError::SingleClass)
        ));
    }

    #[test]
    fn three_way_tie_goes_to_first_class() {
        // Each class wins exactly one pairwise contest.
        let d = [(0, 1, 1.0), (0, 2, -1.0), (1, 2, 1.0)];
        assert_eq!(vote(3, d.into_iter()), 0);
        let d = [(0, 1, -1.0), (0, 2, -1.0), (1, 2, 1.0)];
        assert_eq!(vote(3, d.into_iter()), 1);
    }

    #[test]
    fn three_classes_on_a_line() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64 / 10.0]).collect();
        let labels: Vec<u32> = (0..30).map(|i| [7, 2, 9][i / 10]).collect();
        let m = svc_train(&x, &labels, 32.0, KernelSpec::Linear, &SolverParams::default()).unwrap();
        assert_eq!(m.classes, vec![2, 7, 9]);
        assert_eq!(m.machines.len(), 3);
        assert_eq!(m.predict(&[0.2]).unwrap(), 7);
        assert_eq!(m.predict(&[1.5]).unwrap(), 2);
        assert_eq!(m.predict(&[2.8]).unwrap(), 9);
        assert!(matches!(m.predict(&[1.0, 2.0]), Err(SvmError::DimensionMismatch { .. })));
    }
}
