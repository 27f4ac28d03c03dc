use serde::{Deserialize, Serialize};

use super::{Result, SvmError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec {
    Linear,
    /// `exp(-gamma |x - x'|^2)`
    Rbf { gamma: f64 },
}

impl KernelSpec {
    pub fn rbf(gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(SvmError::InvalidParameter(format!("rbf gamma must be positive, got {gamma}")));
        }
        Ok(KernelSpec::Rbf { gamma })
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::Linear => "linear",
            KernelSpec::Rbf { .. } => "rbf",
        }
    }

    pub fn gamma(&self) -> Option<f64> {
        match *self {
            KernelSpec::Linear => None,
            KernelSpec::Rbf { gamma } => Some(gamma),
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Rbf { gamma } => Self::rbf(gamma).map(|_| ()),
        }
    }

    /// Kernel value from a precomputed dot product and squared distance.
    pub(crate) fn from_parts(&self, dot: f64, sq_dist: f64) -> f64 {
        match *self {
            KernelSpec::Linear => dot,
            KernelSpec::Rbf { gamma } => (-gamma * sq_dist).exp(),
        }
    }

    pub(crate) fn eval_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            KernelSpec::Linear => dot(a, b),
            KernelSpec::Rbf { gamma } => (-gamma * sq_dist(a, b)).exp(),
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn kernel_eval(k: &KernelSpec, x: &[f64], x2: &[f64]) -> Result<f64> {
    if x.len() != x2.len() {
        return Err(SvmError::DimensionMismatch { expected: x.len(), got: x2.len() });
    }
    Ok(k.eval_unchecked(x, x2))
}

/// Kernel values between the samples of a training problem.
pub trait KernelSource {
    fn len(&self) -> usize;
    fn entry(&self, i: usize, j: usize) -> f64;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn fill_row(&self, i: usize, out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.entry(i, j);
        }
    }
}

/// Kernel evaluated on demand from feature vectors.
pub struct VectorKernel<'a> {
    pub x: &'a [Vec<f64>],
    pub kernel: KernelSpec,
}

impl KernelSource for VectorKernel<'_> {
    fn len(&self) -> usize {
        self.x.len()
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        self.kernel.eval_unchecked(&self.x[i], &self.x[j])
    }
}

/// Dot products and squared distances between two sample sets, from which
/// any kernel's matrix follows without touching the features again.
#[derive(Debug, Clone)]
pub struct Pairwise {
    pub rows: usize,
    pub cols: usize,
    dots: Vec<f64>,
    sq: Vec<f64>,
}

impl Pairwise {
    pub fn between(a: &[&[f64]], b: &[&[f64]]) -> Self {
        let mut dots = Vec::with_capacity(a.len() * b.len());
        let mut sq = Vec::with_capacity(a.len() * b.len());
        for x in a {
            for y in b {
                dots.push(dot(x, y));
                sq.push(sq_dist(x, y));
            }
        }
        Self { rows: a.len(), cols: b.len(), dots, sq }
    }

    pub fn symmetric(a: &[&[f64]]) -> Self {
        let n = a.len();
        let mut dots = vec![0.0; n * n];
        let mut sq = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let d = dot(a[i], a[j]);
                let s = sq_dist(a[i], a[j]);
                dots[i * n + j] = d;
                dots[j * n + i] = d;
                sq[i * n + j] = s;
                sq[j * n + i] = s;
            }
        }
        Self { rows: n, cols: n, dots, sq }
    }

    pub fn kernel_matrix(&self, kernel: &KernelSpec) -> GramMatrix {
        let data = self.dots.iter().zip(&self.sq).map(|(&d, &s)| kernel.from_parts(d, s)).collect();
        GramMatrix { rows: self.rows, cols: self.cols, data }
    }
}

/// Dense precomputed kernel matrix.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    pub rows: usize,
    pub cols: usize,
    data: Vec<f64>,
}

impl GramMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

impl KernelSource for GramMatrix {
    fn len(&self) -> usize {
        self.rows
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        self.get(i, j)
    }

    fn fill_row(&self, i: usize, out: &mut [f64]) {
        out.copy_from_slice(self.row(i));
    }
}

/// The sub-problem on a subset of another source's samples.
pub struct Subset<'a, S: ?Sized> {
    pub inner: &'a S,
    pub idx: &'a [usize],
}

impl<S: KernelSource + ?Sized> KernelSource for Subset<'_, S> {
    fn len(&self) -> usize {
        self.idx.len()
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        self.inner.entry(self.idx[i], self.idx[j])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_values() {
        assert_eq!(kernel_eval(&KernelSpec::Linear, &[1.0, 2.0], &[3.0, 4.0]).unwrap(), 11.0);
        let k = KernelSpec::rbf(0.5).unwrap();
        assert!((kernel_eval(&k, &[1.0, 2.0], &[0.0, 1.0]).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(kernel_eval(&k, &[3.0, -7.5], &[3.0, -7.5]).unwrap(), 1.0);
        assert!(matches!(kernel_eval(&k, &[1.0], &[1.0, 2.0]), Err(SvmError::DimensionMismatch { .. })));
        assert!(KernelSpec::rbf(0.0).is_err());
        assert!(KernelSpec::rbf(f64::NAN).is_err());
    }

    #[test]
    fn gram_matches_direct_evaluation() {
        let x: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64 * 0.3, (i * i) as f64 * -0.1, 1.0]).collect();
        let refs: Vec<&[f64]> = x.iter().map(|v| v.as_slice()).collect();
        let p = Pairwise::symmetric(&refs);
        let cross = Pairwise::between(&refs[..2], &refs);
        for k in [KernelSpec::Linear, KernelSpec::Rbf { gamma: 0.7 }] {
            let g = p.kernel_matrix(&k);
            let c = cross.kernel_matrix(&k);
            let v = VectorKernel { x: &x, kernel: k };
            for i in 0..5 {
                for j in 0..5 {
                    assert!((g.get(i, j) - v.entry(i, j)).abs() < 1e-14);
                    assert_eq!(g.get(i, j), g.get(j, i));
                    if i < 2 {
                        assert_eq!(c.get(i, j), g.get(i, j));
                    }
                }
            }
            let idx = [4, 1];
            let s = Subset { inner: &g, idx: &idx };
            let mut row = [0.0; 2];
            s.fill_row(0, &mut row);
            assert_eq!(row, [g.get(4, 4), g.get(4, 1)]);
        }
    }
}
