//! SMO for the box- and equality-constrained dual
//!
//! ```text
//! min_a  0.5 a'Qa + p'a   s.t.  y'a = 0,  0 <= a_i <= C,   Q_ij = y_i y_j K(b_i, b_j)
//! ```
//!
//! where variable `i` refers to kernel sample `b_i = i mod n`, so that the
//! regression dual (two variables per sample) shares one kernel cache.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::kernel::KernelSource;
use super::{Result, SvmError};

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverParams {
    /// Stopping tolerance on the maximal KKT violation.
    pub tol: f64,
    pub max_iter: u64,
    /// Kernel rows kept in the LRU cache.
    pub cache_rows: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self { tol: 1e-3, max_iter: 10_000_000, cache_rows: 4096 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub alpha: Vec<f64>,
    /// Decision values are `sum_i a_i y_i K(x_i, x) - rho`.
    pub rho: f64,
    /// Dual objective in maximisation form, `-(0.5 a'Qa + p'a)`.
    pub objective: f64,
    pub iterations: u64,
    /// Dual objective sampled every 100 iterations, plus the final value.
    pub trace: Vec<f64>,
}

/// Least-recently-used store of kernel rows.
pub struct RowCache<'a, S: KernelSource + ?Sized> {
    src: &'a S,
    capacity: usize,
    rows: HashMap<usize, (Vec<f64>, u64)>,
    clock: u64,
    pub hits: u64,
    pub misses: u64,
}

impl<'a, S: KernelSource + ?Sized> RowCache<'a, S> {
    pub fn new(src: &'a S, capacity: usize) -> Self {
        Self { src, capacity: capacity.max(2), rows: HashMap::new(), clock: 0, hits: 0, misses: 0 }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.rows.contains_key(&i)
    }

    pub fn row(&mut self, i: usize) -> &[f64] {
        self.clock += 1;
        let clock = self.clock;
        if self.rows.contains_key(&i) {
            self.hits += 1;
        } else {
            self.misses += 1;
            let mut buf = if self.rows.len() >= self.capacity {
                let victim = *self.rows.iter().min_by_key(|(_, (_, t))| *t).map(|(k, _)| k).expect("nonempty cache");
                self.rows.remove(&victim).expect("victim present").0
            } else {
                vec![0.0; self.src.len()]
            };
            self.src.fill_row(i, &mut buf);
            self.rows.insert(i, (buf, clock));
        }
        let entry = self.rows.get_mut(&i).expect("row just ensured");
        entry.1 = clock;
        &entry.0
    }
}

fn objective(alpha: &[f64], grad: &[f64], p: &[f64]) -> f64 {
    -0.5 * alpha.iter().zip(grad).zip(p).map(|((a, g), q)| a * (g + q)).sum::<f64>()
}

/// Runs SMO with maximal-violating-pair selection, scanning indices in
/// order so ties go to the lowest index.
pub fn solve<S: KernelSource + ?Sized>(src: &S, y: &[f64], p: &[f64], c: f64, params: &SolverParams) -> Result<Solution> {
    let m = y.len();
    let n = src.len();
    if m == 0 || n == 0 || p.len() != m || !m.is_multiple_of(n) {
        return Err(SvmError::InvalidParameter(format!("{m} variables over {n} kernel samples")));
    }
    if !(c.is_finite() && c > 0.0) {
        return Err(SvmError::InvalidParameter(format!("C must be positive, got {c}")));
    }
    let diag: Vec<f64> = (0..n).map(|i| src.entry(i, i)).collect();
    let mut cache = RowCache::new(src, params.cache_rows);
    let mut alpha = vec![0.0; m];
    let mut grad = p.to_vec();
    let mut trace = Vec::new();
    let mut ki = vec![0.0; n];
    let mut iter = 0u64;

    loop {
        if iter.is_multiple_of(100) {
            trace.push(objective(&alpha, &grad, p));
        }
        // i maximises -y G over I_up, j minimises it over I_low.
        let (mut gmax, mut gmax2) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        let (mut i, mut j) = (usize::MAX, usize::MAX);
        for t in 0..m {
            let below_c = alpha[t] < c;
            let above_0 = alpha[t] > 0.0;
            if y[t] > 0.0 {
                if below_c && -grad[t] > gmax {
                    gmax = -grad[t];
                    i = t;
                }
                if above_0 && grad[t] > gmax2 {
                    gmax2 = grad[t];
                    j = t;
                }
            } else {
                if above_0 && grad[t] > gmax {
                    gmax = grad[t];
                    i = t;
                }
                if below_c && -grad[t] > gmax2 {
                    gmax2 = -grad[t];
                    j = t;
                }
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax + gmax2 < params.tol {
            break;
        }
        if iter >= params.max_iter {
            return Err(SvmError::NotConverged { iterations: iter });
        }
        iter += 1;

        let (bi, bj) = (i % n, j % n);
        ki.copy_from_slice(cache.row(bi));
        let kj = cache.row(bj);
        let qij = y[i] * y[j] * ki[bj];
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let quad = (diag[bi] + diag[bj] + 2.0 * qij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (diag[bi] + diag[bj] - 2.0 * qij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let di = (alpha[i] - old_i) * y[i];
        let dj = (alpha[j] - old_j) * y[j];
        for t in 0..m {
            let b = t % n;
            grad[t] += y[t] * (di * ki[b] + dj * kj[b]);
        }
    }

    let rho = compute_rho(&alpha, &grad, y, c);
    let objective = objective(&alpha, &grad, p);
    trace.push(objective);
    Ok(Solution { alpha, rho, objective, iterations: iter, trace })
}

/// Average of `y G` over free variables, else the midpoint of its bounds.
fn compute_rho(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum) = (0usize, 0.0);
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum += yg;
        }
    }
    if free > 0 {
        sum / free as f64
    } else {
        (ub + lb) / 2.0
    }
}

/// Largest violation of the first-order optimality conditions, `m(a) - M(a)`.
pub fn kkt_violation(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let (mut up, mut low) = (f64::NEG_INFINITY, f64::INFINITY);
    for t in 0..alpha.len() {
        let v = -y[t] * grad[t];
        let in_up = (y[t] > 0.0 && alpha[t] < c) || (y[t] < 0.0 && alpha[t] > 0.0);
        let in_low = (y[t] > 0.0 && alpha[t] > 0.0) || (y[t] < 0.0 && alpha[t] < c);
        if in_up {
            up = up.max(v);
        }
        if in_low {
            low = low.min(v);
        }
    }
    if up.is_finite() && low.is_finite() {
        (up - low).max(0.0)
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::svm::kernel::{KernelSpec, VectorKernel};

    #[test]
    fn tiny_qp_has_half_alphas() {
        let x = vec![vec![-1.0], vec![1.0]];
        let k = VectorKernel { x: &x, kernel: KernelSpec::Linear };
        let s = solve(&k, &[-1.0, 1.0], &[-1.0, -1.0], 32.0, &SolverParams::default()).unwrap();
        assert_eq!(s.alpha, vec![0.5, 0.5]);
        assert_eq!(s.rho, 0.0);
        assert_eq!(s.iterations, 1);
        assert!((s.objective - 0.5).abs() < 1e-15);
    }

    #[test]
    fn lru_evicts_oldest() {
        let x: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64]).collect();
        let k = VectorKernel { x: &x, kernel: KernelSpec::Linear };
        let mut cache = RowCache::new(&k, 2);
        assert_eq!(cache.row(1), &[0.0, 1.0, 2.0, 3.0]);
        cache.row(2);
        cache.row(1);
        cache.row(3);
        assert!(cache.contains(1) && cache.contains(3) && !cache.contains(2));
        assert_eq!(cache.len(), 2);
        assert_eq!((cache.hits, cache.misses), (1, 3));
        assert_eq!(cache.row(2), &[0.0, 2.0, 4.0, 6.0]);
    }

    #[test]
    fn small_cache_gives_same_solution() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()]).collect();
        let y: Vec<f64> = (0..30).map(|i| if (i as f64 * 0.37).sin() + 0.2 * (i % 3) as f64 > 0.1 { 1.0 } else { -1.0 }).collect();
        let k = VectorKernel { x: &x, kernel: KernelSpec::Rbf { gamma: 2.0 } };
        let p = vec![-1.0; 30];
        let big = solve(&k, &y, &p, 8.0, &SolverParams::default()).unwrap();
        let small = solve(&k, &y, &p, 8.0, &SolverParams { cache_rows: 2, ..Default::default() }).unwrap();
        assert_eq!(big, small);
    }

    #[test]
    fn iteration_cap_is_an_error() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let k = VectorKernel { x: &x, kernel: KernelSpec::Linear };
        let r = solve(&k, &y, &[-1.0; 10], 32.0, &SolverParams { max_iter: 3, ..Default::default() });
        assert!(matches!(r, Err(SvmError::NotConverged { iterations: 3 })));
    }
}
