//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use convfeat::nn::{backward, he_normal_init, maxpool_trace, train_loss, ArchitectureSpec, LayerParams, Mode, ModelState, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// Convolution and pooling
// ---------------------------------------------------------------------------

/// Zero-padded same-size cross-correlation, written index by index.
pub fn brute_conv_same(x: &Tensor<f64>, w: &Tensor<f64>, bias: &[f64]) -> Tensor<f64> {
    let s = x.shape();
    let (b, cin, h, wd) = (s[0], s[1], s[2], s[3]);
    let ws = w.shape();
    let (cout, kh, kw) = (ws[0], ws[2], ws[3]);
    let at = |bi: usize, c: usize, y: isize, xx: isize| -> f64 {
        if y < 0 || xx < 0 || y >= h as isize || xx >= wd as isize {
            0.0
        } else {
            x.data()[((bi * cin + c) * h + y as usize) * wd + xx as usize]
        }
    };
    let mut out = vec![0.0; b * cout * h * wd];
    for bi in 0..b {
        for o in 0..cout {
            for y in 0..h {
                for xx in 0..wd {
                    let mut acc = bias[o];
                    for c in 0..cin {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let wv = w.data()[((o * cin + c) * kh + ky) * kw + kx];
                                acc += wv * at(bi, c, y as isize + ky as isize - (kh / 2) as isize, xx as isize + kx as isize - (kw / 2) as isize);
                            }
                        }
                    }
                    out[((bi * cout + o) * h + y) * wd + xx] = acc;
                }
            }
        }
    }
    Tensor::from_vec(&[b, cout, h, wd], out).unwrap()
}

/// Non-overlapping max-pool with the window clamped to the extent; partial
/// windows at the end are dropped.
pub fn brute_maxpool(x: &Tensor<f64>, pool: (usize, usize)) -> Tensor<f64> {
    let s = x.shape();
    let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
    let (ph, pw) = (pool.0.min(h), pool.1.min(w));
    let (oh, ow) = (h / ph, w / pw);
    let mut out = Vec::with_capacity(b * c * oh * ow);
    for bc in 0..b * c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut m = f64::NEG_INFINITY;
                for y in oy * ph..(oy + 1) * ph {
                    for xx in ox * pw..(ox + 1) * pw {
                        m = m.max(x.data()[(bc * h + y) * w + xx]);
                    }
                }
                out.push(m);
            }
        }
    }
    Tensor::from_vec(&[b, c, oh, ow], out).unwrap()
}

pub fn random_tensor(r: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
}

pub fn conv_layer(w: Tensor<f64>, bias: Vec<f64>) -> LayerParams<f64> {
    let c = bias.len();
    LayerParams { conv_w: w, conv_b: bias, bn_gamma: vec![1.0; c], bn_beta: vec![0.0; c], bn_running_mean: vec![0.0; c], bn_running_var: vec![1.0; c] }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Quadratic programs
// ---------------------------------------------------------------------------

/// Euclidean projection onto `{0 <= a <= c, y'a = 0}` by bisection on the
/// multiplier of the equality constraint.
fn project(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |lam: f64| -> Vec<f64> { v.iter().zip(y).map(|(vi, yi)| (vi - lam * yi).clamp(0.0, c)).collect() };
    let g = |a: &[f64]| a.iter().zip(y).map(|(ai, yi)| ai * yi).sum::<f64>();
    let span = v.iter().map(|x| x.abs()).fold(0.0, f64::max) + c + 1.0;
    let (mut lo, mut hi) = (-span, span);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(&at(mid)) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Accelerated projected gradient on `min 0.5 a'Qa - sum(a)` subject to
/// `0 <= a <= c, y'a = 0`, where `Q_ij = y_i y_j K_ij`. Returns the
/// minimizer and the dual objective in maximization form.
pub fn qp_oracle(k: &[Vec<f64>], y: &[f64], c: f64) -> (Vec<f64>, f64) {
    let n = y.len();
    let q: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| y[i] * y[j] * k[i][j]).collect()).collect();
    let lip = q.iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(1e-12, f64::max);
    let grad = |a: &[f64]| -> Vec<f64> { (0..n).map(|i| q[i].iter().zip(a).map(|(qij, aj)| qij * aj).sum::<f64>() - 1.0).collect() };
    let mut a = vec![0.0; n];
    let mut z = a.clone();
    let mut t = 1.0f64;
    for _ in 0..200_000 {
        let g = grad(&z);
        let step: Vec<f64> = z.iter().zip(&g).map(|(zi, gi)| zi - gi / lip).collect();
        let next = project(&step, y, c);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let moved = max_abs_diff(&next, &a);
        z = next.iter().zip(&a).map(|(nx, ax)| nx + (t - 1.0) / t_next * (nx - ax)).collect();
        a = next;
        t = t_next;
        if moved < 1e-14 {
            break;
        }
    }
    (a.clone(), dual_objective(&q, &a))
}

/// `sum(a) - 0.5 a'Qa`.
pub fn dual_objective(q: &[Vec<f64>], a: &[f64]) -> f64 {
    let n = a.len();
    let quad: f64 = (0..n).map(|i| (0..n).map(|j| a[i] * q[i][j] * a[j]).sum::<f64>()).sum();
    a.iter().sum::<f64>() - 0.5 * quad
}

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

pub fn toy_batch(seed: u64, batch: usize) -> (Tensor<f64>, Vec<Vec<f32>>) {
    let mut r = rng(seed);
    let data: Vec<f64> = (0..batch * 96).map(|_| r.random_range(-1.0..1.0)).collect();
    let targets = (0..batch).map(|b| vec![(b % 2) as f32, ((b / 2) % 2) as f32]).collect();
    (Tensor::from_vec(&[batch, 1, 8, 12], data).unwrap(), targets)
}

/// He-normal toy model with non-trivial batch-norm affine terms and head bias.
pub fn toy_model(seed: u64) -> ModelState<f64> {
    let mut model = he_normal_init(&ArchitectureSpec::toy(), seed).unwrap().cast::<f64>();
    for (l, layer) in model.layers.iter_mut().enumerate() {
        for (c, g) in layer.bn_gamma.iter_mut().enumerate() {
            *g = 0.8 + 0.1 * (c + l) as f64;
        }
        for (c, b) in layer.bn_beta.iter_mut().enumerate() {
            *b = 0.05 * c as f64 - 0.1;
        }
    }
    model.head_b = vec![0.1, -0.2];
    model.mode = Mode::Train;
    model
}

/// Relative error with the denominator floored so exactly-zero gradients
/// (conv biases under train-mode batch norm) compare on absolute terms.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

pub struct FdAudit {
    pub worst: f64,
    pub checked: usize,
    /// Parameters whose perturbation moved a max-pool argmax.
    pub kinks: usize,
}

/// Central differences of the train-mode loss against backprop for every
/// trainable parameter.
pub fn fd_audit(model: &ModelState<f64>, x: &Tensor<f64>, y: &[Vec<f32>], h: f64, floor: f64) -> FdAudit {
    let analytic = backward(model, x, y).unwrap().grads;
    let grads: Vec<Vec<f64>> = analytic.slices().iter().map(|s| s.to_vec()).collect();
    let base_trace = maxpool_trace(model, x).unwrap();
    let mut audit = FdAudit { worst: 0.0, checked: 0, kinks: 0 };
    for (g, group) in grads.iter().enumerate() {
        for (j, &an) in group.iter().enumerate() {
            let mut plus = model.clone();
            plus.trainable_mut()[g][j] += h;
            let mut minus = model.clone();
            minus.trainable_mut()[g][j] -= h;
            if maxpool_trace(&plus, x).unwrap() != base_trace || maxpool_trace(&minus, x).unwrap() != base_trace {
                audit.kinks += 1;
            }
            let fd = (train_loss(&plus, x, y).unwrap() - train_loss(&minus, x, y).unwrap()) / (2.0 * h);
            audit.worst = audit.worst.max(rel_err(an, fd, floor));
            audit.checked += 1;
        }
    }
    audit
}
