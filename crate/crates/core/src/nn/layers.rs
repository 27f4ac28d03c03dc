//! Layer kernels and their adjoints. All maps are `(batch, channel, freq, time)`.

use super::{LayerParams, Mode, NnError, Result, Scalar, Tensor};

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

/// Valid output range `[x0, x1)` for kernel tap `k` with padding `pad` over extent `n`.
#[inline]
fn tap_range(k: usize, pad: usize, n: usize) -> (usize, usize) {
    let x0 = pad.saturating_sub(k);
    let x1 = (n + pad).saturating_sub(k).min(n);
    (x0, x1.max(x0))
}

/// Same-padded cross-correlation (zero padding `k/2`) plus per-channel bias.
pub fn conv2d_same<T: Scalar>(input: &Tensor<T>, layer: &LayerParams<T>) -> Result<Tensor<T>> {
    conv_forward(input, &layer.conv_w, &layer.conv_b)
}

pub(crate) fn conv_forward<T: Scalar>(input: &Tensor<T>, weights: &Tensor<T>, bias: &[T]) -> Result<Tensor<T>> {
    let (b, cin, h, w) = input.dims4()?;
    let (cout, wcin, kh, kw) = weights.dims4()?;
    if wcin != cin || bias.len() != cout {
        return Err(NnError::Shape(format!(
            "conv weights {:?} / bias {} vs input {:?}",
            weights.shape(),
            bias.len(),
            input.shape()
        )));
    }
    let (ph, pw) = (kh / 2, kw / 2);
    let mut out = Tensor::zeros(&[b, cout, h, w]);
    let x = input.data();
    let wt = weights.data();
    let plane = h * w;
    {
        let o_data = out.data_mut();
        for bi in 0..b {
            for o in 0..cout {
                let out_plane = &mut o_data[(bi * cout + o) * plane..(bi * cout + o + 1) * plane];
                out_plane.iter_mut().for_each(|v| *v = bias[o]);
                for i in 0..cin {
                    let in_plane = &x[(bi * cin + i) * plane..(bi * cin + i + 1) * plane];
                    for ky in 0..kh {
                        let (y0, y1) = tap_range(ky, ph, h);
                        for kx in 0..kw {
                            let wv = wt[((o * cin + i) * kh + ky) * kw + kx];
                            let (x0, x1) = tap_range(kx, pw, w);
                        if x0 == x1 {
                            continue;
                        }
                            if x0 == x1 {
                                continue;
                            }
                            for y in y0..y1 {
                                let sy = y + ky - ph;
                                let src = &in_plane[sy * w + x0 + kx - pw..sy * w + x1 + kx - pw];
                                let dst = &mut out_plane[y * w + x0..y * w + x1];
                                for (d, &s) in dst.iter_mut().zip(src) {
                                    *d += wv * s;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of a same-padded convolution: `(d_input, d_weights, d_bias)`.
pub(crate) fn conv_backward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    d_out: &Tensor<T>,
    need_input_grad: bool,
) -> Result<(Option<Tensor<T>>, Tensor<T>, Vec<T>)> {
    let (b, cin, h, w) = input.dims4()?;
    let (cout, _, kh, kw) = weights.dims4()?;
    let (ph, pw) = (kh / 2, kw / 2);
    let plane = h * w;
    let x = input.data();
    let dy = d_out.data();
    let wt = weights.data();

    let mut d_w = Tensor::zeros(weights.shape());
    let mut d_b = vec![T::ZERO; cout];
    let mut d_x = need_input_grad.then(|| Tensor::zeros(input.shape()));

    for bi in 0..b {
        for o in 0..cout {
            let g_plane = &dy[(bi * cout + o) * plane..(bi * cout + o + 1) * plane];
            let mut acc = T::ZERO;
            for &g in g_plane {
                acc += g;
            }
            d_b[o] += acc;
            for i in 0..cin {
                let in_plane = &x[(bi * cin + i) * plane..(bi * cin + i + 1) * plane];
                for ky in 0..kh {
                    let (y0, y1) = tap_range(ky, ph, h);
                    for kx in 0..kw {
                        let (x0, x1) = tap_range(kx, pw, w);
                        let widx = ((o * cin + i) * kh + ky) * kw + kx;
                        let mut dot = T::ZERO;
                        for y in y0..y1 {
                            let sy = y + ky - ph;
                            let src = &in_plane[sy * w + x0 + kx - pw..sy * w + x1 + kx - pw];
                            let g = &g_plane[y * w + x0..y * w + x1];
                            for (&s, &gv) in src.iter().zip(g) {
                                dot += s * gv;
                            }
                        }
                        d_w.data_mut()[widx] += dot;
                        if let Some(dx) = d_x.as_mut() {
                            let wv = wt[widx];
                            let dx_plane = &mut dx.data_mut()[(bi * cin + i) * plane..(bi * cin + i + 1) * plane];
                            for y in y0..y1 {
                                let sy = y + ky - ph;
                                let dst = &mut dx_plane[sy * w + x0 + kx - pw..sy * w + x1 + kx - pw];
                                let g = &g_plane[y * w + x0..y * w + x1];
                                for (d, &gv) in dst.iter_mut().zip(g) {
                                    *d += wv * gv;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok((d_x, d_w, d_b))
}

// ---------------------------------------------------------------------------
// ELU
// ---------------------------------------------------------------------------

#[inline]
pub fn elu_scalar<T: Scalar>(x: T) -> T {
    if x > T::ZERO {
        x
    } else {
        x.exp() - T::ONE
    }
}

/// ELU with alpha = 1.
pub fn elu<T: Scalar>(t: &Tensor<T>) -> Tensor<T> {
    let data = t.data().iter().map(|&x| elu_scalar(x)).collect();
    Tensor::from_vec(t.shape(), data).expect("shape preserved")
}

/// `d_in = d_out * elu'(x)` where `elu'(x) = 1` for `x > 0` and `elu(x) + 1` otherwise.
pub(crate) fn elu_backward<T: Scalar>(pre: &Tensor<T>, post: &Tensor<T>, d_out: &Tensor<T>) -> Tensor<T> {
    let data = pre
        .data()
        .iter()
        .zip(post.data())
        .zip(d_out.data())
        .map(|((&x, &y), &g)| if x > T::ZERO { g } else { g * (y + T::ONE) })
        .collect();
    Tensor::from_vec(pre.shape(), data).expect("shape preserved")
}

// ---------------------------------------------------------------------------
// Batch normalisation
// ---------------------------------------------------------------------------

/// Per-channel batch statistics (population variance), 64-bit accumulated.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

pub(crate) struct BnCache<T> {
    pub x_hat: Tensor<T>,
    pub inv_std: Vec<T>,
    pub stats: BatchStats,
}

pub(crate) fn channel_stats<T: Scalar>(t: &Tensor<T>) -> Result<BatchStats> {
    let (b, c, h, w) = t.dims4()?;
    let plane = h * w;
    let n = (b * plane) as f64;
    let mut mean = vec![0.0f64; c];
    let mut var = vec![0.0f64; c];
    for ch in 0..c {
        let mut s = 0.0f64;
        for bi in 0..b {
            for &v in &t.data()[(bi * c + ch) * plane..(bi * c + ch + 1) * plane] {
                s += v.to_f64();
            }
        }
        let m = s / n;
        let mut ss = 0.0f64;
        for bi in 0..b {
            for &v in &t.data()[(bi * c + ch) * plane..(bi * c + ch + 1) * plane] {
                let d = v.to_f64() - m;
                ss += d * d;
            }
        }
        mean[ch] = m;
        var[ch] = ss / n;
    }
    Ok(BatchStats { mean, var })
}

fn normalize<T: Scalar>(t: &Tensor<T>, mean: &[f64], inv_std: &[T], gamma: &[T], beta: &[T]) -> Result<(Tensor<T>, Tensor<T>)> {
    let (b, c, h, w) = t.dims4()?;
    let plane = h * w;
    let mut x_hat = Tensor::zeros(t.shape());
    let mut out = Tensor::zeros(t.shape());
    for bi in 0..b {
        for ch in 0..c {
            let r = (bi * c + ch) * plane..(bi * c + ch + 1) * plane;
            let m = T::from_f64(mean[ch]);
            for ((xh, o), &v) in x_hat.data_mut()[r.clone()].iter_mut().zip(&mut out.data_mut()[r.clone()]).zip(&t.data()[r.clone()]) {
                *xh = (v - m) * inv_std[ch];
                *o = gamma[ch] * *xh + beta[ch];
            }
        }
    }
    Ok((x_hat, out))
}

/// Batch normalisation. Train mode standardises with batch statistics over
/// (batch, freq, time) and updates the running statistics with the layer's
/// momentum; inference mode uses the running statistics.
pub fn batchnorm<T: Scalar>(t: &Tensor<T>, layer: &mut LayerParams<T>, mode: Mode, eps: f64, momentum: f64) -> Result<Tensor<T>> {
    match mode {
        Mode::Inference => bn_inference(t, layer, eps),
        Mode::Train => {
            let (out, cache) = bn_train_forward(t, layer, eps)?;
            update_running_stats(layer, &cache.stats, momentum);
            Ok(out)
        }
    }
}

pub(crate) fn bn_inference<T: Scalar>(t: &Tensor<T>, layer: &LayerParams<T>, eps: f64) -> Result<Tensor<T>> {
    let c = t.dims4()?.1;
    check_bn_channels(c, layer)?;
    let mean: Vec<f64> = layer.bn_running_mean.iter().map(|v| v.to_f64()).collect();
    let inv_std: Vec<T> = layer
        .bn_running_var
        .iter()
        .map(|v| T::from_f64(1.0 / (v.to_f64() + eps).sqrt()))
        .collect();
    Ok(normalize(t, &mean, &inv_std, &layer.bn_gamma, &layer.bn_beta)?.1)
}

pub(crate) fn bn_train_forward<T: Scalar>(t: &Tensor<T>, layer: &LayerParams<T>, eps: f64) -> Result<(Tensor<T>, BnCache<T>)> {
    let (b, c, _, _) = t.dims4()?;
    check_bn_channels(c, layer)?;
    if b < 2 {
        return Err(NnError::BatchTooSmall(b));
    }
    let stats = channel_stats(t)?;
    let inv_std: Vec<T> = stats.var.iter().map(|&v| T::from_f64(1.0 / (v + eps).sqrt())).collect();
    let (x_hat, out) = normalize(t, &stats.mean, &inv_std, &layer.bn_gamma, &layer.bn_beta)?;
    Ok((out, BnCache { x_hat, inv_std, stats }))
}

pub(crate) fn update_running_stats<T: Scalar>(layer: &mut LayerParams<T>, stats: &BatchStats, momentum: f64) {
    for ch in 0..stats.mean.len() {
        let rm = layer.bn_running_mean[ch].to_f64();
        let rv = layer.bn_running_var[ch].to_f64();
        layer.bn_running_mean[ch] = T::from_f64(momentum * rm + (1.0 - momentum) * stats.mean[ch]);
        layer.bn_running_var[ch] = T::from_f64(momentum * rv + (1.0 - momentum) * stats.var[ch]);
    }
}

fn check_bn_channels<T: Scalar>(c: usize, layer: &LayerParams<T>) -> Result<()> {
    if layer.bn_gamma.len() != c {
        return Err(NnError::Shape(format!("batch norm over {} channels, input has {c}", layer.bn_gamma.len())));
    }
    Ok(())
}

/// Train-mode batch-norm adjoint: `(d_input, d_gamma, d_beta)`.
pub(crate) fn bn_backward<T: Scalar>(cache: &BnCache<T>, gamma: &[T], d_out: &Tensor<T>) -> Result<(Tensor<T>, Vec<T>, Vec<T>)> {
    let (b, c, h, w) = d_out.dims4()?;
    let plane = h * w;
    let n = (b * plane) as f64;
    let mut d_in = Tensor::zeros(d_out.shape());
    let mut d_gamma = vec![T::ZERO; c];
    let mut d_beta = vec![T::ZERO; c];
    for ch in 0..c {
        let (mut sum_g, mut sum_gx) = (0.0f64, 0.0f64);
        for bi in 0..b {
            let r = (bi * c + ch) * plane..(bi * c + ch + 1) * plane;
            for (&g, &xh) in d_out.data()[r.clone()].iter().zip(&cache.x_hat.data()[r]) {
                sum_g += g.to_f64();
                sum_gx += g.to_f64() * xh.to_f64();
            }
        }
        d_beta[ch] = T::from_f64(sum_g);
        d_gamma[ch] = T::from_f64(sum_gx);
        // d_xhat = g * gamma; dx = inv_std / n * (n d_xhat - sum d_xhat - x_hat sum d_xhat x_hat)
        let gam = gamma[ch].to_f64();
        let inv = cache.inv_std[ch].to_f64();
        let (mean_dxh, mean_dxh_xh) = (gam * sum_g / n, gam * sum_gx / n);
        for bi in 0..b {
            let r = (bi * c + ch) * plane..(bi * c + ch + 1) * plane;
            for ((d, &g), &xh) in d_in.data_mut()[r.clone()].iter_mut().zip(&d_out.data()[r.clone()]).zip(&cache.x_hat.data()[r]) {
                let dxh = g.to_f64() * gam;
                *d = T::from_f64(inv * (dxh - mean_dxh - xh.to_f64() * mean_dxh_xh));
            }
        }
    }
    Ok((d_in, d_gamma, d_beta))
}

// ---------------------------------------------------------------------------
// Pooling
// ---------------------------------------------------------------------------

/// Non-overlapping max-pool; each window is clamped to the extent it pools
/// and trailing rows/columns that do not fill a window are dropped.
pub fn maxpool<T: Scalar>(t: &Tensor<T>, pool: (usize, usize)) -> Result<Tensor<T>> {
    Ok(maxpool_with_argmax(t, pool)?.0)
}

pub(crate) fn maxpool_with_argmax<T: Scalar>(t: &Tensor<T>, pool: (usize, usize)) -> Result<(Tensor<T>, Vec<usize>)> {
    let (b, c, h, w) = t.dims4()?;
    if pool.0 == 0 || pool.1 == 0 {
        return Err(NnError::Shape(format!("pool window {pool:?}")));
    }
    let (wh, ww) = (pool.0.min(h), pool.1.min(w));
    let (oh, ow) = (h / wh, w / ww);
    let mut out = Tensor::zeros(&[b, c, oh, ow]);
    let mut argmax = Vec::with_capacity(b * c * oh * ow);
    let x = t.data();
    for bc in 0..b * c {
        let base = bc * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best_idx = base + oy * wh * w + ox * ww;
                let mut best = x[best_idx];
                for dy in 0..wh {
                    let row = base + (oy * wh + dy) * w + ox * ww;
                    for (dx, &v) in x[row..row + ww].iter().enumerate() {
                        if v > best {
                            best = v;
                            best_idx = row + dx;
                        }
                    }
                }
                out.data_mut()[(bc * oh + oy) * ow + ox] = best;
                argmax.push(best_idx);
            }
        }
    }
    Ok((out, argmax))
}

pub(crate) fn maxpool_backward<T: Scalar>(input_shape: &[usize], argmax: &[usize], d_out: &Tensor<T>) -> Tensor<T> {
    let mut d_in = Tensor::zeros(input_shape);
    for (&idx, &g) in argmax.iter().zip(d_out.data()) {
        d_in.data_mut()[idx] += g;
    }
    d_in
}

/// Mean over (freq, time) per channel, 64-bit accumulated. Returns `batch x channels`.
pub fn global_average_pool<T: Scalar>(t: &Tensor<T>) -> Result<Vec<Vec<T>>> {
    let (b, c, h, w) = t.dims4()?;
    let plane = h * w;
    Ok((0..b)
        .map(|bi| {
            (0..c)
                .map(|ch| {
                    let s: f64 = t.data()[(bi * c + ch) * plane..(bi * c + ch + 1) * plane].iter().map(|v| v.to_f64()).sum();
                    T::from_f64(s / plane as f64)
                })
                .collect()
        })
        .collect())
}
