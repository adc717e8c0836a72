//! Forward and backward kernels for the CRNN.
//!
//! All kernels are batched with explicit per-item valid lengths on the time
//! axis; positions at or beyond an item's valid length carry zeros in both
//! the forward activations and the backward gradients, which is what makes
//! training invariant to batch padding.

use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Forward/eval switch for batch normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

fn dims4(t: &Tensor) -> (usize, usize, usize, usize) {
    let s = t.shape();
    debug_assert_eq!(s.len(), 4);
    (s[0], s[1], s[2], s[3])
}

// ---------------------------------------------------------------------------
// 3x3 convolution, zero padding 1, stride 1
// ---------------------------------------------------------------------------

/// `x: [B, C_in, T, D]`, `kernel: [C_out, C_in, 3, 3]`, `bias: [C_out]`.
pub fn conv3x3_forward(x: &Tensor, kernel: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (b, cin, t, d) = dims4(x);
    let ks = kernel.shape();
    if ks.len() != 4 || ks[1] != cin || ks[2] != 3 || ks[3] != 3 {
        return Err(Error::shape(format!(
            "kernel {:?} incompatible with input {:?}",
            ks,
            x.shape()
        )));
    }
    let cout = ks[0];
    if bias.shape() != [cout] {
        return Err(Error::shape("bias length must equal C_out".into()));
    }
    let mut y = Tensor::zeros(&[b, cout, t, d]);
    let xd = x.data();
    let kd = kernel.data();
    let yd = y.data_mut();
    let plane = t * d;
    for bi in 0..b {
        for co in 0..cout {
            let y_base = (bi * cout + co) * plane;
            let bv = bias.data()[co];
            yd[y_base..y_base + plane].fill(bv);
            for ci in 0..cin {
                let x_base = (bi * cin + ci) * plane;
                let k_base = (co * cin + ci) * 9;
                for kt in 0..3usize {
                    let dt = kt as isize - 1;
                    for kw in 0..3usize {
                        let dd = kw as isize - 1;
                        let w = kd[k_base + kt * 3 + kw];
                        if w == 0.0 {
                            continue;
                        }
                        shifted_add(
                            &mut yd[y_base..y_base + plane],
                            &xd[x_base..x_base + plane],
                            t,
                            d,
                            dt,
                            dd,
                            w,
                        );
                    }
                }
            }
        }
    }
    Ok(y)
}

/// `y[ot, od] += w * x[ot + dt, od + dd]` over the in-range region.
#[inline]
fn shifted_add(y: &mut [f64], x: &[f64], t: usize, d: usize, dt: isize, dd: isize, w: f64) {
    let ot_lo = if dt < 0 { (-dt) as usize } else { 0 };
    let ot_hi = if dt > 0 { t - dt as usize } else { t };
    let od_lo = if dd < 0 { (-dd) as usize } else { 0 };
    let od_hi = if dd > 0 { d - dd as usize } else { d };
    if od_lo >= od_hi {
        return;
    }
    for ot in ot_lo..ot_hi {
        let it = (ot as isize + dt) as usize;
        let y_row = &mut y[ot * d + od_lo..ot * d + od_hi];
        let x_row = &x[it * d + (od_lo as isize + dd) as usize..];
        for (yv, xv) in y_row.iter_mut().zip(x_row) {
            *yv += w * xv;
        }
    }
}

/// Dot of `gy[ot, od] * x[ot + dt, od + dd]` over the in-range region.
#[inline]
fn shifted_dot(gy: &[f64], x: &[f64], t: usize, d: usize, dt: isize, dd: isize) -> f64 {
    let ot_lo = if dt < 0 { (-dt) as usize } else { 0 };
    let ot_hi = if dt > 0 { t - dt as usize } else { t };
    let od_lo = if dd < 0 { (-dd) as usize } else { 0 };
    let od_hi = if dd > 0 { d - dd as usize } else { d };
    if od_lo >= od_hi {
        return 0.0;
    }
    let mut acc = 0.0;
    for ot in ot_lo..ot_hi {
        let it = (ot as isize + dt) as usize;
        let g_row = &gy[ot * d + od_lo..ot * d + od_hi];
        let x_row = &x[it * d + (od_lo as isize + dd) as usize..];
        for (gv, xv) in g_row.iter().zip(x_row) {
            acc += gv * xv;
        }
    }
    acc
}

/// Gradients of [`conv3x3_forward`]: returns `(grad_x, grad_kernel, grad_bias)`.
pub fn conv3x3_backward(
    x: &Tensor,
    kernel: &Tensor,
    grad_y: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let (b, cin, t, d) = dims4(x);
    let cout = kernel.shape()[0];
    let plane = t * d;
    let mut gx = Tensor::zeros(&[b, cin, t, d]);
    let mut gk = Tensor::zeros(kernel.shape());
    let mut gb = Tensor::zeros(&[cout]);
    let xd = x.data();
    let kd = kernel.data();
    let gyd = grad_y.data();
    {
        let gxd = gx.data_mut();
        for bi in 0..b {
            for co in 0..cout {
                let gy_base = (bi * cout + co) * plane;
                for ci in 0..cin {
                    let x_base = (bi * cin + ci) * plane;
                    let k_base = (co * cin + ci) * 9;
                    for kt in 0..3usize {
                        let dt = kt as isize - 1;
                        for kw in 0..3usize {
                            let dd = kw as isize - 1;
                            let w = kd[k_base + kt * 3 + kw];
                            if w != 0.0 {
                                // gx[it, id] += w * gy[it - dt, id - dd]
                                shifted_add(
                                    &mut gxd[x_base..x_base + plane],
                                    &gyd[gy_base..gy_base + plane],
                                    t,
                                    d,
                                    -dt,
                                    -dd,
                                    w,
                                );
                            }
                        }
                    }
                }
            }
        }
    }
    {
        let gkd = gk.data_mut();
        let gbd = gb.data_mut();
        for bi in 0..b {
            for co in 0..cout {
                let gy_base = (bi * cout + co) * plane;
                let gy_plane = &gyd[gy_base..gy_base + plane];
                gbd[co] += gy_plane.iter().sum::<f64>();
                for ci in 0..cin {
                    let x_base = (bi * cin + ci) * plane;
                    let x_plane = &xd[x_base..x_base + plane];
                    let k_base = (co * cin + ci) * 9;
                    for kt in 0..3usize {
                        let dt = kt as isize - 1;
                        for kw in 0..3usize {
                            let dd = kw as isize - 1;
                            gkd[k_base + kt * 3 + kw] +=
                                shifted_dot(gy_plane, x_plane, t, d, dt, dd);
                        }
                    }
                }
            }
        }
    }
    (gx, gk, gb)
}

// ---------------------------------------------------------------------------
// Batch normalization (per channel over batch, valid time, freq)
// ---------------------------------------------------------------------------

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct BnCache {
    /// Normalized input, `[B, C, T, D]`, zero at invalid positions.
    pub xhat: Tensor,
    pub inv_std: Vec<f64>,
    /// Number of valid elements per channel.
    pub count: f64,
}

/// Outcome of a batch-norm forward: output, backward cache (train mode) and
/// the batch statistics for the caller to fold into running stats.
pub struct BnForward {
    pub y: Tensor,
    pub cache: Option<BnCache>,
    /// `(mean, var)` of the batch, train mode only.
    pub batch_stats: Option<(Vec<f64>, Vec<f64>)>,
}

/// Train mode normalizes by masked batch statistics; eval mode by the running
/// statistics. Positions at or beyond `valid[b]` are excluded from the
/// statistics and zeroed in the output.
pub fn bn_forward(
    x: &Tensor,
    scale: &Tensor,
    shift: &Tensor,
    running_mean: &Tensor,
    running_var: &Tensor,
    mode: Mode,
    valid: &[usize],
) -> BnForward {
    let (b, c, t, d) = dims4(x);
    debug_assert_eq!(valid.len(), b);
    let xd = x.data();
    let plane = t * d;

    let (mean, var) = match mode {
        Mode::Train => {
            let mut mean = vec![0.0f64; c];
            let mut var = vec![0.0f64; c];
            let count: usize = valid.iter().map(|&l| l.min(t) * d).sum();
            let count = count.max(1) as f64;
            for ci in 0..c {
                let mut s = 0.0;
                let mut s2 = 0.0;
                for bi in 0..b {
                    let lim = valid[bi].min(t) * d;
                    let base = (bi * c + ci) * plane;
                    for &v in &xd[base..base + lim] {
                        s += v;
                        s2 += v * v;
                    }
                }
                mean[ci] = s / count;
                var[ci] = (s2 / count - mean[ci] * mean[ci]).max(0.0);
            }
            (mean, var)
        }
        Mode::Eval => (running_mean.data().to_vec(), running_var.data().to_vec()),
    };

    let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let mut y = Tensor::zeros(x.shape());
    let mut xhat = Tensor::zeros(x.shape());
    {
        let yd = y.data_mut();
        let xh = xhat.data_mut();
        for bi in 0..b {
            let lim = valid[bi].min(t) * d;
            for ci in 0..c {
                let base = (bi * c + ci) * plane;
                let (m, is) = (mean[ci], inv_std[ci]);
                let (g, s) = (scale.data()[ci], shift.data()[ci]);
                for i in 0..lim {
                    let h = (xd[base + i] - m) * is;
                    xh[base + i] = h;
                    yd[base + i] = g * h + s;
                }
            }
        }
    }

    match mode {
        Mode::Train => {
            let count: f64 = valid.iter().map(|&l| l.min(t) * d).sum::<usize>().max(1) as f64;
            BnForward {
                y,
                cache: Some(BnCache {
                    xhat,
                    inv_std,
                    count,
                }),
                batch_stats: Some((mean, var)),
            }
        }
        Mode::Eval => BnForward {
            y,
            cache: None,
            batch_stats: None,
        },
    }
}

/// Folds batch statistics into running statistics with momentum 0.1.
pub fn bn_update_running(running_mean: &mut Tensor, running_var: &mut Tensor, stats: &(Vec<f64>, Vec<f64>)) {
    for (r, &m) in running_mean.data_mut().iter_mut().zip(&stats.0) {
        *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * m;
    }
    for (r, &v) in running_var.data_mut().iter_mut().zip(&stats.1) {
        *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * v;
    }
}

/// Train-mode backward through the masked batch statistics.
/// Returns `(grad_x, grad_scale, grad_shift)`.
pub fn bn_backward(
    cache: &BnCache,
    scale: &Tensor,
    grad_y: &Tensor,
    valid: &[usize],
) -> (Tensor, Tensor, Tensor) {
    let (b, c, t, d) = dims4(&cache.xhat);
    let plane = t * d;
    let gyd = grad_y.data();
    let xh = cache.xhat.data();
    let n = cache.count;

    let mut gscale = Tensor::zeros(&[c]);
    let mut gshift = Tensor::zeros(&[c]);
    let mut sum_gy = vec![0.0f64; c];
    let mut sum_gy_xhat = vec![0.0f64; c];
    for ci in 0..c {
        for bi in 0..b {
            let lim = valid[bi].min(t) * d;
            let base = (bi * c + ci) * plane;
            for i in 0..lim {
                sum_gy[ci] += gyd[base + i];
                sum_gy_xhat[ci] += gyd[base + i] * xh[base + i];
            }
        }
        gshift.data_mut()[ci] = sum_gy[ci];
        gscale.data_mut()[ci] = sum_gy_xhat[ci];
    }

    let mut gx = Tensor::zeros(cache.xhat.shape());
    {
        let gxd = gx.data_mut();
        for bi in 0..b {
            let lim = valid[bi].min(t) * d;
            for ci in 0..c {
                let base = (bi * c + ci) * plane;
                let g = scale.data()[ci];
                let is = cache.inv_std[ci];
                let k1 = sum_gy[ci] / n;
                let k2 = sum_gy_xhat[ci] / n;
                for i in 0..lim {
                    gxd[base + i] = g * is * (gyd[base + i] - k1 - xh[base + i] * k2);
                }
            }
        }
    }
    (gx, gscale, gshift)
}

// ---------------------------------------------------------------------------
// LeakyReLU
// ---------------------------------------------------------------------------

pub fn leaky_relu_forward(x: &Tensor, slope: f64) -> Tensor {
    let mut y = x.clone();
    for v in y.data_mut() {
        if *v < 0.0 {
            *v *= slope;
        }
    }
    y
}

/// Uses the output's sign, which matches the input's for positive slopes.
pub fn leaky_relu_backward(y: &Tensor, grad_y: &Tensor, slope: f64) -> Tensor {
    let mut gx = grad_y.clone();
    for (g, &v) in gx.data_mut().iter_mut().zip(y.data()) {
        if v < 0.0 {
            *g *= slope;
        }
    }
    gx
}

// ---------------------------------------------------------------------------
// L4-norm pooling
// ---------------------------------------------------------------------------

/// Non-overlapping windows reduced to `(mean x^4)^(1/4)`. The time axis is
/// right-zero-padded to a multiple of the stride; padding dilutes the mean of
/// the last window, matching a fixed window size of `stride_t * stride_d`.
pub fn l4_pool_forward(x: &Tensor, stride_t: usize, stride_d: usize) -> Tensor {
    let (b, c, t, d) = dims4(x);
    let to = t.div_ceil(stride_t);
    let dout = d.div_ceil(stride_d);
    let xd = x.data();
    let mut y = Tensor::zeros(&[b, c, to, dout]);
    let window = (stride_t * stride_d) as f64;
    {
        let yd = y.data_mut();
        for bi in 0..b {
            for ci in 0..c {
                let x_base = (bi * c + ci) * t * d;
                let y_base = (bi * c + ci) * to * dout;
                for ot in 0..to {
                    for od in 0..dout {
                        let mut acc = 0.0;
                        for it in ot * stride_t..((ot + 1) * stride_t).min(t) {
                            for id in od * stride_d..((od + 1) * stride_d).min(d) {
                                let v = xd[x_base + it * d + id];
                                let v2 = v * v;
                                acc += v2 * v2;
                            }
                        }
                        yd[y_base + ot * dout + od] = (acc / window).powf(0.25);
                    }
                }
            }
        }
    }
    y
}

/// `dy/dx_i = x_i^3 / (n * y^3)`; zero where the window pooled to zero.
pub fn l4_pool_backward(
    x: &Tensor,
    y: &Tensor,
    grad_y: &Tensor,
    stride_t: usize,
    stride_d: usize,
) -> Tensor {
    let (b, c, t, d) = dims4(x);
    let to = y.shape()[2];
    let dout = y.shape()[3];
    let window = (stride_t * stride_d) as f64;
    let xd = x.data();
    let yd = y.data();
    let gyd = grad_y.data();
    let mut gx = Tensor::zeros(x.shape());
    {
        let gxd = gx.data_mut();
        for bi in 0..b {
            for ci in 0..c {
                let x_base = (bi * c + ci) * t * d;
                let y_base = (bi * c + ci) * to * dout;
                for ot in 0..to {
                    for od in 0..dout {
                        let yv = yd[y_base + ot * dout + od];
                        if yv == 0.0 {
                            continue;
                        }
                        let g = gyd[y_base + ot * dout + od] / (window * yv * yv * yv);
                        for it in ot * stride_t..((ot + 1) * stride_t).min(t) {
                            for id in od * stride_d..((od + 1) * stride_d).min(d) {
                                let v = xd[x_base + it * d + id];
                                gxd[x_base + it * d + id] += g * v * v * v;
                            }
                        }
                    }
                }
            }
        }
    }
    gx
}

// ---------------------------------------------------------------------------
// Time-distributed affine
// ---------------------------------------------------------------------------

/// `x: [B, T, F]`, `w: [F, O]`, `b: [O]` → `[B, T, O]`.
pub fn linear_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    let s = x.shape();
    let (bsz, t, f) = (s[0], s[1], s[2]);
    let o = w.shape()[1];
    let xd = x.data();
    let wd = w.data();
    let mut y = Tensor::zeros(&[bsz, t, o]);
    {
        let yd = y.data_mut();
        for row in 0..bsz * t {
            let x_row = &xd[row * f..(row + 1) * f];
            let y_row = &mut yd[row * o..(row + 1) * o];
            y_row.copy_from_slice(b.data());
            for (fi, &xv) in x_row.iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                let w_row = &wd[fi * o..(fi + 1) * o];
                for (yv, &wv) in y_row.iter_mut().zip(w_row) {
                    *yv += xv * wv;
                }
            }
        }
    }
    y
}

pub fn linear_backward(x: &Tensor, w: &Tensor, grad_y: &Tensor) -> (Tensor, Tensor, Tensor) {
    let s = x.shape();
    let (bsz, t, f) = (s[0], s[1], s[2]);
    let o = w.shape()[1];
    let xd = x.data();
    let wd = w.data();
    let gyd = grad_y.data();
    let mut gx = Tensor::zeros(&[bsz, t, f]);
    let mut gw = Tensor::zeros(&[f, o]);
    let mut gb = Tensor::zeros(&[o]);
    {
        let gxd = gx.data_mut();
        let gwd = gw.data_mut();
        let gbd = gb.data_mut();
        for row in 0..bsz * t {
            let x_row = &xd[row * f..(row + 1) * f];
            let gy_row = &gyd[row * o..(row + 1) * o];
            for (gbv, &gv) in gbd.iter_mut().zip(gy_row) {
                *gbv += gv;
            }
            let gx_row = &mut gxd[row * f..(row + 1) * f];
            for fi in 0..f {
                let w_row = &wd[fi * o..(fi + 1) * o];
                let gw_row = &mut gwd[fi * o..(fi + 1) * o];
                let xv = x_row[fi];
                let mut acc = 0.0;
                for oi in 0..o {
                    acc += gy_row[oi] * w_row[oi];
                    gw_row[oi] += gy_row[oi] * xv;
                }
                gx_row[fi] = acc;
            }
        }
    }
    (gx, gw, gb)
}

// ---------------------------------------------------------------------------
// Sigmoid
// ---------------------------------------------------------------------------

pub fn sigmoid_forward(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    for v in y.data_mut() {
        *v = 1.0 / (1.0 + (-*v).exp());
    }
    y
}

pub fn sigmoid_backward(y: &Tensor, grad_y: &Tensor) -> Tensor {
    let mut gx = grad_y.clone();
    for (g, &v) in gx.data_mut().iter_mut().zip(y.data()) {
        *g *= v * (1.0 - v);
    }
    gx
}

// ---------------------------------------------------------------------------
// Nearest-neighbor time upsampling
// ---------------------------------------------------------------------------

/// Repeats each frame `factor` times along the time axis of `[B, T', E]` and
/// crops to `t_out`.
pub fn upsample_time_forward(x: &Tensor, factor: usize, t_out: usize) -> Tensor {
    let s = x.shape();
    let (bsz, t_in, e) = (s[0], s[1], s[2]);
    debug_assert!(t_in * factor >= t_out);
    let xd = x.data();
    let mut y = Tensor::zeros(&[bsz, t_out, e]);
    {
        let yd = y.data_mut();
        for bi in 0..bsz {
            for ot in 0..t_out {
                let it = ot / factor;
                let src = (bi * t_in + it) * e;
                let dst = (bi * t_out + ot) * e;
                yd[dst..dst + e].copy_from_slice(&xd[src..src + e]);
            }
        }
    }
    y
}

pub fn upsample_time_backward(grad_y: &Tensor, factor: usize, t_in: usize) -> Tensor {
    let s = grad_y.shape();
    let (bsz, t_out, e) = (s[0], s[1], s[2]);
    let gyd = grad_y.data();
    let mut gx = Tensor::zeros(&[bsz, t_in, e]);
    {
        let gxd = gx.data_mut();
        for bi in 0..bsz {
            for ot in 0..t_out {
                let it = ot / factor;
                let src = (bi * t_out + ot) * e;
                let dst = (bi * t_in + it) * e;
                for k in 0..e {
                    gxd[dst + k] += gyd[src + k];
                }
            }
        }
    }
    gx
}

// ---------------------------------------------------------------------------
// Linear softmax temporal pooling
// ---------------------------------------------------------------------------

/// `y(e) = Σ_t p_t(e)^2 / Σ_t p_t(e)` over valid frames; 0 when the
/// denominator vanishes. `probs: [B, T, E]` → `[B, E]`.
pub fn linear_softmax_pool(probs: &Tensor, valid: &[usize]) -> Tensor {
    let s = probs.shape();
    let (bsz, t, e) = (s[0], s[1], s[2]);
    let pd = probs.data();
    let mut y = Tensor::zeros(&[bsz, e]);
    {
        let yd = y.data_mut();
        for bi in 0..bsz {
            let lim = valid[bi].min(t);
            for ei in 0..e {
                let mut s1 = 0.0;
                let mut s2 = 0.0;
                for t_i in 0..lim {
                    let v = pd[(bi * t + t_i) * e + ei];
                    s1 += v;
                    s2 += v * v;
                }
                yd[bi * e + ei] = if s1 > 0.0 { s2 / s1 } else { 0.0 };
            }
        }
    }
    y
}

/// `d y / d p_t = (2 p_t S1 - S2) / S1^2` at valid frames, zero elsewhere.
pub fn linear_softmax_pool_backward(probs: &Tensor, valid: &[usize], grad_y: &Tensor) -> Tensor {
    let s = probs.shape();
    let (bsz, t, e) = (s[0], s[1], s[2]);
    let pd = probs.data();
    let gyd = grad_y.data();
    let mut gp = Tensor::zeros(probs.shape());
    {
        let gpd = gp.data_mut();
        for bi in 0..bsz {
            let lim = valid[bi].min(t);
            for ei in 0..e {
                let mut s1 = 0.0;
                let mut s2 = 0.0;
                for t_i in 0..lim {
                    let v = pd[(bi * t + t_i) * e + ei];
                    s1 += v;
                    s2 += v * v;
                }
                if s1 <= 0.0 {
                    continue;
                }
                let g = gyd[bi * e + ei];
                let inv_s1 = 1.0 / s1;
                for t_i in 0..lim {
                    let v = pd[(bi * t + t_i) * e + ei];
                    gpd[(bi * t + t_i) * e + ei] = g * (2.0 * v * s1 - s2) * inv_s1 * inv_s1;
                }
            }
        }
    }
    gp
}

/// Zeroes every channel/bin at time positions `>= valid[b]`. `x` is
/// `[B, C, T, D]` or `[B, T, F]` with `time_axis` naming which axis is time.
pub fn mask_time4(x: &mut Tensor, valid: &[usize]) {
    let (b, c, t, d) = dims4(x);
    let plane = t * d;
    let xd = x.data_mut();
    for bi in 0..b {
        let lim = valid[bi].min(t);
        if lim == t {
            continue;
        }
        for ci in 0..c {
            let base = (bi * c + ci) * plane;
            xd[base + lim * d..base + plane].fill(0.0);
        }
    }
}

pub fn mask_time3(x: &mut Tensor, valid: &[usize]) {
    let s = x.shape();
    let (b, t, f) = (s[0], s[1], s[2]);
    let xd = x.data_mut();
    for bi in 0..b {
        let lim = valid[bi].min(t);
        if lim < t {
            xd[(bi * t + lim) * f..(bi + 1) * t * f].fill(0.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor4(b: usize, c: usize, t: usize, d: usize, f: impl FnMut(usize) -> f64) -> Tensor {
        Tensor::from_fn(&[b, c, t, d], f)
    }

    #[test]
    fn conv_zero_kernel_gives_zero() {
        let x = tensor4(1, 2, 4, 4, |i| i as f64);
        let k = Tensor::zeros(&[3, 2, 3, 3]);
        let b = Tensor::zeros(&[3]);
        let y = conv3x3_forward(&x, &k, &b).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
        assert_eq!(y.shape(), &[1, 3, 4, 4]);
    }

    #[test]
    fn conv_identity_kernel_passes_input() {
        let x = tensor4(1, 1, 5, 6, |i| (i as f64).sin());
        let mut k = Tensor::zeros(&[1, 1, 3, 3]);
        k.data_mut()[4] = 1.0; // center tap
        let b = Tensor::zeros(&[1]);
        let y = conv3x3_forward(&x, &k, &b).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn conv_matches_naive_loop_oracle() {
        let mut state = 1u64;
        let mut rnd = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) as f64 / (1u64 << 31) as f64) - 1.0
        };
        let x = tensor4(2, 3, 4, 4, |_| rnd());
        let k = Tensor::from_fn(&[2, 3, 3, 3], |_| rnd());
        let bias = Tensor::from_fn(&[2], |_| rnd());
        let y = conv3x3_forward(&x, &k, &bias).unwrap();

        // Four-nested-loop oracle with explicit zero padding.
        for b_i in 0..2 {
            for co in 0..2 {
                for t in 0..4usize {
                    for d in 0..4usize {
                        let mut acc = bias.data()[co];
                        for ci in 0..3 {
                            for kt in 0..3usize {
                                for kd in 0..3usize {
                                    let ti = t as isize + kt as isize - 1;
                                    let di = d as isize + kd as isize - 1;
                                    if ti < 0 || ti >= 4 || di < 0 || di >= 4 {
                                        continue;
                                    }
                                    let xi = ((b_i * 3 + ci) * 4 + ti as usize) * 4 + di as usize;
                                    let ki = ((co * 3 + ci) * 3 + kt) * 3 + kd;
                                    acc += x.data()[xi] * k.data()[ki];
                                }
                            }
                        }
                        let yi = ((b_i * 2 + co) * 4 + t) * 4 + d;
                        assert!((y.data()[yi] - acc).abs() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn bn_eval_identity_when_stats_match() {
        let x = tensor4(1, 1, 2, 3, |i| [1.0, -1.0, 0.5, -0.5, 0.25, -0.25][i]);
        let scale = Tensor::from_vec(&[1], vec![1.0]).unwrap();
        let shift = Tensor::zeros(&[1]);
        let mean = Tensor::zeros(&[1]);
        let var = Tensor::from_vec(&[1], vec![1.0]).unwrap();
        let out = bn_forward(&x, &scale, &shift, &mean, &var, Mode::Eval, &[2]);
        for (a, b) in out.y.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-5 * b.abs().max(1.0) + 1e-5);
        }
    }

    #[test]
    fn bn_train_constant_channel_maps_to_shift() {
        let x = tensor4(2, 1, 3, 2, |_| 7.5);
        let scale = Tensor::from_vec(&[1], vec![2.0]).unwrap();
        let shift = Tensor::from_vec(&[1], vec![-3.0]).unwrap();
        let mean = Tensor::zeros(&[1]);
        let var = Tensor::from_vec(&[1], vec![1.0]).unwrap();
        let out = bn_forward(&x, &scale, &shift, &mean, &var, Mode::Train, &[3, 3]);
        for &v in out.y.data() {
            assert!((v - -3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn bn_train_moments_match_scale_and_shift() {
        let mut state = 3u64;
        let mut rnd = move || {
            state = state.wrapping_mul(2862933555777941757).wrapping_add(3037000493);
            ((state >> 33) as f64 / (1u64 << 31) as f64) - 1.0
        };
        let x = tensor4(4, 2, 8, 4, |_| rnd() * 3.0 + 0.7);
        let scale = Tensor::from_vec(&[2], vec![1.5, 0.5]).unwrap();
        let shift = Tensor::from_vec(&[2], vec![0.3, -0.2]).unwrap();
        let mean = Tensor::zeros(&[2]);
        let var = Tensor::from_vec(&[2], vec![1.0, 1.0]).unwrap();
        let out = bn_forward(&x, &scale, &shift, &mean, &var, Mode::Train, &[8, 8, 8, 8]);
        // Recompute the output moments per channel.
        for ci in 0..2usize {
            let mut s = 0.0;
            let mut s2 = 0.0;
            let mut n = 0.0;
            for bi in 0..4usize {
                let base = (bi * 2 + ci) * 32;
                for i in 0..32 {
                    let v = out.y.data()[base + i];
                    s += v;
                    s2 += v * v;
                    n += 1.0;
                }
            }
            let m = s / n;
            let v = s2 / n - m * m;
            assert!((m - shift.data()[ci]).abs() < 1e-4, "mean {m}");
            assert!((v - scale.data()[ci] * scale.data()[ci]).abs() < 1e-4, "var {v}");
        }
    }

    #[test]
    fn leaky_relu_values() {
        let x = Tensor::from_vec(&[1, 1, 1, 3], vec![0.0, 2.0, -3.0]).unwrap();
        let y = leaky_relu_forward(&x, 0.1);
        assert_eq!(y.data(), &[0.0, 2.0, -0.3]);
    }

    #[test]
    fn l4_pool_constant_window() {
        let x = tensor4(1, 1, 2, 2, |_| 1.7);
        let y = l4_pool_forward(&x, 2, 2);
        assert_eq!(y.shape(), &[1, 1, 1, 1]);
        assert!((y.data()[0] - 1.7).abs() < 1e-12);
    }

    #[test]
    fn l4_pool_single_hot_window() {
        let x = Tensor::from_vec(&[1, 1, 2, 2], vec![2.0, 0.0, 0.0, 0.0]).unwrap();
        let y = l4_pool_forward(&x, 2, 2);
        let expect = 2.0 * 0.25f64.powf(0.25);
        assert!((y.data()[0] - expect).abs() < 1e-12);
        assert!((y.data()[0] - 2.0 * 0.7071).abs() < 1e-3);
    }

    #[test]
    fn l4_pool_unit_stride_is_identity_on_magnitudes() {
        let x = tensor4(1, 2, 3, 3, |i| 0.5 + i as f64 * 0.1);
        let y = l4_pool_forward(&x, 1, 1);
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn upsample_repeats_and_crops() {
        let x = Tensor::from_vec(&[1, 2, 1], vec![1.0, 2.0]).unwrap();
        let y = upsample_time_forward(&x, 4, 7);
        assert_eq!(y.data(), &[1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0]);
        let g = upsample_time_backward(&y, 4, 2);
        assert_eq!(g.data(), &[4.0, 6.0]);
    }

    #[test]
    fn pool_constant_probs_collapse() {
        let p = Tensor::from_fn(&[1, 5, 1], |_| 0.37);
        let y = linear_softmax_pool(&p, &[5]);
        assert!((y.data()[0] - 0.37).abs() < 1e-12);
    }

    #[test]
    fn pool_two_frame_example() {
        let p = Tensor::from_vec(&[1, 2, 1], vec![0.2, 0.8]).unwrap();
        let y = linear_softmax_pool(&p, &[2]);
        assert!((y.data()[0] - 0.68).abs() < 1e-12);
    }

    #[test]
    fn pool_zero_frames_give_zero() {
        let p = Tensor::zeros(&[1, 4, 2]);
        let y = linear_softmax_pool(&p, &[4]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pool_respects_validity_mask() {
        let p = Tensor::from_vec(&[1, 3, 1], vec![0.2, 0.8, 0.99]).unwrap();
        let y = linear_softmax_pool(&p, &[2]);
        assert!((y.data()[0] - 0.68).abs() < 1e-12);
    }

    #[test]
    fn pool_bounded_by_frame_range() {
        let p = Tensor::from_vec(&[1, 4, 1], vec![0.1, 0.5, 0.9, 0.3]).unwrap();
        let y = linear_softmax_pool(&p, &[4]).data()[0];
        assert!((0.1..=0.9).contains(&y));
    }
}
