//! Gated recurrent unit, bidirectional, with exact backward-through-time.
//!
//! Gate layout stacks reset, update and candidate rows as `[3H]` in that
//! order. Each direction processes only the valid prefix of every batch item
//! (the backward direction starts at the last valid frame), so batch padding
//! never leaks into hidden states.

use crate::nn::Tensor;

/// One direction's parameters.
#[derive(Debug, Clone)]
pub struct GruDirection {
    /// `[3H, F]`
    pub w_ih: Tensor,
    /// `[3H, H]`
    pub w_hh: Tensor,
    /// `[3H]`
    pub b_ih: Tensor,
    /// `[3H]`
    pub b_hh: Tensor,
}

impl GruDirection {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        GruDirection {
            w_ih: Tensor::zeros(&[3 * hidden, input]),
            w_hh: Tensor::zeros(&[3 * hidden, hidden]),
            b_ih: Tensor::zeros(&[3 * hidden]),
            b_hh: Tensor::zeros(&[3 * hidden]),
        }
    }
}

/// Per-direction activations saved for the backward pass, each `[B, T, H]`.
#[derive(Debug, Clone)]
pub struct GruCache {
    pub r: Tensor,
    pub z: Tensor,
    pub n: Tensor,
    pub h: Tensor,
    /// `W_hn h_prev + b_hn`, needed for the reset-gate gradient.
    pub hh_n: Tensor,
}

pub struct GruGrads {
    pub w_ih: Tensor,
    pub w_hh: Tensor,
    pub b_ih: Tensor,
    pub b_hh: Tensor,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `y += m[rows sel] · v` for the `H`-row band starting at `band * H`.
#[inline]
fn band_matvec(m: &Tensor, band: usize, h: usize, v: &[f64], y: &mut [f64]) {
    let cols = m.shape()[1];
    let md = m.data();
    for (row, yv) in y.iter_mut().enumerate() {
        let base = (band * h + row) * cols;
        let mut acc = 0.0;
        for (c, &vv) in v.iter().enumerate() {
            acc += md[base + c] * vv;
        }
        *yv += acc;
    }
}

/// `y += m[band]^T · g` (accumulates into a `cols`-length vector).
#[inline]
fn band_matvec_t(m: &Tensor, band: usize, h: usize, g: &[f64], y: &mut [f64]) {
    let cols = m.shape()[1];
    let md = m.data();
    for (row, &gv) in g.iter().enumerate() {
        if gv == 0.0 {
            continue;
        }
        let base = (band * h + row) * cols;
        for (c, yv) in y.iter_mut().enumerate() {
            *yv += md[base + c] * gv;
        }
    }
}

/// Rank-1 accumulation `gm[band] += g ⊗ v`.
#[inline]
fn band_outer(gm: &mut Tensor, band: usize, h: usize, g: &[f64], v: &[f64]) {
    let cols = gm.shape()[1];
    let gd = gm.data_mut();
    for (row, &gv) in g.iter().enumerate() {
        if gv == 0.0 {
            continue;
        }
        let base = (band * h + row) * cols;
        for (c, &vv) in v.iter().enumerate() {
            gd[base + c] += gv * vv;
        }
    }
}

const RESET: usize = 0;
const UPDATE: usize = 1;
const CAND: usize = 2;

/// Runs one direction over `x: [B, T, F]`. When `reverse` is set the steps of
/// each item run from its last valid frame back to 0. Outputs and cache stay
/// zero at invalid positions.
pub fn gru_forward_dir(
    x: &Tensor,
    dir: &GruDirection,
    valid: &[usize],
    reverse: bool,
) -> (Tensor, GruCache) {
    let s = x.shape();
    let (bsz, t_max, f) = (s[0], s[1], s[2]);
    let h = dir.w_hh.shape()[1];
    let mut out = Tensor::zeros(&[bsz, t_max, h]);
    let mut cache = GruCache {
        r: Tensor::zeros(&[bsz, t_max, h]),
        z: Tensor::zeros(&[bsz, t_max, h]),
        n: Tensor::zeros(&[bsz, t_max, h]),
        h: Tensor::zeros(&[bsz, t_max, h]),
        hh_n: Tensor::zeros(&[bsz, t_max, h]),
    };
    let xd = x.data();
    for bi in 0..bsz {
        let len = valid[bi].min(t_max);
        let mut h_prev = vec![0.0f64; h];
        let steps: Vec<usize> = if reverse {
            (0..len).rev().collect()
        } else {
            (0..len).collect()
        };
        for &t in &steps {
            let x_t = &xd[(bi * t_max + t) * f..(bi * t_max + t) * f + f];
            // Pre-activations for the three gates.
            let mut gi = [vec![0.0; h], vec![0.0; h], vec![0.0; h]];
            let mut gh = [vec![0.0; h], vec![0.0; h], vec![0.0; h]];
            for band in [RESET, UPDATE, CAND] {
                for k in 0..h {
                    gi[band][k] = dir.b_ih.data()[band * h + k];
                    gh[band][k] = dir.b_hh.data()[band * h + k];
                }
                band_matvec(&dir.w_ih, band, h, x_t, &mut gi[band]);
                band_matvec(&dir.w_hh, band, h, &h_prev, &mut gh[band]);
            }
            let idx = (bi * t_max + t) * h;
            for k in 0..h {
                let r = sigmoid(gi[RESET][k] + gh[RESET][k]);
                let z = sigmoid(gi[UPDATE][k] + gh[UPDATE][k]);
                let a = gh[CAND][k];
                let n = (gi[CAND][k] + r * a).tanh();
                let h_new = (1.0 - z) * n + z * h_prev[k];
                cache.r.data_mut()[idx + k] = r;
                cache.z.data_mut()[idx + k] = z;
                cache.n.data_mut()[idx + k] = n;
                cache.hh_n.data_mut()[idx + k] = a;
                cache.h.data_mut()[idx + k] = h_new;
                out.data_mut()[idx + k] = h_new;
            }
            h_prev.copy_from_slice(&cache.h.data()[idx..idx + h]);
        }
    }
    (out, cache)
}

/// Backward-through-time for one direction. `grad_out` matches the forward
/// output `[B, T, H]`. Returns the input gradient and parameter gradients.
pub fn gru_backward_dir(
    x: &Tensor,
    dir: &GruDirection,
    cache: &GruCache,
    grad_out: &Tensor,
    valid: &[usize],
    reverse: bool,
) -> (Tensor, GruGrads) {
    let s = x.shape();
    let (bsz, t_max, f) = (s[0], s[1], s[2]);
    let h = dir.w_hh.shape()[1];
    let mut gx = Tensor::zeros(&[bsz, t_max, f]);
    let mut grads = GruGrads {
        w_ih: Tensor::zeros(&[3 * h, f]),
        w_hh: Tensor::zeros(&[3 * h, h]),
        b_ih: Tensor::zeros(&[3 * h]),
        b_hh: Tensor::zeros(&[3 * h]),
    };
    let xd = x.data();
    let god = grad_out.data();
    for bi in 0..bsz {
        let len = valid[bi].min(t_max);
        if len == 0 {
            continue;
        }
        // Processing order of the forward pass; we walk it backwards.
        let steps: Vec<usize> = if reverse {
            (0..len).rev().collect()
        } else {
            (0..len).collect()
        };
        let mut carry = vec![0.0f64; h]; // dL/dh flowing from the later step
        for si in (0..steps.len()).rev() {
            let t = steps[si];
            let idx = (bi * t_max + t) * h;
            let h_prev: Vec<f64> = if si == 0 {
                vec![0.0; h]
            } else {
                let pidx = (bi * t_max + steps[si - 1]) * h;
                cache.h.data()[pidx..pidx + h].to_vec()
            };
            let mut gr_pre = vec![0.0f64; h];
            let mut gz_pre = vec![0.0f64; h];
            let mut gn_pre = vec![0.0f64; h];
            let mut ga = vec![0.0f64; h];
            let mut carry_next = vec![0.0f64; h];
            for k in 0..h {
                let gh = god[idx + k] + carry[k];
                let r = cache.r.data()[idx + k];
                let z = cache.z.data()[idx + k];
                let n = cache.n.data()[idx + k];
                let a = cache.hh_n.data()[idx + k];
                let gz = gh * (h_prev[k] - n);
                let gn = gh * (1.0 - z);
                carry_next[k] = gh * z;
                let gnp = gn * (1.0 - n * n);
                gn_pre[k] = gnp;
                ga[k] = gnp * r;
                gr_pre[k] = gnp * a * r * (1.0 - r);
                gz_pre[k] = gz * z * (1.0 - z);
            }
            let x_t = &xd[(bi * t_max + t) * f..(bi * t_max + t) * f + f];
            // Parameter gradients.
            band_outer(&mut grads.w_ih, RESET, h, &gr_pre, x_t);
            band_outer(&mut grads.w_ih, UPDATE, h, &gz_pre, x_t);
            band_outer(&mut grads.w_ih, CAND, h, &gn_pre, x_t);
            band_outer(&mut grads.w_hh, RESET, h, &gr_pre, &h_prev);
            band_outer(&mut grads.w_hh, UPDATE, h, &gz_pre, &h_prev);
            band_outer(&mut grads.w_hh, CAND, h, &ga, &h_prev);
            for k in 0..h {
                grads.b_ih.data_mut()[RESET * h + k] += gr_pre[k];
                grads.b_ih.data_mut()[UPDATE * h + k] += gz_pre[k];
                grads.b_ih.data_mut()[CAND * h + k] += gn_pre[k];
                grads.b_hh.data_mut()[RESET * h + k] += gr_pre[k];
                grads.b_hh.data_mut()[UPDATE * h + k] += gz_pre[k];
                grads.b_hh.data_mut()[CAND * h + k] += ga[k];
            }
            // Input gradient.
            {
                let gx_row = {
                    let base = (bi * t_max + t) * f;
                    let gxd = gx.data_mut();
                    &mut gxd[base..base + f]
                };
                let mut acc = vec![0.0f64; f];
                band_matvec_t(&dir.w_ih, RESET, h, &gr_pre, &mut acc);
                band_matvec_t(&dir.w_ih, UPDATE, h, &gz_pre, &mut acc);
                band_matvec_t(&dir.w_ih, CAND, h, &gn_pre, &mut acc);
                for (g, a) in gx_row.iter_mut().zip(&acc) {
                    *g += a;
                }
            }
            // Hidden-state gradient to the previous step.
            band_matvec_t(&dir.w_hh, RESET, h, &gr_pre, &mut carry_next);
            band_matvec_t(&dir.w_hh, UPDATE, h, &gz_pre, &mut carry_next);
            band_matvec_t(&dir.w_hh, CAND, h, &ga, &mut carry_next);
            carry = carry_next;
        }
    }
    (gx, grads)
}

/// Bidirectional pair.
#[derive(Debug, Clone)]
pub struct BiGru {
    pub fwd: GruDirection,
    pub bwd: GruDirection,
    pub hidden: usize,
}

pub struct BiGruCache {
    pub fwd: GruCache,
    pub bwd: GruCache,
}

impl BiGru {
    /// `x: [B, T, F]` → `[B, T, 2H]`, forward then backward halves.
    pub fn forward(&self, x: &Tensor, valid: &[usize]) -> (Tensor, BiGruCache) {
        let (yf, cf) = gru_forward_dir(x, &self.fwd, valid, false);
        let (yb, cb) = gru_forward_dir(x, &self.bwd, valid, true);
        let s = x.shape();
        let (bsz, t, _) = (s[0], s[1], s[2]);
        let h = self.hidden;
        let mut y = Tensor::zeros(&[bsz, t, 2 * h]);
        {
            let yd = y.data_mut();
            for row in 0..bsz * t {
                yd[row * 2 * h..row * 2 * h + h].copy_from_slice(&yf.data()[row * h..(row + 1) * h]);
                yd[row * 2 * h + h..(row + 1) * 2 * h]
                    .copy_from_slice(&yb.data()[row * h..(row + 1) * h]);
            }
        }
        (y, BiGruCache { fwd: cf, bwd: cb })
    }

    pub fn backward(
        &self,
        x: &Tensor,
        cache: &BiGruCache,
        grad_y: &Tensor,
        valid: &[usize],
    ) -> (Tensor, GruGrads, GruGrads) {
        let s = x.shape();
        let (bsz, t, _) = (s[0], s[1], s[2]);
        let h = self.hidden;
        let mut gf = Tensor::zeros(&[bsz, t, h]);
        let mut gb = Tensor::zeros(&[bsz, t, h]);
        for row in 0..bsz * t {
            gf.data_mut()[row * h..(row + 1) * h]
                .copy_from_slice(&grad_y.data()[row * 2 * h..row * 2 * h + h]);
            gb.data_mut()[row * h..(row + 1) * h]
                .copy_from_slice(&grad_y.data()[row * 2 * h + h..(row + 1) * 2 * h]);
        }
        let (gx_f, grads_f) = gru_backward_dir(x, &self.fwd, &cache.fwd, &gf, valid, false);
        let (gx_b, grads_b) = gru_backward_dir(x, &self.bwd, &cache.bwd, &gb, valid, true);
        let mut gx = gx_f;
        for (a, b) in gx.data_mut().iter_mut().zip(gx_b.data()) {
            *a += b;
        }
        (gx, grads_f, grads_b)
    }
}

/// Unbatched convenience: `x: [T, F]` → `[T, 2H]` over the full length.
pub fn bgru_forward(x: &Tensor, gru: &BiGru) -> Tensor {
    let (t, f) = (x.shape()[0], x.shape()[1]);
    let batched = x.clone().reshape(&[1, t, f]).unwrap();
    let (y, _) = gru.forward(&batched, &[t]);
    y.reshape(&[t, 2 * gru.hidden]).unwrap()
}
