//! The convolutional-recurrent model: three conv blocks with L4-norm pooling,
//! a bidirectional GRU, a sigmoid head, and nearest-neighbor time upsampling
//! back to the input frame rate.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::{ClipId, DspConfig, LogMelSpec};
use crate::error::{Error, Result};
use crate::nn::gru::{BiGru, BiGruCache, GruDirection};
use crate::nn::ops::{self, BnCache, Mode};
use crate::nn::Tensor;
use crate::rng::rng_for;

/// Architecture description. The defaults collapse 64 mel bins to one
/// through three rounds of 4x frequency pooling and downsample time by 4.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrnnConfig {
    /// Channel width of every convolution in each block.
    pub block_channels: Vec<usize>,
    pub convs_per_block: Vec<usize>,
    /// `(time, freq)` stride of the pool closing each block.
    pub pool_strides: Vec<(usize, usize)>,
    /// Hidden size per GRU direction.
    pub gru_hidden: usize,
    /// Output events `E`.
    pub num_outputs: usize,
    pub leaky_slope: f64,
    /// Input mel bins `D`.
    pub n_mels: usize,
}

impl CrnnConfig {
    pub fn with_outputs(num_outputs: usize) -> Self {
        CrnnConfig {
            block_channels: vec![32, 128, 128],
            convs_per_block: vec![1, 2, 2],
            pool_strides: vec![(2, 4), (2, 4), (1, 4)],
            gru_hidden: 128,
            num_outputs,
            leaky_slope: 0.1,
            n_mels: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.block_channels.len() != self.convs_per_block.len()
            || self.block_channels.len() != self.pool_strides.len()
        {
            return Err(Error::invalid("block descriptions must have equal length"));
        }
        if self.num_outputs == 0 || self.gru_hidden == 0 {
            return Err(Error::invalid("gru_hidden and num_outputs must be positive"));
        }
        let freq: usize = self.pool_strides.iter().map(|&(_, f)| f).product();
        if freq != self.n_mels {
            return Err(Error::invalid(format!(
                "frequency pool strides multiply to {freq}, must collapse all {} mel bins",
                self.n_mels
            )));
        }
        Ok(())
    }

    /// Product of the time pool strides; the upsampling factor of the head.
    pub fn time_downsample(&self) -> usize {
        self.pool_strides.iter().map(|&(t, _)| t).product()
    }
}

/// Non-architecture metadata carried with the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub version: u32,
    /// Names of the output events, length `num_outputs`. Index of "speech"
    /// is resolved by name at distillation time.
    pub event_names: Vec<String>,
    pub dsp: DspConfig,
}

impl ModelMeta {
    pub fn new(event_names: Vec<String>, dsp: DspConfig) -> Self {
        ModelMeta {
            version: 1,
            event_names,
            dsp,
        }
    }
}

/// One convolution with its batch norm.
#[derive(Debug, Clone)]
pub struct ConvUnit {
    pub kernel: Tensor,
    pub bias: Tensor,
    pub bn_scale: Tensor,
    pub bn_shift: Tensor,
    pub bn_rmean: Tensor,
    pub bn_rvar: Tensor,
}

#[derive(Debug, Clone)]
pub struct Block {
    pub convs: Vec<ConvUnit>,
    pub pool: (usize, usize),
}

#[derive(Debug, Clone)]
pub struct CrnnModel {
    pub cfg: CrnnConfig,
    pub meta: ModelMeta,
    pub blocks: Vec<Block>,
    pub gru: BiGru,
    /// `[2H, E]`
    pub head_w: Tensor,
    /// `[E]`
    pub head_b: Tensor,
}

/// Per-frame event probabilities for one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameProbs {
    /// `[T, E]`, every value in `[0, 1]`.
    pub values: Tensor,
    pub frame_hop_s: f64,
    pub clip_id: ClipId,
}

impl FrameProbs {
    pub fn num_frames(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn num_events(&self) -> usize {
        self.values.shape()[1]
    }
}

struct ConvTrace {
    x_in: Tensor,
    bn: BnCache,
    y_act: Tensor,
}

struct BlockTrace {
    convs: Vec<ConvTrace>,
    pool_out: Tensor,
    valid_in: Vec<usize>,
}

/// Everything the backward pass needs from one training forward.
pub struct ForwardTrace {
    blocks: Vec<BlockTrace>,
    gru_in: Tensor,
    gru_cache: BiGruCache,
    gru_out: Tensor,
    probs_low: Tensor,
    valid0: Vec<usize>,
    valid_low: Vec<usize>,
    t0: usize,
}

/// Named parameter gradients in model visitation order.
pub struct Gradients {
    pub tensors: Vec<(String, Tensor)>,
}

impl Gradients {
    fn zeros_like(model: &CrnnModel) -> Self {
        Gradients {
            tensors: model
                .named_params()
                .into_iter()
                .map(|(n, t)| (n, Tensor::zeros(t.shape())))
                .collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    fn set(&mut self, name: &str, value: Tensor) {
        let slot = self
            .tensors
            .iter_mut()
            .find(|(n, _)| n == name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"));
        slot.1 = value;
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|(_, t)| t.is_finite())
    }
}

impl CrnnModel {
    /// Seeded initialization: He-normal conv kernels, unit batch-norm,
    /// uniform `±1/sqrt(H)` recurrent weights. All values land on the `f32`
    /// grid so a save/load round-trip is exact.
    pub fn init(cfg: CrnnConfig, meta: ModelMeta, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if meta.event_names.len() != cfg.num_outputs {
            return Err(Error::invalid(format!(
                "{} event names for {} outputs",
                meta.event_names.len(),
                cfg.num_outputs
            )));
        }
        let mut rng = rng_for(seed, "model-init", 0);
        let mut normal = |std: f64, rng: &mut rand_chacha::ChaCha8Rng| {
            // Box-Muller keeps us independent of distribution crate internals.
            let u1: f64 = rng.random::<f64>().max(1e-12);
            let u2: f64 = rng.random();
            std * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        };

        let mut blocks = Vec::new();
        let mut c_in = 1usize;
        for (bi, (&c_out, &n_convs)) in cfg
            .block_channels
            .iter()
            .zip(&cfg.convs_per_block)
            .enumerate()
        {
            let mut convs = Vec::new();
            for _ in 0..n_convs {
                let fan_in = c_in * 9;
                let std = (2.0 / fan_in as f64).sqrt();
                let kernel = Tensor::from_fn(&[c_out, c_in, 3, 3], |_| normal(std, &mut rng));
                convs.push(ConvUnit {
                    kernel,
                    bias: Tensor::zeros(&[c_out]),
                    bn_scale: Tensor::from_fn(&[c_out], |_| 1.0),
                    bn_shift: Tensor::zeros(&[c_out]),
                    bn_rmean: Tensor::zeros(&[c_out]),
                    bn_rvar: Tensor::from_fn(&[c_out], |_| 1.0),
                });
                c_in = c_out;
            }
            blocks.push(Block {
                convs,
                pool: cfg.pool_strides[bi],
            });
        }

        let h = cfg.gru_hidden;
        let f = c_in; // frequency axis is fully collapsed
        let k = 1.0 / (h as f64).sqrt();
        let mut uniform = |k: f64, rng: &mut rand_chacha::ChaCha8Rng| rng.random_range(-k..k);
        let mut dir = |rng: &mut rand_chacha::ChaCha8Rng| GruDirection {
            w_ih: Tensor::from_fn(&[3 * h, f], |_| uniform(k, rng)),
            w_hh: Tensor::from_fn(&[3 * h, h], |_| uniform(k, rng)),
            b_ih: Tensor::from_fn(&[3 * h], |_| uniform(k, rng)),
            b_hh: Tensor::from_fn(&[3 * h], |_| uniform(k, rng)),
        };
        let gru = BiGru {
            fwd: dir(&mut rng),
            bwd: dir(&mut rng),
            hidden: h,
        };
        let kh = 1.0 / (2.0 * h as f64).sqrt();
        let head_w = Tensor::from_fn(&[2 * h, cfg.num_outputs], |_| uniform(kh, &mut rng));
        let head_b = Tensor::zeros(&[cfg.num_outputs]);

        let mut model = CrnnModel {
            cfg,
            meta,
            blocks,
            gru,
            head_w,
            head_b,
        };
        model.for_each_param_mut(&mut |_, t| t.snap_to_f32());
        Ok(model)
    }

    /// Structure with all-zero parameters; the load path fills it in.
    pub fn zeros(cfg: CrnnConfig, meta: ModelMeta) -> Result<Self> {
        let mut model = Self::init(cfg, meta, 0)?;
        model.for_each_param_mut(&mut |_, t| t.fill(0.0));
        model.for_each_running_stat_mut(&mut |_, t| t.fill(0.0));
        Ok(model)
    }

    /// Learnable parameters in canonical order (running stats excluded).
    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (bi, block) in self.blocks.iter().enumerate() {
            for (ci, conv) in block.convs.iter().enumerate() {
                out.push((format!("block{bi}.conv{ci}.kernel"), &conv.kernel));
                out.push((format!("block{bi}.conv{ci}.bias"), &conv.bias));
                out.push((format!("block{bi}.conv{ci}.bn_scale"), &conv.bn_scale));
                out.push((format!("block{bi}.conv{ci}.bn_shift"), &conv.bn_shift));
            }
        }
        for (tag, dir) in [("fwd", &self.gru.fwd), ("bwd", &self.gru.bwd)] {
            out.push((format!("gru.{tag}.w_ih"), &dir.w_ih));
            out.push((format!("gru.{tag}.w_hh"), &dir.w_hh));
            out.push((format!("gru.{tag}.b_ih"), &dir.b_ih));
            out.push((format!("gru.{tag}.b_hh"), &dir.b_hh));
        }
        out.push(("head.weight".into(), &self.head_w));
        out.push(("head.bias".into(), &self.head_b));
        out
    }

    /// Running statistics, serialized but not trained or counted.
    pub fn named_running_stats(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (bi, block) in self.blocks.iter().enumerate() {
            for (ci, conv) in block.convs.iter().enumerate() {
                out.push((format!("block{bi}.conv{ci}.bn_rmean"), &conv.bn_rmean));
                out.push((format!("block{bi}.conv{ci}.bn_rvar"), &conv.bn_rvar));
            }
        }
        out
    }

    pub fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        for (bi, block) in self.blocks.iter_mut().enumerate() {
            for (ci, conv) in block.convs.iter_mut().enumerate() {
                f(&format!("block{bi}.conv{ci}.kernel"), &mut conv.kernel);
                f(&format!("block{bi}.conv{ci}.bias"), &mut conv.bias);
                f(&format!("block{bi}.conv{ci}.bn_scale"), &mut conv.bn_scale);
                f(&format!("block{bi}.conv{ci}.bn_shift"), &mut conv.bn_shift);
            }
        }
        for (tag, dir) in [("fwd", &mut self.gru.fwd), ("bwd", &mut self.gru.bwd)] {
            f(&format!("gru.{tag}.w_ih"), &mut dir.w_ih);
            f(&format!("gru.{tag}.w_hh"), &mut dir.w_hh);
            f(&format!("gru.{tag}.b_ih"), &mut dir.b_ih);
            f(&format!("gru.{tag}.b_hh"), &mut dir.b_hh);
        }
        f("head.weight", &mut self.head_w);
        f("head.bias", &mut self.head_b);
    }

    pub fn for_each_running_stat_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        for (bi, block) in self.blocks.iter_mut().enumerate() {
            for (ci, conv) in block.convs.iter_mut().enumerate() {
                f(&format!("block{bi}.conv{ci}.bn_rmean"), &mut conv.bn_rmean);
                f(&format!("block{bi}.conv{ci}.bn_rvar"), &mut conv.bn_rvar);
            }
        }
    }

    /// Learnable parameter count; running statistics are excluded.
    pub fn count_params(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.numel()).sum()
    }

    /// Training forward over a padded batch `[B, T, D]`. Returns per-frame
    /// probabilities `[B, T, E]` (zero at padded frames) and the trace for
    /// [`CrnnModel::backward`]. Running statistics update when requested.
    pub fn forward_train(
        &mut self,
        input: &Tensor,
        valid: &[usize],
        update_running: bool,
    ) -> Result<(Tensor, ForwardTrace)> {
        let mut stats = Vec::new();
        let (probs, trace) = self.run(input, valid, Mode::Train, &mut Some(&mut stats))?;
        if update_running {
            for ((bi, ci), s) in stats {
                let conv = &mut self.blocks[bi].convs[ci];
                ops::bn_update_running(&mut conv.bn_rmean, &mut conv.bn_rvar, &s);
            }
        }
        Ok((probs, trace.expect("train mode records a trace")))
    }

    /// Inference forward; uses running statistics and records no trace.
    pub fn forward_eval(&self, input: &Tensor, valid: &[usize]) -> Result<Tensor> {
        let (probs, _) = self.run(input, valid, Mode::Eval, &mut None)?;
        Ok(probs)
    }

    /// Eval-mode forward of a single clip.
    pub fn infer_clip(&self, spec: &LogMelSpec) -> Result<FrameProbs> {
        let t = spec.num_frames();
        let d = spec.num_bins();
        let input = spec.values.clone().reshape(&[1, t, d])?;
        let probs = self.forward_eval(&input, &[t])?;
        Ok(FrameProbs {
            values: probs.reshape(&[t, self.cfg.num_outputs])?,
            frame_hop_s: spec.frame_hop_s,
            clip_id: spec.clip_id.clone(),
        })
    }

    #[allow(clippy::type_complexity)]
    fn run(
        &self,
        input: &Tensor,
        valid: &[usize],
        mode: Mode,
        stats_out: &mut Option<&mut Vec<((usize, usize), (Vec<f64>, Vec<f64>))>>,
    ) -> Result<(Tensor, Option<ForwardTrace>)> {
        let s = input.shape();
        if s.len() != 3 || s[2] != self.cfg.n_mels {
            return Err(Error::shape(format!(
                "expected [B, T, {}], got {:?}",
                self.cfg.n_mels, s
            )));
        }
        let (bsz, t0, d0) = (s[0], s[1], s[2]);
        if valid.len() != bsz || valid.iter().any(|&l| l == 0 || l > t0) {
            return Err(Error::invalid("valid lengths must be in 1..=T per item"));
        }
        let want_trace = mode == Mode::Train;

        let mut x = input.clone().reshape(&[bsz, 1, t0, d0])?;
        let mut valid_cur: Vec<usize> = valid.to_vec();
        ops::mask_time4(&mut x, &valid_cur);

        let mut block_traces = Vec::new();
        for (bi, block) in self.blocks.iter().enumerate() {
            let valid_in = valid_cur.clone();
            let mut conv_traces = Vec::new();
            for (ci, conv) in block.convs.iter().enumerate() {
                let y_conv = ops::conv3x3_forward(&x, &conv.kernel, &conv.bias)?;
                let bn = ops::bn_forward(
                    &y_conv,
                    &conv.bn_scale,
                    &conv.bn_shift,
                    &conv.bn_rmean,
                    &conv.bn_rvar,
                    mode,
                    &valid_cur,
                );
                if let (Some(stats), Some(batch)) = (stats_out.as_deref_mut(), bn.batch_stats) {
                    stats.push(((bi, ci), batch));
                }
                let mut y_act = ops::leaky_relu_forward(&bn.y, self.cfg.leaky_slope);
                ops::mask_time4(&mut y_act, &valid_cur);
                if want_trace {
                    conv_traces.push(ConvTrace {
                        x_in: x,
                        bn: bn.cache.expect("train mode caches bn"),
                        y_act: y_act.clone(),
                    });
                    x = y_act;
                } else {
                    x = y_act;
                }
            }
            let (st, sd) = block.pool;
            let pooled = ops::l4_pool_forward(&x, st, sd);
            valid_cur = valid_cur.iter().map(|&l| l.div_ceil(st)).collect();
            if want_trace {
                block_traces.push(BlockTrace {
                    convs: conv_traces,
                    pool_out: pooled.clone(),
                    valid_in,
                });
            }
            x = pooled;
        }

        // [B, C, T', 1] -> [B, T', C]
        let xs = x.shape().to_vec();
        let (c_last, t_low) = (xs[1], xs[2]);
        debug_assert_eq!(xs[3], 1);
        let mut gru_in = Tensor::zeros(&[bsz, t_low, c_last]);
        {
            let src = x.data();
            let dst = gru_in.data_mut();
            for b in 0..bsz {
                for c in 0..c_last {
                    for t in 0..t_low {
                        dst[(b * t_low + t) * c_last + c] = src[(b * c_last + c) * t_low + t];
                    }
                }
            }
        }
        let valid_low = valid_cur.clone();

        let (gru_out, gru_cache) = self.gru.forward(&gru_in, &valid_low);
        let logits = ops::linear_forward(&gru_out, &self.head_w, &self.head_b);
        let mut probs_low = ops::sigmoid_forward(&logits);
        ops::mask_time3(&mut probs_low, &valid_low);

        let factor = self.cfg.time_downsample();
        let mut probs = ops::upsample_time_forward(&probs_low, factor, t0);
        ops::mask_time3(&mut probs, valid);

        let trace = want_trace.then(|| ForwardTrace {
            blocks: block_traces,
            gru_in,
            gru_cache,
            gru_out,
            probs_low,
            valid0: valid.to_vec(),
            valid_low,
            t0,
        });
        Ok((probs, trace))
    }

    /// Exact reverse-mode gradients for every parameter given the gradient of
    /// the loss with respect to the output probabilities `[B, T, E]`.
    pub fn backward(&self, trace: &ForwardTrace, grad_probs: &Tensor) -> Gradients {
        let mut grads = Gradients::zeros_like(self);
        let factor = self.cfg.time_downsample();

        let mut g = grad_probs.clone();
        ops::mask_time3(&mut g, &trace.valid0);
        let t_low = trace.probs_low.shape()[1];
        let mut g_low = ops::upsample_time_backward(&g, factor, t_low);
        ops::mask_time3(&mut g_low, &trace.valid_low);

        let g_logits = ops::sigmoid_backward(&trace.probs_low, &g_low);
        let (g_gru_out, g_head_w, g_head_b) =
            ops::linear_backward(&trace.gru_out, &self.head_w, &g_logits);
        grads.set("head.weight", g_head_w);
        grads.set("head.bias", g_head_b);

        let (g_gru_in, gf, gb) =
            self.gru
                .backward(&trace.gru_in, &trace.gru_cache, &g_gru_out, &trace.valid_low);
        for (tag, dg) in [("fwd", gf), ("bwd", gb)] {
            grads.set(&format!("gru.{tag}.w_ih"), dg.w_ih);
            grads.set(&format!("gru.{tag}.w_hh"), dg.w_hh);
            grads.set(&format!("gru.{tag}.b_ih"), dg.b_ih);
            grads.set(&format!("gru.{tag}.b_hh"), dg.b_hh);
        }

        // [B, T', C] -> [B, C, T', 1]
        let (bsz, c_last) = (g_gru_in.shape()[0], g_gru_in.shape()[2]);
        let mut g_pool = Tensor::zeros(&[bsz, c_last, t_low, 1]);
        {
            let src = g_gru_in.data();
            let dst = g_pool.data_mut();
            for b in 0..bsz {
                for c in 0..c_last {
                    for t in 0..t_low {
                        dst[(b * c_last + c) * t_low + t] = src[(b * t_low + t) * c_last + c];
                    }
                }
            }
        }

        let mut g_cur = g_pool;
        for (bi, block) in self.blocks.iter().enumerate().rev() {
            let bt = &trace.blocks[bi];
            let (st, sd) = block.pool;
            let pool_in = &bt.convs.last().expect("block has convs").y_act;
            g_cur = ops::l4_pool_backward(pool_in, &bt.pool_out, &g_cur, st, sd);
            ops::mask_time4(&mut g_cur, &bt.valid_in);
            for (ci, conv) in block.convs.iter().enumerate().rev() {
                let ct = &bt.convs[ci];
                let g_bn_out = ops::leaky_relu_backward(&ct.y_act, &g_cur, self.cfg.leaky_slope);
                let (g_conv_out, g_scale, g_shift) =
                    ops::bn_backward(&ct.bn, &conv.bn_scale, &g_bn_out, &bt.valid_in);
                let (g_x, g_kernel, g_bias) =
                    ops::conv3x3_backward(&ct.x_in, &conv.kernel, &g_conv_out);
                grads.set(&format!("block{bi}.conv{ci}.kernel"), g_kernel);
                grads.set(&format!("block{bi}.conv{ci}.bias"), g_bias);
                grads.set(&format!("block{bi}.conv{ci}.bn_scale"), g_scale);
                grads.set(&format!("block{bi}.conv{ci}.bn_shift"), g_shift);
                g_cur = g_x;
                ops::mask_time4(&mut g_cur, &bt.valid_in);
            }
        }
        grads
    }
}

/// Spec-level convenience: eval-mode forward of a spectrogram through a
/// model, yielding per-frame probabilities at the input frame rate.
pub fn crnn_forward(model: &CrnnModel, spec: &LogMelSpec) -> Result<FrameProbs> {
    model.infer_clip(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_config(e: usize) -> CrnnConfig {
        CrnnConfig {
            block_channels: vec![2, 3, 3],
            convs_per_block: vec![1, 2, 2],
            pool_strides: vec![(2, 4), (2, 4), (1, 4)],
            gru_hidden: 2,
            num_outputs: e,
            leaky_slope: 0.1,
            n_mels: 64,
        }
    }

    fn tiny_model(e: usize, seed: u64) -> CrnnModel {
        let names = (0..e).map(|i| format!("ev{i}")).collect();
        CrnnModel::init(tiny_config(e), ModelMeta::new(names, DspConfig::default()), seed).unwrap()
    }

    #[test]
    fn default_student_parameter_count_matches_budget() {
        let cfg = CrnnConfig::with_outputs(2);
        let meta = ModelMeta::new(vec!["speech".into(), "non_speech".into()], DspConfig::default());
        let model = CrnnModel::init(cfg, meta, 0).unwrap();
        let n = model.count_params();
        assert!(
            (665_000..=693_000).contains(&n),
            "student parameter count {n} outside budget"
        );
    }

    #[test]
    fn single_conv_param_count_arithmetic() {
        let cfg = CrnnConfig {
            block_channels: vec![32],
            convs_per_block: vec![1],
            pool_strides: vec![(1, 64)],
            gru_hidden: 4,
            num_outputs: 2,
            leaky_slope: 0.1,
            n_mels: 64,
        };
        let meta = ModelMeta::new(vec!["a".into(), "b".into()], DspConfig::default());
        let model = CrnnModel::init(cfg, meta, 0).unwrap();
        let conv = &model.blocks[0].convs[0];
        assert_eq!(conv.kernel.numel() + conv.bias.numel(), 288 + 32);
    }

    #[test]
    fn forward_shape_and_range_contract() {
        let mut model = tiny_model(3, 7);
        for t in [1usize, 2, 3, 5, 8, 17, 100] {
            let input = Tensor::from_fn(&[1, t, 64], |i| ((i % 29) as f64 - 14.0) / 10.0);
            let probs = model.forward_eval(&input, &[t]).unwrap();
            assert_eq!(probs.shape(), &[1, t, 3], "T={t}");
            assert!(probs.data().iter().all(|&p| (0.0..=1.0).contains(&p)));
            let (probs_tr, _) = model.forward_train(&input, &[t], false).unwrap();
            assert_eq!(probs_tr.shape(), &[1, t, 3]);
        }
    }

    #[test]
    fn identical_batch_items_give_identical_rows() {
        let model = tiny_model(2, 3);
        let one = Tensor::from_fn(&[1, 20, 64], |i| ((i * 7 % 13) as f64) / 13.0);
        let mut two = Tensor::zeros(&[2, 20, 64]);
        two.data_mut()[..20 * 64].copy_from_slice(one.data());
        two.data_mut()[20 * 64..].copy_from_slice(one.data());
        let probs = model.forward_eval(&two, &[20, 20]).unwrap();
        let (a, b) = probs.data().split_at(20 * 2);
        assert_eq!(a, b);
    }

    #[test]
    fn eval_forward_is_deterministic() {
        let model = tiny_model(2, 9);
        let input = Tensor::from_fn(&[1, 33, 64], |i| (i as f64 * 0.01).sin());
        let a = model.forward_eval(&input, &[33]).unwrap();
        let b = model.forward_eval(&input, &[33]).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn concatenated_clip_matches_outside_seam_window() {
        let model = tiny_model(2, 21);
        let t = 48usize;
        let single = Tensor::from_fn(&[1, t, 64], |i| ((i * 11 % 97) as f64) / 97.0 - 0.5);
        let mut double = Tensor::zeros(&[1, 2 * t, 64]);
        double.data_mut()[..t * 64].copy_from_slice(single.data());
        double.data_mut()[t * 64..].copy_from_slice(single.data());
        let p1 = model.forward_eval(&single, &[t]).unwrap();
        let p2 = model.forward_eval(&double, &[2 * t]).unwrap();
        // The GRU carries context across the seam; require agreement away
        // from it (two pooled frames = 8 output frames).
        let guard = 8usize;
        for f in 0..t - guard {
            for e in 0..2 {
                let a = p1.data()[f * 2 + e];
                let b = p2.data()[f * 2 + e];
                assert!(
                    (a - b).abs() < 1e-3,
                    "frame {f} event {e}: {a} vs {b}"
                );
            }
        }
    }

    #[test]
    fn padding_does_not_change_valid_outputs() {
        let mut model = tiny_model(2, 5);
        let t = 23usize;
        let item = Tensor::from_fn(&[1, t, 64], |i| ((i % 31) as f64 - 15.0) / 16.0);
        let mut padded = Tensor::zeros(&[1, t + 50, 64]);
        padded.data_mut()[..t * 64].copy_from_slice(item.data());
        let (p1, _) = model.forward_train(&item, &[t], false).unwrap();
        let (p2, _) = model.forward_train(&padded, &[t], false).unwrap();
        for i in 0..t * 2 {
            assert_eq!(p1.data()[i], p2.data()[i], "index {i}");
        }
        assert!(p2.data()[t * 2..].iter().all(|&v| v == 0.0));
    }
}
