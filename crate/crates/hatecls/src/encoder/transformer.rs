//! Post-layer-norm transformer encoder over fixed-length token sequences,
//! exposing every block's output states, with analytic backward passes for
//! fine-tuning. One struct serves both the desk-scale randomly initialized
//! backend and archives of pretrained full-scale weights.

use std::path::Path;

use ndarray::{s, Array1, Array2, Array3, ArrayView1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::wordpiece::{TokenSequence, Vocabulary};
use crate::archive::read_archive;
use crate::error::{PipelineError, Result};
use crate::tensor::{fill_truncated_normal, gelu, gelu_grad, softmax_in_place, ParamStore};

const LN_EPS: f64 = 1e-12;
const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub num_layers: usize,
    pub hidden_size: usize,
    pub num_heads: usize,
    pub max_len: usize,
    pub vocab_size: usize,
    pub seed: u64,
}

impl EncoderConfig {
    /// Desk-scale defaults: 2 layers, 16 hidden dims, 2 heads.
    pub fn mini(vocab_size: usize, seed: u64) -> Self {
        EncoderConfig {
            num_layers: 2,
            hidden_size: 16,
            num_heads: 2,
            max_len: 64,
            vocab_size,
            seed,
        }
    }

    /// Full-scale architecture: 12 layers, 768 hidden dims, 12 heads.
    pub fn base(vocab_size: usize, max_len: usize) -> Self {
        EncoderConfig {
            num_layers: 12,
            hidden_size: 768,
            num_heads: 12,
            max_len,
            vocab_size,
            seed: 0,
        }
    }

    pub fn ff_size(&self) -> usize {
        4 * self.hidden_size
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_size / self.num_heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0
            || self.hidden_size == 0
            || self.num_heads == 0
            || self.max_len < 2
            || self.vocab_size < 4
        {
            return Err(PipelineError::InvalidConfig(format!(
                "encoder config out of range: {self:?}"
            )));
        }
        if self.hidden_size % self.num_heads != 0 {
            return Err(PipelineError::InvalidConfig(format!(
                "hidden size {} not divisible by {} heads",
                self.hidden_size, self.num_heads
            )));
        }
        Ok(())
    }
}

/// Per-block output states, shape (num_layers, max_len, hidden). The block
/// outputs are exposed in order; the embedding layer is not included.
/// Values exist at padding positions too — consumers must honor the mask.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderStates {
    pub states: Array3<f64>,
}

impl EncoderStates {
    pub fn num_layers(&self) -> usize {
        self.states.shape()[0]
    }

    pub fn seq_len(&self) -> usize {
        self.states.shape()[1]
    }

    pub fn hidden(&self) -> usize {
        self.states.shape()[2]
    }

    /// Final-layer state at position 0.
    pub fn cls(&self) -> ArrayView1<'_, f64> {
        self.states.slice(s![self.num_layers() - 1, 0, ..])
    }

    pub fn layer(&self, l: usize) -> ndarray::ArrayView2<'_, f64> {
        self.states.index_axis(Axis(0), l)
    }

    /// Rounds every value through the given precision (used when inference
    /// runs at 32-bit; training always stays 64-bit).
    pub fn quantize(&mut self, precision: Precision) {
        if precision == Precision::F32 {
            self.states.mapv_inplace(|v| v as f32 as f64);
        }
    }
}

/// Numeric precision for inference paths, selected by `PIPELINE_PRECISION`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn from_env() -> Result<Self> {
        match std::env::var("PIPELINE_PRECISION") {
            Err(_) => Ok(Precision::F64),
            Ok(v) => match v.as_str() {
                "32" => Ok(Precision::F32),
                "64" => Ok(Precision::F64),
                other => Err(PipelineError::InvalidConfig(format!(
                    "PIPELINE_PRECISION must be 32 or 64, got {other:?}"
                ))),
            },
        }
    }
}

struct LnCache {
    xhat: Array2<f64>,
    inv_std: Vec<f64>,
}

struct BlockCache {
    x_in: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    /// Per-head attention rows over the content span (c × c each).
    probs: Vec<Array2<f64>>,
    ctx: Array2<f64>,
    ln1: LnCache,
    y: Array2<f64>,
    h_pre: Array2<f64>,
    h_act: Array2<f64>,
    ln2: LnCache,
}

/// Forward activations kept for [`Transformer::backward`].
pub struct EncoderCache {
    emb_ln: LnCache,
    blocks: Vec<BlockCache>,
    content: usize,
}

fn layer_norm(x: &Array2<f64>, gamma: ArrayView1<f64>, beta: ArrayView1<f64>) -> (Array2<f64>, LnCache) {
    let (rows, cols) = x.dim();
    let mut xhat = Array2::zeros((rows, cols));
    let mut inv_std = Vec::with_capacity(rows);
    let mut out = Array2::zeros((rows, cols));
    for r in 0..rows {
        let row = x.row(r);
        let mean = row.sum() / cols as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        inv_std.push(inv);
        for c in 0..cols {
            let xh = (row[c] - mean) * inv;
            xhat[[r, c]] = xh;
            out[[r, c]] = xh * gamma[c] + beta[c];
        }
    }
    (out, LnCache { xhat, inv_std })
}

/// dx for y = gamma·x̂ + beta; also accumulates dgamma/dbeta.
fn layer_norm_backward(
    dout: &Array2<f64>,
    cache: &LnCache,
    gamma: ArrayView1<f64>,
    dgamma: &mut Array1<f64>,
    dbeta: &mut Array1<f64>,
) -> Array2<f64> {
    let (rows, cols) = dout.dim();
    let mut dx = Array2::zeros((rows, cols));
    for r in 0..rows {
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for c in 0..cols {
            let dxhat = dout[[r, c]] * gamma[c];
            m1 += dxhat;
            m2 += dxhat * cache.xhat[[r, c]];
            dgamma[c] += dout[[r, c]] * cache.xhat[[r, c]];
            dbeta[c] += dout[[r, c]];
        }
        m1 /= cols as f64;
        m2 /= cols as f64;
        for c in 0..cols {
            let dxhat = dout[[r, c]] * gamma[c];
            dx[[r, c]] = cache.inv_std[r] * (dxhat - m1 - cache.xhat[[r, c]] * m2);
        }
    }
    dx
}

#[derive(Debug)]
pub struct Transformer {
    pub cfg: EncoderConfig,
    pub params: ParamStore,
}

/// Tensor registration order; layout is identical for init, archives, and
/// gradient buffers.
fn expected_tensors(cfg: &EncoderConfig) -> Vec<(String, Vec<usize>)> {
    let h = cfg.hidden_size;
    let f = cfg.ff_size();
    let mut out = vec![
        ("embedding.word".to_string(), vec![cfg.vocab_size, h]),
        ("embedding.position".to_string(), vec![cfg.max_len, h]),
        ("embedding.ln.gamma".to_string(), vec![h]),
        ("embedding.ln.beta".to_string(), vec![h]),
    ];
    for i in 0..cfg.num_layers {
        for (suffix, shape) in [
            ("attn.wq", vec![h, h]),
            ("attn.bq", vec![h]),
            ("attn.wk", vec![h, h]),
            ("attn.bk", vec![h]),
            ("attn.wv", vec![h, h]),
            ("attn.bv", vec![h]),
            ("attn.wo", vec![h, h]),
            ("attn.bo", vec![h]),
            ("attn_ln.gamma", vec![h]),
            ("attn_ln.beta", vec![h]),
            ("ffn.w1", vec![h, f]),
            ("ffn.b1", vec![f]),
            ("ffn.w2", vec![f, h]),
            ("ffn.b2", vec![h]),
            ("ffn_ln.gamma", vec![h]),
            ("ffn_ln.beta", vec![h]),
        ] {
            out.push((format!("block{i}.{suffix}"), shape));
        }
    }
    out
}

/// Closed-form parameter count for the architecture.
pub fn expected_param_count(cfg: &EncoderConfig) -> usize {
    expected_tensors(cfg)
        .iter()
        .map(|(_, shape)| shape.iter().product::<usize>())
        .sum()
}

impl Transformer {
    /// Deterministic random initialization from `cfg.seed`: truncated-normal
    /// (std 0.02) weights and embeddings, zero biases, identity layer norms.
    pub fn build_mini(cfg: EncoderConfig) -> Result<Self> {
        cfg.validate()?;
        let mut params = ParamStore::new();
        for (name, shape) in expected_tensors(&cfg) {
            params.add(&name, &shape);
        }
        let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
        for spec in params.specs().to_vec() {
            let last = spec.name.rsplit('.').next().unwrap_or("");
            let range = params.range(&spec.name);
            let slice = &mut params.data_mut()[range];
            if last == "gamma" {
                slice.fill(1.0);
            } else if last == "beta" || last.starts_with('b') {
                slice.fill(0.0);
            } else {
                fill_truncated_normal(slice, INIT_STD, &mut rng);
            }
        }
        Ok(Transformer { cfg, params })
    }

    /// Wraps an existing parameter store, validating the exact tensor set.
    pub fn from_parts(cfg: EncoderConfig, params: ParamStore, origin: &str) -> Result<Self> {
        cfg.validate()?;
        let expected = expected_tensors(&cfg);
        for (name, shape) in &expected {
            let spec = params.spec(name).ok_or_else(|| PipelineError::MissingTensor {
                name: name.clone(),
                path: origin.to_string(),
            })?;
            if &spec.shape != shape {
                return Err(PipelineError::ShapeMismatch {
                    what: name.clone(),
                    expected: format!("{shape:?}"),
                    actual: format!("{:?}", spec.shape),
                });
            }
        }
        if params.specs().len() != expected.len() {
            return Err(PipelineError::InvalidConfig(format!(
                "{origin}: archive has {} tensors, architecture needs {}",
                params.specs().len(),
                expected.len()
            )));
        }
        Ok(Transformer { cfg, params })
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn param_checksum(&self) -> String {
        crate::archive::checksum_f64s(self.params.data())
    }

    fn name(&self, block: usize, suffix: &str) -> String {
        format!("block{block}.{suffix}")
    }

    fn check_input(&self, seq: &TokenSequence) -> Result<()> {
        if seq.ids.len() != self.cfg.max_len {
            return Err(PipelineError::ShapeMismatch {
                what: "token sequence".to_string(),
                expected: format!("{} ids", self.cfg.max_len),
                actual: format!("{} ids", seq.ids.len()),
            });
        }
        for &id in &seq.ids {
            if id >= self.cfg.vocab_size {
                return Err(PipelineError::IdOutOfRange {
                    id,
                    vocab_size: self.cfg.vocab_size,
                });
            }
        }
        debug_assert!(seq.content_length >= 2 && seq.content_length <= self.cfg.max_len);
        Ok(())
    }

    pub fn forward(&self, seq: &TokenSequence) -> Result<EncoderStates> {
        self.forward_cached(seq).map(|(states, _)| states)
    }

    pub fn forward_cached(&self, seq: &TokenSequence) -> Result<(EncoderStates, EncoderCache)> {
        self.check_input(seq)?;
        let p = self.cfg.max_len;
        let h = self.cfg.hidden_size;
        let c = seq.content_length;

        let word = self.params.view2("embedding.word");
        let pos = self.params.view2("embedding.position");
        let mut x = Array2::zeros((p, h));
        for (r, &id) in seq.ids.iter().enumerate() {
            for col in 0..h {
                x[[r, col]] = word[[id, col]] + pos[[r, col]];
            }
        }
        let (mut x, emb_ln) = layer_norm(
            &x,
            self.params.view1("embedding.ln.gamma"),
            self.params.view1("embedding.ln.beta"),
        );

        let mut states = Array3::zeros((self.cfg.num_layers, p, h));
        let mut blocks = Vec::with_capacity(self.cfg.num_layers);
        for i in 0..self.cfg.num_layers {
            let (out, cache) = self.block_forward(i, &x, c);
            states.index_axis_mut(Axis(0), i).assign(&out);
            blocks.push(cache);
            x = out;
        }
        Ok((
            EncoderStates { states },
            EncoderCache {
                emb_ln,
                blocks,
                content: c,
            },
        ))
    }

    fn block_forward(&self, i: usize, x: &Array2<f64>, c: usize) -> (Array2<f64>, BlockCache) {
        let p = &self.params;
        let nh = self.cfg.num_heads;
        let d = self.cfg.head_dim();
        let scale = 1.0 / (d as f64).sqrt();

        let mut q = x.dot(&p.view2(&self.name(i, "attn.wq")));
        q += &p.view1(&self.name(i, "attn.bq"));
        let mut k = x.dot(&p.view2(&self.name(i, "attn.wk")));
        k += &p.view1(&self.name(i, "attn.bk"));
        let mut v = x.dot(&p.view2(&self.name(i, "attn.wv")));
        v += &p.view1(&self.name(i, "attn.bv"));

        // Padding positions are excluded as keys and produce zero context as
        // queries, so content states never depend on [PAD] ids.
        let mut ctx = Array2::zeros(x.raw_dim());
        let mut probs = Vec::with_capacity(nh);
        for head in 0..nh {
            let cols = head * d..(head + 1) * d;
            let qh = q.slice(s![..c, cols.clone()]);
            let kh = k.slice(s![..c, cols.clone()]);
            let vh = v.slice(s![..c, cols.clone()]);
            let mut scores = qh.dot(&kh.t());
            scores *= scale;
            for r in 0..c {
                softmax_in_place(scores.row_mut(r).as_slice_mut().expect("contiguous row"));
            }
            let ctx_h = scores.dot(&vh);
            ctx.slice_mut(s![..c, cols]).assign(&ctx_h);
            probs.push(scores);
        }

        let mut attn_proj = ctx.dot(&p.view2(&self.name(i, "attn.wo")));
        attn_proj += &p.view1(&self.name(i, "attn.bo"));
        let res1 = x + &attn_proj;
        let (y, ln1) = layer_norm(
            &res1,
            p.view1(&self.name(i, "attn_ln.gamma")),
            p.view1(&self.name(i, "attn_ln.beta")),
        );

        let mut h_pre = y.dot(&p.view2(&self.name(i, "ffn.w1")));
        h_pre += &p.view1(&self.name(i, "ffn.b1"));
        let h_act = h_pre.mapv(gelu);
        let mut ffn_out = h_act.dot(&p.view2(&self.name(i, "ffn.w2")));
        ffn_out += &p.view1(&self.name(i, "ffn.b2"));
        let res2 = &y + &ffn_out;
        let (out, ln2) = layer_norm(
            &res2,
            p.view1(&self.name(i, "ffn_ln.gamma")),
            p.view1(&self.name(i, "ffn_ln.beta")),
        );

        (
            out,
            BlockCache {
                x_in: x.clone(),
                q,
                k,
                v,
                probs,
                ctx,
                ln1,
                y,
                h_pre,
                h_act,
                ln2,
            },
        )
    }

    /// Gradients of a scalar loss w.r.t. every parameter, given the loss
    /// gradient w.r.t. every layer's output states. Returns a buffer in
    /// [`ParamStore`] layout.
    pub fn backward(
        &self,
        seq: &TokenSequence,
        cache: &EncoderCache,
        dstates: &Array3<f64>,
    ) -> Vec<f64> {
        let mut g = self.params.zeros_like();
        self.backward_into(seq, cache, dstates, &mut g);
        g
    }

    /// Like [`Transformer::backward`] but accumulates (+=) into `g`, so one
    /// buffer can gather a whole batch.
    pub fn backward_into(
        &self,
        seq: &TokenSequence,
        cache: &EncoderCache,
        dstates: &Array3<f64>,
        g: &mut [f64],
    ) {
        let p = self.cfg.max_len;
        let h = self.cfg.hidden_size;
        debug_assert_eq!(dstates.shape(), &[self.cfg.num_layers, p, h]);
        debug_assert_eq!(g.len(), self.params.len());

        let mut dx = Array2::zeros((p, h));
        for i in (0..self.cfg.num_layers).rev() {
            dx += &dstates.index_axis(Axis(0), i);
            dx = self.block_backward(i, &cache.blocks[i], &dx, cache.content, g);
        }

        // Embedding layer norm, then scatter into word/position tables.
        let mut dgamma = Array1::zeros(h);
        let mut dbeta = Array1::zeros(h);
        let d_emb = layer_norm_backward(
            &dx,
            &cache.emb_ln,
            self.params.view1("embedding.ln.gamma"),
            &mut dgamma,
            &mut dbeta,
        );
        self.acc1(g, "embedding.ln.gamma", &dgamma);
        self.acc1(g, "embedding.ln.beta", &dbeta);
        {
            let word_range = self.params.range("embedding.word");
            let word_g = &mut g[word_range];
            for (r, &id) in seq.ids.iter().enumerate() {
                for col in 0..h {
                    word_g[id * h + col] += d_emb[[r, col]];
                }
            }
        }
        {
            let pos_range = self.params.range("embedding.position");
            let pos_g = &mut g[pos_range];
            for r in 0..p {
                for col in 0..h {
                    pos_g[r * h + col] += d_emb[[r, col]];
                }
            }
        }
    }

    fn block_backward(
        &self,
        i: usize,
        cache: &BlockCache,
        dout: &Array2<f64>,
        c: usize,
        g: &mut [f64],
    ) -> Array2<f64> {
        let p = &self.params;
        let h = self.cfg.hidden_size;
        let nh = self.cfg.num_heads;
        let d = self.cfg.head_dim();
        let scale = 1.0 / (d as f64).sqrt();

        // ffn layer norm
        let mut dgamma = Array1::zeros(h);
        let mut dbeta = Array1::zeros(h);
        let d_res2 = layer_norm_backward(
            dout,
            &cache.ln2,
            p.view1(&self.name(i, "ffn_ln.gamma")),
            &mut dgamma,
            &mut dbeta,
        );
        self.acc1(g, &self.name(i, "ffn_ln.gamma"), &dgamma);
        self.acc1(g, &self.name(i, "ffn_ln.beta"), &dbeta);

        // feed-forward
        self.acc2(g, &self.name(i, "ffn.w2"), &cache.h_act.t().dot(&d_res2));
        self.acc1(g, &self.name(i, "ffn.b2"), &d_res2.sum_axis(Axis(0)));
        let d_hact = d_res2.dot(&p.view2(&self.name(i, "ffn.w2")).t());
        let d_hpre = &d_hact * &cache.h_pre.mapv(gelu_grad);
        self.acc2(g, &self.name(i, "ffn.w1"), &cache.y.t().dot(&d_hpre));
        self.acc1(g, &self.name(i, "ffn.b1"), &d_hpre.sum_axis(Axis(0)));
        let dy = &d_res2 + &d_hpre.dot(&p.view2(&self.name(i, "ffn.w1")).t());

        // attention layer norm
        let mut dgamma = Array1::zeros(h);
        let mut dbeta = Array1::zeros(h);
        let d_res1 = layer_norm_backward(
            &dy,
            &cache.ln1,
            p.view1(&self.name(i, "attn_ln.gamma")),
            &mut dgamma,
            &mut dbeta,
        );
        self.acc1(g, &self.name(i, "attn_ln.gamma"), &dgamma);
        self.acc1(g, &self.name(i, "attn_ln.beta"), &dbeta);

        // output projection
        self.acc2(g, &self.name(i, "attn.wo"), &cache.ctx.t().dot(&d_res1));
        self.acc1(g, &self.name(i, "attn.bo"), &d_res1.sum_axis(Axis(0)));
        let d_ctx = d_res1.dot(&p.view2(&self.name(i, "attn.wo")).t());

        // per-head attention
        let dim = cache.x_in.raw_dim();
        let mut dq = Array2::zeros(dim.clone());
        let mut dk = Array2::zeros(dim.clone());
        let mut dv = Array2::zeros(dim);
        for head in 0..nh {
            let cols = head * d..(head + 1) * d;
            let probs = &cache.probs[head];
            let d_ctx_h = d_ctx.slice(s![..c, cols.clone()]);
            let vh = cache.v.slice(s![..c, cols.clone()]);
            let kh = cache.k.slice(s![..c, cols.clone()]);
            let qh = cache.q.slice(s![..c, cols.clone()]);

            let mut dv_acc = dv.slice_mut(s![..c, cols.clone()]);
            dv_acc += &probs.t().dot(&d_ctx_h);

            let dprobs = d_ctx_h.dot(&vh.t());
            let mut dscores = Array2::zeros((c, c));
            for r in 0..c {
                let dot: f64 = (0..c).map(|j| probs[[r, j]] * dprobs[[r, j]]).sum();
                for j in 0..c {
                    dscores[[r, j]] = probs[[r, j]] * (dprobs[[r, j]] - dot) * scale;
                }
            }
            let mut dq_acc = dq.slice_mut(s![..c, cols.clone()]);
            dq_acc += &dscores.dot(&kh);
            let mut dk_acc = dk.slice_mut(s![..c, cols]);
            dk_acc += &dscores.t().dot(&qh);
        }

        // input projections
        self.acc2(g, &self.name(i, "attn.wq"), &cache.x_in.t().dot(&dq));
        self.acc1(g, &self.name(i, "attn.bq"), &dq.sum_axis(Axis(0)));
        self.acc2(g, &self.name(i, "attn.wk"), &cache.x_in.t().dot(&dk));
        self.acc1(g, &self.name(i, "attn.bk"), &dk.sum_axis(Axis(0)));
        self.acc2(g, &self.name(i, "attn.wv"), &cache.x_in.t().dot(&dv));
        self.acc1(g, &self.name(i, "attn.bv"), &dv.sum_axis(Axis(0)));

        let mut dx = dq.dot(&p.view2(&self.name(i, "attn.wq")).t());
        dx += &dk.dot(&p.view2(&self.name(i, "attn.wk")).t());
        dx += &dv.dot(&p.view2(&self.name(i, "attn.wv")).t());
        dx += &d_res1;
        dx
    }

    fn acc1(&self, g: &mut [f64], name: &str, delta: &Array1<f64>) {
        let range = self.params.range(name);
        let slice = &mut g[range];
        debug_assert_eq!(slice.len(), delta.len());
        for (s, d) in slice.iter_mut().zip(delta.iter()) {
            *s += d;
        }
    }

    fn acc2(&self, g: &mut [f64], name: &str, delta: &Array2<f64>) {
        let range = self.params.range(name);
        let slice = &mut g[range];
        debug_assert_eq!(slice.len(), delta.len());
        for (s, d) in slice.iter_mut().zip(delta.iter()) {
            *s += d;
        }
    }
}

/// Runs forward over a batch; one [`EncoderStates`] per input.
pub fn forward_batch(backend: &Transformer, batch: &[TokenSequence]) -> Result<Vec<EncoderStates>> {
    batch.iter().map(|seq| backend.forward(seq)).collect()
}

/// Loads a full-scale weight archive plus its vocabulary. The archive must
/// declare the base architecture (12 layers, 768 hidden, 12 heads).
pub fn load_pretrained(weights_dir: &Path, vocab_path: &Path) -> Result<(Transformer, Vocabulary)> {
    let (params, meta) = read_archive(weights_dir)?;
    let cfg_value = meta.get("encoder_config").cloned().ok_or_else(|| {
        PipelineError::InvalidConfig(format!(
            "{}: archive metadata lacks encoder_config",
            weights_dir.display()
        ))
    })?;
    let cfg: EncoderConfig = serde_json::from_value(cfg_value).map_err(|e| {
        PipelineError::InvalidConfig(format!("{}: bad encoder_config: {e}", weights_dir.display()))
    })?;
    if (cfg.num_layers, cfg.hidden_size, cfg.num_heads) != (12, 768, 12) {
        return Err(PipelineError::ShapeMismatch {
            what: "pretrained architecture".to_string(),
            expected: "12 layers, 768 hidden, 12 heads".to_string(),
            actual: format!(
                "{} layers, {} hidden, {} heads",
                cfg.num_layers, cfg.hidden_size, cfg.num_heads
            ),
        });
    }
    let t = Transformer::from_parts(cfg, params, &weights_dir.display().to_string())?;
    let vocab = Vocabulary::from_file(vocab_path)?;
    if vocab.len() > t.cfg.vocab_size {
        return Err(PipelineError::ShapeMismatch {
            what: "vocabulary".to_string(),
            expected: format!("at most {} tokens", t.cfg.vocab_size),
            actual: format!("{} tokens", vocab.len()),
        });
    }
    Ok((t, vocab))
}
