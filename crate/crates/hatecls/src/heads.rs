//! Classification heads over encoder states: a bare linear layer on the
//! first-position vector, a two-hidden-layer MLP, a bidirectional LSTM over
//! the final layer, and a per-layer convolutional head. Each produces class
//! probabilities and analytic gradients for both its parameters and the
//! encoder states feeding it.

use ndarray::{Array1, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderStates, TokenSequence};
use crate::error::{PipelineError, Result};
use crate::tensor::{fill_orthogonal, fill_truncated_normal, softmax_in_place, ParamStore};

const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    Linear,
    Mlp,
    Bilstm,
    Cnn,
}

impl HeadKind {
    pub fn name(&self) -> &'static str {
        match self {
            HeadKind::Linear => "linear",
            HeadKind::Mlp => "mlp",
            HeadKind::Bilstm => "bilstm",
            HeadKind::Cnn => "cnn",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "linear" => Ok(HeadKind::Linear),
            "mlp" => Ok(HeadKind::Mlp),
            "bilstm" => Ok(HeadKind::Bilstm),
            "cnn" => Ok(HeadKind::Cnn),
            other => Err(PipelineError::InvalidConfig(format!(
                "unknown head kind {other:?} (expected linear, mlp, bilstm, or cnn)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub kind: HeadKind,
    pub num_classes: usize,
    /// Encoder hidden size.
    pub hidden: usize,
    #[serde(default = "default_mlp_hidden")]
    pub mlp_hidden: usize,
    #[serde(default = "default_leaky_slope")]
    pub leaky_slope: f64,
    /// Per-direction LSTM state size; 0 means "same as hidden".
    #[serde(default)]
    pub lstm_hidden: usize,
    #[serde(default = "default_cnn_filters")]
    pub cnn_filters: usize,
    #[serde(default = "default_cnn_window")]
    pub cnn_window: usize,
    /// Rectify convolution outputs before pooling.
    #[serde(default = "default_true")]
    pub cnn_relu: bool,
    #[serde(default = "default_dropout")]
    pub dropout_p: f64,
    pub seed: u64,
}

fn default_mlp_hidden() -> usize {
    768
}
fn default_leaky_slope() -> f64 {
    0.01
}
fn default_cnn_filters() -> usize {
    32
}
fn default_cnn_window() -> usize {
    3
}
fn default_true() -> bool {
    true
}
fn default_dropout() -> f64 {
    0.1
}

impl HeadConfig {
    pub fn new(kind: HeadKind, num_classes: usize, hidden: usize, seed: u64) -> Self {
        HeadConfig {
            kind,
            num_classes,
            hidden,
            mlp_hidden: default_mlp_hidden(),
            leaky_slope: default_leaky_slope(),
            lstm_hidden: 0,
            cnn_filters: default_cnn_filters(),
            cnn_window: default_cnn_window(),
            cnn_relu: true,
            dropout_p: default_dropout(),
            seed,
        }
    }

    pub fn lstm_units(&self) -> usize {
        if self.lstm_hidden == 0 {
            self.hidden
        } else {
            self.lstm_hidden
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(PipelineError::InvalidConfig(format!(
                "need at least 2 classes, got {}",
                self.num_classes
            )));
        }
        if self.hidden == 0
            || self.mlp_hidden == 0
            || self.cnn_filters == 0
            || self.cnn_window == 0
        {
            return Err(PipelineError::InvalidConfig(
                "head sizes must be positive".to_string(),
            ));
        }
        if self.cnn_window > 64 {
            return Err(PipelineError::InvalidConfig(format!(
                "convolution window {} exceeds sequence length 64",
                self.cnn_window
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(PipelineError::InvalidConfig(format!(
                "dropout probability {} outside [0, 1)",
                self.dropout_p
            )));
        }
        Ok(())
    }
}

/// Probability over classes; softmax output, sums to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassProbs {
    pub probs: Vec<f64>,
}

/// Highest-probability class; ties break toward the lowest index.
pub fn predict(probs: &ClassProbs) -> usize {
    let mut best = 0;
    for (i, &p) in probs.probs.iter().enumerate() {
        if p > probs.probs[best] {
            best = i;
        }
    }
    best
}

/// Inverted-scaling dropout multipliers, sampled once per example so the same
/// plan can be replayed (training forward, its backward, and numeric checks
/// all see identical masks). Each site is either 0 or 1/(1−p).
#[derive(Debug, Clone)]
pub struct Dropout {
    pub masks: Vec<Vec<f64>>,
}

impl Dropout {
    pub fn sample(p: f64, sites: &[usize], rng: &mut ChaCha20Rng) -> Self {
        let keep = 1.0 / (1.0 - p);
        let masks = sites
            .iter()
            .map(|&len| {
                (0..len)
                    .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
                    .collect()
            })
            .collect();
        Dropout { masks }
    }
}

fn ones(len: usize) -> Vec<f64> {
    vec![1.0; len]
}

#[derive(Debug)]
enum HeadCacheInner {
    Linear {
        x: Array1<f64>,
        m0: Vec<f64>,
    },
    Mlp {
        x0: Array1<f64>,
        a1: Array1<f64>,
        h1d: Array1<f64>,
        a2: Array1<f64>,
        h2d: Array1<f64>,
        m0: Vec<f64>,
        m1: Vec<f64>,
        m2: Vec<f64>,
    },
    Bilstm {
        xs: Array2<f64>,
        masks: Vec<Vec<f64>>,
        fw: LstmTrace,
        bw: LstmTrace,
        concat: Array1<f64>,
    },
    Cnn {
        /// Pre-activation convolution outputs, one (positions × F) per layer.
        conv: Vec<Array2<f64>>,
        /// Winning position per (layer, filter).
        argmax: Vec<Vec<usize>>,
        pooled: Array1<f64>,
        z: Array1<f64>,
        m0: Vec<f64>,
    },
}

/// Forward activations kept for [`Head::backward`].
#[derive(Debug)]
pub struct HeadCache {
    probs: Vec<f64>,
    inner: HeadCacheInner,
}

impl HeadCache {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// Per-step LSTM activations for one direction.
#[derive(Debug)]
struct LstmTrace {
    i: Array2<f64>,
    f: Array2<f64>,
    g: Array2<f64>,
    o: Array2<f64>,
    c: Array2<f64>,
    tanh_c: Array2<f64>,
    h: Array2<f64>,
}

#[derive(Debug)]
pub struct Head {
    pub cfg: HeadConfig,
    /// Number of encoder layers feeding this head.
    pub num_layers: usize,
    pub params: ParamStore,
}

fn expected_head_tensors(cfg: &HeadConfig, num_layers: usize) -> Vec<(String, Vec<usize>)> {
    let h = cfg.hidden;
    let c = cfg.num_classes;
    let m = cfg.mlp_hidden;
    let u = cfg.lstm_units();
    match cfg.kind {
        HeadKind::Linear => vec![
            ("linear.w".into(), vec![h, c]),
            ("linear.b".into(), vec![c]),
        ],
        HeadKind::Mlp => vec![
            ("mlp.w1".into(), vec![h, m]),
            ("mlp.b1".into(), vec![m]),
            ("mlp.w2".into(), vec![m, m]),
            ("mlp.b2".into(), vec![m]),
            ("mlp.w3".into(), vec![m, c]),
            ("mlp.b3".into(), vec![c]),
        ],
        HeadKind::Bilstm => vec![
            ("lstm.fw.wx".into(), vec![h, 4 * u]),
            ("lstm.fw.wh".into(), vec![u, 4 * u]),
            ("lstm.fw.b".into(), vec![4 * u]),
            ("lstm.bw.wx".into(), vec![h, 4 * u]),
            ("lstm.bw.wh".into(), vec![u, 4 * u]),
            ("lstm.bw.b".into(), vec![4 * u]),
            ("lstm.w".into(), vec![2 * u, c]),
            ("lstm.b".into(), vec![c]),
        ],
        HeadKind::Cnn => vec![
            // each row is one (window × H) kernel, flattened window-major
            ("cnn.kernel".into(), vec![cfg.cnn_filters, cfg.cnn_window * h]),
            ("cnn.kb".into(), vec![cfg.cnn_filters]),
            ("cnn.w".into(), vec![num_layers * cfg.cnn_filters, c]),
            ("cnn.b".into(), vec![c]),
        ],
    }
}

pub fn expected_head_param_count(cfg: &HeadConfig, num_layers: usize) -> usize {
    expected_head_tensors(cfg, num_layers)
        .iter()
        .map(|(_, s)| s.iter().product::<usize>())
        .sum()
}

impl Head {
    /// Deterministic init from `cfg.seed`: truncated-normal weights and
    /// kernels, zero biases, per-gate orthogonal recurrent matrices.
    pub fn new(cfg: &HeadConfig, num_layers: usize) -> Result<Head> {
        cfg.validate()?;
        if num_layers == 0 {
            return Err(PipelineError::InvalidConfig(
                "head needs at least one encoder layer".to_string(),
            ));
        }
        let mut params = ParamStore::new();
        for (name, shape) in expected_head_tensors(cfg, num_layers) {
            params.add(&name, &shape);
        }
        let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
        let u = cfg.lstm_units();
        for spec in params.specs().to_vec() {
            let last = spec.name.rsplit('.').next().unwrap_or("");
            let range = params.range(&spec.name);
            if last.starts_with('b') || last == "kb" {
                params.data_mut()[range].fill(0.0);
            } else if last == "wh" {
                // one orthogonal block per gate
                let mut block = vec![0.0; u * u];
                for gate in 0..4 {
                    fill_orthogonal(&mut block, u, &mut rng);
                    let wh = &mut params.data_mut()[range.clone()];
                    for row in 0..u {
                        for col in 0..u {
                            wh[row * 4 * u + gate * u + col] = block[row * u + col];
                        }
                    }
                }
            } else {
                fill_truncated_normal(&mut params.data_mut()[range], INIT_STD, &mut rng);
            }
        }
        Ok(Head {
            cfg: *cfg,
            num_layers,
            params,
        })
    }

    /// Wraps existing parameters, validating the tensor set against the config.
    pub fn from_parts(
        cfg: &HeadConfig,
        num_layers: usize,
        params: ParamStore,
        origin: &str,
    ) -> Result<Head> {
        cfg.validate()?;
        let expected = expected_head_tensors(cfg, num_layers);
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
                "{origin}: head archive has {} tensors, expected {}",
                params.specs().len(),
                expected.len()
            )));
        }
        Ok(Head {
            cfg: *cfg,
            num_layers,
            params,
        })
    }

    /// Dropout site lengths for this head given a content length, in the
    /// order [`Head::forward`] consumes them.
    pub fn dropout_sites(&self, content_length: usize) -> Vec<usize> {
        match self.cfg.kind {
            HeadKind::Linear => vec![self.cfg.hidden],
            HeadKind::Mlp => vec![self.cfg.hidden, self.cfg.mlp_hidden, self.cfg.mlp_hidden],
            HeadKind::Bilstm => vec![self.cfg.hidden; content_length],
            HeadKind::Cnn => vec![self.num_layers * self.cfg.cnn_filters],
        }
    }

    fn check_states(&self, states: &EncoderStates) -> Result<()> {
        let shape = states.states.shape();
        if shape[0] != self.num_layers || shape[2] != self.cfg.hidden {
            return Err(PipelineError::ShapeMismatch {
                what: "encoder states".to_string(),
                expected: format!("({}, _, {})", self.num_layers, self.cfg.hidden),
                actual: format!("({}, {}, {})", shape[0], shape[1], shape[2]),
            });
        }
        Ok(())
    }

    /// Class probabilities. `dropout: None` is inference mode (pure,
    /// deterministic); `Some` applies the plan's multipliers.
    pub fn forward(
        &self,
        states: &EncoderStates,
        seq: &TokenSequence,
        dropout: Option<&Dropout>,
    ) -> Result<(ClassProbs, HeadCache)> {
        self.check_states(states)?;
        let content = seq.content_length.max(1);
        if let Some(plan) = dropout {
            let sites = self.dropout_sites(content);
            if plan.masks.len() != sites.len()
                || plan.masks.iter().zip(&sites).any(|(m, &s)| m.len() != s)
            {
                return Err(PipelineError::ShapeMismatch {
                    what: "dropout plan".to_string(),
                    expected: format!("{sites:?}"),
                    actual: format!("{:?}", plan.masks.iter().map(Vec::len).collect::<Vec<_>>()),
                });
            }
        }
        let mask_at = |site: usize, len: usize| -> Vec<f64> {
            match dropout {
                Some(plan) => plan.masks[site].clone(),
                None => ones(len),
            }
        };
        let (logits, inner) = match self.cfg.kind {
            HeadKind::Linear => self.linear_forward(states, mask_at(0, self.cfg.hidden)),
            HeadKind::Mlp => self.mlp_forward(
                states,
                mask_at(0, self.cfg.hidden),
                mask_at(1, self.cfg.mlp_hidden),
                mask_at(2, self.cfg.mlp_hidden),
            ),
            HeadKind::Bilstm => {
                let masks: Vec<Vec<f64>> = (0..content)
                    .map(|t| mask_at(t, self.cfg.hidden))
                    .collect();
                self.bilstm_forward(states, content, masks)
            }
            HeadKind::Cnn => self.cnn_forward(
                states,
                content,
                mask_at(0, self.num_layers * self.cfg.cnn_filters),
            ),
        };
        let mut probs = logits;
        softmax_in_place(&mut probs);
        Ok((
            ClassProbs {
                probs: probs.clone(),
            },
            HeadCache { probs, inner },
        ))
    }

    fn cls_vector(&self, states: &EncoderStates) -> Array1<f64> {
        states.cls().to_owned()
    }

    fn linear_forward(&self, states: &EncoderStates, m0: Vec<f64>) -> (Vec<f64>, HeadCacheInner) {
        let mut x = self.cls_vector(states);
        for (v, m) in x.iter_mut().zip(&m0) {
            *v *= m;
        }
        let w = self.params.view2("linear.w");
        let b = self.params.view1("linear.b");
        let logits = (x.dot(&w) + &b).to_vec();
        (logits, HeadCacheInner::Linear { x, m0 })
    }

    fn mlp_forward(
        &self,
        states: &EncoderStates,
        m0: Vec<f64>,
        m1: Vec<f64>,
        m2: Vec<f64>,
    ) -> (Vec<f64>, HeadCacheInner) {
        let slope = self.cfg.leaky_slope;
        let lrelu = |v: f64| if v >= 0.0 { v } else { slope * v };
        let mut x0 = self.cls_vector(states);
        for (v, m) in x0.iter_mut().zip(&m0) {
            *v *= m;
        }
        let a1 = x0.dot(&self.params.view2("mlp.w1")) + &self.params.view1("mlp.b1");
        let mut h1d = a1.mapv(lrelu);
        for (v, m) in h1d.iter_mut().zip(&m1) {
            *v *= m;
        }
        let a2 = h1d.dot(&self.params.view2("mlp.w2")) + &self.params.view1("mlp.b2");
        let mut h2d = a2.mapv(lrelu);
        for (v, m) in h2d.iter_mut().zip(&m2) {
            *v *= m;
        }
        let logits = (h2d.dot(&self.params.view2("mlp.w3")) + &self.params.view1("mlp.b3")).to_vec();
        (
            logits,
            HeadCacheInner::Mlp {
                x0,
                a1,
                h1d,
                a2,
                h2d,
                m0,
                m1,
                m2,
            },
        )
    }

    fn run_lstm(&self, xs: &Array2<f64>, order: &[usize], prefix: &str) -> LstmTrace {
        let u = self.cfg.lstm_units();
        let steps = order.len();
        let wx = self.params.view2(&format!("{prefix}.wx"));
        let wh = self.params.view2(&format!("{prefix}.wh"));
        let b = self.params.view1(&format!("{prefix}.b"));
        let mut trace = LstmTrace {
            i: Array2::zeros((steps, u)),
            f: Array2::zeros((steps, u)),
            g: Array2::zeros((steps, u)),
            o: Array2::zeros((steps, u)),
            c: Array2::zeros((steps, u)),
            tanh_c: Array2::zeros((steps, u)),
            h: Array2::zeros((steps, u)),
        };
        let mut h_prev = Array1::zeros(u);
        let mut c_prev: Array1<f64> = Array1::zeros(u);
        for (step, &t) in order.iter().enumerate() {
            let x = xs.row(t);
            let z = x.dot(&wx) + h_prev.dot(&wh) + &b;
            for k in 0..u {
                let i = sigmoid(z[k]);
                let f = sigmoid(z[u + k]);
                let g = z[2 * u + k].tanh();
                let o = sigmoid(z[3 * u + k]);
                let c = f * c_prev[k] + i * g;
                let tc = c.tanh();
                trace.i[[step, k]] = i;
                trace.f[[step, k]] = f;
                trace.g[[step, k]] = g;
                trace.o[[step, k]] = o;
                trace.c[[step, k]] = c;
                trace.tanh_c[[step, k]] = tc;
                trace.h[[step, k]] = o * tc;
            }
            h_prev = trace.h.row(step).to_owned();
            c_prev = trace.c.row(step).to_owned();
        }
        trace
    }

    fn bilstm_forward(
        &self,
        states: &EncoderStates,
        content: usize,
        masks: Vec<Vec<f64>>,
    ) -> (Vec<f64>, HeadCacheInner) {
        let h = self.cfg.hidden;
        let u = self.cfg.lstm_units();
        let last = states.layer(self.num_layers - 1);
        let mut xs = Array2::zeros((content, h));
        for t in 0..content {
            for col in 0..h {
                xs[[t, col]] = last[[t, col]] * masks[t][col];
            }
        }
        let fw_order: Vec<usize> = (0..content).collect();
        let bw_order: Vec<usize> = (0..content).rev().collect();
        let fw = self.run_lstm(&xs, &fw_order, "lstm.fw");
        let bw = self.run_lstm(&xs, &bw_order, "lstm.bw");
        let mut concat = Array1::zeros(2 * u);
        for k in 0..u {
            concat[k] = fw.h[[content - 1, k]];
            concat[u + k] = bw.h[[content - 1, k]];
        }
        let logits = (concat.dot(&self.params.view2("lstm.w")) + &self.params.view1("lstm.b")).to_vec();
        (
            logits,
            HeadCacheInner::Bilstm {
                xs,
                masks,
                fw,
                bw,
                concat,
            },
        )
    }

    /// Valid convolution positions for a content span: clamped to at least
    /// one window so degenerate inputs still produce output.
    fn conv_positions(&self, content: usize) -> usize {
        content.saturating_sub(self.cfg.cnn_window - 1).max(1)
    }

    fn cnn_forward(
        &self,
        states: &EncoderStates,
        content: usize,
        m0: Vec<f64>,
    ) -> (Vec<f64>, HeadCacheInner) {
        let h = self.cfg.hidden;
        let f_count = self.cfg.cnn_filters;
        let window = self.cfg.cnn_window;
        let n_pos = self.conv_positions(content);
        let kernel = self.params.view2("cnn.kernel");
        let kb = self.params.view1("cnn.kb");

        let mut conv_all = Vec::with_capacity(self.num_layers);
        let mut argmax_all = Vec::with_capacity(self.num_layers);
        let mut pooled = Array1::zeros(self.num_layers * f_count);
        for l in 0..self.num_layers {
            let x = states.layer(l);
            let mut conv = Array2::zeros((n_pos, f_count));
            for t in 0..n_pos {
                for f in 0..f_count {
                    let mut acc = kb[f];
                    for w in 0..window {
                        for col in 0..h {
                            acc += x[[t + w, col]] * kernel[[f, w * h + col]];
                        }
                    }
                    conv[[t, f]] = acc;
                }
            }
            let mut argmax = vec![0usize; f_count];
            for f in 0..f_count {
                let mut best = 0;
                for t in 1..n_pos {
                    if conv[[t, f]] > conv[[best, f]] {
                        best = t;
                    }
                }
                argmax[f] = best;
                let v = conv[[best, f]];
                pooled[l * f_count + f] = if self.cfg.cnn_relu { v.max(0.0) } else { v };
            }
            conv_all.push(conv);
            argmax_all.push(argmax);
        }
        let mut z = pooled.clone();
        for (v, m) in z.iter_mut().zip(&m0) {
            *v *= m;
        }
        let logits = (z.dot(&self.params.view2("cnn.w")) + &self.params.view1("cnn.b")).to_vec();
        (
            logits,
            HeadCacheInner::Cnn {
                conv: conv_all,
                argmax: argmax_all,
                pooled,
                z,
                m0,
            },
        )
    }

    /// Gradients of cross-entropy loss at `target`, w.r.t. head parameters
    /// (in [`ParamStore`] layout) and w.r.t. the encoder states.
    pub fn backward(
        &self,
        states: &EncoderStates,
        seq: &TokenSequence,
        cache: &HeadCache,
        target: usize,
    ) -> (Vec<f64>, Array3<f64>) {
        let mut g = self.params.zeros_like();
        let dstates = self.backward_into(states, seq, cache, target, &mut g);
        (g, dstates)
    }

    /// Like [`Head::backward`] but accumulates (+=) parameter gradients into
    /// `g`, so one buffer can gather a whole batch. The returned state
    /// gradient is per-example and always fresh.
    pub fn backward_into(
        &self,
        states: &EncoderStates,
        seq: &TokenSequence,
        cache: &HeadCache,
        target: usize,
        g: &mut [f64],
    ) -> Array3<f64> {
        assert!(target < self.cfg.num_classes);
        let mut dlogits = cache.probs.clone();
        dlogits[target] -= 1.0;
        let dlogits = Array1::from(dlogits);
        let mut dstates = Array3::zeros(states.states.raw_dim());
        let content = seq.content_length.max(1);
        match &cache.inner {
            HeadCacheInner::Linear { x, m0 } => {
                self.affine_backward("linear.w", "linear.b", x, &dlogits, g);
                let dx = self.params.view2("linear.w").dot(&dlogits);
                let top = self.num_layers - 1;
                for col in 0..self.cfg.hidden {
                    dstates[[top, 0, col]] = dx[col] * m0[col];
                }
            }
            HeadCacheInner::Mlp {
                x0,
                a1,
                h1d,
                a2,
                h2d,
                m0,
                m1,
                m2,
            } => {
                let slope = self.cfg.leaky_slope;
                let dact = |a: f64| if a >= 0.0 { 1.0 } else { slope };
                self.affine_backward("mlp.w3", "mlp.b3", h2d, &dlogits, g);
                let dh2d = self.params.view2("mlp.w3").dot(&dlogits);
                let da2 = Array1::from_shape_fn(a2.len(), |k| dh2d[k] * m2[k] * dact(a2[k]));
                self.affine_backward("mlp.w2", "mlp.b2", h1d, &da2, g);
                let dh1d = self.params.view2("mlp.w2").dot(&da2);
                let da1 = Array1::from_shape_fn(a1.len(), |k| dh1d[k] * m1[k] * dact(a1[k]));
                self.affine_backward("mlp.w1", "mlp.b1", x0, &da1, g);
                let dx0 = self.params.view2("mlp.w1").dot(&da1);
                let top = self.num_layers - 1;
                for col in 0..self.cfg.hidden {
                    dstates[[top, 0, col]] = dx0[col] * m0[col];
                }
            }
            HeadCacheInner::Bilstm {
                xs,
                masks,
                fw,
                bw,
                concat,
            } => {
                let u = self.cfg.lstm_units();
                self.affine_backward("lstm.w", "lstm.b", concat, &dlogits, g);
                let dconcat = self.params.view2("lstm.w").dot(&dlogits);
                let mut dxs = Array2::zeros(xs.raw_dim());
                let fw_order: Vec<usize> = (0..content).collect();
                let bw_order: Vec<usize> = (0..content).rev().collect();
                self.lstm_backward(
                    xs,
                    &fw_order,
                    "lstm.fw",
                    fw,
                    dconcat.slice(ndarray::s![..u]).to_owned(),
                    &mut dxs,
                    g,
                );
                self.lstm_backward(
                    xs,
                    &bw_order,
                    "lstm.bw",
                    bw,
                    dconcat.slice(ndarray::s![u..]).to_owned(),
                    &mut dxs,
                    g,
                );
                let top = self.num_layers - 1;
                for t in 0..content {
                    for col in 0..self.cfg.hidden {
                        dstates[[top, t, col]] = dxs[[t, col]] * masks[t][col];
                    }
                }
            }
            HeadCacheInner::Cnn {
                conv,
                argmax,
                pooled,
                z,
                m0,
            } => {
                let f_count = self.cfg.cnn_filters;
                let window = self.cfg.cnn_window;
                let h = self.cfg.hidden;
                self.affine_backward("cnn.w", "cnn.b", z, &dlogits, g);
                let dz = self.params.view2("cnn.w").dot(&dlogits);
                let kernel = self.params.view2("cnn.kernel");
                let kernel_range = self.params.range("cnn.kernel");
                let kb_range = self.params.range("cnn.kb");
                for l in 0..self.num_layers {
                    for f in 0..f_count {
                        let j = l * f_count + f;
                        let mut dpool = dz[j] * m0[j];
                        if self.cfg.cnn_relu && conv[l][[argmax[l][f], f]] <= 0.0 {
                            dpool = 0.0;
                        }
                        if dpool == 0.0 {
                            continue;
                        }
                        let t = argmax[l][f];
                        g[kb_range.clone()][f] += dpool;
                        for w in 0..window {
                            for col in 0..h {
                                g[kernel_range.clone()][f * window * h + w * h + col] +=
                                    dpool * states.states[[l, t + w, col]];
                                dstates[[l, t + w, col]] += dpool * kernel[[f, w * h + col]];
                            }
                        }
                    }
                }
                let _ = pooled;
            }
        }
        dstates
    }

    /// For logits = x·W + b: accumulates dW = x ⊗ dlogits and db = dlogits.
    fn affine_backward(
        &self,
        w_name: &str,
        b_name: &str,
        x: &Array1<f64>,
        dout: &Array1<f64>,
        g: &mut [f64],
    ) {
        let cols = dout.len();
        let w_range = self.params.range(w_name);
        let gw = &mut g[w_range];
        for (row, &xv) in x.iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            for (col, &dv) in dout.iter().enumerate() {
                gw[row * cols + col] += xv * dv;
            }
        }
        let b_range = self.params.range(b_name);
        let gb = &mut g[b_range];
        for (col, &dv) in dout.iter().enumerate() {
            gb[col] += dv;
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn lstm_backward(
        &self,
        xs: &Array2<f64>,
        order: &[usize],
        prefix: &str,
        trace: &LstmTrace,
        dh_final: Array1<f64>,
        dxs: &mut Array2<f64>,
        g: &mut [f64],
    ) {
        let u = self.cfg.lstm_units();
        let steps = order.len();
        let wx = self.params.view2(&format!("{prefix}.wx"));
        let wh = self.params.view2(&format!("{prefix}.wh"));
        let wx_range = self.params.range(&format!("{prefix}.wx"));
        let wh_range = self.params.range(&format!("{prefix}.wh"));
        let b_range = self.params.range(&format!("{prefix}.b"));

        let mut dh = dh_final;
        let mut dc: Array1<f64> = Array1::zeros(u);
        for step in (0..steps).rev() {
            let t = order[step];
            let mut dz = Array1::zeros(4 * u);
            for k in 0..u {
                let i = trace.i[[step, k]];
                let f = trace.f[[step, k]];
                let gg = trace.g[[step, k]];
                let o = trace.o[[step, k]];
                let tc = trace.tanh_c[[step, k]];
                let c_prev = if step == 0 { 0.0 } else { trace.c[[step - 1, k]] };
                let do_ = dh[k] * tc;
                let dct = dc[k] + dh[k] * o * (1.0 - tc * tc);
                let di = dct * gg;
                let df = dct * c_prev;
                let dg = dct * i;
                dc[k] = dct * f;
                dz[k] = di * i * (1.0 - i);
                dz[u + k] = df * f * (1.0 - f);
                dz[2 * u + k] = dg * (1.0 - gg * gg);
                dz[3 * u + k] = do_ * o * (1.0 - o);
            }
            // parameter gradients
            {
                let gwx = &mut g[wx_range.clone()];
                let x = xs.row(t);
                for (row, &xv) in x.iter().enumerate() {
                    if xv == 0.0 {
                        continue;
                    }
                    for col in 0..4 * u {
                        gwx[row * 4 * u + col] += xv * dz[col];
                    }
                }
            }
            if step > 0 {
                let gwh = &mut g[wh_range.clone()];
                for row in 0..u {
                    let hv = trace.h[[step - 1, row]];
                    if hv == 0.0 {
                        continue;
                    }
                    for col in 0..4 * u {
                        gwh[row * 4 * u + col] += hv * dz[col];
                    }
                }
            }
            {
                let gb = &mut g[b_range.clone()];
                for col in 0..4 * u {
                    gb[col] += dz[col];
                }
            }
            // input + previous-state gradients
            let dx = wx.dot(&dz);
            for col in 0..xs.shape()[1] {
                dxs[[t, col]] += dx[col];
            }
            dh = wh.dot(&dz);
            if step == 0 {
                break;
            }
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    crate::tensor::sigmoid(x)
}
