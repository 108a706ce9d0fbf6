//! Supervised fine-tuning loop: seeded shuffling, minibatch Adam updates,
//! per-epoch validation, and checkpoint archives that reload bit-exactly.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::archive::{read_archive, write_archive};
use crate::corpus::{Corpus, LabelScheme, TweetRecord};
use crate::encoder::{
    load_pretrained, tokenize, EncoderConfig, Precision, TokenSequence, Transformer, Vocabulary,
};
use crate::error::{PipelineError, Result};
use crate::eval_report::metrics;
use crate::heads::{predict, ClassProbs, Dropout, Head, HeadConfig, HeadKind};
use crate::text_prep::Placeholders;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

const CHECKPOINT_VERSION: &str = "1";
const CHECKPOINT_FILE: &str = "checkpoint.json";
const VOCAB_FILE: &str = "vocab.txt";
const HEAD_DIR: &str = "head";
const ENCODER_DIR: &str = "encoder";

/// Dedicated ChaCha stream ids so dropout draws never alias shuffle draws.
const DROPOUT_STREAM: u64 = 1;
const SHUFFLE_STREAM_BASE: u64 = 1_000_000;

/// Hyperparameters for one fine-tuning run. Serde defaults mirror the
/// reference regime (batch 32, 3 epochs, Adam at 2e-5, dropout 0.1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_dropout")]
    pub dropout_p: f64,
    pub seed: u64,
    /// Leave encoder parameters untouched; only the head trains.
    #[serde(default)]
    pub freeze_encoder: bool,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
    /// Linear learning-rate ramp over this many optimizer steps (0 = constant).
    #[serde(default)]
    pub warmup_steps: usize,
    /// Global-norm gradient clip threshold; absent = no clipping.
    #[serde(default)]
    pub grad_clip: Option<f64>,
    /// Keep the epoch with the best validation F1 instead of the last one.
    #[serde(default)]
    pub select_best: bool,
}

fn default_batch_size() -> usize {
    32
}
fn default_epochs() -> usize {
    3
}
fn default_learning_rate() -> f64 {
    2e-5
}
fn default_dropout() -> f64 {
    0.1
}
fn default_max_len() -> usize {
    64
}

impl TrainConfig {
    pub fn new(seed: u64) -> Self {
        TrainConfig {
            batch_size: default_batch_size(),
            epochs: default_epochs(),
            learning_rate: default_learning_rate(),
            dropout_p: default_dropout(),
            seed,
            freeze_encoder: false,
            max_len: default_max_len(),
            warmup_steps: 0,
            grad_clip: None,
            select_best: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(PipelineError::InvalidConfig(
                "batch_size must be at least 1".to_string(),
            ));
        }
        if self.epochs == 0 {
            return Err(PipelineError::InvalidConfig(
                "epochs must be at least 1".to_string(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(PipelineError::InvalidConfig(format!(
                "learning_rate must be a positive finite number, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(PipelineError::InvalidConfig(format!(
                "dropout_p must lie in [0, 1), got {}",
                self.dropout_p
            )));
        }
        if self.max_len < 3 {
            return Err(PipelineError::InvalidConfig(format!(
                "max_len must leave room for markers plus one token, got {}",
                self.max_len
            )));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0 && c.is_finite()) {
                return Err(PipelineError::InvalidConfig(format!(
                    "grad_clip must be a positive finite number, got {c}"
                )));
            }
        }
        Ok(())
    }
}

/// First/second gradient moments for one parameter buffer.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    /// Completed steps; bias correction uses t+1 inside [`adam_step`].
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

/// One Adam update in place: θ ← θ − lr·m̂/(√v̂ + ε) with bias-corrected
/// moment estimates.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.m.len());
    state.t += 1;
    let bc1 = 1.0 - ADAM_BETA1.powi(state.t as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g;
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * g * g;
        let mhat = state.m[i] / bc1;
        let vhat = state.v[i] / bc2;
        params[i] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
    }
}

/// −ln p(target), with probabilities floored at 1e-12 before the log.
/// Non-finite probabilities propagate as NaN so the training loop can abort
/// instead of silently treating divergence as a maximal-but-finite loss.
pub fn cross_entropy(probs: &ClassProbs, target: usize) -> f64 {
    assert!(target < probs.probs.len());
    let p = probs.probs[target];
    if !p.is_finite() {
        return f64::NAN;
    }
    -(p.max(1e-12)).ln()
}

fn effective_lr(cfg: &TrainConfig, step: u64) -> f64 {
    if cfg.warmup_steps == 0 || step >= cfg.warmup_steps as u64 {
        cfg.learning_rate
    } else {
        cfg.learning_rate * step as f64 / cfg.warmup_steps as f64
    }
}

/// Scales both gradient buffers so their joint L2 norm is at most `max_norm`.
fn clip_global_norm(g_head: &mut [f64], g_enc: Option<&mut [f64]>, max_norm: f64) {
    let mut sq: f64 = g_head.iter().map(|v| v * v).sum();
    if let Some(ge) = &g_enc {
        sq += ge.iter().map(|v| v * v).sum::<f64>();
    }
    let norm = sq.sqrt();
    if norm <= max_norm || norm == 0.0 {
        return;
    }
    let scale = max_norm / norm;
    for v in g_head.iter_mut() {
        *v *= scale;
    }
    if let Some(ge) = g_enc {
        for v in ge.iter_mut() {
            *v *= scale;
        }
    }
}

/// Where a model's encoder weights came from. A frozen encoder with a
/// reconstructible provenance is checkpointed by reference instead of
/// re-serializing every tensor.
#[derive(Debug, Clone)]
pub enum EncoderProvenance {
    /// Deterministically seeded desk-scale build; the config alone rebuilds it.
    Mini(EncoderConfig),
    /// Loaded from an external weights archive plus vocabulary file.
    Archive {
        weights_dir: PathBuf,
        vocab_path: PathBuf,
    },
    /// Unknown origin; always stored inline.
    Opaque,
}

/// A complete classifier: tokenizer vocabulary, encoder backend, and head.
#[derive(Debug)]
pub struct Model {
    pub encoder: Transformer,
    pub vocab: Vocabulary,
    pub head: Head,
    pub provenance: EncoderProvenance,
}

/// Desk-scale model whose whole-word vocabulary is built from the corpus
/// itself (normalizer placeholders kept atomic, capped at 5000 entries).
/// `max_len` sizes the positional table and must match later tokenization.
pub fn build_mini_model(corpus: &Corpus, kind: HeadKind, max_len: usize, seed: u64) -> Result<Model> {
    let placeholders = Placeholders::default();
    let atomic = placeholders.all();
    let vocab = Vocabulary::build_from_texts(
        corpus.records.iter().map(|r| r.normalized_text.as_str()),
        &atomic,
        Some(5000),
    );
    let mut enc_cfg = EncoderConfig::mini(vocab.len(), seed);
    enc_cfg.max_len = max_len;
    let encoder = Transformer::build_mini(enc_cfg)?;
    let head_cfg = HeadConfig::new(
        kind,
        corpus.scheme.num_classes(),
        enc_cfg.hidden_size,
        seed.wrapping_add(1),
    );
    let head = Head::new(&head_cfg, enc_cfg.num_layers)?;
    Ok(Model {
        encoder,
        vocab,
        head,
        provenance: EncoderProvenance::Mini(enc_cfg),
    })
}

/// Deterministic 3-class corpus where one keyword per class makes the task
/// linearly separable; seeded filler words keep the vocabulary nontrivial.
pub fn synthetic_separable_corpus(n: usize, scheme: LabelScheme, seed: u64) -> Corpus {
    const KEYWORDS: [&str; 3] = ["alpha", "bravo", "charlie"];
    const FILLER: [&str; 8] = [
        "the", "so", "much", "talk", "today", "again", "folks", "really",
    ];
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let pick = |rng: &mut ChaCha20Rng| FILLER[rand::Rng::gen_range(rng, 0..FILLER.len())];
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % scheme.num_classes();
        let kw = KEYWORDS[label];
        let text = format!("{} {kw} {} {kw}", pick(&mut rng), pick(&mut rng));
        records.push(TweetRecord {
            id: format!("syn{i}"),
            raw_text: text.clone(),
            normalized_text: text,
            label,
            source: "synthetic".to_string(),
        });
    }
    Corpus { scheme, records }
}

/// Serialized ChaCha position: enough to resume the dropout stream exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub stream: u64,
    /// 128-bit word position split for JSON round-tripping.
    pub word_pos_lo: u64,
    pub word_pos_hi: u64,
}

impl RngState {
    pub fn capture(rng: &ChaCha20Rng, seed: u64, stream: u64) -> Self {
        let pos = rng.get_word_pos();
        RngState {
            seed,
            stream,
            word_pos_lo: pos as u64,
            word_pos_hi: (pos >> 64) as u64,
        }
    }

    pub fn restore(&self) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(((self.word_pos_hi as u128) << 64) | self.word_pos_lo as u128);
        rng
    }
}

/// One epoch's summary; `wall_secs` stays out of the history CSV so reruns
/// diff cleanly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_f1: f64,
    pub wall_secs: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        let io_err = |e| PipelineError::io("history csv".to_string(), e);
        writeln!(w, "epoch,train_loss,val_loss,val_f1").map_err(io_err)?;
        for r in &self.records {
            writeln!(w, "{},{},{},{}", r.epoch, r.train_loss, r.val_loss, r.val_f1)
                .map_err(io_err)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = Vec::new();
        self.write_csv(&mut out).expect("vec write");
        String::from_utf8(out).expect("csv is utf-8")
    }
}

/// Trained model plus the bookkeeping needed to reload or audit the run.
#[derive(Debug)]
pub struct Checkpoint {
    pub scheme: LabelScheme,
    pub train_config: TrainConfig,
    /// Epoch the saved parameters come from (last, or best when selected).
    pub epoch: usize,
    /// Dropout stream position at the end of training.
    pub rng: RngState,
    pub model: Model,
}

/// Inference over a corpus: dropout off, encoder states quantized to
/// `precision` before the head runs.
#[derive(Debug, Clone)]
pub struct EvalOutput {
    pub mean_loss: f64,
    pub preds: Vec<usize>,
    pub probs: Vec<Vec<f64>>,
}

pub fn evaluate(
    model: &Model,
    corpus: &Corpus,
    max_len: usize,
    precision: Precision,
) -> Result<EvalOutput> {
    if corpus.is_empty() {
        return Err(PipelineError::EmptyInput("evaluation corpus".to_string()));
    }
    check_max_len(model, max_len)?;
    let mut loss_sum = 0.0;
    let mut preds = Vec::with_capacity(corpus.len());
    let mut probs = Vec::with_capacity(corpus.len());
    for r in &corpus.records {
        let seq = tokenize(&r.normalized_text, &model.vocab, max_len);
        let mut states = model.encoder.forward(&seq)?;
        states.quantize(precision);
        let (p, _) = model.head.forward(&states, &seq, None)?;
        loss_sum += cross_entropy(&p, r.label);
        preds.push(predict(&p));
        probs.push(p.probs);
    }
    Ok(EvalOutput {
        mean_loss: loss_sum / corpus.len() as f64,
        preds,
        probs,
    })
}

fn check_max_len(model: &Model, max_len: usize) -> Result<()> {
    if model.encoder.cfg.max_len != max_len {
        return Err(PipelineError::InvalidConfig(format!(
            "max_len {max_len} does not match the encoder's positional table ({})",
            model.encoder.cfg.max_len
        )));
    }
    Ok(())
}

struct BestSnapshot {
    epoch: usize,
    val_f1: f64,
    head: Vec<f64>,
    encoder: Option<Vec<f64>>,
}

/// Fine-tunes `model` on `train_set`, validating on `valid_set` after every
/// epoch (dropout off). Every random choice — shuffle order and dropout
/// masks — flows from `cfg.seed` over dedicated ChaCha streams, so a rerun
/// with identical inputs is bit-identical.
pub fn train(
    mut model: Model,
    train_set: &Corpus,
    valid_set: &Corpus,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(Checkpoint, TrainHistory)> {
    cfg.validate()?;
    if train_set.scheme != valid_set.scheme {
        return Err(PipelineError::SchemeMismatch {
            left: train_set.scheme.name().to_string(),
            right: valid_set.scheme.name().to_string(),
        });
    }
    if model.head.cfg.num_classes != train_set.scheme.num_classes() {
        return Err(PipelineError::InvalidConfig(format!(
            "head has {} classes but scheme {} defines {}",
            model.head.cfg.num_classes,
            train_set.scheme.name(),
            train_set.scheme.num_classes()
        )));
    }
    if train_set.is_empty() {
        return Err(PipelineError::EmptyInput("training corpus".to_string()));
    }
    if valid_set.is_empty() {
        return Err(PipelineError::EmptyInput("validation corpus".to_string()));
    }
    check_max_len(&model, cfg.max_len)?;

    let train_seqs: Vec<TokenSequence> = train_set
        .records
        .iter()
        .map(|r| tokenize(&r.normalized_text, &model.vocab, cfg.max_len))
        .collect();
    let valid_golds: Vec<usize> = valid_set.records.iter().map(|r| r.label).collect();

    // Gradients accumulate into these shared buffers across a whole batch;
    // nothing parameter-sized is allocated per example.
    let mut g_head = model.head.params.zeros_like();
    let mut head_adam = AdamState::new(g_head.len());
    let mut enc_opt: Option<(Vec<f64>, AdamState)> = if cfg.freeze_encoder {
        None
    } else {
        let g = model.encoder.params.zeros_like();
        let state = AdamState::new(g.len());
        Some((g, state))
    };

    let mut dropout_rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    dropout_rng.set_stream(DROPOUT_STREAM);

    let mut history = TrainHistory::default();
    let mut best: Option<BestSnapshot> = None;

    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        let mut shuffle_rng = ChaCha20Rng::seed_from_u64(cfg.seed);
        shuffle_rng.set_stream(SHUFFLE_STREAM_BASE + epoch as u64);
        order.shuffle(&mut shuffle_rng);

        let mut loss_sum = 0.0;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            g_head.fill(0.0);
            if let Some((g_enc, _)) = &mut enc_opt {
                g_enc.fill(0.0);
            }

            for &i in chunk {
                let seq = &train_seqs[i];
                let target = train_set.records[i].label;
                let plan = if cfg.dropout_p > 0.0 {
                    let sites = model.head.dropout_sites(seq.content_length.max(1));
                    Some(Dropout::sample(cfg.dropout_p, &sites, &mut dropout_rng))
                } else {
                    None
                };
                let (states, cache) = model.encoder.forward_cached(seq)?;
                let (probs, head_cache) = model.head.forward(&states, seq, plan.as_ref())?;
                let loss = cross_entropy(&probs, target);
                if !loss.is_finite() {
                    return Err(PipelineError::NonFiniteLoss {
                        value: loss,
                        epoch,
                        batch: batch_idx,
                    });
                }
                loss_sum += loss;
                let dstates =
                    model
                        .head
                        .backward_into(&states, seq, &head_cache, target, &mut g_head);
                if let Some((g_enc, _)) = &mut enc_opt {
                    model.encoder.backward_into(seq, &cache, &dstates, g_enc);
                }
            }

            let inv_b = 1.0 / chunk.len() as f64;
            for v in g_head.iter_mut() {
                *v *= inv_b;
            }
            if let Some((g_enc, _)) = &mut enc_opt {
                for v in g_enc.iter_mut() {
                    *v *= inv_b;
                }
            }
            if let Some(max_norm) = cfg.grad_clip {
                clip_global_norm(
                    &mut g_head,
                    enc_opt.as_mut().map(|(g, _)| g.as_mut_slice()),
                    max_norm,
                );
            }

            let lr = effective_lr(cfg, head_adam.t + 1);
            adam_step(model.head.params.data_mut(), &g_head, &mut head_adam, lr);
            if let Some((g_enc, enc_adam)) = &mut enc_opt {
                adam_step(model.encoder.params.data_mut(), g_enc, enc_adam, lr);
            }
        }
        let train_loss = loss_sum / train_set.len() as f64;

        let val = evaluate(&model, valid_set, cfg.max_len, Precision::F64)?;
        let report = metrics(&val.preds, &valid_golds, valid_set.scheme)?;
        let record = EpochRecord {
            epoch,
            train_loss,
            val_loss: val.mean_loss,
            val_f1: report.weighted_f1,
            wall_secs: started.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        history.records.push(record);

        if cfg.select_best && best.as_ref().is_none_or(|b| report.weighted_f1 > b.val_f1) {
            best = Some(BestSnapshot {
                epoch,
                val_f1: report.weighted_f1,
                head: model.head.params.data().to_vec(),
                encoder: enc_opt
                    .as_ref()
                    .map(|_| model.encoder.params.data().to_vec()),
            });
        }
    }

    let mut final_epoch = cfg.epochs;
    if let Some(snapshot) = best {
        model.head.params.load_data(snapshot.head)?;
        if let Some(enc) = snapshot.encoder {
            model.encoder.params.load_data(enc)?;
        }
        final_epoch = snapshot.epoch;
    }

    let rng = RngState::capture(&dropout_rng, cfg.seed, DROPOUT_STREAM);
    let checkpoint = Checkpoint {
        scheme: train_set.scheme,
        train_config: cfg.clone(),
        epoch: final_epoch,
        rng,
        model,
    };
    Ok((checkpoint, history))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
enum EncoderSource {
    /// Tensors live in the checkpoint's `encoder/` archive.
    Inline { config: EncoderConfig },
    /// Deterministic rebuild from the config's seed; no tensors stored.
    MiniConfig { config: EncoderConfig },
    /// External pretrained archive, stored by path.
    Archive {
        weights_dir: String,
        vocab_path: String,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointDoc {
    version: String,
    scheme: String,
    head_config: HeadConfig,
    num_layers: usize,
    train_config: TrainConfig,
    epoch: usize,
    rng: RngState,
    encoder: EncoderSource,
}

/// Writes `checkpoint.json`, the head archive, the vocabulary, and — unless
/// the encoder is frozen with a reconstructible provenance — the encoder
/// archive under `dir`.
pub fn save_checkpoint(checkpoint: &Checkpoint, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir.display().to_string(), e))?;
    let model = &checkpoint.model;

    let source = if checkpoint.train_config.freeze_encoder {
        match &model.provenance {
            EncoderProvenance::Mini(cfg) => EncoderSource::MiniConfig { config: *cfg },
            EncoderProvenance::Archive {
                weights_dir,
                vocab_path,
            } => EncoderSource::Archive {
                weights_dir: weights_dir.display().to_string(),
                vocab_path: vocab_path.display().to_string(),
            },
            EncoderProvenance::Opaque => EncoderSource::Inline {
                config: model.encoder.cfg,
            },
        }
    } else {
        EncoderSource::Inline {
            config: model.encoder.cfg,
        }
    };
    if matches!(source, EncoderSource::Inline { .. }) {
        write_archive(
            &dir.join(ENCODER_DIR),
            &model.encoder.params,
            serde_json::json!({ "config": model.encoder.cfg }),
        )?;
    }
    write_archive(
        &dir.join(HEAD_DIR),
        &model.head.params,
        serde_json::json!({ "kind": model.head.cfg.kind.name() }),
    )?;

    let vocab_path = dir.join(VOCAB_FILE);
    let mut vocab_text = model.vocab.tokens().join("\n");
    vocab_text.push('\n');
    std::fs::write(&vocab_path, vocab_text)
        .map_err(|e| PipelineError::io(vocab_path.display().to_string(), e))?;

    let doc = CheckpointDoc {
        version: CHECKPOINT_VERSION.to_string(),
        scheme: checkpoint.scheme.name().to_string(),
        head_config: model.head.cfg,
        num_layers: model.head.num_layers,
        train_config: checkpoint.train_config.clone(),
        epoch: checkpoint.epoch,
        rng: checkpoint.rng,
        encoder: source,
    };
    let doc_path = dir.join(CHECKPOINT_FILE);
    let json = serde_json::to_string_pretty(&doc)
        .map_err(|e| PipelineError::InvalidConfig(format!("checkpoint serialization: {e}")))?;
    std::fs::write(&doc_path, json)
        .map_err(|e| PipelineError::io(doc_path.display().to_string(), e))?;
    Ok(())
}

/// Reloads a checkpoint directory. When `expected_kind` is given, a head of
/// any other kind is rejected up front (before tensors are touched).
pub fn load_checkpoint(dir: &Path, expected_kind: Option<HeadKind>) -> Result<Checkpoint> {
    let doc_path = dir.join(CHECKPOINT_FILE);
    let json = std::fs::read_to_string(&doc_path)
        .map_err(|e| PipelineError::io(doc_path.display().to_string(), e))?;
    let doc: CheckpointDoc = serde_json::from_str(&json).map_err(|e| {
        PipelineError::InvalidConfig(format!("{}: bad checkpoint document: {e}", doc_path.display()))
    })?;
    if doc.version != CHECKPOINT_VERSION {
        return Err(PipelineError::VersionMismatch {
            found: format!("checkpoint format {}", doc.version),
            expected: format!("checkpoint format {CHECKPOINT_VERSION}"),
        });
    }
    if let Some(kind) = expected_kind {
        if doc.head_config.kind != kind {
            return Err(PipelineError::VersionMismatch {
                found: format!("{} head", doc.head_config.kind.name()),
                expected: format!("{} head", kind.name()),
            });
        }
    }
    let scheme = LabelScheme::from_name(&doc.scheme)?;

    let vocab = Vocabulary::from_file(&dir.join(VOCAB_FILE))?;

    let head_dir = dir.join(HEAD_DIR);
    let (head_params, _) = read_archive(&head_dir)?;
    let head = Head::from_parts(
        &doc.head_config,
        doc.num_layers,
        head_params,
        &head_dir.display().to_string(),
    )?;

    let (encoder, provenance) = match &doc.encoder {
        EncoderSource::Inline { config } => {
            let enc_dir = dir.join(ENCODER_DIR);
            let (params, _) = read_archive(&enc_dir)?;
            let enc = Transformer::from_parts(*config, params, &enc_dir.display().to_string())?;
            (enc, EncoderProvenance::Opaque)
        }
        EncoderSource::MiniConfig { config } => (
            Transformer::build_mini(*config)?,
            EncoderProvenance::Mini(*config),
        ),
        EncoderSource::Archive {
            weights_dir,
            vocab_path,
        } => {
            let weights_dir = PathBuf::from(weights_dir);
            let vocab_path = PathBuf::from(vocab_path);
            let (enc, _) = load_pretrained(&weights_dir, &vocab_path)?;
            (
                enc,
                EncoderProvenance::Archive {
                    weights_dir,
                    vocab_path,
                },
            )
        }
    };
    if encoder.cfg.num_layers != doc.num_layers {
        return Err(PipelineError::ShapeMismatch {
            what: "checkpoint layer count".to_string(),
            expected: format!("{}", doc.num_layers),
            actual: format!("{}", encoder.cfg.num_layers),
        });
    }

    Ok(Checkpoint {
        scheme,
        train_config: doc.train_config,
        epoch: doc.epoch,
        rng: doc.rng,
        model: Model {
            encoder,
            vocab,
            head,
            provenance,
        },
    })
}
