//! Command-line entry point: prep, split, train, and eval subcommands over
//! a JSON run config, with flag overrides and JSON-per-line logging.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::corpus::{
    load_davidson, load_waseem, merge_corpora, stratified_split, ColumnMap, Corpus, LabelScheme,
    SplitSpec, WaseemVariant, SPLIT_NAMES,
};
use crate::encoder::{load_pretrained, EncoderConfig, Precision, Transformer, Vocabulary};
use crate::error::{PipelineError, Result};
use crate::eval_report::{confusion, error_table, metrics, render_report};
use crate::heads::{ClassProbs, Head, HeadConfig, HeadKind};
use crate::text_prep::{normalize, Lexicon, NormalizerConfig, Placeholders};
use crate::trainer::{
    evaluate, load_checkpoint, save_checkpoint, train, EncoderProvenance, Model, TrainConfig,
};

const MINI_VOCAB_CAP: usize = 5000;
const DEFAULT_SEED: u64 = 1;
const DEFAULT_LIMIT_ERRORS: usize = 20;

/// Normalizer knobs in JSON form; builds a [`NormalizerConfig`] with either
/// the embedded word-frequency lexicon or one loaded from a file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalizerSettings {
    pub run_threshold: usize,
    pub lowercase: bool,
    pub placeholders: Placeholders,
    pub lexicon_path: Option<PathBuf>,
}

impl Default for NormalizerSettings {
    fn default() -> Self {
        NormalizerSettings {
            run_threshold: 3,
            lowercase: true,
            placeholders: Placeholders::default(),
            lexicon_path: None,
        }
    }
}

impl NormalizerSettings {
    pub fn build(&self) -> Result<NormalizerConfig> {
        let lexicon = match &self.lexicon_path {
            Some(p) => Lexicon::from_file(p)?,
            None => Lexicon::embedded(),
        };
        NormalizerConfig::new(
            self.placeholders.clone(),
            self.run_threshold,
            self.lowercase,
            lexicon,
        )
    }
}

/// Input file locations; which ones are required depends on dataset/backend.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub waseem_hovy: Option<PathBuf>,
    pub waseem_2016: Option<PathBuf>,
    pub davidson: Option<PathBuf>,
    /// Pretrained encoder archive directory (manifest.json + tensors.bin).
    pub weights_dir: Option<PathBuf>,
    /// Vocabulary file for the pretrained encoder.
    pub vocab: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    /// Small randomly initialized encoder; vocabulary built from the corpus.
    Mini,
    /// Full-scale encoder loaded from a weights archive.
    Pretrained,
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::Mini => "mini",
            Backend::Pretrained => "pretrained",
        }
    }

    fn from_name(name: &str) -> Result<Self> {
        match name {
            "mini" => Ok(Backend::Mini),
            "pretrained" => Ok(Backend::Pretrained),
            other => Err(PipelineError::InvalidConfig(format!(
                "unknown backend {other:?} (expected mini or pretrained)"
            ))),
        }
    }
}

/// Partial head settings; unset fields fall back to [`HeadConfig`] defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeadPatch {
    pub kind: Option<String>,
    pub mlp_hidden: Option<usize>,
    pub leaky_slope: Option<f64>,
    pub lstm_hidden: Option<usize>,
    pub cnn_filters: Option<usize>,
    pub cnn_window: Option<usize>,
    pub cnn_relu: Option<bool>,
    pub dropout_p: Option<f64>,
    pub seed: Option<u64>,
}

/// Partial training settings; unset fields fall back to [`TrainConfig`]
/// defaults (seed falls back to the run default).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainPatch {
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub dropout_p: Option<f64>,
    pub seed: Option<u64>,
    pub freeze_encoder: Option<bool>,
    pub max_len: Option<usize>,
    pub warmup_steps: Option<usize>,
    pub grad_clip: Option<f64>,
    pub select_best: Option<bool>,
}

/// The JSON run config. Every field is optional; CLI flags override file
/// values, and [`RunConfig::resolve`] fills the remaining defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: Option<String>,
    pub backend: Option<String>,
    pub paths: DataPaths,
    pub columns: Option<ColumnMap>,
    pub normalizer: NormalizerSettings,
    pub head: HeadPatch,
    pub train: TrainPatch,
    pub split_seed: Option<u64>,
    pub split_ratios: Option<(f64, f64, f64)>,
    pub out_dir: Option<PathBuf>,
    pub limit_errors: Option<usize>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let src = fs::read_to_string(path)
            .map_err(|e| PipelineError::io(path.display().to_string(), e))?;
        serde_json::from_str(&src).map_err(|e| {
            PipelineError::InvalidConfig(format!("{}: bad run config: {e}", path.display()))
        })
    }

    /// Fills defaults and derives the dependent values (scheme class count,
    /// encoder geometry per backend). Validation that needs the filesystem
    /// happens per command via the `validate_for_*` methods.
    pub fn resolve(&self) -> Result<Resolved> {
        let dataset = self.dataset.as_deref().unwrap_or("waseem");
        let scheme = LabelScheme::from_name(dataset)?;
        let backend = match self.backend.as_deref() {
            Some(b) => Backend::from_name(b)?,
            None => Backend::Mini,
        };
        let columns = self.columns.clone().unwrap_or_else(|| match scheme {
            LabelScheme::Waseem => ColumnMap::waseem(),
            LabelScheme::Davidson => ColumnMap::davidson(),
        });

        let t = &self.train;
        let train_seed = t.seed.unwrap_or(DEFAULT_SEED);
        let mut train = TrainConfig::new(train_seed);
        if let Some(v) = t.batch_size {
            train.batch_size = v;
        }
        if let Some(v) = t.epochs {
            train.epochs = v;
        }
        if let Some(v) = t.learning_rate {
            train.learning_rate = v;
        }
        if let Some(v) = t.dropout_p {
            train.dropout_p = v;
        }
        if let Some(v) = t.freeze_encoder {
            train.freeze_encoder = v;
        }
        if let Some(v) = t.max_len {
            train.max_len = v;
        }
        if let Some(v) = t.warmup_steps {
            train.warmup_steps = v;
        }
        if t.grad_clip.is_some() {
            train.grad_clip = t.grad_clip;
        }
        if let Some(v) = t.select_best {
            train.select_best = v;
        }

        // Encoder geometry is fixed per backend, so the head can be resolved
        // before any weights are touched.
        let geometry = match backend {
            Backend::Mini => EncoderConfig::mini(0, 0),
            Backend::Pretrained => EncoderConfig::base(0, 0),
        };
        let h = &self.head;
        let kind = match h.kind.as_deref() {
            Some(k) => HeadKind::from_name(k)?,
            None => HeadKind::Linear,
        };
        let mut head = HeadConfig::new(
            kind,
            scheme.num_classes(),
            geometry.hidden_size,
            h.seed.unwrap_or_else(|| train_seed.wrapping_add(1)),
        );
        head.dropout_p = h.dropout_p.unwrap_or(train.dropout_p);
        if let Some(v) = h.mlp_hidden {
            head.mlp_hidden = v;
        }
        if let Some(v) = h.leaky_slope {
            head.leaky_slope = v;
        }
        if let Some(v) = h.lstm_hidden {
            head.lstm_hidden = v;
        }
        if let Some(v) = h.cnn_filters {
            head.cnn_filters = v;
        }
        if let Some(v) = h.cnn_window {
            head.cnn_window = v;
        }
        if let Some(v) = h.cnn_relu {
            head.cnn_relu = v;
        }

        let resolved = Resolved {
            dataset: dataset.to_string(),
            scheme,
            backend,
            encoder_layers: geometry.num_layers,
            paths: self.paths.clone(),
            columns,
            normalizer: self.normalizer.clone(),
            head,
            train,
            split_seed: self.split_seed.unwrap_or(DEFAULT_SEED),
            split_ratios: self.split_ratios.unwrap_or((0.8, 0.1, 0.1)),
            out_dir: self.out_dir.clone().unwrap_or_else(|| PathBuf::from("out")),
            limit_errors: self.limit_errors.unwrap_or(DEFAULT_LIMIT_ERRORS),
        };
        resolved.head.validate()?;
        resolved.train.validate()?;
        SplitSpec {
            ratios: resolved.split_ratios,
            seed: resolved.split_seed,
        }
        .validate()?;
        Ok(resolved)
    }
}

/// Fully resolved configuration; echoed into the output directory as
/// `resolved_config.json` so every artifact records how it was produced.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub dataset: String,
    pub scheme: LabelScheme,
    pub backend: Backend,
    pub encoder_layers: usize,
    pub paths: DataPaths,
    pub columns: ColumnMap,
    pub normalizer: NormalizerSettings,
    pub head: HeadConfig,
    pub train: TrainConfig,
    pub split_seed: u64,
    pub split_ratios: (f64, f64, f64),
    pub out_dir: PathBuf,
    pub limit_errors: usize,
}

fn require_exists(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(PipelineError::InvalidConfig(format!(
            "{what} path {} does not exist",
            path.display()
        )))
    }
}

impl Resolved {
    /// Checks that every input file the chosen dataset needs is present.
    pub fn validate_dataset_paths(&self) -> Result<()> {
        match self.scheme {
            LabelScheme::Waseem => {
                if self.paths.waseem_hovy.is_none() && self.paths.waseem_2016.is_none() {
                    return Err(PipelineError::InvalidConfig(
                        "waseem dataset needs paths.waseem_hovy and/or paths.waseem_2016"
                            .to_string(),
                    ));
                }
                if let Some(p) = &self.paths.waseem_hovy {
                    require_exists(p, "waseem_hovy")?;
                }
                if let Some(p) = &self.paths.waseem_2016 {
                    require_exists(p, "waseem_2016")?;
                }
            }
            LabelScheme::Davidson => {
                let p = self.paths.davidson.as_ref().ok_or_else(|| {
                    PipelineError::InvalidConfig(
                        "davidson dataset needs paths.davidson".to_string(),
                    )
                })?;
                require_exists(p, "davidson")?;
            }
        }
        if let Some(p) = &self.normalizer.lexicon_path {
            require_exists(p, "lexicon")?;
        }
        Ok(())
    }

    pub fn validate_backend_paths(&self) -> Result<()> {
        if self.backend == Backend::Pretrained {
            let wd = self.paths.weights_dir.as_ref().ok_or_else(|| {
                PipelineError::InvalidConfig(
                    "pretrained backend needs paths.weights_dir".to_string(),
                )
            })?;
            require_exists(wd, "weights_dir")?;
            let vp = self.paths.vocab.as_ref().ok_or_else(|| {
                PipelineError::InvalidConfig("pretrained backend needs paths.vocab".to_string())
            })?;
            require_exists(vp, "vocab")?;
        }
        Ok(())
    }

    fn write_echo(&self) -> Result<()> {
        fs::create_dir_all(&self.out_dir)
            .map_err(|e| PipelineError::io(self.out_dir.display().to_string(), e))?;
        let path = self.out_dir.join("resolved_config.json");
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| PipelineError::InvalidConfig(format!("config echo: {e}")))?;
        fs::write(&path, json + "\n").map_err(|e| PipelineError::io(path.display().to_string(), e))
    }
}

/// Loads (and for Waseem, merges) the configured corpus.
pub fn load_corpus(r: &Resolved) -> Result<Corpus> {
    let normalizer = r.normalizer.build()?;
    match r.scheme {
        LabelScheme::Waseem => {
            let hovy = r
                .paths
                .waseem_hovy
                .as_ref()
                .map(|p| load_waseem(p, WaseemVariant::Hovy16, &r.columns, &normalizer))
                .transpose()?;
            let w2016 = r
                .paths
                .waseem_2016
                .as_ref()
                .map(|p| load_waseem(p, WaseemVariant::Waseem16, &r.columns, &normalizer))
                .transpose()?;
            match (hovy, w2016) {
                (Some((a, a_stats)), Some((b, b_stats))) => {
                    let (merged, stats) = merge_corpora(&a, &b)?;
                    log_event(serde_json::json!({
                        "event": "loaded",
                        "dataset": "waseem",
                        "rows": merged.len(),
                        "hovy16": a_stats,
                        "waseem16": b_stats,
                        "merge": stats,
                    }));
                    Ok(merged)
                }
                (Some((a, stats)), None) => {
                    log_event(serde_json::json!({
                        "event": "loaded", "dataset": "waseem", "rows": a.len(), "hovy16": stats,
                    }));
                    Ok(a)
                }
                (None, Some((b, stats))) => {
                    log_event(serde_json::json!({
                        "event": "loaded", "dataset": "waseem", "rows": b.len(), "waseem16": stats,
                    }));
                    Ok(b)
                }
                (None, None) => Err(PipelineError::InvalidConfig(
                    "waseem dataset needs paths.waseem_hovy and/or paths.waseem_2016".to_string(),
                )),
            }
        }
        LabelScheme::Davidson => {
            let path = r.paths.davidson.as_ref().ok_or_else(|| {
                PipelineError::InvalidConfig("davidson dataset needs paths.davidson".to_string())
            })?;
            let (corpus, stats) = load_davidson(path, &r.columns, &normalizer)?;
            log_event(serde_json::json!({
                "event": "loaded", "dataset": "davidson", "rows": corpus.len(), "stats": stats,
            }));
            Ok(corpus)
        }
    }
}

fn log_event(value: serde_json::Value) {
    println!("{value}");
}

fn title(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().collect::<String>() + chars.as_str(),
        None => String::new(),
    }
}

/// Class-distribution table: one row per split plus totals, one column per
/// class plus a row-total column.
pub fn format_distribution_table(
    scheme: LabelScheme,
    counts: [&[usize]; 3],
) -> String {
    let labels = scheme.classes();
    let mut out = String::new();
    out.push_str(&format!("{:<12}", ""));
    for l in labels {
        out.push_str(&format!("{:>12}", title(l)));
    }
    out.push_str(&format!("{:>12}\n", "Total"));
    let mut class_totals = vec![0usize; labels.len()];
    for (name, row) in SPLIT_NAMES.iter().zip(counts) {
        out.push_str(&format!("{:<12}", title(name)));
        for (i, &c) in row.iter().enumerate() {
            class_totals[i] += c;
            out.push_str(&format!("{c:>12}"));
        }
        out.push_str(&format!("{:>12}\n", row.iter().sum::<usize>()));
    }
    out.push_str(&format!("{:<12}", "Total"));
    for c in &class_totals {
        out.push_str(&format!("{c:>12}"));
    }
    out.push('\n');
    out
}

/// Normalizes the text column of a CSV, copying every other column through
/// untouched. Returns the number of data rows written.
pub fn cmd_prep(
    input: &Path,
    output: &Path,
    text_col: &str,
    normalizer: &NormalizerConfig,
) -> Result<usize> {
    let display = input.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(input)
        .map_err(|e| PipelineError::io(display.clone(), std::io::Error::other(e.to_string())))?;
    let headers = reader
        .headers()
        .map_err(|e| PipelineError::MalformedRow {
            path: display.clone(),
            row: 1,
            detail: e.to_string(),
        })?
        .clone();
    let text_idx = headers
        .iter()
        .position(|h| h == text_col)
        .ok_or_else(|| PipelineError::MalformedRow {
            path: display.clone(),
            row: 1,
            detail: format!(
                "header has no {text_col:?} column (found {:?})",
                headers.iter().collect::<Vec<_>>()
            ),
        })?;

    let mut writer = csv::Writer::from_path(output)
        .map_err(|e| PipelineError::io(output.display().to_string(), std::io::Error::other(e.to_string())))?;
    let write_err =
        |e: csv::Error| PipelineError::io(output.display().to_string(), std::io::Error::other(e.to_string()));
    writer.write_record(&headers).map_err(write_err)?;

    let mut rows = 0usize;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let row = e.position().map(|p| p.line() as usize).unwrap_or(rows + 2);
            PipelineError::MalformedRow {
                path: display.clone(),
                row,
                detail: e.to_string(),
            }
        })?;
        let mut fields: Vec<String> = record.iter().map(str::to_string).collect();
        fields[text_idx] = normalize(&fields[text_idx], normalizer).text;
        writer.write_record(&fields).map_err(write_err)?;
        rows += 1;
    }
    writer
        .flush()
        .map_err(|e| PipelineError::io(output.display().to_string(), e))?;
    Ok(rows)
}

/// Splits the configured corpus and writes one manifest CSV per split, plus
/// the resolved config; prints the class-distribution table.
pub fn cmd_split(r: &Resolved) -> Result<()> {
    r.validate_dataset_paths()?;
    r.write_echo()?;
    let corpus = load_corpus(r)?;
    let spec = SplitSpec {
        ratios: r.split_ratios,
        seed: r.split_seed,
    };
    let (train_c, val_c, test_c) = stratified_split(&corpus, &spec)?;

    let empty = Corpus {
        scheme: corpus.scheme,
        records: Vec::new(),
    };
    let parts = [&train_c, &val_c, &test_c];
    for (i, name) in SPLIT_NAMES.iter().enumerate() {
        let path = r.out_dir.join(format!("{name}_manifest.csv"));
        let mut buf = Vec::new();
        let slot = |j: usize| if i == j { parts[i] } else { &empty };
        crate::corpus::write_split_manifest(&mut buf, slot(0), slot(1), slot(2))?;
        fs::write(&path, buf).map_err(|e| PipelineError::io(path.display().to_string(), e))?;
    }

    print!(
        "{}",
        format_distribution_table(
            corpus.scheme,
            [
                &train_c.class_counts(),
                &val_c.class_counts(),
                &test_c.class_counts()
            ]
        )
    );
    log_event(serde_json::json!({
        "event": "split",
        "seed": r.split_seed,
        "ratios": r.split_ratios,
        "train": train_c.class_counts(),
        "validation": val_c.class_counts(),
        "test": test_c.class_counts(),
    }));
    Ok(())
}

fn build_model(r: &Resolved, train_c: &Corpus) -> Result<Model> {
    match r.backend {
        Backend::Mini => {
            let atomic = r.normalizer.placeholders.all();
            let vocab = Vocabulary::build_from_texts(
                train_c.records.iter().map(|rec| rec.normalized_text.as_str()),
                &atomic,
                Some(MINI_VOCAB_CAP),
            );
            let mut cfg = EncoderConfig::mini(vocab.len(), r.train.seed);
            cfg.max_len = r.train.max_len;
            let encoder = Transformer::build_mini(cfg)?;
            let head = Head::new(&r.head, cfg.num_layers)?;
            Ok(Model {
                encoder,
                vocab,
                head,
                provenance: EncoderProvenance::Mini(cfg),
            })
        }
        Backend::Pretrained => {
            let weights_dir = r.paths.weights_dir.clone().ok_or_else(|| {
                PipelineError::InvalidConfig(
                    "pretrained backend needs paths.weights_dir".to_string(),
                )
            })?;
            let vocab_path = r.paths.vocab.clone().ok_or_else(|| {
                PipelineError::InvalidConfig("pretrained backend needs paths.vocab".to_string())
            })?;
            let (encoder, vocab) = load_pretrained(&weights_dir, &vocab_path)?;
            let head = Head::new(&r.head, encoder.cfg.num_layers)?;
            Ok(Model {
                encoder,
                vocab,
                head,
                provenance: EncoderProvenance::Archive {
                    weights_dir,
                    vocab_path,
                },
            })
        }
    }
}

/// Splits the corpus, fine-tunes on the train portion with per-epoch
/// validation, and writes `checkpoint/` + `history.csv` to the output dir.
pub fn cmd_train(r: &Resolved) -> Result<()> {
    r.validate_dataset_paths()?;
    r.validate_backend_paths()?;
    r.write_echo()?;
    let corpus = load_corpus(r)?;
    let spec = SplitSpec {
        ratios: r.split_ratios,
        seed: r.split_seed,
    };
    let (train_c, val_c, _test_c) = stratified_split(&corpus, &spec)?;
    let model = build_model(r, &train_c)?;
    log_event(serde_json::json!({
        "event": "train_start",
        "backend": r.backend.name(),
        "head": r.head.kind.name(),
        "train_examples": train_c.len(),
        "validation_examples": val_c.len(),
        "parameters": model.encoder.params.len() + model.head.params.len(),
    }));

    let (checkpoint, history) = train(model, &train_c, &val_c, &r.train, |rec| {
        log_event(serde_json::json!({
            "event": "epoch",
            "epoch": rec.epoch,
            "train_loss": rec.train_loss,
            "val_loss": rec.val_loss,
            "val_f1": rec.val_f1,
            "wall_secs": rec.wall_secs,
        }));
    })?;

    let ckpt_dir = r.out_dir.join("checkpoint");
    save_checkpoint(&checkpoint, &ckpt_dir)?;
    let history_path = r.out_dir.join("history.csv");
    let mut buf = Vec::new();
    history.write_csv(&mut buf)?;
    fs::write(&history_path, buf)
        .map_err(|e| PipelineError::io(history_path.display().to_string(), e))?;

    log_event(serde_json::json!({
        "event": "train_done",
        "checkpoint": ckpt_dir.display().to_string(),
        "history": history_path.display().to_string(),
        "final_epoch": checkpoint.epoch,
    }));
    Ok(())
}

/// Loads a checkpoint, runs inference over every record named by the split
/// manifest, and writes the metrics/confusion/error report bundle.
pub fn cmd_eval(
    r: &Resolved,
    checkpoint_dir: &Path,
    manifest: &Path,
    expected_kind: Option<HeadKind>,
) -> Result<()> {
    r.validate_dataset_paths()?;
    require_exists(checkpoint_dir, "checkpoint")?;
    require_exists(manifest, "manifest")?;
    let checkpoint = load_checkpoint(checkpoint_dir, expected_kind)?;
    if checkpoint.scheme != r.scheme {
        return Err(PipelineError::SchemeMismatch {
            left: checkpoint.scheme.name().to_string(),
            right: r.scheme.name().to_string(),
        });
    }
    r.write_echo()?;
    let corpus = load_corpus(r)?;
    let (a, b, c) = crate::corpus::apply_split_manifest(&corpus, manifest)?;
    let eval_c = Corpus {
        scheme: corpus.scheme,
        records: a
            .records
            .into_iter()
            .chain(b.records)
            .chain(c.records)
            .collect(),
    };
    if eval_c.is_empty() {
        return Err(PipelineError::EmptyInput(format!(
            "manifest {} selected no records",
            manifest.display()
        )));
    }

    let precision = Precision::from_env()?;
    let out = evaluate(
        &checkpoint.model,
        &eval_c,
        checkpoint.train_config.max_len,
        precision,
    )?;
    let golds: Vec<usize> = eval_c.records.iter().map(|rec| rec.label).collect();
    let report = metrics(&out.preds, &golds, eval_c.scheme)?;
    let matrix = confusion(&out.preds, &golds, eval_c.scheme)?;
    let probs: Vec<ClassProbs> = out
        .probs
        .iter()
        .map(|p| ClassProbs { probs: p.clone() })
        .collect();
    let errors = error_table(&eval_c, &out.preds, &probs, r.limit_errors)?;
    render_report(&report, &matrix, &errors, &r.out_dir)?;

    log_event(serde_json::json!({
        "event": "eval",
        "records": eval_c.len(),
        "mean_loss": out.mean_loss,
        "accuracy": report.accuracy,
        "weighted_f1": report.weighted_f1,
        "errors_reported": errors.len(),
        "out_dir": r.out_dir.display().to_string(),
    }));
    Ok(())
}

fn parse_dataset(s: &str) -> std::result::Result<LabelScheme, String> {
    LabelScheme::from_name(s).map_err(|e| e.to_string())
}

fn parse_head(s: &str) -> std::result::Result<HeadKind, String> {
    HeadKind::from_name(s).map_err(|e| e.to_string())
}

fn parse_ratios(s: &str) -> std::result::Result<(f64, f64, f64), String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated ratios, got {s:?}"));
    }
    let mut vals = [0.0; 3];
    for (v, p) in vals.iter_mut().zip(&parts) {
        *v = p
            .trim()
            .parse::<f64>()
            .map_err(|e| format!("bad ratio {p:?}: {e}"))?;
    }
    Ok((vals[0], vals[1], vals[2]))
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// JSON run config; flags override its values.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Corpus family: waseem or davidson.
    #[arg(long, value_parser = parse_dataset)]
    dataset: Option<LabelScheme>,
    /// Output directory for artifacts.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Waseem expert-annotated CSV path.
    #[arg(long, value_name = "FILE")]
    waseem_hovy: Option<PathBuf>,
    /// Waseem expert+amateur CSV path.
    #[arg(long, value_name = "FILE")]
    waseem_2016: Option<PathBuf>,
    /// Davidson CSV path.
    #[arg(long, value_name = "FILE")]
    davidson: Option<PathBuf>,
}

impl CommonArgs {
    fn apply(&self, rc: &mut RunConfig) {
        if let Some(d) = self.dataset {
            rc.dataset = Some(d.name().to_string());
        }
        if let Some(o) = &self.out {
            rc.out_dir = Some(o.clone());
        }
        if let Some(p) = &self.waseem_hovy {
            rc.paths.waseem_hovy = Some(p.clone());
        }
        if let Some(p) = &self.waseem_2016 {
            rc.paths.waseem_2016 = Some(p.clone());
        }
        if let Some(p) = &self.davidson {
            rc.paths.davidson = Some(p.clone());
        }
    }

    fn run_config(&self) -> Result<RunConfig> {
        let mut rc = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        self.apply(&mut rc);
        Ok(rc)
    }
}

#[derive(Debug, Args)]
struct PrepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Input CSV.
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// Output CSV (defaults to <out dir>/prepped.csv).
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
    /// Text column name; defaults to the dataset's layout.
    #[arg(long)]
    text_col: Option<String>,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Split seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Train,validation,test ratios (must sum to 1), e.g. 0.8,0.1,0.1.
    #[arg(long, value_parser = parse_ratios)]
    ratios: Option<(f64, f64, f64)>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Encoder backend.
    #[arg(long, value_enum)]
    backend: Option<Backend>,
    /// Classification head: linear, mlp, bilstm, or cnn.
    #[arg(long, value_parser = parse_head)]
    head: Option<HeadKind>,
    /// Training seed (shuffling, dropout, initialization).
    #[arg(long)]
    seed: Option<u64>,
    /// Seed for the train/validation/test split.
    #[arg(long)]
    split_seed: Option<u64>,
    /// Train only the head; encoder parameters stay fixed.
    #[arg(long)]
    freeze_encoder: bool,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    max_len: Option<usize>,
    /// Training-time dropout probability.
    #[arg(long)]
    dropout: Option<f64>,
    /// Pretrained encoder archive directory.
    #[arg(long, value_name = "DIR")]
    weights_dir: Option<PathBuf>,
    /// Pretrained encoder vocabulary file.
    #[arg(long, value_name = "FILE")]
    vocab: Option<PathBuf>,
    /// Keep the best-validation-F1 epoch instead of the last.
    #[arg(long)]
    select_best: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Checkpoint directory produced by `train`.
    #[arg(long, value_name = "DIR")]
    checkpoint: PathBuf,
    /// Split manifest CSV naming the records to evaluate.
    #[arg(long, value_name = "FILE")]
    manifest: PathBuf,
    /// Require the checkpoint's head to be this kind.
    #[arg(long, value_parser = parse_head)]
    head: Option<HeadKind>,
    /// Maximum rows in the misclassification table.
    #[arg(long, value_name = "N")]
    limit_errors: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Normalize the text column of a CSV, preserving all other columns.
    Prep(PrepArgs),
    /// Stratified train/validation/test split with manifest CSVs.
    Split(SplitArgs),
    /// Fine-tune an encoder + classification head.
    Train(TrainArgs),
    /// Evaluate a checkpoint over a manifest and write the report bundle.
    Eval(EvalArgs),
}

#[derive(Debug, Parser)]
#[command(
    name = "hatecls",
    version,
    about = "Fine-tuning pipeline for 3-class social-media text classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prep(args) => {
            let rc = args.common.run_config()?;
            let r = rc.resolve()?;
            require_exists(&args.input, "input")?;
            let text_col = args
                .text_col
                .clone()
                .unwrap_or_else(|| r.columns.text_col.clone());
            let output = match &args.output {
                Some(p) => p.clone(),
                None => {
                    fs::create_dir_all(&r.out_dir)
                        .map_err(|e| PipelineError::io(r.out_dir.display().to_string(), e))?;
                    r.out_dir.join("prepped.csv")
                }
            };
            let normalizer = r.normalizer.build()?;
            let rows = cmd_prep(&args.input, &output, &text_col, &normalizer)?;
            log_event(serde_json::json!({
                "event": "prep",
                "rows": rows,
                "output": output.display().to_string(),
            }));
            Ok(())
        }
        Command::Split(args) => {
            let mut rc = args.common.run_config()?;
            if let Some(s) = args.seed {
                rc.split_seed = Some(s);
            }
            if let Some(rt) = args.ratios {
                rc.split_ratios = Some(rt);
            }
            cmd_split(&rc.resolve()?)
        }
        Command::Train(args) => {
            let mut rc = args.common.run_config()?;
            if let Some(b) = args.backend {
                rc.backend = Some(b.name().to_string());
            }
            if let Some(h) = args.head {
                rc.head.kind = Some(h.name().to_string());
            }
            if let Some(s) = args.seed {
                rc.train.seed = Some(s);
            }
            if let Some(s) = args.split_seed {
                rc.split_seed = Some(s);
            }
            if args.freeze_encoder {
                rc.train.freeze_encoder = Some(true);
            }
            if let Some(v) = args.epochs {
                rc.train.epochs = Some(v);
            }
            if let Some(v) = args.batch_size {
                rc.train.batch_size = Some(v);
            }
            if let Some(v) = args.learning_rate {
                rc.train.learning_rate = Some(v);
            }
            if let Some(v) = args.max_len {
                rc.train.max_len = Some(v);
            }
            if let Some(v) = args.dropout {
                rc.train.dropout_p = Some(v);
            }
            if let Some(p) = &args.weights_dir {
                rc.paths.weights_dir = Some(p.clone());
            }
            if let Some(p) = &args.vocab {
                rc.paths.vocab = Some(p.clone());
            }
            if args.select_best {
                rc.train.select_best = Some(true);
            }
            cmd_train(&rc.resolve()?)
        }
        Command::Eval(args) => {
            let mut rc = args.common.run_config()?;
            if let Some(n) = args.limit_errors {
                rc.limit_errors = Some(n);
            }
            let r = rc.resolve()?;
            cmd_eval(&r, &args.checkpoint, &args.manifest, args.head)
        }
    }
}

/// Parses argv and runs one command. Pipeline failures print a single JSON
/// error object to stderr and exit nonzero; argument errors keep clap's
/// usage output.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!(
                "{}",
                serde_json::json!({ "error": { "code": e.code(), "message": e.to_string() } })
            );
            ExitCode::FAILURE
        }
    }
}
