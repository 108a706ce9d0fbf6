//! Dataset ingestion: CSV loaders for the two tweet corpora, corpus merging,
//! class statistics, and the seeded stratified train/validation/test split.

use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};
use crate::text_prep::{normalize, NormalizerConfig};

/// The two 3-class labelling schemes. Class order is fixed: it defines the
/// axis order of every confusion matrix and per-class report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelScheme {
    Waseem,
    Davidson,
}

impl LabelScheme {
    pub fn name(self) -> &'static str {
        match self {
            LabelScheme::Waseem => "waseem",
            LabelScheme::Davidson => "davidson",
        }
    }

    pub fn classes(self) -> [&'static str; 3] {
        match self {
            LabelScheme::Waseem => ["racism", "sexism", "neither"],
            LabelScheme::Davidson => ["hate", "offensive", "neither"],
        }
    }

    pub fn num_classes(self) -> usize {
        3
    }

    pub fn class_index(self, label: &str) -> Option<usize> {
        self.classes().iter().position(|c| *c == label)
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "waseem" => Ok(LabelScheme::Waseem),
            "davidson" => Ok(LabelScheme::Davidson),
            other => Err(PipelineError::InvalidConfig(format!(
                "unknown label scheme {other:?} (expected waseem or davidson)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TweetRecord {
    pub id: String,
    pub raw_text: String,
    pub normalized_text: String,
    /// Index into the owning corpus's `scheme.classes()`.
    pub label: usize,
    /// Which source file family the record came from.
    pub source: String,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub scheme: LabelScheme,
    pub records: Vec<TweetRecord>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.scheme.num_classes()];
        for r in &self.records {
            counts[r.label] += 1;
        }
        counts
    }
}

/// Column-name configuration for the CSV loaders. When `id_col` is absent,
/// ids are synthesized as the 0-based data-row index.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    pub id_col: Option<String>,
    pub text_col: String,
    pub label_col: String,
    pub class_code_col: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            id_col: None,
            text_col: "text".into(),
            label_col: "label".into(),
            class_code_col: "class".into(),
        }
    }
}

impl ColumnMap {
    /// Defaults matching the published merged-Waseem CSV layout.
    pub fn waseem() -> Self {
        ColumnMap::default()
    }

    /// Defaults matching the published Davidson CSV layout.
    pub fn davidson() -> Self {
        ColumnMap {
            text_col: "tweet".into(),
            ..ColumnMap::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WaseemVariant {
    Hovy16,
    Waseem16,
}

impl WaseemVariant {
    pub fn name(self) -> &'static str {
        match self {
            WaseemVariant::Hovy16 => "hovy16",
            WaseemVariant::Waseem16 => "waseem16",
        }
    }
}

/// Counters surfaced by the loaders so the CLI can log them.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LoadStats {
    pub rows: usize,
    pub dropped_both: usize,
    pub duplicate_ids: usize,
}

struct CsvSource {
    path: String,
    headers: Vec<String>,
    rows: Vec<(usize, Vec<String>)>,
}

fn read_csv(path: &Path) -> Result<CsvSource> {
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => {
                PipelineError::io(&display, std::io::Error::other(e.to_string()))
            }
            _ => PipelineError::MalformedRow {
                path: display.clone(),
                row: 1,
                detail: e.to_string(),
            },
        })?;
    let headers = reader
        .headers()
        .map_err(|e| PipelineError::MalformedRow {
            path: display.clone(),
            row: 1,
            detail: e.to_string(),
        })?
        .iter()
        .map(|h| h.to_string())
        .collect();
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let row = e
                .position()
                .map(|p| p.line() as usize)
                .unwrap_or(rows.len() + 2);
            PipelineError::MalformedRow {
                path: display.clone(),
                row,
                detail: e.to_string(),
            }
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(rows.len() + 2);
        rows.push((line, rec.iter().map(|f| f.to_string()).collect()));
    }
    if rows.is_empty() {
        return Err(PipelineError::EmptyFile { path: display });
    }
    Ok(CsvSource {
        path: display,
        headers,
        rows,
    })
}

impl CsvSource {
    fn column(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| PipelineError::MalformedRow {
                path: self.path.clone(),
                row: 1,
                detail: format!("header has no {name:?} column (found {:?})", self.headers),
            })
    }

    fn field<'a>(&self, row: &'a (usize, Vec<String>), idx: usize) -> Result<&'a str> {
        row.1.get(idx).map(|s| s.as_str()).ok_or_else(|| {
            PipelineError::MalformedRow {
                path: self.path.clone(),
                row: row.0,
                detail: format!("row has {} fields, need column {}", row.1.len(), idx + 1),
            }
        })
    }
}

/// Pushes a record unless its id was already taken (first occurrence wins).
fn push_unique(
    records: &mut Vec<TweetRecord>,
    seen: &mut HashSet<String>,
    rec: TweetRecord,
    stats: &mut LoadStats,
) {
    if seen.insert(rec.id.clone()) {
        records.push(rec);
    } else {
        stats.duplicate_ids += 1;
    }
}

/// Loads one of the two Waseem-family CSVs. Labels are folded to lowercase;
/// `none` is accepted as an alias for `neither`; `both` rows are dropped and
/// counted in the returned stats.
pub fn load_waseem(
    path: &Path,
    variant: WaseemVariant,
    columns: &ColumnMap,
    normalizer: &NormalizerConfig,
) -> Result<(Corpus, LoadStats)> {
    let src = read_csv(path)?;
    let text_idx = src.column(&columns.text_col)?;
    let label_idx = src.column(&columns.label_col)?;
    let id_idx = columns.id_col.as_deref().map(|c| src.column(c)).transpose()?;

    let scheme = LabelScheme::Waseem;
    let mut stats = LoadStats::default();
    let mut records = Vec::with_capacity(src.rows.len());
    let mut seen = HashSet::new();
    for (i, row) in src.rows.iter().enumerate() {
        stats.rows += 1;
        let raw_label = src.field(row, label_idx)?.trim().to_lowercase();
        if raw_label == "both" {
            stats.dropped_both += 1;
            continue;
        }
        let label = match raw_label.as_str() {
            "none" => 2,
            other => scheme.class_index(other).ok_or_else(|| PipelineError::UnknownLabel {
                path: src.path.clone(),
                row: row.0,
                label: raw_label.clone(),
            })?,
        };
        let raw_text = src.field(row, text_idx)?.to_string();
        let id = match id_idx {
            Some(idx) => src.field(row, idx)?.to_string(),
            None => i.to_string(),
        };
        let rec = TweetRecord {
            id,
            normalized_text: normalize(&raw_text, normalizer).text,
            raw_text,
            label,
            source: variant.name().to_string(),
        };
        push_unique(&mut records, &mut seen, rec, &mut stats);
    }
    Ok((Corpus { scheme, records }, stats))
}

/// Loads the Davidson CSV: numeric class codes 0/1/2 map to
/// hate/offensive/neither.
pub fn load_davidson(
    path: &Path,
    columns: &ColumnMap,
    normalizer: &NormalizerConfig,
) -> Result<(Corpus, LoadStats)> {
    let src = read_csv(path)?;
    let text_idx = src.column(&columns.text_col)?;
    let code_idx = src.column(&columns.class_code_col)?;
    let id_idx = columns.id_col.as_deref().map(|c| src.column(c)).transpose()?;

    let mut stats = LoadStats::default();
    let mut records = Vec::with_capacity(src.rows.len());
    let mut seen = HashSet::new();
    for (i, row) in src.rows.iter().enumerate() {
        stats.rows += 1;
        let code = src.field(row, code_idx)?.trim();
        let label = match code.parse::<i64>() {
            Ok(c @ 0..=2) => c as usize,
            _ => {
                return Err(PipelineError::UnknownLabel {
                    path: src.path.clone(),
                    row: row.0,
                    label: code.to_string(),
                })
            }
        };
        let raw_text = src.field(row, text_idx)?.to_string();
        let id = match id_idx {
            Some(idx) => src.field(row, idx)?.to_string(),
            None => i.to_string(),
        };
        let rec = TweetRecord {
            id,
            normalized_text: normalize(&raw_text, normalizer).text,
            raw_text,
            label,
            source: "davidson".to_string(),
        };
        push_unique(&mut records, &mut seen, rec, &mut stats);
    }
    Ok((
        Corpus {
            scheme: LabelScheme::Davidson,
            records,
        },
        stats,
    ))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct MergeStats {
    pub duplicate_ids: usize,
    pub label_conflicts: usize,
}

/// Merges two corpora under the same scheme. On duplicate ids the first
/// argument's record wins; conflicting labels among duplicates are counted.
pub fn merge_corpora(a: &Corpus, b: &Corpus) -> Result<(Corpus, MergeStats)> {
    if a.scheme != b.scheme {
        return Err(PipelineError::SchemeMismatch {
            left: a.scheme.name().to_string(),
            right: b.scheme.name().to_string(),
        });
    }
    let mut stats = MergeStats::default();
    let mut records = a.records.clone();
    let by_id: HashMap<&str, usize> = a
        .records
        .iter()
        .map(|r| (r.id.as_str(), r.label))
        .collect();
    for rec in &b.records {
        match by_id.get(rec.id.as_str()) {
            Some(&label) => {
                stats.duplicate_ids += 1;
                if label != rec.label {
                    stats.label_conflicts += 1;
                }
            }
            None => records.push(rec.clone()),
        }
    }
    Ok((
        Corpus {
            scheme: a.scheme,
            records,
        },
        stats,
    ))
}

/// Ratios and seed for [`stratified_split`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SplitSpec {
    pub ratios: (f64, f64, f64),
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(seed: u64) -> Self {
        SplitSpec {
            ratios: (0.8, 0.1, 0.1),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b, c) = self.ratios;
        if a <= 0.0 || b <= 0.0 || c <= 0.0 || (a + b + c - 1.0).abs() > 1e-9 {
            return Err(PipelineError::InvalidConfig(format!(
                "split ratios must be positive and sum to 1, got {:?}",
                self.ratios
            )));
        }
        Ok(())
    }
}

// Seed streams: one per class for the in-class shuffles, then one per output
// split for the final re-shuffles. Keeps every shuffle independent of record
// input order (classes are id-sorted first) and of the other shuffles.
const SPLIT_STREAM_BASE: u64 = 1000;

/// Seeded stratified split. Per class: sort by id, shuffle, take
/// floor(ratio·n) for validation and test, remainder to train; each output
/// split is then re-shuffled. The outputs partition the input by id.
pub fn stratified_split(c: &Corpus, spec: &SplitSpec) -> Result<(Corpus, Corpus, Corpus)> {
    spec.validate()?;
    let counts = c.class_counts();
    for (idx, &count) in counts.iter().enumerate() {
        // A class absent from the corpus contributes nothing to any split;
        // only present-but-tiny classes make the ratios meaningless.
        if count > 0 && count < 3 {
            return Err(PipelineError::ClassTooSmall {
                class: c.scheme.classes()[idx].to_string(),
                count,
                min: 3,
            });
        }
    }

    let mut splits: [Vec<&TweetRecord>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for class in 0..c.scheme.num_classes() {
        let mut members: Vec<&TweetRecord> =
            c.records.iter().filter(|r| r.label == class).collect();
        members.sort_by(|x, y| x.id.cmp(&y.id));
        let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
        rng.set_stream(class as u64);
        members.shuffle(&mut rng);

        let n = members.len();
        let n_val = (spec.ratios.1 * n as f64).floor() as usize;
        let n_test = (spec.ratios.2 * n as f64).floor() as usize;
        let n_train = n - n_val - n_test;
        splits[0].extend(&members[..n_train]);
        splits[1].extend(&members[n_train..n_train + n_val]);
        splits[2].extend(&members[n_train + n_val..]);
    }

    let mut out = Vec::with_capacity(3);
    for (i, split) in splits.iter_mut().enumerate() {
        let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
        rng.set_stream(SPLIT_STREAM_BASE + i as u64);
        split.shuffle(&mut rng);
        out.push(Corpus {
            scheme: c.scheme,
            records: split.iter().map(|r| (*r).clone()).collect(),
        });
    }
    let test = out.pop().expect("three splits");
    let validation = out.pop().expect("three splits");
    let train = out.pop().expect("three splits");
    Ok((train, validation, test))
}

pub const SPLIT_NAMES: [&str; 3] = ["train", "validation", "test"];

/// Writes a reproducibility manifest (id, split, label) covering the three
/// splits, in their record order.
pub fn write_split_manifest<W: Write>(
    mut w: W,
    train: &Corpus,
    validation: &Corpus,
    test: &Corpus,
) -> Result<()> {
    let mut csv_w = csv::Writer::from_writer(&mut w);
    let err = |e: csv::Error| PipelineError::io("<manifest>", std::io::Error::other(e.to_string()));
    csv_w.write_record(["id", "split", "label"]).map_err(err)?;
    for (name, corpus) in SPLIT_NAMES.iter().zip([train, validation, test]) {
        for r in &corpus.records {
            csv_w
                .write_record([r.id.as_str(), name, corpus.scheme.classes()[r.label]])
                .map_err(err)?;
        }
    }
    csv_w.flush().map_err(|e| PipelineError::io("<manifest>", e))?;
    Ok(())
}

/// Rebuilds the three splits of `c` from a manifest produced by
/// [`write_split_manifest`], preserving the manifest's order.
pub fn apply_split_manifest(c: &Corpus, path: &Path) -> Result<(Corpus, Corpus, Corpus)> {
    let src = read_csv(path)?;
    let id_idx = src.column("id")?;
    let split_idx = src.column("split")?;
    let label_idx = src.column("label")?;
    let by_id: HashMap<&str, &TweetRecord> =
        c.records.iter().map(|r| (r.id.as_str(), r)).collect();

    let mut splits: [Vec<TweetRecord>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for row in &src.rows {
        let id = src.field(row, id_idx)?;
        let split = src.field(row, split_idx)?;
        let label = src.field(row, label_idx)?;
        let rec = by_id.get(id).ok_or_else(|| PipelineError::MalformedRow {
            path: src.path.clone(),
            row: row.0,
            detail: format!("id {id:?} not present in the corpus"),
        })?;
        if c.scheme.classes()[rec.label] != label {
            return Err(PipelineError::MalformedRow {
                path: src.path.clone(),
                row: row.0,
                detail: format!(
                    "label {label:?} disagrees with corpus label {:?} for id {id:?}",
                    c.scheme.classes()[rec.label]
                ),
            });
        }
        let slot = SPLIT_NAMES
            .iter()
            .position(|s| *s == split)
            .ok_or_else(|| PipelineError::MalformedRow {
                path: src.path.clone(),
                row: row.0,
                detail: format!("unknown split {split:?}"),
            })?;
        splits[slot].push((*rec).clone());
    }
    let [train, validation, test] = splits;
    Ok((
        Corpus { scheme: c.scheme, records: train },
        Corpus { scheme: c.scheme, records: validation },
        Corpus { scheme: c.scheme, records: test },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn norm() -> NormalizerConfig {
        NormalizerConfig::default()
    }

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().expect("temp file");
        f.write_all(content.as_bytes()).expect("write");
        f
    }

    fn dummy_corpus(scheme: LabelScheme, counts: &[usize]) -> Corpus {
        let mut records = Vec::new();
        for (label, &n) in counts.iter().enumerate() {
            for i in 0..n {
                records.push(TweetRecord {
                    id: format!("c{label}-{i:06}"),
                    raw_text: format!("text {label} {i}"),
                    normalized_text: format!("text {label} {i}"),
                    label,
                    source: "test".into(),
                });
            }
        }
        Corpus { scheme, records }
    }

    #[test]
    fn scheme_orders_are_fixed() {
        assert_eq!(LabelScheme::Waseem.classes(), ["racism", "sexism", "neither"]);
        assert_eq!(LabelScheme::Davidson.classes(), ["hate", "offensive", "neither"]);
        assert_eq!(LabelScheme::Waseem.class_index("sexism"), Some(1));
        assert_eq!(LabelScheme::Davidson.class_index("sexism"), None);
    }

    #[test]
    fn loads_waseem_rows_and_drops_both() {
        let f = write_temp(
            "id,text,label\n\
             10,first tweet,racism\n\
             11,second tweet,Sexism\n\
             12,third tweet,none\n\
             13,fourth tweet,Both\n\
             14,fifth tweet,neither\n",
        );
        let cols = ColumnMap {
            id_col: Some("id".into()),
            ..ColumnMap::waseem()
        };
        let (corpus, stats) =
            load_waseem(f.path(), WaseemVariant::Waseem16, &cols, &norm()).unwrap();
        assert_eq!(corpus.len(), 4);
        assert_eq!(corpus.class_counts(), vec![1, 1, 2]);
        assert_eq!(stats.dropped_both, 1);
        assert_eq!(stats.rows, 5);
        assert_eq!(corpus.records[0].id, "10");
        assert_eq!(corpus.records[0].source, "waseem16");
    }

    #[test]
    fn single_row_counts() {
        let f = write_temp("id,text,label\n1,hi,neither\n");
        let cols = ColumnMap {
            id_col: Some("id".into()),
            ..ColumnMap::waseem()
        };
        let (corpus, _) = load_waseem(f.path(), WaseemVariant::Hovy16, &cols, &norm()).unwrap();
        assert_eq!(corpus.len(), 1);
        assert_eq!(corpus.class_counts(), vec![0, 0, 1]);
    }

    #[test]
    fn waseem_rejects_unknown_label() {
        let f = write_temp("id,text,label\n1,hi,weird\n");
        let cols = ColumnMap {
            id_col: Some("id".into()),
            ..ColumnMap::waseem()
        };
        let err = load_waseem(f.path(), WaseemVariant::Hovy16, &cols, &norm()).unwrap_err();
        assert!(matches!(err, PipelineError::UnknownLabel { label, .. } if label == "weird"));
    }

    #[test]
    fn waseem_rejects_empty_file() {
        let f = write_temp("id,text,label\n");
        let err =
            load_waseem(f.path(), WaseemVariant::Hovy16, &ColumnMap::waseem(), &norm())
                .unwrap_err();
        assert!(matches!(err, PipelineError::EmptyFile { .. }));
    }

    #[test]
    fn waseem_synthesizes_ids_and_normalizes() {
        let f = write_temp("text,label\n@you yeeeessss,sexism\n");
        let (corpus, _) =
            load_waseem(f.path(), WaseemVariant::Hovy16, &ColumnMap::waseem(), &norm()).unwrap();
        assert_eq!(corpus.records[0].id, "0");
        assert_eq!(corpus.records[0].raw_text, "@you yeeeessss");
        assert_eq!(corpus.records[0].normalized_text, "<user> yes");
    }

    #[test]
    fn loads_davidson_codes() {
        let f = write_temp(
            "count,class,tweet\n\
             3,0,angry text\n\
             3,1,rude text\n\
             3,2,fine text\n\
             3,1,more rude text\n",
        );
        let (corpus, stats) = load_davidson(f.path(), &ColumnMap::davidson(), &norm()).unwrap();
        assert_eq!(corpus.class_counts(), vec![1, 2, 1]);
        assert_eq!(stats.rows, 4);
        assert_eq!(corpus.records[2].label, 2);
        assert_eq!(corpus.records[0].source, "davidson");
    }

    #[test]
    fn davidson_rejects_out_of_range_code() {
        let f = write_temp("class,tweet\n7,text\n");
        let err = load_davidson(f.path(), &ColumnMap::davidson(), &norm()).unwrap_err();
        assert!(matches!(err, PipelineError::UnknownLabel { label, .. } if label == "7"));
    }

    #[test]
    fn missing_column_is_malformed() {
        let f = write_temp("tweet,label\nhello,racism\n");
        let err =
            load_waseem(f.path(), WaseemVariant::Hovy16, &ColumnMap::waseem(), &norm())
                .unwrap_err();
        assert!(matches!(err, PipelineError::MalformedRow { row: 1, .. }));
    }

    #[test]
    fn merge_with_empty_is_identity() {
        let a = dummy_corpus(LabelScheme::Waseem, &[2, 1, 1]);
        let empty = Corpus {
            scheme: LabelScheme::Waseem,
            records: vec![],
        };
        let (merged, stats) = merge_corpora(&a, &empty).unwrap();
        assert_eq!(merged.records, a.records);
        assert_eq!(stats, MergeStats::default());
    }

    #[test]
    fn merge_first_argument_wins() {
        let mut a = dummy_corpus(LabelScheme::Waseem, &[1, 0, 0]);
        a.records[0].id = "42".into();
        let mut same = a.clone();
        same.records[0].raw_text = "other text".into();
        let (merged, stats) = merge_corpora(&a, &same).unwrap();
        assert_eq!(merged.len(), 1);
        assert_eq!(merged.records[0].raw_text, a.records[0].raw_text);
        assert_eq!(stats, MergeStats { duplicate_ids: 1, label_conflicts: 0 });

        let mut conflicting = a.clone();
        conflicting.records[0].label = 2;
        let (merged, stats) = merge_corpora(&a, &conflicting).unwrap();
        assert_eq!(merged.records[0].label, 0);
        assert_eq!(stats, MergeStats { duplicate_ids: 1, label_conflicts: 1 });
    }

    #[test]
    fn merge_rejects_scheme_mismatch() {
        let a = dummy_corpus(LabelScheme::Waseem, &[1, 1, 1]);
        let b = dummy_corpus(LabelScheme::Davidson, &[1, 1, 1]);
        assert!(matches!(
            merge_corpora(&a, &b).unwrap_err(),
            PipelineError::SchemeMismatch { .. }
        ));
    }

    #[test]
    fn split_sizes_follow_floor_rule() {
        let c = dummy_corpus(LabelScheme::Waseem, &[10, 30, 5]);
        let (train, val, test) = stratified_split(&c, &SplitSpec::new(7)).unwrap();
        // class sizes 10 -> (8,1,1), 30 -> (24,3,3), 5 -> (5,0,0)... floor(0.5)=0
        assert_eq!(train.class_counts(), vec![8, 24, 5]);
        assert_eq!(val.class_counts(), vec![1, 3, 0]);
        assert_eq!(test.class_counts(), vec![1, 3, 0]);
    }

    #[test]
    fn split_partitions_by_id() {
        let c = dummy_corpus(LabelScheme::Davidson, &[13, 37, 21]);
        let (train, val, test) = stratified_split(&c, &SplitSpec::new(3)).unwrap();
        let mut ids: Vec<&str> = train
            .records
            .iter()
            .chain(&val.records)
            .chain(&test.records)
            .map(|r| r.id.as_str())
            .collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), c.len());
    }

    #[test]
    fn split_is_input_order_independent() {
        let c = dummy_corpus(LabelScheme::Waseem, &[9, 14, 11]);
        let mut reversed = c.clone();
        reversed.records.reverse();
        let spec = SplitSpec::new(11);
        let (t1, v1, e1) = stratified_split(&c, &spec).unwrap();
        let (t2, v2, e2) = stratified_split(&reversed, &spec).unwrap();
        for (x, y) in [(&t1, &t2), (&v1, &v2), (&e1, &e2)] {
            let xi: Vec<&str> = x.records.iter().map(|r| r.id.as_str()).collect();
            let yi: Vec<&str> = y.records.iter().map(|r| r.id.as_str()).collect();
            assert_eq!(xi, yi);
        }
    }

    #[test]
    fn split_rejects_tiny_class() {
        let c = dummy_corpus(LabelScheme::Waseem, &[2, 5, 5]);
        let err = stratified_split(&c, &SplitSpec::new(0)).unwrap_err();
        assert!(matches!(err, PipelineError::ClassTooSmall { count: 2, .. }));
    }

    #[test]
    fn split_rejects_bad_ratios() {
        let c = dummy_corpus(LabelScheme::Waseem, &[5, 5, 5]);
        let spec = SplitSpec {
            ratios: (0.9, 0.2, 0.1),
            seed: 0,
        };
        assert!(matches!(
            stratified_split(&c, &spec).unwrap_err(),
            PipelineError::InvalidConfig(_)
        ));
    }

    #[test]
    fn manifest_roundtrips() {
        let c = dummy_corpus(LabelScheme::Davidson, &[6, 9, 12]);
        let (train, val, test) = stratified_split(&c, &SplitSpec::new(5)).unwrap();
        let mut buf = Vec::new();
        write_split_manifest(&mut buf, &train, &val, &test).unwrap();
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(&buf).unwrap();
        let (t2, v2, e2) = apply_split_manifest(&c, f.path()).unwrap();
        assert_eq!(train.records, t2.records);
        assert_eq!(val.records, v2.records);
        assert_eq!(test.records, e2.records);
    }

    proptest! {
        #[test]
        fn split_is_a_stratified_partition(
            n0 in 3usize..40, n1 in 3usize..40, n2 in 3usize..40, seed in 0u64..1000
        ) {
            let c = dummy_corpus(LabelScheme::Waseem, &[n0, n1, n2]);
            let (train, val, test) = stratified_split(&c, &SplitSpec::new(seed)).unwrap();
            prop_assert_eq!(train.len() + val.len() + test.len(), c.len());
            let mut ids: Vec<&str> = train.records.iter()
                .chain(&val.records)
                .chain(&test.records)
                .map(|r| r.id.as_str())
                .collect();
            ids.sort_unstable();
            ids.dedup();
            prop_assert_eq!(ids.len(), c.len());
            let (tc, vc, ec) = (train.class_counts(), val.class_counts(), test.class_counts());
            for (class, &n) in [n0, n1, n2].iter().enumerate() {
                let nf = n as f64;
                prop_assert!((vc[class] as f64 / nf - 0.1).abs() <= 1.0 / nf);
                prop_assert!((ec[class] as f64 / nf - 0.1).abs() <= 1.0 / nf);
                prop_assert_eq!(tc[class] + vc[class] + ec[class], n);
            }
        }
    }
}
