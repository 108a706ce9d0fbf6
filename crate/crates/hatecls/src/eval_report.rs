//! Evaluation artifacts: precision/recall/weighted-F1 reports, confusion
//! matrices (counts and row percentages), and tables of the most confident
//! misclassifications, plus file rendering for all of them.

use std::fs;
use std::path::Path;

use serde_json::json;

use crate::corpus::{Corpus, LabelScheme};
use crate::error::{PipelineError, Result};
use crate::heads::ClassProbs;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub per_class: Vec<ClassMetrics>,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    pub accuracy: f64,
    /// Labels whose precision or recall had a zero denominator and were
    /// reported as 0. Kept out of the JSON schema; surfaced in markdown.
    pub degenerate: Vec<String>,
}

impl MetricsReport {
    /// Fixed external schema; `degenerate` deliberately excluded.
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "per_class": self.per_class.iter().map(|c| json!({
                "label": c.label,
                "precision": c.precision,
                "recall": c.recall,
                "f1": c.f1,
                "support": c.support,
            })).collect::<Vec<_>>(),
            "weighted": {
                "precision": self.weighted_precision,
                "recall": self.weighted_recall,
                "f1": self.weighted_f1,
            },
            "accuracy": self.accuracy,
        })
    }

    pub fn from_json(value: &serde_json::Value) -> Result<MetricsReport> {
        let bad = |what: &str| PipelineError::InvalidConfig(format!("metrics JSON: missing {what}"));
        let per_class = value["per_class"]
            .as_array()
            .ok_or_else(|| bad("per_class"))?
            .iter()
            .map(|c| {
                Ok(ClassMetrics {
                    label: c["label"].as_str().ok_or_else(|| bad("label"))?.to_string(),
                    precision: c["precision"].as_f64().ok_or_else(|| bad("precision"))?,
                    recall: c["recall"].as_f64().ok_or_else(|| bad("recall"))?,
                    f1: c["f1"].as_f64().ok_or_else(|| bad("f1"))?,
                    support: c["support"].as_u64().ok_or_else(|| bad("support"))? as usize,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MetricsReport {
            per_class,
            weighted_precision: value["weighted"]["precision"]
                .as_f64()
                .ok_or_else(|| bad("weighted.precision"))?,
            weighted_recall: value["weighted"]["recall"]
                .as_f64()
                .ok_or_else(|| bad("weighted.recall"))?,
            weighted_f1: value["weighted"]["f1"]
                .as_f64()
                .ok_or_else(|| bad("weighted.f1"))?,
            accuracy: value["accuracy"].as_f64().ok_or_else(|| bad("accuracy"))?,
            degenerate: Vec::new(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    /// rows = gold class, columns = predicted class
    pub counts: Vec<Vec<usize>>,
    /// exact percentages; zero-support rows are all zero
    pub row_percent: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCase {
    pub id: String,
    pub text: String,
    pub gold: String,
    pub predicted: String,
    pub probs: Vec<f64>,
    /// Probability assigned to the (wrong) predicted class.
    pub p_predicted: f64,
}

fn check_lengths(preds: usize, golds: usize) -> Result<()> {
    if preds != golds {
        return Err(PipelineError::LengthMismatch {
            left: preds,
            right: golds,
        });
    }
    Ok(())
}

fn tally(preds: &[usize], golds: &[usize], num_classes: usize) -> Result<Vec<Vec<usize>>> {
    let mut counts = vec![vec![0usize; num_classes]; num_classes];
    for (&p, &g) in preds.iter().zip(golds) {
        if p >= num_classes || g >= num_classes {
            return Err(PipelineError::InvalidConfig(format!(
                "class index out of range: pred {p}, gold {g}, classes {num_classes}"
            )));
        }
        counts[g][p] += 1;
    }
    Ok(counts)
}

/// Per-class and support-weighted precision/recall/F1 plus accuracy.
/// Zero-denominator cases score 0 and are listed in `degenerate`.
pub fn metrics(preds: &[usize], golds: &[usize], scheme: LabelScheme) -> Result<MetricsReport> {
    check_lengths(preds.len(), golds.len())?;
    if preds.is_empty() {
        return Err(PipelineError::EmptyInput(
            "metrics need at least one prediction".to_string(),
        ));
    }
    let labels = scheme.classes();
    let c = labels.len();
    let counts = tally(preds, golds, c)?;

    let mut per_class = Vec::with_capacity(c);
    let mut degenerate = Vec::new();
    for k in 0..c {
        let tp = counts[k][k];
        let pred_total: usize = (0..c).map(|g| counts[g][k]).sum();
        let support: usize = counts[k].iter().sum();
        let mut flagged = false;
        let precision = if pred_total == 0 {
            flagged = true;
            0.0
        } else {
            tp as f64 / pred_total as f64
        };
        let recall = if support == 0 {
            flagged = true;
            0.0
        } else {
            tp as f64 / support as f64
        };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        if flagged {
            degenerate.push(labels[k].to_string());
        }
        per_class.push(ClassMetrics {
            label: labels[k].to_string(),
            precision,
            recall,
            f1,
            support,
        });
    }

    let total: usize = per_class.iter().map(|m| m.support).sum();
    let weight = |f: fn(&ClassMetrics) -> f64| -> f64 {
        per_class
            .iter()
            .map(|m| m.support as f64 * f(m))
            .sum::<f64>()
            / total as f64
    };
    let correct: usize = (0..c).map(|k| counts[k][k]).sum();
    Ok(MetricsReport {
        weighted_precision: weight(|m| m.precision),
        weighted_recall: weight(|m| m.recall),
        weighted_f1: weight(|m| m.f1),
        accuracy: correct as f64 / total as f64,
        per_class,
        degenerate,
    })
}

pub fn confusion(preds: &[usize], golds: &[usize], scheme: LabelScheme) -> Result<ConfusionMatrix> {
    check_lengths(preds.len(), golds.len())?;
    let labels: Vec<String> = scheme.classes().iter().map(|s| s.to_string()).collect();
    let c = labels.len();
    let counts = tally(preds, golds, c)?;
    let row_percent = counts
        .iter()
        .map(|row| {
            let total: usize = row.iter().sum();
            row.iter()
                .map(|&v| {
                    if total == 0 {
                        0.0
                    } else {
                        100.0 * v as f64 / total as f64
                    }
                })
                .collect()
        })
        .collect();
    Ok(ConfusionMatrix {
        labels,
        counts,
        row_percent,
    })
}

/// Misclassified records, most confident mistakes first (ties broken by id),
/// truncated to `limit`.
pub fn error_table(
    corpus: &Corpus,
    preds: &[usize],
    probs: &[ClassProbs],
    limit: usize,
) -> Result<Vec<ErrorCase>> {
    check_lengths(preds.len(), corpus.records.len())?;
    check_lengths(probs.len(), corpus.records.len())?;
    let labels = corpus.scheme.classes();
    let mut cases = Vec::new();
    for ((record, &pred), p) in corpus.records.iter().zip(preds).zip(probs) {
        if pred == record.label {
            continue;
        }
        if pred >= labels.len() || record.label >= labels.len() {
            return Err(PipelineError::InvalidConfig(format!(
                "class index out of range: pred {pred}, gold {}",
                record.label
            )));
        }
        cases.push(ErrorCase {
            id: record.id.clone(),
            text: record.raw_text.clone(),
            gold: labels[record.label].to_string(),
            predicted: labels[pred].to_string(),
            probs: p.probs.clone(),
            p_predicted: p.probs[pred],
        });
    }
    cases.sort_by(|a, b| {
        b.p_predicted
            .partial_cmp(&a.p_predicted)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.id.cmp(&b.id))
    });
    cases.truncate(limit);
    Ok(cases)
}

fn csv_escape(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

fn write_confusion_csv(path: &Path, labels: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut out = String::from("gold");
    for l in labels {
        out.push(',');
        out.push_str(&csv_escape(l));
    }
    out.push('\n');
    for (label, row) in labels.iter().zip(rows) {
        out.push_str(&csv_escape(label));
        for cell in row {
            out.push(',');
            out.push_str(cell);
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| PipelineError::io(path.display().to_string(), e))
}

fn heatmap_color(fraction: f64) -> [u8; 3] {
    // white → deep blue ramp
    let f = fraction.clamp(0.0, 1.0);
    let r = 255.0 - 205.0 * f;
    let g = 255.0 - 155.0 * f;
    let b = 255.0 - 75.0 * f;
    [r as u8, g as u8, b as u8]
}

fn write_heatmap(path: &Path, matrix: &ConfusionMatrix) -> Result<()> {
    const CELL: u32 = 64;
    const GAP: u32 = 2;
    let n = matrix.labels.len() as u32;
    let side = n * CELL + (n + 1) * GAP;
    let mut img = image::RgbImage::from_pixel(side, side, image::Rgb([30, 30, 30]));
    for (gi, row) in matrix.row_percent.iter().enumerate() {
        for (pi, &pct) in row.iter().enumerate() {
            let color = image::Rgb(heatmap_color(pct / 100.0));
            let x0 = GAP + pi as u32 * (CELL + GAP);
            let y0 = GAP + gi as u32 * (CELL + GAP);
            for dy in 0..CELL {
                for dx in 0..CELL {
                    img.put_pixel(x0 + dx, y0 + dy, color);
                }
            }
        }
    }
    img.save(path)
        .map_err(|e| PipelineError::InvalidConfig(format!("{}: {e}", path.display())))
}

/// Writes metrics.json, confusion_counts.csv, confusion_percent.csv,
/// errors.csv, report.md, and confusion_heatmap.png into `out_dir`.
pub fn render_report(
    metrics: &MetricsReport,
    matrix: &ConfusionMatrix,
    errors: &[ErrorCase],
    out_dir: &Path,
) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| PipelineError::io(out_dir.display().to_string(), e))?;
    let write = |name: &str, content: String| -> Result<()> {
        let path = out_dir.join(name);
        fs::write(&path, content).map_err(|e| PipelineError::io(path.display().to_string(), e))
    };

    write(
        "metrics.json",
        serde_json::to_string_pretty(&metrics.to_json())
            .expect("json serialization cannot fail")
            + "\n",
    )?;

    let count_rows: Vec<Vec<String>> = matrix
        .counts
        .iter()
        .map(|row| row.iter().map(|v| v.to_string()).collect())
        .collect();
    write_confusion_csv(&out_dir.join("confusion_counts.csv"), &matrix.labels, &count_rows)?;
    let pct_rows: Vec<Vec<String>> = matrix
        .row_percent
        .iter()
        .map(|row| row.iter().map(|v| format!("{v:.1}")).collect())
        .collect();
    write_confusion_csv(&out_dir.join("confusion_percent.csv"), &matrix.labels, &pct_rows)?;

    let mut errors_csv = String::from("id,gold,predicted,p_predicted,text\n");
    for e in errors {
        errors_csv.push_str(&format!(
            "{},{},{},{},{}\n",
            csv_escape(&e.id),
            csv_escape(&e.gold),
            csv_escape(&e.predicted),
            e.p_predicted,
            csv_escape(&e.text),
        ));
    }
    write("errors.csv", errors_csv)?;

    let mut md = String::from("# Evaluation report\n\n## Metrics\n\n");
    md.push_str("| class | precision | recall | f1 | support |\n");
    md.push_str("|---|---|---|---|---|\n");
    for m in &metrics.per_class {
        md.push_str(&format!(
            "| {} | {:.4} | {:.4} | {:.4} | {} |\n",
            m.label, m.precision, m.recall, m.f1, m.support
        ));
    }
    md.push_str(&format!(
        "| **weighted** | {:.4} | {:.4} | {:.4} | |\n\n",
        metrics.weighted_precision, metrics.weighted_recall, metrics.weighted_f1
    ));
    md.push_str(&format!("Accuracy: {:.4}\n\n", metrics.accuracy));
    if !metrics.degenerate.is_empty() {
        md.push_str(&format!(
            "Degenerate classes (zero-denominator precision or recall reported as 0): {}\n\n",
            metrics.degenerate.join(", ")
        ));
    }

    md.push_str("## Confusion matrix (counts)\n\n");
    md.push_str(&markdown_matrix(&matrix.labels, &count_rows));
    md.push_str("\n## Confusion matrix (row %)\n\n");
    md.push_str(&markdown_matrix(&matrix.labels, &pct_rows));

    md.push_str("\n## Most confident misclassifications\n\n");
    if errors.is_empty() {
        md.push_str("no misclassifications\n");
    } else {
        md.push_str("| id | gold | predicted | p | text |\n|---|---|---|---|---|\n");
        for e in errors {
            md.push_str(&format!(
                "| {} | {} | {} | {:.3} | {} |\n",
                e.id,
                e.gold,
                e.predicted,
                e.p_predicted,
                e.text.replace('|', "\\|").replace('\n', " ")
            ));
        }
    }
    write("report.md", md)?;

    write_heatmap(&out_dir.join("confusion_heatmap.png"), matrix)?;
    Ok(())
}

fn markdown_matrix(labels: &[String], rows: &[Vec<String>]) -> String {
    let mut md = String::from("| gold \\ predicted |");
    for l in labels {
        md.push_str(&format!(" {l} |"));
    }
    md.push('\n');
    md.push_str("|---|");
    for _ in labels {
        md.push_str("---|");
    }
    md.push('\n');
    for (label, row) in labels.iter().zip(rows) {
        md.push_str(&format!("| {label} |"));
        for cell in row {
            md.push_str(&format!(" {cell} |"));
        }
        md.push('\n');
    }
    md
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TweetRecord;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    const SCHEME: LabelScheme = LabelScheme::Waseem;

    #[test]
    fn perfect_predictions_score_one() {
        let golds = [0, 1, 2, 0, 1, 2];
        let report = metrics(&golds, &golds, SCHEME).unwrap();
        for m in &report.per_class {
            assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
        }
        assert_eq!(report.weighted_f1, 1.0);
        assert_eq!(report.accuracy, 1.0);
        assert!(report.degenerate.is_empty());
    }

    #[test]
    fn matches_hand_computed_values() {
        let golds = [0, 0, 1, 1, 2, 2];
        let preds = [0, 1, 1, 1, 2, 0];
        let r = metrics(&preds, &golds, SCHEME).unwrap();
        let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
        assert!(close(r.per_class[0].precision, 0.5));
        assert!(close(r.per_class[0].recall, 0.5));
        assert!(close(r.per_class[0].f1, 0.5));
        assert!(close(r.per_class[1].precision, 2.0 / 3.0));
        assert!(close(r.per_class[1].recall, 1.0));
        assert!(close(r.per_class[1].f1, 0.8));
        assert!(close(r.per_class[2].precision, 1.0));
        assert!(close(r.per_class[2].recall, 0.5));
        assert!(close(r.per_class[2].f1, 2.0 / 3.0));
        assert!(close(r.weighted_precision, 13.0 / 18.0));
        assert!(close(r.weighted_recall, 2.0 / 3.0));
        assert!(close(r.weighted_f1, 59.0 / 90.0));
        assert!(close(r.accuracy, 2.0 / 3.0));
    }

    #[test]
    fn zero_division_scores_zero_and_flags() {
        // nothing predicted as class 2, no gold class 2 either
        let golds = [0, 0, 1];
        let preds = [0, 1, 1];
        let r = metrics(&preds, &golds, SCHEME).unwrap();
        assert_eq!(r.per_class[2].precision, 0.0);
        assert_eq!(r.per_class[2].recall, 0.0);
        assert_eq!(r.per_class[2].f1, 0.0);
        assert_eq!(r.degenerate, vec!["neither".to_string()]);
    }

    #[test]
    fn rejects_length_mismatch_and_empty() {
        assert!(matches!(
            metrics(&[0, 1], &[0], SCHEME).unwrap_err(),
            PipelineError::LengthMismatch { left: 2, right: 1 }
        ));
        assert!(matches!(
            metrics(&[], &[], SCHEME).unwrap_err(),
            PipelineError::EmptyInput(_)
        ));
    }

    #[test]
    fn confusion_tallies_directly() {
        let golds = [0, 0, 1];
        let preds = [1, 0, 1];
        let m = confusion(&preds, &golds, SCHEME).unwrap();
        assert_eq!(m.counts, vec![vec![1, 1, 0], vec![0, 1, 0], vec![0, 0, 0]]);
        assert!((m.row_percent[0][0] - 50.0).abs() < 1e-12);
        assert!((m.row_percent[0][1] - 50.0).abs() < 1e-12);
        assert_eq!(m.row_percent[2], vec![0.0, 0.0, 0.0]);
    }

    fn random_pairs(seed: u64) -> (Vec<usize>, Vec<usize>) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let len = rng.gen_range(1..=50);
        let golds = (0..len).map(|_| rng.gen_range(0..3)).collect();
        let preds = (0..len).map(|_| rng.gen_range(0..3)).collect();
        (preds, golds)
    }

    /// Straight-line re-derivation used as the oracle.
    fn brute_force(preds: &[usize], golds: &[usize]) -> (Vec<[f64; 3]>, [f64; 3], f64) {
        let c = 3;
        let mut per = Vec::new();
        for k in 0..c {
            let tp = preds
                .iter()
                .zip(golds)
                .filter(|(p, g)| **p == k && **g == k)
                .count() as f64;
            let fp = preds
                .iter()
                .zip(golds)
                .filter(|(p, g)| **p == k && **g != k)
                .count() as f64;
            let fn_ = preds
                .iter()
                .zip(golds)
                .filter(|(p, g)| **p != k && **g == k)
                .count() as f64;
            let prec = if tp + fp == 0.0 { 0.0 } else { tp / (tp + fp) };
            let rec = if tp + fn_ == 0.0 { 0.0 } else { tp / (tp + fn_) };
            let f1 = if prec + rec == 0.0 {
                0.0
            } else {
                2.0 * prec * rec / (prec + rec)
            };
            per.push([prec, rec, f1]);
        }
        let total = golds.len() as f64;
        let mut weighted = [0.0; 3];
        for k in 0..c {
            let support = golds.iter().filter(|g| **g == k).count() as f64;
            for j in 0..3 {
                weighted[j] += support * per[k][j] / total;
            }
        }
        let acc = preds.iter().zip(golds).filter(|(p, g)| p == g).count() as f64 / total;
        (per, weighted, acc)
    }

    #[test]
    fn matches_brute_force_oracle_on_random_draws() {
        for seed in 0..200 {
            let (preds, golds) = random_pairs(seed);
            let r = metrics(&preds, &golds, SCHEME).unwrap();
            let (per, weighted, acc) = brute_force(&preds, &golds);
            for k in 0..3 {
                assert!((r.per_class[k].precision - per[k][0]).abs() < 1e-12);
                assert!((r.per_class[k].recall - per[k][1]).abs() < 1e-12);
                assert!((r.per_class[k].f1 - per[k][2]).abs() < 1e-12);
            }
            assert!((r.weighted_precision - weighted[0]).abs() < 1e-12);
            assert!((r.weighted_recall - weighted[1]).abs() < 1e-12);
            assert!((r.weighted_f1 - weighted[2]).abs() < 1e-12);
            assert!((r.accuracy - acc).abs() < 1e-12);
        }
    }

    #[test]
    fn confusion_marginals_match_supports_and_accuracy() {
        let (preds, golds) = random_pairs(99);
        let m = confusion(&preds, &golds, SCHEME).unwrap();
        let r = metrics(&preds, &golds, SCHEME).unwrap();
        let total: usize = m.counts.iter().flatten().sum();
        assert_eq!(total, golds.len());
        for k in 0..3 {
            let row_sum: usize = m.counts[k].iter().sum();
            assert_eq!(row_sum, r.per_class[k].support);
            let col_sum: usize = (0..3).map(|g| m.counts[g][k]).sum();
            assert_eq!(col_sum, preds.iter().filter(|p| **p == k).count());
        }
        let trace: usize = (0..3).map(|k| m.counts[k][k]).sum();
        assert!((r.accuracy - trace as f64 / total as f64).abs() < 1e-15);
        // micro recall = pooled TP over pooled gold = accuracy
        let micro_recall = trace as f64 / total as f64;
        assert!((micro_recall - r.accuracy).abs() < 1e-15);
        // nonzero rows sum to 100
        for k in 0..3 {
            let row_total: usize = m.counts[k].iter().sum();
            if row_total > 0 {
                let sum: f64 = m.row_percent[k].iter().sum();
                assert!((sum - 100.0).abs() < 0.1);
            }
        }
    }

    #[test]
    fn permutation_leaves_results_unchanged() {
        let (preds, golds) = random_pairs(7);
        let mut pairs: Vec<(usize, usize)> = preds.iter().cloned().zip(golds.clone()).collect();
        let base_m = metrics(&preds, &golds, SCHEME).unwrap();
        let base_c = confusion(&preds, &golds, SCHEME).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        use rand::seq::SliceRandom;
        pairs.shuffle(&mut rng);
        let (p2, g2): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        assert_eq!(metrics(&p2, &g2, SCHEME).unwrap(), base_m);
        assert_eq!(confusion(&p2, &g2, SCHEME).unwrap(), base_c);
    }

    fn toy_corpus() -> Corpus {
        let records = (0..4)
            .map(|i| TweetRecord {
                id: format!("t{i}"),
                raw_text: format!("raw text {i}"),
                normalized_text: format!("norm {i}"),
                label: i % 3,
                source: "test".to_string(),
            })
            .collect();
        Corpus {
            scheme: SCHEME,
            records,
        }
    }

    fn probs_for(pred: usize, p: f64) -> ClassProbs {
        let mut v = vec![(1.0 - p) / 2.0; 3];
        v[pred] = p;
        ClassProbs { probs: v }
    }

    #[test]
    fn error_table_sorts_and_truncates() {
        let corpus = toy_corpus(); // golds 0,1,2,0
        let preds = [1, 0, 1, 2]; // all wrong
        let probs = vec![
            probs_for(1, 0.6),
            probs_for(0, 0.9),
            probs_for(1, 0.8),
            probs_for(2, 0.7),
        ];
        let all = error_table(&corpus, &preds, &probs, 10).unwrap();
        assert_eq!(all.len(), 4);
        let ps: Vec<f64> = all.iter().map(|e| e.p_predicted).collect();
        assert_eq!(ps, vec![0.9, 0.8, 0.7, 0.6]);
        assert_eq!(all[0].id, "t1");
        assert_eq!(all[0].gold, "sexism");
        assert_eq!(all[0].predicted, "racism");
        assert_eq!(all[0].text, "raw text 1");

        let top2 = error_table(&corpus, &preds, &probs, 2).unwrap();
        assert_eq!(top2.len(), 2);
        assert_eq!(top2[1].p_predicted, 0.8);
    }

    #[test]
    fn error_table_empty_when_all_correct() {
        let corpus = toy_corpus();
        let preds = [0, 1, 2, 0];
        let probs: Vec<ClassProbs> = preds.iter().map(|&p| probs_for(p, 0.9)).collect();
        assert!(error_table(&corpus, &preds, &probs, 10).unwrap().is_empty());
    }

    #[test]
    fn render_writes_all_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let golds = [0, 0, 1, 1, 2, 2];
        let preds = [0, 1, 1, 1, 2, 0];
        let r = metrics(&preds, &golds, SCHEME).unwrap();
        let m = confusion(&preds, &golds, SCHEME).unwrap();
        render_report(&r, &m, &[], dir.path()).unwrap();
        for name in [
            "metrics.json",
            "confusion_counts.csv",
            "confusion_percent.csv",
            "errors.csv",
            "report.md",
            "confusion_heatmap.png",
        ] {
            assert!(dir.path().join(name).exists(), "missing {name}");
        }
        let md = std::fs::read_to_string(dir.path().join("report.md")).unwrap();
        assert!(md.contains("no misclassifications"));
        let counts_csv = std::fs::read_to_string(dir.path().join("confusion_counts.csv")).unwrap();
        let mut lines = counts_csv.lines();
        assert_eq!(lines.next().unwrap(), "gold,racism,sexism,neither");
        assert_eq!(lines.next().unwrap(), "racism,1,1,0");

        // JSON round-trip preserves every reported value
        let text = std::fs::read_to_string(dir.path().join("metrics.json")).unwrap();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        let restored = MetricsReport::from_json(&value).unwrap();
        assert_eq!(restored.to_json(), r.to_json());
    }

    #[test]
    fn percent_csv_rounds_to_one_decimal() {
        let dir = tempfile::tempdir().unwrap();
        let golds = [0, 0, 0, 1, 2, 2];
        let preds = [0, 1, 2, 1, 2, 2];
        let r = metrics(&preds, &golds, SCHEME).unwrap();
        let m = confusion(&preds, &golds, SCHEME).unwrap();
        render_report(&r, &m, &[], dir.path()).unwrap();
        let pct = std::fs::read_to_string(dir.path().join("confusion_percent.csv")).unwrap();
        assert!(pct.contains("racism,33.3,33.3,33.3"));
        // internal values stay exact
        assert!((m.row_percent[0][0] - 100.0 / 3.0).abs() < 1e-12);
    }
}
