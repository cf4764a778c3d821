//! Confusion-matrix metrics, comparison tables and feature rankings.
//!
//! The positive class is `real` (label 1) throughout.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::classic::ClassifierModel;
use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::features::Vocabulary;
use crate::kinds::{FeaturizerKind, ModelKind};

pub const POSITIVE_CLASS_NOTE: &str = "positive class: real (label 1)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub fn confusion(y_true: &[usize], y_pred: &[usize]) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Shape(format!("{} true labels against {} predictions", y_true.len(), y_pred.len())));
    }
    let mut cm = ConfusionMatrix::default();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t, p) {
            (1, 1) => cm.tp += 1,
            (0, 1) => cm.fp += 1,
            (0, 0) => cm.tn += 1,
            (1, 0) => cm.fn_ += 1,
            _ => return Err(Error::LabelOutOfRange(t.max(p))),
        }
    }
    Ok(cm)
}

/// Metrics as fractions in [0, 1]. A metric whose denominator is zero is reported as 0
/// and named in `undefined`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub undefined: Vec<String>,
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::InvalidArgument("metrics over zero documents".into()));
    }
    let mut undefined = Vec::new();
    let mut ratio = |num: usize, den: usize, name: &str| {
        if den == 0 {
            undefined.push(name.to_string());
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let accuracy = ratio(cm.tp + cm.tn, total, "accuracy");
    let precision = ratio(cm.tp, cm.tp + cm.fp, "precision");
    let recall = ratio(cm.tp, cm.tp + cm.fn_, "recall");
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        undefined.push("f1".into());
        0.0
    };
    Ok(Metrics {
        accuracy,
        precision,
        recall,
        f1,
        undefined,
    })
}

/// One evaluated cell. Metrics are percentages. `featurizer` is `None` for the ensemble,
/// which reads both feature views.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: ModelKind,
    pub featurizer: Option<FeaturizerKind>,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: ConfusionMatrix,
    pub undefined: Vec<String>,
    pub runtime_secs: f64,
    pub seed: u64,
}

impl EvalReport {
    pub fn new(
        model: ModelKind,
        featurizer: Option<FeaturizerKind>,
        y_true: &[usize],
        y_pred: &[usize],
        runtime_secs: f64,
        seed: u64,
    ) -> Result<Self> {
        let cm = confusion(y_true, y_pred)?;
        let m = metrics(&cm)?;
        Ok(EvalReport {
            model,
            featurizer,
            accuracy: 100.0 * m.accuracy,
            precision: 100.0 * m.precision,
            recall: 100.0 * m.recall,
            f1: 100.0 * m.f1,
            confusion: cm,
            undefined: m.undefined,
            runtime_secs,
            seed,
        })
    }

    pub fn featurizer_name(&self) -> &'static str {
        self.featurizer.map_or("both", FeaturizerKind::as_str)
    }

    /// Per-cell text block: metric rows plus the confusion counts.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let feat = self.featurizer.map_or("TFIDF + Word Embedding", FeaturizerKind::display_name);
        let _ = writeln!(out, "{} / {}  ({POSITIVE_CLASS_NOTE})", self.model.display_name(), feat);
        for (name, v) in [
            ("Accuracy", self.accuracy),
            ("Precision", self.precision),
            ("Recall", self.recall),
            ("F1", self.f1),
        ] {
            let _ = writeln!(out, "  {name:<10}{v:>7.2}");
        }
        let c = &self.confusion;
        let _ = writeln!(out, "  tp={} fp={} tn={} fn={}", c.tp, c.fp, c.tn, c.fn_);
        if !self.undefined.is_empty() {
            let _ = writeln!(out, "  undefined (reported as 0): {}", self.undefined.join(", "));
        }
        out
    }
}

/// Writes metrics without runtimes, so identical runs give identical bytes.
pub fn write_metrics_csv<W: Write>(reports: &[EvalReport], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "model",
        "featurizer",
        "accuracy",
        "precision",
        "recall",
        "f1",
        "tp",
        "fp",
        "tn",
        "fn",
        "undefined",
        "seed",
    ])?;
    for r in reports {
        let c = &r.confusion;
        w.write_record([
            r.model.as_str().to_string(),
            r.featurizer_name().to_string(),
            format!("{:.6}", r.accuracy),
            format!("{:.6}", r.precision),
            format!("{:.6}", r.recall),
            format!("{:.6}", r.f1),
            c.tp.to_string(),
            c.fp.to_string(),
            c.tn.to_string(),
            c.fn_.to_string(),
            r.undefined.join(";"),
            r.seed.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("metrics csv", e))
}

pub fn write_timings_csv<W: Write>(reports: &[EvalReport], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["model", "featurizer", "runtime_secs"])?;
    for r in reports {
        w.write_record([r.model.as_str(), r.featurizer_name(), &format!("{:.3}", r.runtime_secs)])?;
    }
    w.flush().map_err(|e| Error::io("timings csv", e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableStyle {
    Plain,
    Markdown,
}

enum Row {
    Cells([String; 2]),
    /// The ensemble reads both views, so its value spans both columns.
    Span(String),
}

/// Accuracy grid with one row per model and one column per featurizer.
///
/// Naive Bayes on embeddings is shown as `-` (the combination cannot be trained); other cells
/// that have no report show `n/a`. The highest accuracy is marked with `*` (first in row order
/// on ties).
pub fn comparison_table(reports: &[EvalReport], style: TableStyle) -> String {
    let mut cells: BTreeMap<(ModelKind, Option<FeaturizerKind>), f64> = BTreeMap::new();
    for r in reports {
        cells.insert((r.model, r.featurizer), r.accuracy);
    }
    let kinds: Vec<ModelKind> = ModelKind::ALL
        .into_iter()
        .filter(|k| reports.iter().any(|r| r.model == *k))
        .collect();
    let mut best: Option<((ModelKind, Option<FeaturizerKind>), f64)> = None;
    for &kind in &kinds {
        let keys: Vec<Option<FeaturizerKind>> = if kind == ModelKind::Rmdl {
            vec![None]
        } else {
            FeaturizerKind::ALL.into_iter().map(Some).collect()
        };
        for f in keys {
            if let Some(&v) = cells.get(&(kind, f)) {
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some(((kind, f), v));
                }
            }
        }
    }
    let fmt_cell = |kind: ModelKind, f: Option<FeaturizerKind>| -> String {
        match cells.get(&(kind, f)) {
            Some(v) => {
                let flag = if best.is_some_and(|(k, _)| k == (kind, f)) { "*" } else { "" };
                format!("{v:.2}{flag}")
            }
            None if f.is_some_and(|f| !kind.supports(f)) => "-".into(),
            None => "n/a".into(),
        }
    };
    let rows: Vec<(ModelKind, Row)> = kinds
        .iter()
        .map(|&kind| {
            let row = if kind == ModelKind::Rmdl {
                Row::Span(fmt_cell(kind, None))
            } else {
                Row::Cells(FeaturizerKind::ALL.map(|f| fmt_cell(kind, Some(f))))
            };
            (kind, row)
        })
        .collect();

    let header = ["Model", FeaturizerKind::Tfidf.display_name(), FeaturizerKind::Embedding.display_name()];
    let mut out = String::new();
    match style {
        TableStyle::Markdown => {
            let _ = writeln!(out, "| {} | {} | {} |", header[0], header[1], header[2]);
            out.push_str("|---|---:|---:|\n");
            for (kind, row) in &rows {
                match row {
                    Row::Cells([a, b]) => {
                        let _ = writeln!(out, "| {} | {a} | {b} |", kind.display_name());
                    }
                    Row::Span(v) => {
                        let _ = writeln!(out, "| {} | {v} (both columns) | |", kind.display_name());
                    }
                }
            }
        }
        TableStyle::Plain => {
            let name_w = kinds
                .iter()
                .map(|k| k.display_name().len())
                .chain([header[0].len()])
                .max()
                .unwrap_or(0);
            let col_w = rows
                .iter()
                .flat_map(|(_, r)| match r {
                    Row::Cells(c) => c.iter().map(String::len).collect::<Vec<_>>(),
                    Row::Span(_) => Vec::new(),
                })
                .chain([header[1].len(), header[2].len()])
                .max()
                .unwrap_or(0);
            let span_w = 2 * col_w + 3;
            let rule = format!("+{}+{}+\n", "-".repeat(name_w + 2), "-".repeat(span_w + 2));
            let split_rule = format!("+{}+{}+{}+\n", "-".repeat(name_w + 2), "-".repeat(col_w + 2), "-".repeat(col_w + 2));
            out.push_str(&split_rule);
            let _ = writeln!(out, "| {:<name_w$} | {:>col_w$} | {:>col_w$} |", header[0], header[1], header[2]);
            out.push_str(&split_rule);
            for (kind, row) in &rows {
                match row {
                    Row::Cells([a, b]) => {
                        let _ = writeln!(out, "| {:<name_w$} | {a:>col_w$} | {b:>col_w$} |", kind.display_name());
                    }
                    Row::Span(v) => {
                        out.push_str(&rule);
                        let _ = writeln!(out, "| {:<name_w$} | {v:^span_w$} |", kind.display_name());
                    }
                }
            }
            out.push_str(if matches!(rows.last(), Some((_, Row::Span(_)))) { &rule } else { &split_rule });
        }
    }
    let _ = writeln!(out, "\nTest accuracy (%); * marks the best cell; {POSITIVE_CLASS_NOTE}.");
    out
}

/// A ranked vocabulary term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopFeature {
    pub term: String,
    pub score: f64,
    /// For naive Bayes, the class the term's likelihood ratio favours.
    pub leans: Option<Label>,
}

/// The `k` highest-scoring terms, best first (ties by column order).
///
/// Naive Bayes terms are scored by the magnitude of their log likelihood ratio; tree
/// ensembles by their mean impurity decrease. Models without importances are an error.
pub fn top_features(model: &ClassifierModel, vocab: &Vocabulary, k: usize) -> Result<Vec<TopFeature>> {
    let raw = model.importances()?;
    if raw.len() != vocab.len() {
        return Err(Error::DimensionMismatch {
            expected: vocab.len(),
            got: raw.len(),
        });
    }
    let signed = matches!(model, ClassifierModel::NaiveBayes(_));
    let mut order: Vec<usize> = (0..raw.len()).collect();
    let score = |i: usize| if signed { raw[i].abs() } else { raw[i] };
    order.sort_by(|&a, &b| score(b).total_cmp(&score(a)).then(a.cmp(&b)));
    Ok(order
        .into_iter()
        .take(k)
        .map(|i| TopFeature {
            term: vocab.term(i).unwrap_or_default().to_string(),
            score: score(i),
            leans: signed.then(|| if raw[i] > 0.0 { Label::Real } else { Label::Fake }),
        })
        .collect())
}

pub fn render_top_features(features: &[TopFeature]) -> String {
    let mut out = String::from("rank  term                  score      leans\n");
    for (i, f) in features.iter().enumerate() {
        let leans = f.leans.map_or("", Label::as_str);
        let _ = writeln!(out, "{:>4}  {:<20}  {:>9.6}  {leans}", i + 1, f.term, f.score);
    }
    out
}
