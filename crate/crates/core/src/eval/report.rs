//! Scoring analysis records against gold labels, and the results grid.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::breakdown::{type_breakdown, Breakdowns};
use super::cte::{cte_score, CteResult};
use super::metrics::ConfusionMatrix;
use super::EvalError;
use crate::backend::Embedder;
use crate::pipeline::AnalysisRecord;
use crate::prompt::{Task, Variant};
use crate::types::{ArgumentLabel, Instance, Topic};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    /// Pairs scored.
    pub n: usize,
    /// Gold-labeled instances with no usable prediction, left out of `n`.
    pub missing: usize,
    pub f1: f64,
    pub per_class_f1: BTreeMap<String, f64>,
    pub confusion: ConfusionMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cte: Option<CteResult>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub breakdowns: Breakdowns,
}

impl EvalReport {
    pub fn with_dataset(mut self, name: impl Into<String>) -> Self {
        self.dataset = Some(name.into());
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Plain-text summary with the confusion matrix.
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "task: {}", self.task);
        if let Some(d) = &self.dataset {
            let _ = writeln!(s, "dataset: {d}");
        }
        let _ = writeln!(s, "n: {}  missing: {}", self.n, self.missing);
        let _ = writeln!(s, "F1: {:.4}", self.f1);
        for (class, f1) in &self.per_class_f1 {
            let _ = writeln!(s, "  {class:<12} {f1:.4}");
        }
        let width = self.confusion.classes.iter().map(String::len).max().unwrap_or(4).max(6);
        let _ = write!(s, "{:<width$}", "gold\\pred");
        for c in &self.confusion.classes {
            let _ = write!(s, " {c:>width$}");
        }
        s.push('\n');
        for (c, row) in self.confusion.classes.iter().zip(&self.confusion.counts) {
            let _ = write!(s, "{c:<width$}");
            for v in row {
                let _ = write!(s, " {v:>width$}");
            }
            s.push('\n');
        }
        if let Some(cte) = &self.cte {
            let _ = writeln!(
                s,
                "CTE score: {:.4}  coverage: {:.4}  zeroed: {}/{}",
                cte.score, cte.coverage, cte.zeroed_count, cte.n
            );
        }
        for (key, groups) in &self.breakdowns {
            let _ = writeln!(s, "accuracy by {key}:");
            for (g, acc) in groups {
                let _ = writeln!(s, "  {g:<12} {acc:.4}");
            }
        }
        s
    }
}

fn join<'a>(
    records: &'a [AnalysisRecord],
    instances: &[Instance],
) -> Result<HashMap<&'a str, &'a AnalysisRecord>, EvalError> {
    let ids: std::collections::HashSet<&str> = instances.iter().map(|i| i.id.as_str()).collect();
    let mut map = HashMap::new();
    for r in records {
        if !ids.contains(r.instance_id.as_str()) {
            return Err(EvalError::Join(r.instance_id.clone()));
        }
        map.insert(r.instance_id.as_str(), r);
    }
    Ok(map)
}

/// Binary detection F1 over instances with a gold label.
pub fn evaluate_detection(records: &[AnalysisRecord], instances: &[Instance]) -> Result<EvalReport, EvalError> {
    let by_id = join(records, instances)?;
    let (mut preds, mut golds, mut missing) = (Vec::new(), Vec::new(), 0);
    for inst in instances {
        let Some(gold) = inst.gold_detection() else { continue };
        match by_id.get(inst.id.as_str()).and_then(|r| r.detection) {
            Some(p) => {
                preds.push(p);
                golds.push(gold);
            }
            None => missing += 1,
        }
    }
    let confusion = ConfusionMatrix::from_pairs(&preds, &golds)?;
    Ok(EvalReport {
        task: Task::Detect,
        dataset: None,
        n: preds.len(),
        missing,
        f1: confusion.f1(ArgumentLabel::Argument.code() as usize),
        per_class_f1: confusion.per_class_f1(),
        confusion,
        cte: None,
        breakdowns: type_breakdown(records, instances),
    })
}

/// Macro stance F1 over instances with a gold stance.
pub fn evaluate_stance(records: &[AnalysisRecord], instances: &[Instance]) -> Result<EvalReport, EvalError> {
    let by_id = join(records, instances)?;
    let (mut preds, mut golds, mut missing) = (Vec::new(), Vec::new(), 0);
    for inst in instances {
        let Some(gold) = inst.gold_stance else { continue };
        match by_id.get(inst.id.as_str()).and_then(|r| r.stance) {
            Some(p) => {
                preds.push(p);
                golds.push(gold);
            }
            None => missing += 1,
        }
    }
    let confusion = ConfusionMatrix::from_pairs(&preds, &golds)?;
    Ok(EvalReport {
        task: Task::Stance,
        dataset: None,
        n: preds.len(),
        missing,
        f1: confusion.macro_f1(),
        per_class_f1: confusion.per_class_f1(),
        confusion,
        cte: None,
        breakdowns: BTreeMap::new(),
    })
}

/// CTE score over instances with a predicted topic.
///
/// A missing gold topic counts as "No Topic". The F1 fields score the
/// argument decision implied by abstention: a non-abstaining prediction
/// counts as `Argument`.
pub async fn evaluate_extraction<E: Embedder + ?Sized>(
    records: &[AnalysisRecord],
    instances: &[Instance],
    embedder: &E,
) -> Result<EvalReport, EvalError> {
    let by_id = join(records, instances)?;
    let (mut golds, mut preds, mut is_arg, mut missing) = (Vec::new(), Vec::new(), Vec::new(), 0);
    for inst in instances {
        let Some(pred) = by_id.get(inst.id.as_str()).and_then(|r| r.topic.clone()) else {
            missing += 1;
            continue;
        };
        let gold = inst.topic().unwrap_or_else(Topic::no_topic);
        let arg = match inst.gold_detection() {
            Some(l) => l == ArgumentLabel::Argument,
            None => !gold.is_no_topic(),
        };
        golds.push(gold);
        preds.push(pred);
        is_arg.push(arg);
    }
    let to_label = |b: bool| if b { ArgumentLabel::Argument } else { ArgumentLabel::NotArgument };
    let det_golds: Vec<ArgumentLabel> = is_arg.iter().map(|b| to_label(*b)).collect();
    let det_preds: Vec<ArgumentLabel> = preds.iter().map(|p| to_label(!p.is_no_topic())).collect();
    let confusion = ConfusionMatrix::from_pairs(&det_preds, &det_golds)?;
    let cte = cte_score(&golds, &preds, &is_arg, embedder).await?;
    Ok(EvalReport {
        task: Task::Extract,
        dataset: None,
        n: preds.len(),
        missing,
        f1: confusion.f1(ArgumentLabel::Argument.code() as usize),
        per_class_f1: confusion.per_class_f1(),
        confusion,
        cte: Some(cte),
        breakdowns: BTreeMap::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub model: String,
    pub variant: Variant,
    /// dataset → F1
    pub cells: BTreeMap<String, f64>,
}

impl GridRow {
    pub fn label(&self) -> String {
        let v = match self.variant {
            Variant::WithAtn => "ATN",
            Variant::NoAtn => "No ATN",
        };
        format!("{} ({v})", self.model)
    }
}

/// F1 by model/variant (rows) and dataset (columns) for one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportGrid {
    pub task: Task,
    pub datasets: Vec<String>,
    pub rows: Vec<GridRow>,
}

impl ReportGrid {
    pub fn new(task: Task, datasets: impl IntoIterator<Item = impl Into<String>>) -> Self {
        ReportGrid {
            task,
            datasets: datasets.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    /// Sets one cell, adding the row and column if they are new.
    pub fn set(&mut self, model: &str, variant: Variant, dataset: &str, f1: f64) {
        if !self.datasets.iter().any(|d| d == dataset) {
            self.datasets.push(dataset.to_string());
        }
        let row = match self.rows.iter().position(|r| r.model == model && r.variant == variant) {
            Some(i) => &mut self.rows[i],
            None => {
                self.rows.push(GridRow { model: model.to_string(), variant, cells: BTreeMap::new() });
                self.rows.last_mut().expect("just pushed")
            }
        };
        row.cells.insert(dataset.to_string(), f1);
    }

    pub fn get(&self, model: &str, variant: Variant, dataset: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.model == model && r.variant == variant)
            .and_then(|r| r.cells.get(dataset).copied())
    }

    /// Fixed-width table: a dataset header line, an `F1` line, then one
    /// line per row. Empty cells print as `-`.
    pub fn render_table(&self) -> String {
        let label_w = self.rows.iter().map(|r| r.label().len()).max().unwrap_or(0).max("Model".len());
        let col_w: Vec<usize> = self.datasets.iter().map(|d| d.len().max(6)).collect();
        let mut s = String::new();
        let _ = writeln!(s, "Task: {}", self.task);
        let _ = write!(s, "{:<label_w$}", "Model");
        for (d, w) in self.datasets.iter().zip(&col_w) {
            let _ = write!(s, "  {d:>w$}");
        }
        s.push('\n');
        let _ = write!(s, "{:<label_w$}", "");
        for w in &col_w {
            let _ = write!(s, "  {:>w$}", "F1");
        }
        s.push('\n');
        for row in &self.rows {
            let _ = write!(s, "{:<label_w$}", row.label());
            for (d, w) in self.datasets.iter().zip(&col_w) {
                match row.cells.get(d) {
                    Some(v) => {
                        let _ = write!(s, "  {v:>w$.3}");
                    }
                    None => {
                        let _ = write!(s, "  {:>w$}", "-");
                    }
                }
            }
            s.push('\n');
        }
        s
    }
}
