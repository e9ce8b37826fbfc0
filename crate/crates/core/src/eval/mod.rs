//! Metrics, topic-extraction scoring and relabeling protocols.

mod breakdown;
mod cte;
mod metrics;
mod report;
mod sampling;

pub use breakdown::{type_breakdown, Breakdowns};
pub use cte::{cte_score, is_zeroed, CteResult};
pub use metrics::{f1_binary, f1_macro, ClassLabel, ConfusionMatrix};
pub use report::{evaluate_detection, evaluate_extraction, evaluate_stance, EvalReport, GridRow, ReportGrid};
pub use sampling::{
    class_quotas, merge_annotations, read_annotations_csv, read_keyfile_csv, read_sheet_csv, stratified_sample,
    write_keyfile_csv, write_sheet_csv, Annotation, AnnotationSheet, ClassKey, KeyRow, SheetRow, META_PROVENANCE,
    META_SHEET_ID, PROVENANCE_RELABELED,
};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("length mismatch: {preds} predictions vs {golds} gold labels")]
    LengthMismatch { preds: usize, golds: usize },
    #[error("nothing to evaluate")]
    Empty,
    #[error("embedding {stage} topics failed ({n} instances, {zeroed_count} zeroed before embedding): {message}")]
    Embedding {
        stage: &'static str,
        n: usize,
        zeroed_count: usize,
        message: String,
    },
    #[error("sampling: {0}")]
    Sample(String),
    #[error("annotations: {0}")]
    Annotation(String),
    #[error("record for unknown instance '{0}'")]
    Join(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
