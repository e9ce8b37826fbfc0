//! Conclusion/topic extraction score.

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::backend::{check_embeddings, Embedder};
use crate::text::normalize_topic;
use crate::types::{Topic, NO_TOPIC};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CteResult {
    /// Mean instance similarity over all `n` instances.
    pub score: f64,
    /// Fraction of instances with a non-abstaining prediction.
    pub coverage: f64,
    pub zeroed_count: usize,
    pub n: usize,
    pub per_instance: Vec<f64>,
}

fn embed_text(topic: &Topic) -> String {
    if topic.is_no_topic() {
        normalize_topic(NO_TOPIC)
    } else {
        normalize_topic(topic.value())
    }
}

/// Whether the zeroing rule applies to an instance.
pub fn is_zeroed(gold_is_argument: bool, pred: &Topic) -> bool {
    !gold_is_argument && !pred.is_no_topic()
}

/// Scores predicted topics against gold topics by embedding cosine.
///
/// A prediction on a non-argument that does not abstain scores 0. Everything
/// else scores `max(0, cos)`. Golds and predictions are embedded in one batch
/// each.
pub async fn cte_score<E: Embedder + ?Sized>(
    gold_topics: &[Topic],
    pred_topics: &[Topic],
    gold_is_argument: &[bool],
    embedder: &E,
) -> Result<CteResult, EvalError> {
    let n = gold_topics.len();
    if pred_topics.len() != n {
        return Err(EvalError::LengthMismatch { preds: pred_topics.len(), golds: n });
    }
    if gold_is_argument.len() != n {
        return Err(EvalError::LengthMismatch { preds: gold_is_argument.len(), golds: n });
    }
    if n == 0 {
        return Err(EvalError::Empty);
    }
    let zeroed: Vec<bool> = gold_is_argument
        .iter()
        .zip(pred_topics)
        .map(|(&arg, p)| is_zeroed(arg, p))
        .collect();
    let zeroed_count = zeroed.iter().filter(|z| **z).count();
    let covered = pred_topics.iter().filter(|p| !p.is_no_topic()).count();

    let gold_texts: Vec<String> = gold_topics.iter().map(embed_text).collect();
    let pred_texts: Vec<String> = pred_topics.iter().map(embed_text).collect();
    let embed_err = |stage: &'static str, message: String| EvalError::Embedding {
        stage,
        n,
        zeroed_count,
        message,
    };
    let gold_emb = embedder
        .embed(&gold_texts)
        .await
        .map_err(|e| embed_err("gold", e.to_string()))?;
    check_embeddings(gold_texts.len(), &gold_emb).map_err(|e| embed_err("gold", e.to_string()))?;
    let pred_emb = embedder
        .embed(&pred_texts)
        .await
        .map_err(|e| embed_err("pred", e.to_string()))?;
    check_embeddings(pred_texts.len(), &pred_emb).map_err(|e| embed_err("pred", e.to_string()))?;

    let per_instance: Vec<f64> = (0..n)
        .map(|i| {
            if zeroed[i] {
                0.0
            } else {
                gold_emb[i].cosine(&pred_emb[i]).clamp(0.0, 1.0)
            }
        })
        .collect();
    let score = per_instance.iter().sum::<f64>() / n as f64;
    Ok(CteResult {
        score,
        coverage: covered as f64 / n as f64,
        zeroed_count,
        n,
        per_instance,
    })
}
