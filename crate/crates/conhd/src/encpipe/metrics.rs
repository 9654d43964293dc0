//! Classification metrics.

use serde::{Deserialize, Serialize};

use crate::encpipe::PipelineError;

/// Metrics record emitted by evaluation. For single-label multiclass
/// prediction, micro-F1 equals plain accuracy. Macro-F1 averages per-class
/// F1 over all classes, counting classes absent from both predictions and
/// labels as 0.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub mae: Option<f64>,
    pub per_class_f1: Vec<f64>,
}

pub fn classification_metrics(
    preds: &[usize],
    labels: &[usize],
    num_classes: usize,
) -> Result<MetricsReport, PipelineError> {
    if preds.len() != labels.len() {
        return Err(PipelineError::Validation(format!(
            "{} predictions vs {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if preds.is_empty() {
        return Err(PipelineError::Validation("no predictions to score".into()));
    }
    if let Some(&bad) = preds.iter().chain(labels).find(|&&x| x >= num_classes) {
        return Err(PipelineError::Validation(format!(
            "class {bad} out of range for {num_classes} classes"
        )));
    }
    let mut tp = vec![0usize; num_classes];
    let mut fp = vec![0usize; num_classes];
    let mut fn_ = vec![0usize; num_classes];
    let mut correct = 0usize;
    for (&p, &l) in preds.iter().zip(labels) {
        if p == l {
            tp[p] += 1;
            correct += 1;
        } else {
            fp[p] += 1;
            fn_[l] += 1;
        }
    }
    let per_class_f1: Vec<f64> = (0..num_classes)
        .map(|c| {
            let denom = 2 * tp[c] + fp[c] + fn_[c];
            if denom == 0 {
                0.0
            } else {
                2.0 * tp[c] as f64 / denom as f64
            }
        })
        .collect();
    let macro_f1 = per_class_f1.iter().sum::<f64>() / num_classes as f64;
    let micro_f1 = correct as f64 / preds.len() as f64;
    Ok(MetricsReport { micro_f1, macro_f1, mae: None, per_class_f1 })
}
