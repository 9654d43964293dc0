//! Training losses and prediction helpers.

use std::rc::Rc;

use ndarray::ArrayView2;

use crate::autodiff::{Tape, Var};
use crate::neural::ModelError;

/// Mean cross-entropy over rows via max-subtracted log-softmax.
pub fn cross_entropy_loss(
    tape: &mut Tape,
    logits: Var,
    labels: &[usize],
) -> Result<Var, ModelError> {
    let (rows, classes) = tape.value(logits).dim();
    if labels.len() != rows {
        return Err(ModelError::Shape(format!(
            "{} labels for {rows} logit rows",
            labels.len()
        )));
    }
    for &label in labels {
        if label >= classes {
            return Err(ModelError::LabelOutOfRange { label, classes });
        }
    }
    let ls = tape.log_softmax_rows(logits);
    let picked = tape.pick_cols(ls, Rc::new(labels.to_vec()))?;
    let mean = tape.mean_all(picked);
    Ok(tape.scale(mean, -1.0))
}

/// Mean absolute error against a constant target.
pub fn mae_loss(
    tape: &mut Tape,
    pred: Var,
    target: &ArrayView2<f64>,
) -> Result<Var, ModelError> {
    if tape.value(pred).dim() != target.dim() {
        return Err(ModelError::Shape(format!(
            "prediction is {:?}, target is {:?}",
            tape.value(pred).dim(),
            target.dim()
        )));
    }
    let t = tape.leaf(target.to_owned());
    let diff = tape.sub(pred, t)?;
    let abs = tape.abs(diff);
    Ok(tape.mean_all(abs))
}

/// Plain mean absolute error.
pub fn mae(pred: &ArrayView2<f64>, target: &ArrayView2<f64>) -> f64 {
    let n = pred.len() as f64;
    pred.iter().zip(target.iter()).map(|(a, b)| (a - b).abs()).sum::<f64>() / n
}

/// Row-wise argmax (ties resolved to the lowest class id).
pub fn argmax_rows(logits: &ArrayView2<f64>) -> Vec<usize> {
    logits
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (c, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}
