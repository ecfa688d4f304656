use super::PredictionTimeline;
use crate::error::{Error, Result};
use crate::tensor::{log_sum_exp, softmax};

/// Cross-entropy averaged over anticipation steps:
/// `L = -(1 / S_ant) Σ_t log softmax(s_t)_y`.
pub fn anticipation_loss(timeline: &PredictionTimeline, label: usize) -> Result<f64> {
    let scores: Vec<Vec<f64>> = timeline.steps.iter().map(|s| s.scores.clone()).collect();
    Ok(anticipation_loss_grad(&scores, label)?.0)
}

/// Loss and its gradient with respect to every step's scores.
pub fn anticipation_loss_grad(scores: &[Vec<f64>], label: usize) -> Result<(f64, Vec<Vec<f64>>)> {
    if scores.is_empty() {
        return Err(Error::shape("anticipation loss", "at least one step", 0));
    }
    let n = scores.len() as f64;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(scores.len());
    for s in scores {
        if label >= s.len() {
            return Err(Error::invalid("label", format!("{label} out of range for {} classes", s.len())));
        }
        loss += log_sum_exp(s) - s[label];
        let mut g = softmax(s)?;
        g[label] -= 1.0;
        g.iter_mut().for_each(|v| *v /= n);
        grads.push(g);
    }
    let loss = loss / n;
    if !loss.is_finite() {
        return Err(Error::NonFinite("anticipation loss"));
    }
    Ok((loss, grads))
}
