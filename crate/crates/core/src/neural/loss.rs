use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::{shape_err, NeuralError};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise log-softmax.
pub fn log_softmax_rows(logits: ArrayView2<f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

/// Class-weighted cross-entropy over T rows of C logits:
/// `sum_t w[y_t] * -log softmax(logits_t)[y_t] / sum_t w[y_t]`.
/// Returns the loss and its gradient with respect to the logits.
pub fn weighted_cross_entropy(
    logits: ArrayView2<f64>,
    targets: &[usize],
    class_weights: &[f64],
) -> Result<(f64, Array2<f64>), NeuralError> {
    let (t_len, classes) = logits.dim();
    if targets.len() != t_len {
        return Err(shape_err(format!("{} targets for {t_len} rows", targets.len())));
    }
    if class_weights.len() != classes {
        return Err(shape_err(format!(
            "{} class weights for {classes} classes",
            class_weights.len()
        )));
    }
    if class_weights.iter().any(|&w| !w.is_finite() || w <= 0.0) {
        return Err(NeuralError::InvalidArgument("class weights must be positive".into()));
    }
    if let Some(&bad) = targets.iter().find(|&&y| y >= classes) {
        return Err(NeuralError::InvalidArgument(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    let log_probs = log_softmax_rows(logits);
    let total_weight: f64 = targets.iter().map(|&y| class_weights[y]).sum();
    let mut grad = log_probs.mapv(f64::exp);
    if t_len == 0 {
        return Ok((0.0, grad));
    }
    let mut loss = 0.0;
    for (t, &y) in targets.iter().enumerate() {
        let w = class_weights[y] / total_weight;
        loss -= w * log_probs[[t, y]];
        let mut row = grad.row_mut(t);
        row[y] -= 1.0;
        row.mapv_inplace(|g| g * w);
    }
    Ok((loss, grad))
}

/// Mean binary cross-entropy on raw logits, computed stably, with its gradient.
pub fn bce_with_logits(logits: &Array1<f64>, targets: &Array1<f64>) -> Result<(f64, Array1<f64>), NeuralError> {
    if logits.len() != targets.len() {
        return Err(shape_err(format!(
            "{} logits for {} targets",
            logits.len(),
            targets.len()
        )));
    }
    let n = logits.len().max(1) as f64;
    let loss: f64 = logits
        .iter()
        .zip(targets)
        .map(|(&z, &y)| z.max(0.0) - z * y + (-z.abs()).exp().ln_1p())
        .sum::<f64>()
        / n;
    let grad = logits
        .iter()
        .zip(targets)
        .map(|(&z, &y)| (sigmoid(z) - y) / n)
        .collect();
    Ok((loss, grad))
}
