use super::layers::sigmoid;

/// Mean squared error and its gradient with respect to each prediction.
pub fn mse(pred: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let m = pred.len().max(1) as f64;
    let loss = pred
        .iter()
        .zip(target)
        .map(|(p, y)| (p - y) * (p - y))
        .sum::<f64>()
        / m;
    let grad = pred.iter().zip(target).map(|(p, y)| 2.0 * (p - y) / m).collect();
    (loss, grad)
}

/// Binary cross-entropy of `sigmoid(logit)` against `label`, computed from
/// the logit for stability. Returns the loss and d loss / d logit.
pub fn bce_with_logits(logit: f64, label: f64) -> (f64, f64) {
    let loss = logit.max(0.0) - logit * label + (-logit.abs()).exp().ln_1p();
    (loss, sigmoid(logit) - label)
}
