use crate::error::{Error, Result};
use crate::recommender::{sigmoid, FactorModel, TrainSample};

/// Predictions are clamped to `[CLAMP_EPS, 1 - CLAMP_EPS]` before taking logs.
pub const CLAMP_EPS: f64 = 1e-7;

pub(crate) fn clamp(p: f64) -> f64 {
    p.clamp(CLAMP_EPS, 1.0 - CLAMP_EPS)
}

/// Weighted loss of one sample, `-w [y ln p + (1 - y) ln(1 - p)]`.
pub(crate) fn sample_loss(prediction: f64, sample: &TrainSample) -> f64 {
    let p = clamp(prediction);
    let y = sample.label;
    -sample.weight * (y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Feedback-weighted binary cross entropy:
/// `-(1/N) sum_i w_i [y_i ln p_i + (1 - y_i) ln(1 - p_i)]`.
pub fn weighted_bce(predictions: &[f64], samples: &[TrainSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    if predictions.len() != samples.len() {
        return Err(Error::InvalidMetricInput(format!(
            "{} predictions for {} samples",
            predictions.len(),
            samples.len()
        )));
    }
    let total: f64 = predictions
        .iter()
        .zip(samples)
        .map(|(&p, s)| sample_loss(p, s))
        .sum();
    Ok(total / samples.len() as f64)
}

/// Objective `weighted_bce + (reg / 2) * ||factors||^2` and its gradient
/// with respect to the flat parameter vector.
///
/// The gradient is that of the unclamped loss, `w (p - y)` per unit logit;
/// it agrees with the clamped objective wherever no prediction is clamped.
pub fn loss_and_gradient<M: FactorModel>(
    model: &M,
    samples: &[TrainSample],
    reg: f64,
) -> Result<(f64, Vec<f64>)> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let n = samples.len() as f64;
    let params = model.params();
    let mut grad = vec![0.0; params.len()];
    let mut partials = Vec::new();
    let mut predictions = Vec::with_capacity(samples.len());
    for sample in samples {
        let p = sigmoid(model.logit(sample)?);
        predictions.push(p);
        let dlogit = sample.weight * (p - sample.label) / n;
        model.logit_partials(sample, &mut partials);
        for &(idx, d) in &partials {
            grad[idx] += dlogit * d;
        }
    }
    let mut loss = weighted_bce(&predictions, samples)?;
    if reg != 0.0 {
        for (idx, (&p, g)) in params.iter().zip(grad.iter_mut()).enumerate() {
            if model.is_factor(idx) {
                loss += 0.5 * reg * p * p;
                *g += reg * p;
            }
        }
    }
    Ok((loss, grad))
}
