use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::recommender::loss::sample_loss;
use crate::recommender::{sigmoid, FactorModel, TrainSample};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub dim: usize,
    pub lr: f64,
    pub reg: f64,
    pub epochs: usize,
    pub init_std: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 16,
            lr: 0.05,
            reg: 1e-4,
            epochs: 5,
            init_std: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    /// Mean per-sample weighted loss seen during each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Per-sample SGD on the weighted BCE with L2 on factor parameters.
///
/// Sample order is reshuffled every epoch from `seed`, so the result is a
/// pure function of `(model, samples, config, seed)`. Training continues
/// from the current parameters.
pub fn train<M: FactorModel>(
    model: &mut M,
    samples: &[TrainSample],
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainReport> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    for sample in samples {
        model.logit(sample)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut partials = Vec::new();
    let mut report = TrainReport::default();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &s in &order {
            let sample = &samples[s];
            let p = sigmoid(model.logit(sample)?);
            let loss = sample_loss(p, sample);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, sample: s });
            }
            total += loss;
            let dlogit = sample.weight * (p - sample.label);
            model.logit_partials(sample, &mut partials);
            // Every parameter index appears at most once in `partials`, so
            // each update reads its own pre-step value.
            for &(idx, d) in &partials {
                let mut g = dlogit * d;
                if model.is_factor(idx) {
                    g += config.reg * model.params()[idx];
                }
                model.params_mut()[idx] -= config.lr * g;
            }
        }
        let mean = total / samples.len() as f64;
        log::debug!("epoch {epoch}: mean weighted loss {mean:.6}");
        report.epoch_losses.push(mean);
    }
    if !model.is_finite() {
        return Err(Error::NonFiniteLoss {
            epoch: config.epochs,
            sample: 0,
        });
    }
    Ok(report)
}
