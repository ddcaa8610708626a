//! Factorization recommenders trained on feedback-weighted binary cross
//! entropy, plus top-k serving and cold-start slates.
//!
//! Both model kinds keep every parameter in one flat vector. A model exposes
//! the sparse partial derivatives of its logit for a sample; the batch
//! gradient, the per-sample SGD step and the finite-difference checks in the
//! tests all go through that single routine.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::FeedbackType;
use crate::error::{Error, Result};

mod fm;
mod loss;
mod mf;
mod serve;
mod train;
mod weights;

pub use fm::{predict_fm, FeatureField, FeatureVocabulary, FmModel};
pub use loss::{loss_and_gradient, weighted_bce, CLAMP_EPS};
pub use mf::{predict_mf, MfModel};
pub use serve::{cold_start_slate, recommend, round_half_even, Cscmr, PairScorer};
pub use train::{train, TrainConfig, TrainReport};
pub use weights::{feedback_to_sample, FeedbackWeights, LabelMode, WeightStrategy};

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// One weighted training example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSample {
    pub user: usize,
    pub item: usize,
    /// Active FM feature indices; empty for MF.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub features: Vec<usize>,
    pub label: f64,
    pub weight: f64,
    pub source: FeedbackType,
}

/// Common interface of the MF and FM models.
pub trait FactorModel: Clone + Send + Sync {
    /// Pre-sigmoid score.
    fn logit(&self, sample: &TrainSample) -> Result<f64>;

    /// Partial derivatives of the logit as `(parameter index, value)` pairs,
    /// evaluated at the current parameters.
    fn logit_partials(&self, sample: &TrainSample, out: &mut Vec<(usize, f64)>);

    fn params(&self) -> &[f64];

    fn params_mut(&mut self) -> &mut [f64];

    /// Whether the parameter at `index` is an embedding/factor component
    /// (L2-regularized) rather than a bias or linear weight.
    fn is_factor(&self, index: usize) -> bool;

    fn predict(&self, sample: &TrainSample) -> Result<f64> {
        self.logit(sample).map(sigmoid)
    }

    fn is_finite(&self) -> bool {
        self.params().iter().all(|p| p.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Checkpoint {
    Mf(MfModel),
    Fm(FmModel),
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = BufWriter::new(file);
        serde_json::to_writer(&mut writer, self)?;
        writer.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
