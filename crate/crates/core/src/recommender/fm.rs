use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::recommender::{sigmoid, FactorModel, TrainSample};

/// One categorical field of the FM input, one-hot encoded over `values`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureField {
    pub name: String,
    pub values: Vec<String>,
}

impl FeatureField {
    pub fn new(name: impl Into<String>, values: Vec<String>) -> Self {
        FeatureField {
            name: name.into(),
            values,
        }
    }

    /// Field whose values are `0..n` rendered as strings.
    pub fn indexed(name: impl Into<String>, n: usize) -> Self {
        FeatureField::new(name, (0..n).map(|i| i.to_string()).collect())
    }
}

/// Ordered list of one-hot fields; a feature index is the field offset plus
/// the value position inside the field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<FeatureField>", into = "Vec<FeatureField>")]
pub struct FeatureVocabulary {
    fields: Vec<FeatureField>,
    offsets: Vec<usize>,
    lookup: Vec<HashMap<String, usize>>,
}

impl From<Vec<FeatureField>> for FeatureVocabulary {
    fn from(fields: Vec<FeatureField>) -> Self {
        FeatureVocabulary::new(fields)
    }
}

impl From<FeatureVocabulary> for Vec<FeatureField> {
    fn from(v: FeatureVocabulary) -> Self {
        v.fields
    }
}

impl FeatureVocabulary {
    pub fn new(fields: Vec<FeatureField>) -> Self {
        let mut offsets = Vec::with_capacity(fields.len());
        let mut next = 0;
        for field in &fields {
            offsets.push(next);
            next += field.values.len();
        }
        let lookup = fields
            .iter()
            .map(|f| {
                f.values
                    .iter()
                    .enumerate()
                    .map(|(i, v)| (v.clone(), i))
                    .collect()
            })
            .collect();
        FeatureVocabulary {
            fields,
            offsets,
            lookup,
        }
    }

    pub fn len(&self) -> usize {
        self.fields.iter().map(|f| f.values.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn fields(&self) -> &[FeatureField] {
        &self.fields
    }

    pub fn field_position(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }

    /// Feature index of the `position`-th value of field `field`.
    pub fn index(&self, field: usize, position: usize) -> usize {
        debug_assert!(position < self.fields[field].values.len());
        self.offsets[field] + position
    }

    /// Feature index of `value` in the named field.
    pub fn index_of(&self, field: &str, value: &str) -> Option<usize> {
        let f = self.field_position(field)?;
        self.lookup[f].get(value).map(|&p| self.offsets[f] + p)
    }
}

/// Second-order factorization machine over binary features:
/// `sigmoid(w0 + sum_j w_j + sum_{j<k} <v_j, v_k>)`.
///
/// Flat layout: `[w0 | w (features) | v (features x dim)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "FmParts", try_from = "FmParts")]
pub struct FmModel {
    vocabulary: FeatureVocabulary,
    dim: usize,
    params: Vec<f64>,
}

impl FmModel {
    pub fn zeros(vocabulary: FeatureVocabulary, dim: usize) -> Self {
        let n = vocabulary.len();
        FmModel {
            vocabulary,
            dim,
            params: vec![0.0; 1 + n + n * dim],
        }
    }

    pub fn new<R: Rng + ?Sized>(
        vocabulary: FeatureVocabulary,
        dim: usize,
        init_std: f64,
        rng: &mut R,
    ) -> Self {
        let mut model = FmModel::zeros(vocabulary, dim);
        let normal = Normal::new(0.0, init_std).expect("init_std must be finite and >= 0");
        let start = model.factor_offset();
        for p in &mut model.params[start..] {
            *p = normal.sample(rng);
        }
        model
    }

    pub fn vocabulary(&self) -> &FeatureVocabulary {
        &self.vocabulary
    }

    pub fn n_features(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn factor_offset(&self) -> usize {
        1 + self.n_features()
    }

    pub fn global_bias(&self) -> f64 {
        self.params[0]
    }

    pub fn set_global_bias(&mut self, w0: f64) {
        self.params[0] = w0;
    }

    pub fn linear(&self, j: usize) -> f64 {
        self.params[1 + j]
    }

    pub fn linear_mut(&mut self, j: usize) -> &mut f64 {
        &mut self.params[1 + j]
    }

    pub fn factors(&self, j: usize) -> &[f64] {
        let o = self.factor_offset() + j * self.dim;
        &self.params[o..o + self.dim]
    }

    pub fn factors_mut(&mut self, j: usize) -> &mut [f64] {
        let o = self.factor_offset() + j * self.dim;
        &mut self.params[o..o + self.dim]
    }

    pub fn check_features(&self, features: &[usize]) -> Result<()> {
        let n = self.n_features();
        for (pos, &j) in features.iter().enumerate() {
            if j >= n {
                return Err(Error::IndexOutOfRange {
                    kind: "feature",
                    index: j,
                    size: n,
                });
            }
            if features[..pos].contains(&j) {
                return Err(Error::DuplicateFeature(j));
            }
        }
        Ok(())
    }

    /// Logit using `0.5 * sum_f [(sum_j v_jf)^2 - sum_j v_jf^2]` for the
    /// pairwise term, linear in the number of active features.
    pub fn logit_features(&self, features: &[usize]) -> Result<f64> {
        self.check_features(features)?;
        let mut z = self.global_bias();
        for &j in features {
            z += self.linear(j);
        }
        let mut pairwise = 0.0;
        for f in 0..self.dim {
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for &j in features {
                let v = self.factors(j)[f];
                sum += v;
                sum_sq += v * v;
            }
            pairwise += sum * sum - sum_sq;
        }
        Ok(z + 0.5 * pairwise)
    }
}

pub fn predict_fm(model: &FmModel, features: &[usize]) -> Result<f64> {
    model.logit_features(features).map(sigmoid)
}

impl FactorModel for FmModel {
    fn logit(&self, sample: &TrainSample) -> Result<f64> {
        self.logit_features(&sample.features)
    }

    fn logit_partials(&self, sample: &TrainSample, out: &mut Vec<(usize, f64)>) {
        let features = &sample.features;
        let d = self.dim;
        out.clear();
        out.push((0, 1.0));
        for &j in features {
            out.push((1 + j, 1.0));
        }
        // d/dv_jf = sum_k v_kf - v_jf
        let mut sums = vec![0.0; d];
        for &j in features {
            for (s, v) in sums.iter_mut().zip(self.factors(j)) {
                *s += v;
            }
        }
        let base = self.factor_offset();
        for &j in features {
            for (f, s) in sums.iter().enumerate() {
                let idx = base + j * d + f;
                out.push((idx, s - self.params[idx]));
            }
        }
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn is_factor(&self, index: usize) -> bool {
        index >= self.factor_offset()
    }
}

#[derive(Serialize, Deserialize)]
struct FmParts {
    dim: usize,
    vocabulary: FeatureVocabulary,
    global_bias: f64,
    linear: Vec<f64>,
    factors: Vec<Vec<f64>>,
}

impl From<FmModel> for FmParts {
    fn from(m: FmModel) -> Self {
        let n = m.n_features();
        FmParts {
            dim: m.dim,
            global_bias: m.global_bias(),
            linear: (0..n).map(|j| m.linear(j)).collect(),
            factors: (0..n).map(|j| m.factors(j).to_vec()).collect(),
            vocabulary: m.vocabulary,
        }
    }
}

impl TryFrom<FmParts> for FmModel {
    type Error = String;

    fn try_from(parts: FmParts) -> std::result::Result<Self, String> {
        let n = parts.vocabulary.len();
        if parts.linear.len() != n || parts.factors.len() != n {
            return Err(format!("expected {n} feature rows"));
        }
        if parts.factors.iter().any(|row| row.len() != parts.dim) {
            return Err(format!("factor rows must have dimension {}", parts.dim));
        }
        let mut params = Vec::with_capacity(1 + n + n * parts.dim);
        params.push(parts.global_bias);
        params.extend(parts.linear);
        params.extend(parts.factors.into_iter().flatten());
        Ok(FmModel {
            vocabulary: parts.vocabulary,
            dim: parts.dim,
            params,
        })
    }
}
