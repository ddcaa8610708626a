use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::recommender::{sigmoid, FactorModel, TrainSample};

/// Matrix factorization: `sigmoid(b + b_u + b_i + <p_u, q_i>)`.
///
/// Flat layout: `[b | b_u (users) | b_i (items) | p (users x dim) | q (items x dim)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "MfParts", try_from = "MfParts")]
pub struct MfModel {
    n_users: usize,
    n_items: usize,
    dim: usize,
    params: Vec<f64>,
}

impl MfModel {
    pub fn zeros(n_users: usize, n_items: usize, dim: usize) -> Self {
        let len = 1 + n_users + n_items + (n_users + n_items) * dim;
        MfModel {
            n_users,
            n_items,
            dim,
            params: vec![0.0; len],
        }
    }

    /// Biases start at zero; embeddings are drawn from `Normal(0, init_std)`.
    pub fn new<R: Rng + ?Sized>(
        n_users: usize,
        n_items: usize,
        dim: usize,
        init_std: f64,
        rng: &mut R,
    ) -> Self {
        let mut model = MfModel::zeros(n_users, n_items, dim);
        let normal = Normal::new(0.0, init_std).expect("init_std must be finite and >= 0");
        let start = model.user_factor_offset();
        for p in &mut model.params[start..] {
            *p = normal.sample(rng);
        }
        model
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn user_bias_offset(&self) -> usize {
        1
    }

    fn item_bias_offset(&self) -> usize {
        1 + self.n_users
    }

    fn user_factor_offset(&self) -> usize {
        1 + self.n_users + self.n_items
    }

    fn item_factor_offset(&self) -> usize {
        self.user_factor_offset() + self.n_users * self.dim
    }

    pub fn global_bias(&self) -> f64 {
        self.params[0]
    }

    pub fn set_global_bias(&mut self, b: f64) {
        self.params[0] = b;
    }

    pub fn user_bias(&self, u: usize) -> f64 {
        self.params[self.user_bias_offset() + u]
    }

    pub fn user_bias_mut(&mut self, u: usize) -> &mut f64 {
        let o = self.user_bias_offset();
        &mut self.params[o + u]
    }

    pub fn item_bias(&self, i: usize) -> f64 {
        self.params[self.item_bias_offset() + i]
    }

    pub fn item_bias_mut(&mut self, i: usize) -> &mut f64 {
        let o = self.item_bias_offset();
        &mut self.params[o + i]
    }

    pub fn user_factors(&self, u: usize) -> &[f64] {
        let o = self.user_factor_offset() + u * self.dim;
        &self.params[o..o + self.dim]
    }

    pub fn user_factors_mut(&mut self, u: usize) -> &mut [f64] {
        let o = self.user_factor_offset() + u * self.dim;
        &mut self.params[o..o + self.dim]
    }

    pub fn item_factors(&self, i: usize) -> &[f64] {
        let o = self.item_factor_offset() + i * self.dim;
        &self.params[o..o + self.dim]
    }

    pub fn item_factors_mut(&mut self, i: usize) -> &mut [f64] {
        let o = self.item_factor_offset() + i * self.dim;
        &mut self.params[o..o + self.dim]
    }

    fn check(&self, user: usize, item: usize) -> Result<()> {
        if user >= self.n_users {
            return Err(Error::IndexOutOfRange {
                kind: "user",
                index: user,
                size: self.n_users,
            });
        }
        if item >= self.n_items {
            return Err(Error::IndexOutOfRange {
                kind: "item",
                index: item,
                size: self.n_items,
            });
        }
        Ok(())
    }

    pub fn logit_pair(&self, user: usize, item: usize) -> Result<f64> {
        self.check(user, item)?;
        let dot: f64 = self
            .user_factors(user)
            .iter()
            .zip(self.item_factors(item))
            .map(|(p, q)| p * q)
            .sum();
        Ok(self.global_bias() + self.user_bias(user) + self.item_bias(item) + dot)
    }
}

pub fn predict_mf(model: &MfModel, user: usize, item: usize) -> Result<f64> {
    model.logit_pair(user, item).map(sigmoid)
}

impl FactorModel for MfModel {
    fn logit(&self, sample: &TrainSample) -> Result<f64> {
        self.logit_pair(sample.user, sample.item)
    }

    fn logit_partials(&self, sample: &TrainSample, out: &mut Vec<(usize, f64)>) {
        let (u, i, d) = (sample.user, sample.item, self.dim);
        out.clear();
        out.push((0, 1.0));
        out.push((self.user_bias_offset() + u, 1.0));
        out.push((self.item_bias_offset() + i, 1.0));
        let (pu, qi) = (
            self.user_factor_offset() + u * d,
            self.item_factor_offset() + i * d,
        );
        for f in 0..d {
            out.push((pu + f, self.params[qi + f]));
            out.push((qi + f, self.params[pu + f]));
        }
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn is_factor(&self, index: usize) -> bool {
        index >= self.user_factor_offset()
    }
}

/// Named-field checkpoint form.
#[derive(Serialize, Deserialize)]
struct MfParts {
    n_users: usize,
    n_items: usize,
    dim: usize,
    global_bias: f64,
    user_bias: Vec<f64>,
    item_bias: Vec<f64>,
    user_factors: Vec<Vec<f64>>,
    item_factors: Vec<Vec<f64>>,
}

impl From<MfModel> for MfParts {
    fn from(m: MfModel) -> Self {
        MfParts {
            n_users: m.n_users,
            n_items: m.n_items,
            dim: m.dim,
            global_bias: m.global_bias(),
            user_bias: (0..m.n_users).map(|u| m.user_bias(u)).collect(),
            item_bias: (0..m.n_items).map(|i| m.item_bias(i)).collect(),
            user_factors: (0..m.n_users).map(|u| m.user_factors(u).to_vec()).collect(),
            item_factors: (0..m.n_items).map(|i| m.item_factors(i).to_vec()).collect(),
        }
    }
}

impl TryFrom<MfParts> for MfModel {
    type Error = String;

    fn try_from(parts: MfParts) -> std::result::Result<Self, String> {
        let MfParts {
            n_users,
            n_items,
            dim,
            ..
        } = parts;
        if parts.user_bias.len() != n_users || parts.user_factors.len() != n_users {
            return Err(format!("expected {n_users} user rows"));
        }
        if parts.item_bias.len() != n_items || parts.item_factors.len() != n_items {
            return Err(format!("expected {n_items} item rows"));
        }
        if parts
            .user_factors
            .iter()
            .chain(&parts.item_factors)
            .any(|row| row.len() != dim)
        {
            return Err(format!("embedding rows must have dimension {dim}"));
        }
        let mut params = Vec::with_capacity(1 + n_users + n_items + (n_users + n_items) * dim);
        params.push(parts.global_bias);
        params.extend(parts.user_bias);
        params.extend(parts.item_bias);
        params.extend(parts.user_factors.into_iter().flatten());
        params.extend(parts.item_factors.into_iter().flatten());
        Ok(MfModel {
            n_users,
            n_items,
            dim,
            params,
        })
    }
}
