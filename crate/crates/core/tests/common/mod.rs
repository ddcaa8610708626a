//! Oracles shared by the integration test targets.

#![allow(dead_code)]

use bubblesim_core::agents::FeedbackType;
use bubblesim_core::recommender::{
    loss_and_gradient, predict_mf, train, FactorModel, FeatureField, FeatureVocabulary, FmModel,
    MfModel, TrainConfig, TrainSample,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn sample(user: usize, item: usize, label: f64, weight: f64) -> TrainSample {
    TrainSample {
        user,
        item,
        features: Vec::new(),
        label,
        weight,
        source: if label > 0.5 {
            FeedbackType::JustWatch
        } else {
            FeedbackType::Dislike
        },
    }
}

/// Maximum relative error between the analytic gradient and central finite
/// differences of the objective. Components where both values are below
/// `1e-8` in magnitude are compared in absolute terms.
pub fn fd_max_rel_error<M: FactorModel>(
    model: &M,
    samples: &[TrainSample],
    reg: f64,
    h: f64,
) -> f64 {
    let (_, analytic) = loss_and_gradient(model, samples, reg).unwrap();
    let mut worst: f64 = 0.0;
    for (idx, &a) in analytic.iter().enumerate() {
        let mut plus = model.clone();
        plus.params_mut()[idx] += h;
        let mut minus = model.clone();
        minus.params_mut()[idx] -= h;
        let lp = loss_and_gradient(&plus, samples, reg).unwrap().0;
        let lm = loss_and_gradient(&minus, samples, reg).unwrap().0;
        let numeric = (lp - lm) / (2.0 * h);
        let scale = a.abs().max(numeric.abs());
        let err = if scale < 1e-8 {
            (a - numeric).abs()
        } else {
            (a - numeric).abs() / scale
        };
        worst = worst.max(err);
    }
    worst
}

/// A random 3-user, 3-item, d=4 MF model with every pair as a sample and
/// mixed labels and weights.
pub fn small_mf_case(seed: u64) -> (MfModel, Vec<TrainSample>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = MfModel::new(3, 3, 4, 0.5, &mut rng);
    model.set_global_bias(rng.random_range(-0.5..0.5));
    for u in 0..3 {
        *model.user_bias_mut(u) = rng.random_range(-0.5..0.5);
        *model.item_bias_mut(u) = rng.random_range(-0.5..0.5);
    }
    let mut samples = Vec::new();
    for u in 0..3 {
        for i in 0..3 {
            let label = if (u + i) % 2 == 0 { 1.0 } else { 0.0 };
            samples.push(sample(u, i, label, rng.random_range(0.5..4.0)));
        }
    }
    (model, samples)
}

/// FM vocabulary of `n_users` user one-hots followed by `n_items` item one-hots.
pub fn user_item_vocabulary(n_users: usize, n_items: usize) -> FeatureVocabulary {
    FeatureVocabulary::new(vec![
        FeatureField::indexed("user", n_users),
        FeatureField::indexed("item", n_items),
    ])
}

/// FM whose parameters mirror `mf`: biases become linear weights, embeddings
/// become factor vectors.
pub fn fm_mirroring(mf: &MfModel) -> FmModel {
    let vocab = user_item_vocabulary(mf.n_users(), mf.n_items());
    let mut fm = FmModel::zeros(vocab, mf.dim());
    fm.set_global_bias(mf.global_bias());
    for u in 0..mf.n_users() {
        *fm.linear_mut(u) = mf.user_bias(u);
        fm.factors_mut(u).copy_from_slice(mf.user_factors(u));
    }
    for i in 0..mf.n_items() {
        let j = mf.n_users() + i;
        *fm.linear_mut(j) = mf.item_bias(i);
        fm.factors_mut(j).copy_from_slice(mf.item_factors(i));
    }
    fm
}

/// A 3-user, 3-item, d=4 FM with an extra two-value context field, and
/// samples activating user, item and context features.
pub fn small_fm_case(seed: u64) -> (FmModel, Vec<TrainSample>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = FeatureVocabulary::new(vec![
        FeatureField::indexed("user", 3),
        FeatureField::indexed("item", 3),
        FeatureField::indexed("context", 2),
    ]);
    let mut model = FmModel::new(vocab, 4, 0.5, &mut rng);
    model.set_global_bias(rng.random_range(-0.5..0.5));
    for j in 0..8 {
        *model.linear_mut(j) = rng.random_range(-0.5..0.5);
    }
    let mut samples = Vec::new();
    for u in 0..3 {
        for i in 0..3 {
            let mut s = sample(
                u,
                i,
                if (u * i) % 2 == 0 { 1.0 } else { 0.0 },
                rng.random_range(0.5..4.0),
            );
            s.features = vec![u, 3 + i, 6 + (u + i) % 2];
            samples.push(s);
        }
    }
    (model, samples)
}

pub fn unweighted_bce(predictions: &[f64], labels: &[f64]) -> f64 {
    let eps = 1e-7;
    let mut total = 0.0;
    for (&p, &y) in predictions.iter().zip(labels) {
        let p = p.clamp(eps, 1.0 - eps);
        total += -(y * p.ln() + (1.0 - y) * (1.0 - p).ln());
    }
    total / predictions.len() as f64
}

/// Area under the ROC curve by exhaustive pair comparison; ties count half.
pub fn auc(positives: &[f64], negatives: &[f64]) -> f64 {
    let mut wins = 0.0;
    for &p in positives {
        for &n in negatives {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    wins / (positives.len() * negatives.len()) as f64
}

/// Planted 2x2 block structure: users and items each split into two
/// clusters, within-cluster pairs positive. 80% of pairs train an MF model
/// for 50 epochs; returns the held-out AUC of within- over cross-cluster pairs.
pub fn planted_recovery_auc(seed: u64) -> f64 {
    let (n_users, n_items) = (40, 40);
    let cluster = |x: usize, n: usize| usize::from(x >= n / 2);
    let mut pairs: Vec<(usize, usize)> = (0..n_users)
        .flat_map(|u| (0..n_items).map(move |i| (u, i)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pairs.shuffle(&mut rng);
    let split = pairs.len() * 4 / 5;
    let label = |(u, i): (usize, usize)| {
        if cluster(u, n_users) == cluster(i, n_items) {
            1.0
        } else {
            0.0
        }
    };
    let samples: Vec<TrainSample> = pairs[..split]
        .iter()
        .map(|&(u, i)| sample(u, i, label((u, i)), 1.0))
        .collect();
    let config = TrainConfig {
        epochs: 50,
        ..TrainConfig::default()
    };
    let mut model = MfModel::new(n_users, n_items, config.dim, config.init_std, &mut rng);
    train(&mut model, &samples, &config, seed).unwrap();

    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for &(u, i) in &pairs[split..] {
        let p = predict_mf(&model, u, i).unwrap();
        if label((u, i)) > 0.5 {
            pos.push(p);
        } else {
            neg.push(p);
        }
    }
    auc(&pos, &neg)
}

/// Independent ECDF: sort, then for each distinct value count the values
/// at or below it.
pub fn sort_and_rank(values: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut distinct = sorted.clone();
    distinct.dedup();
    distinct
        .into_iter()
        .map(|v| {
            let rank = sorted.iter().filter(|&&x| x <= v).count();
            (v, rank as f64 / sorted.len() as f64)
        })
        .collect()
}
