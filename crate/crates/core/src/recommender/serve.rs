use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;

use rand::seq::{IndexedRandom, SliceRandom};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::error::{Error, Result};
use crate::personas::UserProfile;
use crate::recommender::MfModel;

/// Scores (user, item) pairs for ranking. Any strictly increasing transform
/// of the predicted probability ranks identically; implementations return
/// the logit so that saturated probabilities do not collapse into ties.
pub trait PairScorer: Sync {
    fn score(&self, user: usize, item: usize) -> Result<f64>;
}

impl PairScorer for MfModel {
    fn score(&self, user: usize, item: usize) -> Result<f64> {
        self.logit_pair(user, item)
    }
}

/// The `k` highest-scoring items not in `exclusions`, best first. Equal
/// scores are ordered by ascending `item_id`.
pub fn recommend<S: PairScorer + ?Sized>(
    scorer: &S,
    user: usize,
    k: usize,
    exclusions: &HashSet<usize>,
    catalog: &Catalog,
) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    let mut scored = Vec::with_capacity(catalog.len());
    for item in 0..catalog.len() {
        if !exclusions.contains(&item) {
            scored.push((scorer.score(user, item)?, item));
        }
    }
    if scored.len() < k {
        return Err(Error::InsufficientCandidates {
            required: k,
            available: scored.len(),
        });
    }
    let order = |a: &(f64, usize), b: &(f64, usize)| -> Ordering {
        b.0.total_cmp(&a.0)
            .then_with(|| catalog.item(a.1).item_id.cmp(&catalog.item(b.1).item_id))
    };
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, order);
        scored.truncate(k);
    }
    scored.sort_by(order);
    Ok(scored.into_iter().map(|(_, item)| item).collect())
}

/// Cold-start category matching ratio, as a percentage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Cscmr(u8);

impl Cscmr {
    pub const ALLOWED: [u8; 5] = [0, 25, 50, 75, 100];

    pub fn new(percent: u8) -> Result<Self> {
        if Cscmr::ALLOWED.contains(&percent) {
            Ok(Cscmr(percent))
        } else {
            Err(Error::InvalidConfig(format!(
                "cscmr must be one of {:?}, got {percent}",
                Cscmr::ALLOWED
            )))
        }
    }

    pub fn percent(self) -> u8 {
        self.0
    }

    /// Number of interest-aligned items in a slate of `k`.
    pub fn aligned_count(self, k: usize) -> usize {
        round_half_even(self.0 as usize * k, 100)
    }
}

impl Default for Cscmr {
    fn default() -> Self {
        Cscmr(50)
    }
}

impl TryFrom<u8> for Cscmr {
    type Error = Error;

    fn try_from(value: u8) -> Result<Self> {
        Cscmr::new(value)
    }
}

impl From<Cscmr> for u8 {
    fn from(c: Cscmr) -> u8 {
        c.0
    }
}

impl fmt::Display for Cscmr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// `numerator / denominator` rounded to the nearest integer, ties to even.
pub fn round_half_even(numerator: usize, denominator: usize) -> usize {
    let q = numerator / denominator;
    let r = numerator % denominator;
    match (2 * r).cmp(&denominator) {
        Ordering::Less => q,
        Ordering::Greater => q + 1,
        Ordering::Equal => q + (q % 2),
    }
}

/// First-iteration slate: `cscmr`% of `k` (rounded half to even) drawn from
/// items whose level-1 category is one of the user's initial interests, the
/// rest from the other items, then shuffled. A short pool is backfilled from
/// the other pool.
pub fn cold_start_slate(
    profile: &UserProfile,
    catalog: &Catalog,
    cscmr: Cscmr,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    if catalog.len() < k {
        return Err(Error::InsufficientCandidates {
            required: k,
            available: catalog.len(),
        });
    }
    let (aligned, other): (Vec<usize>, Vec<usize>) =
        (0..catalog.len()).partition(|&i| profile.is_interested_in(&catalog.item(i).category_l1));

    let mut want_aligned = cscmr.aligned_count(k);
    let mut want_other = k - want_aligned;
    if aligned.len() < want_aligned {
        log::warn!(
            "{}: only {} interest-aligned items for {} aligned slots, backfilling",
            profile.user_id,
            aligned.len(),
            want_aligned
        );
        want_other += want_aligned - aligned.len();
        want_aligned = aligned.len();
    } else if other.len() < want_other {
        log::warn!(
            "{}: only {} non-aligned items for {} slots, backfilling",
            profile.user_id,
            other.len(),
            want_other
        );
        want_aligned += want_other - other.len();
        want_other = other.len();
    }

    let mut slate: Vec<usize> = aligned
        .choose_multiple(rng, want_aligned)
        .copied()
        .chain(other.choose_multiple(rng, want_other).copied())
        .collect();
    slate.shuffle(rng);
    Ok(slate)
}
