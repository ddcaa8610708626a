//! Deterministic persona agent.
//!
//! Affinity for an item is a sum of fixed bonuses (interest match, category
//! reinforcement from positively rated history, novelty scaled by openness or
//! variety seeking), capped at 1. A single uniform draw then selects the
//! feedback: the first `a` of probability mass is split across the positive
//! actions, the remaining `1 - a` between skip and dislike.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::agents::{AgentHistory, Decision, DecisionRequest, FeedbackAgent, FeedbackType};
use crate::catalog::VideoItem;
use crate::error::Result;
use crate::personas::{Gratification, Motivation, UserProfile};

const BASE: f64 = 0.15;
const INTEREST_BONUS: f64 = 0.35;
const LEVEL2_BONUS: f64 = 0.15;
const LEVEL3_BONUS: f64 = 0.10;
const NOVELTY_BONUS: f64 = 0.10;

// Cumulative shares of the positive mass.
const POSITIVE_SPLIT: [(f64, FeedbackType); 4] = [
    (0.55, FeedbackType::JustWatch),
    (0.80, FeedbackType::WatchAndLike),
    (0.90, FeedbackType::WatchAndComment),
    (1.00, FeedbackType::WatchAndCollect),
];
const SKIP_SHARE: f64 = 0.8;

pub fn affinity(profile: &UserProfile, history: &AgentHistory, item: &VideoItem) -> f64 {
    let mut a = BASE;
    if profile.is_interested_in(&item.category_l1) {
        a += INTEREST_BONUS;
    }
    let liked = |level: usize, name: &str| {
        history
            .entries()
            .any(|e| e.feedback.is_positive() && e.categories[level - 1] == name)
    };
    if liked(2, &item.category_l2) {
        a += LEVEL2_BONUS;
    }
    if liked(3, &item.category_l3) {
        a += LEVEL3_BONUS;
    }
    let root_seen = history
        .entries()
        .any(|e| e.categories[0] == item.category_l1);
    if !root_seen {
        a += match profile.motivation {
            Motivation::Personality(p) => NOVELTY_BONUS * p.openness,
            Motivation::Gratification(Gratification::BrowsingVarietySeeking) => NOVELTY_BONUS,
            Motivation::Gratification(_) => 0.0,
        };
    }
    a.min(1.0)
}

/// Maps a uniform draw `u` in [0, 1) to a feedback type for affinity `a`.
pub fn feedback_for_draw(a: f64, u: f64) -> FeedbackType {
    for (share, feedback) in POSITIVE_SPLIT {
        if u < a * share {
            return feedback;
        }
    }
    if u < a + SKIP_SHARE * (1.0 - a) {
        FeedbackType::Skip
    } else {
        FeedbackType::Dislike
    }
}

pub fn rule_decide(
    profile: &UserProfile,
    history: &AgentHistory,
    item: &VideoItem,
    rng: &mut ChaCha8Rng,
) -> Decision {
    let a = affinity(profile, history, item);
    let u: f64 = rng.random();
    Decision {
        feedback: feedback_for_draw(a, u),
        explanation: format!("affinity {a:.2}"),
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RuleAgent;

impl FeedbackAgent for RuleAgent {
    fn decide(&self, request: &DecisionRequest<'_>, rng: &mut ChaCha8Rng) -> Result<Decision> {
        Ok(rule_decide(
            request.profile,
            request.history,
            request.item,
            rng,
        ))
    }
}
