mod common;

use bubblesim_core::agents::{FeedbackRecord, FeedbackType};
use bubblesim_core::catalog::{generate_fixture, BranchingShape};
use bubblesim_core::metrics::{
    bubble_proportion, bubble_status, coverage, demographic_ecdf, ecdf, entropy, satisfaction,
    BubbleStatus, CategoryCounts, DemographicFeature,
};
use bubblesim_core::personas::{generate_profiles, Gender, MotivationKind};
use common::sort_and_rank;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn counts_of(tally: &[(&str, usize)]) -> CategoryCounts {
    tally.iter()
        .flat_map(|&(c, n)| std::iter::repeat_n(c, n))
        .collect()
}

#[test]
fn entropy_matches_python_oracle() {
    // tests/oracles/entropy.py
    let uniform = counts_of(&[("a", 1), ("b", 1), ("c", 1), ("d", 1)]);
    assert!((entropy(&uniform) - 4f64.ln()).abs() <= 1e-12);
    assert!((entropy(&uniform) - 1.3862943611198906).abs() <= 1e-12);
    let skewed = counts_of(&[("a", 3), ("b", 1)]);
    assert!((entropy(&skewed) - 0.5623351446188083).abs() <= 1e-12);
    assert!((entropy(&skewed) - 0.5623).abs() <= 1e-4);
}

#[test]
fn entropy_of_single_category_is_zero() {
    assert_eq!(entropy(&counts_of(&[("a", 7)])), 0.0);
    assert_eq!(entropy(&CategoryCounts::new()), 0.0);
}

#[test]
fn bubble_proportion_never_exceeds_half() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..1000 {
        let n = rng.random_range(1..40);
        let high = rng.random_range(1..12);
        let counts: Vec<usize> = (0..n).map(|_| rng.random_range(0..high)).collect();
        let p = bubble_proportion(&bubble_status(&counts)).unwrap();
        assert!((0.0..=0.5).contains(&p), "{counts:?} -> {p}");
    }
}

#[test]
fn bubble_uses_strict_median_comparison() {
    use BubbleStatus::*;
    assert_eq!(bubble_status(&[1, 2, 3, 4]), vec![In, In, Out, Out]);
    assert_eq!(bubble_status(&[2, 2, 2]), vec![Out, Out, Out]);
    assert_eq!(bubble_status(&[1, 5, 9]), vec![In, Out, Out]);
}

#[test]
fn ecdf_matches_sort_and_rank() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..100 {
        let n = rng.random_range(1..50);
        // A coarse grid makes duplicate values likely.
        let values: Vec<f64> = (0..n)
            .map(|_| f64::from(rng.random_range(0..20u32)) / 4.0)
            .collect();
        let got: Vec<(f64, f64)> = ecdf(&values)
            .unwrap()
            .into_iter()
            .map(|p| (p.value, p.fraction))
            .collect();
        assert_eq!(got, sort_and_rank(&values));
    }
}

#[test]
fn ecdf_of_one_two_three() {
    let points = ecdf(&[3.0, 1.0, 2.0]).unwrap();
    let fractions: Vec<f64> = points.iter().map(|p| p.fraction).collect();
    assert_eq!(fractions, vec![1.0 / 3.0, 2.0 / 3.0, 1.0]);
    assert!(ecdf(&[]).unwrap().is_empty());
    assert!(ecdf(&[f64::NAN]).is_err());
}

#[test]
fn two_group_ecdf_matches_python_oracle() {
    // tests/oracles/ecdf_groups.py
    let catalog = generate_fixture(1, 200, BranchingShape::short_video()).unwrap();
    let mut profiles = generate_profiles(8, 3, MotivationKind::Gratification, &catalog).unwrap();
    let fixture = [
        (Gender::Female, 0.5),
        (Gender::Male, 1.0),
        (Gender::Female, 1.25),
        (Gender::Male, 0.25),
        (Gender::Female, 0.0),
        (Gender::Female, 1.25),
        (Gender::Male, 0.75),
        (Gender::Female, 2.0),
    ];
    let mut values = Vec::new();
    for (profile, (gender, v)) in profiles.iter_mut().zip(fixture) {
        profile.gender = gender;
        values.push(v);
    }
    let curves = demographic_ecdf(&profiles, &values, DemographicFeature::Gender).unwrap();
    let flat: Vec<(String, Vec<(f64, f64)>)> = curves
        .into_iter()
        .map(|(g, pts)| (g, pts.into_iter().map(|p| (p.value, p.fraction)).collect()))
        .collect();
    assert_eq!(
        flat,
        vec![
            (
                "female".to_string(),
                vec![(0.0, 0.2), (0.5, 0.4), (1.25, 0.8), (2.0, 1.0)]
            ),
            (
                "male".to_string(),
                vec![
                    (0.25, 0.3333333333333333),
                    (0.75, 0.6666666666666666),
                    (1.0, 1.0)
                ]
            ),
        ]
    );
}

#[test]
fn demographic_ecdf_omits_empty_groups() {
    let catalog = generate_fixture(1, 200, BranchingShape::short_video()).unwrap();
    let mut profiles = generate_profiles(3, 3, MotivationKind::Gratification, &catalog).unwrap();
    for p in &mut profiles {
        p.gender = Gender::Male;
    }
    let curves = demographic_ecdf(&profiles, &[1.0, 2.0, 3.0], DemographicFeature::Gender).unwrap();
    assert_eq!(curves.len(), 1);
    assert_eq!(curves[0].0, "male");
}

#[test]
fn satisfaction_is_positive_share() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let records: Vec<FeedbackRecord> = (0..rng.random_range(1..30))
            .map(|i| FeedbackRecord {
                user_id: "u".into(),
                item_id: format!("v{i}"),
                iteration: 0,
                feedback: FeedbackType::ALL[rng.random_range(0..6)],
                explanation: String::new(),
            })
            .collect();
        let positives = records
            .iter()
            .filter(|r| !matches!(r.feedback, FeedbackType::Skip | FeedbackType::Dislike))
            .count();
        let want = positives as f64 / records.len() as f64;
        assert_eq!(satisfaction(&records).unwrap(), want);
    }
    assert!(satisfaction(&[]).is_err());
}

#[test]
fn coverage_rejects_bad_input() {
    assert!(coverage(1, 0).is_err());
    assert!(coverage(5, 4).is_err());
    assert_eq!(coverage(0, 4).unwrap(), 0.0);
    assert_eq!(coverage(4, 4).unwrap(), 1.0);
}

proptest! {
    #[test]
    fn entropy_bounded_by_log_distinct(counts in proptest::collection::vec(1usize..20, 1..12)) {
        let names: Vec<String> = (0..counts.len()).map(|i| format!("c{i}")).collect();
        let tally: Vec<(&str, usize)> = names.iter().map(String::as_str).zip(counts.iter().copied()).collect();
        let c = counts_of(&tally);
        let h = entropy(&c);
        let bound = (c.distinct() as f64).ln();
        prop_assert!(h >= 0.0);
        prop_assert!(h <= bound + 1e-12);
        let uniform = counts.iter().all(|&n| n == counts[0]);
        if uniform {
            prop_assert!((h - bound).abs() <= 1e-12);
        } else {
            prop_assert!(h < bound - 1e-12);
        }
    }

    #[test]
    fn coverage_grows_with_seen_set(
        categories in proptest::collection::vec(0usize..30, 1..60),
    ) {
        let total = 30;
        let mut seen = CategoryCounts::new();
        let mut last = 0.0;
        for c in categories {
            seen.add(&format!("c{c}"));
            let now = coverage(seen.distinct(), total).unwrap();
            prop_assert!(now >= last);
            prop_assert!((0.0..=1.0).contains(&now));
            last = now;
        }
    }

    #[test]
    fn ecdf_is_monotone_and_ends_at_one(values in proptest::collection::vec(-5.0f64..5.0, 1..40)) {
        let points = ecdf(&values).unwrap();
        prop_assert_eq!(points.last().unwrap().fraction, 1.0);
        for w in points.windows(2) {
            prop_assert!(w[0].value < w[1].value);
            prop_assert!(w[0].fraction < w[1].fraction);
        }
    }
}
