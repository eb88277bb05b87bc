mod common;

use proptest::prelude::*;
use tokensim::geometry::{apply_delta, MotionDelta, Pose2D};
use tokensim::scenario::{extract_segments, generate_synthetic, Template};
use tokensim::tokenizer::{
    build_vocabulary, detokenize, embed_segments, lloyd, tokenize, TokenVocabulary, VocabConfig,
};

fn sq(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).powi(2)).sum()
}

fn inertia(points: &[[f64; 3]], centres: &[[f64; 3]]) -> f64 {
    points
        .iter()
        .map(|p| centres.iter().map(|c| sq(p, c)).fold(f64::INFINITY, f64::min))
        .sum()
}

/// Textbook Lloyd step: assign to the nearest centre (lowest index on ties), then average.
fn naive_step(points: &[[f64; 3]], centres: &[[f64; 3]]) -> Vec<[f64; 3]> {
    let mut sums = vec![[0.0; 3]; centres.len()];
    let mut counts = vec![0.0; centres.len()];
    for p in points {
        let mut best = 0;
        for j in 1..centres.len() {
            if sq(p, &centres[j]) < sq(p, &centres[best]) {
                best = j;
            }
        }
        for a in 0..3 {
            sums[best][a] += p[a];
        }
        counts[best] += 1.0;
    }
    sums.iter()
        .zip(&counts)
        .map(|(s, &n)| [s[0] / n, s[1] / n, s[2] / n])
        .collect()
}

fn cloud() -> impl Strategy<Value = Vec<[f64; 3]>> {
    prop::collection::vec(
        (0.0..2.0f64, -0.3..0.3f64, -0.2..0.2f64).prop_map(|(a, b, c)| [a, b, c]),
        12..80,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn single_lloyd_step_matches_naive(points in cloud()) {
        let init: Vec<[f64; 3]> = points[..4].to_vec();
        let want = naive_step(&points, &init);
        let got = lloyd(&points, init, 1, 0.0);
        for (g, w) in got.iter().zip(&want) {
            prop_assert!(sq(g, w).sqrt() < 1e-12, "{:?} vs {:?}", g, w);
        }
    }

    #[test]
    fn lloyd_never_increases_inertia(points in cloud()) {
        let mut centres: Vec<[f64; 3]> = points[..5].to_vec();
        let mut last = inertia(&points, &centres);
        for _ in 0..8 {
            centres = lloyd(&points, centres, 1, 0.0);
            let now = inertia(&points, &centres);
            prop_assert!(now <= last + 1e-12);
            last = now;
        }
    }

    #[test]
    fn nearest_is_brute_force_argmin(
        dx in -1.0..3.0f64, dy in -0.5..0.5f64, dyaw in -0.3..0.3f64,
    ) {
        let vocab = common::tiny_vocab();
        let q = MotionDelta::new(dx, dy, dyaw);
        let id = vocab.nearest(&q);
        let d = |i: usize| {
            let c = vocab.delta(i).unwrap();
            (q.dx - c.dx).powi(2) + (q.dy - c.dy).powi(2) + (2.0 * (q.dyaw - c.dyaw)).powi(2)
        };
        for other in 0..vocab.len() {
            prop_assert!(d(id) <= d(other) + 1e-15);
        }
    }

    #[test]
    fn detokenize_is_fold_and_tokenize_inverts(
        tokens in prop::collection::vec(0usize..8, 0..30),
        x in -50.0..50.0f64, y in -50.0..50.0f64, yaw in -3.1..3.1f64,
    ) {
        let vocab = common::tiny_vocab();
        let start = Pose2D::new(x, y, yaw);
        let poses = detokenize(start, &tokens, &vocab).unwrap();
        prop_assert_eq!(poses.len(), tokens.len() + 1);
        let mut p = start;
        for (k, &t) in tokens.iter().enumerate() {
            p = apply_delta(&p, vocab.delta(t).unwrap());
            prop_assert_eq!(poses[k + 1], p);
        }
        prop_assert_eq!(tokenize(&poses, &vocab), tokens);
    }
}

#[test]
fn converged_centres_are_cluster_means() {
    let scenarios: Vec<_> = (0..6)
        .map(|s| generate_synthetic(Template::ALL[s % 3], 4, s as u64).unwrap())
        .collect();
    let cfg = VocabConfig::default();
    let segments = extract_segments(&scenarios);
    let points = embed_segments(&segments, &cfg);
    let vocab = build_vocabulary(&segments, 16, 3, &cfg).unwrap();
    assert_eq!(vocab.len(), 16);
    let centres: Vec<[f64; 3]> = (0..16)
        .map(|i| {
            let d = vocab.delta(i).unwrap();
            [d.dx, d.dy, cfg.yaw_weight * d.dyaw]
        })
        .collect();
    let stepped = naive_step(&points, &centres);
    for (c, s) in centres.iter().zip(&stepped) {
        assert!(sq(c, s).sqrt() < 1e-5, "{c:?} vs {s:?}");
    }
}

#[test]
fn vocabulary_is_seed_deterministic_and_round_trips() {
    let scenarios: Vec<_> = (0..4)
        .map(|s| generate_synthetic(Template::Merge, 3, s).unwrap())
        .collect();
    let segments = extract_segments(&scenarios);
    let cfg = VocabConfig::default();
    let a = build_vocabulary(&segments, 12, 9, &cfg).unwrap();
    let b = build_vocabulary(&segments, 12, 9, &cfg).unwrap();
    assert_eq!(a, b);
    let back = TokenVocabulary::from_json(&a.to_json().unwrap()).unwrap();
    assert_eq!(a, back);
}

#[test]
fn too_large_vocabulary_is_rejected() {
    let segs = vec![MotionDelta::new(1.0, 0.0, 0.0); 10];
    assert!(build_vocabulary(&segs, 3, 0, &VocabConfig::default()).is_err());
}
