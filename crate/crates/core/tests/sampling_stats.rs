use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use tokensim::policy::{softmax_probs, TokenDistribution};
use tokensim::sampling::{adaptive_k, sample_action, top_k_ids, top_k_sample, SamplerConfig};

fn counts(dist: &TokenDistribution, k: usize, n: usize, seed: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = vec![0u64; dist.len()];
    for _ in 0..n {
        c[top_k_sample(dist, k, &mut rng).token] += 1;
    }
    c
}

#[test]
fn full_k_passes_chi_square() {
    let logits: Vec<f64> = (0..16).map(|i| ((i * 7 % 5) as f64) * 0.6 - 1.0).collect();
    let dist = softmax_probs(&logits);
    let n = 100_000;
    let c = counts(&dist, dist.len(), n, 21);
    let stat: f64 = c
        .iter()
        .zip(dist.probs())
        .map(|(&o, &p)| {
            let e = p * n as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let critical = ChiSquared::new((dist.len() - 1) as f64).unwrap().inverse_cdf(1.0 - 1e-3);
    assert!(stat < critical, "chi2 {stat} >= {critical}");
}

#[test]
fn top_two_renormalizes() {
    let dist = TokenDistribution::from_probs(vec![0.5, 0.3, 0.15, 0.05]).unwrap();
    let n = 100_000;
    let c = counts(&dist, 2, n, 22);
    assert_eq!(c[2] + c[3], 0);
    for (i, want) in [(0, 0.625), (1, 0.375)] {
        let sigma = (want * (1.0 - want) / n as f64).sqrt();
        let got = c[i] as f64 / n as f64;
        assert!((got - want).abs() < 3.0 * sigma, "token {i}: {got}");
    }
}

#[test]
fn adaptive_k_reference_points() {
    assert_eq!(adaptive_k(0.0, 16, 80), 48);
    assert_eq!(adaptive_k(50.0, 16, 80), 80);
    let top = 128f64.ln();
    let mut last = 0;
    for i in 0..1000 {
        let k = adaptive_k(top * i as f64 / 999.0, 16, 80);
        assert!(k >= last && (16..=80).contains(&k));
        last = k;
    }
}

#[test]
fn fixed_sampler_reports_its_k() {
    let dist = softmax_probs(&[0.0, 1.0, 2.0, 3.0, 4.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let a = sample_action(&dist, dist.entropy(), &SamplerConfig::fixed(2), &mut rng);
        assert_eq!(a.k, 2);
        assert!(a.token == 4 || a.token == 3);
        assert!((a.logprob - dist.log_probs()[a.token]).abs() < 1e-15);
    }
}

proptest! {
    #[test]
    fn sample_stays_in_top_k(
        logits in prop::collection::vec(-5.0..5.0f64, 2..40),
        k in 1usize..40,
        seed in any::<u64>(),
    ) {
        let dist = softmax_probs(&logits);
        let kept = top_k_ids(dist.probs(), k);
        prop_assert_eq!(kept.len(), k.min(logits.len()));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draw = top_k_sample(&dist, k, &mut rng);
        prop_assert!(kept.contains(&draw.token));
        prop_assert!(draw.logprob_truncated >= draw.logprob_full - 1e-12);
        let floor = kept.iter().map(|&i| dist.probs()[i]).fold(f64::INFINITY, f64::min);
        prop_assert!(dist.probs().iter().enumerate().all(|(i, p)| kept.contains(&i) || *p <= floor));
    }

    #[test]
    fn adaptive_k_monotone(a in 0.0..10.0f64, b in 0.0..10.0f64, lo in 1usize..50, span in 0usize..80) {
        let (h1, h2) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(adaptive_k(h1, lo, lo + span) <= adaptive_k(h2, lo, lo + span));
    }
}
