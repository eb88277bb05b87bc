mod common;

use common::{overlap_oracle, tiny_features, tiny_params, tiny_scenario, tiny_vocab};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tokensim::geometry::{MotionDelta, OrientedBox, Pose2D};
use tokensim::metrics::{collision_rate, displacement, evaluate, EvalConfig};
use tokensim::reward::{
    combine_variant, compute_rewards, realism_term, safety_term, RewardConfig, RewardVariant,
};
use tokensim::rollout::{rollout_group, AgentState, SceneState, SimEnv};
use tokensim::sampling::SamplerConfig;
use tokensim::scenario::Template;

fn footprint(a: &AgentState) -> OrientedBox {
    OrientedBox::new(a.pose, a.length, a.width).unwrap()
}

#[test]
fn hand_built_trace_per_variant() {
    let e1 = (-1f64).exp();
    let safety = [1.0, -1.0, 1.0];
    let realism = [1.0, e1, 0.5];
    assert_eq!(combine_variant(RewardVariant::Spr, &safety, &realism, 0.5), vec![1.0, -e1, 0.5]);
    assert_eq!(
        combine_variant(RewardVariant::Apr, &safety, &realism, 0.5),
        vec![1.0, (-1.0 + e1) / 2.0, 0.75]
    );
    assert_eq!(combine_variant(RewardVariant::Or, &safety, &realism, 0.5), vec![0.0, 0.0, 0.5]);
    assert_eq!(
        combine_variant(RewardVariant::Shr, &safety, &realism, 0.5),
        vec![1.0, -e1, 0.75]
    );
    assert_eq!(
        combine_variant(RewardVariant::Ahr, &safety, &realism, 0.5),
        vec![1.0, (-1.0 + e1) / 2.0, 1.0]
    );
}

#[test]
fn realism_kernel_reference_and_monotonicity() {
    let o = Pose2D::origin();
    assert_eq!(realism_term(&o, &o, 0.5), 1.0);
    let two = Pose2D::new(0.0, 2.0, 1.0);
    assert!((realism_term(&o, &two, 0.5) - 0.367_879_441_171_442_3).abs() < 1e-15);
    let mut last = 1.0;
    for i in 1..200 {
        let r = realism_term(&o, &Pose2D::new(0.1 * i as f64, 0.0, 0.0), 0.5);
        assert!(r < last && r > 0.0);
        assert!(realism_term(&o, &Pose2D::new(0.1 * i as f64, 0.0, 0.0), 0.6) < r);
        last = r;
    }
}

#[test]
fn safety_matches_pairwise_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..500 {
        let agents: Vec<AgentState> = (0..5)
            .map(|i| AgentState {
                agent_id: i,
                pose: Pose2D::new(rng.gen_range(-6.0..6.0), rng.gen_range(-6.0..6.0), rng.gen_range(-3.1..3.1)),
                prev_delta: MotionDelta::ZERO,
                length: rng.gen_range(2.0..5.0),
                width: rng.gen_range(1.0..2.2),
            })
            .collect();
        let state = SceneState::new(0, 0.1, agents);
        let s = safety_term(&state);
        for (i, a) in state.agents.iter().enumerate() {
            let hit = state
                .agents
                .iter()
                .enumerate()
                .any(|(j, b)| j != i && overlap_oracle(&footprint(a), &footprint(b)));
            assert_eq!(s[i], if hit { -1.0 } else { 1.0 });
        }
    }
}

#[test]
fn variants_respect_bounds_and_sign() {
    let vocab = tiny_vocab();
    let features = tiny_features();
    for seed in [0u64, 4, 8] {
        let scenario = tiny_scenario(Template::UnprotectedLeft, 3, seed, 25);
        let env = SimEnv::new(&scenario, &vocab, &features);
        let params = tiny_params(seed, &features, &vocab);
        let group = rollout_group(&env, &params, 6, &SamplerConfig::fixed(8), seed).unwrap();
        for variant in RewardVariant::ALL {
            let cfg = RewardConfig { variant, ..RewardConfig::default() };
            let tr = compute_rewards(&group, &scenario, &cfg).unwrap();
            assert_eq!(tr.slots.len(), 6 * 25 * 3);
            for s in &tr.slots {
                assert!(s.reward.abs() <= cfg.bound() + 1e-15);
                if variant == RewardVariant::Spr {
                    assert_eq!(s.reward < 0.0, s.collision);
                }
            }
            assert_eq!(tr, compute_rewards(&group, &scenario, &cfg).unwrap());
        }
    }
}

#[test]
fn metrics_match_direct_recomputation() {
    let vocab = tiny_vocab();
    let features = tiny_features();
    let scenario = tiny_scenario(Template::UnprotectedLeft, 4, 0, 20);
    let env = SimEnv::new(&scenario, &vocab, &features);
    let params = tiny_params(3, &features, &vocab);
    let group = rollout_group(&env, &params, 5, &SamplerConfig::fixed(8), 3).unwrap();

    let mut hits = 0;
    let mut total = 0;
    let order = scenario.track_order();
    let mut sum = 0.0;
    let mut n = 0;
    let mut best = f64::INFINITY;
    for r in &group.rollouts {
        let (mut rs, mut rn) = (0.0, 0);
        for (t, state) in r.states.iter().enumerate().skip(1) {
            for (i, a) in state.agents.iter().enumerate() {
                total += 1;
                let hit = state
                    .agents
                    .iter()
                    .enumerate()
                    .any(|(j, b)| j != i && overlap_oracle(&footprint(a), &footprint(b)));
                hits += usize::from(hit);
                let gt = &scenario.tracks[order[i]];
                let k = scenario.history_len + t;
                if gt.valid[k] {
                    let d = a.pose.distance(&gt.poses[k]);
                    rs += d;
                    rn += 1;
                }
            }
        }
        sum += rs;
        n += rn;
        best = best.min(rs / rn as f64);
    }
    assert_eq!(collision_rate(&group), hits as f64 / total as f64);
    let (ade, min_ade) = displacement(&group, &scenario).unwrap();
    assert!((ade - sum / n as f64).abs() < 1e-12);
    assert!((min_ade - best).abs() < 1e-12);
    assert!(min_ade <= ade);
}

#[test]
fn evaluation_report_is_consistent() {
    let vocab = tiny_vocab();
    let features = tiny_features();
    let named: Vec<(String, _)> = (0..4)
        .map(|i| (format!("s{i}"), tiny_scenario(Template::ALL[i % 3], 3, i as u64, 10)))
        .collect();
    let params = tiny_params(1, &features, &vocab);
    let cfg = EvalConfig {
        n_rollout: 4,
        sampler: SamplerConfig::fixed(8),
        n_bins: 10,
        seed: 5,
    };
    let report = evaluate(&named, &vocab, &features, &params, &cfg).unwrap();
    assert_eq!(report.rows.len(), 4);
    let tokens: usize = report.rows.iter().map(|r| r.n_tokens).sum();
    assert_eq!(report.entropy_histogram.iter().sum::<u64>() as usize, tokens);
    assert_eq!(tokens, 4 * 10 * 3 * 4);
    let all: Vec<usize> = (0..4).collect();
    assert!((report.mean_entropy_of(&all) - report.mean_entropy).abs() < 1e-12);
    assert_eq!(report, evaluate(&named, &vocab, &features, &params, &cfg).unwrap());
}
