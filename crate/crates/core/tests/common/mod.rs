#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tokensim::geometry::{MotionDelta, OrientedBox, Pose2D};
use tokensim::grpo::{grpo_loss_and_grad, GrpoConfig};
use tokensim::policy::{
    forward, init_params, softmax_probs, FeatureConfig, PolicyDims, PolicyParams,
};
use tokensim::reward::compute_rewards;
use tokensim::rollout::{rollout_group, RolloutGroup, SimEnv};
use tokensim::scenario::{generate_synthetic_with, Scenario, SyntheticConfig, Template};
use tokensim::tokenizer::TokenVocabulary;

/// Eight hand-made tokens around a 0.8 m step with small lateral and yaw offsets.
pub fn tiny_vocab() -> TokenVocabulary {
    let deltas = (0..8)
        .map(|i| {
            let f = i as f64;
            MotionDelta::new(0.5 + 0.1 * f, 0.02 * (f - 3.5), 0.01 * (f - 3.5))
        })
        .collect();
    TokenVocabulary::new(deltas, 0.1, 2.0).unwrap()
}

pub fn tiny_features() -> FeatureConfig {
    FeatureConfig {
        k_neighbors: 1,
        m_map: 1,
        ..FeatureConfig::default()
    }
}

pub fn tiny_scenario(template: Template, n_agents: usize, seed: u64, horizon: usize) -> Scenario {
    let cfg = SyntheticConfig {
        dt: 0.1,
        history_len: 2,
        horizon,
    };
    generate_synthetic_with(template, n_agents, seed, &cfg).unwrap()
}

pub fn tiny_params(seed: u64, features: &FeatureConfig, vocab: &TokenVocabulary) -> PolicyParams {
    init_params(
        seed,
        PolicyDims {
            input: features.dim(),
            hidden: 8,
            output: vocab.len(),
        },
    )
}

pub fn boxed(x: f64, y: f64, yaw: f64, l: f64, w: f64) -> OrientedBox {
    OrientedBox::new(Pose2D::new(x, y, yaw), l, w).unwrap()
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn segments_intersect(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    (d1 * d2 <= 0.0) && (d3 * d4 <= 0.0)
}

/// Overlap by corner containment plus edge crossings; shares no code with SAT.
pub fn overlap_oracle(a: &OrientedBox, b: &OrientedBox) -> bool {
    let ca = a.corners();
    let cb = b.corners();
    if ca.iter().any(|p| b.contains(*p)) || cb.iter().any(|p| a.contains(*p)) {
        return true;
    }
    for i in 0..4 {
        for j in 0..4 {
            if segments_intersect(ca[i], ca[(i + 1) % 4], cb[j], cb[(j + 1) % 4]) {
                return true;
            }
        }
    }
    false
}

/// Dense boundary sampling: any sampled point of one box inside the other.
pub fn sampled_overlap(a: &OrientedBox, b: &OrientedBox, per_edge: usize) -> bool {
    let hit = |x: &OrientedBox, y: &OrientedBox| {
        let c = x.corners();
        (0..4).any(|e| {
            let (p, q) = (c[e], c[(e + 1) % 4]);
            (0..=per_edge).any(|s| {
                let f = s as f64 / per_edge as f64;
                y.contains([p[0] + f * (q[0] - p[0]), p[1] + f * (q[1] - p[1])])
            })
        })
    };
    hit(a, b) || hit(b, a)
}

pub fn perturbed(p: &PolicyParams, sigma: f64, rng: &mut ChaCha8Rng) -> PolicyParams {
    let mut q = p.clone();
    if sigma == 0.0 {
        return q;
    }
    for v in &mut q.params {
        *v += rng.gen_range(-sigma..sigma);
    }
    q
}

pub fn sharpened(p: &PolicyParams, factor: f64) -> PolicyParams {
    let mut q = p.clone();
    for v in &mut q.params {
        *v *= factor;
    }
    q
}

/// Log-probabilities of every stored token replayed under `params`.
pub fn replay(env: &SimEnv<'_>, group: &RolloutGroup, params: &PolicyParams) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for r in &group.rollouts {
        for (t, rec) in r.records.iter().enumerate() {
            for (j, a) in rec.agents.iter().enumerate() {
                let x = env.encode(&r.states[t], j);
                let lp = softmax_probs(&forward(params, &x).unwrap()).log_probs()[a.token];
                out.push((lp, a.logprob));
            }
        }
    }
    out
}

pub struct Instance {
    pub scenario: Scenario,
    pub old: PolicyParams,
    pub theta: PolicyParams,
    pub reference: PolicyParams,
}

pub fn instance(seed: u64, sigma: f64) -> Instance {
    let vocab = tiny_vocab();
    let features = tiny_features();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let old = sharpened(&tiny_params(seed, &features, &vocab), 3.0);
    let theta = perturbed(&old, sigma, &mut rng);
    let reference = perturbed(&old, 0.3, &mut rng);
    Instance {
        scenario: tiny_scenario(Template::Straight, 1 + (seed % 2) as usize, seed, 3),
        old,
        theta,
        reference,
    }
}

pub struct Checked {
    pub rel_err: f64,
    pub clip_fraction: f64,
}

/// Central-difference check of the full loss gradient; `None` for degenerate instances.
pub fn fd_check(inst: &Instance, config: &GrpoConfig, n_rollout: usize, seed: u64) -> Option<Checked> {
    let vocab = tiny_vocab();
    let features = tiny_features();
    let env = SimEnv::new(&inst.scenario, &vocab, &features);
    let group = rollout_group(&env, &inst.old, n_rollout, &config.sampler, seed).unwrap();
    let rewards = compute_rewards(&group, &inst.scenario, &config.reward).unwrap();
    // skip instances with a ratio near a clip boundary, where the loss has a kink
    let lo = 1.0 - config.eps_low;
    let hi = 1.0 + config.eps_high;
    let near_kink = replay(&env, &group, &inst.theta)
        .iter()
        .map(|(lp, old)| (lp - old).exp())
        .any(|r| (r - lo).abs() < 1e-4 || (r - hi).abs() < 1e-4);
    if near_kink {
        return None;
    }
    let loss = |p: &PolicyParams| {
        grpo_loss_and_grad(&env, &group, &rewards, p, &inst.old, &inst.reference, config).unwrap()
    };
    let out = loss(&inst.theta);
    let h = 1e-5;
    let mut err: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for i in 0..out.grad.len() {
        let mut up = inst.theta.clone();
        let mut down = inst.theta.clone();
        up.params[i] += h;
        down.params[i] -= h;
        let fd = (loss(&up).loss - loss(&down).loss) / (2.0 * h);
        err = err.max((fd - out.grad[i]).abs());
        scale = scale.max(fd.abs());
    }
    if scale < 1e-8 {
        return None;
    }
    Some(Checked {
        rel_err: err / scale,
        clip_fraction: out.clip_fraction,
    })
}

