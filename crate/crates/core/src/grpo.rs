//! Group-relative policy optimization over rollout groups, plus the
//! next-token-prediction pretraining it starts from.
//!
//! Advantages are centred per (step, agent) slot across the rollouts of a
//! group. The default mode stops there; the standardized mode additionally
//! divides by the group standard deviation. The objective is the clipped
//! importance-ratio surrogate minus a KL penalty towards the frozen
//! reference policy, averaged over rollouts:
//!
//! ```text
//! L = -(1/N) Σ_i Σ_t Σ_j mask · { min[ρ·A, clip(ρ, 1-ε_low, 1+ε_high)·A] - β·KL }
//! ```

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::MotionDelta;
use crate::optim::{Optimizer, OptimizerKind};
use crate::policy::{
    accumulate_logprob_grad, backprop_logits, forward, forward_cached, softmax_probs,
    FeatureConfig, PolicyParams,
};
use crate::reward::{compute_rewards, RewardConfig, RewardTrace};
use crate::rollout::{rollout_group, AgentState, RolloutGroup, SceneState, SimEnv};
use crate::sampling::SamplerConfig;
use crate::scenario::Scenario;
use crate::tokenizer::TokenVocabulary;
use crate::{par, seed};

/// Tolerance for the stored-vs-replayed log-probability check.
pub const REPLAY_TOLERANCE: f64 = 1e-9;

/// Added to the group standard deviation in standardized mode.
pub const STD_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdvantageMode {
    MeanOnly,
    Standardized,
}

impl fmt::Display for AdvantageMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AdvantageMode::MeanOnly => "mean_only",
            AdvantageMode::Standardized => "standardized",
        })
    }
}

impl FromStr for AdvantageMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean_only" => Ok(AdvantageMode::MeanOnly),
            "standardized" => Ok(AdvantageMode::Standardized),
            other => Err(Error::Validation(format!("unknown advantage mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlMode {
    /// `u - ln u - 1` on the sampled token, `u = π_ref / π_θ`.
    SampledEstimator,
    /// Full-vocabulary `KL(π_ref ‖ π_θ)`.
    Exact,
}

impl FromStr for KlMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sampled_estimator" | "sampled" => Ok(KlMode::SampledEstimator),
            "exact" => Ok(KlMode::Exact),
            other => Err(Error::Validation(format!("unknown kl mode `{other}`"))),
        }
    }
}

pub const EXACT_KL_MAX_VOCAB: usize = 256;

/// Per-slot advantages for a group, indexed like [`RewardTrace`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageTensor {
    pub n_rollout: usize,
    pub horizon: usize,
    pub n_agents: usize,
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
}

impl AdvantageTensor {
    pub fn index(&self, i: usize, t: usize, j: usize) -> usize {
        (i * self.horizon + t) * self.n_agents + j
    }

    pub fn get(&self, i: usize, t: usize, j: usize) -> f64 {
        self.values[self.index(i, t, j)]
    }
}

/// Group-relative advantages. Masked slots are excluded from the baseline and
/// receive zero advantage.
pub fn advantages(rewards: &RewardTrace, mode: AdvantageMode) -> Result<AdvantageTensor> {
    if rewards.n_rollout < 2 {
        return Err(Error::Validation(format!(
            "advantages need a group of at least 2, got {}",
            rewards.n_rollout
        )));
    }
    let mut out = AdvantageTensor {
        n_rollout: rewards.n_rollout,
        horizon: rewards.horizon,
        n_agents: rewards.n_agents,
        values: vec![0.0; rewards.slots.len()],
        mask: rewards.slots.iter().map(|s| s.gt_valid).collect(),
    };
    for t in 0..rewards.horizon {
        for j in 0..rewards.n_agents {
            let idx: Vec<usize> = (0..rewards.n_rollout)
                .map(|i| rewards.index(i, t, j))
                .filter(|&k| out.mask[k])
                .collect();
            if idx.is_empty() {
                continue;
            }
            let first = rewards.slots[idx[0]].reward;
            if idx.iter().all(|&k| rewards.slots[k].reward == first) {
                continue;
            }
            let n = idx.len() as f64;
            let mut mean = idx.iter().map(|&k| rewards.slots[k].reward).sum::<f64>() / n;
            mean += idx.iter().map(|&k| rewards.slots[k].reward - mean).sum::<f64>() / n;
            let scale = match mode {
                AdvantageMode::MeanOnly => 1.0,
                AdvantageMode::Standardized => {
                    let var = idx
                        .iter()
                        .map(|&k| (rewards.slots[k].reward - mean).powi(2))
                        .sum::<f64>()
                        / n;
                    1.0 / (var.sqrt() + STD_EPS)
                }
            };
            for &k in &idx {
                out.values[k] = (rewards.slots[k].reward - mean) * scale;
            }
        }
    }
    Ok(out)
}

pub fn importance_ratio(logp_theta: f64, logp_old: f64) -> f64 {
    (logp_theta - logp_old).exp()
}

/// Low-variance KL estimator `u - ln u - 1` with `u = exp(logp_ref - logp_theta)`.
pub fn kl_term(logp_ref: f64, logp_theta: f64) -> f64 {
    let log_u = logp_ref - logp_theta;
    (log_u.exp() - log_u - 1.0).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrpoConfig {
    pub n_rollout: usize,
    pub eps_low: f64,
    pub eps_high: f64,
    pub beta_kl: f64,
    pub learning_rate: f64,
    pub iterations: usize,
    pub advantage_mode: AdvantageMode,
    /// Keep W1 and b1 fixed during fine-tuning.
    pub freeze_first_layer: bool,
    pub kl_mode: KlMode,
    pub optimizer: OptimizerKind,
    pub sampler: SamplerConfig,
    pub reward: RewardConfig,
    pub seed: u64,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self {
            n_rollout: crate::rollout::DEFAULT_GROUP_SIZE,
            eps_low: 0.2,
            eps_high: 0.2,
            beta_kl: 0.04,
            learning_rate: 3e-3,
            iterations: 2000,
            advantage_mode: AdvantageMode::MeanOnly,
            freeze_first_layer: false,
            kl_mode: KlMode::SampledEstimator,
            optimizer: OptimizerKind::Sgd,
            sampler: SamplerConfig::default(),
            reward: RewardConfig::default(),
            seed: 0,
        }
    }
}

impl GrpoConfig {
    /// Every violated invariant, not just the first.
    pub fn violations(&self, vocab_size: usize) -> Vec<String> {
        let mut v = Vec::new();
        if self.n_rollout < 2 {
            v.push(format!("n_rollout must be >= 2, got {}", self.n_rollout));
        }
        for (name, eps) in [("eps_low", self.eps_low), ("eps_high", self.eps_high)] {
            if !(eps > 0.0 && eps < 1.0) {
                v.push(format!("{name} must be in (0, 1), got {eps}"));
            }
        }
        if !(self.beta_kl >= 0.0 && self.beta_kl.is_finite()) {
            v.push(format!("beta_kl must be >= 0, got {}", self.beta_kl));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            v.push(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if self.kl_mode == KlMode::Exact && vocab_size > EXACT_KL_MAX_VOCAB {
            v.push(format!(
                "exact KL supports vocabularies up to {EXACT_KL_MAX_VOCAB} tokens, got {vocab_size}"
            ));
        }
        if let Err(e) = self.sampler.validate(vocab_size) {
            v.push(e.to_string());
        }
        if let Err(e) = self.reward.validate() {
            v.push(e.to_string());
        }
        v
    }

    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        let v = self.violations(vocab_size);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v.join("; ")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    pub grad: Vec<f64>,
    /// Mean KL estimate over active slots.
    pub mean_kl: f64,
    /// Fraction of active slots whose clipped branch was selected with zero gradient.
    pub clip_fraction: f64,
}

struct RolloutLoss {
    loss: f64,
    grad: Vec<f64>,
    kl_sum: f64,
    clipped: usize,
    active: usize,
}

/// Clipped surrogate and its derivative with respect to `log π_θ`.
fn surrogate(ratio: f64, adv: f64, eps_low: f64, eps_high: f64) -> (f64, f64) {
    let clipped = ratio.clamp(1.0 - eps_low, 1.0 + eps_high);
    let unclipped_obj = ratio * adv;
    let clipped_obj = clipped * adv;
    if unclipped_obj <= clipped_obj {
        (unclipped_obj, ratio * adv)
    } else {
        (clipped_obj, 0.0)
    }
}

/// GRPO loss and its exact gradient with respect to `theta`.
///
/// Log-probabilities under `theta`, `old` and `reference` are recomputed by
/// replaying the stored scene states. The stored log-probabilities must match
/// the replay under `old`, otherwise a [`Error::ReplayMismatch`] is returned.
pub fn grpo_loss_and_grad(
    env: &SimEnv<'_>,
    group: &RolloutGroup,
    rewards: &RewardTrace,
    theta: &PolicyParams,
    old: &PolicyParams,
    reference: &PolicyParams,
    config: &GrpoConfig,
) -> Result<LossOutput> {
    env.check_params(theta)?;
    let adv = advantages(rewards, config.advantage_mode)?;
    let n = group.len() as f64;
    let old_is_theta = old.params == theta.params;
    let n_params = theta.arch.param_count();

    let per_rollout = par::map_indexed(group.len(), |i| -> Result<RolloutLoss> {
        let rollout = &group.rollouts[i];
        let mut out = RolloutLoss {
            loss: 0.0,
            grad: vec![0.0; n_params],
            kl_sum: 0.0,
            clipped: 0,
            active: 0,
        };
        for (t, record) in rollout.records.iter().enumerate() {
            let state = &rollout.states[t];
            for (j, action) in record.agents.iter().enumerate() {
                let k = adv.index(i, t, j);
                if !adv.mask[k] {
                    continue;
                }
                let a = adv.values[k];
                let features = env.encode(state, j);
                let acts = forward_cached(theta, &features)?;
                let dist = softmax_probs(&acts.logits);
                let lp_theta = dist.log_probs()[action.token];
                let lp_old = if old_is_theta {
                    lp_theta
                } else {
                    softmax_probs(&forward(old, &features)?).log_probs()[action.token]
                };
                if (lp_old - action.logprob).abs() > REPLAY_TOLERANCE {
                    return Err(Error::ReplayMismatch {
                        rollout: i,
                        step: t,
                        agent: j,
                        stored: action.logprob,
                        recomputed: lp_old,
                    });
                }
                let ref_dist = softmax_probs(&forward(reference, &features)?);

                let ratio = importance_ratio(lp_theta, lp_old);
                let (surr, dsurr) = surrogate(ratio, a, config.eps_low, config.eps_high);
                if dsurr == 0.0 && a != 0.0 {
                    out.clipped += 1;
                }
                let mut dlogits: Vec<f64> = dist.probs().iter().map(|p| -p).collect();
                dlogits[action.token] += 1.0;
                // d(-surr/n)/d(logits)
                let mut scale_onehot = -dsurr / n;
                let kl = match config.kl_mode {
                    KlMode::SampledEstimator => {
                        let lp_ref = ref_dist.log_probs()[action.token];
                        let u = (lp_ref - lp_theta).exp();
                        scale_onehot += config.beta_kl * (1.0 - u) / n;
                        kl_term(lp_ref, lp_theta)
                    }
                    KlMode::Exact => {
                        let kl: f64 = ref_dist
                            .probs()
                            .iter()
                            .zip(ref_dist.log_probs())
                            .zip(dist.log_probs())
                            .filter(|((p, _), _)| **p > 0.0)
                            .map(|((p, lr), lt)| p * (lr - lt))
                            .sum();
                        kl.max(0.0)
                    }
                };
                for g in &mut dlogits {
                    *g *= scale_onehot;
                }
                if config.kl_mode == KlMode::Exact && config.beta_kl != 0.0 {
                    let c = config.beta_kl / n;
                    for ((g, pt), pr) in dlogits.iter_mut().zip(dist.probs()).zip(ref_dist.probs()) {
                        *g += c * (pt - pr);
                    }
                }
                backprop_logits(theta, &features, &acts, &dlogits, 1.0, &mut out.grad);
                out.loss -= (surr - config.beta_kl * kl) / n;
                out.kl_sum += kl;
                out.active += 1;
            }
        }
        Ok(out)
    });

    let mut loss = 0.0;
    let mut grad = vec![0.0; n_params];
    let (mut kl_sum, mut clipped, mut active) = (0.0, 0usize, 0usize);
    for r in per_rollout {
        let r = r?;
        loss += r.loss;
        par::add_assign(&mut grad, &r.grad);
        kl_sum += r.kl_sum;
        clipped += r.clipped;
        active += r.active;
    }
    if config.freeze_first_layer {
        grad[..theta.arch.first_layer_len()].fill(0.0);
    }
    let denom = active.max(1) as f64;
    Ok(LossOutput {
        loss,
        grad,
        mean_kl: kl_sum / denom,
        clip_fraction: clipped as f64 / denom,
    })
}

/// One teacher-forced training example.
#[derive(Debug, Clone, PartialEq)]
pub struct NtpExample {
    pub features: Vec<f64>,
    pub token: usize,
}

/// Ground-truth scene at pose index `k`: agents valid at `k`, with the
/// previous delta taken from `k - 1` when that pose is valid.
pub fn ground_truth_state(scenario: &Scenario, k: usize) -> SceneState {
    let agents = scenario
        .tracks
        .iter()
        .filter(|t| t.valid[k])
        .map(|t| AgentState {
            agent_id: t.agent_id,
            pose: t.poses[k],
            prev_delta: if k > 0 && t.valid[k - 1] {
                MotionDelta::between(&t.poses[k - 1], &t.poses[k])
            } else {
                MotionDelta::ZERO
            },
            length: t.length,
            width: t.width,
        })
        .collect();
    SceneState::new(k, scenario.dt, agents)
}

/// Teacher-forced (features, next token) pairs for every agent and step.
pub fn ntp_examples(
    scenario: &Scenario,
    vocab: &TokenVocabulary,
    features: &FeatureConfig,
) -> Vec<NtpExample> {
    let env = SimEnv::new(scenario, vocab, features);
    let mut out = Vec::new();
    for k in 0..scenario.track_len() - 1 {
        let state = ground_truth_state(scenario, k);
        for (j, agent) in state.agents.iter().enumerate() {
            let track = scenario
                .tracks
                .iter()
                .find(|t| t.agent_id == agent.agent_id)
                .expect("state agents come from tracks");
            if !track.valid[k + 1] {
                continue;
            }
            let delta = MotionDelta::between(&track.poses[k], &track.poses[k + 1]);
            out.push(NtpExample {
                features: env.encode(&state, j),
                token: vocab.nearest(&delta),
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub steps: usize,
    pub learning_rate: f64,
    /// Examples per step drawn with replacement; 0 means full batch.
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            steps: 4000,
            learning_rate: 0.01,
            batch_size: 256,
            optimizer: OptimizerKind::adam(),
            seed: 0,
        }
    }
}

/// Mean cross-entropy of `examples[idx]` and its gradient.
pub fn cross_entropy_and_grad(
    params: &PolicyParams,
    examples: &[NtpExample],
    idx: &[usize],
) -> Result<(f64, Vec<f64>)> {
    const CHUNK: usize = 64;
    let n = idx.len().max(1) as f64;
    let n_params = params.arch.param_count();
    let chunks = par::map_indexed(idx.len().div_ceil(CHUNK), |c| -> Result<(f64, Vec<f64>)> {
        let mut grad = vec![0.0; n_params];
        let mut loss = 0.0;
        for &e in &idx[c * CHUNK..((c + 1) * CHUNK).min(idx.len())] {
            let ex = &examples[e];
            loss -= accumulate_logprob_grad(params, &ex.features, ex.token, -1.0 / n, &mut grad)?;
        }
        Ok((loss / n, grad))
    });
    let mut loss = 0.0;
    let mut grad = vec![0.0; n_params];
    for c in chunks {
        let (l, g) = c?;
        loss += l;
        par::add_assign(&mut grad, &g);
    }
    Ok((loss, grad))
}

/// Teacher-forced next-token pretraining. Returns the trained parameters and
/// the per-step training loss (measured before each update).
pub fn ntp_pretrain(
    examples: &[NtpExample],
    params: &PolicyParams,
    config: &PretrainConfig,
) -> Result<(PolicyParams, Vec<f64>)> {
    params.validate()?;
    if examples.is_empty() {
        return Err(Error::Validation("no pretraining examples".into()));
    }
    let mut theta = params.clone();
    let mut opt = Optimizer::new(config.optimizer, theta.params.len());
    let mut rng = seed::rng_from(&[config.seed, 0x6e74_70]);
    let all: Vec<usize> = (0..examples.len()).collect();
    let mut curve = Vec::with_capacity(config.steps);
    for _ in 0..config.steps {
        let batch: Vec<usize> = if config.batch_size == 0 || config.batch_size >= examples.len() {
            all.clone()
        } else {
            (0..config.batch_size)
                .map(|_| rng.gen_range(0..examples.len()))
                .collect()
        };
        let (loss, grad) = cross_entropy_and_grad(&theta, examples, &batch)?;
        curve.push(loss);
        if config.learning_rate != 0.0 {
            opt.step(&mut theta.params, &grad, config.learning_rate);
        }
    }
    Ok((theta, curve))
}

/// Fraction of examples whose argmax token matches the target.
pub fn ntp_accuracy(params: &PolicyParams, examples: &[NtpExample]) -> Result<f64> {
    let hits = par::map_slice(examples, |ex| -> Result<bool> {
        let logits = forward(params, &ex.features)?;
        let best = logits
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |b, (i, &z)| if z > b.1 { (i, z) } else { b })
            .0;
        Ok(best == ex.token)
    });
    let mut count = 0usize;
    for h in hits {
        count += h? as usize;
    }
    Ok(count as f64 / examples.len().max(1) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationStats {
    pub iteration: usize,
    pub mean_reward: f64,
    pub collision_rate: f64,
    pub mean_entropy: f64,
    pub mean_kl: f64,
    pub loss: f64,
}

/// Fine-tunes `params_init` with one GRPO update per sampled rollout group.
///
/// The reference policy is a frozen copy of `params_init`. Scenarios are
/// visited round-robin over a seeded shuffle that is redrawn every pass.
/// `on_iteration` sees the updated parameters after every iteration.
pub fn finetune_grpo(
    scenarios: &[Scenario],
    vocab: &TokenVocabulary,
    features: &FeatureConfig,
    params_init: &PolicyParams,
    config: &GrpoConfig,
    mut on_iteration: impl FnMut(&IterationStats, &PolicyParams),
) -> Result<(PolicyParams, Vec<IterationStats>)> {
    config.validate(vocab.len())?;
    if scenarios.is_empty() {
        return Err(Error::Validation("no scenarios to fine-tune on".into()));
    }
    let reference = params_init.clone();
    let mut theta = params_init.clone();
    let mut opt = Optimizer::new(config.optimizer, theta.params.len());
    let mut order_rng = seed::rng_from(&[config.seed, 0x6f72_6465_72]);
    let mut order: Vec<usize> = Vec::new();
    let mut stats = Vec::with_capacity(config.iterations);

    for iteration in 0..config.iterations {
        if order.is_empty() {
            order = (0..scenarios.len()).collect();
            order.shuffle(&mut order_rng);
            order.reverse();
        }
        let scenario = &scenarios[order.pop().expect("refilled above")];
        let env = SimEnv::new(scenario, vocab, features);
        let base_seed = seed::derive(&[config.seed, iteration as u64]);
        let group = rollout_group(&env, &theta, config.n_rollout, &config.sampler, base_seed)?;
        let rewards = compute_rewards(&group, scenario, &config.reward)?;
        let out = grpo_loss_and_grad(&env, &group, &rewards, &theta, &theta, &reference, config)?;
        opt.step(&mut theta.params, &out.grad, config.learning_rate);

        let entropies: Vec<f64> = group.entropies().collect();
        let s = IterationStats {
            iteration,
            mean_reward: rewards.mean_reward(),
            collision_rate: rewards.collision_rate(),
            mean_entropy: entropies.iter().sum::<f64>() / entropies.len().max(1) as f64,
            mean_kl: out.mean_kl,
            loss: out.loss,
        };
        on_iteration(&s, &theta);
        stats.push(s);
    }
    Ok((theta, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reward::RewardSlot;

    fn trace(n: usize, rewards: &[f64], valid: &[bool]) -> RewardTrace {
        RewardTrace {
            n_rollout: n,
            horizon: 1,
            n_agents: 1,
            slots: rewards
                .iter()
                .zip(valid)
                .map(|(&r, &v)| RewardSlot {
                    reward: r,
                    collision: false,
                    distance: v.then_some(0.0),
                    gt_valid: v,
                })
                .collect(),
        }
    }

    #[test]
    fn symmetric_pair() {
        let a = advantages(&trace(2, &[1.0, -1.0], &[true; 2]), AdvantageMode::MeanOnly).unwrap();
        assert_eq!(a.values, vec![1.0, -1.0]);
    }

    #[test]
    fn equal_rewards_give_zero() {
        for mode in [AdvantageMode::MeanOnly, AdvantageMode::Standardized] {
            let a = advantages(&trace(3, &[0.4; 3], &[true; 3]), mode).unwrap();
            assert_eq!(a.values, vec![0.0; 3]);
        }
    }

    #[test]
    fn mean_only_four() {
        let a = advantages(&trace(4, &[1.0, 0.5, -1.0, 0.5], &[true; 4]), AdvantageMode::MeanOnly)
            .unwrap();
        assert_eq!(a.values, vec![0.75, 0.25, -1.25, 0.25]);
    }

    #[test]
    fn masked_slots_leave_the_baseline() {
        let a = advantages(
            &trace(3, &[1.0, 0.0, 100.0], &[true, true, false]),
            AdvantageMode::MeanOnly,
        )
        .unwrap();
        assert_eq!(a.values, vec![0.5, -0.5, 0.0]);
        assert_eq!(a.mask, vec![true, true, false]);
    }

    #[test]
    fn group_of_one_is_rejected() {
        assert!(advantages(&trace(1, &[1.0], &[true]), AdvantageMode::MeanOnly).is_err());
    }

    #[test]
    fn ratio_and_kl_basics() {
        assert_eq!(importance_ratio(-1.3, -1.3), 1.0);
        assert!((importance_ratio(2f64.ln(), 0.0) - 2.0).abs() < 1e-15);
        assert_eq!(kl_term(-0.7, -0.7), 0.0);
        assert!((kl_term(2f64.ln(), 0.0) - (1.0 - 2f64.ln())).abs() < 1e-15);
    }

    #[test]
    fn surrogate_clips_on_the_pessimistic_side() {
        // positive advantage, ratio above 1 + eps: clipped, no gradient
        assert_eq!(surrogate(1.5, 2.0, 0.2, 0.2), (2.4, 0.0));
        // positive advantage, ratio below 1 - eps: unclipped
        assert_eq!(surrogate(0.5, 2.0, 0.2, 0.2), (1.0, 1.0));
        // negative advantage, ratio below 1 - eps: clipped
        let (v, g) = surrogate(0.5, -2.0, 0.2, 0.2);
        assert!((v + 1.6).abs() < 1e-15 && g == 0.0);
        // negative advantage, ratio above 1 + eps: unclipped
        assert_eq!(surrogate(1.5, -2.0, 0.2, 0.2), (-3.0, -3.0));
    }

    #[test]
    fn config_reports_all_violations() {
        let cfg = GrpoConfig {
            n_rollout: 1,
            eps_low: 0.0,
            learning_rate: -1.0,
            ..Default::default()
        };
        assert_eq!(cfg.violations(128).len(), 3);
        assert!(GrpoConfig::default().validate(128).is_ok());
    }
}
