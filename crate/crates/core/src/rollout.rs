//! Closed-loop autoregressive simulation and rollout groups.
//!
//! Every agent is driven by the policy. At each step all agents observe the
//! same pre-step scene, sample a token, and the new poses are committed
//! together. Each agent draws from its own generator seeded from
//! `(rollout seed, agent_id)`.

use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{apply_delta, MotionDelta, OrientedBox, Pose2D};
use crate::policy::{encode_features, forward, softmax_probs, FeatureConfig, PolicyParams};
use crate::reward::RewardTrace;
use crate::sampling::{sample_action, SampledAction, SamplerConfig};
use crate::scenario::Scenario;
use crate::tokenizer::TokenVocabulary;
use crate::{par, seed};

pub const DEFAULT_GROUP_SIZE: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub agent_id: u32,
    pub pose: Pose2D,
    pub prev_delta: MotionDelta,
    pub length: f64,
    pub width: f64,
}

impl AgentState {
    pub fn speed(&self, dt: f64) -> f64 {
        self.prev_delta.translation_norm() / dt
    }

    pub fn footprint(&self) -> OrientedBox {
        OrientedBox::new(self.pose, self.length, self.width)
            .expect("agent dimensions are validated with the scenario")
    }
}

/// Joint state of all agents, ordered by ascending agent id.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneState {
    pub step: usize,
    pub dt: f64,
    pub agents: Vec<AgentState>,
}

impl SceneState {
    pub fn new(step: usize, dt: f64, mut agents: Vec<AgentState>) -> Self {
        agents.sort_by_key(|a| a.agent_id);
        Self { step, dt, agents }
    }

    pub fn footprints(&self) -> Vec<OrientedBox> {
        self.agents.iter().map(AgentState::footprint).collect()
    }
}

/// Per-agent sampling record of one step, in state order.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub agents: Vec<SampledAction>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub seed: u64,
    /// `horizon + 1` states; `states[t + 1]` results from `records[t]`.
    pub states: Vec<SceneState>,
    pub records: Vec<StepRecord>,
}

impl Rollout {
    pub fn tokens(&self, agent: usize) -> Vec<usize> {
        self.records.iter().map(|r| r.agents[agent].token).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutGroup {
    pub base_seed: u64,
    pub rollouts: Vec<Rollout>,
}

impl RolloutGroup {
    pub fn len(&self) -> usize {
        self.rollouts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rollouts.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.rollouts.first().map_or(0, |r| r.records.len())
    }

    pub fn n_agents(&self) -> usize {
        self.rollouts.first().map_or(0, |r| r.states[0].agents.len())
    }

    /// Per-step per-agent entropies across all rollouts.
    pub fn entropies(&self) -> impl Iterator<Item = f64> + '_ {
        self.rollouts
            .iter()
            .flat_map(|r| r.records.iter())
            .flat_map(|rec| rec.agents.iter().map(|a| a.entropy))
    }
}

/// Scenario-bound simulation inputs shared by all rollouts.
#[derive(Debug, Clone)]
pub struct SimEnv<'a> {
    pub scenario: &'a Scenario,
    pub vocab: &'a TokenVocabulary,
    pub features: &'a FeatureConfig,
    lane_points: Vec<[f64; 2]>,
}

impl<'a> SimEnv<'a> {
    pub fn new(scenario: &'a Scenario, vocab: &'a TokenVocabulary, features: &'a FeatureConfig) -> Self {
        Self {
            scenario,
            vocab,
            features,
            lane_points: scenario.lane_points().collect(),
        }
    }

    pub fn lane_points(&self) -> &[[f64; 2]] {
        &self.lane_points
    }

    pub fn encode(&self, state: &SceneState, agent: usize) -> Vec<f64> {
        encode_features(state, agent, &self.lane_points, self.features)
    }

    pub fn check_params(&self, params: &PolicyParams) -> Result<()> {
        params.validate()?;
        if params.arch.input != self.features.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.features.dim(),
                got: params.arch.input,
            });
        }
        if params.arch.output != self.vocab.len() {
            return Err(Error::DimensionMismatch {
                expected: self.vocab.len(),
                got: params.arch.output,
            });
        }
        Ok(())
    }
}

/// Scene at the last history step. Uses the latest valid pose at or before
/// that step; the previous delta is zero unless the pose before it is valid.
pub fn initial_state(scenario: &Scenario) -> SceneState {
    let h = scenario.history_len;
    let agents = scenario
        .tracks
        .iter()
        .map(|t| {
            let idx = (0..=h.min(t.poses.len() - 1))
                .rev()
                .find(|&k| t.valid[k])
                .unwrap_or(0);
            let prev_delta = if idx > 0 && t.valid[idx - 1] {
                MotionDelta::between(&t.poses[idx - 1], &t.poses[idx])
            } else {
                MotionDelta::ZERO
            };
            AgentState {
                agent_id: t.agent_id,
                pose: t.poses[idx],
                prev_delta,
                length: t.length,
                width: t.width,
            }
        })
        .collect();
    SceneState::new(0, scenario.dt, agents)
}

/// One generator per agent, in state order.
pub fn agent_rngs(state: &SceneState, rollout_seed: u64) -> Vec<ChaCha8Rng> {
    state
        .agents
        .iter()
        .map(|a| seed::rng_from(&[rollout_seed, a.agent_id as u64]))
        .collect()
}

/// Advances all agents one step from the same pre-step scene.
pub fn step(
    env: &SimEnv<'_>,
    state: &SceneState,
    params: &PolicyParams,
    sampler: &SamplerConfig,
    rngs: &mut [ChaCha8Rng],
) -> Result<(SceneState, StepRecord)> {
    let mut next = Vec::with_capacity(state.agents.len());
    let mut record = Vec::with_capacity(state.agents.len());
    for (j, agent) in state.agents.iter().enumerate() {
        let features = env.encode(state, j);
        let dist = softmax_probs(&forward(params, &features)?);
        let action = sample_action(&dist, dist.entropy(), sampler, &mut rngs[j]);
        let delta = *env.vocab.delta(action.token)?;
        next.push(AgentState {
            pose: apply_delta(&agent.pose, &delta),
            prev_delta: delta,
            ..agent.clone()
        });
        record.push(action);
    }
    Ok((
        SceneState {
            step: state.step + 1,
            dt: state.dt,
            agents: next,
        },
        StepRecord { agents: record },
    ))
}

/// Runs the full horizon from the initial state.
pub fn simulate(
    env: &SimEnv<'_>,
    params: &PolicyParams,
    sampler: &SamplerConfig,
    seed: u64,
) -> Result<Rollout> {
    env.check_params(params)?;
    sampler.validate(env.vocab.len())?;
    let horizon = env.scenario.horizon;
    let mut state = initial_state(env.scenario);
    let mut rngs = agent_rngs(&state, seed);
    let mut states = Vec::with_capacity(horizon + 1);
    let mut records = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let (next, rec) = step(env, &state, params, sampler, &mut rngs)?;
        states.push(std::mem::replace(&mut state, next));
        records.push(rec);
    }
    states.push(state);
    Ok(Rollout {
        seed,
        states,
        records,
    })
}

/// `n_rollout` independent rollouts with seeds `base_seed + i`, in index order.
pub fn rollout_group(
    env: &SimEnv<'_>,
    params: &PolicyParams,
    n_rollout: usize,
    sampler: &SamplerConfig,
    base_seed: u64,
) -> Result<RolloutGroup> {
    if n_rollout < 2 {
        return Err(Error::Validation(format!(
            "rollout group needs at least 2 rollouts, got {n_rollout}"
        )));
    }
    let rollouts = par::map_indexed(n_rollout, |i| {
        simulate(env, params, sampler, base_seed.wrapping_add(i as u64))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(RolloutGroup {
        base_seed,
        rollouts,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct AgentStepDump {
    pub agent_id: u32,
    pub pose: Pose2D,
    pub token: usize,
    pub entropy: f64,
    pub k: usize,
    pub logprob: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reward: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub collision: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RolloutDump {
    pub seed: u64,
    pub initial: Vec<AgentStateDump>,
    /// `steps[t]` holds the sampled tokens at step t and the resulting poses.
    pub steps: Vec<Vec<AgentStepDump>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AgentStateDump {
    pub agent_id: u32,
    pub pose: Pose2D,
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupDump {
    pub base_seed: u64,
    pub rollouts: Vec<RolloutDump>,
}

/// Plot-ready view of a group, optionally annotated with rewards.
pub fn group_dump(group: &RolloutGroup, rewards: Option<&RewardTrace>) -> GroupDump {
    let rollouts = group
        .rollouts
        .iter()
        .enumerate()
        .map(|(i, r)| RolloutDump {
            seed: r.seed,
            initial: r.states[0]
                .agents
                .iter()
                .map(|a| AgentStateDump {
                    agent_id: a.agent_id,
                    pose: a.pose,
                })
                .collect(),
            steps: r
                .records
                .iter()
                .enumerate()
                .map(|(t, rec)| {
                    rec.agents
                        .iter()
                        .zip(&r.states[t + 1].agents)
                        .enumerate()
                        .map(|(j, (act, agent))| {
                            let slot = rewards.map(|rw| rw.slot(i, t, j));
                            AgentStepDump {
                                agent_id: agent.agent_id,
                                pose: agent.pose,
                                token: act.token,
                                entropy: act.entropy,
                                k: act.k,
                                logprob: act.logprob,
                                reward: slot.map(|s| s.reward),
                                collision: slot.map(|s| s.collision),
                            }
                        })
                        .collect()
                })
                .collect(),
        })
        .collect();
    GroupDump {
        base_seed: group.base_seed,
        rollouts,
    }
}
