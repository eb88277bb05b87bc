//! Token-level safety-aware rewards.
//!
//! Each (rollout, step, agent) slot is scored from the state reached after the
//! step's tokens are applied: a ±1 collision sign from pairwise SAT tests and
//! an exponential kernel on the distance to ground truth.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, sat_overlap, Pose2D};
use crate::par;
use crate::rollout::{RolloutGroup, SceneState};
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RewardVariant {
    /// Safety × realism at every step.
    #[serde(rename = "SPR")]
    Spr,
    /// Safety × realism at the final step only.
    #[serde(rename = "OR")]
    Or,
    /// Mean of safety and realism at every step.
    #[serde(rename = "APR")]
    Apr,
    /// APR plus a weighted final-step outcome bonus.
    #[serde(rename = "AHR")]
    Ahr,
    /// SPR plus a weighted final-step outcome bonus.
    #[serde(rename = "SHR")]
    Shr,
}

impl RewardVariant {
    pub const ALL: [RewardVariant; 5] = [
        RewardVariant::Spr,
        RewardVariant::Or,
        RewardVariant::Apr,
        RewardVariant::Ahr,
        RewardVariant::Shr,
    ];
}

impl fmt::Display for RewardVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RewardVariant::Spr => "SPR",
            RewardVariant::Or => "OR",
            RewardVariant::Apr => "APR",
            RewardVariant::Ahr => "AHR",
            RewardVariant::Shr => "SHR",
        })
    }
}

impl FromStr for RewardVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        RewardVariant::ALL
            .into_iter()
            .find(|v| v.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Validation(format!("unknown reward variant `{s}`")))
    }
}

/// How the sim-to-ground-truth deviation is measured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DistanceMetric {
    Position,
    /// Adds `yaw_weight · |Δyaw|` in quadrature to the position error.
    PositionHeading { yaw_weight: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub variant: RewardVariant,
    /// Kernel rate in 1/m.
    pub alpha: f64,
    /// Weight of the final-step bonus for AHR and SHR.
    pub outcome_weight: f64,
    pub distance: DistanceMetric,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            variant: RewardVariant::Spr,
            alpha: 0.5,
            outcome_weight: 0.5,
            distance: DistanceMetric::Position,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Validation(format!(
                "reward alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !(self.outcome_weight >= 0.0 && self.outcome_weight.is_finite()) {
            return Err(Error::Validation(format!(
                "outcome_weight must be non-negative, got {}",
                self.outcome_weight
            )));
        }
        Ok(())
    }

    /// Largest |r| any slot can take under this configuration.
    pub fn bound(&self) -> f64 {
        match self.variant {
            RewardVariant::Spr | RewardVariant::Or | RewardVariant::Apr => 1.0,
            RewardVariant::Ahr | RewardVariant::Shr => 1.0 + self.outcome_weight,
        }
    }
}

/// `-1` for every agent whose footprint overlaps any other agent's, else `+1`.
pub fn safety_term(state: &SceneState) -> Vec<f64> {
    let boxes = state.footprints();
    let mut hit = vec![false; boxes.len()];
    for i in 0..boxes.len() {
        for j in i + 1..boxes.len() {
            if sat_overlap(&boxes[i], &boxes[j]) {
                hit[i] = true;
                hit[j] = true;
            }
        }
    }
    hit.into_iter().map(|h| if h { -1.0 } else { 1.0 }).collect()
}

pub fn deviation(sim: &Pose2D, gt: &Pose2D, metric: DistanceMetric) -> f64 {
    let d = sim.distance(gt);
    match metric {
        DistanceMetric::Position => d,
        DistanceMetric::PositionHeading { yaw_weight } => {
            d.hypot(yaw_weight * normalize_angle(sim.yaw - gt.yaw))
        }
    }
}

/// `exp(-alpha · d)` with `d` the position distance.
pub fn realism_term(sim: &Pose2D, gt: &Pose2D, alpha: f64) -> f64 {
    (-alpha * sim.distance(gt)).exp()
}

/// Combines per-step safety and realism sequences of one agent into rewards.
pub fn combine_variant(
    variant: RewardVariant,
    safety: &[f64],
    realism: &[f64],
    outcome_weight: f64,
) -> Vec<f64> {
    let n = safety.len();
    let outcome = |t: usize| {
        if t + 1 == n {
            safety[t] * realism[t]
        } else {
            0.0
        }
    };
    (0..n)
        .map(|t| match variant {
            RewardVariant::Spr => safety[t] * realism[t],
            RewardVariant::Or => outcome(t),
            RewardVariant::Apr => 0.5 * (safety[t] + realism[t]),
            RewardVariant::Ahr => 0.5 * (safety[t] + realism[t]) + outcome_weight * outcome(t),
            RewardVariant::Shr => safety[t] * realism[t] + outcome_weight * outcome(t),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RewardSlot {
    pub reward: f64,
    pub collision: bool,
    /// Distance to ground truth; absent where ground truth is invalid.
    pub distance: Option<f64>,
    pub gt_valid: bool,
}

/// Rewards indexed by (rollout, step, agent), agents in ascending id order.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardTrace {
    pub n_rollout: usize,
    pub horizon: usize,
    pub n_agents: usize,
    pub slots: Vec<RewardSlot>,
}

impl RewardTrace {
    pub fn index(&self, i: usize, t: usize, j: usize) -> usize {
        (i * self.horizon + t) * self.n_agents + j
    }

    pub fn slot(&self, i: usize, t: usize, j: usize) -> &RewardSlot {
        &self.slots[self.index(i, t, j)]
    }

    /// Mean reward over ground-truth-valid slots.
    pub fn mean_reward(&self) -> f64 {
        let (s, n) = self
            .slots
            .iter()
            .filter(|s| s.gt_valid)
            .fold((0.0, 0usize), |(s, n), x| (s + x.reward, n + 1));
        if n == 0 {
            0.0
        } else {
            s / n as f64
        }
    }

    pub fn collision_rate(&self) -> f64 {
        if self.slots.is_empty() {
            return 0.0;
        }
        self.slots.iter().filter(|s| s.collision).count() as f64 / self.slots.len() as f64
    }
}

/// Scores every slot of a group against the scenario's ground truth.
pub fn compute_rewards(
    group: &RolloutGroup,
    scenario: &Scenario,
    config: &RewardConfig,
) -> Result<RewardTrace> {
    config.validate()?;
    let horizon = group.horizon();
    let n_agents = group.n_agents();
    if horizon > scenario.horizon || n_agents != scenario.tracks.len() {
        return Err(Error::Validation(
            "rollout group does not match scenario".into(),
        ));
    }
    let order = scenario.track_order();
    let per_rollout = par::map_slice(&group.rollouts, |rollout| {
        // [t][j] -> (safety, realism, distance, gt_valid)
        let mut safety = vec![vec![0.0; horizon]; n_agents];
        let mut realism = vec![vec![1.0; horizon]; n_agents];
        let mut distance = vec![vec![None; horizon]; n_agents];
        for t in 0..horizon {
            let state = &rollout.states[t + 1];
            let gt_step = scenario.history_len + t + 1;
            for (j, s) in safety_term(state).into_iter().enumerate() {
                safety[j][t] = s;
                let track = &scenario.tracks[order[j]];
                if track.valid[gt_step] {
                    let d = deviation(&state.agents[j].pose, &track.poses[gt_step], config.distance);
                    distance[j][t] = Some(d);
                    realism[j][t] = (-config.alpha * d).exp();
                }
            }
        }
        let rewards: Vec<Vec<f64>> = (0..n_agents)
            .map(|j| combine_variant(config.variant, &safety[j], &realism[j], config.outcome_weight))
            .collect();
        let mut out = Vec::with_capacity(horizon * n_agents);
        for t in 0..horizon {
            for j in 0..n_agents {
                out.push(RewardSlot {
                    reward: rewards[j][t],
                    collision: safety[j][t] < 0.0,
                    distance: distance[j][t],
                    gt_valid: distance[j][t].is_some(),
                });
            }
        }
        out
    });
    Ok(RewardTrace {
        n_rollout: group.len(),
        horizon,
        n_agents,
        slots: per_rollout.into_iter().flatten().collect(),
    })
}
