//! Evaluation aggregates: collision rate, displacement error, entropy
//! histograms and easy/hard scenario splits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{FeatureConfig, PolicyParams};
use crate::reward::safety_term;
use crate::rollout::{rollout_group, RolloutGroup, SimEnv};
use crate::sampling::SamplerConfig;
use crate::scenario::Scenario;
use crate::tokenizer::TokenVocabulary;
use crate::{par, seed};

fn collision_counts(group: &RolloutGroup) -> (usize, usize) {
    let mut hits = 0;
    let mut total = 0;
    for rollout in &group.rollouts {
        for state in &rollout.states[1..] {
            let s = safety_term(state);
            hits += s.iter().filter(|v| **v < 0.0).count();
            total += s.len();
        }
    }
    (hits, total)
}

/// Fraction of simulated (rollout, step, agent) slots in collision.
pub fn collision_rate(group: &RolloutGroup) -> f64 {
    let (hits, total) = collision_counts(group);
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

/// Mean position error to ground truth over valid slots, and the best
/// per-rollout mean in the group.
pub fn displacement(group: &RolloutGroup, scenario: &Scenario) -> Result<(f64, f64)> {
    let order = scenario.track_order();
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut min_ade = f64::INFINITY;
    for rollout in &group.rollouts {
        let mut r_sum = 0.0;
        let mut r_count = 0usize;
        for (t, state) in rollout.states.iter().enumerate().skip(1) {
            let gt_step = scenario.history_len + t;
            for (j, agent) in state.agents.iter().enumerate() {
                let track = &scenario.tracks[order[j]];
                if gt_step < track.valid.len() && track.valid[gt_step] {
                    r_sum += agent.pose.distance(&track.poses[gt_step]);
                    r_count += 1;
                }
            }
        }
        if r_count > 0 {
            min_ade = min_ade.min(r_sum / r_count as f64);
        }
        sum += r_sum;
        count += r_count;
    }
    if count == 0 {
        return Err(Error::NoValidGroundTruth(
            "no ground-truth-valid slot in the simulated horizon".into(),
        ));
    }
    Ok((sum / count as f64, min_ade))
}

/// Counts of entropies in `n_bins` uniform bins over `[0, ln vocab_size]`.
/// Values outside the range land in the nearest end bin.
pub fn entropy_histogram(
    entropies: impl IntoIterator<Item = f64>,
    n_bins: usize,
    vocab_size: usize,
) -> Vec<u64> {
    let n_bins = n_bins.max(1);
    let upper = (vocab_size.max(2) as f64).ln();
    let mut counts = vec![0u64; n_bins];
    for h in entropies {
        let b = ((h / upper) * n_bins as f64).floor();
        let b = if b.is_nan() || b < 0.0 {
            0
        } else {
            (b as usize).min(n_bins - 1)
        };
        counts[b] += 1;
    }
    counts
}

/// Ranks scenarios by score (higher first, ties to the lower id) and returns
/// the first and last `⌈pct · n⌉` ids.
pub fn split_easy_hard(scores: &[f64], pct: f64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(pct > 0.0 && pct < 0.5) {
        return Err(Error::Validation(format!("split pct must be in (0, 0.5), got {pct}")));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Validation("split scores must be finite".into()));
    }
    let mut ids: Vec<usize> = (0..scores.len()).collect();
    ids.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let m = ((pct * scores.len() as f64).ceil() as usize).min(scores.len());
    let easy = ids[..m].to_vec();
    let hard = ids[ids.len() - m..].to_vec();
    Ok((easy, hard))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub n_rollout: usize,
    pub sampler: SamplerConfig,
    pub n_bins: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n_rollout: 16,
            sampler: SamplerConfig::default(),
            n_bins: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub scenario: String,
    pub n_agents: usize,
    /// Sampled tokens behind `mean_entropy`.
    pub n_tokens: usize,
    pub collision_rate: f64,
    pub ade: f64,
    pub min_ade: f64,
    pub mean_entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Pooled over every simulated slot of every scenario.
    pub collision_rate: f64,
    /// Unweighted mean of per-scenario values.
    pub ade: f64,
    pub min_ade: f64,
    /// Pooled over every per-token entropy.
    pub mean_entropy: f64,
    pub entropy_histogram: Vec<u64>,
    pub rows: Vec<ScenarioRow>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::parse("eval report", e))
    }

    /// Token-weighted mean entropy over the rows in `ids`.
    pub fn mean_entropy_of(&self, ids: &[usize]) -> f64 {
        let (s, n) = ids.iter().map(|&i| &self.rows[i]).fold((0.0, 0usize), |(s, n), r| {
            (s + r.mean_entropy * r.n_tokens as f64, n + r.n_tokens)
        });
        if n == 0 {
            0.0
        } else {
            s / n as f64
        }
    }

    /// Per-scenario `min_ade` values in row order.
    pub fn min_ades(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.min_ade).collect()
    }
}

struct ScenarioEval {
    row: ScenarioRow,
    hits: usize,
    slots: usize,
    entropies: Vec<f64>,
}

/// Simulates a group per scenario and aggregates the metrics. Scenario `k`
/// uses rollout seeds derived from `(config.seed, k)`.
pub fn evaluate(
    scenarios: &[(String, Scenario)],
    vocab: &TokenVocabulary,
    features: &FeatureConfig,
    params: &PolicyParams,
    config: &EvalConfig,
) -> Result<EvalReport> {
    config.sampler.validate(vocab.len())?;
    if scenarios.is_empty() {
        return Err(Error::Validation("no scenarios to evaluate".into()));
    }
    let evals = par::map_indexed(scenarios.len(), |k| -> Result<ScenarioEval> {
        let (name, scenario) = &scenarios[k];
        let env = SimEnv::new(scenario, vocab, features);
        let group = rollout_group(
            &env,
            params,
            config.n_rollout,
            &config.sampler,
            seed::derive(&[config.seed, k as u64]),
        )?;
        let (hits, slots) = collision_counts(&group);
        let (ade, min_ade) = displacement(&group, scenario)?;
        let entropies: Vec<f64> = group.entropies().collect();
        Ok(ScenarioEval {
            row: ScenarioRow {
                scenario: name.clone(),
                n_agents: group.n_agents(),
                n_tokens: entropies.len(),
                collision_rate: if slots == 0 { 0.0 } else { hits as f64 / slots as f64 },
                ade,
                min_ade,
                mean_entropy: entropies.iter().sum::<f64>() / entropies.len().max(1) as f64,
            },
            hits,
            slots,
            entropies,
        })
    });

    let mut rows = Vec::with_capacity(scenarios.len());
    let (mut hits, mut slots) = (0usize, 0usize);
    let mut all_entropies = Vec::new();
    for e in evals {
        let e = e?;
        hits += e.hits;
        slots += e.slots;
        all_entropies.extend(e.entropies);
        rows.push(e.row);
    }
    let n = rows.len() as f64;
    Ok(EvalReport {
        collision_rate: if slots == 0 { 0.0 } else { hits as f64 / slots as f64 },
        ade: rows.iter().map(|r| r.ade).sum::<f64>() / n,
        min_ade: rows.iter().map(|r| r.min_ade).sum::<f64>() / n,
        mean_entropy: all_entropies.iter().sum::<f64>() / all_entropies.len().max(1) as f64,
        entropy_histogram: entropy_histogram(all_entropies, config.n_bins, vocab.len()),
        rows,
    })
}
