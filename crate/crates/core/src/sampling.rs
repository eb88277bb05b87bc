//! Truncated top-K token sampling with a fixed or entropy-driven K.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::TokenDistribution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerMode {
    FixedTopk,
    EntropyAdaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub mode: SamplerMode,
    pub k_fixed: usize,
    pub k_min: usize,
    pub k_max: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            mode: SamplerMode::EntropyAdaptive,
            k_fixed: 32,
            k_min: 16,
            k_max: 80,
        }
    }
}

impl SamplerConfig {
    pub fn fixed(k: usize) -> Self {
        Self {
            mode: SamplerMode::FixedTopk,
            k_fixed: k,
            ..Self::default()
        }
    }

    pub fn adaptive(k_min: usize, k_max: usize) -> Self {
        Self {
            mode: SamplerMode::EntropyAdaptive,
            k_min,
            k_max,
            ..Self::default()
        }
    }

    /// Checks the bounds used by the active mode.
    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        match self.mode {
            SamplerMode::EntropyAdaptive => {
                if !(1 <= self.k_min && self.k_min <= self.k_max && self.k_max <= vocab_size) {
                    return Err(Error::Validation(format!(
                        "sampler requires 1 <= k_min ({}) <= k_max ({}) <= |V| ({vocab_size})",
                        self.k_min, self.k_max
                    )));
                }
            }
            SamplerMode::FixedTopk => {
                if !(1 <= self.k_fixed && self.k_fixed <= vocab_size) {
                    return Err(Error::Validation(format!(
                        "sampler requires 1 <= k_fixed ({}) <= |V| ({vocab_size})",
                        self.k_fixed
                    )));
                }
            }
        }
        Ok(())
    }
}

/// `K = round(k_min + (k_max - k_min) · σ(H))`, rounded half away from zero
/// and clamped to `[1, k_max]`.
pub fn adaptive_k(entropy_nats: f64, k_min: usize, k_max: usize) -> usize {
    let sigmoid = 1.0 / (1.0 + (-entropy_nats).exp());
    let k = (k_min as f64 + (k_max - k_min) as f64 * sigmoid).round();
    (k as usize).clamp(1, k_max.max(1))
}

/// Ids of the `k` most probable tokens, ordered by probability then id.
pub fn top_k_ids(probs: &[f64], k: usize) -> Vec<usize> {
    let k = k.clamp(1, probs.len());
    let cmp = |a: &usize, b: &usize| probs[*b].total_cmp(&probs[*a]).then(a.cmp(b));
    let mut ids: Vec<usize> = (0..probs.len()).collect();
    if k < ids.len() {
        ids.select_nth_unstable_by(k - 1, cmp);
        ids.truncate(k);
    }
    ids.sort_by(cmp);
    ids
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopKDraw {
    pub token: usize,
    pub logprob_truncated: f64,
    pub logprob_full: f64,
}

/// Draws from the renormalized top-`k` truncation of `dist`.
pub fn top_k_sample(dist: &TokenDistribution, k: usize, rng: &mut impl Rng) -> TopKDraw {
    let probs = dist.probs();
    let kept = top_k_ids(probs, k);
    let mass: f64 = kept.iter().map(|&i| probs[i]).sum();
    let target = rng.gen::<f64>() * mass;
    let mut acc = 0.0;
    let mut token = kept[0];
    for &i in &kept {
        if probs[i] <= 0.0 {
            continue;
        }
        acc += probs[i];
        token = i;
        if target < acc {
            break;
        }
    }
    TopKDraw {
        token,
        logprob_truncated: (probs[token] / mass).ln(),
        logprob_full: dist.log_probs()[token],
    }
}

/// One sampled action with the diagnostics stored per step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampledAction {
    pub token: usize,
    pub k: usize,
    pub entropy: f64,
    pub logprob: f64,
    pub logprob_truncated: f64,
}

pub fn sample_action(
    dist: &TokenDistribution,
    entropy: f64,
    cfg: &SamplerConfig,
    rng: &mut impl Rng,
) -> SampledAction {
    let k = match cfg.mode {
        SamplerMode::FixedTopk => cfg.k_fixed,
        SamplerMode::EntropyAdaptive => adaptive_k(entropy, cfg.k_min, cfg.k_max),
    }
    .min(dist.len());
    let draw = top_k_sample(dist, k, rng);
    SampledAction {
        token: draw.token,
        k,
        entropy,
        logprob: draw.logprob_full,
        logprob_truncated: draw.logprob_truncated,
    }
}
