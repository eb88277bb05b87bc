//! Categorical token policy: scene feature encoding, a one-hidden-layer
//! perceptron over the vocabulary, entropy, and exact log-probability gradients.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rollout::SceneState;
use crate::seed;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Feature layout and input scaling.
///
/// Scales multiply the raw physical quantities. The own-delta scale is large
/// because neighbouring tokens differ by centimetres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub k_neighbors: usize,
    pub m_map: usize,
    /// Applied to speeds in m/s.
    pub speed_scale: f64,
    /// Applied to relative positions in metres.
    pub distance_scale: f64,
    /// Applied to own previous-step dx, dy in metres.
    pub delta_scale: f64,
    /// Applied to own previous-step dyaw in radians.
    pub yaw_scale: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            k_neighbors: 4,
            m_map: 8,
            speed_scale: 0.1,
            distance_scale: 0.1,
            delta_scale: 10.0,
            yaw_scale: 10.0,
        }
    }
}

impl FeatureConfig {
    /// Physical units throughout.
    pub fn unscaled() -> Self {
        Self {
            speed_scale: 1.0,
            distance_scale: 1.0,
            delta_scale: 1.0,
            yaw_scale: 1.0,
            ..Self::default()
        }
    }

    pub const NEIGHBOR_WIDTH: usize = 5;
    pub const OWN_WIDTH: usize = 4;

    pub fn dim(&self) -> usize {
        Self::OWN_WIDTH + Self::NEIGHBOR_WIDTH * self.k_neighbors + 2 * self.m_map
    }

    /// Offset of neighbour slot `k` in the feature vector.
    pub fn neighbor_offset(&self, k: usize) -> usize {
        Self::OWN_WIDTH + Self::NEIGHBOR_WIDTH * k
    }

    /// Offset of map slot `m` in the feature vector.
    pub fn map_offset(&self, m: usize) -> usize {
        Self::OWN_WIDTH + Self::NEIGHBOR_WIDTH * self.k_neighbors + 2 * m
    }
}

/// Indices of the `k` smallest keys, ordered by key then by index.
fn nearest_k(keys: &[f64], k: usize, tie: impl Fn(usize) -> u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    let cmp = |a: &usize, b: &usize| keys[*a].total_cmp(&keys[*b]).then(tie(*a).cmp(&tie(*b)));
    if idx.len() > k && k > 0 {
        idx.select_nth_unstable_by(k - 1, cmp);
        idx.truncate(k);
    }
    idx.sort_by(cmp);
    idx.truncate(k);
    idx
}

/// Encodes agent `agent_index` of `state` in its own frame.
///
/// Layout: own speed, own previous delta (dx, dy, dyaw); then for each of the
/// nearest `k_neighbors` agents relative x, y, heading, speed and a presence
/// flag; then the nearest `m_map` lane-centre points as relative x, y.
pub fn encode_features(
    state: &SceneState,
    agent_index: usize,
    lane_points: &[[f64; 2]],
    cfg: &FeatureConfig,
) -> Vec<f64> {
    let mut f = vec![0.0; cfg.dim()];
    let ego = &state.agents[agent_index];
    let ego_speed = ego.speed(state.dt);
    f[0] = ego_speed * cfg.speed_scale;
    f[1] = ego.prev_delta.dx * cfg.delta_scale;
    f[2] = ego.prev_delta.dy * cfg.delta_scale;
    f[3] = ego.prev_delta.dyaw * cfg.yaw_scale;

    let others: Vec<usize> = (0..state.agents.len()).filter(|&j| j != agent_index).collect();
    let dists: Vec<f64> = others
        .iter()
        .map(|&j| {
            let p = &state.agents[j].pose;
            (p.x - ego.pose.x).powi(2) + (p.y - ego.pose.y).powi(2)
        })
        .collect();
    let picked = nearest_k(&dists, cfg.k_neighbors, |i| state.agents[others[i]].agent_id as u64);
    for (slot, &i) in picked.iter().enumerate() {
        let other = &state.agents[others[i]];
        let [lx, ly] = ego.pose.to_local(other.pose.position());
        let o = cfg.neighbor_offset(slot);
        f[o] = lx * cfg.distance_scale;
        f[o + 1] = ly * cfg.distance_scale;
        f[o + 2] = crate::geometry::normalize_angle(other.pose.yaw - ego.pose.yaw);
        f[o + 3] = (other.speed(state.dt) - ego_speed) * cfg.speed_scale;
        f[o + 4] = 1.0;
    }

    let map_d: Vec<f64> = lane_points
        .iter()
        .map(|p| (p[0] - ego.pose.x).powi(2) + (p[1] - ego.pose.y).powi(2))
        .collect();
    for (slot, &i) in nearest_k(&map_d, cfg.m_map, |i| i as u64).iter().enumerate() {
        let [lx, ly] = ego.pose.to_local(lane_points[i]);
        let o = cfg.map_offset(slot);
        f[o] = lx * cfg.distance_scale;
        f[o + 1] = ly * cfg.distance_scale;
    }
    f
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyDims {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
}

impl PolicyDims {
    pub fn param_count(&self) -> usize {
        self.hidden * self.input + self.hidden + self.output * self.hidden + self.output
    }

    fn w1(&self) -> std::ops::Range<usize> {
        0..self.hidden * self.input
    }
    fn b1(&self) -> std::ops::Range<usize> {
        let s = self.hidden * self.input;
        s..s + self.hidden
    }
    fn w2(&self) -> std::ops::Range<usize> {
        let s = self.b1().end;
        s..s + self.output * self.hidden
    }
    fn b2(&self) -> std::ops::Range<usize> {
        let s = self.w2().end;
        s..s + self.output
    }

    /// Parameters of the first layer (W1 then b1) occupy this prefix.
    pub fn first_layer_len(&self) -> usize {
        self.b1().end
    }

    /// Flat index of `W2[row][col]`.
    pub fn w2_index(&self, row: usize, col: usize) -> usize {
        self.w2().start + row * self.hidden + col
    }

    /// Flat index of `b2[row]`.
    pub fn b2_index(&self, row: usize) -> usize {
        self.b2().start + row
    }
}

/// Flat parameter vector, laid out as W1 (row-major), b1, W2 (row-major), b2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub version: u32,
    pub arch: PolicyDims,
    pub seed: u64,
    pub params: Vec<f64>,
}

impl PolicyParams {
    pub fn zeros(arch: PolicyDims) -> Self {
        Self {
            version: CHECKPOINT_FORMAT_VERSION,
            arch,
            seed: 0,
            params: vec![0.0; arch.param_count()],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.params.len() != self.arch.param_count() {
            return Err(Error::DimensionMismatch {
                expected: self.arch.param_count(),
                got: self.params.len(),
            });
        }
        if self.params.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite policy parameter".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::parse("checkpoint", e))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let p: PolicyParams = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::parse(format!("checkpoint field `{}`", e.path()), e.inner()))?;
        if p.version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Validation(format!(
                "unsupported checkpoint version {}",
                p.version
            )));
        }
        p.validate()?;
        Ok(p)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_params(seed: u64, arch: PolicyDims) -> PolicyParams {
    let mut rng = seed::rng_from(&[seed, 0x706f_6c69_6379]);
    let mut p = PolicyParams::zeros(arch);
    p.seed = seed;
    let a1 = (6.0 / (arch.input + arch.hidden) as f64).sqrt();
    let a2 = (6.0 / (arch.hidden + arch.output) as f64).sqrt();
    for v in &mut p.params[arch.w1()] {
        *v = rng.gen_range(-a1..=a1);
    }
    for v in &mut p.params[arch.w2()] {
        *v = rng.gen_range(-a2..=a2);
    }
    p
}

/// Hidden activations and logits of one forward pass.
#[derive(Debug, Clone)]
pub struct Activations {
    pub hidden: Vec<f64>,
    pub logits: Vec<f64>,
}

pub fn forward_cached(params: &PolicyParams, features: &[f64]) -> Result<Activations> {
    let d = params.arch;
    if features.len() != d.input {
        return Err(Error::DimensionMismatch {
            expected: d.input,
            got: features.len(),
        });
    }
    let w1 = &params.params[d.w1()];
    let b1 = &params.params[d.b1()];
    let w2 = &params.params[d.w2()];
    let b2 = &params.params[d.b2()];
    let hidden: Vec<f64> = (0..d.hidden)
        .map(|h| {
            let row = &w1[h * d.input..(h + 1) * d.input];
            let z: f64 = row.iter().zip(features).map(|(w, x)| w * x).sum();
            (z + b1[h]).tanh()
        })
        .collect();
    let logits = (0..d.output)
        .map(|k| {
            let row = &w2[k * d.hidden..(k + 1) * d.hidden];
            row.iter().zip(&hidden).map(|(w, x)| w * x).sum::<f64>() + b2[k]
        })
        .collect();
    Ok(Activations { hidden, logits })
}

pub fn forward(params: &PolicyParams, features: &[f64]) -> Result<Vec<f64>> {
    Ok(forward_cached(params, features)?.logits)
}

/// Categorical distribution over tokens with matching log-probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenDistribution {
    probs: Vec<f64>,
    log_probs: Vec<f64>,
}

impl TokenDistribution {
    /// Wraps explicit probabilities. Entries must be non-negative and sum to one.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        let sum: f64 = probs.iter().sum();
        if probs.is_empty() || probs.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!(
                "not a probability vector (sum {sum})"
            )));
        }
        let log_probs = probs.iter().map(|p| p.ln()).collect();
        Ok(Self { probs, log_probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn entropy(&self) -> f64 {
        entropy(self)
    }
}

/// Max-shifted softmax; log-probabilities are computed as `z - max - ln Σ`.
pub fn softmax_probs(logits: &[f64]) -> TokenDistribution {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let log_sum = sum.ln();
    let mut probs: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    let log_probs = logits.iter().map(|z| z - max - log_sum).collect();
    TokenDistribution { probs, log_probs }
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn entropy(dist: &TokenDistribution) -> f64 {
    let h: f64 = dist
        .probs
        .iter()
        .zip(&dist.log_probs)
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, lp)| -p * lp)
        .sum();
    h.max(0.0)
}

/// Accumulates `scale · ∂(dlogits · logits)/∂θ` into `grad`.
pub fn backprop_logits(
    params: &PolicyParams,
    features: &[f64],
    acts: &Activations,
    dlogits: &[f64],
    scale: f64,
    grad: &mut [f64],
) {
    let d = params.arch;
    let w2 = &params.params[d.w2()];
    let mut dhidden = vec![0.0; d.hidden];
    {
        let (g_w2, g_b2) = grad[d.w2().start..d.b2().end].split_at_mut(d.output * d.hidden);
        for k in 0..d.output {
            let g = dlogits[k];
            if g == 0.0 {
                continue;
            }
            let sg = scale * g;
            g_b2[k] += sg;
            let row = &w2[k * d.hidden..(k + 1) * d.hidden];
            let grow = &mut g_w2[k * d.hidden..(k + 1) * d.hidden];
            for h in 0..d.hidden {
                grow[h] += sg * acts.hidden[h];
                dhidden[h] += g * row[h];
            }
        }
    }
    let (g_w1, g_b1) = grad[..d.b1().end].split_at_mut(d.hidden * d.input);
    for h in 0..d.hidden {
        let dpre = scale * dhidden[h] * (1.0 - acts.hidden[h] * acts.hidden[h]);
        if dpre == 0.0 {
            continue;
        }
        g_b1[h] += dpre;
        let grow = &mut g_w1[h * d.input..(h + 1) * d.input];
        for (g, x) in grow.iter_mut().zip(features) {
            *g += dpre * x;
        }
    }
}

/// Log-probability of `token` and its gradient with respect to the flat parameters.
pub fn logprob_and_grad(
    params: &PolicyParams,
    features: &[f64],
    token: usize,
) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; params.arch.param_count()];
    let lp = accumulate_logprob_grad(params, features, token, 1.0, &mut grad)?;
    Ok((lp, grad))
}

/// Adds `scale · ∇log π(token)` into `grad` and returns `log π(token)`.
pub fn accumulate_logprob_grad(
    params: &PolicyParams,
    features: &[f64],
    token: usize,
    scale: f64,
    grad: &mut [f64],
) -> Result<f64> {
    if token >= params.arch.output {
        return Err(Error::InvalidToken {
            id: token,
            size: params.arch.output,
        });
    }
    let acts = forward_cached(params, features)?;
    let dist = softmax_probs(&acts.logits);
    let lp = dist.log_probs[token];
    if scale != 0.0 {
        let mut dlogits: Vec<f64> = dist.probs.iter().map(|p| -p).collect();
        dlogits[token] += 1.0;
        backprop_logits(params, features, &acts, &dlogits, scale, grad);
    }
    Ok(lp)
}
