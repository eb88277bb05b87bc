//! Motion-token vocabulary: k-means over agent-frame deltas, plus
//! trajectory tokenization and detokenization.

use std::collections::HashSet;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{apply_delta, Pose2D};
use crate::{par, seed};

pub use crate::geometry::MotionDelta;

pub const VOCAB_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabConfig {
    pub step_dt: f64,
    /// Metres per radian in the clustering metric.
    pub yaw_weight: f64,
    /// Per-step cap on |dx| and |dy| in metres.
    pub d_max: f64,
    /// Per-step cap on |dyaw| in radians.
    pub yaw_max: f64,
    pub max_iters: usize,
    pub tolerance: f64,
}

impl Default for VocabConfig {
    fn default() -> Self {
        Self {
            step_dt: 0.1,
            yaw_weight: 2.0,
            d_max: 3.5,
            yaw_max: 0.3,
            max_iters: 100,
            tolerance: 1e-6,
        }
    }
}

/// Token id -> agent-frame delta. Token order is part of the file contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenVocabulary {
    pub version: u32,
    pub step_dt: f64,
    pub yaw_weight: f64,
    pub deltas: Vec<MotionDelta>,
}

impl TokenVocabulary {
    pub fn new(deltas: Vec<MotionDelta>, step_dt: f64, yaw_weight: f64) -> Result<Self> {
        let vocab = Self {
            version: VOCAB_FORMAT_VERSION,
            step_dt,
            yaw_weight,
            deltas,
        };
        vocab.validate()?;
        Ok(vocab)
    }

    pub fn validate(&self) -> Result<()> {
        if self.deltas.len() < 2 {
            return Err(Error::InvalidVocabulary(format!(
                "needs at least 2 tokens, got {}",
                self.deltas.len()
            )));
        }
        if !(self.step_dt > 0.0) || !(self.yaw_weight > 0.0) {
            return Err(Error::InvalidVocabulary(
                "step_dt and yaw_weight must be positive".into(),
            ));
        }
        let mut seen = HashSet::new();
        for d in &self.deltas {
            if !(d.dx.is_finite() && d.dy.is_finite() && d.dyaw.is_finite()) {
                return Err(Error::InvalidVocabulary("non-finite delta".into()));
            }
            if !seen.insert(delta_bits(d)) {
                return Err(Error::InvalidVocabulary(format!("duplicate delta {d:?}")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.deltas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deltas.is_empty()
    }

    pub fn delta(&self, id: usize) -> Result<&MotionDelta> {
        self.deltas.get(id).ok_or(Error::InvalidToken {
            id,
            size: self.deltas.len(),
        })
    }

    /// Nearest token in the weighted metric; ties go to the lowest id.
    pub fn nearest(&self, delta: &MotionDelta) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (id, c) in self.deltas.iter().enumerate() {
            let d = delta.weighted_sq_dist(c, self.yaw_weight);
            if d < best_d {
                best_d = d;
                best = id;
            }
        }
        best
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::parse("vocabulary", e))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let vocab: TokenVocabulary = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::parse(format!("vocabulary field `{}`", e.path()), e.inner()))?;
        if vocab.version != VOCAB_FORMAT_VERSION {
            return Err(Error::Validation(format!(
                "unsupported vocabulary version {}",
                vocab.version
            )));
        }
        vocab.validate()?;
        Ok(vocab)
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

fn delta_bits(d: &MotionDelta) -> [u64; 3] {
    [d.dx.to_bits(), d.dy.to_bits(), d.dyaw.to_bits()]
}

type Point = [f64; 3];

fn sq_dist(a: &Point, b: &Point) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

fn clamp_segment(d: &MotionDelta, cfg: &VocabConfig) -> MotionDelta {
    MotionDelta::new(
        d.dx.clamp(-cfg.d_max, cfg.d_max),
        d.dy.clamp(-cfg.d_max, cfg.d_max),
        d.dyaw.clamp(-cfg.yaw_max, cfg.yaw_max),
    )
}

/// Clamped segments embedded in `(dx, dy, w·dyaw)` clustering space.
pub fn embed_segments(segments: &[MotionDelta], cfg: &VocabConfig) -> Vec<[f64; 3]> {
    segments
        .iter()
        .map(|s| {
            let c = clamp_segment(s, cfg);
            [c.dx, c.dy, cfg.yaw_weight * c.dyaw]
        })
        .collect()
}

/// Seeded k-means++ seeding over `points`.
///
/// Each pick is drawn with probability proportional to the squared distance
/// to the nearest chosen centre, so duplicates of chosen points are never
/// picked again and the result is `k` distinct points whenever at least `k`
/// distinct points exist.
pub fn init_centroids(points: &[[f64; 3]], k: usize, seed: u64) -> Vec<[f64; 3]> {
    let mut rng = seed::rng_from(&[seed, 0x6b6d_6561_6e73]);
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.gen_range(0..points.len())]);
    let mut nearest: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = nearest.iter().sum();
        if total <= 0.0 {
            break;
        }
        let target = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &w) in nearest.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            acc += w;
            pick = Some(i);
            if target < acc {
                break;
            }
        }
        let c = points[pick.expect("positive total implies a positive weight")];
        for (n, p) in nearest.iter_mut().zip(points) {
            *n = n.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn assign(points: &[[f64; 3]], centroids: &[[f64; 3]]) -> Vec<(usize, f64)> {
    const CHUNK: usize = 4096;
    let chunks = points.len().div_ceil(CHUNK);
    par::map_indexed(chunks, |ci| {
        let lo = ci * CHUNK;
        let hi = (lo + CHUNK).min(points.len());
        points[lo..hi]
            .iter()
            .map(|p| {
                let mut best = (0, f64::INFINITY);
                for (j, c) in centroids.iter().enumerate() {
                    let d = sq_dist(p, c);
                    if d < best.1 {
                        best = (j, d);
                    }
                }
                best
            })
            .collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect()
}

/// Lloyd iterations from the given centres. Empty clusters are re-seeded at
/// the point currently farthest from its assigned centre.
pub fn lloyd(
    points: &[[f64; 3]],
    mut centroids: Vec<[f64; 3]>,
    max_iters: usize,
    tolerance: f64,
) -> Vec<[f64; 3]> {
    let k = centroids.len();
    for _ in 0..max_iters {
        let assignment = assign(points, &centroids);
        let mut sums = vec![[0.0; 3]; k];
        let mut counts = vec![0usize; k];
        for (p, &(j, _)) in points.iter().zip(&assignment) {
            for a in 0..3 {
                sums[j][a] += p[a];
            }
            counts[j] += 1;
        }
        let mut moved: f64 = 0.0;
        let mut taken = HashSet::new();
        for j in 0..k {
            let next = if counts[j] == 0 {
                let far = assignment
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !taken.contains(i))
                    .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1).then(b.0.cmp(&a.0)))
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                taken.insert(far);
                points[far]
            } else {
                let n = counts[j] as f64;
                [sums[j][0] / n, sums[j][1] / n, sums[j][2] / n]
            };
            moved = moved.max(sq_dist(&next, &centroids[j]).sqrt());
            centroids[j] = next;
        }
        if moved < tolerance {
            break;
        }
    }
    centroids
}

/// Builds a vocabulary of `size` tokens by k-means over clamped segments.
pub fn build_vocabulary(
    segments: &[MotionDelta],
    size: usize,
    seed: u64,
    cfg: &VocabConfig,
) -> Result<TokenVocabulary> {
    if segments.is_empty() {
        return Err(Error::InvalidVocabulary("no segments to cluster".into()));
    }
    if size < 2 {
        return Err(Error::InvalidVocabulary(format!(
            "vocabulary size must be at least 2, got {size}"
        )));
    }
    let points = embed_segments(segments, cfg);
    let distinct = points
        .iter()
        .map(|p| p.map(f64::to_bits))
        .collect::<HashSet<_>>()
        .len();
    if size > distinct {
        return Err(Error::VocabularyTooLarge {
            requested: size,
            distinct,
        });
    }
    let init = init_centroids(&points, size, seed);
    let centroids = lloyd(&points, init, cfg.max_iters, cfg.tolerance);
    let deltas = centroids
        .iter()
        .map(|c| MotionDelta::new(c[0], c[1], c[2] / cfg.yaw_weight))
        .collect();
    TokenVocabulary::new(deltas, cfg.step_dt, cfg.yaw_weight)
}

/// Nearest-token encoding of each consecutive pose pair.
pub fn tokenize(trajectory: &[Pose2D], vocab: &TokenVocabulary) -> Vec<usize> {
    trajectory
        .windows(2)
        .map(|w| vocab.nearest(&MotionDelta::between(&w[0], &w[1])))
        .collect()
}

pub fn detokenize(start: Pose2D, tokens: &[usize], vocab: &TokenVocabulary) -> Result<Vec<Pose2D>> {
    let mut poses = Vec::with_capacity(tokens.len() + 1);
    poses.push(start);
    let mut pose = start;
    for &id in tokens {
        pose = apply_delta(&pose, vocab.delta(id)?);
        poses.push(pose);
    }
    Ok(poses)
}
