//! Tokenized multi-agent traffic simulation.
//!
//! Agents move by picking discrete motion tokens from a learned vocabulary.
//! A small MLP policy is pretrained by next-token prediction on ground-truth
//! tracks, then fine-tuned in closed loop with group-relative policy
//! optimization against a safety-weighted realism reward. Sampling truncates
//! the policy to its top-K tokens, with K optionally widened by entropy.
//!
//! With the default `parallel` feature, rollout groups, gradient
//! accumulation and evaluation run on rayon. Every reduction is ordered, so
//! results do not depend on the worker count or on the feature.

pub mod error;
pub mod geometry;
pub mod grpo;
pub mod metrics;
pub mod optim;
pub mod par;
pub mod policy;
pub mod reward;
pub mod rollout;
pub mod sampling;
pub mod scenario;
pub mod seed;
pub mod tokenizer;

pub use error::{Error, Result};
