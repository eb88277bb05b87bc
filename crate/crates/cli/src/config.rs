use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use tokensim::grpo::{AdvantageMode, GrpoConfig, KlMode, PretrainConfig};
use tokensim::metrics::EvalConfig;
use tokensim::optim::OptimizerKind;
use tokensim::policy::{FeatureConfig, PolicyDims};
use tokensim::reward::{RewardConfig, RewardVariant};
use tokensim::sampling::{SamplerConfig, SamplerMode};
use tokensim::scenario::{SyntheticConfig, Template, MAX_SYNTHETIC_AGENTS};
use tokensim::tokenizer::VocabConfig;

use crate::CliError;

macro_rules! run_config {
    ($( $(#[doc = $doc:literal])* $name:ident : $ty:ty = $default:expr ),* $(,)?) => {
        /// Every setting of every command. Loaded from a TOML or JSON file and
        /// overridden field by field from the command line.
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        #[serde(default, deny_unknown_fields)]
        pub struct RunConfig {
            $( $(#[doc = $doc])* pub $name: $ty, )*
        }

        impl Default for RunConfig {
            fn default() -> Self {
                Self { $( $name: $default, )* }
            }
        }

        /// Command-line overrides, one flag per config field.
        #[derive(Debug, Clone, Default, Args)]
        pub struct Overrides {
            $( $(#[doc = $doc])* #[arg(long, value_name = "VALUE", help_heading = "Config overrides")]
               pub $name: Option<$ty>, )*
        }

        impl Overrides {
            pub fn apply(self, cfg: &mut RunConfig) {
                $( if let Some(v) = self.$name { cfg.$name = v; } )*
            }
        }
    };
}

run_config! {
    /// Master seed for every command
    seed: u64 = 0,
    /// Worker threads; 0 uses all cores
    workers: usize = 0,
    /// Output directory
    out: PathBuf = PathBuf::from("out"),
    /// Scenario directory [default: <out>/scenarios]
    scenarios_dir: Option<PathBuf> = None,
    /// Vocabulary file [default: <out>/vocab.json]
    vocab: Option<PathBuf> = None,
    /// Checkpoint to start fine-tuning from [default: <out>/pretrained.json]
    init_checkpoint: Option<PathBuf> = None,
    /// Checkpoint to roll out or evaluate [default: <out>/finetuned.json]
    checkpoint: Option<PathBuf> = None,
    /// Baseline checkpoint for entropy-report [default: <out>/pretrained.json]
    baseline_checkpoint: Option<PathBuf> = None,
    /// Scenario file for rollout [default: first file in the scenario directory]
    scenario: Option<PathBuf> = None,

    /// Number of synthetic scenarios
    n_scenarios: usize = 200,
    /// straight, merge, unprotected_left or mixed
    template: String = "mixed".into(),
    min_agents: usize = 2,
    max_agents: usize = 8,
    dt: f64 = 0.1,
    history_len: usize = 11,
    horizon: usize = 80,

    vocab_size: usize = 128,
    /// Metres per radian in the clustering metric
    vocab_yaw_weight: f64 = 2.0,
    vocab_d_max: f64 = 3.5,
    vocab_yaw_max: f64 = 0.3,
    kmeans_iters: usize = 100,

    hidden: usize = 64,
    k_neighbors: usize = 4,
    m_map: usize = 8,

    pretrain_steps: usize = 4000,
    pretrain_lr: f64 = 0.01,
    /// Examples per pretraining step; 0 uses the full set
    pretrain_batch: usize = 256,
    /// Pretraining optimizer: sgd or adam
    pretrain_optimizer: String = "adam".into(),
    /// Fine-tuning optimizer: sgd or adam
    optimizer: String = "sgd".into(),

    n_rollout: usize = 32,
    eps_low: f64 = 0.2,
    eps_high: f64 = 0.2,
    beta_kl: f64 = 0.04,
    learning_rate: f64 = 3e-3,
    iterations: usize = 2000,
    /// mean_only or standardized
    advantage_mode: String = "mean_only".into(),
    freeze_first_layer: bool = false,
    /// sampled_estimator or exact
    kl_mode: String = "sampled_estimator".into(),
    /// Iterations between fine-tuning checkpoints; 0 disables
    checkpoint_every: usize = 500,

    /// fixed_topk or entropy_adaptive
    sampler_mode: String = "entropy_adaptive".into(),
    k_fixed: usize = 32,
    k_min: usize = 16,
    k_max: usize = 80,

    /// SPR, OR, APR, AHR or SHR
    reward_variant: String = "SPR".into(),
    alpha: f64 = 0.5,
    outcome_weight: f64 = 0.5,

    eval_rollouts: usize = 16,
    n_bins: usize = 20,
    /// Fraction of scenarios in each of the easy and hard splits
    split_pct: f64 = 0.1,
}

/// Typed views of a validated [`RunConfig`].
#[derive(Debug, Clone)]
pub struct Resolved {
    pub templates: Vec<Template>,
    pub synthetic: SyntheticConfig,
    pub vocab: VocabConfig,
    pub features: FeatureConfig,
    pub sampler: SamplerConfig,
    pub reward: RewardConfig,
    pub optimizer: OptimizerKind,
    pub grpo: GrpoConfig,
    pub pretrain: PretrainConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let parsed = if is_json {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string().trim().replace('\n', " "))
        };
        parsed.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    fn path_or(&self, p: &Option<PathBuf>, default: &str) -> PathBuf {
        p.clone().unwrap_or_else(|| self.out.join(default))
    }

    pub fn scenarios_path(&self) -> PathBuf {
        self.path_or(&self.scenarios_dir, "scenarios")
    }

    pub fn vocab_path(&self) -> PathBuf {
        self.path_or(&self.vocab, "vocab.json")
    }

    pub fn init_checkpoint_path(&self) -> PathBuf {
        self.path_or(&self.init_checkpoint, "pretrained.json")
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.path_or(&self.checkpoint, "finetuned.json")
    }

    pub fn baseline_checkpoint_path(&self) -> PathBuf {
        self.path_or(&self.baseline_checkpoint, "pretrained.json")
    }

    pub fn arch(&self, features: &FeatureConfig) -> PolicyDims {
        PolicyDims {
            input: features.dim(),
            hidden: self.hidden,
            output: self.vocab_size,
        }
    }

    /// Checks every field and reports all problems at once.
    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let mut errs: Vec<String> = Vec::new();
        fn parse<T: std::str::FromStr>(errs: &mut Vec<String>, key: &str, v: &str, fallback: T) -> T
        where
            T::Err: std::fmt::Display,
        {
            v.parse().unwrap_or_else(|e| {
                errs.push(format!("{key}: {e}"));
                fallback
            })
        }

        let templates = if self.template == "mixed" {
            Template::ALL.to_vec()
        } else {
            vec![parse(&mut errs, "template", &self.template, Template::Straight)]
        };
        let sampler_mode = match self.sampler_mode.as_str() {
            "fixed_topk" => SamplerMode::FixedTopk,
            "entropy_adaptive" => SamplerMode::EntropyAdaptive,
            other => {
                errs.push(format!("sampler_mode: unknown mode `{other}`"));
                SamplerMode::EntropyAdaptive
            }
        };
        let mut optimizer_of = |key: &str, v: &str| match v {
            "sgd" => OptimizerKind::Sgd,
            "adam" => OptimizerKind::adam(),
            other => {
                errs.push(format!("{key}: unknown optimizer `{other}`"));
                OptimizerKind::Sgd
            }
        };
        let optimizer = optimizer_of("optimizer", &self.optimizer);
        let pretrain_optimizer = optimizer_of("pretrain_optimizer", &self.pretrain_optimizer);
        let variant = parse(&mut errs, "reward_variant", &self.reward_variant, RewardVariant::Spr);
        let advantage_mode = parse(
            &mut errs,
            "advantage_mode",
            &self.advantage_mode,
            AdvantageMode::MeanOnly,
        );
        let kl_mode = parse(&mut errs, "kl_mode", &self.kl_mode, KlMode::SampledEstimator);

        if self.min_agents < 1 || self.min_agents > self.max_agents || self.max_agents > MAX_SYNTHETIC_AGENTS {
            errs.push(format!(
                "min_agents/max_agents: need 1 <= {} <= {} <= {MAX_SYNTHETIC_AGENTS}",
                self.min_agents, self.max_agents
            ));
        }
        if !(self.dt > 0.0) {
            errs.push(format!("dt: must be > 0, got {}", self.dt));
        }
        if self.horizon < 1 {
            errs.push("horizon: must be >= 1".into());
        }
        if self.vocab_size < 2 {
            errs.push(format!("vocab_size: must be >= 2, got {}", self.vocab_size));
        }
        for (k, v) in [
            ("vocab_yaw_weight", self.vocab_yaw_weight),
            ("vocab_d_max", self.vocab_d_max),
            ("vocab_yaw_max", self.vocab_yaw_max),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                errs.push(format!("{k}: must be > 0, got {v}"));
            }
        }
        if self.hidden < 1 {
            errs.push("hidden: must be >= 1".into());
        }
        if !(self.pretrain_lr >= 0.0 && self.pretrain_lr.is_finite()) {
            errs.push(format!("pretrain_lr: must be >= 0, got {}", self.pretrain_lr));
        }
        if self.eval_rollouts < 2 {
            errs.push(format!("eval_rollouts: must be >= 2, got {}", self.eval_rollouts));
        }
        if self.n_bins < 1 {
            errs.push("n_bins: must be >= 1".into());
        }
        if !(self.split_pct > 0.0 && self.split_pct < 0.5) {
            errs.push(format!("split_pct: must be in (0, 0.5), got {}", self.split_pct));
        }

        let features = FeatureConfig {
            k_neighbors: self.k_neighbors,
            m_map: self.m_map,
            ..FeatureConfig::default()
        };
        let sampler = SamplerConfig {
            mode: sampler_mode,
            k_fixed: self.k_fixed,
            k_min: self.k_min,
            k_max: self.k_max,
        };
        let reward = RewardConfig {
            variant,
            alpha: self.alpha,
            outcome_weight: self.outcome_weight,
            ..RewardConfig::default()
        };
        let grpo = GrpoConfig {
            n_rollout: self.n_rollout,
            eps_low: self.eps_low,
            eps_high: self.eps_high,
            beta_kl: self.beta_kl,
            learning_rate: self.learning_rate,
            iterations: self.iterations,
            advantage_mode,
            freeze_first_layer: self.freeze_first_layer,
            kl_mode,
            optimizer,
            sampler,
            reward: reward.clone(),
            seed: self.seed,
        };
        // covers sampler and reward as well
        errs.extend(grpo.violations(self.vocab_size));

        if errs.is_empty() {
            Ok(Resolved {
                templates,
                synthetic: SyntheticConfig {
                    dt: self.dt,
                    history_len: self.history_len,
                    horizon: self.horizon,
                },
                vocab: VocabConfig {
                    step_dt: self.dt,
                    yaw_weight: self.vocab_yaw_weight,
                    d_max: self.vocab_d_max,
                    yaw_max: self.vocab_yaw_max,
                    max_iters: self.kmeans_iters,
                    ..VocabConfig::default()
                },
                features,
                sampler,
                reward,
                optimizer,
                grpo,
                pretrain: PretrainConfig {
                    steps: self.pretrain_steps,
                    learning_rate: self.pretrain_lr,
                    batch_size: self.pretrain_batch,
                    optimizer: pretrain_optimizer,
                    seed: self.seed,
                },
                eval: EvalConfig {
                    n_rollout: self.eval_rollouts,
                    sampler,
                    n_bins: self.n_bins,
                    seed: self.seed,
                },
            })
        } else {
            Err(CliError::Config(errs.join("; ")))
        }
    }
}
