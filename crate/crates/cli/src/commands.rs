use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use tokensim::grpo::{finetune_grpo, ntp_accuracy, ntp_examples, ntp_pretrain};
use tokensim::metrics::{evaluate, split_easy_hard, EvalReport};
use tokensim::policy::{init_params, PolicyParams};
use tokensim::reward::compute_rewards;
use tokensim::rollout::{group_dump, rollout_group, SimEnv};
use tokensim::scenario::{extract_segments, generate_synthetic_with, load_scenario, save_scenario, Scenario};
use tokensim::seed;
use tokensim::tokenizer::{build_vocabulary, TokenVocabulary};

use crate::config::{Resolved, RunConfig};
use crate::{runtime, CliError};

type Named = Vec<(String, Scenario)>;

fn create_dir(p: &Path) -> Result<(), CliError> {
    fs::create_dir_all(p).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", p.display())))
}

fn write_text(p: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = p.parent() {
        create_dir(parent)?;
    }
    fs::write(p, text).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", p.display())))
}

fn write_csv<T: Serialize>(p: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), CliError> {
    if let Some(parent) = p.parent() {
        create_dir(parent)?;
    }
    let mut w = csv::Writer::from_path(p).map_err(runtime)?;
    for r in rows {
        w.serialize(r).map_err(runtime)?;
    }
    w.flush().map_err(runtime)
}

fn require(p: &Path, what: &str) -> Result<(), CliError> {
    if p.exists() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{what} not found: {}", p.display())))
    }
}

/// The synthetic scenario set described by the config, in file order.
pub fn synthetic_pool(cfg: &RunConfig, r: &Resolved) -> Result<Named, CliError> {
    let span = (cfg.max_agents - cfg.min_agents + 1) as u64;
    (0..cfg.n_scenarios)
        .map(|i| {
            let template = r.templates[i % r.templates.len()];
            let n_agents = cfg.min_agents + (seed::derive(&[cfg.seed, i as u64]) % span) as usize;
            let sc = generate_synthetic_with(template, n_agents, cfg.seed.wrapping_add(i as u64), &r.synthetic)?;
            Ok((format!("scenario_{i:05}"), sc))
        })
        .collect()
}

/// Every `*.json` scenario in `dir`, sorted by file name.
pub fn load_scenario_dir(dir: &Path) -> Result<Named, CliError> {
    require(dir, "scenario directory")?;
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(runtime)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Config(format!("no scenario files in {}", dir.display())));
    }
    paths
        .iter()
        .map(|p| {
            let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok((name, load_scenario(p)?))
        })
        .collect()
}

fn load_vocab(cfg: &RunConfig) -> Result<TokenVocabulary, CliError> {
    let p = cfg.vocab_path();
    require(&p, "vocabulary")?;
    let v = TokenVocabulary::load(&p)?;
    if v.len() != cfg.vocab_size {
        return Err(CliError::Config(format!(
            "vocab_size is {} but {} holds {} tokens",
            cfg.vocab_size,
            p.display(),
            v.len()
        )));
    }
    Ok(v)
}

fn load_params(p: &Path, what: &str) -> Result<PolicyParams, CliError> {
    require(p, what)?;
    Ok(PolicyParams::load(p)?)
}

pub fn scenario_gen(cfg: &RunConfig, r: &Resolved) -> Result<(), CliError> {
    let dir = cfg.scenarios_path();
    create_dir(&dir)?;
    let pool = synthetic_pool(cfg, r)?;
    for (name, sc) in &pool {
        save_scenario(sc, dir.join(format!("{name}.json")))?;
    }
    println!("wrote {} scenarios to {}", pool.len(), dir.display());
    Ok(())
}

pub fn vocab_build(cfg: &RunConfig, r: &Resolved) -> Result<(), CliError> {
    let pool = load_scenario_dir(&cfg.scenarios_path())?;
    let segments = extract_segments(pool.iter().map(|(_, s)| s));
    let vocab = build_vocabulary(&segments, cfg.vocab_size, cfg.seed, &r.vocab)?;
    let p = cfg.vocab_path();
    write_text(&p, &vocab.to_json()?)?;
    println!("built {} tokens from {} segments into {}", vocab.len(), segments.len(), p.display());
    Ok(())
}

#[derive(Serialize)]
struct LossRow {
    step: usize,
    loss: f64,
}

pub fn pretrain(cfg: &RunConfig, r: &Resolved) -> Result<(), CliError> {
    let pool = load_scenario_dir(&cfg.scenarios_path())?;
    let vocab = load_vocab(cfg)?;
    let examples: Vec<_> = pool
        .iter()
        .flat_map(|(_, s)| ntp_examples(s, &vocab, &r.features))
        .collect();
    let init = init_params(cfg.seed, cfg.arch(&r.features));
    let (params, curve) = ntp_pretrain(&examples, &init, &r.pretrain)?;
    write_text(&cfg.out.join("pretrained.json"), &params.to_json()?)?;
    write_csv(
        &cfg.out.join("pretrain_loss.csv"),
        curve.iter().enumerate().map(|(step, &loss)| LossRow { step, loss }),
    )?;
    println!(
        "pretrained on {} examples: final loss {:.4}, accuracy {:.3}",
        examples.len(),
        curve.last().copied().unwrap_or(f64::NAN),
        ntp_accuracy(&params, &examples)?
    );
    Ok(())
}

pub fn finetune(cfg: &RunConfig, r: &Resolved) -> Result<(), CliError> {
    let pool = load_scenario_dir(&cfg.scenarios_path())?;
    let vocab = load_vocab(cfg)?;
    let init = load_params(&cfg.init_checkpoint_path(), "initial checkpoint")?;
    let scenarios: Vec<Scenario> = pool.into_iter().map(|(_, s)| s).collect();
    let ckpt_dir = cfg.out.join("checkpoints");
    let mut io_err = None;
    let (params, stats) = finetune_grpo(&scenarios, &vocab, &r.features, &init, &r.grpo, |s, p| {
        let every = cfg.checkpoint_every;
        if io_err.is_none() && every > 0 && (s.iteration + 1) % every == 0 {
            let path = ckpt_dir.join(format!("iter_{:06}.json", s.iteration + 1));
            io_err = p.to_json().map_err(CliError::from).and_then(|t| write_text(&path, &t)).err();
        }
    })?;
    if let Some(e) = io_err {
        return Err(e);
    }
    write_text(&cfg.out.join("finetuned.json"), &params.to_json()?)?;
    write_csv(&cfg.out.join("finetune_stats.csv"), &stats)?;
    if let (Some(first), Some(last)) = (stats.first(), stats.last()) {
        println!(
            "fine-tuned {} iterations: reward {:.4} -> {:.4}, collision rate {:.4} -> {:.4}",
            stats.len(),
            first.mean_reward,
            last.mean_reward,
            first.collision_rate,
            last.collision_rate
        );
    }
    Ok(())
}

pub fn rollout(cfg: &RunConfig, r: &Resolved) -> Result<(), CliError> {
    let scenario = match &cfg.scenario {
        Some(p) => {
            require(p, "scenario")?;
            load_scenario(p)?
        }
        None => load_scenario_dir(&cfg.scenarios_path())?.swap_remove(0).1,
    };
    let vocab = load_vocab(cfg)?;
    let params = load_params(&cfg.checkpoint_path(), "checkpoint")?;
    let env = SimEnv::new(&scenario, &vocab, &r.features);
    let group = rollout_group(&env, &params, cfg.n_rollout, &r.sampler, cfg.seed)?;
    let rewards = compute_rewards(&group, &scenario, &r.reward)?;
    let dump = serde_json::to_string_pretty(&group_dump(&group, Some(&rewards))).map_err(runtime)?;
    let p = cfg.out.join("rollout.json");
    write_text(&p, &dump)?;
    println!("wrote {} rollouts of {} steps to {}", group.len(), group.horizon(), p.display());
    Ok(())
}

#[derive(Serialize)]
struct EvalCsvRow<'a> {
    scenario: &'a str,
    n_agents: Option<usize>,
    collision_rate: f64,
    ade: f64,
    min_ade: f64,
    mean_entropy: f64,
}

fn write_eval(out: &Path, stem: &str, report: &EvalReport) -> Result<(), CliError> {
    let rows = report
        .rows
        .iter()
        .map(|r| EvalCsvRow {
            scenario: &r.scenario,
            n_agents: Some(r.n_agents),
            collision_rate: r.collision_rate,
            ade: r.ade,
            min_ade: r.min_ade,
            mean_entropy: r.mean_entropy,
        })
        .chain(std::iter::once(EvalCsvRow {
            scenario: "summary",
            n_agents: None,
            collision_rate: report.collision_rate,
            ade: report.ade,
            min_ade: report.min_ade,
            mean_entropy: report.mean_entropy,
        }));
    write_csv(&out.join(format!("{stem}.csv")), rows)?;
    write_text(&out.join(format!("{stem}.json")), &report.to_json()?)
}

pub fn eval(cfg: &RunConfig, r: &Resolved) -> Result<(), CliError> {
    let pool = load_scenario_dir(&cfg.scenarios_path())?;
    let vocab = load_vocab(cfg)?;
    let params = load_params(&cfg.checkpoint_path(), "checkpoint")?;
    let report = evaluate(&pool, &vocab, &r.features, &params, &r.eval)?;
    write_eval(&cfg.out, "eval", &report)?;
    println!(
        "evaluated {} scenarios: collision rate {:.4}, ade {:.3}, min_ade {:.3}, entropy {:.3}",
        report.rows.len(),
        report.collision_rate,
        report.ade,
        report.min_ade,
        report.mean_entropy
    );
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitEntropy {
    pub mean_entropy: f64,
    pub easy: f64,
    pub hard: f64,
    pub hard_minus_easy: f64,
}

impl SplitEntropy {
    pub fn of(report: &EvalReport, easy: &[usize], hard: &[usize]) -> Self {
        let e = report.mean_entropy_of(easy);
        let h = report.mean_entropy_of(hard);
        Self {
            mean_entropy: report.mean_entropy,
            easy: e,
            hard: h,
            hard_minus_easy: h - e,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EntropyReport {
    pub easy: Vec<String>,
    pub hard: Vec<String>,
    pub baseline: SplitEntropy,
    pub candidate: SplitEntropy,
    pub hard_entropy_lower: bool,
    pub gap_narrowed: bool,
}

/// Splits by the baseline's per-scenario `min_ade` (lowest is easiest) and
/// compares entropies of both reports on the same ids.
pub fn compare_entropy(baseline: &EvalReport, candidate: &EvalReport, pct: f64) -> Result<EntropyReport, CliError> {
    let scores: Vec<f64> = baseline.min_ades().iter().map(|d| -d).collect();
    let (easy, hard) = split_easy_hard(&scores, pct)?;
    let b = SplitEntropy::of(baseline, &easy, &hard);
    let c = SplitEntropy::of(candidate, &easy, &hard);
    let names = |ids: &[usize]| ids.iter().map(|&i| baseline.rows[i].scenario.clone()).collect();
    Ok(EntropyReport {
        easy: names(&easy),
        hard: names(&hard),
        hard_entropy_lower: c.hard < b.hard,
        gap_narrowed: c.hard_minus_easy.abs() < b.hard_minus_easy.abs(),
        baseline: b,
        candidate: c,
    })
}

#[derive(Serialize)]
struct HistRow {
    bin: usize,
    lower: f64,
    upper: f64,
    baseline: u64,
    candidate: u64,
}

pub fn entropy_report(cfg: &RunConfig, r: &Resolved) -> Result<(), CliError> {
    let pool = load_scenario_dir(&cfg.scenarios_path())?;
    let vocab = load_vocab(cfg)?;
    let base = load_params(&cfg.baseline_checkpoint_path(), "baseline checkpoint")?;
    let cand = load_params(&cfg.checkpoint_path(), "checkpoint")?;
    let base_report = evaluate(&pool, &vocab, &r.features, &base, &r.eval)?;
    let cand_report = evaluate(&pool, &vocab, &r.features, &cand, &r.eval)?;
    let cmp = compare_entropy(&base_report, &cand_report, cfg.split_pct)?;

    let width = (vocab.len() as f64).ln() / cfg.n_bins as f64;
    write_csv(
        &cfg.out.join("entropy_histogram.csv"),
        (0..cfg.n_bins).map(|b| HistRow {
            bin: b,
            lower: b as f64 * width,
            upper: (b + 1) as f64 * width,
            baseline: base_report.entropy_histogram[b],
            candidate: cand_report.entropy_histogram[b],
        }),
    )?;
    write_eval(&cfg.out, "entropy_baseline", &base_report)?;
    write_eval(&cfg.out, "entropy_candidate", &cand_report)?;
    write_text(
        &cfg.out.join("entropy_report.json"),
        &serde_json::to_string_pretty(&cmp).map_err(runtime)?,
    )?;
    println!(
        "hard-split entropy {:.4} -> {:.4}; hard-easy gap {:.4} -> {:.4}",
        cmp.baseline.hard, cmp.candidate.hard, cmp.baseline.hard_minus_easy, cmp.candidate.hard_minus_easy
    );
    Ok(())
}
