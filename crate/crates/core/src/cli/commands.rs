//! Command implementations. Each takes a validated config and writes its
//! outputs, so they can be driven from tests as well as from `main`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use log::{info, warn};
use rayon::prelude::*;

use crate::agent::{
    load_checkpoint, save_checkpoint, train, CheckpointHeader, PolicyCheckpoint, RolloutLog, StopReason, TrainStart,
};
use crate::baselines::{knee_stop, oracle_stop, target_method_stop, StopDecision};
use crate::corpus::{
    aurc, expected_aurc, generate_synthetic, load_collection, quality_for_aurc, write_collection, BatchedRanking,
    RankedTopic, SyntheticConfig, QRELS_FILE, RUN_FILE, TEXT_FILE,
};
use crate::env::{EnvConfig, StoppingEnv, TargetSampler};
use crate::eval::{aggregate, policy_stop, score_topic, write_curve_csv, write_results_csv, write_summary_csv};
use crate::eval::{SummaryRow, TopicResult};

use super::config::{target_specs, write_effective, EvalConfig, Method, SynthConfig, TrainConfig};

pub const CHECKPOINT_FILE: &str = "policy.ckpt";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const RESULTS_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const CURVES_DIR: &str = "curves";

#[derive(Debug, Clone)]
pub struct SynthReport {
    pub quality: f64,
    pub expected_aurc: f64,
    pub topic_aurc: Vec<(String, f64)>,
    pub files: Vec<PathBuf>,
}

impl SynthReport {
    pub fn mean_aurc(&self) -> f64 {
        self.topic_aurc.iter().map(|(_, a)| a).sum::<f64>() / self.topic_aurc.len().max(1) as f64
    }
}

pub fn cmd_synth(cfg: &SynthConfig) -> anyhow::Result<SynthReport> {
    cfg.validate()?;
    let out = &cfg.output;
    if !cfg.overwrite {
        for f in [RUN_FILE, QRELS_FILE, TEXT_FILE] {
            if out.join(f).exists() {
                bail!(
                    "{} already contains {f}; set overwrite to replace it",
                    out.display()
                );
            }
        }
    }
    let quality = match cfg.aurc {
        Some(a) => {
            let prevalence = cfg.prevalence;
            quality_for_aurc(a, prevalence, cfg.docs)?
        }
        None => cfg.quality.unwrap_or_default(),
    };
    let mut synth = SyntheticConfig::new(cfg.topics, cfg.docs, cfg.prevalence, quality, cfg.seed);
    synth.topic_prefix = cfg.topic_prefix.clone();
    synth.text = cfg.text.clone();
    let topics = generate_synthetic(&synth)?;
    let files = write_collection(&topics, out, &cfg.run_tag)?;
    write_effective(cfg, out)?;
    let topic_aurc = topics
        .iter()
        .map(|t| Ok((t.id().to_string(), aurc(t)?)))
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok(SynthReport {
        quality,
        expected_aurc: expected_aurc(quality, cfg.prevalence, cfg.docs),
        topic_aurc,
        files,
    })
}

/// Batches every topic at `batches`, dropping (with a warning) topics
/// without relevant documents or whose effective batch count differs.
pub fn training_rankings(topics: Vec<RankedTopic>, batches: usize) -> anyhow::Result<Vec<BatchedRanking>> {
    let mut kept = Vec::with_capacity(topics.len());
    for t in topics {
        if t.num_relevant() == 0 {
            warn!("topic `{}` has no relevant documents; excluded from training", t.id());
            continue;
        }
        let id = t.id().to_string();
        let br = BatchedRanking::new(t, batches)?;
        if br.num_batches() != batches {
            warn!(
                "topic `{id}` splits into {} batches rather than {batches}; excluded from training",
                br.num_batches()
            );
            continue;
        }
        kept.push(br);
    }
    if kept.is_empty() {
        bail!("no usable training topics");
    }
    Ok(kept)
}

/// Builds one environment per ranking, fitting classifier tracks in parallel.
pub fn build_envs(env_cfg: &EnvConfig, rankings: Vec<BatchedRanking>) -> anyhow::Result<Vec<StoppingEnv>> {
    rankings
        .into_par_iter()
        .map(|br| StoppingEnv::build(env_cfg.clone(), Arc::new(br)).map_err(anyhow::Error::from))
        .collect()
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub checkpoint: PathBuf,
    pub log: PathBuf,
    pub topics: usize,
    pub rollouts: usize,
    pub env_steps: usize,
    pub stop_reason: StopReason,
    pub best_return: f64,
}

pub fn cmd_train(cfg: &TrainConfig) -> anyhow::Result<TrainReport> {
    cfg.validate()?;
    let specs = target_specs(&cfg.targets)?;
    let env_cfg = EnvConfig {
        batches: cfg.batches,
        objective: cfg.objective,
        use_classifier: cfg.use_classifier,
        targets: if specs.len() == 1 {
            TargetSampler::Fixed(specs[0])
        } else {
            TargetSampler::Uniform(specs)
        },
    };
    env_cfg.validate()?;
    let topics = load_collection(&cfg.data).with_context(|| format!("loading {}", cfg.data.display()))?;
    let rankings = training_rankings(topics, cfg.batches)?;
    let n_topics = rankings.len();
    info!("building {n_topics} training environments");
    let mut envs = build_envs(&env_cfg, rankings)?;

    let start = match &cfg.resume {
        Some(path) => {
            let ckpt = load_checkpoint(path)?;
            ckpt.check_batches(cfg.batches)?;
            if ckpt.policy.hidden_width() != cfg.trainer.hidden_width {
                bail!(
                    "checkpoint hidden width {} differs from configured {}",
                    ckpt.policy.hidden_width(),
                    cfg.trainer.hidden_width
                );
            }
            TrainStart {
                policy: Some(ckpt.policy),
                rollouts_done: ckpt.rollouts,
                env_steps_done: ckpt.env_steps,
            }
        }
        None => TrainStart::default(),
    };
    let outcome = train(&mut envs, &cfg.trainer, start)?;

    fs::create_dir_all(&cfg.output)?;
    let checkpoint = cfg.output.join(CHECKPOINT_FILE);
    save_checkpoint(
        &PolicyCheckpoint {
            policy: outcome.policy,
            trainer: cfg.trainer.clone(),
            env: env_cfg,
            rollouts: outcome.rollouts,
            env_steps: outcome.env_steps,
        },
        &checkpoint,
    )?;
    let log = cfg.output.join(TRAIN_LOG_FILE);
    write_train_log(&outcome.log, &log)?;
    write_effective(cfg, &cfg.output)?;
    Ok(TrainReport {
        checkpoint,
        log,
        topics: n_topics,
        rollouts: outcome.rollouts,
        env_steps: outcome.env_steps,
        stop_reason: outcome.stop_reason,
        best_return: outcome.log.last().map_or(f64::NAN, |r| r.best_return),
    })
}

pub fn write_train_log(rows: &[RolloutLog], path: &Path) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(
        w,
        "rollout,env_steps,episodes,mean_return,eval_return,best_return,policy_loss,value_loss,entropy,approx_kl,clip_fraction"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.rollout,
            r.env_steps,
            r.episodes,
            r.mean_return,
            r.eval_return,
            r.best_return,
            r.policy_loss,
            r.value_loss,
            r.entropy,
            r.approx_kl,
            r.clip_fraction
        )?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub results: Vec<TopicResult>,
    pub summary: Vec<SummaryRow>,
    pub results_path: PathBuf,
    pub summary_path: PathBuf,
}

impl EvalReport {
    pub fn summary_for(&self, method: &str, target: f64) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|r| r.method == method && (r.target.value() - target).abs() < 1e-12)
    }
}

/// Smallest knee prefix at or beyond `wanted` that contains a relevant document.
fn knee_prefix(topic: &RankedTopic, wanted: usize) -> usize {
    let first = topic.relevant_ranks().first().copied().unwrap_or(topic.len());
    wanted.min(topic.len()).max(first)
}

pub fn cmd_eval(cfg: &EvalConfig) -> anyhow::Result<EvalReport> {
    cfg.validate()?;
    let specs = target_specs(&cfg.targets)?;
    let topics: Vec<RankedTopic> = load_collection(&cfg.data)
        .with_context(|| format!("loading {}", cfg.data.display()))?
        .into_iter()
        .filter(|t| {
            let keep = t.num_relevant() > 0;
            if !keep {
                warn!("topic `{}` has no relevant documents; not scored", t.id());
            }
            keep
        })
        .collect();
    if topics.is_empty() {
        bail!("no topic with relevant documents to evaluate");
    }

    let policy = if cfg.methods.contains(&Method::Policy) {
        let path = cfg.checkpoint.as_ref().expect("validated");
        let ckpt = load_checkpoint(path)?;
        let batches = cfg.batches.unwrap_or(ckpt.env.batches);
        ckpt.check_batches(batches)?;
        Some(ckpt)
    } else {
        None
    };

    let per_topic: Vec<Vec<TopicResult>> = topics
        .par_iter()
        .enumerate()
        .map(|(i, topic)| evaluate_topic(cfg, &specs, policy.as_ref(), i, topic))
        .collect::<anyhow::Result<_>>()?;
    let mut results: Vec<TopicResult> = per_topic.into_iter().flatten().collect();
    crate::eval::sort_results(&mut results);
    let summary = aggregate(&results)?;

    fs::create_dir_all(&cfg.output)?;
    let results_path = cfg.output.join(RESULTS_FILE);
    let summary_path = cfg.output.join(SUMMARY_FILE);
    write_results_csv(&results, &results_path)?;
    write_summary_csv(&summary, &summary_path)?;
    if cfg.curves {
        let dir = cfg.output.join(CURVES_DIR);
        fs::create_dir_all(&dir)?;
        for t in &topics {
            write_curve_csv(t, &dir.join(format!("{}.csv", t.id())))?;
        }
    }
    write_effective(cfg, &cfg.output)?;
    Ok(EvalReport {
        results,
        summary,
        results_path,
        summary_path,
    })
}

fn evaluate_topic(
    cfg: &EvalConfig,
    specs: &[crate::corpus::TargetSpec],
    policy: Option<&PolicyCheckpoint>,
    index: usize,
    topic: &RankedTopic,
) -> anyhow::Result<Vec<TopicResult>> {
    let mut out = Vec::new();
    let mut env = match policy {
        Some(ckpt) => {
            let br = BatchedRanking::new(topic.clone(), ckpt.env.batches)?;
            if br.num_batches() != ckpt.env.batches {
                bail!(
                    "topic `{}` splits into {} batches but the checkpoint expects {}",
                    topic.id(),
                    br.num_batches(),
                    ckpt.env.batches
                );
            }
            Some(StoppingEnv::build(ckpt.env.clone(), Arc::new(br))?)
        }
        None => None,
    };
    for &method in &cfg.methods {
        let mut per_target = |f: &mut dyn FnMut(crate::corpus::TargetSpec) -> anyhow::Result<StopDecision>| {
            for &spec in specs {
                let d = f(spec)?;
                out.push(score_topic(topic, spec, &d)?);
            }
            anyhow::Ok(())
        };
        match method {
            Method::Policy => {
                let ckpt = policy.expect("checkpoint loaded");
                let env = env.as_mut().expect("environment built");
                per_target(&mut |spec| Ok(policy_stop(&ckpt.policy, env, spec, &cfg.policy_name)?))?;
            }
            Method::Oracle => per_target(&mut |spec| Ok(oracle_stop(topic, spec)?))?,
            Method::Knee => {
                let d = knee_stop(topic, knee_prefix(topic, cfg.knee_prefix), &cfg.knee)?;
                per_target(&mut |_| Ok(d.clone()))?;
            }
            Method::Tm => {
                let d = target_method_stop(topic, cfg.tm_k, cfg.seed.wrapping_add(index as u64))?;
                per_target(&mut |_| Ok(d.clone()))?;
            }
        }
    }
    Ok(out)
}

/// Human-readable summary table.
pub fn format_summary(rows: &[SummaryRow]) -> String {
    let mut s = format!(
        "{:<12} {:>6} {:>6} {:>8} {:>8} {:>8} {:>9}\n",
        "method", "target", "topics", "recall", "rel", "cost", "cost_diff"
    );
    for r in rows {
        s.push_str(&format!(
            "{:<12} {:>6.2} {:>6} {:>8.3} {:>8.3} {:>8.3} {:>9.3}\n",
            r.method,
            r.target.value(),
            r.topics,
            r.recall,
            r.reliability,
            r.cost,
            r.cost_diff
        ));
    }
    s
}

/// Reads only the header of a checkpoint.
pub fn inspect_checkpoint(path: &Path) -> anyhow::Result<CheckpointHeader> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let (header, _) = crate::agent::decode_header(&bytes)?;
    Ok(header)
}
