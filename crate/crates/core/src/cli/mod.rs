//! Command-line surface: `synth`, `train`, `eval`, `compare` and
//! `inspect-checkpoint`.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{
    build_envs, cmd_eval, cmd_synth, cmd_train, format_summary, inspect_checkpoint, training_rankings,
    write_train_log, EvalReport, SynthReport, TrainReport, CHECKPOINT_FILE, CURVES_DIR, RESULTS_FILE,
    SUMMARY_FILE, TRAIN_LOG_FILE,
};
pub use config::{
    apply_override, load_table, set_value, target_specs, EvalConfig, Method, SynthConfig, TrainConfig,
    EFFECTIVE_CONFIG,
};

#[derive(Debug, Parser)]
#[command(name = "grlstop", version, about = "Reinforcement-learning stopping rules for technology-assisted review")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic collection (run, qrels and document text).
    Synth(SynthArgs),
    /// Train one stopping policy over every topic of a collection.
    Train(TrainArgs),
    /// Evaluate a policy and/or baselines on a collection.
    Eval(EvalArgs),
    /// Evaluate the policy (if given) together with every baseline.
    Compare(EvalArgs),
    /// Print a checkpoint's header.
    InspectCheckpoint { path: PathBuf },
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML configuration file.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set trainer.learning_rate=1e-3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub topics: Option<usize>,
    #[arg(long)]
    pub docs: Option<usize>,
    #[arg(long)]
    pub prevalence: Option<f64>,
    #[arg(long)]
    pub quality: Option<f64>,
    /// Target expected AURC; overrides `--quality`.
    #[arg(long)]
    pub aurc: Option<f64>,
    #[arg(long)]
    pub overwrite: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Collection directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub batches: Option<usize>,
    /// Reward exponent before the target batch.
    #[arg(long)]
    pub m: Option<f64>,
    /// Reward exponent after the target batch.
    #[arg(long)]
    pub n: Option<f64>,
    /// Replace classifier estimates with -1 (also switches trainer defaults).
    #[arg(long)]
    pub no_classifier: bool,
    #[arg(long, value_delimiter = ',')]
    pub targets: Option<Vec<f64>>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Continue training from a checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub batches: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub targets: Option<Vec<f64>>,
    /// Any of policy, oracle, knee, tm.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub curves: bool,
}

fn path_value(p: &std::path::Path) -> toml::Value {
    toml::Value::String(p.display().to_string())
}

fn int_value(v: impl TryInto<i64>) -> anyhow::Result<toml::Value> {
    Ok(toml::Value::Integer(
        v.try_into().map_err(|_| anyhow::anyhow!("integer out of range"))?,
    ))
}

fn floats(v: &[f64]) -> toml::Value {
    toml::Value::Array(v.iter().map(|&x| toml::Value::Float(x)).collect())
}

fn base_table(common: &Common) -> anyhow::Result<toml::Table> {
    let mut t = load_table(common.config.as_deref(), &common.set)?;
    if let Some(o) = &common.output {
        set_value(&mut t, "output", path_value(o))?;
    }
    Ok(t)
}

pub fn synth_config(args: &SynthArgs) -> anyhow::Result<SynthConfig> {
    let mut t = base_table(&args.common)?;
    if let Some(v) = args.seed {
        set_value(&mut t, "seed", int_value(v)?)?;
    }
    if let Some(v) = args.topics {
        set_value(&mut t, "topics", int_value(v)?)?;
    }
    if let Some(v) = args.docs {
        set_value(&mut t, "docs", int_value(v)?)?;
    }
    if let Some(v) = args.prevalence {
        set_value(&mut t, "prevalence", toml::Value::Float(v))?;
    }
    if let Some(v) = args.quality {
        set_value(&mut t, "quality", toml::Value::Float(v))?;
    }
    if let Some(v) = args.aurc {
        set_value(&mut t, "aurc", toml::Value::Float(v))?;
    }
    if args.overwrite {
        set_value(&mut t, "overwrite", toml::Value::Boolean(true))?;
    }
    let cfg: SynthConfig = config::from_table(t)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn train_config(args: &TrainArgs) -> anyhow::Result<TrainConfig> {
    let mut t = base_table(&args.common)?;
    if let Some(p) = &args.data {
        set_value(&mut t, "data", path_value(p))?;
    }
    if let Some(v) = args.seed {
        set_value(&mut t, "seed", int_value(v)?)?;
    }
    if let Some(v) = args.batches {
        set_value(&mut t, "batches", int_value(v)?)?;
    }
    if let Some(v) = args.m {
        set_value(&mut t, "objective.m", toml::Value::Float(v))?;
    }
    if let Some(v) = args.n {
        set_value(&mut t, "objective.n", toml::Value::Float(v))?;
    }
    if args.no_classifier {
        set_value(&mut t, "use_classifier", toml::Value::Boolean(false))?;
    }
    if let Some(v) = &args.targets {
        set_value(&mut t, "targets", floats(v))?;
    }
    if let Some(v) = args.max_steps {
        set_value(&mut t, "trainer.max_env_steps", int_value(v)?)?;
    }
    if let Some(p) = &args.resume {
        set_value(&mut t, "resume", path_value(p))?;
    }
    // an objective given only partly keeps the balanced value for the other exponent
    if let Some(obj) = t.get_mut("objective").and_then(|v| v.as_table_mut()) {
        obj.entry("m").or_insert(toml::Value::Float(1.0));
        obj.entry("n").or_insert(toml::Value::Float(1.0));
    }
    TrainConfig::from_table(t)
}

pub fn eval_config(args: &EvalArgs, compare: bool) -> anyhow::Result<EvalConfig> {
    let mut t = base_table(&args.common)?;
    if let Some(p) = &args.data {
        set_value(&mut t, "data", path_value(p))?;
    }
    if let Some(p) = &args.checkpoint {
        set_value(&mut t, "checkpoint", path_value(p))?;
    }
    if let Some(v) = args.batches {
        set_value(&mut t, "batches", int_value(v)?)?;
    }
    if let Some(v) = &args.targets {
        set_value(&mut t, "targets", floats(v))?;
    }
    if let Some(v) = args.seed {
        set_value(&mut t, "seed", int_value(v)?)?;
    }
    if args.curves {
        set_value(&mut t, "curves", toml::Value::Boolean(true))?;
    }
    let methods: Option<Vec<String>> = match &args.methods {
        Some(m) => Some(m.clone()),
        None if compare && !t.contains_key("methods") => {
            let mut all = vec!["oracle".to_string(), "knee".into(), "tm".into()];
            if t.contains_key("checkpoint") {
                all.insert(0, "policy".into());
            }
            Some(all)
        }
        None => None,
    };
    if let Some(m) = methods {
        let arr = m.into_iter().map(|s| toml::Value::String(s.trim().to_string())).collect();
        set_value(&mut t, "methods", toml::Value::Array(arr))?;
    }
    EvalConfig::from_table(t)
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Synth(args) => {
            let cfg = synth_config(&args)?;
            let report = cmd_synth(&cfg)?;
            println!("quality rate {:.4}, expected AURC {:.4}", report.quality, report.expected_aurc);
            for (id, a) in &report.topic_aurc {
                println!("{id}\tAURC {a:.4}");
            }
            println!("mean AURC {:.4} over {} topics", report.mean_aurc(), report.topic_aurc.len());
        }
        Command::Train(args) => {
            let cfg = train_config(&args)?;
            let r = cmd_train(&cfg)?;
            println!(
                "trained on {} topics: {} rollouts, {} env steps, stopped by {:?}, best mean return {:.4}",
                r.topics, r.rollouts, r.env_steps, r.stop_reason, r.best_return
            );
            println!("checkpoint {}", r.checkpoint.display());
            println!("log {}", r.log.display());
        }
        Command::Eval(args) => {
            let r = cmd_eval(&eval_config(&args, false)?)?;
            print!("{}", format_summary(&r.summary));
        }
        Command::Compare(args) => {
            let r = cmd_eval(&eval_config(&args, true)?)?;
            print!("{}", format_summary(&r.summary));
        }
        Command::InspectCheckpoint { path } => {
            let header = inspect_checkpoint(&path)?;
            println!("{}", serde_json::to_string_pretty(&header)?);
        }
    }
    Ok(())
}
