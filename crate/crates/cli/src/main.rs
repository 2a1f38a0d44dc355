use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

mod commands;
mod config;

use config::RunConfig;

/// A usage problem: bad flag values, unknown config keys, missing paths.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(name = "proxymix", version, about = "Proxy-novel mixup experiments on a synthetic open-vocabulary benchmark")]
struct Cli {
    /// JSON file of flat dotted config keys; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    beta: Option<f64>,
    /// l1, l2 or cosine.
    #[arg(long, global = true)]
    proxy_variant: Option<String>,
    /// centroid, softmax_iou or softmax_objectness.
    #[arg(long, global = true)]
    weighting: Option<String>,
    /// beta:G, bernoulli:P or fixed:L.
    #[arg(long, global = true)]
    sampler: Option<String>,
    /// random or novel-nearest.
    #[arg(long, global = true)]
    pair_strategy: Option<String>,
    /// class or instance.
    #[arg(long, global = true)]
    granularity: Option<String>,
    /// Extra dotted config key, e.g. --set train.epochs=10. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a registry and train/eval sample files.
    Gen,
    /// Train the BCE and proxy heads.
    Train {
        /// Directory holding registry.json and train.json (defaults to --out).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Evaluate fused predictions on eval.json.
    Eval {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Directory holding the head checkpoints (defaults to --out).
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "fused")]
        head: HeadChoice,
    },
    /// Evaluate a grid of fusion exponents.
    FuseSweep {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Comma-separated alpha grid (default 0, 0.1, ..., 1).
        #[arg(long)]
        alphas: Option<String>,
        #[arg(long)]
        betas: Option<String>,
    },
    /// Synthesize proxy-novel pairs from the trained proxy head's prototypes.
    Mix {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 16)]
        count: usize,
        /// Also write the class prototypes as a registry file.
        #[arg(long)]
        dump_prototypes: bool,
    },
    /// Similarity histograms and hull proximity of the class groups.
    Analyze {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Number of proxy-novel text embeddings to sample.
        #[arg(long, default_value_t = 500)]
        proxy_count: usize,
        #[arg(long, default_value_t = 20)]
        bins: usize,
    },
    /// Run an ablation study end to end over several seeds.
    Ablate {
        #[arg(long, value_enum)]
        study: Study,
        #[arg(long, default_value_t = 5)]
        seeds: usize,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadChoice {
    Fused,
    Bce,
    Proxy,
}

impl HeadChoice {
    fn as_str(self) -> &'static str {
        match self {
            HeadChoice::Fused => "fused",
            HeadChoice::Bce => "bce",
            HeadChoice::Proxy => "proxy",
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Study {
    Granularity,
    Sampler,
    PairStrategy,
    Loss,
}

impl Study {
    fn as_str(self) -> &'static str {
        match self {
            Study::Granularity => "granularity",
            Study::Sampler => "sampler",
            Study::PairStrategy => "pair_strategy",
            Study::Loss => "loss",
        }
    }
}

fn build_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    for kv in &cli.sets {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| UsageError(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    let flags: [(&str, Option<String>); 9] = [
        ("seed", cli.seed.map(|s| s.to_string())),
        ("out", cli.out.as_ref().map(|p| p.display().to_string())),
        ("fusion.alpha", cli.alpha.map(|a| a.to_string())),
        ("fusion.beta", cli.beta.map(|b| b.to_string())),
        ("loss.proxy_variant", cli.proxy_variant.clone()),
        ("weighting.mode", cli.weighting.clone()),
        ("mix.sampler", cli.sampler.clone()),
        ("mix.pair_strategy", cli.pair_strategy.clone()),
        ("mix.granularity", cli.granularity.clone()),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            cfg.set(k, &v)?;
        }
    }
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig) -> anyhow::Result<PathBuf> {
    let out = cfg
        .out
        .clone()
        .ok_or_else(|| UsageError("--out is required".into()))?;
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    Ok(out)
}

fn or_out(dir: &Option<PathBuf>, out: &Path) -> PathBuf {
    dir.clone().unwrap_or_else(|| out.to_path_buf())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = build_config(&cli)?;
    let out = out_dir(&cfg)?;
    match &cli.command {
        Command::Gen => commands::gen(&cfg, &out),
        Command::Train { data } => commands::train(&cfg, &or_out(data, &out), &out),
        Command::Eval { data, model, head } => {
            commands::eval(&cfg, &or_out(data, &out), &or_out(model, &out), *head, &out)
        }
        Command::FuseSweep {
            data,
            model,
            alphas,
            betas,
        } => commands::sweep(
            &cfg,
            &or_out(data, &out),
            &or_out(model, &out),
            alphas.as_deref(),
            betas.as_deref(),
            &out,
        ),
        Command::Mix {
            data,
            model,
            count,
            dump_prototypes,
        } => commands::mix(
            &cfg,
            &or_out(data, &out),
            &or_out(model, &out),
            *count,
            *dump_prototypes,
            &out,
        ),
        Command::Analyze {
            data,
            proxy_count,
            bins,
        } => commands::analyze(&cfg, &or_out(data, &out), *proxy_count, *bins, &out),
        Command::Ablate { study, seeds } => commands::ablate(&cfg, *study, *seeds, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
