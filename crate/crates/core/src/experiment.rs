//! Seeded end-to-end runs: generate, train, evaluate, and compare variants.

use std::fmt::Write as _;

use crate::datagen::{gen_benchmark, Benchmark, SyntheticSpec};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport, FusionParams};
use crate::losses::ProxyVariant;
use crate::mixer::{Granularity, PairStrategy, Sampler};
use crate::prototype::{WeightingMode, WeightingSpec};
use crate::trainer::{fit, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub name: String,
    pub config: TrainConfig,
    pub fusion: FusionParams,
}

impl Variant {
    pub fn new(name: impl Into<String>, config: TrainConfig) -> Self {
        Self {
            name: name.into(),
            config,
            fusion: FusionParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub report: EvalReport,
    pub first_proxy_loss: f64,
    pub final_proxy_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantResult {
    pub name: String,
    pub runs: Vec<SeedRun>,
}

impl VariantResult {
    fn mean(&self, f: impl Fn(&SeedRun) -> f64) -> f64 {
        self.runs.iter().map(f).sum::<f64>() / self.runs.len() as f64
    }

    pub fn base_top1(&self) -> f64 {
        self.mean(|r| r.report.base_top1)
    }

    pub fn novel_top1(&self) -> f64 {
        self.mean(|r| r.report.novel_top1)
    }

    pub fn overall_top1(&self) -> f64 {
        self.mean(|r| r.report.overall_top1)
    }

    pub fn final_proxy_loss(&self) -> f64 {
        self.mean(|r| r.final_proxy_loss)
    }
}

/// Trains and evaluates one variant on an already generated benchmark.
pub fn run_on(bench: &Benchmark, variant: &Variant, seed: u64) -> Result<SeedRun> {
    let config = TrainConfig {
        seed,
        ..variant.config.clone()
    };
    let out = fit(&config, &bench.registry, &bench.train.samples)?;
    let report = evaluate(&out.heads, &bench.eval.samples, &bench.registry, &variant.fusion)?;
    let epochs = &out.log.epochs;
    Ok(SeedRun {
        seed,
        report,
        first_proxy_loss: epochs.first().map_or(0.0, |e| e.proxy_loss),
        final_proxy_loss: epochs.last().map_or(0.0, |e| e.proxy_loss),
    })
}

/// Runs every variant on the benchmark generated for each seed. The same
/// seed drives data generation and training, so variants see paired data.
pub fn run_variants(spec: &SyntheticSpec, variants: &[Variant], seeds: &[u64]) -> Result<Vec<VariantResult>> {
    if seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    let mut results: Vec<VariantResult> = variants
        .iter()
        .map(|v| VariantResult {
            name: v.name.clone(),
            runs: Vec::with_capacity(seeds.len()),
        })
        .collect();
    for &seed in seeds {
        let bench = gen_benchmark(&SyntheticSpec {
            seed,
            ..spec.clone()
        })?;
        for (v, res) in variants.iter().zip(results.iter_mut()) {
            let run = run_on(&bench, v, seed)?;
            log::info!(
                "{} seed {}: base {:.4} novel {:.4}",
                v.name,
                seed,
                run.report.base_top1,
                run.report.novel_top1
            );
            res.runs.push(run);
        }
    }
    Ok(results)
}

/// `count` consecutive seeds starting at `first`.
pub fn seed_range(first: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|k| first + k).collect()
}

/// The proxy-free reference: the proxy head receives BCE only, so both
/// heads stay identical and fusion reduces to the BCE head.
pub fn no_proxy(base: &TrainConfig) -> Variant {
    let mut config = base.clone();
    config.loss.proxy_weight = 0.0;
    Variant::new("no_proxy", config)
}

/// Class-wise mixup under each prototype weighting, instance-wise mixup,
/// and the proxy-free reference.
pub fn granularity_variants(base: &TrainConfig) -> Vec<Variant> {
    let mut out: Vec<Variant> = [
        WeightingMode::SoftmaxObjectness,
        WeightingMode::SoftmaxIou,
        WeightingMode::Centroid,
    ]
    .into_iter()
    .map(|mode| {
        let mut config = base.clone();
        config.mix.granularity = Granularity::ClassWise;
        config.weighting = WeightingSpec {
            mode,
            ..base.weighting
        };
        Variant::new(mode.as_str(), config)
    })
    .collect();
    let mut instance = base.clone();
    instance.mix.granularity = Granularity::InstanceWise;
    out.push(Variant::new("instance_wise", instance));
    out.push(no_proxy(base));
    out
}

pub fn sampler_variants(base: &TrainConfig) -> Vec<Variant> {
    [Sampler::Beta(1.0), Sampler::Bernoulli(0.5)]
        .into_iter()
        .map(|s| {
            let mut config = base.clone();
            config.mix.sampler = s;
            Variant::new(s.to_string(), config)
        })
        .collect()
}

pub fn pair_strategy_variants(base: &TrainConfig) -> Vec<Variant> {
    [
        ("random", PairStrategy::Random),
        ("novel-nearest", PairStrategy::NovelNearest),
    ]
    .into_iter()
    .map(|(name, p)| {
        let mut config = base.clone();
        config.mix.pair_strategy = p;
        Variant::new(name, config)
    })
    .collect()
}

pub fn loss_variants(base: &TrainConfig) -> Vec<Variant> {
    ProxyVariant::ALL
        .into_iter()
        .map(|v| {
            let mut config = base.clone();
            config.loss.proxy_variant = v;
            Variant::new(v.as_str(), config)
        })
        .collect()
}

/// One row per variant with seed-averaged accuracies, followed by one row per
/// (variant, seed).
pub fn results_to_csv(results: &[VariantResult], preamble: &[String]) -> String {
    let mut out = String::new();
    for line in preamble {
        let _ = writeln!(out, "# {line}");
    }
    out.push_str("variant,seed,base_top1,novel_top1,overall_top1,first_proxy_loss,final_proxy_loss\n");
    for r in results {
        let first = r.mean(|s| s.first_proxy_loss);
        let _ = writeln!(
            out,
            "{},mean,{},{},{},{},{}",
            r.name,
            r.base_top1(),
            r.novel_top1(),
            r.overall_top1(),
            first,
            r.final_proxy_loss()
        );
    }
    for r in results {
        for s in &r.runs {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.name,
                s.seed,
                s.report.base_top1,
                s.report.novel_top1,
                s.report.overall_top1,
                s.first_proxy_loss,
                s.final_proxy_loss
            );
        }
    }
    out
}
