use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::Context;
use proxymix_core::eval::{FusionParams, Positivity};
use proxymix_core::rng::{config_hash, derive_seed};
use proxymix_core::{SyntheticSpec, TrainConfig};
use serde::Serialize;

use crate::UsageError;

/// Everything one experiment run depends on. `out` is excluded from the
/// config hash so the same run written to two directories hashes equally.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub name: String,
    pub seed: u64,
    pub data: SyntheticSpec,
    pub train: TrainConfig,
    pub fusion: FusionParams,
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            name: "default".into(),
            seed: 7,
            data: SyntheticSpec::default(),
            train: TrainConfig::default(),
            fusion: FusionParams::default(),
            out: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> anyhow::Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| UsageError(format!("invalid value {value:?} for {key}: {e}")).into())
}

pub fn parse_positivity(value: &str) -> anyhow::Result<Positivity> {
    let (kind, param) = value.split_once(':').unwrap_or((value, ""));
    let p = |default: f64| -> anyhow::Result<f64> {
        if param.is_empty() {
            Ok(default)
        } else {
            parse("fusion.positivity", param)
        }
    };
    match kind {
        "logistic" => Ok(Positivity::Logistic(p(50.0)?)),
        "shift_clamp" | "shift-clamp" => Ok(Positivity::ShiftClamp(p(1e-6)?)),
        _ => Err(UsageError(format!("unknown positivity transform {value:?}")).into()),
    }
}

impl RunConfig {
    /// Applies one flat dotted key.
    pub fn set(&mut self, key: &str, value: &str) -> anyhow::Result<()> {
        let d = &mut self.data;
        let t = &mut self.train;
        match key {
            "name" => self.name = value.to_string(),
            "seed" => self.seed = parse(key, value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            "data.embedding_dim" => d.embedding_dim = parse(key, value)?,
            "data.feature_dim" => d.feature_dim = parse(key, value)?,
            "data.n_base" => d.n_base = parse(key, value)?,
            "data.n_novel" => d.n_novel = parse(key, value)?,
            "data.novel_mode" => d.novel_mode = parse(key, value)?,
            "data.samples_per_class" => d.samples_per_class = parse(key, value)?,
            "data.quality_noise_coupling" => d.quality_noise_coupling = parse(key, value)?,
            "data.hull_jitter" => d.hull_jitter = parse(key, value)?,
            "train.epochs" => t.epochs = parse(key, value)?,
            "train.batch_size" => t.batch_size = parse(key, value)?,
            "train.learning_rate" => t.learning_rate = parse(key, value)?,
            "train.weight_decay" => t.weight_decay = parse(key, value)?,
            "train.grad_clip" => t.grad_clip = parse(key, value)?,
            "train.proxy_only" => t.proxy_only = parse(key, value)?,
            "mix.sampler" => t.mix.sampler = parse(key, value)?,
            "mix.pair_strategy" => t.mix.pair_strategy = parse(key, value)?,
            "mix.pairs_per_batch" => t.mix.pairs_per_batch = parse(key, value)?,
            "mix.granularity" => t.mix.granularity = parse(key, value)?,
            "weighting.mode" => t.weighting.mode = parse(key, value)?,
            "weighting.temperature" => t.weighting.temperature = parse(key, value)?,
            "loss.proxy_variant" => t.loss.proxy_variant = parse(key, value)?,
            "loss.proxy_weight" => t.loss.proxy_weight = parse(key, value)?,
            "loss.bce_logit_scale" => t.loss.bce_logit_scale = parse(key, value)?,
            "loss.distill_weight" => t.loss.distill_weight = parse(key, value)?,
            "fusion.alpha" => self.fusion.alpha = parse(key, value)?,
            "fusion.beta" => self.fusion.beta = parse(key, value)?,
            "fusion.positivity" => self.fusion.positivity = parse_positivity(value)?,
            "fusion.preset" => match value {
                "lvis" => {
                    let p = FusionParams::lvis_preset();
                    self.fusion.alpha = p.alpha;
                    self.fusion.beta = p.beta;
                }
                "coco" | "default" => {
                    let p = FusionParams::default();
                    self.fusion.alpha = p.alpha;
                    self.fusion.beta = p.beta;
                }
                _ => return Err(UsageError(format!("unknown fusion preset {value:?}")).into()),
            },
            _ => return Err(UsageError(format!("unknown config key {key:?}")).into()),
        }
        Ok(())
    }

    /// Reads a JSON object of flat dotted keys.
    pub fn apply_file(&mut self, path: &Path) -> anyhow::Result<()> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| UsageError(format!("config {} is not valid JSON: {e}", path.display())))?;
        let obj = value
            .as_object()
            .ok_or_else(|| UsageError(format!("config {} must be a JSON object", path.display())))?;
        for (key, v) in obj {
            let s = match v {
                serde_json::Value::String(s) => s.clone(),
                serde_json::Value::Number(_) | serde_json::Value::Bool(_) => v.to_string(),
                _ => return Err(UsageError(format!("config key {key:?} must be a string, number or bool")).into()),
            };
            self.set(key, &s)?;
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        config_hash(&canonical)
    }

    pub fn data_spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            seed: derive_seed(self.seed, "gen"),
            ..self.data.clone()
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: derive_seed(self.seed, "train"),
            ..self.train.clone()
        }
    }

    pub fn header(&self, command: &str) -> String {
        format!("proxymix {command} config={} seed={}", self.hash(), self.seed)
    }

    pub fn manifest(&self, command: &str) -> String {
        let body = serde_json::json!({
            "command": command,
            "config_hash": self.hash(),
            "seed": self.seed,
            "config": self,
        });
        let mut s = serde_json::to_string_pretty(&body).expect("manifest serializes");
        s.push('\n');
        s
    }
}
