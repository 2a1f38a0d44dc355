//! Two linear region-embedding heads trained side by side.
//!
//! Each head maps a region feature `x` to `V(W·x)`. The BCE head is trained
//! with the base-class BCE loss only. The proxy head is trained with BCE plus
//! the weighted proxy loss on proxy-novel pairs synthesized from the batch
//! (and optionally an L1 distillation term).
//!
//! Randomness: head initialization, batch shuffling, pair/λ draws and
//! distillation teachers each use their own stream derived from
//! `TrainConfig::seed` (stages `"init"`, `"shuffle"`, `"mix"`, `"distill"`).
//! Within a step the mix stream is consumed by [`select_pairs`] first and
//! then, for instance-wise mixup, by one region draw per side of each pair.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::datagen::{distill_teacher, RegionSample};
use crate::embedding::{check_finite, l2_norm, normalize_backward, Embedding, NORM_EPS};
use crate::error::{Error, Result};
use crate::jsonfmt;
use crate::losses::{bce_class_loss, distill_loss_grad, proxy_loss_grad, BaseClassifier, LossSpec};
use crate::mixer::{mix_embeddings, select_pairs, Granularity, MixSpec, PairStrategy};
use crate::prototype::{weights, RegionView, WeightingSpec};
use crate::registry::{ClassRegistry, Group};
use crate::rng::{self, Rng};

/// Noise level of the synthetic distillation teacher.
pub const DISTILL_TEACHER_SIGMA: f64 = 0.1;

/// Row-major `M×F` linear map followed by L2 normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    embedding_dim: usize,
    feature_dim: usize,
    matrix: Vec<f64>,
}

#[derive(Deserialize)]
struct CheckpointFile {
    feature_dim: usize,
    embedding_dim: usize,
    matrix: Vec<Vec<f64>>,
}

impl HeadParams {
    pub fn new(embedding_dim: usize, feature_dim: usize, matrix: Vec<f64>) -> Result<Self> {
        if matrix.len() != embedding_dim * feature_dim {
            return Err(Error::DimensionMismatch {
                expected: embedding_dim * feature_dim,
                actual: matrix.len(),
            });
        }
        check_finite(&matrix, "head matrix")?;
        Ok(Self {
            embedding_dim,
            feature_dim,
            matrix,
        })
    }

    /// Entries drawn from `N(0, 1/F)`.
    pub fn random(embedding_dim: usize, feature_dim: usize, rng: &mut Rng) -> Self {
        let scale = 1.0 / (feature_dim as f64).sqrt();
        let matrix = (0..embedding_dim * feature_dim)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self {
            embedding_dim,
            feature_dim,
            matrix,
        }
    }

    pub fn embedding_dim(&self) -> usize {
        self.embedding_dim
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn matrix_mut(&mut self) -> &mut [f64] {
        &mut self.matrix
    }

    pub fn to_json(&self) -> String {
        let mut out = String::new();
        let _ = write!(
            out,
            "{{\"feature_dim\":{},\"embedding_dim\":{},\"matrix\":[",
            self.feature_dim, self.embedding_dim
        );
        for (k, row) in self.matrix.chunks_exact(self.feature_dim).enumerate() {
            if k > 0 {
                out.push(',');
            }
            out.push('\n');
            out.push_str(&jsonfmt::array(row));
        }
        out.push_str("\n]}\n");
        out
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CheckpointFile =
            serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        if file.matrix.len() != file.embedding_dim
            || file.matrix.iter().any(|r| r.len() != file.feature_dim)
        {
            return Err(Error::Schema(format!(
                "checkpoint matrix is not {}x{}",
                file.embedding_dim, file.feature_dim
            )));
        }
        let flat: Vec<f64> = file.matrix.into_iter().flatten().collect();
        HeadParams::new(file.embedding_dim, file.feature_dim, flat)
            .map_err(|e| Error::Schema(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    fn project(&self, feature: &[f64]) -> Result<Vec<f64>> {
        if feature.len() != self.feature_dim {
            return Err(Error::DimensionMismatch {
                expected: self.feature_dim,
                actual: feature.len(),
            });
        }
        Ok(self
            .matrix
            .chunks_exact(self.feature_dim)
            .map(|row| row.iter().zip(feature).map(|(w, x)| w * x).sum())
            .collect())
    }

    /// Returns `V(W·x)` and `‖W·x‖`.
    fn forward_cached(&self, feature: &[f64]) -> Result<(Vec<f64>, f64)> {
        let z = self.project(feature)?;
        let n = l2_norm(&z);
        if n <= NORM_EPS {
            return Err(Error::NearZeroNorm { norm: n });
        }
        Ok((z.iter().map(|v| v / n).collect(), n))
    }

    /// Adds `∂L/∂W` to `grad` given `∂L/∂V(W·x)`.
    fn accumulate_backward(
        &self,
        feature: &[f64],
        unit: &[f64],
        norm: f64,
        grad_unit: &[f64],
        grad: &mut [f64],
    ) {
        let gz = normalize_backward(unit, norm, grad_unit);
        for (row, g) in grad.chunks_exact_mut(self.feature_dim).zip(&gz) {
            for (w, x) in row.iter_mut().zip(feature) {
                *w += g * x;
            }
        }
    }
}

/// Region embedding of `feature` under `head`.
pub fn forward(head: &HeadParams, feature: &[f64]) -> Result<Embedding> {
    let (unit, _) = head.forward_cached(feature)?;
    Embedding::unit(unit)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub grad_clip: f64,
    pub mix: MixSpec,
    pub weighting: WeightingSpec,
    pub loss: LossSpec,
    /// Train the proxy head on the proxy (and distillation) terms only.
    pub proxy_only: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            epochs: 30,
            batch_size: 64,
            learning_rate: 0.05,
            weight_decay: 1e-4,
            grad_clip: 5.0,
            mix: MixSpec::default(),
            weighting: WeightingSpec::default(),
            loss: LossSpec::default(),
            proxy_only: false,
        }
    }
}

impl TrainConfig {
    fn validate_step(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config("learning_rate must be finite and >= 0".into()));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::Config("weight_decay must be finite and >= 0".into()));
        }
        if !(self.grad_clip.is_finite() && self.grad_clip > 0.0) {
            return Err(Error::Config("grad_clip must be > 0".into()));
        }
        self.mix.validate()?;
        self.weighting.validate()?;
        self.loss.validate()
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be >= 2".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        self.validate_step()
    }
}

/// The BCE head and the proxy head.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoHeads {
    pub bce: HeadParams,
    pub proxy: HeadParams,
}

impl TwoHeads {
    /// Both heads start from the same random matrix.
    pub fn init(embedding_dim: usize, feature_dim: usize, seed: u64) -> Self {
        let head = HeadParams::random(embedding_dim, feature_dim, &mut rng::stream(seed, "init"));
        Self {
            bce: head.clone(),
            proxy: head,
        }
    }
}

/// One proxy-novel pair to synthesize in a step. For instance-wise mixup the
/// batch positions of the two mixed regions are fixed here too.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannedPair {
    pub class_i: u32,
    pub class_j: u32,
    pub lambda: f64,
    pub regions: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MixPlan {
    pub pairs: Vec<PlannedPair>,
    /// Set when the batch had fewer than two base classes.
    pub skipped: bool,
}

/// Per-step randomness owned by the caller.
#[derive(Debug, Clone)]
pub struct StepRng {
    pub mix: Rng,
    pub distill: Rng,
}

impl StepRng {
    pub fn from_seed(seed: u64) -> Self {
        Self {
            mix: rng::stream(seed, "mix"),
            distill: rng::stream(seed, "distill"),
        }
    }
}

fn novel_targets(registry: &ClassRegistry) -> Vec<Embedding> {
    registry
        .in_group(Group::Novel)
        .map(|r| r.text_embedding.clone())
        .collect()
}

/// Draws the proxy pairs for one batch from `rng`.
pub fn plan_mix(
    batch: &[&RegionSample],
    registry: &ClassRegistry,
    mix: &MixSpec,
    rng: &mut Rng,
) -> Result<MixPlan> {
    let mut members: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (pos, s) in batch.iter().enumerate() {
        members.entry(s.class_id).or_default().push(pos);
    }
    if members.len() < 2 {
        return Ok(MixPlan {
            pairs: Vec::new(),
            skipped: true,
        });
    }
    let present: Vec<u32> = members.keys().copied().collect();
    let targets = match mix.pair_strategy {
        PairStrategy::NovelNearest => Some(novel_targets(registry)),
        PairStrategy::Random => None,
    };
    let sources = select_pairs(&present, registry, mix, targets.as_deref(), rng)?;
    let pairs = sources
        .into_iter()
        .map(|s| {
            let regions = match mix.granularity {
                Granularity::ClassWise => None,
                Granularity::InstanceWise => {
                    let mi = &members[&s.class_i];
                    let mj = &members[&s.class_j];
                    let a = mi[rng.random_range(0..mi.len())];
                    let b = mj[rng.random_range(0..mj.len())];
                    Some((a, b))
                }
            };
            PlannedPair {
                class_i: s.class_i,
                class_j: s.class_j,
                lambda: s.lambda,
                regions,
            }
        })
        .collect();
    Ok(MixPlan {
        pairs,
        skipped: false,
    })
}

/// Value and parameter gradient of one head's batch objective.
#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub value: f64,
    pub grad: Vec<f64>,
    pub bce: f64,
    pub proxy: f64,
    pub distill: f64,
    pub pairs: usize,
}

fn add_scaled(acc: &mut [f64], g: &[f64], s: f64) {
    for (a, x) in acc.iter_mut().zip(g) {
        *a += s * x;
    }
}

/// Mean BCE over the batch, for a head trained on BCE alone.
pub fn bce_objective(
    head: &HeadParams,
    batch: &[&RegionSample],
    classifier: &BaseClassifier,
    scale: f64,
) -> Result<Objective> {
    let b = batch.len() as f64;
    let mut grad = vec![0.0; head.matrix.len()];
    let mut value = 0.0;
    for s in batch {
        let (unit, norm) = head.forward_cached(&s.feature)?;
        let out = bce_class_loss(&unit, s.class_id, classifier, scale)?;
        value += out.value / b;
        let g: Vec<f64> = out.grad.iter().map(|x| x / b).collect();
        head.accumulate_backward(&s.feature, &unit, norm, &g, &mut grad);
    }
    Ok(Objective {
        value,
        grad,
        bce: value,
        proxy: 0.0,
        distill: 0.0,
        pairs: 0,
    })
}

/// The proxy head's batch objective:
/// `mean BCE + proxy_weight · mean proxy loss + distill_weight · mean distill`,
/// with the pairs fixed by `plan` and teachers (if any) fixed by the caller.
#[allow(clippy::too_many_arguments)]
pub fn proxy_objective(
    head: &HeadParams,
    batch: &[&RegionSample],
    registry: &ClassRegistry,
    classifier: &BaseClassifier,
    config: &TrainConfig,
    plan: &MixPlan,
    teachers: Option<&[Embedding]>,
) -> Result<Objective> {
    let n = batch.len();
    let b = n as f64;
    let loss = &config.loss;
    let mut units = Vec::with_capacity(n);
    let mut norms = Vec::with_capacity(n);
    for s in batch {
        let (u, z) = head.forward_cached(&s.feature)?;
        units.push(u);
        norms.push(z);
    }
    let dim = head.embedding_dim;
    let mut grad_units = vec![vec![0.0; dim]; n];

    let mut bce = 0.0;
    for (k, s) in batch.iter().enumerate() {
        let out = bce_class_loss(&units[k], s.class_id, classifier, loss.bce_logit_scale)?;
        bce += out.value / b;
        if !config.proxy_only {
            add_scaled(&mut grad_units[k], &out.grad, 1.0 / b);
        }
    }

    let mut proxy = 0.0;
    if !plan.pairs.is_empty() {
        let p = plan.pairs.len() as f64;
        let pair_scale = loss.proxy_weight / p;
        // class -> (positions, weights, unnormalized sum, norm, accumulated grad)
        let mut protos: BTreeMap<u32, ProtoState> = BTreeMap::new();
        if config.mix.granularity == Granularity::ClassWise {
            for pair in &plan.pairs {
                for c in [pair.class_i, pair.class_j] {
                    if let std::collections::btree_map::Entry::Vacant(e) = protos.entry(c) {
                        e.insert(ProtoState::build(c, batch, &units, &config.weighting)?);
                    }
                }
            }
        }
        for pair in &plan.pairs {
            let text = mix_embeddings(
                registry.text(pair.class_i)?,
                registry.text(pair.class_j)?,
                pair.lambda,
            )?;
            let (vi, vj): (&[f64], &[f64]) = match pair.regions {
                Some((a, bpos)) => (&units[a], &units[bpos]),
                None => (&protos[&pair.class_i].unit, &protos[&pair.class_j].unit),
            };
            let l = pair.lambda;
            let mixed: Vec<f64> = vi.iter().zip(vj).map(|(x, y)| l * x + (1.0 - l) * y).collect();
            let mn = l2_norm(&mixed);
            if mn <= NORM_EPS {
                return Err(Error::NearZeroNorm { norm: mn });
            }
            let visual: Vec<f64> = mixed.iter().map(|x| x / mn).collect();
            let pl = proxy_loss_grad(&text, &visual, loss.proxy_variant)?;
            proxy += pl.value / p;
            let dmixed = normalize_backward(&visual, mn, &pl.grad_visual);
            match pair.regions {
                Some((a, bpos)) => {
                    add_scaled(&mut grad_units[a], &dmixed, pair_scale * l);
                    add_scaled(&mut grad_units[bpos], &dmixed, pair_scale * (1.0 - l));
                }
                None => {
                    add_scaled(&mut protos.get_mut(&pair.class_i).unwrap().grad, &dmixed, pair_scale * l);
                    add_scaled(
                        &mut protos.get_mut(&pair.class_j).unwrap().grad,
                        &dmixed,
                        pair_scale * (1.0 - l),
                    );
                }
            }
        }
        for state in protos.values() {
            let dsum = normalize_backward(&state.unit, state.norm, &state.grad);
            for (&pos, &w) in state.positions.iter().zip(&state.weights) {
                add_scaled(&mut grad_units[pos], &dsum, w);
            }
        }
    }

    let mut distill = 0.0;
    if let Some(teachers) = teachers {
        for (k, t) in teachers.iter().enumerate() {
            let (v, g) = distill_loss_grad(&units[k], t)?;
            distill += v / b;
            add_scaled(&mut grad_units[k], &g, loss.distill_weight / b);
        }
    }

    let mut grad = vec![0.0; head.matrix.len()];
    for (k, s) in batch.iter().enumerate() {
        head.accumulate_backward(&s.feature, &units[k], norms[k], &grad_units[k], &mut grad);
    }
    let bce_part = if config.proxy_only { 0.0 } else { bce };
    let proxy_part = if plan.pairs.is_empty() { 0.0 } else { loss.proxy_weight * proxy };
    let distill_part = if teachers.is_some() { loss.distill_weight * distill } else { 0.0 };
    Ok(Objective {
        value: bce_part + proxy_part + distill_part,
        grad,
        bce,
        proxy,
        distill,
        pairs: plan.pairs.len(),
    })
}

struct ProtoState {
    positions: Vec<usize>,
    weights: Vec<f64>,
    unit: Vec<f64>,
    norm: f64,
    grad: Vec<f64>,
}

impl ProtoState {
    fn build(
        class_id: u32,
        batch: &[&RegionSample],
        units: &[Vec<f64>],
        weighting: &WeightingSpec,
    ) -> Result<Self> {
        let positions: Vec<usize> = batch
            .iter()
            .enumerate()
            .filter(|(_, s)| s.class_id == class_id)
            .map(|(k, _)| k)
            .collect();
        let views: Vec<RegionView<'_>> = positions
            .iter()
            .map(|&k| RegionView {
                embedding: &units[k],
                iou: batch[k].iou,
                objectness: batch[k].objectness,
            })
            .collect();
        let w = weights(&views, weighting).map_err(|e| match e {
            Error::EmptyClass { .. } => Error::EmptyClass {
                class_id: Some(class_id),
            },
            other => other,
        })?;
        let dim = units[0].len();
        let mut sum = vec![0.0; dim];
        for (v, &wk) in views.iter().zip(&w) {
            add_scaled(&mut sum, v.embedding, wk);
        }
        let norm = l2_norm(&sum);
        if norm <= NORM_EPS {
            return Err(Error::NearZeroNorm { norm });
        }
        Ok(Self {
            positions,
            weights: w,
            unit: sum.iter().map(|x| x / norm).collect(),
            norm,
            grad: vec![0.0; dim],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepReport {
    pub bce_loss: f64,
    pub proxy_head_bce: f64,
    pub proxy_loss: f64,
    pub distill_loss: f64,
    pub proxy_objective: f64,
    pub proxy_pairs: usize,
    pub proxy_skipped: bool,
}

fn clip(grad: &mut [f64], max_norm: f64) {
    let n = l2_norm(grad);
    if n > max_norm {
        let s = max_norm / n;
        grad.iter_mut().for_each(|g| *g *= s);
    }
}

fn sgd_update(head: &mut HeadParams, mut grad: Vec<f64>, config: &TrainConfig) {
    clip(&mut grad, config.grad_clip);
    let lr = config.learning_rate;
    let wd = config.weight_decay;
    for (w, g) in head.matrix.iter_mut().zip(&grad) {
        *w -= lr * (g + wd * *w);
    }
}

/// One SGD step on both heads.
pub fn train_step(
    heads: &mut TwoHeads,
    batch: &[&RegionSample],
    registry: &ClassRegistry,
    config: &TrainConfig,
    rng: &mut StepRng,
) -> Result<StepReport> {
    config.validate_step()?;
    let classifier = BaseClassifier::from_registry(registry);
    step_with(heads, batch, registry, &classifier, config, rng)
}

fn step_with(
    heads: &mut TwoHeads,
    batch: &[&RegionSample],
    registry: &ClassRegistry,
    classifier: &BaseClassifier,
    config: &TrainConfig,
    rng: &mut StepRng,
) -> Result<StepReport> {
    let bce = bce_objective(&heads.bce, batch, classifier, config.loss.bce_logit_scale)?;
    let plan = plan_mix(batch, registry, &config.mix, &mut rng.mix)?;
    let teachers = if config.loss.distill_weight > 0.0 {
        Some(
            batch
                .iter()
                .map(|s| {
                    distill_teacher(registry.text(s.class_id)?, DISTILL_TEACHER_SIGMA, &mut rng.distill)
                })
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    let proxy = proxy_objective(
        &heads.proxy,
        batch,
        registry,
        classifier,
        config,
        &plan,
        teachers.as_deref(),
    )?;
    let report = StepReport {
        bce_loss: bce.value,
        proxy_head_bce: proxy.bce,
        proxy_loss: proxy.proxy,
        distill_loss: proxy.distill,
        proxy_objective: proxy.value,
        proxy_pairs: proxy.pairs,
        proxy_skipped: plan.skipped,
    };
    sgd_update(&mut heads.bce, bce.grad, config);
    sgd_update(&mut heads.proxy, proxy.grad, config);
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub bce_loss: f64,
    pub proxy_loss: f64,
    pub proxy_head_bce: f64,
    pub total_loss: f64,
    pub proxy_pairs: usize,
    pub skipped_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainLog {
    /// CSV with one row per epoch. `preamble` lines are emitted first, each
    /// prefixed with `# `.
    pub fn to_csv(&self, preamble: &[String]) -> String {
        let mut out = String::new();
        for line in preamble {
            let _ = writeln!(out, "# {line}");
        }
        out.push_str("epoch,bce_loss,proxy_loss,proxy_head_bce,total_loss,proxy_pairs,skipped_steps\n");
        for e in &self.epochs {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                e.epoch,
                e.bce_loss,
                e.proxy_loss,
                e.proxy_head_bce,
                e.total_loss,
                e.proxy_pairs,
                e.skipped_steps
            );
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct FitOutput {
    pub heads: TwoHeads,
    pub log: TrainLog,
}

/// Trains both heads from a shared random initialization.
pub fn fit(config: &TrainConfig, registry: &ClassRegistry, samples: &[RegionSample]) -> Result<FitOutput> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::Config("no training samples".into()));
    }
    let feature_dim = samples[0].feature.len();
    for s in samples {
        if s.feature.len() != feature_dim {
            return Err(Error::DimensionMismatch {
                expected: feature_dim,
                actual: s.feature.len(),
            });
        }
        let rec = registry.get(s.class_id).ok_or(Error::UnknownClass(s.class_id))?;
        if rec.group != Group::Base {
            return Err(Error::Config(format!(
                "training sample labeled with non-base class {}",
                s.class_id
            )));
        }
    }
    let classifier = BaseClassifier::from_registry(registry);
    let mut heads = TwoHeads::init(registry.dimension(), feature_dim, config.seed);
    let mut shuffle = rng::stream(config.seed, "shuffle");
    let mut step_rng = StepRng::from_seed(config.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut log = TrainLog::default();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle);
        let mut acc = EpochLog {
            epoch,
            bce_loss: 0.0,
            proxy_loss: 0.0,
            proxy_head_bce: 0.0,
            total_loss: 0.0,
            proxy_pairs: 0,
            skipped_steps: 0,
        };
        let mut steps = 0usize;
        let mut proxy_steps = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let mut idx = chunk.to_vec();
            idx.sort_unstable();
            let batch: Vec<&RegionSample> = idx.iter().map(|&k| &samples[k]).collect();
            let r = step_with(&mut heads, &batch, registry, &classifier, config, &mut step_rng)?;
            steps += 1;
            acc.bce_loss += r.bce_loss;
            acc.proxy_head_bce += r.proxy_head_bce;
            acc.total_loss += r.bce_loss + r.proxy_objective;
            acc.proxy_pairs += r.proxy_pairs;
            if r.proxy_skipped {
                acc.skipped_steps += 1;
            } else {
                acc.proxy_loss += r.proxy_loss;
                proxy_steps += 1;
            }
        }
        let s = steps as f64;
        acc.bce_loss /= s;
        acc.proxy_head_bce /= s;
        acc.total_loss /= s;
        if proxy_steps > 0 {
            acc.proxy_loss /= proxy_steps as f64;
        }
        log::debug!(
            "epoch {epoch}: bce {:.5} proxy {:.5} total {:.5}",
            acc.bce_loss,
            acc.proxy_loss,
            acc.total_loss
        );
        log.epochs.push(acc);
    }
    Ok(FitOutput { heads, log })
}
