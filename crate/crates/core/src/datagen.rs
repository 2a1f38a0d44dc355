//! Seeded synthetic open-vocabulary benchmark.
//!
//! Base classes get independent random unit text embeddings. Novel classes
//! are either placed near the segment between two base classes (`InHull`)
//! or drawn independently (`OffHull`). Region features are produced by one
//! fixed random linear map `A` (F×M) applied to the class text embedding,
//! plus Gaussian noise whose scale grows as the proposal IoU drops.
//!
//! Draw order from the single generation stream:
//! base embeddings, novel embeddings, `A`, training samples, eval samples.
//! Each sample draws `iou`, the objectness jitter, then `F` noise values.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng as _;
use rand::SeedableRng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::embedding::{check_finite, l2_normalize, Embedding};
use crate::error::{Error, Result};
use crate::jsonfmt;
use crate::registry::{ClassRecord, ClassRegistry, Group};
use crate::rng::Rng;

pub const IOU_RANGE: (f64, f64) = (0.25, 1.0);
pub const OBJECTNESS_JITTER: f64 = 0.1;
/// In-hull novel classes use a mixing coefficient `k / 100` with `k` drawn
/// uniformly from this inclusive range. Classes sitting on top of a base
/// class are not novel in any useful sense, so the endpoints are excluded.
pub const HULL_LAMBDA_STEPS: (u32, u32) = (20, 80);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NovelMode {
    InHull,
    OffHull,
    Mixed,
}

impl std::str::FromStr for NovelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "in_hull" | "in-hull" => Ok(NovelMode::InHull),
            "off_hull" | "off-hull" => Ok(NovelMode::OffHull),
            "mixed" => Ok(NovelMode::Mixed),
            other => Err(Error::Config(format!("unknown novel mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub embedding_dim: usize,
    pub feature_dim: usize,
    pub n_base: usize,
    pub n_novel: usize,
    pub novel_mode: NovelMode,
    pub samples_per_class: usize,
    pub quality_noise_coupling: f64,
    /// Per-component std of the Gaussian perturbation added to in-hull novel embeddings.
    pub hull_jitter: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            seed: 7,
            embedding_dim: 32,
            feature_dim: 48,
            n_base: 16,
            n_novel: 8,
            novel_mode: NovelMode::InHull,
            samples_per_class: 64,
            quality_noise_coupling: 1.0,
            hull_jitter: 0.05,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_base < 2 {
            return Err(Error::Spec(format!("n_base must be >= 2, got {}", self.n_base)));
        }
        if self.samples_per_class < 1 {
            return Err(Error::Spec("samples_per_class must be >= 1".into()));
        }
        if self.embedding_dim < 2 {
            return Err(Error::Spec("embedding_dim must be >= 2".into()));
        }
        if self.feature_dim < 1 {
            return Err(Error::Spec("feature_dim must be >= 1".into()));
        }
        if !(self.quality_noise_coupling.is_finite() && self.quality_noise_coupling >= 0.0) {
            return Err(Error::Spec("quality_noise_coupling must be finite and >= 0".into()));
        }
        if !(self.hull_jitter.is_finite() && self.hull_jitter >= 0.0) {
            return Err(Error::Spec("hull_jitter must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// Number of novel classes placed in the hull.
    pub fn n_in_hull(&self) -> usize {
        match self.novel_mode {
            NovelMode::InHull => self.n_novel,
            NovelMode::OffHull => 0,
            NovelMode::Mixed => self.n_novel.div_ceil(2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSample {
    pub feature: Vec<f64>,
    pub class_id: u32,
    pub iou: f64,
    pub objectness: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub feature_dim: usize,
    pub samples: Vec<RegionSample>,
}

#[derive(Deserialize)]
struct SampleFile {
    feature_dim: usize,
    samples: Vec<RegionSample>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn to_json(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{{\"feature_dim\":{},\"samples\":[", self.feature_dim);
        for (k, s) in self.samples.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            let _ = write!(
                out,
                "\n{{\"feature\":{},\"class_id\":{},\"iou\":{},\"objectness\":{}}}",
                jsonfmt::array(&s.feature),
                s.class_id,
                jsonfmt::float(s.iou),
                jsonfmt::float(s.objectness)
            );
        }
        out.push_str("\n]}\n");
        out
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SampleFile =
            serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        for (k, s) in file.samples.iter().enumerate() {
            if s.feature.len() != file.feature_dim {
                return Err(Error::Schema(format!(
                    "sample {k} has feature length {}, expected {}",
                    s.feature.len(),
                    file.feature_dim
                )));
            }
            check_finite(&s.feature, "sample feature")
                .map_err(|e| Error::Schema(format!("sample {k}: {e}")))?;
            if !(0.0..=1.0).contains(&s.iou) || !(0.0..=1.0).contains(&s.objectness) {
                return Err(Error::Schema(format!("sample {k}: iou/objectness outside [0, 1]")));
            }
        }
        Ok(SampleSet {
            feature_dim: file.feature_dim,
            samples: file.samples,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    /// Checks every sample refers to a known class; with `train_only`, also
    /// that it is a base class.
    pub fn validate_against(&self, registry: &ClassRegistry, train_only: bool) -> Result<()> {
        for s in &self.samples {
            let rec = registry.get(s.class_id).ok_or(Error::UnknownClass(s.class_id))?;
            if train_only && rec.group != Group::Base {
                return Err(Error::Schema(format!(
                    "training sample labeled with non-base class {}",
                    s.class_id
                )));
            }
        }
        Ok(())
    }
}

/// Output of [`gen_benchmark`].
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub registry: ClassRegistry,
    pub train: SampleSet,
    pub eval: SampleSet,
    /// The shared feature map `A`, row-major F×M.
    pub projection: Vec<f64>,
}

fn random_unit(rng: &mut Rng, dim: usize) -> Embedding {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if let Ok(e) = l2_normalize(&v) {
            return e;
        }
    }
}

fn in_hull_embedding(rng: &mut Rng, base: &[Embedding], jitter: f64) -> Embedding {
    loop {
        let i = rng.random_range(0..base.len());
        let mut j = rng.random_range(0..base.len() - 1);
        if j >= i {
            j += 1;
        }
        let lambda = rng.random_range(HULL_LAMBDA_STEPS.0..=HULL_LAMBDA_STEPS.1) as f64 / 100.0;
        let mixed: Vec<f64> = base[i]
            .iter()
            .zip(base[j].iter())
            .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
            .collect();
        let Ok(mixed) = l2_normalize(&mixed) else { continue };
        let perturbed: Vec<f64> = mixed
            .iter()
            .map(|x| x + jitter * rng.sample::<f64, _>(StandardNormal))
            .collect();
        if let Ok(e) = l2_normalize(&perturbed) {
            return e;
        }
    }
}

fn draw_sample(
    rng: &mut Rng,
    class_id: u32,
    clean: &[f64],
    coupling: f64,
) -> RegionSample {
    let iou: f64 = rng.random_range(IOU_RANGE.0..=IOU_RANGE.1);
    let jitter: f64 = rng.random_range(-OBJECTNESS_JITTER..=OBJECTNESS_JITTER);
    let objectness = (iou + jitter).clamp(0.0, 1.0);
    let std = coupling * (1.0 - iou);
    let feature = clean
        .iter()
        .map(|c| c + std * rng.sample::<f64, _>(StandardNormal))
        .collect();
    RegionSample {
        feature,
        class_id,
        iou,
        objectness,
    }
}

/// `A · t` for a row-major F×M matrix.
pub fn apply_projection(projection: &[f64], feature_dim: usize, t: &[f64]) -> Vec<f64> {
    let m = t.len();
    debug_assert_eq!(projection.len(), feature_dim * m);
    projection
        .chunks_exact(m)
        .map(|row| row.iter().zip(t).map(|(a, b)| a * b).sum())
        .collect()
}

pub fn gen_benchmark(spec: &SyntheticSpec) -> Result<Benchmark> {
    spec.validate()?;
    let mut rng = Rng::seed_from_u64(spec.seed);
    let m = spec.embedding_dim;
    let f = spec.feature_dim;

    let base: Vec<Embedding> = (0..spec.n_base).map(|_| random_unit(&mut rng, m)).collect();
    let n_in_hull = spec.n_in_hull();
    let novel: Vec<Embedding> = (0..spec.n_novel)
        .map(|k| {
            if k < n_in_hull {
                in_hull_embedding(&mut rng, &base, spec.hull_jitter)
            } else {
                random_unit(&mut rng, m)
            }
        })
        .collect();

    let scale = 1.0 / (m as f64).sqrt();
    let projection: Vec<f64> = (0..f * m)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();

    let mut records = Vec::with_capacity(spec.n_base + spec.n_novel);
    for (k, e) in base.into_iter().enumerate() {
        records.push(ClassRecord {
            id: k as u32,
            name: format!("base_{k:02}"),
            group: Group::Base,
            text_embedding: e,
        });
    }
    for (k, e) in novel.into_iter().enumerate() {
        records.push(ClassRecord {
            id: (spec.n_base + k) as u32,
            name: format!("novel_{k:02}"),
            group: Group::Novel,
            text_embedding: e,
        });
    }
    let registry = ClassRegistry::new(m, records)?;

    let clean: Vec<Vec<f64>> = registry
        .records()
        .iter()
        .map(|r| apply_projection(&projection, f, &r.text_embedding))
        .collect();

    let mut train = Vec::with_capacity(spec.n_base * spec.samples_per_class);
    for (rec, clean) in registry.records().iter().zip(&clean) {
        if rec.group != Group::Base {
            continue;
        }
        for _ in 0..spec.samples_per_class {
            train.push(draw_sample(&mut rng, rec.id, clean, spec.quality_noise_coupling));
        }
    }
    let mut eval = Vec::with_capacity(registry.len() * spec.samples_per_class);
    for (rec, clean) in registry.records().iter().zip(&clean) {
        for _ in 0..spec.samples_per_class {
            eval.push(draw_sample(&mut rng, rec.id, clean, spec.quality_noise_coupling));
        }
    }

    Ok(Benchmark {
        registry,
        train: SampleSet {
            feature_dim: f,
            samples: train,
        },
        eval: SampleSet {
            feature_dim: f,
            samples: eval,
        },
        projection,
    })
}

/// A noisy copy of a class text embedding, standing in for an image-encoder
/// teacher in the distillation baseline.
pub fn distill_teacher(text: &[f64], sigma: f64, rng: &mut Rng) -> Result<Embedding> {
    let noisy: Vec<f64> = text
        .iter()
        .map(|t| t + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    l2_normalize(&noisy)
}
