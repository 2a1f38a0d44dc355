//! Proxy-novel synthesis: mixing-coefficient samplers, base-pair selection
//! and the convex combination of prototypes / text embeddings.

use rand::Rng as _;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::embedding::{check_dims, dot, l2_normalize, Embedding, NORM_EPS};
use crate::error::{Error, Result};
use crate::prototype::Prototype;
use crate::registry::{ClassRegistry, Group};
use crate::rng::Rng;

/// Number of points in the λ grid used by nearest-pair search: `{0, 0.01, …, 1}`.
pub const LAMBDA_GRID_POINTS: usize = 101;

/// Candidates must beat the incumbent by more than this to replace it, so
/// that mathematically tied candidates resolve to the lexicographically
/// smallest `(i, j, λ-index)`.
pub const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "param", rename_all = "snake_case")]
pub enum Sampler {
    Beta(f64),
    Bernoulli(f64),
    Fixed(f64),
}

impl Sampler {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Sampler::Beta(g) if !(g.is_finite() && g > 0.0) => {
                Err(Error::Config(format!("beta parameter must be > 0, got {g}")))
            }
            Sampler::Bernoulli(p) | Sampler::Fixed(p) if !(0.0..=1.0).contains(&p) => {
                Err(Error::Config(format!("sampler parameter must be in [0, 1], got {p}")))
            }
            _ => Ok(()),
        }
    }
}

impl std::fmt::Display for Sampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Sampler::Beta(g) => write!(f, "beta:{g}"),
            Sampler::Bernoulli(p) => write!(f, "bernoulli:{p}"),
            Sampler::Fixed(l) => write!(f, "fixed:{l}"),
        }
    }
}

impl std::str::FromStr for Sampler {
    type Err = Error;

    /// Parses `beta:G`, `bernoulli:P` or `fixed:L`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, param) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("sampler {s:?} is not of the form kind:value")))?;
        let value: f64 = param
            .parse()
            .map_err(|_| Error::Config(format!("bad sampler parameter {param:?}")))?;
        let sampler = match kind {
            "beta" => Sampler::Beta(value),
            "bernoulli" => Sampler::Bernoulli(value),
            "fixed" => Sampler::Fixed(value),
            other => return Err(Error::Config(format!("unknown sampler {other:?}"))),
        };
        sampler.validate()?;
        Ok(sampler)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairStrategy {
    Random,
    NovelNearest,
}

impl PairStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            PairStrategy::Random => "random",
            PairStrategy::NovelNearest => "novel-nearest",
        }
    }
}

impl std::str::FromStr for PairStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(PairStrategy::Random),
            "novel-nearest" | "novel_nearest" => Ok(PairStrategy::NovelNearest),
            other => Err(Error::Config(format!("unknown pair strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    ClassWise,
    InstanceWise,
}

impl Granularity {
    pub fn as_str(self) -> &'static str {
        match self {
            Granularity::ClassWise => "class",
            Granularity::InstanceWise => "instance",
        }
    }
}

impl std::str::FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "class" | "class_wise" | "class-wise" => Ok(Granularity::ClassWise),
            "instance" | "instance_wise" | "instance-wise" => Ok(Granularity::InstanceWise),
            other => Err(Error::Config(format!("unknown granularity {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixSpec {
    pub sampler: Sampler,
    pub pair_strategy: PairStrategy,
    pub pairs_per_batch: usize,
    pub granularity: Granularity,
}

impl Default for MixSpec {
    fn default() -> Self {
        Self {
            sampler: Sampler::Beta(1.0),
            pair_strategy: PairStrategy::Random,
            pairs_per_batch: 4,
            granularity: Granularity::ClassWise,
        }
    }
}

impl MixSpec {
    pub fn validate(&self) -> Result<()> {
        self.sampler.validate()?;
        if self.pairs_per_batch == 0 {
            return Err(Error::Config("pairs_per_batch must be >= 1".into()));
        }
        Ok(())
    }
}

/// Which two classes were mixed, and with what weight on the first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixSource {
    pub class_i: u32,
    pub class_j: u32,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxyPair {
    pub visual: Embedding,
    pub textual: Embedding,
    pub source: MixSource,
}

pub fn sample_lambda(sampler: &Sampler, rng: &mut Rng) -> f64 {
    match *sampler {
        Sampler::Beta(g) => Beta::new(g, g)
            .expect("validated beta parameter")
            .sample(rng)
            .clamp(0.0, 1.0),
        Sampler::Bernoulli(p) => {
            if rng.random_bool(p) {
                1.0
            } else {
                0.0
            }
        }
        Sampler::Fixed(l) => l,
    }
}

/// `V(λ·a + (1−λ)·b)`. The endpoints return the corresponding input verbatim.
pub fn mix_embeddings(a: &[f64], b: &[f64], lambda: f64) -> Result<Embedding> {
    check_dims(a, b)?;
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Config(format!("lambda {lambda} outside [0, 1]")));
    }
    if lambda == 1.0 {
        return l2_normalize(a);
    }
    if lambda == 0.0 {
        return l2_normalize(b);
    }
    let mixed: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| lambda * x + (1.0 - lambda) * y)
        .collect();
    l2_normalize(&mixed)
}

fn endpoint_or_mix(a: &Embedding, b: &Embedding, lambda: f64) -> Result<Embedding> {
    // Unit-norm inputs are returned untouched at the endpoints.
    if lambda == 1.0 && a.is_normalized() {
        check_dims(a, b)?;
        return Ok(a.clone());
    }
    if lambda == 0.0 && b.is_normalized() {
        check_dims(a, b)?;
        return Ok(b.clone());
    }
    mix_embeddings(a, b, lambda)
}

/// Class-wise mixup of two prototypes and their text embeddings.
pub fn mix_pair(
    proto_i: &Prototype,
    proto_j: &Prototype,
    text_i: &Embedding,
    text_j: &Embedding,
    lambda: f64,
) -> Result<ProxyPair> {
    if proto_i.class_id == proto_j.class_id {
        return Err(Error::Config(format!(
            "cannot mix class {} with itself",
            proto_i.class_id
        )));
    }
    Ok(ProxyPair {
        visual: endpoint_or_mix(&proto_i.embedding, &proto_j.embedding, lambda)?,
        textual: endpoint_or_mix(text_i, text_j, lambda)?,
        source: MixSource {
            class_i: proto_i.class_id,
            class_j: proto_j.class_id,
            lambda,
        },
    })
}

/// Instance-wise mixup of two individual region embeddings.
pub fn instance_mixup(
    region_a: &Embedding,
    class_i: u32,
    region_b: &Embedding,
    class_j: u32,
    text_i: &Embedding,
    text_j: &Embedding,
    lambda: f64,
) -> Result<ProxyPair> {
    if class_i == class_j {
        return Err(Error::Config(format!("cannot mix class {class_i} with itself")));
    }
    Ok(ProxyPair {
        visual: endpoint_or_mix(region_a, region_b, lambda)?,
        textual: endpoint_or_mix(text_i, text_j, lambda)?,
        source: MixSource {
            class_i,
            class_j,
            lambda,
        },
    })
}

/// Result of the nearest-pair search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BestMix {
    pub class_i: u32,
    pub class_j: u32,
    pub lambda_index: usize,
    pub lambda: f64,
    pub similarity: f64,
}

pub fn lambda_at(index: usize) -> f64 {
    index as f64 / (LAMBDA_GRID_POINTS - 1) as f64
}

/// Finds the ordered pair `(i, j)` (`i ≠ j`) and grid λ maximizing
/// `cos(V(λ·Tᵢ + (1−λ)·Tⱼ), target)`. Candidates are visited in ascending
/// `(i, j, λ-index)` order; `candidates` must be sorted by class id.
///
/// Works on the Gram matrix: with `pₖ = Tₖ·t` and `gᵢⱼ = Tᵢ·Tⱼ` the cosine is
/// `(λpᵢ + μpⱼ) / (‖t‖·√(λ²gᵢᵢ + μ²gⱼⱼ + 2λμgᵢⱼ))`, `μ = 1 − λ`.
pub fn best_mix(candidates: &[(u32, &[f64])], target: &[f64]) -> Result<BestMix> {
    if candidates.len() < 2 {
        return Err(Error::InsufficientClasses(candidates.len()));
    }
    for (_, c) in candidates {
        check_dims(target, c)?;
    }
    let tn = dot(target, target).sqrt();
    if tn <= NORM_EPS {
        return Err(Error::NearZeroNorm { norm: tn });
    }
    let k = candidates.len();
    let proj: Vec<f64> = candidates.iter().map(|(_, c)| dot(c, target)).collect();
    let mut gram = vec![0.0; k * k];
    for a in 0..k {
        for b in a..k {
            let g = dot(candidates[a].1, candidates[b].1);
            gram[a * k + b] = g;
            gram[b * k + a] = g;
        }
    }
    let mut best: Option<BestMix> = None;
    for a in 0..k {
        for b in 0..k {
            if a == b {
                continue;
            }
            let (gaa, gbb, gab) = (gram[a * k + a], gram[b * k + b], gram[a * k + b]);
            for idx in 0..LAMBDA_GRID_POINTS {
                let l = lambda_at(idx);
                let m = 1.0 - l;
                let sq = l * l * gaa + m * m * gbb + 2.0 * l * m * gab;
                if sq <= NORM_EPS * NORM_EPS {
                    continue;
                }
                let sim = ((l * proj[a] + m * proj[b]) / (tn * sq.sqrt())).clamp(-1.0, 1.0);
                if best.is_none_or(|b| sim > b.similarity + TIE_EPS) {
                    best = Some(BestMix {
                        class_i: candidates[a].0,
                        class_j: candidates[b].0,
                        lambda_index: idx,
                        lambda: l,
                        similarity: sim,
                    });
                }
            }
        }
    }
    best.ok_or(Error::NearZeroNorm { norm: 0.0 })
}

/// Chooses `pairs_per_batch` base pairs among `present` classes.
///
/// `Random`: per pair draw `i`, then `j ≠ i`, then λ. `NovelNearest`: per
/// pair draw one target index uniformly, then return its [`best_mix`].
pub fn select_pairs(
    present: &[u32],
    registry: &ClassRegistry,
    spec: &MixSpec,
    novel_targets: Option<&[Embedding]>,
    rng: &mut Rng,
) -> Result<Vec<MixSource>> {
    spec.validate()?;
    let mut present: Vec<u32> = present.to_vec();
    present.sort_unstable();
    present.dedup();
    for &id in &present {
        let rec = registry.get(id).ok_or(Error::UnknownClass(id))?;
        if rec.group != Group::Base {
            return Err(Error::Config(format!("class {id} is not a base class")));
        }
    }
    if present.len() < 2 {
        return Err(Error::InsufficientClasses(present.len()));
    }
    match spec.pair_strategy {
        PairStrategy::Random => Ok((0..spec.pairs_per_batch)
            .map(|_| {
                let a = rng.random_range(0..present.len());
                let mut b = rng.random_range(0..present.len() - 1);
                if b >= a {
                    b += 1;
                }
                MixSource {
                    class_i: present[a],
                    class_j: present[b],
                    lambda: sample_lambda(&spec.sampler, rng),
                }
            })
            .collect()),
        PairStrategy::NovelNearest => {
            let targets = novel_targets
                .filter(|t| !t.is_empty())
                .ok_or(Error::MissingTargets)?;
            let candidates: Vec<(u32, &[f64])> = present
                .iter()
                .map(|&id| Ok((id, registry.text(id)?.as_slice())))
                .collect::<Result<_>>()?;
            (0..spec.pairs_per_batch)
                .map(|_| {
                    let t = &targets[rng.random_range(0..targets.len())];
                    let best = best_mix(&candidates, t)?;
                    Ok(MixSource {
                        class_i: best.class_i,
                        class_j: best.class_j,
                        lambda: best.lambda,
                    })
                })
                .collect()
        }
    }
}
