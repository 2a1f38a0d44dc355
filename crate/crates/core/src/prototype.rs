//! Class prototypes: weighted averages of a class's region embeddings,
//! renormalized. Weights are uniform (centroid) or a softmax over a proposal
//! quality score (IoU or objectness).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::embedding::{l2_normalize, Embedding};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightingMode {
    Centroid,
    SoftmaxIou,
    SoftmaxObjectness,
}

impl WeightingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            WeightingMode::Centroid => "centroid",
            WeightingMode::SoftmaxIou => "softmax_iou",
            WeightingMode::SoftmaxObjectness => "softmax_objectness",
        }
    }
}

impl std::str::FromStr for WeightingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "centroid" => Ok(WeightingMode::Centroid),
            "softmax_iou" | "iou" => Ok(WeightingMode::SoftmaxIou),
            "softmax_objectness" | "objectness" => Ok(WeightingMode::SoftmaxObjectness),
            other => Err(Error::Config(format!("unknown weighting mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightingSpec {
    pub mode: WeightingMode,
    /// Softmax temperature; 1.0 is the plain `exp(φ)` form.
    pub temperature: f64,
}

impl Default for WeightingSpec {
    fn default() -> Self {
        Self {
            mode: WeightingMode::SoftmaxObjectness,
            temperature: 1.0,
        }
    }
}

impl WeightingSpec {
    pub fn new(mode: WeightingMode) -> Self {
        Self {
            mode,
            temperature: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::Config(format!(
                "weighting temperature must be > 0, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// A region embedding together with its proposal quality scores.
#[derive(Debug, Clone, Copy)]
pub struct RegionView<'a> {
    pub embedding: &'a [f64],
    pub iou: f64,
    pub objectness: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prototype {
    pub class_id: u32,
    pub embedding: Embedding,
    pub support: usize,
}

/// Per-region contribution weights; nonnegative and summing to one.
pub fn weights(regions: &[RegionView<'_>], spec: &WeightingSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    if regions.is_empty() {
        return Err(Error::EmptyClass { class_id: None });
    }
    let n = regions.len();
    let phi = |r: &RegionView<'_>| match spec.mode {
        WeightingMode::Centroid => 0.0,
        WeightingMode::SoftmaxIou => r.iou,
        WeightingMode::SoftmaxObjectness => r.objectness,
    };
    if spec.mode == WeightingMode::Centroid {
        return Ok(vec![1.0 / n as f64; n]);
    }
    let logits: Vec<f64> = regions.iter().map(|r| phi(r) / spec.temperature).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// `Σ wᵢ·rᵢ` in input order, before normalization.
pub(crate) fn weighted_sum(regions: &[RegionView<'_>], w: &[f64]) -> Vec<f64> {
    let dim = regions[0].embedding.len();
    let mut acc = vec![0.0; dim];
    for (r, &wk) in regions.iter().zip(w) {
        for (a, x) in acc.iter_mut().zip(r.embedding) {
            *a += wk * x;
        }
    }
    acc
}

pub fn build_prototype(
    class_id: u32,
    regions: &[RegionView<'_>],
    spec: &WeightingSpec,
) -> Result<Prototype> {
    let w = weights(regions, spec).map_err(|e| match e {
        Error::EmptyClass { .. } => Error::EmptyClass {
            class_id: Some(class_id),
        },
        other => other,
    })?;
    let dim = regions[0].embedding.len();
    if let Some(bad) = regions.iter().find(|r| r.embedding.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: bad.embedding.len(),
        });
    }
    let embedding = l2_normalize(&weighted_sum(regions, &w))?;
    Ok(Prototype {
        class_id,
        embedding,
        support: regions.len(),
    })
}

/// One prototype per class present in `labeled`; regions are accumulated in
/// the order given.
pub fn batch_prototypes(
    labeled: &[(u32, RegionView<'_>)],
    spec: &WeightingSpec,
) -> Result<BTreeMap<u32, Prototype>> {
    let mut groups: BTreeMap<u32, Vec<RegionView<'_>>> = BTreeMap::new();
    for (class_id, region) in labeled {
        groups.entry(*class_id).or_default().push(*region);
    }
    groups
        .into_iter()
        .map(|(class_id, regions)| Ok((class_id, build_prototype(class_id, &regions, spec)?)))
        .collect()
}
