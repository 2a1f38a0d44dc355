//! Proxy loss family, BCE region classification over base classes, and the
//! L1 distillation baseline. Every loss returns its value together with the
//! gradient with respect to its embedding argument(s).

use serde::{Deserialize, Serialize};

use crate::embedding::{check_dims, cosine_grad_wrt_first, cosine_sim, dot, l1_distance, l2_distance, l2_norm, NORM_EPS};
use crate::error::{Error, Result};
use crate::registry::{ClassRegistry, Group};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProxyVariant {
    L1,
    L2,
    Cosine,
}

impl ProxyVariant {
    pub const ALL: [ProxyVariant; 3] = [ProxyVariant::L1, ProxyVariant::L2, ProxyVariant::Cosine];

    pub fn as_str(self) -> &'static str {
        match self {
            ProxyVariant::L1 => "l1",
            ProxyVariant::L2 => "l2",
            ProxyVariant::Cosine => "cosine",
        }
    }
}

impl std::str::FromStr for ProxyVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(ProxyVariant::L1),
            "l2" => Ok(ProxyVariant::L2),
            "cosine" => Ok(ProxyVariant::Cosine),
            other => Err(Error::Config(format!("unknown proxy variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub proxy_variant: ProxyVariant,
    pub proxy_weight: f64,
    pub bce_logit_scale: f64,
    pub distill_weight: f64,
}

impl Default for LossSpec {
    fn default() -> Self {
        Self {
            proxy_variant: ProxyVariant::L1,
            proxy_weight: 1.0,
            bce_logit_scale: 50.0,
            distill_weight: 0.0,
        }
    }
}

impl LossSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        if !ok(self.proxy_weight) || !ok(self.distill_weight) {
            return Err(Error::Config("loss weights must be finite and >= 0".into()));
        }
        if !(self.bce_logit_scale.is_finite() && self.bce_logit_scale > 0.0) {
            return Err(Error::Config("bce_logit_scale must be > 0".into()));
        }
        Ok(())
    }
}

/// Loss value with gradients w.r.t. the visual and textual embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct PairLoss {
    pub value: f64,
    pub grad_visual: Vec<f64>,
    pub grad_text: Vec<f64>,
}

pub fn proxy_loss(text: &[f64], visual: &[f64], variant: ProxyVariant) -> Result<f64> {
    check_dims(text, visual)?;
    Ok(match variant {
        ProxyVariant::L1 => l1_distance(text, visual),
        ProxyVariant::L2 => l2_distance(text, visual),
        ProxyVariant::Cosine => 1.0 - cosine_sim(text, visual)?,
    })
}

pub fn proxy_loss_grad(text: &[f64], visual: &[f64], variant: ProxyVariant) -> Result<PairLoss> {
    let value = proxy_loss(text, visual, variant)?;
    let grad_visual: Vec<f64> = match variant {
        ProxyVariant::L1 => visual
            .iter()
            .zip(text)
            .map(|(r, t)| {
                let d = r - t;
                if d > 0.0 {
                    1.0
                } else if d < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            })
            .collect(),
        ProxyVariant::L2 => {
            if value <= NORM_EPS {
                vec![0.0; visual.len()]
            } else {
                visual.iter().zip(text).map(|(r, t)| (r - t) / value).collect()
            }
        }
        ProxyVariant::Cosine => cosine_grad_wrt_first(visual, text)
            .into_iter()
            .map(|g| -g)
            .collect(),
    };
    let grad_text = match variant {
        ProxyVariant::L1 | ProxyVariant::L2 => grad_visual.iter().map(|g| -g).collect(),
        ProxyVariant::Cosine => cosine_grad_wrt_first(text, visual)
            .into_iter()
            .map(|g| -g)
            .collect(),
    };
    Ok(PairLoss {
        value,
        grad_visual,
        grad_text,
    })
}

/// `‖region − teacher‖₁`.
pub fn distill_loss(region: &[f64], teacher: &[f64]) -> Result<f64> {
    proxy_loss(teacher, region, ProxyVariant::L1)
}

/// Value and gradient w.r.t. `region` of [`distill_loss`].
pub fn distill_loss_grad(region: &[f64], teacher: &[f64]) -> Result<(f64, Vec<f64>)> {
    let pl = proxy_loss_grad(teacher, region, ProxyVariant::L1)?;
    Ok((pl.value, pl.grad_visual))
}

/// Dense base-class text matrix used as the BCE classifier.
#[derive(Debug, Clone)]
pub struct BaseClassifier {
    ids: Vec<u32>,
    rows: Vec<Vec<f64>>,
    norms: Vec<f64>,
    dim: usize,
}

impl BaseClassifier {
    pub fn from_registry(registry: &ClassRegistry) -> Self {
        let (ids, rows): (Vec<u32>, Vec<Vec<f64>>) = registry
            .in_group(Group::Base)
            .map(|r| (r.id, r.text_embedding.to_vec()))
            .unzip();
        let norms = rows.iter().map(|r| l2_norm(r)).collect();
        Self {
            ids,
            rows,
            norms,
            dim: registry.dimension(),
        }
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    fn index_of(&self, id: u32) -> Option<usize> {
        self.ids.iter().position(|&c| c == id)
    }
}

#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + eˣ)` without overflow.
#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BceOutput {
    pub value: f64,
    pub grad: Vec<f64>,
}

/// Mean over base classes `c` of `BCE(σ(scale·cos(region, T_c)), 1[c = label])`.
pub fn bce_class_loss(
    region: &[f64],
    label: u32,
    classifier: &BaseClassifier,
    scale: f64,
) -> Result<BceOutput> {
    if region.len() != classifier.dim {
        return Err(Error::DimensionMismatch {
            expected: classifier.dim,
            actual: region.len(),
        });
    }
    let label_idx = classifier.index_of(label).ok_or(Error::UnknownClass(label))?;
    let rn = l2_norm(region);
    if rn <= NORM_EPS {
        return Err(Error::NearZeroNorm { norm: rn });
    }
    let k = classifier.len() as f64;
    let mut value = 0.0;
    // ∂cos/∂r = (T̂ − cos·r̂) / ‖r‖, so accumulate Σ dsₖ·T̂ₖ and Σ dsₖ·cosₖ.
    let mut toward_rows = vec![0.0; region.len()];
    let mut along_region = 0.0;
    for (c, (row, row_norm)) in classifier.rows.iter().zip(&classifier.norms).enumerate() {
        let cos = dot(region, row) / (rn * row_norm);
        let s = scale * cos;
        let y = if c == label_idx { 1.0 } else { 0.0 };
        value += softplus(s) - y * s;
        let ds = (logistic(s) - y) * scale / k;
        for (acc, t) in toward_rows.iter_mut().zip(row) {
            *acc += ds * t / row_norm;
        }
        along_region += ds * cos;
    }
    let grad = toward_rows
        .iter()
        .zip(region)
        .map(|(t, r)| (t - along_region * r / rn) / rn)
        .collect();
    Ok(BceOutput {
        value: value / k,
        grad,
    })
}
