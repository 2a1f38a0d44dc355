//! Dense embedding vectors and the handful of primitives everything else is
//! built on: L2 normalization, cosine similarity and a few norms.

use std::ops::Deref;

use crate::error::{Error, Result};

/// Norms at or below this are treated as zero.
pub const NORM_EPS: f64 = 1e-12;

/// Slack allowed on `‖v‖₂ = 1` for an embedding flagged as normalized.
pub const UNIT_TOL: f64 = 1e-6;

/// A finite real vector, optionally flagged as unit length.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    values: Vec<f64>,
    normalized: bool,
}

impl Embedding {
    /// Wraps raw values without any normalization claim.
    pub fn raw(values: Vec<f64>) -> Result<Self> {
        check_finite(&values, "embedding")?;
        Ok(Self {
            values,
            normalized: false,
        })
    }

    /// Wraps values that must already be unit length (within [`UNIT_TOL`]).
    pub fn unit(values: Vec<f64>) -> Result<Self> {
        check_finite(&values, "embedding")?;
        let n = l2_norm(&values);
        if (n - 1.0).abs() > UNIT_TOL {
            return Err(Error::Schema(format!(
                "embedding flagged normalized has norm {n}"
            )));
        }
        Ok(Self {
            values,
            normalized: true,
        })
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }
}

impl Deref for Embedding {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.values
    }
}

impl AsRef<[f64]> for Embedding {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

pub(crate) fn check_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub(crate) fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(())
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn l2_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

pub fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// `v / ‖v‖₂`. Fails with [`Error::NearZeroNorm`] when `‖v‖₂ ≤ 1e-12`.
pub fn l2_normalize(v: &[f64]) -> Result<Embedding> {
    check_finite(v, "l2_normalize input")?;
    let n = l2_norm(v);
    if n <= NORM_EPS {
        return Err(Error::NearZeroNorm { norm: n });
    }
    Ok(Embedding {
        values: v.iter().map(|x| x / n).collect(),
        normalized: true,
    })
}

/// Cosine similarity, clamped into `[-1, 1]`.
pub fn cosine_sim(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dims(a, b)?;
    let na = l2_norm(a);
    let nb = l2_norm(b);
    if na <= NORM_EPS || nb <= NORM_EPS {
        return Err(Error::NearZeroNorm { norm: na.min(nb) });
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Gradient of the (unclamped) cosine similarity with respect to `a`:
/// `(b/‖b‖ − cos·a/‖a‖) / ‖a‖`.
pub(crate) fn cosine_grad_wrt_first(a: &[f64], b: &[f64]) -> Vec<f64> {
    let na = l2_norm(a);
    let nb = l2_norm(b);
    let c = dot(a, b) / (na * nb);
    a.iter()
        .zip(b)
        .map(|(x, y)| (y / nb - c * x / na) / na)
        .collect()
}

/// Back-propagates `grad_out` (taken w.r.t. `v/‖v‖`) to a gradient w.r.t. `v`.
/// `unit` must be `v/‖v‖` and `norm` must be `‖v‖`.
pub(crate) fn normalize_backward(unit: &[f64], norm: f64, grad_out: &[f64]) -> Vec<f64> {
    let proj = dot(unit, grad_out);
    unit.iter()
        .zip(grad_out)
        .map(|(u, g)| (g - u * proj) / norm)
        .collect()
}
