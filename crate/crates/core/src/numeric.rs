//! Dense math primitives: normalization, softmax, entropy and the zero-shot
//! classifier head.

use crate::error::{Result, TdaError};
use crate::scalar::{dot, dot_rows, widen, Scalar};

/// Default multiplier applied to cosine similarities before softmax.
pub const DEFAULT_LOGIT_SCALE: f64 = 100.0;

/// A unit-norm embedding. Used both as the query type and as cache key.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector<S: Scalar> {
    values: Vec<S>,
}

impl<S: Scalar> FeatureVector<S> {
    /// Wraps values that are already unit-norm (within `tolerance`) without
    /// touching their bits; otherwise normalizes.
    pub fn new_normalized(values: Vec<S>, tolerance: f64) -> Result<Self> {
        check_finite(&values)?;
        let norm = dot(&values, &values).sqrt();
        if norm == 0.0 {
            return Err(zero_vector());
        }
        if (norm - 1.0).abs() <= tolerance {
            Ok(Self { values })
        } else {
            l2_normalize(&values)
        }
    }

    pub fn as_slice(&self) -> &[S] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn into_vec(self) -> Vec<S> {
        self.values
    }

    /// Cosine similarity (plain dot product, both sides unit-norm).
    pub fn similarity(&self, other: &Self) -> f64 {
        dot(&self.values, &other.values)
    }
}

/// Unnormalized class scores, always `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVector(Vec<f64>);

impl LogitVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(TdaError::InvalidFeature {
                record: None,
                reason: "non-finite logit".into(),
            });
        }
        Ok(Self(values))
    }

    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Class probabilities summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector(Vec<f64>);

impl ProbabilityVector {
    /// Validates entries in `[0, 1]` and a total within 1e-6 of one.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0) {
            return Err(TdaError::InvalidFeature {
                record: None,
                reason: "probability outside [0, 1]".into(),
            });
        }
        let total: f64 = values.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(TdaError::InvalidFeature {
                record: None,
                reason: format!("probabilities sum to {total}"),
            });
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Most probable class; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn check_finite<S: Scalar>(values: &[S]) -> Result<()> {
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(TdaError::InvalidFeature {
            record: None,
            reason: format!("non-finite entry at coordinate {i}"),
        });
    }
    Ok(())
}

fn zero_vector() -> TdaError {
    TdaError::InvalidFeature {
        record: None,
        reason: "zero vector cannot be normalized".into(),
    }
}

pub fn l2_normalize<S: Scalar>(v: &[S]) -> Result<FeatureVector<S>> {
    if v.is_empty() {
        return Err(TdaError::InvalidFeature {
            record: None,
            reason: "empty vector".into(),
        });
    }
    check_finite(v)?;
    let norm = dot(v, v).sqrt();
    if norm == 0.0 {
        return Err(zero_vector());
    }
    let values = v
        .iter()
        .map(|x| S::from_f64_lossy(x.as_f64() / norm))
        .collect();
    Ok(FeatureVector { values })
}

/// Max-subtracted softmax.
pub fn softmax(logits: &LogitVector) -> ProbabilityVector {
    ProbabilityVector(softmax_slice(logits.as_slice()))
}

pub(crate) fn softmax_slice(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = out.iter().sum();
    for p in &mut out {
        *p /= total;
    }
    out
}

/// Shannon entropy divided by `ln(N)`, so the result lies in `[0, 1]`.
pub fn normalized_entropy(p: &ProbabilityVector) -> Result<f64> {
    let n = p.len();
    if n < 2 {
        return Err(TdaError::InvalidDimension(format!(
            "entropy needs at least 2 classes, got {n}"
        )));
    }
    Ok(entropy_slice(p.as_slice()))
}

pub(crate) fn entropy_slice(p: &[f64]) -> f64 {
    let h: f64 = p
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| -x * x.ln())
        .sum();
    (h / (p.len() as f64).ln()).clamp(0.0, 1.0)
}

/// The frozen zero-shot classifier: an `N x D` matrix of text embeddings
/// (row-major) and the logit scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead<S: Scalar> {
    weights: Vec<S>,
    num_classes: usize,
    dim: usize,
    logit_scale: f64,
}

impl<S: Scalar> ClassifierHead<S> {
    pub fn new(weights: Vec<S>, dim: usize, logit_scale: f64) -> Result<Self> {
        if dim == 0 || weights.is_empty() || !weights.len().is_multiple_of(dim) {
            return Err(TdaError::InvalidDimension(format!(
                "{} weights do not form rows of width {dim}",
                weights.len()
            )));
        }
        check_finite(&weights)?;
        if !(logit_scale.is_finite() && logit_scale > 0.0) {
            return Err(TdaError::config("logit_scale", "must be positive and finite"));
        }
        let num_classes = weights.len() / dim;
        Ok(Self {
            weights,
            num_classes,
            dim,
            logit_scale,
        })
    }

    pub fn from_rows(rows: &[FeatureVector<S>], logit_scale: f64) -> Result<Self> {
        let dim = rows.first().map(|r| r.dim()).unwrap_or(0);
        if let Some(bad) = rows.iter().find(|r| r.dim() != dim) {
            return Err(TdaError::DimensionMismatch {
                expected: dim,
                actual: bad.dim(),
            });
        }
        let weights = rows.iter().flat_map(|r| r.as_slice().iter().copied()).collect();
        Self::new(weights, dim, logit_scale)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn logit_scale(&self) -> f64 {
        self.logit_scale
    }

    pub fn with_logit_scale(mut self, logit_scale: f64) -> Result<Self> {
        if !(logit_scale.is_finite() && logit_scale > 0.0) {
            return Err(TdaError::config("logit_scale", "must be positive and finite"));
        }
        self.logit_scale = logit_scale;
        Ok(self)
    }

    pub fn row(&self, class: usize) -> &[S] {
        &self.weights[class * self.dim..(class + 1) * self.dim]
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    /// `out[c] = logit_scale * (query . row_c)` for a widened query.
    pub(crate) fn logits_into(&self, query: &[f64], out: &mut [f64]) {
        let scale = self.logit_scale;
        dot_rows(query, &self.weights, |c, v| out[c] = scale * v);
    }

    fn check_dim(&self, f: &FeatureVector<S>) -> Result<()> {
        if f.dim() != self.dim {
            return Err(TdaError::DimensionMismatch {
                expected: self.dim,
                actual: f.dim(),
            });
        }
        Ok(())
    }
}

/// `logit_scale * (f . W^T)`.
pub fn base_logits<S: Scalar>(f: &FeatureVector<S>, head: &ClassifierHead<S>) -> Result<LogitVector> {
    head.check_dim(f)?;
    let mut out = vec![0.0; head.num_classes()];
    head.logits_into(&widen(f.as_slice()), &mut out);
    Ok(LogitVector(out))
}
