//! Cache retrieval and prediction fusion.
//!
//! A cache contributes `sign * A(f . K^T) . V` to the class logits, where
//! `A(z) = alpha * exp(-beta * (1 - z))` turns cosine affinities into weights,
//! `K` are the cached keys and `V` their label vectors. The adapted
//! prediction is `base + positive + negative`, with sign `+1` for the positive
//! cache and `-1` for the negative cache.

use crate::cache::{CacheMatrices, DynamicCache};
use crate::config::TdaConfig;
use crate::error::{Result, TdaError};
use crate::numeric::{base_logits, ClassifierHead, FeatureVector, LogitVector};
use crate::scalar::{dot, dot_rows, widen, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdapterParams {
    /// Residual ratio: weight of the cache term relative to the base logits.
    pub alpha: f64,
    /// Sharpness ratio: how fast weights decay as affinity drops.
    pub beta: f64,
}

impl Default for AdapterParams {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            beta: 5.0,
        }
    }
}

impl AdapterParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let p = Self { alpha, beta };
        if !(alpha.is_finite() && alpha > 0.0 && beta.is_finite() && beta > 0.0) {
            return Err(TdaError::config("alpha/beta", "must be positive and finite"));
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Positive,
    Negative,
}

impl Sign {
    #[inline]
    pub fn value(self) -> f64 {
        match self {
            Sign::Positive => 1.0,
            Sign::Negative => -1.0,
        }
    }
}

#[inline]
pub fn adaptation(z: f64, params: &AdapterParams) -> f64 {
    params.alpha * (-params.beta * (1.0 - z)).exp()
}

/// Elementwise [`adaptation`].
pub fn adaptation_all(z: &[f64], params: &AdapterParams) -> Vec<f64> {
    z.iter().map(|&x| adaptation(x, params)).collect()
}

/// `sign * A(f . keys^T) . values` over a dense snapshot. An empty snapshot
/// yields zero logits.
pub fn cache_prediction<S: Scalar>(
    f: &FeatureVector<S>,
    m: &CacheMatrices<S>,
    params: &AdapterParams,
    sign: Sign,
) -> Result<LogitVector> {
    if f.dim() != m.dim() {
        return Err(TdaError::DimensionMismatch {
            expected: m.dim(),
            actual: f.dim(),
        });
    }
    let mut out = vec![0.0; m.num_classes()];
    for i in 0..m.rows() {
        let w = sign.value() * adaptation(dot(f.as_slice(), m.key_row(i)), params);
        for (o, v) in out.iter_mut().zip(m.value_row(i)) {
            *o += w * v;
        }
    }
    Ok(LogitVector::from_raw(out))
}

/// Adds the retrieval term of a live cache into `out` for a widened query,
/// using the cache's sparse label storage.
#[inline]
pub(crate) fn add_cache_term<S: Scalar>(
    query: &[f64],
    cache: &DynamicCache<S>,
    params: &AdapterParams,
    sign: Sign,
    out: &mut [f64],
) {
    let (keys, slots) = cache.slab();
    let s = sign.value();
    dot_rows(query, keys, |i, z| slots[i].value.accumulate(s * adaptation(z, params), out));
}

/// Retrieval term of a live cache, without building matrices.
pub fn dynamic_cache_prediction<S: Scalar>(
    f: &FeatureVector<S>,
    cache: &DynamicCache<S>,
    params: &AdapterParams,
    sign: Sign,
) -> Result<LogitVector> {
    if f.dim() != cache.dim() {
        return Err(TdaError::DimensionMismatch {
            expected: cache.dim(),
            actual: f.dim(),
        });
    }
    let mut out = vec![0.0; cache.num_classes()];
    add_cache_term(&widen(f.as_slice()), cache, params, sign, &mut out);
    Ok(LogitVector::from_raw(out))
}

/// Fused prediction: base logits plus positive and negative cache terms,
/// each term summed on its own before being added.
///
/// The base term uses the head's own logit scale.
pub fn tda_predict<S: Scalar>(
    f: &FeatureVector<S>,
    head: &ClassifierHead<S>,
    pos: &DynamicCache<S>,
    neg: &DynamicCache<S>,
    cfg: &TdaConfig,
) -> Result<LogitVector> {
    for cache in [pos, neg] {
        if cache.num_classes() != head.num_classes() {
            return Err(TdaError::DimensionMismatch {
                expected: head.num_classes(),
                actual: cache.num_classes(),
            });
        }
    }
    let mut logits = base_logits(f, head)?;
    if pos.dim() != f.dim() || neg.dim() != f.dim() {
        return Err(TdaError::DimensionMismatch {
            expected: f.dim(),
            actual: if pos.dim() != f.dim() { pos.dim() } else { neg.dim() },
        });
    }
    let query = widen(f.as_slice());
    for (cache, params, sign) in [(pos, &cfg.pos_params, Sign::Positive), (neg, &cfg.neg_params, Sign::Negative)] {
        let mut term = vec![0.0; head.num_classes()];
        add_cache_term(&query, cache, params, sign, &mut term);
        for (l, t) in logits.as_mut_slice().iter_mut().zip(&term) {
            *l += t;
        }
    }
    Ok(logits)
}

/// Static-cache baseline: base logits plus the retrieval term of a labeled
/// support set.
pub fn tip_adapter_predict<S: Scalar>(
    f: &FeatureVector<S>,
    head: &ClassifierHead<S>,
    support: &CacheMatrices<S>,
    params: &AdapterParams,
) -> Result<LogitVector> {
    if support.num_classes() != head.num_classes() {
        return Err(TdaError::DimensionMismatch {
            expected: head.num_classes(),
            actual: support.num_classes(),
        });
    }
    let cache = cache_prediction(f, support, params, Sign::Positive)?;
    let mut logits = base_logits(f, head)?;
    for (l, c) in logits.as_mut_slice().iter_mut().zip(cache.as_slice()) {
        *l += c;
    }
    Ok(logits)
}

/// Zero-shot baseline; identical to [`base_logits`].
pub fn zero_shot_predict<S: Scalar>(f: &FeatureVector<S>, head: &ClassifierHead<S>) -> Result<LogitVector> {
    base_logits(f, head)
}
