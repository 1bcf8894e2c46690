//! Single-writer streaming state: the frozen head plus the two caches.

use crate::adapter::{add_cache_term, Sign};
use crate::cache::{
    negative_gate, negative_mask_classes, CacheEntry, CacheMatrices, CacheValue, DynamicCache,
    RejectReason, UpdateOutcome,
};
use crate::config::{TdaConfig, UpdateOrder};
use crate::error::{Result, TdaError};
use crate::numeric::{argmax, entropy_slice, softmax_slice, ClassifierHead, FeatureVector, LogitVector};
use crate::adapter::{adaptation, AdapterParams};
use crate::scalar::{dot_mixed, dot_tile, widen, Scalar};

/// Which caches a stream maintains and reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheArms {
    pub positive: bool,
    pub negative: bool,
}

impl CacheArms {
    pub const FULL: Self = Self {
        positive: true,
        negative: true,
    };
    pub const POSITIVE: Self = Self {
        positive: true,
        negative: false,
    };
    pub const NEGATIVE: Self = Self {
        positive: false,
        negative: true,
    };
    pub const NONE: Self = Self {
        positive: false,
        negative: false,
    };
}

/// Outcome of one cache update attempt, without the evicted payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateKind {
    Inserted,
    Replaced,
    Rejected(RejectReason),
}

impl<S: Scalar> From<&UpdateOutcome<S>> for UpdateKind {
    fn from(o: &UpdateOutcome<S>) -> Self {
        match o {
            UpdateOutcome::Inserted => UpdateKind::Inserted,
            UpdateOutcome::Replaced(_) => UpdateKind::Replaced,
            UpdateOutcome::Rejected(r) => UpdateKind::Rejected(*r),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Step {
    /// Fused logits.
    pub logits: LogitVector,
    /// Argmax of the fused logits.
    pub prediction: usize,
    /// Argmax of the base prediction.
    pub pseudo_label: usize,
    /// Normalized entropy of the base prediction.
    pub entropy: f64,
    pub arrival: u64,
    pub positive: Option<UpdateKind>,
    pub negative: Option<UpdateKind>,
}

#[derive(Debug, Clone)]
pub struct TdaEngine<S: Scalar> {
    head: ClassifierHead<S>,
    cfg: TdaConfig,
    arms: CacheArms,
    pos: DynamicCache<S>,
    neg: DynamicCache<S>,
    updates_enabled: bool,
    next_arrival: u64,
}

impl<S: Scalar> TdaEngine<S> {
    /// Both caches, empty. The head is rescaled to `cfg.logit_scale`.
    pub fn new(head: ClassifierHead<S>, cfg: TdaConfig) -> Result<Self> {
        Self::with_arms(head, cfg, CacheArms::FULL)
    }

    pub fn with_arms(head: ClassifierHead<S>, cfg: TdaConfig, arms: CacheArms) -> Result<Self> {
        cfg.validate()?;
        let head = head.with_logit_scale(cfg.logit_scale)?;
        let (n, d) = (head.num_classes(), head.dim());
        if n < 2 {
            return Err(TdaError::InvalidDimension(format!(
                "need at least 2 classes, got {n}"
            )));
        }
        Ok(Self {
            pos: DynamicCache::new(n, d, cfg.pos_capacity)?,
            neg: DynamicCache::new(n, d, cfg.neg_capacity)?,
            head,
            cfg,
            arms,
            updates_enabled: true,
            next_arrival: 0,
        })
    }

    pub fn head(&self) -> &ClassifierHead<S> {
        &self.head
    }

    pub fn config(&self) -> &TdaConfig {
        &self.cfg
    }

    pub fn arms(&self) -> CacheArms {
        self.arms
    }

    pub fn positive_cache(&self) -> &DynamicCache<S> {
        &self.pos
    }

    pub fn negative_cache(&self) -> &DynamicCache<S> {
        &self.neg
    }

    /// With updates disabled the caches are frozen and [`step`](Self::step)
    /// only predicts.
    pub fn set_updates_enabled(&mut self, enabled: bool) {
        self.updates_enabled = enabled;
    }

    /// Seeds the positive cache with labeled one-hot rows, e.g. a few-shot
    /// support set. Each row is stored under its label with the entropy of
    /// the head's prediction on its key; the normal insert/replace rule
    /// applies.
    pub fn preload_positive(&mut self, support: &CacheMatrices<S>) -> Result<()> {
        if support.dim() != self.head.dim() || support.num_classes() != self.head.num_classes() {
            return Err(TdaError::DimensionMismatch {
                expected: self.head.dim(),
                actual: support.dim(),
            });
        }
        let mut logits = vec![0.0; self.head.num_classes()];
        for i in 0..support.rows() {
            let value = CacheValue::from_dense(support.value_row(i))?;
            let CacheValue::OneHot(class) = value else {
                return Err(TdaError::InvalidEntry(format!(
                    "support row {i} is not a one-hot label"
                )));
            };
            let key = FeatureVector::new_normalized(support.key_row(i).to_vec(), 1e-3)?;
            self.head.logits_into(&widen(key.as_slice()), &mut logits);
            let entropy = entropy_slice(&softmax_slice(&logits));
            let arrival = self.take_arrival();
            self.pos.update(
                class,
                CacheEntry {
                    key,
                    value,
                    entropy,
                    arrival,
                },
            )?;
        }
        Ok(())
    }

    fn take_arrival(&mut self) -> u64 {
        let a = self.next_arrival;
        self.next_arrival += 1;
        a
    }

    /// Processes one stream sample: base prediction, cache updates and the
    /// adapted prediction, ordered by `cfg.update_order`.
    pub fn step(&mut self, f: &FeatureVector<S>) -> Result<Step> {
        if f.dim() != self.head.dim() {
            return Err(TdaError::DimensionMismatch {
                expected: self.head.dim(),
                actual: f.dim(),
            });
        }
        let query = widen(f.as_slice());
        let mut logits = vec![0.0; self.head.num_classes()];
        self.head.logits_into(&query, &mut logits);
        let probs = softmax_slice(&logits);
        let entropy = entropy_slice(&probs);
        let pseudo_label = argmax(&probs);
        let arrival = self.take_arrival();

        let (mut positive, mut negative) = (None, None);
        let update_first = self.cfg.update_order == UpdateOrder::UpdateThenPredict;
        if update_first && self.updates_enabled {
            [positive, negative] = self.update_caches(f, &probs, entropy, pseudo_label, arrival).map(|(k, _)| k);
        }
        self.add_cache_terms(&query, &mut logits);
        if !update_first && self.updates_enabled {
            [positive, negative] = self.update_caches(f, &probs, entropy, pseudo_label, arrival).map(|(k, _)| k);
        }

        let prediction = argmax(&logits);
        Ok(Step {
            logits: LogitVector::from_raw(logits),
            prediction,
            pseudo_label,
            entropy,
            arrival,
            positive,
            negative,
        })
    }

    /// Adapted prediction against the current caches, without updating.
    pub fn predict(&self, f: &FeatureVector<S>) -> Result<LogitVector> {
        if f.dim() != self.head.dim() {
            return Err(TdaError::DimensionMismatch {
                expected: self.head.dim(),
                actual: f.dim(),
            });
        }
        let query = widen(f.as_slice());
        let mut logits = vec![0.0; self.head.num_classes()];
        self.head.logits_into(&query, &mut logits);
        self.add_cache_terms(&query, &mut logits);
        Ok(LogitVector::from_raw(logits))
    }

    /// Each enabled cache term is accumulated from zero, then added to the
    /// logits.
    fn add_cache_terms(&self, query: &[f64], logits: &mut [f64]) {
        let mut term = vec![0.0; logits.len()];
        if self.arms.positive {
            add_cache_term(query, &self.pos, &self.cfg.pos_params, Sign::Positive, &mut term);
            add_into(logits, &mut term);
        }
        if self.arms.negative {
            add_cache_term(query, &self.neg, &self.cfg.neg_params, Sign::Negative, &mut term);
            add_into(logits, &mut term);
        }
    }

    /// Positive then negative update. Each element carries the outcome (when
    /// that arm is enabled) and the slab slot written.
    fn update_caches(
        &mut self,
        f: &FeatureVector<S>,
        probs: &[f64],
        entropy: f64,
        class: usize,
        arrival: u64,
    ) -> [(Option<UpdateKind>, Option<usize>); 2] {
        let mut positive = (None, None);
        if self.arms.positive {
            let entry = CacheEntry {
                key: f.clone(),
                value: CacheValue::OneHot(class),
                entropy,
                arrival,
            };
            let (outcome, slot) = self.pos.update_slot(class, entry);
            positive = (Some(UpdateKind::from(&outcome)), slot);
        }
        let mut negative = (None, None);
        if self.arms.negative {
            negative = if !negative_gate(entropy, self.cfg.entropy_low, self.cfg.entropy_high) {
                (Some(UpdateKind::Rejected(RejectReason::OutsideEntropyGate)), None)
            } else {
                let mask = negative_mask_classes(probs, self.cfg.mask_threshold);
                if mask.is_empty() {
                    (Some(UpdateKind::Rejected(RejectReason::VacuousMask)), None)
                } else {
                    let entry = CacheEntry {
                        key: f.clone(),
                        value: CacheValue::NegativeMask(mask),
                        entropy,
                        arrival,
                    };
                    let (outcome, slot) = self.neg.update_slot(class, entry);
                    (Some(UpdateKind::from(&outcome)), slot)
                }
            };
        }
        [positive, negative]
    }

    /// Processes consecutive stream samples; the result is identical, bit for
    /// bit, to calling [`step`](Self::step) on each in order.
    ///
    /// Head logits and affinities to the cache contents present at the start
    /// of the block are computed for all samples at once. Slots written
    /// during the block are re-scored per sample.
    pub fn step_block(&mut self, fs: &[&FeatureVector<S>]) -> Result<Vec<Step>> {
        let d = self.head.dim();
        if let Some(bad) = fs.iter().find(|f| f.dim() != d) {
            return Err(TdaError::DimensionMismatch {
                expected: d,
                actual: bad.dim(),
            });
        }
        let n = self.head.num_classes();
        let mut queries = Vec::with_capacity(fs.len() * d);
        for f in fs {
            queries.extend(f.as_slice().iter().map(|x| x.as_f64()));
        }
        let mut base = vec![0.0; fs.len() * n];
        dot_tile(&queries, d, self.head.weights(), &mut base);
        let mut pos = Affinities::new(&queries, &self.pos, self.arms.positive);
        let mut neg = Affinities::new(&queries, &self.neg, self.arms.negative);

        let scale = self.head.logit_scale();
        let update_first = self.cfg.update_order == UpdateOrder::UpdateThenPredict;
        let mut steps = Vec::with_capacity(fs.len());
        let mut term = vec![0.0; n];
        for (b, f) in fs.iter().enumerate() {
            let query = &queries[b * d..(b + 1) * d];
            let mut logits: Vec<f64> = base[b * n..(b + 1) * n].iter().map(|v| scale * v).collect();
            let probs = softmax_slice(&logits);
            let entropy = entropy_slice(&probs);
            let pseudo_label = argmax(&probs);
            let arrival = self.take_arrival();

            let mut kinds = [None, None];
            if update_first && self.updates_enabled {
                kinds = self.block_update(f, &probs, entropy, pseudo_label, arrival, &mut pos, &mut neg);
            }
            if self.arms.positive {
                pos.add_term(b, query, &self.pos, &self.cfg.pos_params, Sign::Positive, &mut term);
                add_into(&mut logits, &mut term);
            }
            if self.arms.negative {
                neg.add_term(b, query, &self.neg, &self.cfg.neg_params, Sign::Negative, &mut term);
                add_into(&mut logits, &mut term);
            }
            if !update_first && self.updates_enabled {
                kinds = self.block_update(f, &probs, entropy, pseudo_label, arrival, &mut pos, &mut neg);
            }

            let prediction = argmax(&logits);
            steps.push(Step {
                logits: LogitVector::from_raw(logits),
                prediction,
                pseudo_label,
                entropy,
                arrival,
                positive: kinds[0],
                negative: kinds[1],
            });
        }
        Ok(steps)
    }

    #[allow(clippy::too_many_arguments)]
    fn block_update(
        &mut self,
        f: &FeatureVector<S>,
        probs: &[f64],
        entropy: f64,
        class: usize,
        arrival: u64,
        pos: &mut Affinities,
        neg: &mut Affinities,
    ) -> [Option<UpdateKind>; 2] {
        let [(p, p_slot), (q, q_slot)] = self.update_caches(f, probs, entropy, class, arrival);
        pos.touch(p_slot);
        neg.touch(q_slot);
        [p, q]
    }
}

/// `logits += term`, leaving `term` zeroed for reuse.
fn add_into(logits: &mut [f64], term: &mut [f64]) {
    for (l, t) in logits.iter_mut().zip(term.iter_mut()) {
        *l += *t;
        *t = 0.0;
    }
}

/// Affinities of a block of queries to the slots a cache held when the
/// block started, plus which of those slots have since been overwritten.
struct Affinities {
    z: Vec<f64>,
    rows: usize,
    stale: Vec<bool>,
}

impl Affinities {
    fn new<S: Scalar>(queries: &[f64], cache: &DynamicCache<S>, enabled: bool) -> Self {
        let rows = if enabled { cache.len() } else { 0 };
        let mut z = vec![0.0; queries.len() / cache.dim() * rows];
        if rows > 0 {
            dot_tile(queries, cache.dim(), cache.slab().0, &mut z);
        }
        Self {
            z,
            rows,
            stale: vec![false; rows],
        }
    }

    fn touch(&mut self, slot: Option<usize>) {
        if let Some(s) = slot.filter(|&s| s < self.rows) {
            self.stale[s] = true;
        }
    }

    /// Same accumulation, in the same slot order, as the live cache term.
    fn add_term<S: Scalar>(
        &self,
        b: usize,
        query: &[f64],
        cache: &DynamicCache<S>,
        params: &AdapterParams,
        sign: Sign,
        out: &mut [f64],
    ) {
        let (keys, slots) = cache.slab();
        let dim = cache.dim();
        let pre = &self.z[b * self.rows..(b + 1) * self.rows];
        let s = sign.value();
        for (i, slot) in slots.iter().enumerate() {
            let z = if i < self.rows && !self.stale[i] {
                pre[i]
            } else {
                dot_mixed(query, &keys[i * dim..(i + 1) * dim])
            };
            slot.value.accumulate(s * adaptation(z, params), out);
        }
    }
}
