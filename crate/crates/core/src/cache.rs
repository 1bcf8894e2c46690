//! Per-class bounded key-value caches prioritized by prediction entropy.
//!
//! Each class owns a queue of at most `shot_capacity` entries. A new entry is
//! appended while its class has room; once full, it replaces the class's
//! highest-entropy entry only if its own entropy is strictly lower. After any
//! stream, a class therefore holds the `k` entries with the lowest
//! `(entropy, arrival)` among everything routed to it.
//!
//! Keys live in one contiguous slab so retrieval is a single pass over memory.
//! A replacement overwrites the evicted slot in place; slots are never freed.

use serde::{Deserialize, Serialize};

use crate::config::TdaConfig;
use crate::error::{Result, TdaError};
use crate::numeric::{FeatureVector, ProbabilityVector};
use crate::scalar::Scalar;

/// Label vector of a cache entry, stored sparsely.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum CacheValue {
    /// Positive pseudo label: 1 at `class`, 0 elsewhere.
    OneHot(usize),
    /// Negative pseudo label: -1 at each listed class (sorted, unique,
    /// non-empty), 0 elsewhere.
    NegativeMask(Vec<usize>),
}

impl CacheValue {
    /// Parses a dense label vector. Accepts a one-hot vector or a `{-1, 0}`
    /// mask with at least one -1.
    pub fn from_dense(values: &[f64]) -> Result<Self> {
        let ones: Vec<usize> = positions(values, 1.0);
        let negs: Vec<usize> = positions(values, -1.0);
        let zeros = values.iter().filter(|v| **v == 0.0).count();
        if ones.len() == 1 && negs.is_empty() && zeros == values.len() - 1 {
            return Ok(CacheValue::OneHot(ones[0]));
        }
        if ones.is_empty() && !negs.is_empty() && zeros + negs.len() == values.len() {
            return Ok(CacheValue::NegativeMask(negs));
        }
        if ones.is_empty() && negs.is_empty() && zeros == values.len() {
            return Err(TdaError::InvalidEntry("vacuous all-zero label vector".into()));
        }
        Err(TdaError::InvalidEntry(
            "label vector is neither one-hot nor a {-1, 0} mask".into(),
        ))
    }

    pub fn to_dense(&self, num_classes: usize) -> Vec<f64> {
        let mut out = vec![0.0; num_classes];
        match self {
            CacheValue::OneHot(c) => out[*c] = 1.0,
            CacheValue::NegativeMask(cs) => cs.iter().for_each(|c| out[*c] = -1.0),
        }
        out
    }

    fn validate(&self, num_classes: usize) -> Result<()> {
        match self {
            CacheValue::OneHot(c) if *c >= num_classes => Err(TdaError::InvalidClass {
                class: *c,
                num_classes,
            }),
            CacheValue::NegativeMask(cs) if cs.is_empty() => {
                Err(TdaError::InvalidEntry("vacuous negative mask".into()))
            }
            CacheValue::NegativeMask(cs) => {
                if cs.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(TdaError::InvalidEntry(
                        "negative mask classes must be sorted and unique".into(),
                    ));
                }
                match cs.last() {
                    Some(&c) if c >= num_classes => Err(TdaError::InvalidClass {
                        class: c,
                        num_classes,
                    }),
                    _ => Ok(()),
                }
            }
            CacheValue::OneHot(_) => Ok(()),
        }
    }

    /// `out += weight * value`.
    #[inline]
    pub(crate) fn accumulate(&self, weight: f64, out: &mut [f64]) {
        match self {
            CacheValue::OneHot(c) => out[*c] += weight,
            CacheValue::NegativeMask(cs) => {
                for c in cs {
                    out[*c] -= weight;
                }
            }
        }
    }
}

fn positions(values: &[f64], target: f64) -> Vec<usize> {
    values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v == target)
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CacheEntry<S: Scalar> {
    pub key: FeatureVector<S>,
    pub value: CacheValue,
    /// Normalized entropy of the classifier prediction at insertion time.
    pub entropy: f64,
    pub arrival: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RejectReason {
    /// The class queue is full and the entry is not strictly more certain
    /// than the queue's worst entry.
    NotLowerEntropy,
    /// Entropy outside the open interval of the negative-cache gate.
    OutsideEntropyGate,
    /// No class probability exceeds the mask threshold.
    VacuousMask,
}

#[derive(Debug, Clone, PartialEq)]
pub enum UpdateOutcome<S: Scalar> {
    Inserted,
    Replaced(CacheEntry<S>),
    Rejected(RejectReason),
}

impl<S: Scalar> UpdateOutcome<S> {
    pub fn is_stored(&self) -> bool {
        !matches!(self, UpdateOutcome::Rejected(_))
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Slot {
    pub(crate) class: usize,
    pub(crate) entropy: f64,
    pub(crate) arrival: u64,
    pub(crate) value: CacheValue,
}

/// Borrowed view of one cached entry.
#[derive(Debug, Clone, Copy)]
pub struct EntryRef<'a, S: Scalar> {
    pub class: usize,
    pub key: &'a [S],
    pub value: &'a CacheValue,
    pub entropy: f64,
    pub arrival: u64,
}

impl<S: Scalar> EntryRef<'_, S> {
    pub fn to_entry(&self) -> CacheEntry<S> {
        CacheEntry {
            key: FeatureVector::new_normalized(self.key.to_vec(), f64::INFINITY)
                .expect("cached keys are finite and non-zero"),
            value: self.value.clone(),
            entropy: self.entropy,
            arrival: self.arrival,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DynamicCache<S: Scalar> {
    num_classes: usize,
    dim: usize,
    shot_capacity: usize,
    keys: Vec<S>,
    slots: Vec<Slot>,
    // slot indices per class, ascending by (entropy, arrival)
    per_class: Vec<Vec<usize>>,
}

impl<S: Scalar> DynamicCache<S> {
    pub fn new(num_classes: usize, dim: usize, shot_capacity: usize) -> Result<Self> {
        if num_classes == 0 || dim == 0 {
            return Err(TdaError::InvalidDimension(format!(
                "cache needs at least one class and dimension, got N={num_classes} D={dim}"
            )));
        }
        if shot_capacity == 0 {
            return Err(TdaError::config("shot_capacity", "must be at least 1"));
        }
        Ok(Self {
            num_classes,
            dim,
            shot_capacity,
            keys: Vec::new(),
            slots: Vec::new(),
            per_class: vec![Vec::new(); num_classes],
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shot_capacity(&self) -> usize {
        self.shot_capacity
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn class_len(&self, class: usize) -> usize {
        self.per_class.get(class).map_or(0, Vec::len)
    }

    /// Entries of `class` in ascending `(entropy, arrival)` order.
    pub fn class_entries(&self, class: usize) -> impl Iterator<Item = EntryRef<'_, S>> + '_ {
        self.per_class
            .get(class)
            .into_iter()
            .flatten()
            .map(move |&slot| self.entry_ref(slot))
    }

    /// All entries, ascending class id, then entropy, then arrival.
    pub fn entries(&self) -> impl Iterator<Item = EntryRef<'_, S>> + '_ {
        (0..self.num_classes).flat_map(move |c| self.class_entries(c))
    }

    /// The eviction candidate of `class`, if any.
    pub fn max_entropy_entry(&self, class: usize) -> Option<EntryRef<'_, S>> {
        self.per_class
            .get(class)
            .and_then(|l| l.last())
            .map(|&slot| self.entry_ref(slot))
    }

    pub fn clear(&mut self) {
        self.keys.clear();
        self.slots.clear();
        self.per_class.iter_mut().for_each(Vec::clear);
    }

    fn entry_ref(&self, slot: usize) -> EntryRef<'_, S> {
        let s = &self.slots[slot];
        EntryRef {
            class: s.class,
            key: &self.keys[slot * self.dim..(slot + 1) * self.dim],
            value: &s.value,
            entropy: s.entropy,
            arrival: s.arrival,
        }
    }

    pub(crate) fn slab(&self) -> (&[S], &[Slot]) {
        (&self.keys, &self.slots)
    }

    /// Applies the insert/replace rule to the queue of `class_id`.
    pub fn update(&mut self, class_id: usize, entry: CacheEntry<S>) -> Result<UpdateOutcome<S>> {
        if class_id >= self.num_classes {
            return Err(TdaError::InvalidClass {
                class: class_id,
                num_classes: self.num_classes,
            });
        }
        if entry.key.dim() != self.dim {
            return Err(TdaError::DimensionMismatch {
                expected: self.dim,
                actual: entry.key.dim(),
            });
        }
        if !(0.0..=1.0).contains(&entry.entropy) {
            return Err(TdaError::InvalidEntry(format!(
                "entropy {} outside [0, 1]",
                entry.entropy
            )));
        }
        entry.value.validate(self.num_classes)?;
        Ok(self.update_unchecked(class_id, entry))
    }

    pub(crate) fn update_unchecked(&mut self, class_id: usize, entry: CacheEntry<S>) -> UpdateOutcome<S> {
        self.update_slot(class_id, entry).0
    }

    /// Like [`update_unchecked`](Self::update_unchecked), also returning the
    /// slab slot that was written, if any.
    pub(crate) fn update_slot(&mut self, class_id: usize, entry: CacheEntry<S>) -> (UpdateOutcome<S>, Option<usize>) {
        let queue_len = self.per_class[class_id].len();
        if queue_len < self.shot_capacity {
            let slot = self.slots.len();
            self.keys.extend_from_slice(entry.key.as_slice());
            self.slots.push(Slot {
                class: class_id,
                entropy: entry.entropy,
                arrival: entry.arrival,
                value: entry.value,
            });
            self.insert_sorted(class_id, slot);
            return (UpdateOutcome::Inserted, Some(slot));
        }

        let worst = *self.per_class[class_id].last().expect("full queue is non-empty");
        if entry.entropy >= self.slots[worst].entropy {
            return (UpdateOutcome::Rejected(RejectReason::NotLowerEntropy), None);
        }

        let evicted = self.entry_ref(worst).to_entry();
        self.per_class[class_id].pop();
        self.keys[worst * self.dim..(worst + 1) * self.dim].copy_from_slice(entry.key.as_slice());
        self.slots[worst] = Slot {
            class: class_id,
            entropy: entry.entropy,
            arrival: entry.arrival,
            value: entry.value,
        };
        self.insert_sorted(class_id, worst);
        (UpdateOutcome::Replaced(evicted), Some(worst))
    }

    fn insert_sorted(&mut self, class_id: usize, slot: usize) {
        let key = (self.slots[slot].entropy, self.slots[slot].arrival);
        let slots = &self.slots;
        let queue = &mut self.per_class[class_id];
        let pos = queue.partition_point(|&s| {
            let other = (slots[s].entropy, slots[s].arrival);
            other.0 < key.0 || (other.0 == key.0 && other.1 <= key.1)
        });
        queue.insert(pos, slot);
    }

    /// Flattens the cache into stacked key and dense value matrices, rows in
    /// ascending class id, then entropy, then arrival.
    pub fn as_matrices(&self) -> CacheMatrices<S> {
        let rows = self.len();
        let mut keys = Vec::with_capacity(rows * self.dim);
        let mut values = Vec::with_capacity(rows * self.num_classes);
        for e in self.entries() {
            keys.extend_from_slice(e.key);
            values.extend(e.value.to_dense(self.num_classes));
        }
        CacheMatrices {
            keys,
            values,
            rows,
            dim: self.dim,
            num_classes: self.num_classes,
        }
    }
}

/// Adds a one-hot pseudo label at `argmax(p)` to the queue of that class.
pub fn positive_update<S: Scalar>(
    cache: &mut DynamicCache<S>,
    f: &FeatureVector<S>,
    p: &ProbabilityVector,
    entropy: f64,
    arrival: u64,
) -> Result<UpdateOutcome<S>> {
    check_classes(cache, p)?;
    let class = p.argmax();
    cache.update(
        class,
        CacheEntry {
            key: f.clone(),
            value: CacheValue::OneHot(class),
            entropy,
            arrival,
        },
    )
}

/// Open-interval entropy gate of the negative cache.
#[inline]
pub fn negative_gate(entropy: f64, tau_low: f64, tau_high: f64) -> bool {
    tau_low < entropy && entropy < tau_high
}

/// Dense negative pseudo label: -1 where `p > threshold`, else 0.
pub fn negative_mask(p: &ProbabilityVector, threshold: f64) -> Vec<f64> {
    p.as_slice()
        .iter()
        .map(|&x| if x > threshold { -1.0 } else { 0.0 })
        .collect()
}

pub(crate) fn negative_mask_classes(p: &[f64], threshold: f64) -> Vec<usize> {
    p.iter()
        .enumerate()
        .filter(|(_, &x)| x > threshold)
        .map(|(i, _)| i)
        .collect()
}

/// Gated negative-cache update, routed to the queue of `argmax(p)`.
pub fn negative_update<S: Scalar>(
    cache: &mut DynamicCache<S>,
    f: &FeatureVector<S>,
    p: &ProbabilityVector,
    entropy: f64,
    config: &TdaConfig,
    arrival: u64,
) -> Result<UpdateOutcome<S>> {
    check_classes(cache, p)?;
    if !negative_gate(entropy, config.entropy_low, config.entropy_high) {
        return Ok(UpdateOutcome::Rejected(RejectReason::OutsideEntropyGate));
    }
    let mask = negative_mask_classes(p.as_slice(), config.mask_threshold);
    if mask.is_empty() {
        return Ok(UpdateOutcome::Rejected(RejectReason::VacuousMask));
    }
    cache.update(
        p.argmax(),
        CacheEntry {
            key: f.clone(),
            value: CacheValue::NegativeMask(mask),
            entropy,
            arrival,
        },
    )
}

fn check_classes<S: Scalar>(cache: &DynamicCache<S>, p: &ProbabilityVector) -> Result<()> {
    if p.len() != cache.num_classes() {
        return Err(TdaError::DimensionMismatch {
            expected: cache.num_classes(),
            actual: p.len(),
        });
    }
    Ok(())
}

/// Stacked keys (`rows x dim`) and dense label vectors (`rows x num_classes`),
/// both row-major; row `i` of each comes from the same entry.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheMatrices<S: Scalar> {
    keys: Vec<S>,
    values: Vec<f64>,
    rows: usize,
    dim: usize,
    num_classes: usize,
}

impl<S: Scalar> CacheMatrices<S> {
    pub fn new(keys: Vec<S>, values: Vec<f64>, dim: usize, num_classes: usize) -> Result<Self> {
        if dim == 0 || num_classes == 0 {
            return Err(TdaError::InvalidDimension("empty matrix shape".into()));
        }
        if !keys.len().is_multiple_of(dim) {
            return Err(TdaError::DimensionMismatch {
                expected: dim,
                actual: keys.len() % dim,
            });
        }
        let rows = keys.len() / dim;
        if values.len() != rows * num_classes {
            return Err(TdaError::DimensionMismatch {
                expected: rows * num_classes,
                actual: values.len(),
            });
        }
        Ok(Self {
            keys,
            values,
            rows,
            dim,
            num_classes,
        })
    }

    pub fn empty(dim: usize, num_classes: usize) -> Self {
        Self {
            keys: Vec::new(),
            values: Vec::new(),
            rows: 0,
            dim,
            num_classes,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn key_row(&self, i: usize) -> &[S] {
        &self.keys[i * self.dim..(i + 1) * self.dim]
    }

    pub fn value_row(&self, i: usize) -> &[f64] {
        &self.values[i * self.num_classes..(i + 1) * self.num_classes]
    }

    pub fn keys(&self) -> &[S] {
        &self.keys
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}
