//! Streaming, training-free test-time adaptation for zero-shot classifiers.
//!
//! A frozen classifier head scores each incoming feature vector. Confident
//! predictions feed a positive cache of one-hot pseudo labels; moderately
//! uncertain ones feed a negative cache of `{-1, 0}` class masks. Both caches
//! are bounded per class and keep the lowest-entropy entries seen so far.
//! The adapted prediction adds similarity-weighted retrievals from both
//! caches to the base logits.
//!
//! Storage types are generic over [`Scalar`] (`f32` or `f64`); all reductions
//! accumulate in `f64`. The aliases at the crate root fix the storage type to
//! `f32`, matching the on-disk format.

pub mod adapter;
pub mod cache;
pub mod config;
pub mod dataset;
pub mod engine;
pub mod error;
pub mod harness;
pub mod numeric;
pub mod scalar;
pub mod synth;

pub use adapter::{
    adaptation, adaptation_all, cache_prediction, dynamic_cache_prediction, tda_predict, tip_adapter_predict,
    zero_shot_predict, AdapterParams, Sign,
};
pub use cache::{
    negative_gate, negative_mask, negative_update, positive_update, CacheEntry, CacheMatrices, CacheValue,
    DynamicCache, EntryRef, RejectReason, UpdateOutcome,
};
pub use config::{load_config, ConfigLayer, TdaConfig, UpdateOrder};
pub use dataset::{read_dataset, write_dataset, EmbeddingDataset, Sample};
pub use engine::{CacheArms, Step, TdaEngine, UpdateKind};
pub use error::{Result, TdaError};
pub use harness::{
    compare, grid_search, inspect, inspect_file, run_shuffled, run_stream, run_stream_with, CacheDump, GridResult,
    GridSpec, Method, RunOptions, RunReport,
};
pub use numeric::{
    base_logits, l2_normalize, normalized_entropy, softmax, ClassifierHead, FeatureVector, LogitVector,
    ProbabilityVector,
};
pub use scalar::Scalar;
pub use synth::{generate_synthetic, ClassPrior, SynthShiftSpec};

pub type Feature = FeatureVector<f32>;
pub type Head = ClassifierHead<f32>;
pub type Cache = DynamicCache<f32>;
pub type Matrices = CacheMatrices<f32>;
pub type Engine = TdaEngine<f32>;
pub type Dataset = EmbeddingDataset<f32>;

pub type Feature64 = FeatureVector<f64>;
pub type Head64 = ClassifierHead<f64>;
pub type Cache64 = DynamicCache<f64>;
pub type Engine64 = TdaEngine<f64>;
pub type Dataset64 = EmbeddingDataset<f64>;
