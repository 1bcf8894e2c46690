//! Evaluation harness: streaming runs, method comparison, hyperparameter grid
//! search and cache inspection.
//!
//! Timing covers the streaming loop only (cache updates and predictions).
//! Dataset loading, support-set construction and dump collection are
//! outside the measured interval.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapter::tip_adapter_predict;
use crate::cache::{CacheMatrices, CacheValue, DynamicCache};
use crate::config::TdaConfig;
use crate::dataset::EmbeddingDataset;
use crate::engine::{CacheArms, TdaEngine};
use crate::error::{Result, TdaError};
use crate::scalar::Scalar;
use crate::synth::shuffled_order;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ZeroShot,
    TipAdapter,
    TdaPositiveOnly,
    TdaNegativeOnly,
    TdaFull,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::ZeroShot,
        Method::TipAdapter,
        Method::TdaPositiveOnly,
        Method::TdaNegativeOnly,
        Method::TdaFull,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::ZeroShot => "zero-shot",
            Method::TipAdapter => "tip-adapter",
            Method::TdaPositiveOnly => "tda-positive-only",
            Method::TdaNegativeOnly => "tda-negative-only",
            Method::TdaFull => "tda-full",
        }
    }

    fn arms(self) -> CacheArms {
        match self {
            Method::TdaPositiveOnly => CacheArms::POSITIVE,
            Method::TdaNegativeOnly => CacheArms::NEGATIVE,
            Method::TdaFull => CacheArms::FULL,
            Method::ZeroShot | Method::TipAdapter => CacheArms::NONE,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = TdaError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
                TdaError::config("method", format!("unknown method `{s}`, expected one of {}", names.join(", ")))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CacheStats {
    pub name: String,
    pub entries: usize,
    pub fill_ratio: f64,
    pub mean_entropy: Option<f64>,
    /// Fraction of labeled entries whose stored class matches ground truth.
    pub label_purity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub method: Method,
    /// Percentage over labeled samples.
    pub top1_accuracy: f64,
    /// Percentage per class; `None` for classes with no labeled sample.
    pub per_class_accuracy: Vec<Option<f64>>,
    pub correct: usize,
    pub labeled_samples: usize,
    pub samples_processed: usize,
    pub wall_time_secs: f64,
    pub throughput: f64,
    pub cache_stats: Vec<CacheStats>,
}

impl RunReport {
    /// Field-wise equality of everything except timing.
    pub fn same_accuracy(&self, other: &RunReport) -> bool {
        self.method == other.method
            && self.top1_accuracy.to_bits() == other.top1_accuracy.to_bits()
            && self.correct == other.correct
            && self.labeled_samples == other.labeled_samples
            && self.samples_processed == other.samples_processed
            && self
                .per_class_accuracy
                .iter()
                .zip(&other.per_class_accuracy)
                .all(|(a, b)| a.map(f64::to_bits) == b.map(f64::to_bits))
    }
}

/// Per-run switches beyond the config.
#[derive(Debug, Clone, Default)]
pub struct RunOptions<'a, S: Scalar> {
    /// Stream the dataset in a seeded permutation instead of stored order.
    pub shuffle_seed: Option<u64>,
    /// Labeled support set for [`Method::TipAdapter`]. Defaults to the first
    /// `pos_capacity` labeled samples of each class in the stream.
    pub support: Option<&'a CacheMatrices<S>>,
    /// Collect a [`CacheDump`] of the final caches.
    pub dump_caches: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub dump: Option<CacheDump>,
}

/// Runs one method over the dataset in stored order.
pub fn run_stream<S: Scalar>(ds: &EmbeddingDataset<S>, cfg: &TdaConfig, method: Method) -> Result<RunReport> {
    Ok(run_stream_with(ds, cfg, method, &RunOptions::default())?.report)
}

/// Samples handed to [`TdaEngine::step_block`] at a time.
const STREAM_BLOCK: usize = 64;

pub fn run_stream_with<S: Scalar>(
    ds: &EmbeddingDataset<S>,
    cfg: &TdaConfig,
    method: Method,
    opts: &RunOptions<'_, S>,
) -> Result<RunOutput> {
    cfg.validate()?;
    let order: Vec<usize> = match opts.shuffle_seed {
        Some(seed) => shuffled_order(ds.len(), seed),
        None => (0..ds.len()).collect(),
    };
    let n = ds.num_classes();
    let mut per_class_total = vec![0usize; n];
    let mut per_class_correct = vec![0usize; n];

    let mut engine = TdaEngine::with_arms(ds.head().clone(), *cfg, method.arms())?;
    let default_support;
    let support = match (method, opts.support) {
        (Method::TipAdapter, Some(s)) => Some(s),
        (Method::TipAdapter, None) => {
            default_support = support_from_stream(ds, cfg.pos_capacity)?;
            Some(&default_support)
        }
        _ => None,
    };

    let samples = ds.samples();
    let started = Instant::now();
    let mut score = |label: Option<usize>, prediction: usize| {
        if let Some(label) = label {
            per_class_total[label] += 1;
            if prediction == label {
                per_class_correct[label] += 1;
            }
        }
    };
    match support {
        Some(support) => {
            for &i in &order {
                let f = &samples[i].feature;
                let prediction = tip_adapter_predict(f, engine.head(), support, &cfg.pos_params)?.argmax();
                score(samples[i].label, prediction);
            }
        }
        None => {
            for block in order.chunks(STREAM_BLOCK) {
                let fs: Vec<_> = block.iter().map(|&i| &samples[i].feature).collect();
                for (&i, step) in block.iter().zip(engine.step_block(&fs)?) {
                    score(samples[i].label, step.prediction);
                }
            }
        }
    }
    let wall_time_secs = started.elapsed().as_secs_f64();

    // arrival index == stream position, since the engine starts empty
    let labels_by_arrival: Vec<Option<usize>> = order.iter().map(|&i| samples[i].label).collect();
    let mut cache_stats = Vec::new();
    let arms = method.arms();
    if arms.positive {
        cache_stats.push(cache_stats_of("positive", engine.positive_cache(), &labels_by_arrival));
    }
    if arms.negative {
        cache_stats.push(cache_stats_of("negative", engine.negative_cache(), &labels_by_arrival));
    }
    if let Some(support) = support {
        cache_stats.push(CacheStats {
            name: "support".into(),
            entries: support.rows(),
            fill_ratio: support.rows() as f64 / (n * cfg.pos_capacity) as f64,
            mean_entropy: None,
            label_purity: Some(1.0),
        });
    }

    let dump = opts.dump_caches.then(|| {
        let mut caches = Vec::new();
        if arms.positive {
            caches.push(dump_section("positive", engine.positive_cache(), &order, &labels_by_arrival));
        }
        if arms.negative {
            caches.push(dump_section("negative", engine.negative_cache(), &order, &labels_by_arrival));
        }
        CacheDump {
            method,
            num_classes: n,
            samples_processed: order.len(),
            caches,
        }
    });

    let labeled: usize = per_class_total.iter().sum();
    let correct: usize = per_class_correct.iter().sum();
    let report = RunReport {
        method,
        top1_accuracy: if labeled == 0 {
            0.0
        } else {
            100.0 * correct as f64 / labeled as f64
        },
        per_class_accuracy: per_class_total
            .iter()
            .zip(&per_class_correct)
            .map(|(&t, &c)| (t > 0).then(|| 100.0 * c as f64 / t as f64))
            .collect(),
        correct,
        labeled_samples: labeled,
        samples_processed: order.len(),
        wall_time_secs,
        throughput: if wall_time_secs > 0.0 {
            order.len() as f64 / wall_time_secs
        } else {
            f64::INFINITY
        },
        cache_stats,
    };
    Ok(RunOutput { report, dump })
}

/// The first `shots` labeled samples of each class, in stream order, as
/// one-hot support rows.
pub fn support_from_stream<S: Scalar>(ds: &EmbeddingDataset<S>, shots: usize) -> Result<CacheMatrices<S>> {
    let n = ds.num_classes();
    let mut taken = vec![0usize; n];
    let mut keys = Vec::new();
    let mut values = Vec::new();
    for s in ds.samples() {
        let Some(label) = s.label else { continue };
        if taken[label] < shots {
            taken[label] += 1;
            keys.extend_from_slice(s.feature.as_slice());
            values.extend(CacheValue::OneHot(label).to_dense(n));
        }
    }
    CacheMatrices::new(keys, values, ds.dim(), n)
}

fn cache_stats_of<S: Scalar>(name: &str, cache: &DynamicCache<S>, labels: &[Option<usize>]) -> CacheStats {
    let entries = cache.len();
    let mean_entropy = (entries > 0).then(|| cache.entries().map(|e| e.entropy).sum::<f64>() / entries as f64);
    let (mut labeled, mut matching) = (0usize, 0usize);
    for e in cache.entries() {
        if let Some(label) = labels[e.arrival as usize] {
            labeled += 1;
            matching += usize::from(label == e.class);
        }
    }
    CacheStats {
        name: name.into(),
        entries,
        fill_ratio: entries as f64 / (cache.num_classes() * cache.shot_capacity()) as f64,
        mean_entropy,
        label_purity: (labeled > 0).then(|| matching as f64 / labeled as f64),
    }
}

/// Mean and sample standard deviation of accuracy over shuffled streams.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShuffleSummary {
    pub method: Method,
    pub seeds: Vec<u64>,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
}

pub fn run_shuffled<S: Scalar>(
    ds: &EmbeddingDataset<S>,
    cfg: &TdaConfig,
    method: Method,
    seeds: &[u64],
) -> Result<ShuffleSummary> {
    let mut accuracies = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let opts = RunOptions {
            shuffle_seed: Some(seed),
            ..RunOptions::default()
        };
        accuracies.push(run_stream_with(ds, cfg, method, &opts)?.report.top1_accuracy);
    }
    let k = accuracies.len() as f64;
    let mean = if accuracies.is_empty() { 0.0 } else { accuracies.iter().sum::<f64>() / k };
    let sd = if accuracies.len() < 2 {
        0.0
    } else {
        (accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
    };
    Ok(ShuffleSummary {
        method,
        seeds: seeds.to_vec(),
        accuracies,
        mean,
        sd,
    })
}

/// Runs every method on the same stream.
pub fn compare<S: Scalar>(
    ds: &EmbeddingDataset<S>,
    cfg: &TdaConfig,
    opts: &RunOptions<'_, S>,
) -> Result<Vec<RunReport>> {
    let opts = RunOptions {
        dump_caches: false,
        ..opts.clone()
    };
    Method::ALL
        .iter()
        .map(|&m| run_stream_with(ds, cfg, m, &opts).map(|o| o.report))
        .collect()
}

#[derive(Serialize)]
struct ReportRow<'a> {
    method: &'a str,
    top1_accuracy: String,
    correct: usize,
    labeled_samples: usize,
    samples_processed: usize,
    wall_time_secs: String,
    throughput: String,
    positive_fill: String,
    positive_purity: String,
    negative_fill: String,
}

fn stat(reports: &RunReport, name: &str, f: impl Fn(&CacheStats) -> Option<f64>) -> String {
    reports
        .cache_stats
        .iter()
        .find(|c| c.name == name)
        .and_then(f)
        .map(|v| format!("{v:.4}"))
        .unwrap_or_default()
}

fn report_row(r: &RunReport) -> ReportRow<'_> {
    ReportRow {
        method: r.method.name(),
        top1_accuracy: format!("{:.2}", r.top1_accuracy),
        correct: r.correct,
        labeled_samples: r.labeled_samples,
        samples_processed: r.samples_processed,
        wall_time_secs: format!("{:.4}", r.wall_time_secs),
        throughput: format!("{:.1}", r.throughput),
        positive_fill: stat(r, "positive", |c| Some(c.fill_ratio)),
        positive_purity: stat(r, "positive", |c| c.label_purity),
        negative_fill: stat(r, "negative", |c| Some(c.fill_ratio)),
    }
}

fn to_csv<T: Serialize>(rows: impl IntoIterator<Item = T>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).expect("in-memory CSV write");
    }
    String::from_utf8(w.into_inner().expect("in-memory CSV flush")).expect("CSV is UTF-8")
}

pub fn reports_csv(reports: &[RunReport]) -> String {
    to_csv(reports.iter().map(report_row))
}

/// Aligned plain-text table of run reports.
pub fn reports_table(reports: &[RunReport]) -> String {
    let header = ["method", "top1 %", "correct/labeled", "samples", "time s", "samples/s", "pos fill", "pos purity", "neg fill"];
    let rows: Vec<[String; 9]> = reports
        .iter()
        .map(|r| {
            let row = report_row(r);
            [
                row.method.to_string(),
                row.top1_accuracy,
                format!("{}/{}", row.correct, row.labeled_samples),
                row.samples_processed.to_string(),
                row.wall_time_secs,
                row.throughput,
                row.positive_fill,
                row.positive_purity,
                row.negative_fill,
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|c| rows.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let line = |out: &mut String, cells: &[&str]| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", padded.join("  ").trim_end());
    };
    line(&mut out, &header);
    for r in &rows {
        let cells: Vec<&str> = r.iter().map(String::as_str).collect();
        line(&mut out, &cells);
    }
    out
}

/// Value lists for a hyperparameter grid. `alpha` and `beta` apply to both
/// caches.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub pos_capacity: Vec<usize>,
    pub neg_capacity: Vec<usize>,
    pub mask_threshold: Vec<f64>,
    pub entropy_low: Vec<f64>,
    pub entropy_high: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub method: Method,
    pub limit: usize,
}

pub const DEFAULT_GRID_LIMIT: usize = 4096;

impl GridSpec {
    /// A singleton grid at `cfg`.
    pub fn around(cfg: &TdaConfig, method: Method) -> Self {
        Self {
            pos_capacity: vec![cfg.pos_capacity],
            neg_capacity: vec![cfg.neg_capacity],
            mask_threshold: vec![cfg.mask_threshold],
            entropy_low: vec![cfg.entropy_low],
            entropy_high: vec![cfg.entropy_high],
            alpha: vec![cfg.pos_params.alpha],
            beta: vec![cfg.pos_params.beta],
            method,
            limit: DEFAULT_GRID_LIMIT,
        }
    }

    pub fn size(&self) -> usize {
        [
            self.pos_capacity.len(),
            self.neg_capacity.len(),
            self.mask_threshold.len(),
            self.entropy_low.len(),
            self.entropy_high.len(),
            self.alpha.len(),
            self.beta.len(),
        ]
        .iter()
        .try_fold(1usize, |acc, &l| acc.checked_mul(l))
        .unwrap_or(usize::MAX)
    }

    fn check(&self) -> Result<()> {
        let lists = [
            ("pos_capacity", self.pos_capacity.len()),
            ("neg_capacity", self.neg_capacity.len()),
            ("mask_threshold", self.mask_threshold.len()),
            ("entropy_low", self.entropy_low.len()),
            ("entropy_high", self.entropy_high.len()),
            ("alpha", self.alpha.len()),
            ("beta", self.beta.len()),
        ];
        if let Some((name, _)) = lists.iter().find(|(_, l)| *l == 0) {
            return Err(TdaError::config(&format!("grid.{name}"), "value list is empty"));
        }
        let size = self.size();
        if size > self.limit {
            return Err(TdaError::GridTooLarge { size, limit: self.limit });
        }
        Ok(())
    }

    /// Every combination on top of `base`, in nested list order.
    pub fn configs(&self, base: &TdaConfig) -> Vec<TdaConfig> {
        let mut out = Vec::with_capacity(self.size().min(self.limit));
        for &pos_capacity in &self.pos_capacity {
            for &neg_capacity in &self.neg_capacity {
                for &mask_threshold in &self.mask_threshold {
                    for &entropy_low in &self.entropy_low {
                        for &entropy_high in &self.entropy_high {
                            for &alpha in &self.alpha {
                                for &beta in &self.beta {
                                    let mut c = *base;
                                    c.pos_capacity = pos_capacity;
                                    c.neg_capacity = neg_capacity;
                                    c.mask_threshold = mask_threshold;
                                    c.entropy_low = entropy_low;
                                    c.entropy_high = entropy_high;
                                    c.pos_params.alpha = alpha;
                                    c.pos_params.beta = beta;
                                    c.neg_params.alpha = alpha;
                                    c.neg_params.beta = beta;
                                    out.push(c);
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct GridRow {
    pub config: TdaConfig,
    pub report: RunReport,
}

#[derive(Debug, Clone)]
pub struct GridResult {
    /// Best first: accuracy descending, then wall time ascending.
    pub rows: Vec<GridRow>,
    /// Combinations that failed config validation (e.g. `entropy_low >= entropy_high`).
    pub skipped: usize,
}

impl GridResult {
    pub fn best(&self) -> Option<&GridRow> {
        self.rows.first()
    }

    pub fn to_csv(&self) -> String {
        #[derive(Serialize)]
        struct Row {
            rank: usize,
            pos_capacity: usize,
            neg_capacity: usize,
            mask_threshold: f64,
            entropy_low: f64,
            entropy_high: f64,
            alpha: f64,
            beta: f64,
            top1_accuracy: String,
            wall_time_secs: String,
        }
        to_csv(self.rows.iter().enumerate().map(|(i, r)| Row {
            rank: i + 1,
            pos_capacity: r.config.pos_capacity,
            neg_capacity: r.config.neg_capacity,
            mask_threshold: r.config.mask_threshold,
            entropy_low: r.config.entropy_low,
            entropy_high: r.config.entropy_high,
            alpha: r.config.pos_params.alpha,
            beta: r.config.pos_params.beta,
            top1_accuracy: format!("{:.4}", r.report.top1_accuracy),
            wall_time_secs: format!("{:.4}", r.report.wall_time_secs),
        }))
    }
}

/// Evaluates every grid combination with its own caches, in parallel.
pub fn grid_search<S: Scalar>(ds: &EmbeddingDataset<S>, spec: &GridSpec, base: &TdaConfig) -> Result<GridResult> {
    spec.check()?;
    let all = spec.configs(base);
    let total = all.len();
    let valid: Vec<(usize, TdaConfig)> = all.into_iter().enumerate().filter(|(_, c)| c.validate().is_ok()).collect();
    let skipped = total - valid.len();

    let mut results: Vec<(usize, GridRow)> = valid
        .into_par_iter()
        .map(|(i, config)| {
            run_stream(ds, &config, spec.method).map(|report| (i, GridRow { config, report }))
        })
        .collect::<Result<_>>()?;
    results.sort_by(|(ia, a), (ib, b)| {
        b.report
            .top1_accuracy
            .total_cmp(&a.report.top1_accuracy)
            .then(a.report.wall_time_secs.total_cmp(&b.report.wall_time_secs))
            .then(ia.cmp(ib))
    });
    Ok(GridResult {
        rows: results.into_iter().map(|(_, r)| r).collect(),
        skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpEntry {
    pub class: usize,
    pub entropy: f64,
    pub arrival: u64,
    /// Index of the sample in the dataset file.
    pub sample_index: usize,
    pub label: Option<usize>,
    pub value: CacheValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheDumpSection {
    pub name: String,
    pub shot_capacity: usize,
    pub entries: Vec<DumpEntry>,
}

/// Final cache contents of a run, without keys. Serialized as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheDump {
    pub method: Method,
    pub num_classes: usize,
    pub samples_processed: usize,
    pub caches: Vec<CacheDumpSection>,
}

impl CacheDump {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dump serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| TdaError::CorruptDataset {
            record: None,
            reason: format!("cache dump: {e}"),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| TdaError::io(format!("writing {}", path.display()), e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(TdaError::NoDumpAvailable(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| TdaError::io(format!("reading {}", path.display()), e))?;
        Self::from_json(&text)
    }
}

fn dump_section<S: Scalar>(
    name: &str,
    cache: &DynamicCache<S>,
    order: &[usize],
    labels: &[Option<usize>],
) -> CacheDumpSection {
    CacheDumpSection {
        name: name.into(),
        shot_capacity: cache.shot_capacity(),
        entries: cache
            .entries()
            .map(|e| DumpEntry {
                class: e.class,
                entropy: e.entropy,
                arrival: e.arrival,
                sample_index: order[e.arrival as usize],
                label: labels[e.arrival as usize],
                value: e.value.clone(),
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CacheInspection {
    pub name: String,
    pub entries: usize,
    pub shot_capacity: usize,
    pub per_class_counts: Vec<usize>,
    /// Min, lower quartile, median, upper quartile, max.
    pub entropy_quantiles: Option<[f64; 5]>,
    pub labeled_entries: usize,
    pub label_purity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InspectionReport {
    pub method: Method,
    pub caches: Vec<CacheInspection>,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn inspect(dump: &CacheDump) -> InspectionReport {
    let caches = dump
        .caches
        .iter()
        .map(|section| {
            let mut per_class_counts = vec![0usize; dump.num_classes];
            for e in &section.entries {
                per_class_counts[e.class] += 1;
            }
            let mut ents: Vec<f64> = section.entries.iter().map(|e| e.entropy).collect();
            ents.sort_by(f64::total_cmp);
            let entropy_quantiles =
                (!ents.is_empty()).then(|| [0.0, 0.25, 0.5, 0.75, 1.0].map(|q| quantile(&ents, q)));
            let labeled: Vec<&DumpEntry> = section.entries.iter().filter(|e| e.label.is_some()).collect();
            let matching = labeled.iter().filter(|e| e.label == Some(e.class)).count();
            CacheInspection {
                name: section.name.clone(),
                entries: section.entries.len(),
                shot_capacity: section.shot_capacity,
                per_class_counts,
                entropy_quantiles,
                labeled_entries: labeled.len(),
                label_purity: (!labeled.is_empty()).then(|| matching as f64 / labeled.len() as f64),
            }
        })
        .collect();
    InspectionReport {
        method: dump.method,
        caches,
    }
}

/// Reads a dump written by a run with cache dumping enabled.
pub fn inspect_file(path: &Path) -> Result<InspectionReport> {
    Ok(inspect(&CacheDump::read(path)?))
}

impl InspectionReport {
    pub fn render_text(&self) -> String {
        let mut out = format!("method: {}\n", self.method);
        for c in &self.caches {
            let _ = writeln!(
                out,
                "\n[{} cache] {} entries, capacity {} per class",
                c.name, c.entries, c.shot_capacity
            );
            match c.entropy_quantiles {
                Some(q) => {
                    let _ = writeln!(
                        out,
                        "  entropy min {:.4}  q25 {:.4}  median {:.4}  q75 {:.4}  max {:.4}",
                        q[0], q[1], q[2], q[3], q[4]
                    );
                }
                None => out.push_str("  entropy: (empty)\n"),
            }
            match c.label_purity {
                Some(p) => {
                    let _ = writeln!(out, "  label purity {:.2}% over {} labeled entries", 100.0 * p, c.labeled_entries);
                }
                None => out.push_str("  label purity: no labels\n"),
            }
            let full = c.per_class_counts.iter().filter(|&&k| k == c.shot_capacity).count();
            let empty = c.per_class_counts.iter().filter(|&&k| k == 0).count();
            let _ = writeln!(
                out,
                "  classes full {full}, partial {}, empty {empty}",
                c.per_class_counts.len() - full - empty
            );
        }
        out
    }

    /// One row per (cache, class).
    pub fn to_csv(&self) -> String {
        #[derive(Serialize)]
        struct Row<'a> {
            cache: &'a str,
            class: usize,
            count: usize,
            capacity: usize,
        }
        let rows = self.caches.iter().flat_map(|c| {
            c.per_class_counts.iter().enumerate().map(move |(class, &count)| Row {
                cache: &c.name,
                class,
                count,
                capacity: c.shot_capacity,
            })
        });
        to_csv(rows)
    }
}
