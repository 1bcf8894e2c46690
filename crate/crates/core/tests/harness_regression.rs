//! Stream-level behaviour on the pinned synthetic datasets.
//!
//! The frozen counts below were produced by this crate and independently by
//! a from-scratch reimplementation of the generator and all five methods;
//! both agree exactly.

use std::sync::OnceLock;

use tda_core::harness::{support_from_stream, CacheInspection};
use tda_core::{
    compare, generate_synthetic, grid_search, inspect, inspect_file, run_shuffled, run_stream, run_stream_with,
    ClassifierHead, Dataset, EmbeddingDataset, Engine, GridSpec, Method, RunOptions, Sample, SynthShiftSpec,
    TdaConfig, TdaError, UpdateOrder,
};

fn benchmark() -> &'static Dataset {
    static DS: OnceLock<Dataset> = OnceLock::new();
    DS.get_or_init(|| generate_synthetic(&SynthShiftSpec::benchmark()).unwrap())
}

fn no_shift() -> Dataset {
    generate_synthetic(&SynthShiftSpec {
        shift_angle: 0.0,
        ..SynthShiftSpec::benchmark()
    })
    .unwrap()
}

fn correct(ds: &Dataset, cfg: &TdaConfig, method: Method) -> usize {
    run_stream(ds, cfg, method).unwrap().correct
}

#[test]
fn benchmark_counts_are_pinned() {
    let reports = compare(benchmark(), &TdaConfig::default(), &RunOptions::default()).unwrap();
    let got: Vec<(Method, usize)> = reports.iter().map(|r| (r.method, r.correct)).collect();
    assert_eq!(
        got,
        vec![
            (Method::ZeroShot, 2809),
            (Method::TipAdapter, 3142),
            (Method::TdaPositiveOnly, 3011),
            (Method::TdaNegativeOnly, 2841),
            (Method::TdaFull, 3036),
        ]
    );
    assert!(reports.iter().all(|r| r.samples_processed == 4000 && r.labeled_samples == 4000));
}

#[test]
fn shifted_noisy_zero_shot_is_pinned() {
    let ds: Dataset = generate_synthetic(&SynthShiftSpec {
        shift_angle: 0.4,
        noise_sigma: 0.3,
        ..SynthShiftSpec::benchmark()
    })
    .unwrap();
    let r = run_stream(&ds, &TdaConfig::default(), Method::ZeroShot).unwrap();
    assert_eq!(r.correct, 3370);
    assert_eq!(r.top1_accuracy, 84.25);
}

#[test]
fn zero_shot_equals_offline_argmax() {
    let ds = benchmark();
    let head = ds.head();
    let oracle = ds
        .samples()
        .iter()
        .filter(|s| {
            let scores: Vec<f64> = (0..head.num_classes())
                .map(|c| head.row(c).iter().zip(s.feature.as_slice()).map(|(w, x)| *w as f64 * *x as f64).sum())
                .collect();
            let best = (0..scores.len()).fold(0, |b, c| if scores[c] > scores[b] { c } else { b });
            Some(best) == s.label
        })
        .count();
    assert_eq!(correct(ds, &TdaConfig::default(), Method::ZeroShot), oracle);
}

#[test]
fn capacity_grid_is_pinned() {
    let cfg = TdaConfig::default();
    let mut spec = GridSpec::around(&cfg, Method::TdaFull);
    spec.pos_capacity = vec![1, 2, 3, 6];
    let result = grid_search(benchmark(), &spec, &cfg).unwrap();
    let mut by_k: Vec<(usize, usize)> = result.rows.iter().map(|r| (r.config.pos_capacity, r.report.correct)).collect();
    by_k.sort();
    // accuracy still rises at k = 6 on this data
    assert_eq!(by_k, vec![(1, 2923), (2, 2985), (3, 3036), (6, 3202)]);
    assert_eq!(result.best().unwrap().config.pos_capacity, 6);
    assert!(result
        .rows
        .windows(2)
        .all(|w| w[0].report.top1_accuracy >= w[1].report.top1_accuracy));
}

#[test]
fn singleton_grid_equals_run_stream() {
    let cfg = TdaConfig::default();
    let result = grid_search(benchmark(), &GridSpec::around(&cfg, Method::TdaFull), &cfg).unwrap();
    assert_eq!(result.rows.len(), 1);
    let direct = run_stream(benchmark(), &cfg, Method::TdaFull).unwrap();
    assert!(result.rows[0].report.same_accuracy(&direct));
    assert!(result.to_csv().lines().count() == 2);
}

#[test]
fn oversized_grid_reports_its_size() {
    let cfg = TdaConfig::default();
    let mut spec = GridSpec::around(&cfg, Method::TdaFull);
    spec.alpha = (0..20).map(|i| 0.5 + i as f64).collect();
    spec.beta = (0..20).map(|i| 1.0 + i as f64).collect();
    spec.pos_capacity = (1..=11).collect();
    match grid_search(benchmark(), &spec, &cfg) {
        Err(TdaError::GridTooLarge { size: 4400, limit: 4096 }) => {}
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn grid_skips_inverted_thresholds() {
    let cfg = TdaConfig::default();
    let mut spec = GridSpec::around(&cfg, Method::TdaNegativeOnly);
    spec.entropy_low = vec![0.2, 0.3];
    spec.entropy_high = vec![0.25, 0.5];
    let result = grid_search(benchmark(), &spec, &cfg).unwrap();
    assert_eq!((result.rows.len(), result.skipped), (3, 1));
}

#[test]
fn shifted_positive_purity_is_pinned() {
    let opts = RunOptions {
        dump_caches: true,
        ..RunOptions::default()
    };
    let out = run_stream_with(benchmark(), &TdaConfig::default(), Method::TdaFull, &opts).unwrap();
    let report = inspect(out.dump.as_ref().unwrap());
    let pos = cache(&report.caches, "positive");
    assert_eq!((pos.entries, pos.labeled_entries), (60, 60));
    assert_eq!(pos.label_purity, Some(50.0 / 60.0));
    let neg = cache(&report.caches, "negative");
    assert!(neg.label_purity.is_some_and(|p| (0.0..=1.0).contains(&p)));
}

fn cache<'a>(caches: &'a [CacheInspection], name: &str) -> &'a CacheInspection {
    caches.iter().find(|c| c.name == name).unwrap()
}

#[test]
fn no_shift_is_separable() {
    let ds = no_shift();
    let cfg = TdaConfig::default();
    assert_eq!(run_stream(&ds, &cfg, Method::ZeroShot).unwrap().top1_accuracy, 100.0);

    let opts = RunOptions {
        dump_caches: true,
        ..RunOptions::default()
    };
    let out = run_stream_with(&ds, &cfg, Method::TdaFull, &opts).unwrap();
    let report = inspect(out.dump.as_ref().unwrap());
    assert_eq!(cache(&report.caches, "positive").label_purity, Some(1.0));

    let edge = TdaConfig {
        pos_capacity: 200,
        neg_capacity: 200,
        entropy_low: 0.0,
        entropy_high: 1.0,
        mask_threshold: 1e-12,
        ..cfg
    };
    assert_eq!(run_stream(&ds, &edge, Method::TdaFull).unwrap().top1_accuracy, 100.0);
}

#[test]
fn full_beats_zero_shot_and_each_arm() {
    let cfg = TdaConfig::default();
    let ds = benchmark();
    let full = run_stream(ds, &cfg, Method::TdaFull).unwrap().top1_accuracy;
    assert!(full >= run_stream(ds, &cfg, Method::ZeroShot).unwrap().top1_accuracy + 2.0);
    assert!(full >= run_stream(ds, &cfg, Method::TdaPositiveOnly).unwrap().top1_accuracy);
    assert!(full >= run_stream(ds, &cfg, Method::TdaNegativeOnly).unwrap().top1_accuracy);
}

#[test]
fn runs_are_deterministic() {
    let cfg = TdaConfig::default();
    for method in Method::ALL {
        let opts = RunOptions {
            shuffle_seed: Some(5),
            ..RunOptions::default()
        };
        let a = run_stream_with(benchmark(), &cfg, method, &opts).unwrap().report;
        let b = run_stream_with(benchmark(), &cfg, method, &opts).unwrap().report;
        assert!(a.same_accuracy(&b), "{method}");
        assert_eq!(a.top1_accuracy.to_bits(), b.top1_accuracy.to_bits());
    }
}

#[test]
fn stream_matches_step_by_step_engine() {
    let ds = benchmark();
    for order in [UpdateOrder::UpdateThenPredict, UpdateOrder::PredictThenUpdate] {
        let cfg = TdaConfig {
            update_order: order,
            ..TdaConfig::default()
        };
        let mut engine = Engine::new(ds.head().clone(), cfg).unwrap();
        let manual = ds
            .samples()
            .iter()
            .filter(|s| Some(engine.step(&s.feature).unwrap().prediction) == s.label)
            .count();
        assert_eq!(correct(ds, &cfg, Method::TdaFull), manual);
    }
}

#[test]
fn shuffled_runs_report_spread() {
    let cfg = TdaConfig::default();
    let summary = run_shuffled(benchmark(), &cfg, Method::TdaFull, &[1, 2, 3]).unwrap();
    assert_eq!(summary.accuracies.len(), 3);
    let mean = summary.accuracies.iter().sum::<f64>() / 3.0;
    assert!((summary.mean - mean).abs() < 1e-12);
    assert!(summary.sd >= 0.0);
    // zero-shot ignores order entirely
    let zs = run_shuffled(benchmark(), &cfg, Method::ZeroShot, &[1, 2, 3]).unwrap();
    assert_eq!(zs.sd, 0.0);
}

#[test]
fn unlabeled_samples_are_excluded_from_accuracy() {
    let ds = benchmark();
    let samples: Vec<Sample<f32>> = ds
        .samples()
        .iter()
        .enumerate()
        .map(|(i, s)| Sample {
            label: if i % 2 == 0 { s.label } else { None },
            feature: s.feature.clone(),
        })
        .collect();
    let half = EmbeddingDataset::new(ds.class_names().to_vec(), ds.head().clone(), samples).unwrap();
    let r = run_stream(&half, &TdaConfig::default(), Method::TdaFull).unwrap();
    assert_eq!((r.samples_processed, r.labeled_samples), (4000, 2000));
    assert_eq!(r.top1_accuracy, 100.0 * r.correct as f64 / 2000.0);
}

#[test]
fn tip_adapter_uses_given_support() {
    let ds = benchmark();
    let cfg = TdaConfig::default();
    let support = support_from_stream(ds, cfg.pos_capacity).unwrap();
    assert_eq!(support.rows(), 60);
    let opts = RunOptions {
        support: Some(&support),
        ..RunOptions::default()
    };
    let explicit = run_stream_with(ds, &cfg, Method::TipAdapter, &opts).unwrap().report;
    assert_eq!(explicit.correct, 3142);
}

#[test]
fn compare_rows_and_throughput_order() {
    let ds: Dataset = generate_synthetic(&SynthShiftSpec {
        dim: 256,
        num_classes: 200,
        samples_per_class: 10,
        ..SynthShiftSpec::benchmark()
    })
    .unwrap();
    let reports = compare(&ds, &TdaConfig::default(), &RunOptions::default()).unwrap();
    assert_eq!(reports.len(), 5);
    assert!(reports.iter().all(|r| r.samples_processed == ds.len()));
    let zs = &reports[0];
    let full = &reports[4];
    assert!(zs.throughput >= full.throughput);
    for r in &reports {
        assert!((r.throughput * r.wall_time_secs - r.samples_processed as f64).abs() < 1e-6 * r.samples_processed as f64);
        assert!((0.0..=100.0).contains(&r.top1_accuracy));
    }
    let csv = tda_core::harness::reports_csv(&reports);
    assert_eq!(csv.lines().count(), 6);
    assert!(csv.lines().next().unwrap().contains("throughput"));
}

#[test]
fn missing_dump_is_reported() {
    let err = inspect_file(std::path::Path::new("/nonexistent/caches.json")).unwrap_err();
    assert!(matches!(err, TdaError::NoDumpAvailable(_)));
}

#[test]
fn dump_survives_a_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("caches.json");
    let opts = RunOptions {
        dump_caches: true,
        ..RunOptions::default()
    };
    let out = run_stream_with(benchmark(), &TdaConfig::default(), Method::TdaFull, &opts).unwrap();
    let dump = out.dump.unwrap();
    dump.write(&path).unwrap();
    let from_file = inspect_file(&path).unwrap();
    assert_eq!(from_file, inspect(&dump));
    assert!(from_file.render_text().contains("positive"));
    assert!(from_file.to_csv().starts_with("cache,"));
}

#[test]
fn wide_storage_gives_the_same_benchmark_counts() {
    let ds: tda_core::Dataset64 = generate_synthetic(&SynthShiftSpec::benchmark()).unwrap();
    let cfg = TdaConfig::default();
    // f64 storage skips the f32 rounding of features, so counts may move
    // slightly; the ordering of methods must not.
    let zs = correct_wide(&ds, &cfg, Method::ZeroShot);
    let full = correct_wide(&ds, &cfg, Method::TdaFull);
    assert!(full > zs + 80);
    let head: &ClassifierHead<f64> = ds.head();
    assert_eq!(head.dim(), 64);
}

fn correct_wide(ds: &tda_core::Dataset64, cfg: &TdaConfig, method: Method) -> usize {
    run_stream(ds, cfg, method).unwrap().correct
}
