mod args;

use std::fmt::Write as _;
use std::path::Path;
use std::process::ExitCode;

use clap::Parser;
use tda_core::harness::{reports_csv, reports_table, support_from_stream, GridSpec, ShuffleSummary};
use tda_core::{
    compare, generate_synthetic, grid_search, inspect_file, load_config, read_dataset, run_shuffled, run_stream_with,
    write_dataset, CacheMatrices, ClassPrior, EmbeddingDataset, Method, Result, RunOptions, Scalar, SynthShiftSpec,
    TdaConfig, TdaError,
};

use args::{Cli, Command, CompareArgs, GridArgs, InspectArgs, Precision, RunArgs, SynthArgs};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => match a.data.precision {
            Precision::F32 => run::<f32>(&a),
            Precision::F64 => run::<f64>(&a),
        },
        Command::Compare(a) => match a.data.precision {
            Precision::F32 => compare_cmd::<f32>(&a),
            Precision::F64 => compare_cmd::<f64>(&a),
        },
        Command::GridSearch(a) => match a.data.precision {
            Precision::F32 => grid::<f32>(&a),
            Precision::F64 => grid::<f64>(&a),
        },
        Command::GenSynth(a) => gen_synth(&a),
        Command::Inspect(a) => inspect_cmd(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {e}", e.class_name());
            ExitCode::FAILURE
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| TdaError::Io {
        context: format!("writing {}", path.display()),
        source,
    })
}

fn load_support<S: Scalar>(
    path: Option<&Path>,
    ds: &EmbeddingDataset<S>,
    cfg: &TdaConfig,
) -> Result<Option<CacheMatrices<S>>> {
    let Some(path) = path else { return Ok(None) };
    let support: EmbeddingDataset<S> = read_dataset(path)?;
    if support.dim() != ds.dim() || support.num_classes() != ds.num_classes() {
        return Err(TdaError::DimensionMismatch {
            expected: ds.dim(),
            actual: support.dim(),
        });
    }
    support_from_stream(&support, cfg.pos_capacity).map(Some)
}

fn shuffled_table(summaries: &[ShuffleSummary]) -> (String, String) {
    let mut text = String::new();
    let mut csv = String::from("method,seeds,mean_top1_accuracy,sd_top1_accuracy,accuracies\n");
    for s in summaries {
        let seeds: Vec<String> = s.seeds.iter().map(u64::to_string).collect();
        let accs: Vec<String> = s.accuracies.iter().map(|a| format!("{a:.2}")).collect();
        let _ = writeln!(
            text,
            "{:<18} {:.2} +/- {:.2}  over {} shuffled streams (seeds {})",
            s.method.name(),
            s.mean,
            s.sd,
            s.seeds.len(),
            seeds.join(",")
        );
        let _ = writeln!(csv, "{},{},{:.4},{:.4},{}", s.method, seeds.join(";"), s.mean, s.sd, accs.join(";"));
    }
    (text, csv)
}

fn describe_order(seeds: &[u64]) -> String {
    match seeds {
        [] => "stored order".into(),
        [seed] => format!("shuffled with seed {seed}"),
        _ => format!("{} shuffled orders", seeds.len()),
    }
}

fn run<S: Scalar>(a: &RunArgs) -> Result<()> {
    let cfg = load_config(a.data.config.as_deref(), &a.config.layer())?;
    let ds: EmbeddingDataset<S> = read_dataset(&a.data.dataset)?;
    let support = load_support(a.support.as_deref(), &ds, &cfg)?;
    println!(
        "{}: {} samples, D={}, N={}, {}",
        a.data.dataset.display(),
        ds.len(),
        ds.dim(),
        ds.num_classes(),
        describe_order(&a.shuffle_seed)
    );

    if a.shuffle_seed.len() > 1 {
        if a.dump_caches.is_some() {
            return Err(TdaError::InvalidConfig {
                field: "dump_caches".into(),
                reason: "needs a single stream order".into(),
            });
        }
        let summary = run_shuffled(&ds, &cfg, a.method, &a.shuffle_seed)?;
        let (text, csv) = shuffled_table(&[summary]);
        print!("{text}");
        if let Some(out) = &a.output {
            write_file(out, &csv)?;
        }
        return Ok(());
    }

    let opts = RunOptions {
        shuffle_seed: a.shuffle_seed.first().copied(),
        support: support.as_ref(),
        dump_caches: a.dump_caches.is_some(),
    };
    let out = run_stream_with(&ds, &cfg, a.method, &opts)?;
    print!("{}", reports_table(std::slice::from_ref(&out.report)));
    println!("timing covers cache updates and prediction only; dataset loading is excluded");
    if let Some(out_path) = &a.output {
        write_file(out_path, &reports_csv(std::slice::from_ref(&out.report)))?;
    }
    if let (Some(path), Some(dump)) = (&a.dump_caches, &out.dump) {
        dump.write(path)?;
        println!("cache dump written to {}", path.display());
    }
    Ok(())
}

fn compare_cmd<S: Scalar>(a: &CompareArgs) -> Result<()> {
    let cfg = load_config(a.data.config.as_deref(), &a.config.layer())?;
    let ds: EmbeddingDataset<S> = read_dataset(&a.data.dataset)?;
    let support = load_support(a.support.as_deref(), &ds, &cfg)?;
    println!(
        "{}: {} samples, D={}, N={}, {}",
        a.data.dataset.display(),
        ds.len(),
        ds.dim(),
        ds.num_classes(),
        describe_order(&a.shuffle_seed)
    );

    if a.shuffle_seed.len() > 1 {
        let summaries = Method::ALL
            .iter()
            .map(|&m| run_shuffled(&ds, &cfg, m, &a.shuffle_seed))
            .collect::<Result<Vec<_>>>()?;
        let (text, csv) = shuffled_table(&summaries);
        print!("{text}");
        if let Some(out) = &a.output {
            write_file(out, &csv)?;
        }
        return Ok(());
    }

    let opts = RunOptions {
        shuffle_seed: a.shuffle_seed.first().copied(),
        support: support.as_ref(),
        dump_caches: false,
    };
    let reports = compare(&ds, &cfg, &opts)?;
    print!("{}", reports_table(&reports));
    println!("timing covers cache updates and prediction only; dataset loading is excluded");
    if let Some(out) = &a.output {
        write_file(out, &reports_csv(&reports))?;
    }
    Ok(())
}

fn or_base<T: Copy>(values: &[T], base: T) -> Vec<T> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

fn grid<S: Scalar>(a: &GridArgs) -> Result<()> {
    let base = load_config(a.data.config.as_deref(), &Default::default())?;
    let spec = GridSpec {
        pos_capacity: or_base(&a.pos_capacity, base.pos_capacity),
        neg_capacity: or_base(&a.neg_capacity, base.neg_capacity),
        mask_threshold: or_base(&a.mask_threshold, base.mask_threshold),
        entropy_low: or_base(&a.entropy_low, base.entropy_low),
        entropy_high: or_base(&a.entropy_high, base.entropy_high),
        alpha: or_base(&a.alpha, base.pos_params.alpha),
        beta: or_base(&a.beta, base.pos_params.beta),
        method: a.method,
        limit: a.limit,
    };
    // Checked before loading, so an oversized grid fails fast.
    if spec.size() > spec.limit {
        return Err(TdaError::GridTooLarge {
            size: spec.size(),
            limit: spec.limit,
        });
    }
    let ds: EmbeddingDataset<S> = read_dataset(&a.data.dataset)?;
    let result = grid_search(&ds, &spec, &base)?;
    let csv = result.to_csv();
    match &a.output {
        Some(path) => write_file(path, &csv)?,
        None => print!("{csv}"),
    }
    if result.skipped > 0 {
        eprintln!("skipped {} combinations with entropy_low >= entropy_high", result.skipped);
    }
    if let Some(best) = result.best() {
        println!(
            "\n# best: {} top-1 {:.2}% ({} of {} combinations evaluated)",
            a.method,
            best.report.top1_accuracy,
            result.rows.len(),
            spec.size()
        );
        print!("{}", best.config.to_toml());
    }
    Ok(())
}

fn gen_synth(a: &SynthArgs) -> Result<()> {
    let spec = SynthShiftSpec {
        dim: a.dim,
        num_classes: a.classes,
        samples_per_class: a.samples_per_class,
        prototype_seed: a.prototype_seed,
        stream_seed: a.stream_seed,
        shift_angle: a.shift,
        noise_sigma: a.noise,
        class_prior: a.zipf.map_or(ClassPrior::Uniform, ClassPrior::Zipf),
    };
    let ds: EmbeddingDataset<f32> = generate_synthetic(&spec)?;
    write_dataset(&ds, &a.output)?;
    println!(
        "wrote {}: {} samples, D={}, N={}",
        a.output.display(),
        ds.len(),
        ds.dim(),
        ds.num_classes()
    );
    Ok(())
}

fn inspect_cmd(a: &InspectArgs) -> Result<()> {
    let report = inspect_file(&a.dump)?;
    print!("{}", report.render_text());
    if let Some(out) = &a.output {
        write_file(out, &report.to_csv())?;
    }
    Ok(())
}
