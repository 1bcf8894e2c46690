use std::path::Path;
use std::process::{Command, Output};

fn tda(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tda"))
        .args(args)
        .env_remove("TDA_POS_CAPACITY")
        .output()
        .expect("spawn tda")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_dataset(dir: &Path) -> String {
    let path = dir.join("small.tdae");
    let o = tda(&[
        "gen-synth",
        "--output",
        path.to_str().unwrap(),
        "--dim",
        "16",
        "--classes",
        "5",
        "--samples-per-class",
        "40",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    path.to_str().unwrap().to_string()
}

#[test]
fn benchmark_run_reports_pinned_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("bench.tdae");
    let ds = ds.to_str().unwrap();
    assert!(tda(&["gen-synth", "--output", ds]).status.success());
    let csv = dir.path().join("report.csv");
    let o = tda(&["run", "--dataset", ds, "--output", csv.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("3036/4000"));
    let text = std::fs::read_to_string(csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("tda-full,75.90,3036,4000,4000,"));
}

#[test]
fn compare_writes_five_rows() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small_dataset(dir.path());
    let csv = dir.path().join("cmp.csv");
    let o = tda(&["compare", "--dataset", &ds, "--output", csv.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(csv).unwrap();
    let methods: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(
        methods,
        ["zero-shot", "tip-adapter", "tda-positive-only", "tda-negative-only", "tda-full"]
    );
}

#[test]
fn several_shuffle_seeds_report_mean_and_sd() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small_dataset(dir.path());
    let o = tda(&["run", "--dataset", &ds, "--shuffle-seed", "1,2,3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("+/-") && out.contains("seeds 1,2,3"), "{out}");
}

#[test]
fn flag_overrides_environment_and_file() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small_dataset(dir.path());
    let cfg = dir.path().join("tda.toml");
    std::fs::write(&cfg, "pos_capacity = 0\n").unwrap();

    let bad = tda(&["run", "--dataset", &ds, "--config", cfg.to_str().unwrap()]);
    assert!(!bad.status.success());

    let by_env = Command::new(env!("CARGO_BIN_EXE_tda"))
        .args(["run", "--dataset", &ds, "--config", cfg.to_str().unwrap()])
        .env("TDA_POS_CAPACITY", "2")
        .output()
        .unwrap();
    assert!(by_env.status.success(), "{}", stderr(&by_env));

    let by_flag = Command::new(env!("CARGO_BIN_EXE_tda"))
        .args(["run", "--dataset", &ds, "--config", cfg.to_str().unwrap(), "--pos-capacity", "2"])
        .env("TDA_POS_CAPACITY", "0")
        .output()
        .unwrap();
    assert!(by_flag.status.success(), "{}", stderr(&by_flag));
}

#[test]
fn grid_search_echoes_best_config_as_toml() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small_dataset(dir.path());
    let o = tda(&["grid-search", "--dataset", &ds, "--pos-capacity", "1,3", "--beta", "4,5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().filter(|l| l.starts_with(|c: char| c.is_ascii_digit())).count(), 4);
    let toml_part = out.split("# best").nth(1).unwrap();
    let toml_text: String = toml_part.lines().skip(1).collect::<Vec<_>>().join("\n");
    let layer = tda_core::ConfigLayer::parse(&toml_text).unwrap();
    assert!(layer.pos_capacity.is_some() && layer.pos_beta.is_some());
}

#[test]
fn oversized_grid_fails_with_class_name() {
    let o = tda(&[
        "grid-search",
        "--dataset",
        "/nonexistent.tdae",
        "--pos-capacity",
        "1,2,3",
        "--beta",
        "1,2",
        "--limit",
        "5",
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("GridTooLarge"), "{}", stderr(&o));
}

#[test]
fn dump_then_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small_dataset(dir.path());
    let dump = dir.path().join("caches.json");
    let o = tda(&["run", "--dataset", &ds, "--dump-caches", dump.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = dir.path().join("inspect.csv");
    let o = tda(&["inspect", dump.to_str().unwrap(), "--output", csv.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("[positive cache]"));
    assert!(std::fs::read_to_string(csv).unwrap().lines().count() > 1);
}

#[test]
fn missing_dump_is_reported_by_class() {
    let o = tda(&["inspect", "/nonexistent/caches.json"]);
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error: NoDumpAvailable"), "{}", stderr(&o));
}

#[test]
fn corrupt_dataset_is_reported_by_class() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("junk.tdae");
    std::fs::write(&path, b"NOPE and more bytes").unwrap();
    let o = tda(&["run", "--dataset", path.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("UnsupportedFormat"), "{}", stderr(&o));
}

#[test]
fn wide_precision_runs() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small_dataset(dir.path());
    let o = tda(&["run", "--dataset", &ds, "--precision", "f64", "--method", "zero-shot"]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn support_file_feeds_tip_adapter() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small_dataset(dir.path());
    let o = tda(&["run", "--dataset", &ds, "--method", "tip-adapter", "--support", &ds]);
    assert!(o.status.success(), "{}", stderr(&o));
    let other = dir.path().join("other.tdae");
    tda(&["gen-synth", "--output", other.to_str().unwrap(), "--dim", "8", "--classes", "5"]);
    let o = tda(&["run", "--dataset", &ds, "--method", "tip-adapter", "--support", other.to_str().unwrap()]);
    assert!(stderr(&o).contains("DimensionMismatch"), "{}", stderr(&o));
}
