//! End-to-end runs on a tiny scene, through the library and the CLI binary.

use std::path::Path;
use std::process::Command;

use chanmap::config;
use chanmap::pipeline::{
    experiment_split, generate_dataset, run_dataset_size_sweep, run_experiment, run_point, select_subset,
    split_indices, Mode,
};

const TINY: &str = r#"
[scene]
room_size = [10.0, 10.0, 3.0]
max_reflection_order = 1
reflection_coefficient = 0.5
max_paths = 2

[scene.antennas]
rows = 2
cols = 2
spacing = 1.0
center = [5.0, 5.0]
height = 2.5

[[scene.user_grids]]
origin = [4.2, 4.1, 1.0]
extent = [0.06, 0.05]
spacing = 0.01

[frequency]
uplink_hz = 2.4e9
downlink_hz = 2.5e9
bandwidth_hz = 2.0e7
subcarriers = 4

[model]
hidden_layers = [16, 16]

[train]
epochs = 3
batch_size = 8

[experiment]
mode = "cross_band"
subset_sizes = [1, 4]
draws = 2
train_fractions = [0.5, 1.0]
size_sweep_subset = 2
snr = 1.0e4
seed = 3
"#;

fn chanmap() -> Command {
    Command::new(env!("CARGO_BIN_EXE_chanmap"))
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("tiny.toml");
    std::fs::write(&path, TINY).unwrap();
    path
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = config::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            let scene = chanmap::scene::build_scene(cfg.scene.clone()).unwrap();
            assert!(scene.num_users() > 1000, "{}", path.display());
            seen += 1;
        }
    }
    assert!(seen >= 3);
    let paper = config::load(dir.join("paper_scale.toml")).unwrap();
    assert_eq!(paper.scene.antennas.len(), 64);
    assert_eq!(paper.dl_plan.num_subcarriers(), 64);
    let desk = config::load(dir.join("desk.toml")).unwrap();
    assert_eq!(desk.scene.antennas.len(), 16);
    assert_eq!(desk.dl_plan.num_subcarriers(), 16);
}

#[test]
fn split_is_a_disjoint_cover() {
    for n in [2usize, 5, 42, 1000] {
        let s = split_indices(n, 9).unwrap();
        assert_eq!(s.train.len() + s.test.len(), n);
        assert!(!s.test.is_empty());
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..n).collect::<Vec<_>>());
    }
    assert_eq!(split_indices(1000, 9).unwrap().train.len(), 800);
    assert!(split_indices(1, 0).is_err());
}

#[test]
fn subset_draws_are_seeded() {
    assert_eq!(select_subset(16, 4, 5).unwrap(), select_subset(16, 4, 5).unwrap());
    assert_eq!(select_subset(16, 4, 5).unwrap().len(), 4);
    assert!(select_subset(4, 5, 0).is_err());
    assert!(select_subset(4, 0, 0).is_err());
}

#[test]
fn library_sweep_bounds_hold() {
    let cfg = config::parse(TINY).unwrap();
    assert_eq!(cfg.mode, Mode::CrossBand);
    let dataset = generate_dataset(&cfg).unwrap();
    assert_eq!(dataset.len(), 7 * 6);
    assert_eq!(dataset.ul_plan().center_hz(), 2.4e9);

    let runs = run_experiment(&cfg, &dataset, &mut |_, _| {}).unwrap();
    assert_eq!(runs.len(), 4);
    for run in &runs {
        let r = &run.report;
        assert_eq!(run.history.len(), 3);
        assert!(r.rate_upper >= r.rate_lower - 1e-12);
        assert!(r.rate_upper >= r.rate_predicted - 1e-9);
        assert!(r.test_nmse.is_finite() && r.test_nmse >= 0.0);
        assert_eq!(r.subset.len(), r.subset_size);
    }
    // The full subset makes the lower bound coincide with the upper bound.
    let full = runs.iter().find(|r| r.report.subset_size == 4).unwrap();
    assert!((full.report.rate_upper - full.report.rate_lower).abs() < 1e-12);

    let sweep = run_dataset_size_sweep(&cfg, &dataset, &mut |_, _| {}).unwrap();
    assert_eq!(sweep.len(), 4);
    assert!(sweep.iter().all(|r| r.report.subset_size == 2));
}

#[test]
fn run_point_is_reproducible() {
    let cfg = config::parse(TINY).unwrap();
    let dataset = generate_dataset(&cfg).unwrap();
    let split = experiment_split(&cfg, &dataset).unwrap();
    let a = run_point(&cfg, &dataset, &split, 2, 1, 1.0, &mut |_, _| {}).unwrap();
    let b = run_point(&cfg, &dataset, &split, 2, 1, 1.0, &mut |_, _| {}).unwrap();
    assert_eq!(a.bundle, b.bundle);
    assert_eq!(a.report.rate_predicted, b.report.rate_predicted);
}

#[test]
fn cli_subcommands_produce_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("out");
    let run = |args: &[&str]| {
        let status = chanmap()
            .args(args)
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        assert!(
            status.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&status.stderr)
        );
        status
    };

    run(&["generate"]);
    let dataset = out.join("dataset.bin");
    assert!(dataset.exists());

    let bij = run(&["bijectivity", "--dataset", dataset.to_str().unwrap(), "--subset", "0,2"]);
    assert!(String::from_utf8_lossy(&bij.stdout).contains("separable"));
    let csv = std::fs::read_to_string(out.join("bijectivity.csv")).unwrap();
    assert!(csv.starts_with("subset,min_pairwise_distance"));

    let train = run(&[
        "train",
        "--dataset",
        dataset.to_str().unwrap(),
        "--subset-size",
        "2",
        "--draw",
        "1",
    ]);
    assert!(String::from_utf8_lossy(&train.stderr).contains("epoch"));
    let history = std::fs::read_to_string(out.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 1 + 3);

    let model = out.join("model.bin");
    run(&[
        "eval",
        "--model",
        model.to_str().unwrap(),
        "--dataset",
        dataset.to_str().unwrap(),
    ]);
    let train_csv = std::fs::read_to_string(out.join("train.csv")).unwrap();
    let eval_csv = std::fs::read_to_string(out.join("eval.csv")).unwrap();
    // Predicted rate of the saved model matches the rate reported at training time.
    let field = |text: &str, name: &str| -> String {
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().unwrap().split(',').collect();
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        row[header.iter().position(|h| *h == name).unwrap()].to_string()
    };
    assert_eq!(field(&train_csv, "rate_predicted"), field(&eval_csv, "rate_predicted"));

    run(&["sweep", "--epochs", "1"]);
    let rates = std::fs::read_to_string(out.join("rates.csv")).unwrap();
    assert_eq!(
        rates.lines().next().unwrap(),
        "mode,subset_size,draw,seed,snr,rate_predicted,rate_upper,rate_lower,test_nmse,train_fraction,wall_time_s"
    );
    assert_eq!(rates.lines().count(), 1 + 4);
    assert!(out.join("dataset_size.csv").exists());
}

#[test]
fn cli_reports_errors_with_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());

    let missing = chanmap()
        .args([
            "train",
            "--dataset",
            "/nonexistent/dataset.bin",
            "--subset-size",
            "1",
            "--config",
        ])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("error:"));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[experiment]\nmode = \"sideways\"\n").unwrap();
    let status = chanmap()
        .args(["generate", "--config"])
        .arg(&bad)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap()
        .status;
    assert!(!status.success());

    let status = chanmap().arg("bogus").output().unwrap().status;
    assert!(!status.success());
}
