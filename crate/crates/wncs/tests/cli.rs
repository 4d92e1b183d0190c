//! Drives the `wncs` binary end to end on a tiny configuration.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

const CONFIG: &str = r#"
seed = 9

[plant]
kind = "double-pendulum"
nonlinearity = "tanh"

[data]
n_traj = 6
n_steps = 200

[training]
epochs = 40
batch_size = 200

[error_model]
samples = 60

[episode]
slots = 80
episodes = 2
"#;

fn wncs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wncs"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: Output) -> PathBuf {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    PathBuf::from(String::from_utf8(out.stdout).unwrap().trim())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A trained model and fitted coefficients shared by the tests.
struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
}

fn fixture() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let config = root.join("tiny.toml");
        std::fs::write(&config, CONFIG).unwrap();
        let c = s(&config);
        ok(wncs(&[
            "gen-data",
            "--config",
            c,
            "--out",
            s(&root.join("gen")),
        ]));
        ok(wncs(&[
            "train",
            "--config",
            c,
            "--data",
            s(&root.join("gen/dataset.bin")),
            "--out",
            s(&root.join("train")),
        ]));
        ok(wncs(&[
            "fit-error",
            "--config",
            c,
            "--model",
            s(&root.join("train/model.bin")),
            "--out",
            s(&root.join("fit")),
        ]));
        Fixture {
            _dir: dir,
            root,
            config,
        }
    })
}

fn run_args<'a>(f: &'a Fixture, model: &'a str, coeffs: &'a str, out: &'a str) -> Vec<&'a str> {
    vec![
        "run",
        "--config",
        s(&f.config),
        "--model",
        model,
        "--coeffs",
        coeffs,
        "--out",
        out,
    ]
}

#[test]
fn missing_model_exits_with_usage_code_and_names_path() {
    let f = fixture();
    let missing = f.root.join("nowhere/model.bin");
    let coeffs = f.root.join("fit/error_coeffs.json");
    let out = f.root.join("run-missing");
    let res = wncs(&run_args(f, s(&missing), s(&coeffs), s(&out)));
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains(s(&missing)));
}

#[test]
fn missing_config_exits_with_usage_code() {
    let res = wncs(&[
        "gen-data",
        "--config",
        "/nonexistent/cfg.toml",
        "--out",
        "/tmp/unused",
    ]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(wncs(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(wncs(&["--help"]).status.code(), Some(0));
}

#[test]
fn empty_sweep_writes_header_only() {
    let f = fixture();
    let out = f.root.join("sweep-empty");
    let dir = ok(wncs(&[
        "sweep",
        "--config",
        s(&f.config),
        "--axis",
        "outage",
        "--values",
        "",
        "--out",
        s(&out),
    ]));
    let text = std::fs::read_to_string(dir.join("sweep_outage.csv")).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("axis,value,p_sc"));
}

#[test]
fn episode_trace_replays_summary_total_cost() {
    let f = fixture();
    let model = f.root.join("train/model.bin");
    let coeffs = f.root.join("fit/error_coeffs.json");
    let out = f.root.join("run-replay");
    let dir = ok(wncs(&run_args(f, s(&model), s(&coeffs), s(&out))));
    let lambda = 1.0;

    let mut summary = csv::Reader::from_path(dir.join("summary.csv")).unwrap();
    let headers = summary.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (ep_col, total_col) = (col("episode"), col("total_cost"));
    let mut checked = 0;
    for row in summary.records() {
        let row = row.unwrap();
        let k: usize = row[ep_col].parse().unwrap();
        let reported: f64 = row[total_col].parse().unwrap();

        let mut trace = csv::Reader::from_path(dir.join(format!("episodes/ep_{k}.csv"))).unwrap();
        let th = trace.headers().unwrap().clone();
        let a_col = th.iter().position(|h| h == "a").unwrap();
        let cost_col = th.iter().position(|h| h == "cost").unwrap();
        let (mut j, mut sent, mut n) = (0.0, 0.0, 0.0);
        for r in trace.records() {
            let r = r.unwrap();
            j += r[cost_col].parse::<f64>().unwrap();
            sent += r[a_col].parse::<f64>().unwrap();
            n += 1.0;
        }
        let replayed = (j + lambda * sent) / n;
        assert!(
            (replayed - reported).abs() <= 1e-12 * reported.abs().max(1.0),
            "episode {k}: replayed {replayed} vs {reported}"
        );
        checked += 1;
    }
    assert_eq!(checked, 2);
}

#[test]
fn manifest_lists_outputs_with_hashes() {
    let f = fixture();
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(f.root.join("fit/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "fit-error");
    assert_eq!(manifest["seed"], 9);
    let outputs = manifest["outputs"].as_object().unwrap();
    for name in [
        "error_samples.csv",
        "degree_table.csv",
        "error_coeffs.json",
        "lqr_gain.csv",
    ] {
        assert_eq!(outputs[name].as_str().unwrap().len(), 64, "{name}");
    }
    assert!(manifest["inputs"]["model"]["sha256"].is_string());
}

#[test]
fn seed_override_changes_dataset() {
    let f = fixture();
    let a = f.root.join("gen-seed-a");
    let b = f.root.join("gen-seed-b");
    ok(wncs(&[
        "gen-data",
        "--config",
        s(&f.config),
        "--seed",
        "100",
        "--out",
        s(&a),
    ]));
    ok(wncs(&[
        "gen-data",
        "--config",
        s(&f.config),
        "--seed",
        "101",
        "--out",
        s(&b),
    ]));
    let da = std::fs::read(a.join("dataset.csv")).unwrap();
    let db = std::fs::read(b.join("dataset.csv")).unwrap();
    assert_ne!(da, db);
    assert_ne!(da, std::fs::read(f.root.join("gen/dataset.csv")).unwrap());
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            wncs::config::ExperimentConfig::load(&path)
                .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 3);
}
