//! End-to-end tests of the `fedrd` binary: artifact layout, exit codes,
//! reproducibility, sweeps, and data generation.

use std::path::Path;
use std::process::{Command, Output};

use fedrd_core::data::{gen_domains, load_csv_dataset, SynthConfig};

const BIN: &str = env!("CARGO_BIN_EXE_fedrd");

const SMALL_CONFIG: &str = r#"
[federation]
num_clients = 2
rounds = 2
local_epochs = 1
batch_size = 16
learning_rate = 0.1
seed = 11
held_out_domain = 2

[model]
input_dim = 2
hidden_dims = [4]
num_classes = 3

[data]
num_domains = 3
num_classes = 3
samples_per_domain = 60
domain_rotation_degrees = [0.0, 40.0, 80.0]
class_center_radius = 2.0
noise_sigma = 0.4
dirichlet_alpha = 0.5
"#;

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "command {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn run_writes_all_artifacts_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_CONFIG);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    run_ok(&["run", "--config", cfg.to_str().unwrap(), "--out", out_a.to_str().unwrap()]);
    run_ok(&["run", "--config", cfg.to_str().unwrap(), "--out", out_b.to_str().unwrap()]);

    for name in ["metrics.csv", "trace.csv", "summary.json", "manifest.json"] {
        assert!(out_a.join(name).is_file(), "missing {name}");
    }
    for name in ["metrics.csv", "trace.csv", "summary.json"] {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn serial_flag_reproduces_parallel_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_CONFIG);
    let par = dir.path().join("par");
    let ser = dir.path().join("ser");
    run_ok(&["run", "--config", cfg.to_str().unwrap(), "--out", par.to_str().unwrap()]);
    run_ok(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        ser.to_str().unwrap(),
        "--serial",
    ]);
    for name in ["metrics.csv", "trace.csv"] {
        let a = std::fs::read(par.join(name)).unwrap();
        let b = std::fs::read(ser.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between parallel and serial");
    }
}

#[test]
fn seed_override_changes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_CONFIG);
    let base = dir.path().join("base");
    let other = dir.path().join("other");
    run_ok(&["run", "--config", cfg.to_str().unwrap(), "--out", base.to_str().unwrap()]);
    run_ok(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        other.to_str().unwrap(),
        "--seed",
        "4242",
    ]);
    let a = std::fs::read(base.join("metrics.csv")).unwrap();
    let b = std::fs::read(other.join("metrics.csv")).unwrap();
    assert_ne!(a, b);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(other.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["seed"], 4242);
}

#[test]
fn sweep_expands_into_run_directories() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL_CONFIG.replace("local_epochs = 1", "local_epochs = [1, 2, 3]");
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("sweep");
    run_ok(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--sweep",
    ]);

    let mut manifests = Vec::new();
    for (i, epochs) in [1u64, 2, 3].iter().enumerate() {
        let run_dir = out.join(format!("run_{i:03}"));
        assert!(run_dir.join("summary.json").is_file());
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(run_dir.join("manifest.json")).unwrap())
                .unwrap();
        assert_eq!(manifest["federation"]["local_epochs"], *epochs);
        manifests.push(manifest);
    }
    // The manifests agree on everything in the config echo except E.
    for m in &mut manifests {
        m["federation"]["local_epochs"] = 0.into();
    }
    assert_eq!(manifests[0]["federation"], manifests[1]["federation"]);
    assert_eq!(manifests[1]["federation"], manifests[2]["federation"]);
    assert_eq!(manifests[0]["data"], manifests[2]["data"]);
}

#[test]
fn list_field_without_sweep_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL_CONFIG.replace("local_epochs = 1", "local_epochs = [1, 2]");
    let cfg = write_config(dir.path(), &text);
    let out = run(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_errors_exit_one_and_name_the_field() {
    let dir = tempfile::tempdir().unwrap();

    let text = SMALL_CONFIG.replace("rounds = 2", "");
    let cfg = write_config(dir.path(), &text);
    let out = run(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rounds"));

    let text = SMALL_CONFIG.replace("seed = 11", "seed = 11\ntau = 1.5");
    let cfg = write_config(dir.path(), &text);
    let out = run(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("y").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tau"));
}

#[test]
fn missing_config_file_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "run",
        "--config",
        dir.path().join("nope.toml").to_str().unwrap(),
        "--out",
        dir.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unwritable_out_dir_exits_two_without_partial_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_CONFIG);
    // A path that nests under a regular file cannot be created.
    let blocker = dir.path().join("blocker");
    std::fs::write(&blocker, "x").unwrap();
    let out_dir = blocker.join("sub");
    let out = run(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_dir.exists());
}

#[test]
fn gen_data_roundtrips_through_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_CONFIG);
    let out = dir.path().join("data");
    run_ok(&[
        "gen-data",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);

    let scfg = SynthConfig {
        num_domains: 3,
        num_classes: 3,
        samples_per_domain: 60,
        feature_dim: 2,
        domain_rotation_degrees: vec![0.0, 40.0, 80.0],
        class_center_radius: 2.0,
        noise_sigma: 0.4,
        dirichlet_alpha: 0.5,
    };
    let expected = gen_domains(&scfg, 11).unwrap();
    for dom in &expected {
        let path = out.join(format!("domain_{}.csv", dom.domain_id));
        assert!(path.is_file());
        let loaded = load_csv_dataset(&path).unwrap();
        assert_eq!(&loaded, dom);
    }
}

#[test]
fn gen_data_validates_before_writing() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL_CONFIG.replace("num_domains = 3", "num_domains = 0");
    let cfg = write_config(dir.path(), &text);
    let out_dir = dir.path().join("data");
    let out = run(&[
        "gen-data",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out_dir.exists());
}
