use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
name = "small"

[data]
scenario = "camel-40"
side = 8

[model]
hidden_units = 4
rnn_state_dim = 3
code_dim = 3

[train]
epochs = 2

[decode]
samples = 2

[table]
seeds = [0]

[oracle]
length = 32
epochs = 3
"#;

fn tmc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tmc"))
        .current_dir(dir)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn setup(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), config).unwrap();
    dir
}

fn read(dir: &Path, rel: &str) -> String {
    fs::read_to_string(dir.join(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

#[test]
fn gen_data_is_reproducible() {
    let dir = setup(SMALL);
    let p = dir.path();
    assert_eq!(code(&tmc(p, &["gen-data", "--config", "run.toml"])), 0);
    let first = read(p, "runs/small/archive.json");
    assert_eq!(code(&tmc(p, &["gen-data", "--config", "run.toml", "--name", "again"])), 0);
    assert_eq!(first, read(p, "runs/again/archive.json"));
    for f in ["config.toml", "images/truth.pbm", "images/observations.pgm", "images/mask.pgm"] {
        assert!(p.join("runs/small").join(f).is_file(), "{f}");
    }
    assert_eq!(code(&tmc(p, &["gen-data", "--config", "run.toml", "--seed", "9", "--name", "other"])), 0);
    assert_ne!(first, read(p, "runs/other/archive.json"));
}

#[test]
fn train_and_segment_pipeline() {
    let dir = setup(SMALL);
    let p = dir.path();
    assert_eq!(code(&tmc(p, &["gen-data", "--config", "run.toml"])), 0);
    for kind in ["dmtmc", "svrnn", "vsl"] {
        let cfg = format!("{SMALL}\n").replace("[model]\n", &format!("[model]\nkind = \"{kind}\"\n"));
        fs::write(p.join(format!("{kind}.toml")), cfg).unwrap();
        let c = format!("{kind}.toml");
        let out = tmc(p, &["train", "--config", &c]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        assert!(read(p, "runs/small/trace.csv").lines().count() >= 3);
        assert_eq!(code(&tmc(p, &["segment", "--config", &c, "--samples", "1"])), 0);
        let a = read(p, "runs/small/results.json");
        assert_eq!(code(&tmc(p, &["segment", "--config", &c, "--samples", "1"])), 0);
        assert_eq!(a, read(p, "runs/small/results.json"));
        assert!(p.join(format!("runs/small/images/panel-{kind}.pgm")).is_file());
    }
}

#[test]
fn zero_epoch_training_succeeds() {
    let dir = setup(&SMALL.replace("epochs = 2", "epochs = 0"));
    let p = dir.path();
    assert_eq!(code(&tmc(p, &["gen-data", "--config", "run.toml"])), 0);
    assert_eq!(code(&tmc(p, &["train", "--config", "run.toml"])), 0);
    assert!(p.join("runs/small/checkpoint.json").is_file());
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = setup(SMALL);
    let p = dir.path();
    fs::write(p.join("unknown.toml"), "[train]\nepochs = 1\nspeed = 3\n").unwrap();
    assert_eq!(code(&tmc(p, &["gen-data", "--config", "unknown.toml"])), 2);
    fs::write(p.join("fraction.toml"), "[data]\nfraction = 1.5\n").unwrap();
    assert_eq!(code(&tmc(p, &["gen-data", "--config", "fraction.toml"])), 2);
    assert_eq!(code(&tmc(p, &["gen-data", "--config", "missing.toml"])), 2);
    assert_eq!(code(&tmc(p, &["train", "--config", "run.toml"])), 2);
    assert!(!p.join("runs/small").exists());
    assert_eq!(code(&tmc(p, &["no-such-command"])), 2);

    // A checkpoint whose tensors do not fit the configured architecture.
    assert_eq!(code(&tmc(p, &["gen-data", "--config", "run.toml"])), 0);
    assert_eq!(code(&tmc(p, &["train", "--config", "run.toml"])), 0);
    let ckpt = read(p, "runs/small/checkpoint.json");
    let tampered = ckpt.replacen("\"hidden_units\": 4", "\"hidden_units\": 5", 1);
    assert_ne!(ckpt, tampered);
    fs::write(p.join("runs/small/checkpoint.json"), tampered).unwrap();
    assert_eq!(code(&tmc(p, &["segment", "--config", "run.toml"])), 2);
}

#[test]
fn diverging_training_exits_with_three() {
    let dir = setup(&SMALL.replace("epochs = 2", "epochs = 20\nlr = 1e300\nmax_skips = 2"));
    let p = dir.path();
    assert_eq!(code(&tmc(p, &["gen-data", "--config", "run.toml"])), 0);
    let out = tmc(p, &["train", "--config", "run.toml"]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn repro_table_is_resumable() {
    let dir = setup(&SMALL.replace("scenario = \"camel-40\"\n", ""));
    let p = dir.path();
    let out = tmc(p, &["repro-table", "--config", "run.toml", "--jobs", "2"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let table = read(p, "runs/small/table.txt");
    for label in ["Cattle 40%", "Camel 40%", "Camel 60%", "VSL", "SVRNN", "d-mTMC"] {
        assert!(table.contains(label), "{label} missing from\n{table}");
    }
    let per_seed = read(p, "runs/small/per_seed.csv");
    let csv = read(p, "runs/small/table.csv");
    assert_eq!(per_seed.lines().count(), 1 + 9);
    assert!(p.join("runs/small/images/camel-40-seed0.pgm").is_file());

    let cell = p.join("runs/small/cells/camel-40/dmtmc-seed0/results.json");
    let before = fs::metadata(&cell).unwrap().modified().unwrap();
    let again = tmc(p, &["repro-table", "--config", "run.toml"]);
    assert_eq!(code(&again), 0);
    assert_eq!(fs::metadata(&cell).unwrap().modified().unwrap(), before);
    assert_eq!(read(p, "runs/small/per_seed.csv"), per_seed);
    assert_eq!(read(p, "runs/small/table.csv"), csv);

    fs::remove_file(&cell).unwrap();
    assert_eq!(code(&tmc(p, &["repro-table", "--config", "run.toml"])), 0);
    assert_eq!(read(p, "runs/small/per_seed.csv"), per_seed);
}

#[test]
fn oracle_reports_both_decoders() {
    let dir = setup(SMALL);
    let p = dir.path();
    let out = tmc(p, &["oracle", "--config", "run.toml"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&read(p, "runs/small/results.json")).unwrap();
    for key in ["map_error_rate", "dmtmc_error_rate", "log_evidence"] {
        assert!(report[key].is_number(), "{key}");
    }
}
