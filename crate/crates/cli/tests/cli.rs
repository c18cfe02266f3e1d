use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
seed = 1
repeats = 2

[data]
synthetic_seed = 2

[data.synthetic]
n_subjects = 3
num_classes = 2
segment_len = 24
segments_per_subject = 4
noise_sigma = 0.3
channels = [{ role = "informative" }, { role = "noise" }]

[windowing]
width = 12
stride = 12

[model]
kind = "cnn1d"
conv = [{ filters = 2, kernel = 3, pool = 2 }]
hidden = [4]

[training]
initial_lr = 1e-2
max_epochs = 3

[ensemble]
k = 3

[selection]
k_top = 2

[selection.rl]
iterations = 4
"#;

fn randomhar(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_randomhar"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn generate_run_compare() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    std::fs::write(cwd.join("exp.toml"), CONFIG).unwrap();

    let out = randomhar(&["generate", "--config", "exp.toml", "--out", "data/d.csv"], cwd);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = std::fs::read_to_string(cwd.join("data/d.csv")).unwrap();
    assert!(csv.starts_with("subject,label,ch0_inf,ch1_noise\n"));

    let out = randomhar(&["run", "--config", "exp.toml", "--out", "a", "--jobs", "2"], cwd);
    assert!(out.status.success(), "{}", stderr(&out));
    let stdout = String::from_utf8_lossy(&out.stdout);
    for method in ["base", "topk", "all", "rl"] {
        assert!(stdout.contains(method), "{stdout}");
    }
    for file in ["report.json", "metrics.csv", "MANIFEST", "trace-r0-f0.json", "trace-r1-f2.json"] {
        assert!(cwd.join("a").join(file).exists(), "missing {file}");
    }

    let out = randomhar(&["run", "--config", "exp.toml", "--out", "b", "--seed", "9"], cwd);
    assert!(out.status.success(), "{}", stderr(&out));
    let read = |d: &str| -> serde_json::Value {
        serde_json::from_str(&std::fs::read_to_string(cwd.join(d).join("report.json")).unwrap()).unwrap()
    };
    assert_ne!(read("a")["config_fingerprint"], read("b")["config_fingerprint"]);
    assert_eq!(read("b")["config"]["seed"], 9);

    let out = randomhar(&["compare", "a", "b/report.json"], cwd);
    assert!(out.status.success(), "{}", stderr(&out));
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.contains("a/rl") && table.contains("b/base"), "{table}");
    assert!(table.contains("paired t-tests"), "{table}");

    let out = randomhar(&["compare", "--json", "a"], cwd);
    assert!(out.status.success());
    let parsed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(parsed["rows"].as_array().unwrap().len(), 4);
}

#[test]
fn invalid_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    std::fs::write(cwd.join("bad.toml"), CONFIG.replace("k = 3", "k = 3\np = 1.5")).unwrap();
    let out = randomhar(&["run", "--config", "bad.toml", "--out", "x"], cwd);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("ensemble.p"), "{}", stderr(&out));
    assert!(!cwd.join("x").exists());

    std::fs::write(cwd.join("typo.toml"), CONFIG.replace("max_epochs", "max_epoch")).unwrap();
    let out = randomhar(&["run", "--config", "typo.toml", "--out", "x"], cwd);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("max_epoch"), "{}", stderr(&out));

    let out = randomhar(&["run", "--config", "missing.toml"], cwd);
    assert!(!out.status.success());
}

#[test]
fn compare_rejects_bad_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    let out = randomhar(&["compare", "nowhere"], cwd);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("nowhere"), "{}", stderr(&out));

    std::fs::write(cwd.join("exp.toml"), CONFIG).unwrap();
    std::fs::write(cwd.join("three.toml"), CONFIG.replace("repeats = 2", "repeats = 3")).unwrap();
    assert!(randomhar(&["run", "--config", "exp.toml", "--out", "two"], cwd).status.success());
    assert!(randomhar(&["run", "--config", "three.toml", "--out", "three"], cwd).status.success());
    let out = randomhar(&["compare", "two", "three"], cwd);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("fold structures differ"), "{}", stderr(&out));
}
