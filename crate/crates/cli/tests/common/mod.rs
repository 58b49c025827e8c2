#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_mvlabel"))
}

pub fn mock() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_mvlabel-mock-adapter"))
}

pub fn corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/corpus")
}

pub fn mvlabel(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .env_remove("MVLABEL_DATA_ROOT")
        .env_remove("RUST_LOG")
        .output()
        .expect("mvlabel runs")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Runs every corpus case listed in `expected.json` and checks that exactly
/// the files on disk are listed. Returns one message per mismatch.
pub fn check_corpus() -> (usize, Vec<String>) {
    let root = corpus();
    let expected: serde_json::Map<String, serde_json::Value> =
        serde_json::from_str(&std::fs::read_to_string(root.join("expected.json")).unwrap())
            .unwrap();
    let mut failures = Vec::new();
    let mut on_disk = Vec::new();
    for dir in ["detections", "rasters", "calibrations", "campaigns"] {
        for e in std::fs::read_dir(root.join(dir)).unwrap() {
            on_disk.push(format!(
                "{dir}/{}",
                e.unwrap().file_name().to_string_lossy()
            ));
        }
    }
    on_disk.sort();
    let listed: Vec<String> = expected.keys().cloned().collect();
    if on_disk != listed {
        failures.push(format!(
            "corpus files {on_disk:?} differ from expected.json entries {listed:?}"
        ));
    }
    for (name, case) in &expected {
        let tmp = tempfile::tempdir().unwrap();
        let file = root.join(name);
        let args: Vec<String> = case["args"]
            .as_array()
            .unwrap()
            .iter()
            .map(|a| {
                a.as_str()
                    .unwrap()
                    .replace("{file}", &file.display().to_string())
                    .replace("{tmp}", &tmp.path().display().to_string())
                    .replace("{corpus}", &root.display().to_string())
            })
            .collect();
        let argv: Vec<&str> = args.iter().map(String::as_str).collect();
        let out = mvlabel(&argv);
        let err = stderr(&out);
        let code = case["exit"].as_i64().unwrap() as i32;
        let pattern = case["contains"].as_str().unwrap();
        let diagnostic = err.lines().any(|l| l.starts_with("error: "));
        if out.status.code() != Some(code) || !diagnostic || !err.contains(pattern) {
            failures.push(format!(
                "{name}: expected exit {code} with `{pattern}`, got {:?}: {}",
                out.status.code(),
                err.trim()
            ));
        }
    }
    (expected.len(), failures)
}

pub fn write(path: &Path, text: &str) {
    if let Some(p) = path.parent() {
        std::fs::create_dir_all(p).unwrap();
    }
    std::fs::write(path, text).unwrap();
}

/// Campaign config with a memorizing mock trainer and an echo detector
/// replaying `echo`, over `rounds` rounds (ALT first, then PLT).
pub fn mock_campaign(
    target: &Path,
    echo: &Path,
    out: &Path,
    rounds: usize,
    launches: &Path,
) -> serde_json::Value {
    let mock = mock().display().to_string();
    let detector = serde_json::json!({
        "role": "detector",
        "command": [mock, "detector", "--invocation", "{invocation}", "--echo", echo, "--log", launches],
        "timeout_secs": 60
    });
    let trainer = serde_json::json!({
        "role": "trainer",
        "command": [mock, "trainer", "--invocation", "{invocation}", "--log", launches],
        "timeout_secs": 60
    });
    let plans: Vec<serde_json::Value> = (0..rounds)
        .map(|i| {
            if i == 0 {
                serde_json::json!({"labeler": "echo", "label_kind": "ALT", "training_set": ["ALT"],
                    "training_mode": {"mode": "FS"}, "trainer": "memorize", "detector": "echo"})
            } else {
                serde_json::json!({"labeler": "echo", "label_kind": "PLT", "labeler_model": "previous",
                    "training_set": ["PLT"], "training_mode": {"mode": "FT", "init_model": "previous"},
                    "trainer": "memorize", "detector": "echo"})
            }
        })
        .collect();
    serde_json::json!({
        "name": "mock",
        "output_dir": out,
        "target": target,
        "adapters": {"echo": detector, "memorize": trainer},
        "labeling": {"kernel": {"size": 21, "sigma": 2.5}},
        "baseline": {"detector": "echo"},
        "rounds": plans
    })
}
