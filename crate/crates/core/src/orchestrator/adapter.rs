//! Launching adapter processes.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;

use super::protocol::{AdapterRole, INVOCATION_ENV};
use super::{AdapterFailure, FailureKind};
use crate::fsio;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdapterSpec {
    pub role: AdapterRole,
    /// Program followed by arguments; `{invocation}` and `{output_dir}` are
    /// substituted.
    pub command: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workdir: Option<PathBuf>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default)]
    pub env: BTreeMap<String, String>,
}

fn default_timeout() -> f64 {
    3600.0
}

impl AdapterSpec {
    pub fn new(role: AdapterRole, command: Vec<String>) -> Self {
        Self {
            role,
            command,
            workdir: None,
            timeout_secs: default_timeout(),
            env: BTreeMap::new(),
        }
    }

    pub fn validate(&self, id: &str) -> Result<(), String> {
        if self.command.is_empty() || self.command[0].is_empty() {
            return Err(format!("adapter `{id}`: command must be non-empty"));
        }
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(format!(
                "adapter `{id}`: timeout must be positive, got {}",
                self.timeout_secs
            ));
        }
        Ok(())
    }

    /// Digest of everything that determines the adapter's behavior.
    pub fn digest(&self) -> String {
        fsio::sha256_hex(&serde_json::to_vec(self).expect("spec serializes"))
    }
}

const STDERR_TAIL: u64 = 4096;

fn tail(path: &Path) -> String {
    use std::io::{Read, Seek, SeekFrom};
    let Ok(mut f) = File::open(path) else {
        return String::new();
    };
    let len = f.metadata().map(|m| m.len()).unwrap_or(0);
    let _ = f.seek(SeekFrom::Start(len.saturating_sub(STDERR_TAIL)));
    let mut buf = Vec::new();
    let _ = f.read_to_end(&mut buf);
    String::from_utf8_lossy(&buf).into_owned()
}

/// Runs the adapter to completion. Output streams go to
/// `<log_stem>.stdout` / `<log_stem>.stderr`.
pub fn run_adapter(
    id: &str,
    spec: &AdapterSpec,
    invocation: &Path,
    output_dir: &Path,
    log_stem: &Path,
) -> Result<(), AdapterFailure> {
    let fail = |kind: FailureKind, stderr: String| AdapterFailure {
        adapter: id.to_string(),
        kind,
        stderr,
    };
    let expand = |arg: &str| {
        arg.replace("{invocation}", &invocation.display().to_string())
            .replace("{output_dir}", &output_dir.display().to_string())
    };
    let stdout_path = log_stem.with_extension("stdout");
    let stderr_path = log_stem.with_extension("stderr");
    let open = |p: &Path| {
        File::create(p).map_err(|e| {
            fail(
                FailureKind::Spawn(format!("{}: {e}", p.display())),
                String::new(),
            )
        })
    };
    let stdout = open(&stdout_path)?;
    let stderr = open(&stderr_path)?;

    let mut cmd = Command::new(expand(&spec.command[0]));
    cmd.args(spec.command[1..].iter().map(|a| expand(a)))
        .envs(&spec.env)
        .env(INVOCATION_ENV, invocation)
        .stdin(Stdio::null())
        .stdout(stdout)
        .stderr(stderr);
    if let Some(dir) = &spec.workdir {
        cmd.current_dir(dir);
    }
    log::info!("launching adapter `{id}`: {:?}", spec.command);
    let mut child = cmd.spawn().map_err(|e| {
        fail(
            FailureKind::Spawn(format!("{}: {e}", spec.command[0])),
            String::new(),
        )
    })?;
    let timeout = Duration::from_secs_f64(spec.timeout_secs);
    let status = match child.wait_timeout(timeout) {
        Ok(Some(status)) => status,
        Ok(None) => {
            let _ = child.kill();
            let _ = child.wait();
            return Err(fail(
                FailureKind::Timeout {
                    secs: spec.timeout_secs,
                },
                tail(&stderr_path),
            ));
        }
        Err(e) => {
            let _ = child.kill();
            let _ = child.wait();
            return Err(fail(FailureKind::Spawn(e.to_string()), tail(&stderr_path)));
        }
    };
    if !status.success() {
        return Err(fail(
            FailureKind::ExitCode {
                code: status.code(),
            },
            tail(&stderr_path),
        ));
    }
    Ok(())
}

#[cfg(all(test, unix))]
mod tests {
    use super::*;

    fn sh(script: &str) -> AdapterSpec {
        AdapterSpec::new(
            AdapterRole::Detector,
            vec!["/bin/sh".into(), "-c".into(), script.into()],
        )
    }

    fn run(spec: &AdapterSpec) -> (tempfile::TempDir, Result<(), AdapterFailure>) {
        let dir = tempfile::tempdir().unwrap();
        let inv = dir.path().join("invocation.json");
        std::fs::write(&inv, "{}").unwrap();
        let r = run_adapter("t", spec, &inv, dir.path(), &dir.path().join("adapter"));
        (dir, r)
    }

    #[test]
    fn success_captures_streams_and_expands_placeholders() {
        let (dir, r) = run(&sh(
            "echo out:$MVLABEL_INVOCATION; echo err >&2; touch \"$0\"",
        ));
        r.unwrap();
        let out = std::fs::read_to_string(dir.path().join("adapter.stdout")).unwrap();
        assert!(out.starts_with("out:") && out.trim_end().ends_with("invocation.json"));
        assert_eq!(
            std::fs::read_to_string(dir.path().join("adapter.stderr")).unwrap(),
            "err\n"
        );

        let spec = AdapterSpec::new(
            AdapterRole::Detector,
            vec![
                "/bin/sh".into(),
                "-c".into(),
                "cp \"$1\" \"$2/copied.json\"".into(),
                "sh".into(),
                "{invocation}".into(),
                "{output_dir}".into(),
            ],
        );
        let (dir, r) = run(&spec);
        r.unwrap();
        assert!(dir.path().join("copied.json").exists());
    }

    #[test]
    fn nonzero_exit_reported_with_stderr() {
        let (_d, r) = run(&sh("echo boom >&2; exit 7"));
        let e = r.unwrap_err();
        assert_eq!(e.kind, FailureKind::ExitCode { code: Some(7) });
        assert_eq!(e.stderr, "boom\n");
    }

    #[test]
    fn timeout_kills_child() {
        let mut spec = sh("sleep 5");
        spec.timeout_secs = 0.2;
        let start = std::time::Instant::now();
        let (_d, r) = run(&spec);
        assert!(matches!(r.unwrap_err().kind, FailureKind::Timeout { .. }));
        assert!(start.elapsed() < Duration::from_secs(4));
    }

    #[test]
    fn missing_program_is_a_spawn_failure() {
        let spec = AdapterSpec::new(AdapterRole::Detector, vec!["/nonexistent/adapter".into()]);
        let (_d, r) = run(&spec);
        assert!(matches!(r.unwrap_err().kind, FailureKind::Spawn(_)));
    }

    #[test]
    fn spec_validation() {
        assert!(AdapterSpec::new(AdapterRole::Trainer, vec![])
            .validate("x")
            .is_err());
        let mut s = sh("true");
        s.timeout_secs = 0.0;
        assert!(s.validate("x").is_err());
        assert!(sh("true").validate("x").is_ok());
        assert_ne!(sh("true").digest(), sh("false").digest());
    }
}
