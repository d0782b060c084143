#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn goldens() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

#[derive(Debug, Clone)]
pub struct Case {
    pub name: String,
    pub exit: i32,
    pub args: Vec<String>,
}

impl Case {
    pub fn machine(&self) -> bool {
        !self.args.iter().any(|a| a == "--output")
    }
}

/// Cases listed in `fixtures/cases.txt` as `name | exit | args`.
pub fn cases() -> Vec<Case> {
    let text = std::fs::read_to_string(fixtures().join("cases.txt")).expect("case manifest");
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            let parts: Vec<&str> = l.splitn(3, '|').map(str::trim).collect();
            Case {
                name: parts[0].into(),
                exit: parts[1].parse().expect("exit status"),
                args: parts[2].split_whitespace().map(String::from).collect(),
            }
        })
        .collect()
}

pub struct Run {
    pub stdout: String,
    pub stderr: String,
    pub status: i32,
}

pub fn gmls(args: &[String]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_gmls"))
        .args(args)
        .current_dir(fixtures())
        .env_remove("GMLS_TOL")
        .output()
        .expect("run gmls");
    Run {
        stdout: String::from_utf8(out.stdout).expect("utf-8 stdout"),
        stderr: String::from_utf8(out.stderr).expect("utf-8 stderr"),
        status: out.status.code().unwrap_or(-1),
    }
}

pub fn run_case(case: &Case) -> Run {
    let mut args = case.args.clone();
    if case.machine() {
        args.extend(["--output".into(), "machine".into()]);
    }
    gmls(&args)
}

/// Compare against `golden/<name>.out`, rewriting it instead when
/// `GMLS_UPDATE_GOLDEN` is set.
pub fn check_golden(case: &Case, stdout: &str) -> Result<(), String> {
    let path = goldens().join(format!("{}.out", case.name));
    if std::env::var_os("GMLS_UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(goldens()).map_err(|e| e.to_string())?;
        std::fs::write(&path, stdout).map_err(|e| e.to_string())?;
        return Ok(());
    }
    let expected = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if expected == stdout {
        Ok(())
    } else {
        let line = expected.lines().zip(stdout.lines()).position(|(a, b)| a != b).map_or(0, |i| i + 1);
        Err(format!("{}: output differs from golden near line {line}", case.name))
    }
}
