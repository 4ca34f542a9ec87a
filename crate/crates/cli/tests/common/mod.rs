//! Helpers shared by the CLI test targets.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_stressbench"))
}

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn stressbench<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(bin()).args(args).output().expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Generates a synthetic dataset and returns its config path.
pub fn synth(dir: &Path, n: usize, size: usize) -> PathBuf {
    let o = stressbench([
        "synth".to_string(),
        "--out".into(),
        dir.display().to_string(),
        "--n".into(),
        n.to_string(),
        "--size".into(),
        size.to_string(),
    ]);
    assert!(o.status.success(), "synth failed: {}", stderr(&o));
    dir.join("config.toml")
}

/// Scorer command line for the degrade stub over a synthetic dataset.
pub fn degrade_cmd(synth_dir: &Path, extra: &str) -> String {
    let quote = |p: &Path| shell_quote(&p.display().to_string());
    format!(
        "{} stub-scorer --config {} --mode degrade --scores {} {extra}",
        quote(&bin()),
        quote(&synth_dir.join("config.toml")),
        quote(&synth_dir.join("stub_scores.csv")),
    )
}

fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', "'\\''"))
}

/// `stressbench run` with the degrade stub; returns the process output.
pub fn run_degrade(synth_dir: &Path, out: &Path, extra_stub: &str, extra_run: &[&str]) -> Output {
    let cmd = degrade_cmd(synth_dir, extra_stub);
    let mut args: Vec<String> = vec![
        "run".into(),
        "--config".into(),
        synth_dir.join("config.toml").display().to_string(),
        "--out".into(),
        out.display().to_string(),
        "--scorer-cmd".into(),
        cmd,
    ];
    args.extend(extra_run.iter().map(|s| s.to_string()));
    stressbench(args)
}
