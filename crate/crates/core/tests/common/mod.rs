#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use agrichat::gateway::{decode_message, OutboundMessage};

pub const START_TS: i64 = 1_699_981_200;
pub const TICK_SECONDS: i64 = 600;

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_agrichat")
}

pub fn data_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

pub fn golden_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("golden")
        .join(name)
}

pub fn agrichat(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("run agrichat")
}

/// Runs `replay` on `script` and returns the transcript written to `--out`.
pub fn replay(script: &Path, data: Option<&Path>, extra: &[&str]) -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = dir.path().join("out.log");
    let mut args = vec![
        "replay",
        "--script",
        script.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    if let Some(d) = data {
        args.extend(["--data", d.to_str().unwrap()]);
    }
    args.extend_from_slice(extra);
    let o = agrichat(&args);
    if !o.status.success() {
        return Err(format!(
            "replay exited {:?}: {}",
            o.status.code(),
            String::from_utf8_lossy(&o.stderr)
        ));
    }
    std::fs::read_to_string(&out).map_err(|e| e.to_string())
}

/// Writes a script to a temp dir and returns the dir (kept alive by the caller).
pub fn write_script(text: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scenario.script");
    std::fs::write(&path, text).unwrap();
    (dir, path)
}

pub fn messages(transcript: &str) -> Vec<OutboundMessage> {
    transcript
        .lines()
        .map(|l| decode_message(l.as_bytes()).expect("transcript frame decodes"))
        .collect()
}

/// `(ts, body)` pairs from a store log file.
pub fn log_records(path: &Path) -> Vec<(i64, String)> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            (v["ts"].as_i64().unwrap(), v["body"].to_string())
        })
        .collect()
}

pub fn tick_of(ts: i64) -> i64 {
    (ts - START_TS) / TICK_SECONDS
}
