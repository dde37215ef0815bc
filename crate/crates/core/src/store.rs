//! Append-only, line-per-record persistence for the four service streams.
//!
//! Each stream is one file under the data directory. A line looks like
//! `{"seq":N,"ts":N,"body":<frame>}` and ends with `\n`; a record is complete
//! only once its newline is on disk. On open, a trailing partial line is
//! dropped (and cut from the file) while any malformed complete line is
//! treated as corruption.

use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::warn;
use serde::Deserialize;
use serde_json::value::RawValue;
use thiserror::Error;

use crate::gateway::frame::decode_message;
use crate::orchestrator::{AuditEntry, SessionRecord};
use crate::recommend::SensorSnapshot;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{stream} record does not match its schema: {reason}")]
    SchemaMismatch { stream: Stream, reason: String },
    #[error("{stream} log is corrupt at line {line}: {reason}")]
    CorruptFile {
        stream: Stream,
        line: usize,
        reason: String,
    },
    #[error("bad range: from {from} is after to {to}")]
    BadRange { from: i64, to: i64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stream {
    Sessions,
    Telemetry,
    Transcript,
    Audit,
}

impl Stream {
    pub const ALL: [Stream; 4] = [
        Stream::Sessions,
        Stream::Telemetry,
        Stream::Transcript,
        Stream::Audit,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stream::Sessions => "sessions",
            Stream::Telemetry => "telemetry",
            Stream::Transcript => "transcript",
            Stream::Audit => "audit",
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            Stream::Sessions => "sessions.log",
            Stream::Telemetry => "telemetry.log",
            Stream::Transcript => "transcript.log",
            Stream::Audit => "audit.log",
        }
    }

    fn index(self) -> usize {
        self as usize
    }

    /// Checks that `body` is a valid frame for this stream.
    pub fn validate(self, body: &str) -> Result<(), String> {
        if body.contains('\n') {
            return Err("body spans more than one line".into());
        }
        match self {
            Stream::Telemetry => serde_json::from_str::<SensorSnapshot>(body)
                .map_err(|e| e.to_string())
                .and_then(|s| s.validate()),
            Stream::Transcript => decode_message(body.as_bytes())
                .map(drop)
                .map_err(|e| e.to_string()),
            Stream::Audit => serde_json::from_str::<AuditEntry>(body)
                .map(drop)
                .map_err(|e| e.to_string()),
            Stream::Sessions => serde_json::from_str::<SessionRecord>(body)
                .map(drop)
                .map_err(|e| e.to_string()),
        }
    }
}

impl fmt::Display for Stream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stream {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stream::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown stream {s:?} (expected sessions, telemetry, transcript or audit)"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub seq: u64,
    pub ts: i64,
    /// The frame, byte-for-byte as written.
    pub body: String,
}

impl Record {
    /// The line stored on disk, without its newline.
    pub fn to_line(&self) -> String {
        format!(
            "{{\"seq\":{},\"ts\":{},\"body\":{}}}",
            self.seq, self.ts, self.body
        )
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Envelope<'a> {
    seq: u64,
    ts: i64,
    #[serde(borrow)]
    body: &'a RawValue,
}

/// Result of scanning one stream's bytes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Recovered {
    pub records: Vec<Record>,
    /// Length of the prefix holding only complete records.
    pub valid_len: usize,
    pub warnings: Vec<String>,
}

/// Parses a stream's raw bytes into records.
///
/// A final line without a newline is a torn write and is dropped with a
/// warning. Any complete line that fails to parse, or breaks the `seq`
/// sequence, is `CorruptFile`.
pub fn recover_stream(stream: Stream, bytes: &[u8]) -> Result<Recovered, StoreError> {
    let mut out = Recovered::default();
    let mut pos = 0;
    let mut line_no = 0;
    while pos < bytes.len() {
        line_no += 1;
        let Some(nl) = bytes[pos..].iter().position(|b| *b == b'\n') else {
            let warning = format!(
                "{stream}: dropped {} byte partial record at line {line_no}",
                bytes.len() - pos
            );
            warn!("{warning}");
            out.warnings.push(warning);
            break;
        };
        let line = &bytes[pos..pos + nl];
        let corrupt = |reason: String| StoreError::CorruptFile {
            stream,
            line: line_no,
            reason,
        };
        let text = std::str::from_utf8(line).map_err(|e| corrupt(e.to_string()))?;
        let env: Envelope = serde_json::from_str(text).map_err(|e| corrupt(e.to_string()))?;
        let expected = out.records.last().map_or(1, |r| r.seq + 1);
        if env.seq != expected {
            return Err(corrupt(format!("seq {} where {expected} was expected", env.seq)));
        }
        out.records.push(Record {
            seq: env.seq,
            ts: env.ts,
            body: env.body.get().to_string(),
        });
        pos += nl + 1;
        out.valid_len = pos;
    }
    Ok(out)
}

/// Whether appends wait for the data to reach the disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Durability {
    /// `fsync` after every record.
    #[default]
    Sync,
    /// Flush to the OS only; survives a process crash but not power loss.
    Flush,
}

#[derive(Debug, Default)]
struct StreamLog {
    file: Option<File>,
    records: Vec<Record>,
    ts_sorted: bool,
}

impl StreamLog {
    fn new() -> Self {
        StreamLog {
            ts_sorted: true,
            ..Default::default()
        }
    }

    fn next_seq(&self) -> u64 {
        self.records.last().map_or(1, |r| r.seq + 1)
    }
}

/// The four streams, either file-backed or purely in memory.
#[derive(Debug)]
pub struct Store {
    dir: Option<PathBuf>,
    durability: Durability,
    logs: [StreamLog; 4],
    warnings: Vec<String>,
}

impl Store {
    pub fn in_memory() -> Self {
        Store {
            dir: None,
            durability: Durability::Flush,
            logs: std::array::from_fn(|_| StreamLog::new()),
            warnings: Vec::new(),
        }
    }

    /// Opens (creating if needed) the data directory and recovers every stream.
    pub fn open(dir: &Path, durability: Durability) -> Result<Self, StoreError> {
        let io_err = |path: &Path| {
            let path = path.display().to_string();
            move |source| StoreError::IoFailure { path, source }
        };
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let mut store = Store {
            dir: Some(dir.to_path_buf()),
            durability,
            logs: std::array::from_fn(|_| StreamLog::new()),
            warnings: Vec::new(),
        };
        for stream in Stream::ALL {
            let path = dir.join(stream.file_name());
            let mut file = OpenOptions::new()
                .read(true)
                .append(true)
                .create(true)
                .open(&path)
                .map_err(io_err(&path))?;
            let bytes = fs::read(&path).map_err(io_err(&path))?;
            let recovered = recover_stream(stream, &bytes)?;
            if recovered.valid_len < bytes.len() {
                file.set_len(recovered.valid_len as u64)
                    .map_err(io_err(&path))?;
                file.flush().map_err(io_err(&path))?;
            }
            let log = &mut store.logs[stream.index()];
            log.ts_sorted = recovered.records.windows(2).all(|w| w[0].ts <= w[1].ts);
            log.records = recovered.records;
            log.file = Some(file);
            store.warnings.extend(recovered.warnings);
        }
        Ok(store)
    }

    /// Loads an existing data directory without modifying it.
    pub fn open_read_only(dir: &Path) -> Result<Self, StoreError> {
        if !dir.is_dir() {
            return Err(StoreError::IoFailure {
                path: dir.display().to_string(),
                source: io::Error::new(io::ErrorKind::NotFound, "data directory not found"),
            });
        }
        let mut store = Store::in_memory();
        store.dir = Some(dir.to_path_buf());
        for stream in Stream::ALL {
            let path = dir.join(stream.file_name());
            let bytes = match fs::read(&path) {
                Ok(b) => b,
                Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
                Err(source) => {
                    return Err(StoreError::IoFailure {
                        path: path.display().to_string(),
                        source,
                    })
                }
            };
            let recovered = recover_stream(stream, &bytes)?;
            let log = &mut store.logs[stream.index()];
            log.ts_sorted = recovered.records.windows(2).all(|w| w[0].ts <= w[1].ts);
            log.records = recovered.records;
            store.warnings.extend(recovered.warnings);
        }
        Ok(store)
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    /// Warnings raised while recovering.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Validates and appends `body`; returns its sequence number.
    pub fn append(&mut self, stream: Stream, ts: i64, body: &str) -> Result<u64, StoreError> {
        stream
            .validate(body)
            .map_err(|reason| StoreError::SchemaMismatch { stream, reason })?;
        let durability = self.durability;
        let dir = self.dir.clone();
        let log = &mut self.logs[stream.index()];
        let record = Record {
            seq: log.next_seq(),
            ts,
            body: body.to_string(),
        };
        if let Some(file) = log.file.as_mut() {
            let path = || {
                dir.as_ref()
                    .map(|d| d.join(stream.file_name()).display().to_string())
                    .unwrap_or_default()
            };
            let mut line = record.to_line();
            line.push('\n');
            file.write_all(line.as_bytes())
                .and_then(|_| file.flush())
                .and_then(|_| match durability {
                    Durability::Sync => file.sync_data(),
                    Durability::Flush => Ok(()),
                })
                .map_err(|source| StoreError::IoFailure {
                    path: path(),
                    source,
                })?;
        }
        if log.records.last().is_some_and(|last| last.ts > ts) {
            log.ts_sorted = false;
        }
        let seq = record.seq;
        log.records.push(record);
        Ok(seq)
    }

    /// Records with `from <= ts <= to`, in sequence order.
    pub fn query(&self, stream: Stream, from: i64, to: i64) -> Result<Vec<Record>, StoreError> {
        if from > to {
            return Err(StoreError::BadRange { from, to });
        }
        let log = &self.logs[stream.index()];
        if log.ts_sorted {
            let start = log.records.partition_point(|r| r.ts < from);
            let end = log.records.partition_point(|r| r.ts <= to);
            Ok(log.records[start..end].to_vec())
        } else {
            Ok(log
                .records
                .iter()
                .filter(|r| (from..=to).contains(&r.ts))
                .cloned()
                .collect())
        }
    }

    pub fn all(&self, stream: Stream) -> &[Record] {
        &self.logs[stream.index()].records
    }

    pub fn len(&self, stream: Stream) -> usize {
        self.logs[stream.index()].records.len()
    }

    pub fn is_empty(&self, stream: Stream) -> bool {
        self.len(stream) == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn telemetry(ts: i64, soil: f64) -> String {
        serde_json::to_string(&SensorSnapshot {
            ts,
            air_temp: 25.0,
            rel_humidity: 60.0,
            soil_moisture: soil,
            light: 0.0,
        })
        .unwrap()
    }

    /// Independent filter over the raw file contents.
    fn scan_file(path: &Path, from: i64, to: i64) -> Vec<(u64, i64)> {
        let text = fs::read_to_string(path).unwrap();
        text.lines()
            .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
            .map(|v| (v["seq"].as_u64().unwrap(), v["ts"].as_i64().unwrap()))
            .filter(|(_, ts)| *ts >= from && *ts <= to)
            .collect()
    }

    #[test]
    fn sequence_numbers_start_at_one() {
        let mut store = Store::in_memory();
        assert_eq!(store.append(Stream::Telemetry, 10, &telemetry(10, 20.0)).unwrap(), 1);
        assert_eq!(store.append(Stream::Telemetry, 11, &telemetry(11, 21.0)).unwrap(), 2);
        assert_eq!(store.append(Stream::Audit, 11, r#"{"user_id":"u","ts":11,"target":"DRIP","desired":"ON","changed":true}"#).unwrap(), 1);
    }

    #[test]
    fn schema_mismatch_on_missing_field() {
        let mut store = Store::in_memory();
        let err = store
            .append(
                Stream::Telemetry,
                1,
                r#"{"ts":1,"air_temp":25.0,"rel_humidity":60.0,"light":0.0}"#,
            )
            .unwrap_err();
        assert!(matches!(err, StoreError::SchemaMismatch { stream: Stream::Telemetry, .. }));
        assert!(store.is_empty(Stream::Telemetry));
        let err = store
            .append(Stream::Transcript, 1, r#"{"type":"video","user_id":"u","url":""}"#)
            .unwrap_err();
        assert!(matches!(err, StoreError::SchemaMismatch { .. }));
    }

    #[test]
    fn query_bounds() {
        let mut store = Store::in_memory();
        assert!(store.query(Stream::Telemetry, 0, i64::MAX).unwrap().is_empty());
        for ts in [5, 10, 10, 15, 20] {
            store.append(Stream::Telemetry, ts, &telemetry(ts, 30.0)).unwrap();
        }
        assert_eq!(store.query(Stream::Telemetry, i64::MIN, i64::MAX).unwrap().len(), 5);
        let seqs: Vec<u64> = store
            .query(Stream::Telemetry, 10, 15)
            .unwrap()
            .iter()
            .map(|r| r.seq)
            .collect();
        assert_eq!(seqs, vec![2, 3, 4]);
        assert!(matches!(
            store.query(Stream::Telemetry, 3, 2),
            Err(StoreError::BadRange { .. })
        ));
    }

    #[test]
    fn reopen_resumes_sequence_and_cuts_torn_tail() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut store = Store::open(dir.path(), Durability::Flush).unwrap();
            for ts in 0..3 {
                store.append(Stream::Telemetry, ts, &telemetry(ts, 30.0)).unwrap();
            }
        }
        let path = dir.path().join("telemetry.log");
        let mut bytes = fs::read(&path).unwrap();
        bytes.extend_from_slice(br#"{"seq":4,"ts":3,"bo"#);
        fs::write(&path, &bytes).unwrap();

        let mut store = Store::open(dir.path(), Durability::Flush).unwrap();
        assert_eq!(store.len(Stream::Telemetry), 3);
        assert_eq!(store.warnings().len(), 1);
        assert_eq!(store.append(Stream::Telemetry, 3, &telemetry(3, 30.0)).unwrap(), 4);
        drop(store);
        let store = Store::open_read_only(dir.path()).unwrap();
        assert_eq!(store.len(Stream::Telemetry), 4);
        assert!(store.warnings().is_empty());
    }

    #[test]
    fn malformed_middle_record_is_corrupt() {
        let good = Record { seq: 1, ts: 0, body: telemetry(0, 30.0) }.to_line();
        let third = Record { seq: 3, ts: 0, body: telemetry(0, 30.0) }.to_line();
        let bytes = format!("{good}\n{{\"seq\":2,garbage\n{third}\n");
        assert!(matches!(
            recover_stream(Stream::Telemetry, bytes.as_bytes()),
            Err(StoreError::CorruptFile { line: 2, .. })
        ));
    }

    #[test]
    fn sequence_gap_is_corrupt() {
        let a = Record { seq: 1, ts: 0, body: telemetry(0, 30.0) }.to_line();
        let c = Record { seq: 3, ts: 0, body: telemetry(0, 30.0) }.to_line();
        let bytes = format!("{a}\n{c}\n");
        assert!(matches!(
            recover_stream(Stream::Telemetry, bytes.as_bytes()),
            Err(StoreError::CorruptFile { line: 2, .. })
        ));
    }

    #[test]
    fn clean_file_recovers_everything() {
        let lines: String = (1..=5)
            .map(|i| Record { seq: i, ts: i as i64, body: telemetry(i as i64, 30.0) }.to_line() + "\n")
            .collect();
        let r = recover_stream(Stream::Telemetry, lines.as_bytes()).unwrap();
        assert_eq!(r.records.len(), 5);
        assert_eq!(r.valid_len, lines.len());
        assert!(r.warnings.is_empty());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn query_matches_linear_scan(
            stamps in proptest::collection::vec(0i64..500, 0..2000),
            sorted in any::<bool>(),
            a in 0i64..520,
            b in 0i64..520,
        ) {
            let mut stamps = stamps;
            if sorted {
                stamps.sort_unstable();
            }
            let dir = tempfile::tempdir().unwrap();
            let mut store = Store::open(dir.path(), Durability::Flush).unwrap();
            for ts in &stamps {
                store.append(Stream::Telemetry, *ts, &telemetry(*ts, 40.0)).unwrap();
            }
            let (from, to) = (a.min(b), a.max(b));
            let got: Vec<(u64, i64)> = store
                .query(Stream::Telemetry, from, to)
                .unwrap()
                .iter()
                .map(|r| (r.seq, r.ts))
                .collect();
            let expected = if stamps.is_empty() {
                Vec::new()
            } else {
                scan_file(&dir.path().join("telemetry.log"), from, to)
            };
            prop_assert_eq!(got, expected);
        }
    }
}
