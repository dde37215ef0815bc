//! Deterministic scenario runner.
//!
//! A script is a header line followed by one timed event per line:
//!
//! ```text
//! {"seed":42,"days":3,"users":["u1"]}
//! {"at_tick":0,"event":{"type":"postback","event_id":"e1","user_id":"u2","ts":1699981200,"action":"TOGGLE_SESSION"}}
//! ```
//!
//! Header keys, all optional: `seed`, `days` or `ticks`, `start_ts`,
//! `users` (sessions started before the first tick), `config` (a farm config
//! path, relative to the script) and `sim` (sim config key overrides).

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::config::{ConfigError, FarmConfig, ServiceConfig};
use crate::gateway::{decode_event, Gateway, GatewayError, InboundEvent, MenuAction};
use crate::orchestrator::Orchestrator;
use crate::sim::SimError;
use crate::store::{Durability, Store, StoreError, Stream};

/// Local midnight, 2023-11-15, at UTC+7.
pub const DEFAULT_START_TS: i64 = 1_699_981_200;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("script {origin} line {line}: {reason}")]
    Script {
        origin: String,
        line: usize,
        reason: String,
    },
    #[error("script {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("event {event_id} at tick {tick}: {source}")]
    Event {
        event_id: String,
        tick: u64,
        #[source]
        source: GatewayError,
    },
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
struct HeaderFile {
    seed: Option<u64>,
    days: Option<u64>,
    ticks: Option<u64>,
    start_ts: Option<i64>,
    #[serde(default)]
    users: Vec<String>,
    config: Option<PathBuf>,
    #[serde(default)]
    sim: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Duration {
    Days(u64),
    Ticks(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptHeader {
    pub seed: Option<u64>,
    pub duration: Duration,
    pub start_ts: i64,
    pub users: Vec<String>,
    pub config: Option<PathBuf>,
    pub sim_overrides: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimedEvent {
    pub at_tick: u64,
    pub event: InboundEvent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayScript {
    pub header: ScriptHeader,
    pub events: Vec<TimedEvent>,
}

impl ReplayScript {
    pub fn load(path: &Path) -> Result<Self, ReplayError> {
        let text = fs::read_to_string(path).map_err(|source| ReplayError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&path.display().to_string(), &text, base)
    }

    /// Parses a script; relative `config` paths resolve against `base`.
    pub fn parse(origin: &str, text: &str, base: &Path) -> Result<Self, ReplayError> {
        let err = |line: usize, reason: String| ReplayError::Script {
            origin: origin.to_string(),
            line,
            reason,
        };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let (hline, htext) = lines.next().ok_or_else(|| err(1, "missing header line".into()))?;
        let h: HeaderFile =
            serde_json::from_str(htext).map_err(|e| err(hline, format!("header: {e}")))?;
        let duration = match (h.days, h.ticks) {
            (Some(_), Some(_)) => {
                return Err(err(hline, "header sets both days and ticks".into()));
            }
            (Some(d), None) => Duration::Days(d),
            (None, Some(t)) => Duration::Ticks(t),
            (None, None) => Duration::Days(1),
        };
        let header = ScriptHeader {
            seed: h.seed,
            duration,
            start_ts: h.start_ts.unwrap_or(DEFAULT_START_TS),
            users: h.users,
            config: h.config.map(|p| if p.is_absolute() { p } else { base.join(p) }),
            sim_overrides: h.sim,
        };

        let mut events: Vec<TimedEvent> = Vec::new();
        let mut ids = HashSet::new();
        for (n, line) in lines {
            let mut obj: Map<String, Value> =
                serde_json::from_str(line).map_err(|e| err(n, e.to_string()))?;
            let at_tick = obj
                .remove("at_tick")
                .ok_or_else(|| err(n, "missing at_tick".into()))?
                .as_u64()
                .ok_or_else(|| err(n, "at_tick must be a non-negative integer".into()))?;
            let event = obj
                .remove("event")
                .ok_or_else(|| err(n, "missing event".into()))?;
            if let Some(extra) = obj.keys().next() {
                return Err(err(n, format!("unexpected key {extra:?}")));
            }
            let raw = serde_json::to_vec(&event).expect("value serializes");
            let event = decode_event(&raw).map_err(|e| err(n, e.to_string()))?;
            if let Some(prev) = events.last() {
                if at_tick < prev.at_tick {
                    return Err(err(n, format!("at_tick {at_tick} after {}", prev.at_tick)));
                }
            }
            if !ids.insert(event.event_id.clone()) {
                return Err(err(n, format!("duplicate event_id {:?}", event.event_id)));
            }
            events.push(TimedEvent { at_tick, event });
        }
        Ok(ReplayScript { header, events })
    }
}

#[derive(Debug, Clone, Default)]
pub struct ReplayOptions {
    /// Overrides the header's seed.
    pub seed: Option<u64>,
    /// Write the four logs here (existing logs are replaced).
    pub data_dir: Option<PathBuf>,
    pub durability: Durability,
}

#[derive(Debug)]
pub struct ReplayOutcome {
    pub total_ticks: u64,
    pub gateway: Gateway,
}

impl ReplayOutcome {
    /// The outbound transcript: one canonical frame per line.
    pub fn transcript(&self) -> String {
        let mut out = String::new();
        for r in self.gateway.orchestrator().store().all(Stream::Transcript) {
            out.push_str(&r.body);
            out.push('\n');
        }
        out
    }
}

fn service_config(script: &ReplayScript, seed: Option<u64>) -> Result<ServiceConfig, ReplayError> {
    let mut cfg = match &script.header.config {
        Some(path) => FarmConfig::load(path)?.resolve()?,
        None => ServiceConfig::default(),
    };
    cfg.sim = cfg.sim.with_overrides(&script.header.sim_overrides)?;
    if let Some(seed) = seed.or(script.header.seed) {
        cfg.sim.seed = seed;
    }
    Ok(cfg)
}

/// Runs the script on the simulated clock. Events scheduled at tick `t` are
/// delivered before the `t`-th tick runs.
pub fn run(script: &ReplayScript, opts: &ReplayOptions) -> Result<ReplayOutcome, ReplayError> {
    let cfg = service_config(script, opts.seed)?;
    let total_ticks = match script.header.duration {
        Duration::Days(d) => d * cfg.sim.ticks_per_day(),
        Duration::Ticks(t) => t,
    };
    if let Some(last) = script.events.last() {
        if last.at_tick > total_ticks {
            return Err(ReplayError::Script {
                origin: "script".into(),
                line: 0,
                reason: format!("event at tick {} is past the end ({total_ticks})", last.at_tick),
            });
        }
    }
    let store = match &opts.data_dir {
        Some(dir) => {
            for stream in Stream::ALL {
                let path = dir.join(stream.file_name());
                match fs::remove_file(&path) {
                    Ok(()) => {}
                    Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                    Err(source) => {
                        return Err(StoreError::IoFailure {
                            path: path.display().to_string(),
                            source,
                        }
                        .into())
                    }
                }
            }
            Store::open(dir, opts.durability)?
        }
        None => Store::in_memory(),
    };
    let allowlist = cfg.allowlist.clone();
    let start_ts = script.header.start_ts;
    let mut gw = Gateway::new(Orchestrator::new(cfg, start_ts, store), allowlist);

    for (i, user) in script.header.users.iter().enumerate() {
        gw.connect(user);
        let ev = InboundEvent::postback(format!("replay-start-{i}"), user, start_ts, MenuAction::ToggleSession);
        gw.route_event(&ev).map_err(|source| ReplayError::Event {
            event_id: ev.event_id.clone(),
            tick: 0,
            source,
        })?;
    }

    let mut pending = script.events.iter().peekable();
    for t in 0..=total_ticks {
        while let Some(te) = pending.next_if(|te| te.at_tick == t) {
            gw.connect(&te.event.user_id);
            gw.route_event(&te.event).map_err(|source| ReplayError::Event {
                event_id: te.event.event_id.clone(),
                tick: t,
                source,
            })?;
            gw.take_delivered(&te.event.user_id);
        }
        if t < total_ticks {
            let out = gw.tick();
            for d in &out.deliveries {
                gw.take_delivered(&d.user_id);
            }
        }
    }
    Ok(ReplayOutcome {
        total_ticks,
        gateway: gw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{decode_message, MessageKind};

    fn parse(text: &str) -> Result<ReplayScript, ReplayError> {
        ReplayScript::parse("t", text, Path::new("."))
    }

    fn kinds(outcome: &ReplayOutcome) -> Vec<MessageKind> {
        outcome
            .transcript()
            .lines()
            .map(|l| decode_message(l.as_bytes()).unwrap().kind())
            .collect()
    }

    #[test]
    fn header_defaults() {
        let s = parse("{}").unwrap();
        assert_eq!(s.header.duration, Duration::Days(1));
        assert_eq!(s.header.start_ts, DEFAULT_START_TS);
        assert!(s.events.is_empty());
    }

    #[test]
    fn script_errors_carry_line_numbers() {
        let bad = [
            "",
            "{\"days\":1,\"ticks\":3}",
            "{}\n{\"at_tick\":1}",
            "{}\n{\"at_tick\":2,\"event\":{\"type\":\"message\",\"event_id\":\"a\",\"user_id\":\"u\",\"ts\":1,\"text\":\"x\"}}\n{\"at_tick\":1,\"event\":{\"type\":\"message\",\"event_id\":\"b\",\"user_id\":\"u\",\"ts\":1,\"text\":\"x\"}}",
            "{}\n{\"at_tick\":1,\"event\":{\"type\":\"sticker\",\"event_id\":\"a\",\"user_id\":\"u\",\"ts\":1}}",
            "{}\n{\"at_tick\":1,\"event\":{\"type\":\"message\",\"event_id\":\"a\",\"user_id\":\"u\",\"ts\":1,\"text\":\"x\"}}\n{\"at_tick\":1,\"event\":{\"type\":\"message\",\"event_id\":\"a\",\"user_id\":\"u\",\"ts\":1,\"text\":\"y\"}}",
        ];
        for text in bad {
            assert!(matches!(parse(text), Err(ReplayError::Script { .. })), "{text}");
        }
    }

    #[test]
    fn one_day_one_prestarted_user_gets_one_briefing() {
        let s = parse("{\"days\":1,\"users\":[\"u1\"]}").unwrap();
        let out = run(&s, &ReplayOptions::default()).unwrap();
        assert_eq!(out.total_ticks, 144);
        let k = kinds(&out);
        assert_eq!(k.iter().filter(|k| **k == MessageKind::Video).count(), 1);
    }

    #[test]
    fn same_script_same_bytes() {
        let text = "{\"seed\":7,\"ticks\":300,\"users\":[\"u1\"],\"sim\":{\"noise_soil\":0.5,\"noise_temp\":0.3}}";
        let s = parse(text).unwrap();
        let a = run(&s, &ReplayOptions::default()).unwrap().transcript();
        let b = run(&s, &ReplayOptions::default()).unwrap().transcript();
        assert_eq!(a, b);
    }

    #[test]
    fn events_past_the_end_are_rejected() {
        let s = parse("{\"ticks\":1}\n{\"at_tick\":5,\"event\":{\"type\":\"message\",\"event_id\":\"a\",\"user_id\":\"u\",\"ts\":1,\"text\":\"x\"}}").unwrap();
        assert!(run(&s, &ReplayOptions::default()).is_err());
    }
}
