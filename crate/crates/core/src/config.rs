//! Farm configuration file and the assets it points at.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;
use thiserror::Error;

use crate::intent::{IntentError, IntentRegistry};
use crate::recommend::{Rule, RuleError, RuleSet};
use crate::sim::{SimConfig, SimError};

pub const DEFAULT_PLAYLIST: [&str; 4] = [
    "https://videos.example.org/lettuce/01-seedling-transplanting.mp4",
    "https://videos.example.org/lettuce/02-drip-line-maintenance.mp4",
    "https://videos.example.org/lettuce/03-spotting-downy-mildew.mp4",
    "https://videos.example.org/lettuce/04-harvest-timing.mp4",
];

/// Indochina Time, the deployment's local zone.
pub const DEFAULT_TZ_OFFSET_MINUTES: i32 = 7 * 60;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config {origin}: {reason}")]
    Parse { origin: String, reason: String },
    #[error(transparent)]
    Rules(#[from] RuleError),
    #[error(transparent)]
    Intents(#[from] IntentError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Local time of day, in seconds after midnight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct TimeOfDay(u32);

impl TimeOfDay {
    pub fn from_hms(h: u32, m: u32, s: u32) -> Option<Self> {
        (h < 24 && m < 60 && s < 60).then_some(TimeOfDay(h * 3600 + m * 60 + s))
    }

    pub fn seconds(self) -> u32 {
        self.0
    }
}

impl Default for TimeOfDay {
    fn default() -> Self {
        TimeOfDay(6 * 3600)
    }
}

impl FromStr for TimeOfDay {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let nums: Result<Vec<u32>, _> = parts.iter().map(|p| p.parse::<u32>()).collect();
        let bad = || format!("invalid time of day {s:?} (expected HH:MM)");
        match nums.map_err(|_| bad())?.as_slice() {
            [h, m] => TimeOfDay::from_hms(*h, *m, 0).ok_or_else(bad),
            [h, m, sec] => TimeOfDay::from_hms(*h, *m, *sec).ok_or_else(bad),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for TimeOfDay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:02}:{:02}", self.0 / 3600, self.0 / 60 % 60)
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FarmConfigFile {
    briefing_time: String,
    tz_offset: i32,
    playlist: Option<Vec<String>>,
    ruleset: Option<PathBuf>,
    registry: Option<PathBuf>,
    simconfig: Option<PathBuf>,
    allowlist: Vec<String>,
}

impl Default for FarmConfigFile {
    fn default() -> Self {
        FarmConfigFile {
            briefing_time: "06:00".into(),
            tz_offset: DEFAULT_TZ_OFFSET_MINUTES,
            playlist: None,
            ruleset: None,
            registry: None,
            simconfig: None,
            allowlist: Vec::new(),
        }
    }
}

/// The farm config with paths resolved against the file's directory.
#[derive(Debug, Clone, PartialEq)]
pub struct FarmConfig {
    pub briefing_time: TimeOfDay,
    pub tz_offset_minutes: i32,
    pub playlist: Vec<String>,
    pub ruleset: Option<PathBuf>,
    pub registry: Option<PathBuf>,
    pub simconfig: Option<PathBuf>,
    pub allowlist: Vec<String>,
}

impl Default for FarmConfig {
    fn default() -> Self {
        FarmConfig {
            briefing_time: TimeOfDay::default(),
            tz_offset_minutes: DEFAULT_TZ_OFFSET_MINUTES,
            playlist: DEFAULT_PLAYLIST.iter().map(|s| s.to_string()).collect(),
            ruleset: None,
            registry: None,
            simconfig: None,
            allowlist: Vec::new(),
        }
    }
}

impl FarmConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_json(&path.display().to_string(), &text, base)
    }

    pub fn from_json(origin: &str, text: &str, base: &Path) -> Result<Self, ConfigError> {
        let parse_err = |reason: String| ConfigError::Parse {
            origin: origin.to_string(),
            reason,
        };
        let file: FarmConfigFile =
            serde_json::from_str(text).map_err(|e| parse_err(e.to_string()))?;
        let briefing_time = file.briefing_time.parse().map_err(parse_err)?;
        if file.tz_offset.abs() > 14 * 60 {
            return Err(parse_err(format!("tz_offset {} out of range", file.tz_offset)));
        }
        let resolve = |p: Option<PathBuf>| p.map(|p| if p.is_absolute() { p } else { base.join(p) });
        Ok(FarmConfig {
            briefing_time,
            tz_offset_minutes: file.tz_offset,
            playlist: file
                .playlist
                .unwrap_or_else(|| DEFAULT_PLAYLIST.iter().map(|s| s.to_string()).collect()),
            ruleset: resolve(file.ruleset),
            registry: resolve(file.registry),
            simconfig: resolve(file.simconfig),
            allowlist: file.allowlist,
        })
    }

    /// Loads the ruleset, registry and sim config, falling back to the
    /// built-in defaults for any path left unset.
    pub fn resolve(&self) -> Result<ServiceConfig, ConfigError> {
        let rules = match &self.ruleset {
            Some(path) => RuleSet::load(path)?,
            None => RuleSet::default_lettuce(),
        };
        let registry = match &self.registry {
            Some(path) => IntentRegistry::load(path)?,
            None => IntentRegistry::default_registry(),
        };
        let sim = match &self.simconfig {
            Some(path) => SimConfig::load(path)?,
            None => SimConfig::default(),
        };
        Ok(ServiceConfig {
            sim,
            rules: rules.rules,
            registry,
            playlist: self.playlist.clone(),
            briefing_time: self.briefing_time,
            tz_offset_minutes: self.tz_offset_minutes,
            allowlist: self.allowlist.clone(),
        })
    }
}

/// Everything the service needs, fully loaded.
#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub sim: SimConfig,
    pub rules: Vec<Rule>,
    pub registry: IntentRegistry,
    pub playlist: Vec<String>,
    pub briefing_time: TimeOfDay,
    pub tz_offset_minutes: i32,
    pub allowlist: Vec<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        FarmConfig::default()
            .resolve()
            .expect("built-in defaults load")
    }
}
