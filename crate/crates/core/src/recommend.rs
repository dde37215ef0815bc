//! Threshold rules over sensor snapshots.
//!
//! Each rule runs a small automaton: a streak counter of consecutive
//! evaluations on which its predicate held, and a cooldown counter that
//! blocks re-firing. A rule fires when the streak reaches `sustain_ticks`
//! while the cooldown is zero; firing arms the cooldown and clears the streak.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::MenuAction;

const DEFAULT_RULESET: &str = include_str!("../data/default_ruleset.json");

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("{origin}: parse error at line {line}, column {column}: {reason}")]
    ParseAt {
        origin: String,
        line: usize,
        column: usize,
        reason: String,
    },
    #[error("{origin}: record {index}: {reason}")]
    ParseRecord {
        origin: String,
        index: usize,
        reason: String,
    },
    #[error("{origin}: rule {rule_id:?}: {reason}")]
    Validation {
        origin: String,
        rule_id: String,
        reason: String,
    },
    #[error("ruleset file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("unknown placeholder {{{0}}}")]
    UnknownPlaceholder(String),
    #[error("unclosed placeholder at byte {0}")]
    Unclosed(usize),
}

/// One telemetry reading of the field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSnapshot {
    pub ts: i64,
    /// °C
    pub air_temp: f64,
    /// %
    pub rel_humidity: f64,
    /// % volumetric water content
    pub soil_moisture: f64,
    /// lux
    pub light: f64,
}

impl SensorSnapshot {
    pub fn get(&self, field: SensorField) -> f64 {
        match field {
            SensorField::AirTemp => self.air_temp,
            SensorField::RelHumidity => self.rel_humidity,
            SensorField::SoilMoisture => self.soil_moisture,
            SensorField::Light => self.light,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for field in SensorField::ALL {
            if !self.get(field).is_finite() {
                return Err(format!("{field} is not finite"));
            }
        }
        for field in [SensorField::RelHumidity, SensorField::SoilMoisture] {
            let v = self.get(field);
            if !(0.0..=100.0).contains(&v) {
                return Err(format!("{field} {v} outside [0, 100]"));
            }
        }
        if self.light < 0.0 {
            return Err(format!("light {} is negative", self.light));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SensorField {
    AirTemp,
    RelHumidity,
    SoilMoisture,
    Light,
}

impl SensorField {
    pub const ALL: [SensorField; 4] = [
        SensorField::AirTemp,
        SensorField::RelHumidity,
        SensorField::SoilMoisture,
        SensorField::Light,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SensorField::AirTemp => "air_temp",
            SensorField::RelHumidity => "rel_humidity",
            SensorField::SoilMoisture => "soil_moisture",
            SensorField::Light => "light",
        }
    }
}

impl fmt::Display for SensorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SensorField {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SensorField::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| format!("unknown sensor field {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Process {
    Irrigation,
    Fertilization,
    DiseaseControl,
    InsectPestControl,
    WeedControl,
}

impl Process {
    pub const ALL: [Process; 5] = [
        Process::Irrigation,
        Process::Fertilization,
        Process::DiseaseControl,
        Process::InsectPestControl,
        Process::WeedControl,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Process::Irrigation => "IRRIGATION",
            Process::Fertilization => "FERTILIZATION",
            Process::DiseaseControl => "DISEASE_CONTROL",
            Process::InsectPestControl => "INSECT_PEST_CONTROL",
            Process::WeedControl => "WEED_CONTROL",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Process::Irrigation => "Irrigation",
            Process::Fertilization => "Fertilization",
            Process::DiseaseControl => "Disease control",
            Process::InsectPestControl => "Insect pest control",
            Process::WeedControl => "Weed control",
        }
    }
}

impl FromStr for Process {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Process::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown process {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparator {
    Lt,
    Gt,
}

impl Comparator {
    pub fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Comparator::Lt => value < threshold,
            Comparator::Gt => value > threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Segment {
    Literal(String),
    Value,
    Threshold,
}

/// A message template with `{value}` and `{threshold}` placeholders.
#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    source: String,
    segments: Vec<Segment>,
}

impl Template {
    pub fn parse(source: &str) -> Result<Self, TemplateError> {
        let mut segments = Vec::new();
        let mut rest = source;
        let mut offset = 0;
        while let Some(open) = rest.find('{') {
            if open > 0 {
                segments.push(Segment::Literal(rest[..open].to_string()));
            }
            let close = rest[open..]
                .find('}')
                .ok_or(TemplateError::Unclosed(offset + open))?
                + open;
            match &rest[open + 1..close] {
                "value" => segments.push(Segment::Value),
                "threshold" => segments.push(Segment::Threshold),
                other => return Err(TemplateError::UnknownPlaceholder(other.to_string())),
            }
            offset += close + 1;
            rest = &rest[close + 1..];
        }
        if !rest.is_empty() {
            segments.push(Segment::Literal(rest.to_string()));
        }
        Ok(Template {
            source: source.to_string(),
            segments,
        })
    }

    pub fn as_str(&self) -> &str {
        &self.source
    }

    /// Substitutes both placeholders, formatted to one decimal place.
    pub fn render(&self, value: f64, threshold: f64) -> String {
        let mut out = String::with_capacity(self.source.len() + 8);
        for segment in &self.segments {
            match segment {
                Segment::Literal(s) => out.push_str(s),
                Segment::Value => out.push_str(&format!("{value:.1}")),
                Segment::Threshold => out.push_str(&format!("{threshold:.1}")),
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub id: String,
    pub process: Process,
    pub field: SensorField,
    pub comparator: Comparator,
    pub threshold: f64,
    pub sustain_ticks: u32,
    pub cooldown_ticks: u32,
    pub message: Template,
    pub advised_action: Option<MenuAction>,
}

impl Rule {
    pub fn predicate(&self, snapshot: &SensorSnapshot) -> bool {
        self.comparator.holds(snapshot.get(self.field), self.threshold)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recommendation {
    pub rule_id: String,
    pub ts: i64,
    pub message: String,
    pub advised_action: Option<MenuAction>,
    pub process: Process,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RuleCounters {
    pub streak: u32,
    pub cooldown: u32,
}

/// Per-rule automaton counters, keyed by rule id. Missing ids read as zero.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RuleState {
    counters: BTreeMap<String, RuleCounters>,
}

impl RuleState {
    pub fn get(&self, rule_id: &str) -> RuleCounters {
        self.counters.get(rule_id).copied().unwrap_or_default()
    }

    pub fn set(&mut self, rule_id: &str, counters: RuleCounters) {
        self.counters.insert(rule_id.to_string(), counters);
    }
}

/// Renders a rule's message against the snapshot that triggered it.
pub fn render_message(rule: &Rule, snapshot: &SensorSnapshot) -> String {
    rule.message.render(snapshot.get(rule.field), rule.threshold)
}

/// Runs every rule once against `snapshot`.
///
/// Recommendations come out ordered by rule id. The cooldown is checked before
/// it is decremented, so with `cooldown_ticks = c` a rule fires at most once in
/// any `c + 1` consecutive evaluations.
pub fn evaluate(
    snapshot: &SensorSnapshot,
    rules: &[Rule],
    state: &RuleState,
) -> (Vec<Recommendation>, RuleState) {
    let mut ordered: Vec<&Rule> = rules.iter().collect();
    ordered.sort_by(|a, b| a.id.cmp(&b.id));

    let mut next = state.clone();
    let mut fired = Vec::new();
    for rule in ordered {
        let mut c = state.get(&rule.id);
        c.streak = if rule.predicate(snapshot) {
            c.streak.saturating_add(1)
        } else {
            0
        };
        if c.cooldown > 0 {
            c.cooldown -= 1;
        } else if c.streak >= rule.sustain_ticks {
            fired.push(Recommendation {
                rule_id: rule.id.clone(),
                ts: snapshot.ts,
                message: render_message(rule, snapshot),
                advised_action: rule.advised_action,
                process: rule.process,
            });
            c.cooldown = rule.cooldown_ticks;
            c.streak = 0;
        }
        next.set(&rule.id, c);
    }
    (fired, next)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleRecord {
    id: String,
    process: String,
    field: String,
    cmp: String,
    threshold: f64,
    sustain_ticks: u32,
    cooldown_ticks: u32,
    message: String,
    advised_action: Option<String>,
}

/// Rules loaded from a file, plus any non-fatal warnings.
#[derive(Debug, Clone, Default)]
pub struct RuleSet {
    pub rules: Vec<Rule>,
    pub warnings: Vec<String>,
}

impl RuleSet {
    pub fn default_lettuce() -> Self {
        Self::from_json("<builtin>", DEFAULT_RULESET).expect("built-in ruleset is valid")
    }

    pub fn load(path: &Path) -> Result<Self, RuleError> {
        let text = std::fs::read_to_string(path).map_err(|source| RuleError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&path.display().to_string(), &text)
    }

    pub fn from_json(origin: &str, text: &str) -> Result<Self, RuleError> {
        if text.trim().is_empty() {
            let warning = format!("{origin}: ruleset is empty; no recommendations will fire");
            warn!("{warning}");
            return Ok(RuleSet {
                rules: Vec::new(),
                warnings: vec![warning],
            });
        }
        let values: Vec<serde_json::Value> =
            serde_json::from_str(text).map_err(|e| RuleError::ParseAt {
                origin: origin.to_string(),
                line: e.line(),
                column: e.column(),
                reason: e.to_string(),
            })?;
        let mut rules: Vec<Rule> = Vec::with_capacity(values.len());
        for (index, value) in values.into_iter().enumerate() {
            let record: RuleRecord =
                serde_json::from_value(value).map_err(|e| RuleError::ParseRecord {
                    origin: origin.to_string(),
                    index,
                    reason: e.to_string(),
                })?;
            let rule = validate_record(record).map_err(|(rule_id, reason)| {
                RuleError::Validation {
                    origin: origin.to_string(),
                    rule_id,
                    reason,
                }
            })?;
            if rules.iter().any(|r| r.id == rule.id) {
                return Err(RuleError::Validation {
                    origin: origin.to_string(),
                    rule_id: rule.id,
                    reason: "duplicate rule id".into(),
                });
            }
            rules.push(rule);
        }
        Ok(RuleSet {
            rules,
            warnings: Vec::new(),
        })
    }
}

fn validate_record(r: RuleRecord) -> Result<Rule, (String, String)> {
    let fail = |reason: String| (r.id.clone(), reason);
    if r.id.is_empty() {
        return Err(fail("rule id is empty".into()));
    }
    let process = r.process.parse().map_err(fail)?;
    let field = r.field.parse().map_err(fail)?;
    let comparator = match r.cmp.as_str() {
        "lt" => Comparator::Lt,
        "gt" => Comparator::Gt,
        other => return Err(fail(format!("unknown comparator {other:?}"))),
    };
    if !r.threshold.is_finite() {
        return Err(fail("threshold is not finite".into()));
    }
    if r.sustain_ticks == 0 {
        return Err(fail("sustain_ticks must be at least 1".into()));
    }
    if r.message.trim().is_empty() {
        return Err(fail("message is empty".into()));
    }
    let message = Template::parse(&r.message).map_err(|e| fail(e.to_string()))?;
    let advised_action = match r.advised_action.as_deref() {
        None => None,
        Some(s) => {
            let action: MenuAction = s.parse().map_err(|e| fail(format!("{e}")))?;
            if !action.is_actuator_command() {
                return Err(fail(format!("{action} is not an actuator command")));
            }
            Some(action)
        }
    };
    Ok(Rule {
        id: r.id,
        process,
        field,
        comparator,
        threshold: r.threshold,
        sustain_ticks: r.sustain_ticks,
        cooldown_ticks: r.cooldown_ticks,
        message,
        advised_action,
    })
}
