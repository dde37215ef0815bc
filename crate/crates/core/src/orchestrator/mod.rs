//! Sessions, actuator commands, the tick loop and intent dispatch.
//!
//! The orchestrator is the single writer over the field, the actuators and
//! the rule counters. It never delivers messages itself: methods return the
//! reply batch, and [`Orchestrator::tick`] returns the pushes it wants made.

mod clock;
pub mod pages;

use std::collections::BTreeMap;

use log::{error, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use clock::Clock;

use crate::config::ServiceConfig;
use crate::gateway::{EventPayload, InboundEvent, MenuAction, OutboundMessage};
use crate::intent::{Handler, IntentError, IntentRegistry, MatchResult};
use crate::recommend::{evaluate, Recommendation, Rule, RuleState, SensorSnapshot};
use crate::sim::{self, ActuatorState, FieldState, SimConfig, Switch};
use crate::store::{Store, StoreError, Stream};

/// Days covered by the weather-forecast answer.
pub const FORECAST_DAYS: u64 = 7;

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("session for {0:?} is not active")]
    SessionInactive(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Page {
    #[default]
    Main,
    Drip,
    Mist,
    Monitor,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    pub user_id: String,
    pub active: bool,
    pub started_at: i64,
    pub last_page: Page,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Actuator {
    Drip,
    Mist,
}

/// Body of a `sessions.log` record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionRecord {
    pub user_id: String,
    pub active: bool,
    pub started_at: i64,
    pub last_page: Page,
}

/// Body of an `audit.log` record: one actuator command.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditEntry {
    pub user_id: String,
    pub ts: i64,
    pub target: Actuator,
    pub desired: Switch,
    pub changed: bool,
}

/// Messages the tick wants pushed to one user.
#[derive(Debug, Clone, PartialEq)]
pub struct Delivery {
    pub user_id: String,
    pub messages: Vec<OutboundMessage>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickOutput {
    pub snapshot: SensorSnapshot,
    pub recommendations: Vec<Recommendation>,
    pub deliveries: Vec<Delivery>,
    pub briefing_sent: bool,
    pub errors: Vec<String>,
}

#[derive(Debug)]
pub struct Orchestrator {
    sim: SimConfig,
    rules: Vec<Rule>,
    registry: IntentRegistry,
    playlist: Vec<String>,
    clock: Clock,
    field: FieldState,
    actuators: ActuatorState,
    rule_state: RuleState,
    latest: SensorSnapshot,
    latest_recommendation: Option<String>,
    sessions: BTreeMap<String, Session>,
    last_briefing_key: i64,
    store: Store,
}

impl Orchestrator {
    /// Builds the service state at `start_ts`. Sessions and switch states
    /// found in `store` are restored.
    pub fn new(cfg: ServiceConfig, start_ts: i64, store: Store) -> Self {
        let clock = Clock::new(
            start_ts,
            cfg.sim.tick_seconds,
            cfg.briefing_time,
            cfg.tz_offset_minutes,
        );
        let mut sim = cfg.sim;
        sim.start_second_of_day = clock.local_second_of_day(start_ts);
        let field = FieldState::initial(&sim);
        let mut orch = Orchestrator {
            latest: field.snapshot(start_ts),
            field,
            sim,
            rules: cfg.rules,
            registry: cfg.registry,
            playlist: cfg.playlist,
            last_briefing_key: clock.briefing_key(start_ts),
            clock,
            actuators: ActuatorState::default(),
            rule_state: RuleState::default(),
            latest_recommendation: None,
            sessions: BTreeMap::new(),
            store,
        };
        orch.restore();
        orch
    }

    fn restore(&mut self) {
        for record in self.store.all(Stream::Sessions) {
            match serde_json::from_str::<SessionRecord>(&record.body) {
                Ok(s) => {
                    self.sessions.insert(
                        s.user_id.clone(),
                        Session {
                            user_id: s.user_id,
                            active: s.active,
                            started_at: s.started_at,
                            last_page: s.last_page,
                        },
                    );
                }
                Err(e) => warn!("skipping session record {}: {e}", record.seq),
            }
        }
        for record in self.store.all(Stream::Audit) {
            if let Ok(entry) = serde_json::from_str::<AuditEntry>(&record.body) {
                match entry.target {
                    Actuator::Drip => self.actuators.drip = entry.desired,
                    Actuator::Mist => self.actuators.mist = entry.desired,
                }
            }
        }
    }

    pub fn clock(&self) -> &Clock {
        &self.clock
    }

    pub fn field(&self) -> &FieldState {
        &self.field
    }

    pub fn actuators(&self) -> ActuatorState {
        self.actuators
    }

    pub fn latest_snapshot(&self) -> &SensorSnapshot {
        &self.latest
    }

    pub fn registry(&self) -> &IntentRegistry {
        &self.registry
    }

    pub fn sim_config(&self) -> &SimConfig {
        &self.sim
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn session(&self, user_id: &str) -> Option<&Session> {
        self.sessions.get(user_id)
    }

    pub fn is_active(&self, user_id: &str) -> bool {
        self.sessions.get(user_id).is_some_and(|s| s.active)
    }

    pub fn active_users(&self) -> Vec<String> {
        self.sessions
            .values()
            .filter(|s| s.active)
            .map(|s| s.user_id.clone())
            .collect()
    }

    /// Appends outbound frames to the transcript at the current time.
    pub fn record_transcript(&mut self, msgs: &[OutboundMessage]) -> Result<(), StoreError> {
        let now = self.clock.now();
        for msg in msgs {
            let frame = crate::gateway::encode_message_string(msg).map_err(|e| {
                StoreError::SchemaMismatch {
                    stream: Stream::Transcript,
                    reason: e.to_string(),
                }
            })?;
            self.store.append(Stream::Transcript, now, &frame)?;
        }
        Ok(())
    }

    /// Reply batch for one inbound event.
    pub fn handle_event(
        &mut self,
        ev: &InboundEvent,
    ) -> Result<Vec<OutboundMessage>, OrchestratorError> {
        match &ev.payload {
            EventPayload::Postback(action) => self.handle_action(&ev.user_id, *action),
            EventPayload::Text(_) if !self.is_active(&ev.user_id) => {
                Ok(vec![OutboundMessage::text(&ev.user_id, pages::PROMPT_START)])
            }
            EventPayload::Text(text) => {
                let result = match self.registry.match_intent(text) {
                    Ok(r) => r,
                    Err(IntentError::EmptyUtterance) => MatchResult::NoMatch,
                    Err(e) => {
                        error!("intent matching failed: {e}");
                        MatchResult::NoMatch
                    }
                };
                Ok(self.answer_intent(&ev.user_id, &result))
            }
        }
    }

    pub fn toggle_session(
        &mut self,
        user_id: &str,
    ) -> Result<(Session, Vec<OutboundMessage>), OrchestratorError> {
        let now = self.clock.now();
        let mut session = self.sessions.get(user_id).cloned().unwrap_or(Session {
            user_id: user_id.to_string(),
            active: false,
            started_at: now,
            last_page: Page::Main,
        });
        session.active = !session.active;
        if session.active {
            session.started_at = now;
            session.last_page = Page::Main;
        }
        let record = SessionRecord {
            user_id: session.user_id.clone(),
            active: session.active,
            started_at: session.started_at,
            last_page: session.last_page,
        };
        let body = serde_json::to_string(&record).expect("session record serializes");
        self.store.append(Stream::Sessions, now, &body)?;
        self.sessions.insert(user_id.to_string(), session.clone());

        let replies = if session.active {
            vec![
                OutboundMessage::text(user_id, pages::WELCOME),
                OutboundMessage::card(user_id, self.main_card()),
            ]
        } else {
            vec![OutboundMessage::text(user_id, pages::FAREWELL)]
        };
        Ok((session, replies))
    }

    fn main_card(&self) -> crate::gateway::Card {
        pages::main_card(
            &self.latest,
            self.actuators,
            self.latest_recommendation.as_deref(),
        )
    }

    fn set_page(&mut self, user_id: &str, page: Page) {
        if let Some(s) = self.sessions.get_mut(user_id) {
            s.last_page = page;
        }
    }

    /// Handles a rich-menu tap. Everything except TOGGLE_SESSION requires an
    /// active session; otherwise the reply asks the user to tap START.
    pub fn handle_action(
        &mut self,
        user_id: &str,
        action: MenuAction,
    ) -> Result<Vec<OutboundMessage>, OrchestratorError> {
        if action == MenuAction::ToggleSession {
            return self.toggle_session(user_id).map(|(_, replies)| replies);
        }
        if !self.is_active(user_id) {
            return Ok(vec![OutboundMessage::text(user_id, pages::PROMPT_START)]);
        }
        let card = match action {
            MenuAction::ToggleSession => unreachable!("handled above"),
            MenuAction::ShowMain => {
                self.set_page(user_id, Page::Main);
                self.main_card()
            }
            MenuAction::ShowMonitor => {
                self.set_page(user_id, Page::Monitor);
                pages::status_card("Field status", &self.latest, self.actuators)
            }
            MenuAction::ShowDrip => {
                self.set_page(user_id, Page::Drip);
                pages::drip_card(&self.latest, self.actuators)
            }
            MenuAction::ShowMist => {
                self.set_page(user_id, Page::Mist);
                pages::mist_card(&self.latest, self.actuators)
            }
            MenuAction::DripOn | MenuAction::DripOff | MenuAction::MistOn | MenuAction::MistOff => {
                let (target, desired, name) = match action {
                    MenuAction::DripOn => (Actuator::Drip, Switch::On, "Drip irrigation"),
                    MenuAction::DripOff => (Actuator::Drip, Switch::Off, "Drip irrigation"),
                    MenuAction::MistOn => (Actuator::Mist, Switch::On, "Mist irrigation"),
                    _ => (Actuator::Mist, Switch::Off, "Mist irrigation"),
                };
                self.set_page(
                    user_id,
                    if target == Actuator::Drip { Page::Drip } else { Page::Mist },
                );
                let (_, changed) = self.apply_command(user_id, target, desired)?;
                let verb = if changed { "now" } else { "already" };
                return Ok(vec![OutboundMessage::text(
                    user_id,
                    format!("{name} is {verb} {desired}"),
                )]);
            }
        };
        Ok(vec![OutboundMessage::card(user_id, card)])
    }

    /// Sets one switch. Idempotent; every call is audited. The new state is
    /// seen by the next simulation step.
    pub fn apply_command(
        &mut self,
        user_id: &str,
        target: Actuator,
        desired: Switch,
    ) -> Result<(ActuatorState, bool), OrchestratorError> {
        if !self.is_active(user_id) {
            return Err(OrchestratorError::SessionInactive(user_id.to_string()));
        }
        let slot = match target {
            Actuator::Drip => self.actuators.drip,
            Actuator::Mist => self.actuators.mist,
        };
        let changed = slot != desired;
        let entry = AuditEntry {
            user_id: user_id.to_string(),
            ts: self.clock.now(),
            target,
            desired,
            changed,
        };
        let body = serde_json::to_string(&entry).expect("audit entry serializes");
        self.store.append(Stream::Audit, entry.ts, &body)?;
        match target {
            Actuator::Drip => self.actuators.drip = desired,
            Actuator::Mist => self.actuators.mist = desired,
        }
        Ok((self.actuators, changed))
    }

    /// VIDEO of the day (when the playlist is non-empty) then a status CARD.
    pub fn morning_briefing(
        &self,
        user_id: &str,
    ) -> Result<Vec<OutboundMessage>, OrchestratorError> {
        if !self.is_active(user_id) {
            return Err(OrchestratorError::SessionInactive(user_id.to_string()));
        }
        let mut msgs = Vec::with_capacity(2);
        match self.todays_video() {
            Some(url) => msgs.push(OutboundMessage::video(user_id, url)),
            None => warn!("knowledge playlist is empty; briefing carries status only"),
        }
        msgs.push(OutboundMessage::card(
            user_id,
            pages::status_card("Good morning! Current field status", &self.latest, self.actuators),
        ));
        Ok(msgs)
    }

    fn todays_video(&self) -> Option<&str> {
        if self.playlist.is_empty() {
            return None;
        }
        let i = (self.clock.day_index() % self.playlist.len() as u64) as usize;
        Some(&self.playlist[i])
    }

    fn keywords(&self) -> Vec<&str> {
        self.registry
            .intents()
            .iter()
            .map(|i| i.training_phrases[0].as_str())
            .collect()
    }

    pub fn answer_intent(&self, user_id: &str, result: &MatchResult) -> Vec<OutboundMessage> {
        match result {
            MatchResult::Matched { intent } => {
                let Some(handler) = self.registry.get(intent).map(|i| i.handler) else {
                    return vec![OutboundMessage::text(user_id, pages::fallback(&self.keywords()))];
                };
                match handler {
                    Handler::WeatherForecast => {
                        let today = self.clock.day_index();
                        let days: Vec<_> = (today..today + FORECAST_DAYS)
                            .map(|d| sim::weather_forecast(&self.sim, d))
                            .collect();
                        vec![OutboundMessage::text(user_id, pages::forecast_text(&days))]
                    }
                    Handler::FieldStatus => vec![OutboundMessage::card(
                        user_id,
                        pages::status_card("Field status", &self.latest, self.actuators),
                    )],
                    Handler::Help => {
                        vec![OutboundMessage::text(user_id, pages::help(&self.keywords()))]
                    }
                    Handler::CropKnowledge => match self.todays_video() {
                        Some(url) => vec![OutboundMessage::video(user_id, url)],
                        None => vec![OutboundMessage::text(user_id, pages::NO_VIDEO)],
                    },
                }
            }
            MatchResult::Suggest { suggestions, .. } => {
                vec![OutboundMessage::text(user_id, pages::did_you_mean(suggestions))]
            }
            MatchResult::NoMatch => {
                vec![OutboundMessage::text(user_id, pages::fallback(&self.keywords()))]
            }
        }
    }

    /// One step of the loop: simulate, record telemetry, evaluate rules,
    /// queue recommendations for every active user, then the morning briefing
    /// if the local clock crossed the briefing time.
    pub fn tick(&mut self) -> TickOutput {
        let mut errors = Vec::new();
        self.clock.advance();
        let now = self.clock.now();

        self.field = sim::step(&self.field, self.actuators, &self.sim);
        let snapshot = self.field.snapshot(now);
        self.latest = snapshot;
        let body = serde_json::to_string(&snapshot).expect("snapshot serializes");
        if let Err(e) = self.store.append(Stream::Telemetry, now, &body) {
            error!("telemetry append failed: {e}");
            errors.push(e.to_string());
        }

        let (recommendations, next_state) = evaluate(&snapshot, &self.rules, &self.rule_state);
        self.rule_state = next_state;

        let active = self.active_users();
        let mut deliveries = Vec::new();
        for rec in &recommendations {
            let text = pages::recommendation_text(rec);
            self.latest_recommendation = Some(text.clone());
            for user in &active {
                deliveries.push(Delivery {
                    user_id: user.clone(),
                    messages: vec![OutboundMessage::text(user, &text)],
                });
            }
        }

        let key = self.clock.briefing_key(now);
        let briefing_sent = key > self.last_briefing_key;
        if briefing_sent {
            self.last_briefing_key = key;
            for user in &active {
                match self.morning_briefing(user) {
                    Ok(messages) => deliveries.push(Delivery {
                        user_id: user.clone(),
                        messages,
                    }),
                    Err(e) => errors.push(e.to_string()),
                }
            }
        }

        TickOutput {
            snapshot,
            recommendations,
            deliveries,
            briefing_sent,
            errors,
        }
    }
}
