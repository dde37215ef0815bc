//! Routes inbound events to the orchestrator and delivers outbound messages.
//!
//! Every outbound message, reply or push, is appended to the transcript
//! stream in the order it was produced. A connected user's messages go to its
//! delivered queue (drained by the transport); a disconnected user's messages
//! wait in a pending queue until the next [`Gateway::connect`].

pub mod frame;

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};

use log::{error, warn};
use thiserror::Error;

pub use frame::*;

use crate::orchestrator::{pages, Orchestrator, TickOutput};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GatewayError {
    #[error("push requires at least one message")]
    EmptyPush,
    #[error("unknown user {0:?}")]
    UnknownUser(String),
    #[error("session for {0:?} is not active")]
    SessionInactive(String),
    #[error("duplicate event id {0:?}")]
    DuplicateEvent(String),
    #[error("message for {expected:?} addressed to {found:?}")]
    WrongRecipient { expected: String, found: String },
    #[error(transparent)]
    Frame(#[from] FrameError),
}

/// Outcome of a [`Gateway::push`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Receipt {
    pub delivered: usize,
    pub queued: usize,
}

#[derive(Debug, Default)]
struct Mailbox {
    connected: bool,
    delivered: VecDeque<OutboundMessage>,
    pending: VecDeque<OutboundMessage>,
}

#[derive(Debug)]
pub struct Gateway {
    orch: Orchestrator,
    mailboxes: BTreeMap<String, Mailbox>,
    allowlist: BTreeSet<String>,
    seen_events: HashSet<String>,
    errors: Vec<String>,
}

impl Gateway {
    pub fn new(orch: Orchestrator, allowlist: impl IntoIterator<Item = String>) -> Self {
        let mut gw = Gateway {
            orch,
            mailboxes: BTreeMap::new(),
            allowlist: allowlist.into_iter().collect(),
            seen_events: HashSet::new(),
            errors: Vec::new(),
        };
        for user in gw.orch.active_users() {
            gw.mailboxes.entry(user).or_default();
        }
        gw
    }

    pub fn orchestrator(&self) -> &Orchestrator {
        &self.orch
    }

    pub fn orchestrator_mut(&mut self) -> &mut Orchestrator {
        &mut self.orch
    }

    /// Internal failures recorded instead of dropping an event or a tick.
    pub fn errors(&self) -> &[String] {
        &self.errors
    }

    pub fn is_known(&self, user_id: &str) -> bool {
        self.mailboxes.contains_key(user_id) || self.allowlist.contains(user_id)
    }

    pub fn is_connected(&self, user_id: &str) -> bool {
        self.mailboxes.get(user_id).is_some_and(|m| m.connected)
    }

    /// Marks the user's channel open and moves any pending messages to the
    /// delivered queue.
    pub fn connect(&mut self, user_id: &str) {
        let mb = self.mailboxes.entry(user_id.to_string()).or_default();
        mb.connected = true;
        let pending: Vec<_> = mb.pending.drain(..).collect();
        mb.delivered.extend(pending);
    }

    pub fn disconnect(&mut self, user_id: &str) {
        if let Some(mb) = self.mailboxes.get_mut(user_id) {
            mb.connected = false;
        }
    }

    /// Drains messages already delivered to the user's channel.
    pub fn take_delivered(&mut self, user_id: &str) -> Vec<OutboundMessage> {
        self.mailboxes
            .get_mut(user_id)
            .map(|mb| mb.delivered.drain(..).collect())
            .unwrap_or_default()
    }

    pub fn pending_count(&self, user_id: &str) -> usize {
        self.mailboxes.get(user_id).map_or(0, |mb| mb.pending.len())
    }

    fn record(&mut self, msgs: &[OutboundMessage]) {
        if let Err(e) = self.orch.record_transcript(msgs) {
            error!("transcript append failed: {e}");
            self.errors.push(e.to_string());
        }
    }

    /// Handles one inbound event and returns its reply batch. Never empty.
    pub fn route_event(&mut self, ev: &InboundEvent) -> Result<Vec<OutboundMessage>, GatewayError> {
        if !self.seen_events.insert(ev.event_id.clone()) {
            return Err(GatewayError::DuplicateEvent(ev.event_id.clone()));
        }
        self.mailboxes.entry(ev.user_id.clone()).or_default();
        let was_active = self.orch.is_active(&ev.user_id);
        let replies = match self.orch.handle_event(ev) {
            Ok(r) => r,
            Err(e) => {
                error!("event {} failed: {e}", ev.event_id);
                self.errors.push(format!("event {}: {e}", ev.event_id));
                vec![OutboundMessage::text(&ev.user_id, pages::APOLOGY)]
            }
        };
        if was_active && !self.orch.is_active(&ev.user_id) {
            if let Some(mb) = self.mailboxes.get_mut(&ev.user_id) {
                let dropped = mb.pending.len();
                mb.pending.clear();
                if dropped > 0 {
                    warn!("dropped {dropped} queued messages for stopped user {}", ev.user_id);
                }
            }
        }
        self.record(&replies);
        Ok(replies)
    }

    /// Decodes one raw inbound frame and routes it.
    pub fn route_frame(&mut self, raw: &[u8]) -> Result<Vec<OutboundMessage>, GatewayError> {
        let ev = decode_event(raw)?;
        self.route_event(&ev)
    }

    /// Sends messages outside a reply batch.
    pub fn push(&mut self, user_id: &str, msgs: Vec<OutboundMessage>) -> Result<Receipt, GatewayError> {
        if msgs.is_empty() {
            return Err(GatewayError::EmptyPush);
        }
        if !self.is_known(user_id) {
            return Err(GatewayError::UnknownUser(user_id.to_string()));
        }
        if !self.orch.is_active(user_id) {
            return Err(GatewayError::SessionInactive(user_id.to_string()));
        }
        for m in &msgs {
            if m.user_id != user_id {
                return Err(GatewayError::WrongRecipient {
                    expected: user_id.to_string(),
                    found: m.user_id.clone(),
                });
            }
            m.validate()?;
        }
        self.record(&msgs);
        let n = msgs.len();
        let mb = self.mailboxes.entry(user_id.to_string()).or_default();
        if mb.connected {
            mb.delivered.extend(msgs);
            Ok(Receipt { delivered: n, queued: 0 })
        } else {
            mb.pending.extend(msgs);
            Ok(Receipt { delivered: 0, queued: n })
        }
    }

    /// Advances the orchestrator one tick and pushes what it produced.
    pub fn tick(&mut self) -> TickOutput {
        let mut out = self.orch.tick();
        for d in &out.deliveries {
            if let Err(e) = self.push(&d.user_id, d.messages.clone()) {
                warn!("tick push to {} failed: {e}", d.user_id);
                out.errors.push(e.to_string());
            }
        }
        self.errors.extend(out.errors.iter().cloned());
        out
    }
}
