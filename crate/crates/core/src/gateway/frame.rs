//! Chat wire frames and their canonical JSON codec.
//!
//! Every frame is a single line of compact JSON with a fixed key order, so
//! transcripts can be compared byte for byte.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrameError {
    #[error("malformed frame ({field}): {reason}")]
    MalformedFrame { field: String, reason: String },
    #[error("unknown event type {0:?}")]
    UnknownEventType(String),
    #[error("unknown menu action {0:?}")]
    UnknownAction(String),
    #[error("missing field {0:?}")]
    MissingField(&'static str),
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
}

impl FrameError {
    fn malformed(field: impl Into<String>, reason: impl Into<String>) -> Self {
        FrameError::MalformedFrame {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

/// Rich-menu button taps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MenuAction {
    ToggleSession,
    ShowMain,
    ShowDrip,
    ShowMist,
    ShowMonitor,
    DripOn,
    DripOff,
    MistOn,
    MistOff,
}

impl MenuAction {
    pub const ALL: [MenuAction; 9] = [
        MenuAction::ToggleSession,
        MenuAction::ShowMain,
        MenuAction::ShowDrip,
        MenuAction::ShowMist,
        MenuAction::ShowMonitor,
        MenuAction::DripOn,
        MenuAction::DripOff,
        MenuAction::MistOn,
        MenuAction::MistOff,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MenuAction::ToggleSession => "TOGGLE_SESSION",
            MenuAction::ShowMain => "SHOW_MAIN",
            MenuAction::ShowDrip => "SHOW_DRIP",
            MenuAction::ShowMist => "SHOW_MIST",
            MenuAction::ShowMonitor => "SHOW_MONITOR",
            MenuAction::DripOn => "DRIP_ON",
            MenuAction::DripOff => "DRIP_OFF",
            MenuAction::MistOn => "MIST_ON",
            MenuAction::MistOff => "MIST_OFF",
        }
    }

    /// True for the four actions that switch an actuator.
    pub fn is_actuator_command(self) -> bool {
        matches!(
            self,
            MenuAction::DripOn | MenuAction::DripOff | MenuAction::MistOn | MenuAction::MistOff
        )
    }
}

impl fmt::Display for MenuAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MenuAction {
    type Err = FrameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MenuAction::ALL
            .iter()
            .copied()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| FrameError::UnknownAction(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventPayload {
    Text(String),
    Postback(MenuAction),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InboundEvent {
    pub event_id: String,
    pub user_id: String,
    pub ts: i64,
    pub payload: EventPayload,
}

impl InboundEvent {
    pub fn text(
        event_id: impl Into<String>,
        user_id: impl Into<String>,
        ts: i64,
        text: impl Into<String>,
    ) -> Self {
        InboundEvent {
            event_id: event_id.into(),
            user_id: user_id.into(),
            ts,
            payload: EventPayload::Text(text.into()),
        }
    }

    pub fn postback(
        event_id: impl Into<String>,
        user_id: impl Into<String>,
        ts: i64,
        action: MenuAction,
    ) -> Self {
        InboundEvent {
            event_id: event_id.into(),
            user_id: user_id.into(),
            ts,
            payload: EventPayload::Postback(action),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CardField {
    pub label: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Card {
    pub title: String,
    pub fields: Vec<CardField>,
}

impl Card {
    pub fn new(title: impl Into<String>) -> Self {
        Card {
            title: title.into(),
            fields: Vec::new(),
        }
    }

    pub fn field(mut self, label: impl Into<String>, value: impl Into<String>) -> Self {
        self.fields.push(CardField {
            label: label.into(),
            value: value.into(),
        });
        self
    }

    pub fn get(&self, label: &str) -> Option<&str> {
        self.fields
            .iter()
            .find(|f| f.label == label)
            .map(|f| f.value.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MessageBody {
    Text(String),
    Video(String),
    Card(Card),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutboundMessage {
    pub user_id: String,
    pub body: MessageBody,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MessageKind {
    Text,
    Video,
    Card,
}

impl OutboundMessage {
    pub fn text(user_id: impl Into<String>, text: impl Into<String>) -> Self {
        OutboundMessage {
            user_id: user_id.into(),
            body: MessageBody::Text(text.into()),
        }
    }

    pub fn video(user_id: impl Into<String>, url: impl Into<String>) -> Self {
        OutboundMessage {
            user_id: user_id.into(),
            body: MessageBody::Video(url.into()),
        }
    }

    pub fn card(user_id: impl Into<String>, card: Card) -> Self {
        OutboundMessage {
            user_id: user_id.into(),
            body: MessageBody::Card(card),
        }
    }

    pub fn kind(&self) -> MessageKind {
        match self.body {
            MessageBody::Text(_) => MessageKind::Text,
            MessageBody::Video(_) => MessageKind::Video,
            MessageBody::Card(_) => MessageKind::Card,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match &self.body {
            MessageBody::Text(t) => Some(t),
            _ => None,
        }
    }

    pub fn as_card(&self) -> Option<&Card> {
        match &self.body {
            MessageBody::Card(c) => Some(c),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), FrameError> {
        match &self.body {
            MessageBody::Text(_) => Ok(()),
            MessageBody::Video(url) if url.trim().is_empty() => Err(
                FrameError::InvariantViolation("video message has an empty url".into()),
            ),
            MessageBody::Video(_) => Ok(()),
            MessageBody::Card(card) if card.fields.is_empty() => Err(
                FrameError::InvariantViolation("card message has no fields".into()),
            ),
            MessageBody::Card(_) => Ok(()),
        }
    }
}

#[derive(Serialize)]
struct InboundWire<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    event_id: &'a str,
    user_id: &'a str,
    ts: i64,
    #[serde(skip_serializing_if = "Option::is_none")]
    text: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    action: Option<&'static str>,
}

#[derive(Serialize)]
struct OutboundWire<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    user_id: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    text: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    url: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    card: Option<&'a Card>,
}

fn object(raw: &[u8]) -> Result<Map<String, Value>, FrameError> {
    let value: Value = serde_json::from_slice(raw)
        .map_err(|e| FrameError::malformed("frame", e.to_string()))?;
    match value {
        Value::Object(map) => Ok(map),
        _ => Err(FrameError::malformed("frame", "frame is not a JSON object")),
    }
}

fn take_str(map: &mut Map<String, Value>, field: &'static str) -> Result<String, FrameError> {
    match map.remove(field) {
        None => Err(FrameError::MissingField(field)),
        Some(Value::String(s)) => Ok(s),
        Some(_) => Err(FrameError::malformed(field, "expected a string")),
    }
}

fn reject_leftovers(map: &Map<String, Value>) -> Result<(), FrameError> {
    match map.keys().next() {
        Some(key) => Err(FrameError::malformed(key.clone(), "unexpected field")),
        None => Ok(()),
    }
}

/// Decodes one inbound frame.
pub fn decode_event(raw: &[u8]) -> Result<InboundEvent, FrameError> {
    let mut map = object(raw)?;
    let kind = take_str(&mut map, "type")?;
    if kind != "message" && kind != "postback" {
        return Err(FrameError::UnknownEventType(kind));
    }
    let event_id = take_str(&mut map, "event_id")?;
    let user_id = take_str(&mut map, "user_id")?;
    let ts = match map.remove("ts") {
        None => return Err(FrameError::MissingField("ts")),
        Some(v) => v
            .as_i64()
            .ok_or_else(|| FrameError::malformed("ts", "expected an integer"))?,
    };
    let payload = if kind == "message" {
        if map.contains_key("action") {
            return Err(FrameError::malformed("action", "not allowed on a message event"));
        }
        EventPayload::Text(take_str(&mut map, "text")?)
    } else {
        if map.contains_key("text") {
            return Err(FrameError::malformed("text", "not allowed on a postback event"));
        }
        EventPayload::Postback(take_str(&mut map, "action")?.parse()?)
    };
    reject_leftovers(&map)?;
    Ok(InboundEvent {
        event_id,
        user_id,
        ts,
        payload,
    })
}

/// Canonical encoding of an inbound event; the inverse of [`decode_event`].
pub fn encode_event(ev: &InboundEvent) -> Vec<u8> {
    let (kind, text, action) = match &ev.payload {
        EventPayload::Text(t) => ("message", Some(t.as_str()), None),
        EventPayload::Postback(a) => ("postback", None, Some(a.as_str())),
    };
    let wire = InboundWire {
        kind,
        event_id: &ev.event_id,
        user_id: &ev.user_id,
        ts: ev.ts,
        text,
        action,
    };
    serde_json::to_vec(&wire).expect("inbound frame serializes")
}

pub fn encode_message(msg: &OutboundMessage) -> Result<Vec<u8>, FrameError> {
    msg.validate()?;
    let mut wire = OutboundWire {
        kind: "text",
        user_id: &msg.user_id,
        text: None,
        url: None,
        card: None,
    };
    match &msg.body {
        MessageBody::Text(t) => wire.text = Some(t),
        MessageBody::Video(u) => {
            wire.kind = "video";
            wire.url = Some(u);
        }
        MessageBody::Card(c) => {
            wire.kind = "card";
            wire.card = Some(c);
        }
    }
    Ok(serde_json::to_vec(&wire).expect("outbound frame serializes"))
}

/// [`encode_message`] as a `String`, for line-oriented writers.
pub fn encode_message_string(msg: &OutboundMessage) -> Result<String, FrameError> {
    encode_message(msg).map(|b| String::from_utf8(b).expect("serde_json emits UTF-8"))
}

fn decode_card(value: Value) -> Result<Card, FrameError> {
    let Value::Object(mut map) = value else {
        return Err(FrameError::malformed("card", "expected an object"));
    };
    let title = match map.remove("title") {
        Some(Value::String(s)) => s,
        Some(_) => return Err(FrameError::malformed("card.title", "expected a string")),
        None => return Err(FrameError::MissingField("card.title")),
    };
    let fields = match map.remove("fields") {
        Some(Value::Array(items)) => items
            .into_iter()
            .map(|item| {
                let Value::Object(mut f) = item else {
                    return Err(FrameError::malformed("card.fields", "expected objects"));
                };
                let label = take_str(&mut f, "label")?;
                let value = take_str(&mut f, "value")?;
                reject_leftovers(&f)?;
                Ok(CardField { label, value })
            })
            .collect::<Result<Vec<_>, _>>()?,
        Some(_) => return Err(FrameError::malformed("card.fields", "expected an array")),
        None => return Err(FrameError::MissingField("card.fields")),
    };
    reject_leftovers(&map)?;
    Ok(Card { title, fields })
}

/// Decodes one outbound frame, as read back from a transcript or a poll response.
pub fn decode_message(raw: &[u8]) -> Result<OutboundMessage, FrameError> {
    let mut map = object(raw)?;
    let kind = take_str(&mut map, "type")?;
    let user_id = take_str(&mut map, "user_id")?;
    let body = match kind.as_str() {
        "text" => MessageBody::Text(take_str(&mut map, "text")?),
        "video" => MessageBody::Video(take_str(&mut map, "url")?),
        "card" => {
            let card = map.remove("card").ok_or(FrameError::MissingField("card"))?;
            MessageBody::Card(decode_card(card)?)
        }
        _ => return Err(FrameError::UnknownEventType(kind)),
    };
    reject_leftovers(&map)?;
    let msg = OutboundMessage { user_id, body };
    msg.validate()?;
    Ok(msg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn decodes_text_message() {
        let raw = br#"{"type":"message","event_id":"e1","user_id":"u1","ts":1700000000,"text":"weather forecast"}"#;
        let ev = decode_event(raw).unwrap();
        assert_eq!(
            ev,
            InboundEvent::text("e1", "u1", 1_700_000_000, "weather forecast")
        );
        assert_eq!(encode_event(&ev), raw.to_vec());
    }

    #[test]
    fn decodes_postback() {
        let raw = br#"{"type":"postback","event_id":"e2","user_id":"u1","ts":1700000001,"action":"DRIP_ON"}"#;
        let ev = decode_event(raw).unwrap();
        assert_eq!(ev.payload, EventPayload::Postback(MenuAction::DripOn));
        assert_eq!(encode_event(&ev), raw.to_vec());
    }

    #[test]
    fn rejects_unknown_type_and_action() {
        let raw = br#"{"type":"sticker","event_id":"e3","user_id":"u1","ts":1}"#;
        assert_eq!(
            decode_event(raw),
            Err(FrameError::UnknownEventType("sticker".into()))
        );
        let raw = br#"{"type":"postback","event_id":"e3","user_id":"u1","ts":1,"action":"FLOOD"}"#;
        assert_eq!(
            decode_event(raw),
            Err(FrameError::UnknownAction("FLOOD".into()))
        );
    }

    #[test]
    fn decode_errors_name_the_field() {
        let raw = br#"{"type":"message","user_id":"u1","ts":1,"text":"x"}"#;
        assert_eq!(decode_event(raw), Err(FrameError::MissingField("event_id")));
        let raw = br#"{"type":"message","event_id":"e","user_id":"u1","ts":"soon","text":"x"}"#;
        assert!(matches!(
            decode_event(raw),
            Err(FrameError::MalformedFrame { field, .. }) if field == "ts"
        ));
        let raw = br#"{"type":"message","event_id":"e","user_id":"u1","ts":1,"action":"DRIP_ON"}"#;
        assert!(matches!(
            decode_event(raw),
            Err(FrameError::MalformedFrame { field, .. }) if field == "action"
        ));
        let raw = br#"{"type":"message","event_id":"e","user_id":"u1","ts":1,"text":"x","extra":1}"#;
        assert!(matches!(
            decode_event(raw),
            Err(FrameError::MalformedFrame { field, .. }) if field == "extra"
        ));
        assert!(matches!(
            decode_event(b"{not json"),
            Err(FrameError::MalformedFrame { .. })
        ));
    }

    #[test]
    fn encodes_text_frame() {
        let msg = OutboundMessage::text("u1", "Drip irrigation is now ON");
        assert_eq!(
            encode_message_string(&msg).unwrap(),
            r#"{"type":"text","user_id":"u1","text":"Drip irrigation is now ON"}"#
        );
    }

    #[test]
    fn encodes_card_frame() {
        let card = Card::new("Field status").field("soil_moisture", "23.4 %VWC");
        let msg = OutboundMessage::card("u1", card);
        let frame = encode_message_string(&msg).unwrap();
        assert_eq!(
            frame,
            r#"{"type":"card","user_id":"u1","card":{"title":"Field status","fields":[{"label":"soil_moisture","value":"23.4 %VWC"}]}}"#
        );
        assert_eq!(decode_message(frame.as_bytes()).unwrap(), msg);
    }

    #[test]
    fn empty_video_url_is_invariant_violation() {
        let msg = OutboundMessage::video("u1", "");
        assert!(matches!(
            encode_message(&msg),
            Err(FrameError::InvariantViolation(_))
        ));
        let empty_card = OutboundMessage::card("u1", Card::new("nothing"));
        assert!(encode_message(&empty_card).is_err());
    }

    fn arb_event() -> impl Strategy<Value = InboundEvent> {
        let payload = prop_oneof![
            any::<String>().prop_map(EventPayload::Text),
            proptest::sample::select(MenuAction::ALL.to_vec()).prop_map(EventPayload::Postback),
        ];
        (any::<String>(), any::<String>(), any::<i64>(), payload).prop_map(
            |(event_id, user_id, ts, payload)| InboundEvent {
                event_id,
                user_id,
                ts,
                payload,
            },
        )
    }

    proptest! {
        #[test]
        fn inbound_round_trip(ev in arb_event()) {
            let frame = encode_event(&ev);
            let back = decode_event(&frame).unwrap();
            prop_assert_eq!(&back, &ev);
            prop_assert_eq!(encode_event(&back), frame);
        }

        #[test]
        fn outbound_round_trip(user in ".*", text in ".*", title in ".*", label in ".*") {
            let msgs = [
                OutboundMessage::text(user.clone(), text.clone()),
                OutboundMessage::card(user.clone(), Card::new(title).field(label, text)),
            ];
            for msg in msgs {
                let frame = encode_message(&msg).unwrap();
                prop_assert_eq!(decode_message(&frame).unwrap(), msg);
            }
        }
    }
}
