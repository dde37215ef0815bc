//! Rule-based ("script bot") intent matching over registered training phrases.
//!
//! Matching is tiered: an exact match on the normalized utterance wins; failing
//! that, training phrases within a small edit distance are offered back as
//! "did you mean" suggestions; otherwise nothing matches.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;
use thiserror::Error;
use unicode_normalization::char::is_combining_mark;

const DEFAULT_REGISTRY: &str = include_str!("../data/default_registry.json");

/// Most suggestions returned in a single SUGGEST result.
pub const MAX_SUGGESTIONS: usize = 3;

#[derive(Debug, Error)]
pub enum IntentError {
    #[error("duplicate intent {0:?}")]
    DuplicateIntent(String),
    #[error("intent {intent:?}: training phrase {phrase:?} normalizes to nothing")]
    EmptyTrainingPhrase { intent: String, phrase: String },
    #[error("intent {0:?} has no training phrases")]
    NoTrainingPhrases(String),
    #[error("unknown intent handler {0:?}")]
    UnknownHandler(String),
    #[error("utterance is empty after normalization")]
    EmptyUtterance,
    #[error("registry file {path}: {reason}")]
    Parse { path: String, reason: String },
    #[error("registry file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Handler {
    WeatherForecast,
    FieldStatus,
    Help,
    CropKnowledge,
}

impl Handler {
    pub fn as_str(self) -> &'static str {
        match self {
            Handler::WeatherForecast => "WEATHER_FORECAST",
            Handler::FieldStatus => "FIELD_STATUS",
            Handler::Help => "HELP",
            Handler::CropKnowledge => "CROP_KNOWLEDGE",
        }
    }
}

impl fmt::Display for Handler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Handler {
    type Err = IntentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "WEATHER_FORECAST" => Ok(Handler::WeatherForecast),
            "FIELD_STATUS" => Ok(Handler::FieldStatus),
            "HELP" => Ok(Handler::Help),
            "CROP_KNOWLEDGE" => Ok(Handler::CropKnowledge),
            other => Err(IntentError::UnknownHandler(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Intent {
    pub name: String,
    pub handler: Handler,
    pub training_phrases: Vec<String>,
}

impl Intent {
    pub fn new<S: Into<String>>(
        name: impl Into<String>,
        handler: Handler,
        phrases: impl IntoIterator<Item = S>,
    ) -> Self {
        Intent {
            name: name.into(),
            handler,
            training_phrases: phrases.into_iter().map(Into::into).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MatchResult {
    Matched {
        intent: String,
    },
    Suggest {
        /// Training phrases as registered, nearest first.
        suggestions: Vec<String>,
        /// Edit distance to the nearest suggestion.
        distance: usize,
    },
    NoMatch,
}

/// Lowercases, strips punctuation and splits on whitespace.
///
/// Letters, digits and combining marks are kept (so Thai vowel and tone marks
/// stay attached to their consonants); every other character separates tokens.
pub fn normalize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() || is_combining_mark(c) {
            push_lowercase(&mut current, c);
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

// Single-character lowercase mapping only; multi-character expansions
// (e.g. U+0130) are left as is.
fn push_lowercase(out: &mut String, c: char) {
    let mut lower = c.to_lowercase();
    match (lower.next(), lower.next()) {
        (Some(l), None) => out.push(l),
        _ => out.push(c),
    }
}

/// `normalize` joined back with single spaces.
pub fn normalized_text(text: &str) -> String {
    normalize(text).join(" ")
}

/// Unit-cost Levenshtein distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut curr = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        curr[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let substitute = prev[j] + usize::from(ca != cb);
            curr[j + 1] = substitute.min(prev[j + 1] + 1).min(curr[j] + 1);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

/// Largest edit distance at which a phrase of `phrase_len` characters is suggested.
pub fn suggestion_threshold(phrase_len: usize) -> usize {
    (phrase_len / 5).max(2)
}

#[derive(Debug, Clone)]
struct PhraseEntry {
    intent: usize,
    phrase: String,
    normalized: String,
    len: usize,
}

/// An ordered set of intents. Registration order is the tie-breaker for suggestions.
#[derive(Debug, Clone, Default)]
pub struct IntentRegistry {
    intents: Vec<Intent>,
    entries: Vec<PhraseEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct IntentRecord {
    name: String,
    handler: String,
    phrases: Vec<String>,
}

impl IntentRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// The registry shipped with the crate.
    pub fn default_registry() -> Self {
        Self::from_json("<builtin>", DEFAULT_REGISTRY).expect("built-in registry is valid")
    }

    pub fn load(path: &Path) -> Result<Self, IntentError> {
        let text = std::fs::read_to_string(path).map_err(|source| IntentError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&path.display().to_string(), &text)
    }

    pub fn from_json(origin: &str, text: &str) -> Result<Self, IntentError> {
        let records: Vec<IntentRecord> =
            serde_json::from_str(text).map_err(|e| IntentError::Parse {
                path: origin.to_string(),
                reason: e.to_string(),
            })?;
        let mut registry = Self::new();
        for record in records {
            let handler = record.handler.parse()?;
            registry.register(Intent::new(record.name, handler, record.phrases))?;
        }
        Ok(registry)
    }

    pub fn register(&mut self, intent: Intent) -> Result<(), IntentError> {
        if self.intents.iter().any(|i| i.name == intent.name) {
            return Err(IntentError::DuplicateIntent(intent.name));
        }
        if intent.training_phrases.is_empty() {
            return Err(IntentError::NoTrainingPhrases(intent.name));
        }
        let index = self.intents.len();
        let mut fresh = Vec::with_capacity(intent.training_phrases.len());
        for phrase in &intent.training_phrases {
            let normalized = normalized_text(phrase);
            if normalized.is_empty() {
                return Err(IntentError::EmptyTrainingPhrase {
                    intent: intent.name.clone(),
                    phrase: phrase.clone(),
                });
            }
            fresh.push(PhraseEntry {
                intent: index,
                phrase: phrase.clone(),
                len: normalized.chars().count(),
                normalized,
            });
        }
        self.entries.extend(fresh);
        self.intents.push(intent);
        Ok(())
    }

    /// Builder-style [`register`](Self::register).
    pub fn with(mut self, intent: Intent) -> Result<Self, IntentError> {
        self.register(intent)?;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.intents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intents.is_empty()
    }

    pub fn intents(&self) -> &[Intent] {
        &self.intents
    }

    pub fn get(&self, name: &str) -> Option<&Intent> {
        self.intents.iter().find(|i| i.name == name)
    }

    /// Intent owning a registered training phrase (as registered).
    pub fn intent_of_phrase(&self, phrase: &str) -> Option<&Intent> {
        self.entries
            .iter()
            .find(|e| e.phrase == phrase)
            .map(|e| &self.intents[e.intent])
    }

    pub fn match_intent(&self, text: &str) -> Result<MatchResult, IntentError> {
        let utterance = normalized_text(text);
        if utterance.is_empty() {
            return Err(IntentError::EmptyUtterance);
        }
        if let Some(entry) = self.entries.iter().find(|e| e.normalized == utterance) {
            return Ok(MatchResult::Matched {
                intent: self.intents[entry.intent].name.clone(),
            });
        }

        let mut candidates: Vec<(usize, &PhraseEntry)> = self
            .entries
            .iter()
            .map(|e| (levenshtein(&utterance, &e.normalized), e))
            .filter(|(d, e)| *d <= suggestion_threshold(e.len))
            .collect();
        if candidates.is_empty() {
            return Ok(MatchResult::NoMatch);
        }
        candidates.sort_by(|(da, a), (db, b)| {
            da.cmp(db)
                .then(a.intent.cmp(&b.intent))
                .then_with(|| a.normalized.cmp(&b.normalized))
        });
        let distance = candidates[0].0;
        let mut seen = HashSet::new();
        let suggestions = candidates
            .into_iter()
            .filter(|(_, e)| seen.insert(e.normalized.as_str()))
            .take(MAX_SUGGESTIONS)
            .map(|(_, e)| e.phrase.clone())
            .collect();
        Ok(MatchResult::Suggest {
            suggestions,
            distance,
        })
    }
}
