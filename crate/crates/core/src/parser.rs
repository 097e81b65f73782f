//! Turning raw model replies into validated support content.

use serde_json::{Map, Value};
use thiserror::Error;
use tracing::warn;

use crate::domain::{term_matches_at, word_count, ReasoningTrace, SupportContent, MAX_SUPPORT_WORDS};
use crate::gateway::{GatewayError, LlmGateway, RawModelOutput};
use crate::prompt::{PromptBundle, PromptEngine};

/// Emphasis marker placed on both sides of a term.
pub const MARKER: &str = "**";

const FIELDS: [&str; 4] = ["situation", "intent", "support_text", "emphasis_terms"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("no JSON object found in model reply")]
    NoJsonFound,
    #[error("model reply is missing field `{0}`")]
    MissingField(String),
    #[error("model reply field `{0}` has the wrong shape")]
    WrongShape(String),
}

impl ParseError {
    pub fn kind(&self) -> &'static str {
        match self {
            ParseError::NoJsonFound => "no_json_found",
            ParseError::MissingField(_) => "missing_field",
            ParseError::WrongShape(_) => "wrong_shape",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("support text has {0} words, limit is {MAX_SUPPORT_WORDS}")]
    WordLimitExceeded(usize),
    #[error("support text is empty")]
    EmptySupportText,
}

impl ValidationError {
    pub fn kind(&self) -> &'static str {
        match self {
            ValidationError::WordLimitExceeded(_) => "word_limit_exceeded",
            ValidationError::EmptySupportText => "empty_support_text",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("emphasis term `{0}` not found in support text")]
pub struct TermNotFound(pub String);

/// JSON objects embedded in `raw`, in order of appearance.
fn json_objects(raw: &str) -> Vec<Map<String, Value>> {
    let mut found = Vec::new();
    let mut from = 0;
    while let Some(offset) = raw[from..].find('{') {
        let start = from + offset;
        let mut stream = serde_json::Deserializer::from_str(&raw[start..]).into_iter::<Value>();
        match stream.next() {
            Some(Ok(Value::Object(map))) => {
                found.push(map);
                from = start + stream.byte_offset();
            }
            _ => from = start + 1,
        }
    }
    found
}

fn string_field(map: &Map<String, Value>, name: &str) -> Result<String, ParseError> {
    match map.get(name) {
        None => Err(ParseError::MissingField(name.into())),
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(ParseError::WrongShape(name.into())),
    }
}

/// Extracts the reasoning trace from a reply that may wrap the JSON object
/// in prose or code fences. The first object carrying all four fields wins;
/// if none does, the first object found determines the error.
pub fn parse_reasoning(raw: &str) -> Result<ReasoningTrace, ParseError> {
    let objects = json_objects(raw);
    let chosen = objects
        .iter()
        .find(|m| FIELDS.iter().all(|f| m.contains_key(*f)))
        .or_else(|| objects.first())
        .ok_or(ParseError::NoJsonFound)?;

    for field in FIELDS {
        if !chosen.contains_key(field) {
            return Err(ParseError::MissingField(field.into()));
        }
    }
    let situation = string_field(chosen, "situation")?;
    let intent = string_field(chosen, "intent")?;
    let support_text = string_field(chosen, "support_text")?;
    let emphasis_terms = match &chosen["emphasis_terms"] {
        Value::Array(items) => items
            .iter()
            .map(|v| v.as_str().map(str::to_string))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| ParseError::WrongShape("emphasis_terms".into()))?,
        _ => return Err(ParseError::WrongShape("emphasis_terms".into())),
    };
    Ok(ReasoningTrace {
        situation,
        intent,
        support_text,
        emphasis_terms,
    })
}

/// Flags a reply with nothing to emphasize, such as a refusal or an
/// off-topic answer. The text is still returned.
pub const NO_EMPHASIS_WARNING: &str = "no emphasis terms kept; reply may be a refusal or off-topic";

/// Support content plus the warnings produced while validating it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Validated {
    pub content: SupportContent,
    pub warnings: Vec<String>,
}

/// Enforces the word limit and keeps only emphasis terms that occur in the
/// support text. Asterisks are removed from the text and terms first so the
/// `**` markup stays unambiguous.
pub fn validate_support_content(trace: &ReasoningTrace) -> Result<Validated, ValidationError> {
    let mut warnings = Vec::new();

    let mut support_text = trace.support_text.trim().to_string();
    if support_text.contains('*') {
        support_text = support_text.replace('*', "");
        support_text = support_text.trim().to_string();
        warnings.push("removed `*` characters from support text".to_string());
    }
    if support_text.is_empty() {
        return Err(ValidationError::EmptySupportText);
    }
    let words = word_count(&support_text);
    if words > MAX_SUPPORT_WORDS {
        return Err(ValidationError::WordLimitExceeded(words));
    }

    let mut kept: Vec<String> = Vec::new();
    for term in &trace.emphasis_terms {
        let cleaned = term.replace('*', "");
        let cleaned = cleaned.trim();
        if cleaned.is_empty() {
            warnings.push("dropped empty emphasis term".to_string());
        } else if !crate::domain::contains_term(&support_text, cleaned) {
            warnings.push(format!(
                "dropped emphasis term `{cleaned}`: not found in support text"
            ));
        } else if !kept.iter().any(|k| k == cleaned) {
            kept.push(cleaned.to_string());
        }
    }
    if kept.is_empty() {
        warnings.push(NO_EMPHASIS_WARNING.to_string());
    }
    for w in &warnings {
        warn!("{w}");
    }

    let rendered = render_emphasis(&support_text, &kept).expect("terms checked above");
    Ok(Validated {
        content: SupportContent {
            support_text,
            emphasis_terms: kept,
            rendered,
        },
        warnings,
    })
}

/// Wraps term occurrences in `**`. Scanning left to right, the longest term
/// starting at each position wins and the scan resumes after it, so markers
/// never nest or overlap.
pub fn render_emphasis(support_text: &str, terms: &[String]) -> Result<String, TermNotFound> {
    if let Some(missing) = terms
        .iter()
        .find(|t| !crate::domain::contains_term(support_text, t))
    {
        return Err(TermNotFound(missing.clone()));
    }
    let mut by_length: Vec<&str> = terms.iter().map(String::as_str).collect();
    by_length.sort_by_key(|t| std::cmp::Reverse(t.len()));

    let mut out = String::with_capacity(support_text.len() + 4 * terms.len());
    let mut at = 0;
    while at < support_text.len() {
        if let Some(term) = by_length
            .iter()
            .find(|t| term_matches_at(support_text, at, t))
        {
            out.push_str(MARKER);
            out.push_str(term);
            out.push_str(MARKER);
            at += term.len();
        } else {
            let ch = support_text[at..].chars().next().unwrap();
            out.push(ch);
            at += ch.len_utf8();
        }
    }
    Ok(out)
}

pub fn strip_markers(rendered: &str) -> String {
    rendered.replace(MARKER, "")
}

#[derive(Debug, Error)]
pub enum RecoveryError {
    /// The corrective reply was unreadable too; carries the original error.
    #[error(transparent)]
    Parse(ParseError),
    #[error(transparent)]
    Gateway(GatewayError),
}

/// Re-invokes the backend once with an instruction to reply with only the
/// JSON object. Call only after `parse_reasoning(raw)` has failed.
pub async fn recover_once(
    raw: &str,
    bundle: &PromptBundle,
    engine: &PromptEngine,
    gateway: &LlmGateway,
) -> Result<(ReasoningTrace, RawModelOutput), RecoveryError> {
    let original = match parse_reasoning(raw) {
        Ok(_) => unreachable!("recover_once called on a readable reply"),
        Err(e) => e,
    };
    warn!(error = %original, "unreadable model reply, re-invoking once");
    let retry = engine.corrective_bundle(bundle);
    let output = gateway.invoke(&retry).await.map_err(RecoveryError::Gateway)?;
    match parse_reasoning(&output.text) {
        Ok(trace) => Ok((trace, output)),
        Err(_) => Err(RecoveryError::Parse(original)),
    }
}
