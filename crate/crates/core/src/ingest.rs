//! Record parsing, language filtering, tokenization and keyword scanning.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::lexicon::{Lexicon, VariantRef};
use crate::text;

/// One geotagged post.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TweetRecord {
    pub id: String,
    pub lon: f64,
    pub lat: f64,
    pub text: String,
    pub lang: String,
    pub lang_prob: f64,
}

/// A keyword occurrence located at the coordinates of the post it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchEvent {
    pub tweet_id: String,
    pub lon: f64,
    pub lat: f64,
    pub concept_id: String,
    pub variant_id: String,
}

/// Why a corpus line was rejected.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum RecordError {
    #[error("malformed JSON: {0}")]
    MalformedJson(String),
    #[error("missing field `{0}`")]
    MissingField(&'static str),
    #[error("field `{0}` has the wrong type")]
    InvalidField(&'static str),
    #[error("field `{0}` is out of range")]
    OutOfRange(&'static str),
}

impl RecordError {
    /// Stable error class name used in skip reports.
    pub fn class(&self) -> &'static str {
        match self {
            RecordError::MalformedJson(_) => "malformed_json",
            RecordError::MissingField(_) => "missing_field",
            RecordError::InvalidField(_) => "invalid_field",
            RecordError::OutOfRange(_) => "out_of_range",
        }
    }
}

#[derive(Deserialize)]
struct RawRecord {
    id: Option<Value>,
    lon: Option<Value>,
    lat: Option<Value>,
    text: Option<Value>,
    lang: Option<Value>,
    lang_prob: Option<Value>,
}

fn required<'a>(v: &'a Option<Value>, name: &'static str) -> Result<&'a Value, RecordError> {
    match v {
        None | Some(Value::Null) => Err(RecordError::MissingField(name)),
        Some(v) => Ok(v),
    }
}

fn number(v: &Option<Value>, name: &'static str) -> Result<f64, RecordError> {
    required(v, name)?
        .as_f64()
        .ok_or(RecordError::InvalidField(name))
}

fn string(v: &Option<Value>, name: &'static str) -> Result<String, RecordError> {
    match required(v, name)? {
        Value::String(s) => Ok(s.clone()),
        _ => Err(RecordError::InvalidField(name)),
    }
}

/// Parses one JSON line into a validated record.
pub fn parse_record(line: &str) -> Result<TweetRecord, RecordError> {
    let raw: RawRecord = match serde_json::from_str(line) {
        Ok(r) => r,
        Err(e) => return Err(RecordError::MalformedJson(e.to_string())),
    };
    // ids arrive as strings or as bare integers depending on the dump
    let id = match required(&raw.id, "id")? {
        Value::String(s) => s.clone(),
        Value::Number(n) if n.is_u64() || n.is_i64() => n.to_string(),
        _ => return Err(RecordError::InvalidField("id")),
    };
    let lon = number(&raw.lon, "lon")?;
    let lat = number(&raw.lat, "lat")?;
    let text = string(&raw.text, "text")?;
    let lang = string(&raw.lang, "lang")?;
    let lang_prob = number(&raw.lang_prob, "lang_prob")?;

    if !(-180.0..=180.0).contains(&lon) {
        return Err(RecordError::OutOfRange("lon"));
    }
    if !(-90.0..=90.0).contains(&lat) {
        return Err(RecordError::OutOfRange("lat"));
    }
    if !(0.0..=1.0).contains(&lang_prob) {
        return Err(RecordError::OutOfRange("lang_prob"));
    }
    Ok(TweetRecord {
        id,
        lon,
        lat,
        text,
        lang,
        lang_prob,
    })
}

/// `record.lang == lang && record.lang_prob > min_prob`.
pub fn passes_language_filter(record: &TweetRecord, lang: &str, min_prob: f64) -> bool {
    record.lang == lang && record.lang_prob > min_prob
}

/// Language filter with a selectable comparison at the threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageFilter {
    pub lang: String,
    pub min_prob: f64,
    /// Accept `lang_prob == min_prob` as well.
    pub inclusive: bool,
}

impl LanguageFilter {
    pub fn new(lang: impl Into<String>, min_prob: f64) -> Self {
        LanguageFilter {
            lang: lang.into(),
            min_prob,
            inclusive: false,
        }
    }

    pub fn accepts(&self, record: &TweetRecord) -> bool {
        if self.inclusive {
            record.lang == self.lang && record.lang_prob >= self.min_prob
        } else {
            passes_language_filter(record, &self.lang, self.min_prob)
        }
    }
}

impl Default for LanguageFilter {
    fn default() -> Self {
        LanguageFilter::new("es", 0.6)
    }
}

/// Twitter-aware word tokenizer.
///
/// Drops hashtags, mentions, URLs and symbol-only tokens; strips punctuation
/// from token edges; lowercases and NFC-normalizes. Interior punctuation
/// (`alusa-foil`) and accents are kept.
pub fn tokenize(text: &str) -> Vec<String> {
    tokenize_with(text, false)
}

/// [`tokenize`] with optional accent folding.
pub fn tokenize_with(text: &str, fold_accents: bool) -> Vec<String> {
    let mut out = Vec::new();
    for raw in text.split_whitespace() {
        let lead = raw.trim_start_matches(|c: char| !c.is_alphanumeric() && c != '#' && c != '@');
        if lead.starts_with('#') || lead.starts_with('@') || is_url(lead) {
            continue;
        }
        let norm = text::normalize(lead, fold_accents);
        let word = text::trim_edges(&norm);
        if !word.is_empty() {
            out.push(word.to_string());
        }
    }
    out
}

fn is_url(token: &str) -> bool {
    let prefix: String = token.chars().take(8).flat_map(char::to_lowercase).collect();
    prefix.starts_with("http://") || prefix.starts_with("https://") || prefix.starts_with("www.")
}

/// Greedy longest-match-first scan of `tokens` against the lexicon.
///
/// Left to right, at each position the longest phrase (up to
/// `max_phrase_len` tokens) that is in the lexicon wins and its tokens are
/// consumed. The result is deduplicated.
pub fn scan_matches(tokens: &[String], lexicon: &Lexicon) -> BTreeSet<VariantRef> {
    let mut found = BTreeSet::new();
    let max = lexicon.max_phrase_len();
    let mut i = 0;
    while i < tokens.len() {
        let longest = max.min(tokens.len() - i);
        let hit = (1..=longest)
            .rev()
            .find_map(|len| lexicon.lookup(&tokens[i..i + len]).map(|v| (v, len)));
        match hit {
            Some((vref, len)) => {
                found.insert(vref);
                i += len;
            }
            None => i += 1,
        }
    }
    found
}

/// Tokenizes a record and turns every distinct match into a [`MatchEvent`].
pub fn match_events(record: &TweetRecord, lexicon: &Lexicon) -> Vec<MatchEvent> {
    let tokens = tokenize_with(&record.text, lexicon.accent_folding());
    scan_matches(&tokens, lexicon)
        .into_iter()
        .map(|vref| {
            let (concept, variant) = lexicon.names(vref);
            MatchEvent {
                tweet_id: record.id.clone(),
                lon: record.lon,
                lat: record.lat,
                concept_id: concept.to_string(),
                variant_id: variant.to_string(),
            }
        })
        .collect()
}
