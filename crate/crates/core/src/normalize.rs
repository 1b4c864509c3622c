//! Raw completion text to [`TaskOutput`].
//!
//! Before any search the text is cleaned of markdown code fences and smart
//! quotes. The label comes from the last well-formed JSON object that has an
//! `"irony"` key; the probability (for the probabilistic prompt) from a
//! score cue or a score-like JSON key; reason and rephrase from the prose
//! before the JSON object. Nothing here fails: missing pieces are `None`
//! and every decision is listed in `parse_notes`.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::Label;
use crate::prompts::DEFAULT_THRESHOLD;

/// Closed vocabulary of normalization actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParseNote {
    NoJson,
    CoercedString,
    EmptyOutput,
    ThresholdOverridesJson,
    /// Probabilistic prompt without a usable score; the JSON label decided.
    JsonFallback,
    FenceStripped,
    QuoteNormalized,
}

impl ParseNote {
    pub fn as_str(self) -> &'static str {
        match self {
            ParseNote::NoJson => "no-json",
            ParseNote::CoercedString => "coerced-string",
            ParseNote::EmptyOutput => "empty-output",
            ParseNote::ThresholdOverridesJson => "threshold-overrides-json",
            ParseNote::JsonFallback => "json-fallback",
            ParseNote::FenceStripped => "fence-stripped",
            ParseNote::QuoteNormalized => "quote-normalized",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskOutput {
    pub label: Option<Label>,
    pub probability: Option<f64>,
    pub reason: Option<String>,
    pub rephrase: Option<String>,
    pub raw: String,
    pub parse_notes: Vec<ParseNote>,
}

static FENCE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?m)^[ \t]*```[A-Za-z0-9_-]*[ \t]*$\n?").unwrap());

/// Strips code fences and folds typographic quotes to ASCII.
pub fn clean(raw: &str) -> (String, Vec<ParseNote>) {
    let mut notes = Vec::new();
    let mut text = raw.to_string();
    if FENCE.is_match(&text) || text.contains("```") {
        text = FENCE.replace_all(&text, "").replace("```", "");
        notes.push(ParseNote::FenceStripped);
    }
    if text.contains(['\u{201c}', '\u{201d}', '\u{2018}', '\u{2019}', '\u{201e}', '\u{2032}']) {
        text = text
            .replace(['\u{201c}', '\u{201d}', '\u{201e}'], "\"")
            .replace(['\u{2018}', '\u{2019}', '\u{2032}'], "'");
        notes.push(ParseNote::QuoteNormalized);
    }
    (text, notes)
}

/// Start offset and parsed value of a JSON object holding an `"irony"` key.
struct JsonHit {
    start: usize,
    object: serde_json::Map<String, Value>,
}

/// Every JSON object with an `"irony"` key, as (start, end, object).
fn irony_objects(text: &str) -> Vec<(usize, usize, serde_json::Map<String, Value>)> {
    let mut found = Vec::new();
    let mut resume_at = 0;
    for (start, _) in text.match_indices('{') {
        if start < resume_at {
            continue;
        }
        let mut stream = serde_json::Deserializer::from_str(&text[start..]).into_iter::<Value>();
        if let Some(Ok(Value::Object(object))) = stream.next() {
            if object.contains_key("irony") {
                let end = start + stream.byte_offset();
                resume_at = end;
                found.push((start, end, object));
            }
        }
    }
    found
}

fn find_irony_json(text: &str) -> Option<JsonHit> {
    irony_objects(text)
        .pop()
        .map(|(start, _, object)| JsonHit { start, object })
}

fn label_from_value(v: &Value, notes: &mut Vec<ParseNote>) -> Option<Label> {
    match v {
        Value::Number(n) => match n.as_f64() {
            Some(1.0) => Some(Label::Ironic),
            Some(0.0) => Some(Label::NonIronic),
            _ => None,
        },
        Value::String(s) => {
            let label = match s.trim() {
                "1" => Some(Label::Ironic),
                "0" => Some(Label::NonIronic),
                _ => None,
            };
            if label.is_some() {
                notes.push(ParseNote::CoercedString);
            }
            label
        }
        _ => None,
    }
}

fn label_in(cleaned: &str, notes: &mut Vec<ParseNote>) -> (Option<Label>, Option<JsonHit>) {
    let hit = find_irony_json(cleaned);
    let label = hit.as_ref().and_then(|h| label_from_value(&h.object["irony"], notes));
    if label.is_none() {
        notes.push(ParseNote::NoJson);
    }
    (label, hit)
}

/// Label from the last JSON object with an `"irony"` key.
pub fn extract_label(raw: &str) -> (Option<Label>, Vec<ParseNote>) {
    let (cleaned, mut notes) = clean(raw);
    let (label, _) = label_in(&cleaned, &mut notes);
    (label, notes)
}

static SCORE_CUE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(?:score|probability|likelihood)\b").unwrap());
static NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\d*\.?\d+").unwrap());

const CUE_WINDOW: usize = 120;

fn probability_in(cleaned: &str, hit: Option<&JsonHit>) -> Option<f64> {
    for cue in SCORE_CUE.find_iter(cleaned) {
        let rest = &cleaned[cue.end()..];
        let mut window_end = rest.len().min(CUE_WINDOW);
        while !rest.is_char_boundary(window_end) {
            window_end -= 1;
        }
        let window = &rest[..window_end];
        let window = &window[..window.find('{').unwrap_or(window.len())];
        let mut numbers = NUMBER.find_iter(window);
        while let Some(m) = numbers.next() {
            // "0 to 1" style ranges are a restated instruction, not a score
            let tail = window[m.end()..].trim_start();
            if tail.starts_with("to ") || tail.starts_with('-') && !tail.starts_with("->") {
                numbers.next();
                continue;
            }
            if let Ok(x) = m.as_str().parse::<f64>() {
                if (0.0..=1.0).contains(&x) {
                    return Some(x);
                }
            }
            break;
        }
    }
    let object = &hit?.object;
    for (key, value) in object {
        let k = key.to_ascii_lowercase();
        if ["score", "probability", "likelihood", "confidence"].iter().any(|c| k.contains(c)) {
            let x = match value {
                Value::Number(n) => n.as_f64(),
                Value::String(s) => s.trim().parse().ok(),
                _ => None,
            };
            if let Some(x) = x.filter(|x| (0.0..=1.0).contains(x)) {
                return Some(x);
            }
        }
    }
    None
}

/// Score and thresholded label. With no score, falls back to the JSON
/// label and leaves the probability empty.
pub fn extract_probability(raw: &str, threshold: f64) -> (Option<f64>, Option<Label>) {
    let (cleaned, mut notes) = clean(raw);
    let (json_label, hit) = label_in(&cleaned, &mut notes);
    match probability_in(&cleaned, hit.as_ref()) {
        Some(p) => (Some(p), Some(threshold_label(p, threshold))),
        None => (None, json_label),
    }
}

fn threshold_label(p: f64, threshold: f64) -> Label {
    if p >= threshold {
        Label::Ironic
    } else {
        Label::NonIronic
    }
}

static LABEL_PREFIX: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^(?:\d+[.)]\s*|[-*•]\s*|#+\s*)*(?:\*\*)?\s*(?:reason(?:ing)?|explanation|rationale|rephrased?(?: statement| version| sentence| text)?|non-ironic (?:version|rephrase|statement)|statement without (?:the )?irony)\s*(?:\*\*)?\s*[:\-]\s*(?:\*\*)?\s*").unwrap()
});
static REPHRASE_CUE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)rephras|without (?:the )?irony|non-ironic (?:version|rephras|statement|way)").unwrap());
static REASON_CUE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^(?:\d+[.)]\s*|[-*•]\s*|#+\s*)*(?:\*\*)?\s*(?:reason(?:ing)?|explanation|rationale)\b").unwrap());
static RESULT_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^(?:\d+[.)]\s*|[-*•]\s*|#+\s*)*(?:\*\*)?\s*(?:result|json|output|answer|final answer)\s*(?:\*\*)?\s*:?\s*(?:\*\*)?\s*$").unwrap()
});
static STEP_MARKER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(?:\d+[.)]\s*|[-*•]\s+|#+\s*)").unwrap());

fn strip_wrapping(s: &str) -> String {
    let mut t = LABEL_PREFIX.replace(s.trim(), "").trim().to_string();
    t = STEP_MARKER.replace(&t, "").trim().to_string();
    t = t.trim_matches('*').trim().to_string();
    let quoted = t.len() >= 2
        && ((t.starts_with('"') && t.ends_with('"')) || (t.starts_with('\'') && t.ends_with('\'')));
    if quoted {
        let inner = &t[1..t.len() - 1];
        if !inner.contains('"') {
            t = inner.trim().to_string();
        }
    }
    t
}

/// A rephrase cue that labels the line rather than occurring inside prose.
fn rephrase_heading(line: &str) -> bool {
    match line.find(':') {
        Some(idx) => REPHRASE_CUE.is_match(&line[..idx]),
        None => line.len() < 80,
    }
}

/// Text of a rephrase line without its cue heading ("Rephrased statement
/// without the irony: ..."). A heading with nothing after it yields "".
fn rephrase_content(line: &str) -> String {
    if let Some(idx) = line.find(':') {
        if REPHRASE_CUE.is_match(&line[..idx]) {
            return strip_wrapping(&line[idx + 1..]);
        }
    }
    if REPHRASE_CUE.is_match(line) && !is_standalone_quote(line) {
        let stripped = strip_wrapping(line);
        if REPHRASE_CUE.is_match(&stripped) {
            return String::new();
        }
        return stripped;
    }
    strip_wrapping(line)
}

fn is_standalone_quote(line: &str) -> bool {
    let t = STEP_MARKER.replace(line.trim(), "");
    let t = t.trim();
    t.len() >= 4 && t.starts_with('"') && t.ends_with('"') && t[1..t.len() - 1].contains(' ')
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Role {
    Rephrase,
    Reason,
    Other,
}

/// Reason and rephrase from the text before the result JSON.
pub fn extract_sections(raw: &str) -> (Option<String>, Option<String>) {
    let (cleaned, _) = clean(raw);
    let hit = find_irony_json(&cleaned);
    sections_in(&cleaned, hit.as_ref())
}

fn join_role(lines: &[&str], roles: &[Role], role: Role) -> Option<String> {
    let parts: Vec<String> = lines
        .iter()
        .zip(roles)
        .filter(|(_, r)| **r == role)
        .map(|(l, _)| match role {
            Role::Rephrase => rephrase_content(l),
            _ => strip_wrapping(l),
        })
        .filter(|s| !s.is_empty())
        .collect();
    (!parts.is_empty()).then(|| parts.join(" "))
}

fn sections_in(cleaned: &str, hit: Option<&JsonHit>) -> (Option<String>, Option<String>) {
    let body = match hit {
        Some(h) => &cleaned[..h.start],
        None => cleaned,
    };
    // earlier result objects (a revised answer) split the prose
    let mut prose = String::with_capacity(body.len());
    let mut at = 0;
    for (start, end, _) in irony_objects(body) {
        prose.push_str(&body[at..start]);
        prose.push_str("\n\n");
        at = end;
    }
    prose.push_str(&body[at..]);
    let lines: Vec<&str> = prose.lines().map(str::trim).collect();

    // Tag lines. A cue line opens a section that runs to the next blank line
    // or the next cue line.
    let mut roles = vec![Role::Other; lines.len()];
    let mut i = 0;
    while i < lines.len() {
        let line = lines[i];
        let role = if REASON_CUE.is_match(line) {
            Role::Reason
        } else if REPHRASE_CUE.is_match(line) && rephrase_heading(line) {
            Role::Rephrase
        } else {
            i += 1;
            continue;
        };
        roles[i] = role;
        let mut j = i + 1;
        while j < lines.len()
            && !lines[j].is_empty()
            && !REASON_CUE.is_match(lines[j])
            && !REPHRASE_CUE.is_match(lines[j])
            && !RESULT_LINE.is_match(lines[j])
        {
            roles[j] = role;
            j += 1;
            if role == Role::Rephrase {
                break;
            }
        }
        // a bare "Rephrase:" heading followed by a blank line
        if role == Role::Rephrase && j == i + 1 && rephrase_content(line).is_empty() {
            let mut k = j;
            while k < lines.len() && lines[k].is_empty() {
                k += 1;
            }
            if k < lines.len() && !RESULT_LINE.is_match(lines[k]) {
                roles[k] = Role::Rephrase;
                j = k + 1;
            }
        }
        i = j;
    }

    let mut rephrase = join_role(&lines, &roles, Role::Rephrase);
    if rephrase.is_none() {
        // a quoted sentence on its own line after some reasoning
        let first_text = lines.iter().position(|l| !l.is_empty());
        if let Some(idx) = lines.iter().rposition(|l| is_standalone_quote(l)) {
            if first_text.is_some_and(|f| f < idx) {
                roles[idx] = Role::Rephrase;
                rephrase = Some(strip_wrapping(lines[idx]));
            }
        }
    }

    let reason = join_role(&lines, &roles, Role::Reason).or_else(|| {
        // longest contiguous block of untagged prose
        let mut best: Option<String> = None;
        let mut current: Vec<String> = Vec::new();
        let flush = |current: &mut Vec<String>, best: &mut Option<String>| {
            if !current.is_empty() {
                let block = current.join(" ");
                if best.as_ref().is_none_or(|b| block.len() > b.len()) {
                    *best = Some(block);
                }
                current.clear();
            }
        };
        for (line, role) in lines.iter().zip(&roles) {
            if line.is_empty() || *role != Role::Other || RESULT_LINE.is_match(line) {
                flush(&mut current, &mut best);
                continue;
            }
            let s = strip_wrapping(line);
            if !s.is_empty() {
                current.push(s);
            }
        }
        flush(&mut current, &mut best);
        best
    });
    (reason.filter(|s| !s.is_empty()), rephrase.filter(|s| !s.is_empty()))
}

/// Full normalization with the default 0.7 threshold.
pub fn normalize(raw: &str, expects_probability: bool) -> TaskOutput {
    normalize_with_threshold(raw, expects_probability, DEFAULT_THRESHOLD)
}

pub fn normalize_with_threshold(raw: &str, expects_probability: bool, threshold: f64) -> TaskOutput {
    if raw.trim().is_empty() {
        return TaskOutput {
            label: None,
            probability: None,
            reason: None,
            rephrase: None,
            raw: raw.to_string(),
            parse_notes: vec![ParseNote::EmptyOutput],
        };
    }
    let (cleaned, mut notes) = clean(raw);
    let (json_label, hit) = label_in(&cleaned, &mut notes);
    let (reason, rephrase) = sections_in(&cleaned, hit.as_ref());

    let (label, probability) = if expects_probability {
        match probability_in(&cleaned, hit.as_ref()) {
            Some(p) => {
                let by_threshold = threshold_label(p, threshold);
                if json_label.is_some_and(|j| j != by_threshold) {
                    notes.push(ParseNote::ThresholdOverridesJson);
                }
                (Some(by_threshold), Some(p))
            }
            None => {
                if json_label.is_some() {
                    notes.push(ParseNote::JsonFallback);
                }
                (json_label, None)
            }
        }
    } else {
        (json_label, None)
    };

    TaskOutput {
        label,
        probability,
        reason,
        rephrase,
        raw: raw.to_string(),
        parse_notes: notes,
    }
}
