//! Scripted offline provider.

use std::path::Path;

use serde::{Deserialize, Serialize};

/// What the mock returns for a matching request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MockReply {
    Text(String),
    /// Behave like an HTTP error with this status.
    Status { status: u16 },
    /// Behave like a transport timeout.
    Timeout { timeout: bool },
}

/// A rule matches when every `contains` substring occurs in the prompt and,
/// if set, `hash` equals the request hash.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockRule {
    #[serde(default)]
    pub contains: Vec<String>,
    #[serde(default)]
    pub hash: Option<String>,
    pub reply: MockReply,
}

/// Ordered rules (first match wins) plus a fallback.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub rules: Vec<MockRule>,
    #[serde(default)]
    pub default: Option<MockReply>,
}

impl MockScript {
    /// Every request gets `reply`.
    pub fn constant(reply: impl Into<String>) -> Self {
        MockScript {
            rules: Vec::new(),
            default: Some(MockReply::Text(reply.into())),
        }
    }

    pub fn rule(mut self, contains: &[&str], reply: MockReply) -> Self {
        self.rules.push(MockRule {
            contains: contains.iter().map(|s| s.to_string()).collect(),
            hash: None,
            reply,
        });
        self
    }

    pub fn text_rule(self, contains: &[&str], text: &str) -> Self {
        self.rule(contains, MockReply::Text(text.to_string()))
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let body = std::fs::read_to_string(path)?;
        serde_json::from_str(&body).map_err(std::io::Error::other)
    }

    /// The reply for a prompt; `None` when nothing matches and no default is set.
    pub fn reply_for(&self, prompt: &str, request_hash: &str) -> Option<&MockReply> {
        self.rules
            .iter()
            .find(|r| {
                r.contains.iter().all(|s| prompt.contains(s.as_str()))
                    && r.hash.as_deref().is_none_or(|h| h == request_hash)
            })
            .map(|r| &r.reply)
            .or(self.default.as_ref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_matching_rule_wins() {
        let s = MockScript::constant("{\"irony\": 0}")
            .text_rule(&["alpha", "beta"], "both")
            .text_rule(&["alpha"], "alpha only");
        assert_eq!(s.reply_for("alpha beta", "h"), Some(&MockReply::Text("both".into())));
        assert_eq!(s.reply_for("alpha", "h"), Some(&MockReply::Text("alpha only".into())));
        assert_eq!(s.reply_for("gamma", "h"), Some(&MockReply::Text("{\"irony\": 0}".into())));
    }

    #[test]
    fn script_json_shapes() {
        let s: MockScript = serde_json::from_str(
            r#"{"rules":[{"contains":["x"],"reply":"ok"},{"hash":"abc","reply":{"status":429}},{"reply":{"timeout":true}}]}"#,
        )
        .unwrap();
        assert_eq!(s.rules[1].reply, MockReply::Status { status: 429 });
        assert_eq!(s.reply_for("zzz", "abc"), Some(&MockReply::Status { status: 429 }));
        assert_eq!(s.reply_for("zzz", "other"), Some(&MockReply::Timeout { timeout: true }));
    }
}
