//! Inputs shared by the criterion benches.

/// A clarify-style completion with reason, rephrase and result object.
pub const CLARIFY_OUTPUT: &str = "Let me analyze this.\n\nThe speaker says the meeting \"could have been an email\" while calling it productive. Calling it productive is meant sarcastically.\n\nRephrase this statement without the irony: The meeting was a waste of time.\n\n```json\n{\"irony\": 1}\n```";

/// A probabilistic completion with a score cue.
pub const PROBABILISTIC_OUTPUT: &str = "Reason: calling a 3 hour delay \"lightning fast\" is sarcastic exaggeration.\nRephrase: The delivery took far too long.\nProbabilistic score ranging from 0 to 1: 0.92\n{\"irony\": 1}";

/// A reasoning paragraph of typical length.
pub const REASON: &str = "Max Verstappen is known for his aggressive driving style and has been involved in several controversial incidents on the track, so the statement that he is a clean driver who never makes dirty moves is ironic.";

/// `n` distinct statements of ordinary tweet length.
pub fn statements(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| format!("Oh great, meeting number {i} today, exactly what I needed to stay productive"))
        .collect()
}
