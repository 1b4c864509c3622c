//! Flesch Reading Ease with a rule-based syllable counter.
//!
//! `206.835 - 1.015 * words/sentences - 84.6 * syllables/words`, unclamped.
//!
//! Syllables: lowercase letters only, count vowel groups (`aeiouy`), add one
//! for a `ua` hiatus not preceded by `q`/`g`, then drop one for a silent
//! ending (`-e` except consonant + `le`; `-es`/`-ed` after a consonant except
//! sibilant and `t`/`d` stems). Never below 1.

use super::MetricError;

fn is_vowel(c: u8) -> bool {
    matches!(c, b'a' | b'e' | b'i' | b'o' | b'u' | b'y')
}

pub fn count_syllables(word: &str) -> usize {
    let w: Vec<u8> = word
        .chars()
        .filter(|c| c.is_alphabetic())
        .flat_map(char::to_lowercase)
        .map(|c| if c.is_ascii() { c as u8 } else { b'x' })
        .collect();
    if w.is_empty() {
        return 0;
    }

    let mut groups = 0;
    let mut prev_vowel = false;
    for &c in &w {
        let v = is_vowel(c);
        if v && !prev_vowel {
            groups += 1;
        }
        prev_vowel = v;
    }
    for i in 1..w.len() {
        if w[i - 1] == b'u' && w[i] == b'a' && !(i >= 2 && matches!(w[i - 2], b'q' | b'g')) {
            groups += 1;
        }
    }

    if groups > 1 && silent_ending(&w) {
        groups -= 1;
    }
    groups.max(1)
}

fn silent_ending(w: &[u8]) -> bool {
    let n = w.len();
    let ends = |s: &[u8]| w.ends_with(s);
    if ends(b"e") {
        let consonant_le = n >= 3 && w[n - 2] == b'l' && !is_vowel(w[n - 3]);
        return !consonant_le;
    }
    if n > 3 && (ends(b"es") || ends(b"ed")) && !is_vowel(w[n - 3]) {
        const VOICED: [&[u8]; 9] = [b"ted", b"ded", b"ses", b"ces", b"zes", b"xes", b"ges", b"shes", b"ches"];
        if VOICED.iter().any(|s| ends(s)) {
            return false;
        }
        // "tables", "circles": consonant + les keeps its syllable
        if ends(b"les") && n >= 4 && !is_vowel(w[n - 4]) {
            return false;
        }
        return true;
    }
    false
}

/// Counts sentences: runs of `.`, `!` or `?` followed by whitespace, a
/// closing quote/bracket or end of text, after at least one letter since the
/// previous boundary. Returns 0 for text without terminators.
pub fn count_sentences(text: &str) -> usize {
    let chars: Vec<char> = text.chars().collect();
    let mut count = 0;
    let mut has_letter = false;
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphabetic() {
            has_letter = true;
        }
        if matches!(c, '.' | '!' | '?') && has_letter {
            let closes = match chars.get(i + 1) {
                None => true,
                Some(n) => n.is_whitespace() || matches!(n, '"' | '\'' | ')' | ']' | '\u{201d}' | '\u{2019}'),
            };
            if closes {
                count += 1;
                has_letter = false;
            }
        }
    }
    count
}

/// Whitespace tokens that contain at least one letter.
pub fn words(text: &str) -> impl Iterator<Item = &str> {
    text.split_whitespace().filter(|t| t.chars().any(char::is_alphabetic))
}

pub fn flesch_reading_ease(text: &str) -> Result<f64, MetricError> {
    let (mut n_words, mut n_syllables) = (0usize, 0usize);
    for w in words(text) {
        n_words += 1;
        n_syllables += count_syllables(w);
    }
    if n_words == 0 {
        return Err(MetricError::NoWords);
    }
    let sentences = count_sentences(text).max(1) as f64;
    let words = n_words as f64;
    Ok(206.835 - 1.015 * (words / sentences) - 84.6 * (n_syllables as f64 / words))
}
