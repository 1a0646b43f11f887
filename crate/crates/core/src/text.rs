//! Text normalization shared by the redundancy pre-filter and the
//! consistency checker.

use std::collections::BTreeSet;

/// Words dropped before comparing texts.
pub const STOP_WORDS: &[&str] = &[
    "a", "an", "the", "and", "or", "of", "to", "in", "on", "at", "for", "by", "with", "from",
    "into", "onto", "as", "is", "are", "be", "been", "being", "was", "were", "it", "its", "this",
    "that", "these", "those", "which", "shall", "should", "must", "will", "would", "can", "could",
    "may", "there", "their", "his", "her",
];

/// Lowercase, replace punctuation with spaces and drop stop words.
pub fn normalize_tokens(text: &str, stop_words: &[String]) -> Vec<String> {
    let lowered = text.to_lowercase();
    let cleaned: String = lowered
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    cleaned
        .split_whitespace()
        .filter(|w| !stop_words.iter().any(|s| s == w))
        .map(str::to_string)
        .collect()
}

pub fn default_stop_words() -> Vec<String> {
    STOP_WORDS.iter().map(|s| s.to_string()).collect()
}

/// Canonical normalized form: tokens joined by single spaces.
pub fn normalize_text(text: &str, stop_words: &[String]) -> String {
    normalize_tokens(text, stop_words).join(" ")
}

/// Jaccard similarity of the normalized token sets. Two empty sets are
/// identical.
pub fn jaccard(a: &str, b: &str, stop_words: &[String]) -> f64 {
    let sa: BTreeSet<String> = normalize_tokens(a, stop_words).into_iter().collect();
    let sb: BTreeSet<String> = normalize_tokens(b, stop_words).into_iter().collect();
    let union = sa.union(&sb).count();
    if union == 0 {
        return 1.0;
    }
    sa.intersection(&sb).count() as f64 / union as f64
}
