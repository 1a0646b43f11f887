use std::collections::HashMap;
use std::sync::{LazyLock, Mutex};

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

use crate::model::{LintFinding, LintLevel};

pub mod rule {
    pub const MISSING_SHALL: &str = "missing-shall";
    pub const RECOMMENDATION_MODAL: &str = "recommendation-modal";
    pub const VAGUE_PHRASE: &str = "vague-phrase";
    pub const TECHNOLOGY_TERM: &str = "technology-term";
}

pub fn default_vague_phrases() -> Vec<String> {
    ["when necessary", "vicinity", "if needed", "as appropriate", "to prevent unnecessary"]
        .map(String::from)
        .to_vec()
}

fn default_modals() -> Vec<String> {
    vec!["should".to_string()]
}

fn default_required() -> String {
    "shall".to_string()
}

fn default_technology_terms() -> Vec<String> {
    ["sensor", "camera", "radar", "lidar", "algorithm", "software module"]
        .map(String::from)
        .to_vec()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LintRuleSet {
    #[serde(default = "default_vague_phrases")]
    pub vague_phrases: Vec<String>,
    #[serde(default = "default_modals")]
    pub recommendation_modals: Vec<String>,
    #[serde(default = "default_required")]
    pub required_modal: String,
    #[serde(default = "default_technology_terms")]
    pub technology_terms: Vec<String>,
}

impl Default for LintRuleSet {
    fn default() -> Self {
        Self {
            vague_phrases: default_vague_phrases(),
            recommendation_modals: default_modals(),
            required_modal: default_required(),
            technology_terms: default_technology_terms(),
        }
    }
}

static COMPILED: LazyLock<Mutex<HashMap<(String, bool), Regex>>> = LazyLock::new(Default::default);

fn phrase_regex(phrase: &str, plural: bool) -> Regex {
    let mut cache = COMPILED.lock().unwrap_or_else(|e| e.into_inner());
    cache
        .entry((phrase.to_string(), plural))
        .or_insert_with(|| compile(phrase, plural))
        .clone()
}

fn compile(phrase: &str, plural: bool) -> Regex {
    let body = phrase
        .split_whitespace()
        .map(regex::escape)
        .collect::<Vec<_>>()
        .join(r"\s+");
    let suffix = if plural { "s?" } else { "" };
    RegexBuilder::new(&format!(r"\b{body}{suffix}\b"))
        .case_insensitive(true)
        .build()
        .expect("escaped phrase is a valid regex")
}

fn occurrences<'t>(text: &'t str, phrase: &str, plural: bool) -> Vec<&'t str> {
    if phrase.trim().is_empty() {
        return Vec::new();
    }
    phrase_regex(phrase, plural).find_iter(text).map(|m| m.as_str()).collect()
}

fn finding(rule_id: &str, level: LintLevel, snippet: &str, message: String) -> LintFinding {
    LintFinding {
        rule_id: rule_id.to_string(),
        level,
        snippet: snippet.to_string(),
        message,
        targets: Vec::new(),
    }
}

/// Lint one safety-goal text. Rules run in a fixed order and every
/// snippet is a substring of `text`.
pub fn lint_goal(text: &str, rules: &LintRuleSet) -> Vec<LintFinding> {
    let mut out = Vec::new();
    if occurrences(text, &rules.required_modal, false).is_empty() {
        out.push(finding(
            rule::MISSING_SHALL,
            LintLevel::Error,
            text,
            format!("goal does not state a mandatory requirement with \"{}\"", rules.required_modal),
        ));
    }
    for modal in &rules.recommendation_modals {
        for hit in occurrences(text, modal, false) {
            out.push(finding(
                rule::RECOMMENDATION_MODAL,
                LintLevel::Error,
                hit,
                format!("\"{hit}\" expresses a recommendation, not a requirement"),
            ));
        }
    }
    for phrase in &rules.vague_phrases {
        for hit in occurrences(text, phrase, false) {
            out.push(finding(
                rule::VAGUE_PHRASE,
                LintLevel::Warning,
                hit,
                format!("\"{hit}\" is vague; state the precise condition"),
            ));
        }
    }
    for term in &rules.technology_terms {
        for hit in occurrences(text, term, true) {
            out.push(finding(
                rule::TECHNOLOGY_TERM,
                LintLevel::Warning,
                hit,
                format!("\"{hit}\" names an implementation element (criterion d)"),
            ));
        }
    }
    out
}

/// One-line count of errors and warnings.
pub fn lint_summary<'a>(findings: impl IntoIterator<Item = &'a LintFinding>) -> String {
    let (mut errors, mut warnings) = (0, 0);
    for f in findings {
        match f.level {
            LintLevel::Error => errors += 1,
            LintLevel::Warning => warnings += 1,
        }
    }
    format!("{errors} errors, {warnings} warnings")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(f: &[LintFinding]) -> Vec<&str> {
        f.iter().map(|f| f.rule_id.as_str()).collect()
    }

    #[test]
    fn vague_when_necessary() {
        let f = lint_goal("The vehicle shall avoid lane departure when necessary", &LintRuleSet::default());
        assert_eq!(ids(&f), [rule::VAGUE_PHRASE]);
        assert_eq!(f[0].snippet, "when necessary");
        assert_eq!(f[0].level, LintLevel::Warning);
    }

    #[test]
    fn should_without_shall() {
        let f = lint_goal("the system should avoid the malfunction", &LintRuleSet::default());
        assert_eq!(ids(&f), [rule::MISSING_SHALL, rule::RECOMMENDATION_MODAL]);
        assert_eq!(f[1].snippet, "should");
    }

    #[test]
    fn clean_goal() {
        let f = lint_goal(
            "CAEM shall not cause lane departure unless to avoid collision",
            &LintRuleSet::default(),
        );
        assert!(f.is_empty(), "{f:?}");
    }

    #[test]
    fn empty_text_missing_shall() {
        assert_eq!(ids(&lint_goal("", &LintRuleSet::default())), [rule::MISSING_SHALL]);
    }

    #[test]
    fn snippet_keeps_original_case_and_plural() {
        let f = lint_goal("Radars shall confirm the target", &LintRuleSet::default());
        assert_eq!(ids(&f), [rule::TECHNOLOGY_TERM]);
        assert_eq!(f[0].snippet, "Radars");
    }

    #[test]
    fn word_boundaries() {
        // "marshall" and "vicinityx" are not matches
        let f = lint_goal("Marshall shall stay in vicinityx", &LintRuleSet::default());
        assert!(f.is_empty(), "{f:?}");
    }

    #[test]
    fn vague_once_per_occurrence() {
        let f = lint_goal(
            "It shall brake when necessary and steer when necessary",
            &LintRuleSet::default(),
        );
        assert_eq!(f.len(), 2);
    }

    proptest! {
        #[test]
        fn snippets_occur_and_lint_is_stable(text in "[A-Za-z ,.]{0,80}") {
            let rules = LintRuleSet::default();
            let a = lint_goal(&text, &rules);
            prop_assert_eq!(&a, &lint_goal(&text, &rules));
            for f in &a {
                prop_assert!(text.contains(&f.snippet));
            }
        }
    }
}
