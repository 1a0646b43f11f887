use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

use super::template::{OutputSchema, ASSUMPTIONS, BACKGROUND, REASONING, RESULT};
use crate::model::ExplanationBundle;

static HEADER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^##[ \t]+([^#\s][^#]*?)[ \t]*:?[ \t]*$").expect("header regex"));

static LABEL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[-*\s]*\**([A-Za-z][A-Za-z _-]{0,40}?)\**\s*:\s*(.*)$").expect("label regex"));

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedSections {
    pub sections: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

impl ParsedSections {
    pub fn get(&self, name: &str) -> &str {
        self.sections.get(name).map(String::as_str).unwrap_or("")
    }

    pub fn result(&self) -> &str {
        self.get(RESULT)
    }

    pub fn explanation(&self) -> ExplanationBundle {
        ExplanationBundle {
            background: self.get(BACKGROUND).to_string(),
            assumptions: self.get(ASSUMPTIONS).to_string(),
            reasoning: self.get(REASONING).to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("response is missing required sections: {}", missing.join(", "))]
pub struct ParseError {
    pub missing: Vec<String>,
    pub partial: ParsedSections,
}

/// Split a response on `## <section>` header lines. Text outside any
/// section is discarded; a repeated header replaces the earlier one.
pub fn parse_structured(response: &str, schema: &OutputSchema) -> Result<ParsedSections, ParseError> {
    let mut parsed = ParsedSections::default();
    let mut current: Option<String> = None;
    let mut buf = String::new();

    let flush = |name: Option<String>, buf: &mut String, parsed: &mut ParsedSections| {
        if let Some(name) = name {
            let text = buf.trim().to_string();
            if parsed.sections.insert(name.clone(), text).is_some() {
                parsed
                    .warnings
                    .push(format!("duplicate section {name:?}; last occurrence kept"));
            }
        }
        buf.clear();
    };

    for line in response.lines() {
        if let Some(c) = HEADER.captures(line.trim_end()) {
            flush(current.take(), &mut buf, &mut parsed);
            current = Some(c[1].trim().to_lowercase());
        } else if current.is_some() {
            buf.push_str(line);
            buf.push('\n');
        }
    }
    flush(current.take(), &mut buf, &mut parsed);

    let missing: Vec<String> = schema
        .required_sections
        .iter()
        .filter(|s| !parsed.sections.contains_key(*s))
        .cloned()
        .collect();
    if missing.is_empty() {
        Ok(parsed)
    } else {
        Err(ParseError { missing, partial: parsed })
    }
}

/// `Label: value` lines; continuation lines extend the previous value.
/// Labels are lowercased with spaces and hyphens folded to `_`.
pub fn labeled_fields(text: &str) -> BTreeMap<String, String> {
    let mut out: BTreeMap<String, String> = BTreeMap::new();
    let mut last: Option<String> = None;
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        if let Some(c) = LABEL.captures(line) {
            let label = c[1].trim().to_lowercase().replace([' ', '-'], "_");
            out.insert(label.clone(), c[2].trim().to_string());
            last = Some(label);
        } else if let Some(label) = &last {
            let entry = out.get_mut(label).expect("label present");
            if !entry.is_empty() {
                entry.push(' ');
            }
            entry.push_str(line.trim());
        }
    }
    out
}
