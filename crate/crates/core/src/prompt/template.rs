use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::sync::LazyLock;
use thiserror::Error;

use super::glossary::Glossary;

pub const BACKGROUND: &str = "background";
pub const ASSUMPTIONS: &str = "assumptions";
pub const REASONING: &str = "reasoning";
pub const RESULT: &str = "result";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResultShape {
    FreeText,
    LabeledFields,
    EnumeratedList,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputSchema {
    pub required_sections: Vec<String>,
    pub result_shape: ResultShape,
}

impl OutputSchema {
    pub fn standard(result_shape: ResultShape) -> Self {
        Self {
            required_sections: [BACKGROUND, ASSUMPTIONS, REASONING, RESULT]
                .map(String::from)
                .to_vec(),
            result_shape,
        }
    }

    fn validate(&self) -> Result<(), String> {
        for s in [BACKGROUND, ASSUMPTIONS, REASONING, RESULT] {
            if !self.required_sections.iter().any(|r| r == s) {
                return Err(format!("required sections must include {s}"));
            }
        }
        if self.required_sections.last().map(String::as_str) != Some(RESULT) {
            return Err("result must be the last section".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub input_sketch: String,
    pub output_sketch: String,
}

/// Prompt assets for one pipeline step, with glossary content resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub step_id: String,
    pub temperature: f64,
    pub system_text: String,
    pub user_text: String,
    pub key_term_definitions: BTreeMap<String, String>,
    pub few_shot_examples: Vec<FewShotExample>,
    pub forbidden_patterns: Vec<String>,
    pub output_schema: OutputSchema,
    pub optional_placeholders: BTreeSet<String>,
    /// SHA-256 of the source text plus resolved glossary content.
    pub version: String,
}

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("template {name}: {reason}")]
    Malformed { name: String, reason: String },
    #[error("template {name}: unknown key term {term:?}")]
    UnknownTerm { name: String, term: String },
    #[error("reading templates: {0}")]
    Io(#[from] std::io::Error),
}

static PLACEHOLDER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\{\{\s*([a-z_][a-z0-9_]*)\s*\}\}").expect("placeholder regex"));

/// Placeholder names referenced in `text`, in order of first appearance.
pub fn placeholders(text: &str) -> Vec<String> {
    let mut seen = BTreeSet::new();
    PLACEHOLDER
        .captures_iter(text)
        .map(|c| c[1].to_string())
        .filter(|n| seen.insert(n.clone()))
        .collect()
}

pub(crate) fn substitute(text: &str, context: &BTreeMap<String, String>) -> String {
    PLACEHOLDER
        .replace_all(text, |c: &regex::Captures<'_>| {
            context.get(&c[1]).cloned().unwrap_or_default()
        })
        .into_owned()
}

#[derive(Clone, Copy)]
enum Block {
    None,
    System,
    User,
    Input,
    Output,
}

fn split_list(v: &str) -> Vec<String> {
    v.split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

fn parse_bool(v: &str) -> bool {
    matches!(v.trim().to_ascii_lowercase().as_str(), "yes" | "true" | "1")
}

impl PromptTemplate {
    /// Parse a template file: a `---` delimited front matter of `key: value`
    /// lines followed by `[system]`, `[user]`, `[example.input]` and
    /// `[example.output]` blocks.
    pub fn parse(name: &str, source: &str, glossary: &Glossary) -> Result<Self, TemplateError> {
        let malformed = |reason: &str| TemplateError::Malformed {
            name: name.to_string(),
            reason: reason.to_string(),
        };
        let body = source.trim_start();
        let rest = body
            .strip_prefix("---")
            .ok_or_else(|| malformed("missing front matter"))?;
        let (header, blocks) = rest
            .split_once("\n---")
            .ok_or_else(|| malformed("unterminated front matter"))?;

        let mut meta = BTreeMap::new();
        for line in header.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once(':')
                .ok_or_else(|| malformed(&format!("bad header line {line:?}")))?;
            meta.insert(k.trim().to_string(), v.trim().to_string());
        }
        let step_id = meta
            .get("step_id")
            .cloned()
            .ok_or_else(|| malformed("missing step_id"))?;
        let temperature: f64 = meta
            .get("temperature")
            .ok_or_else(|| malformed("missing temperature"))?
            .parse()
            .map_err(|_| malformed("temperature is not a number"))?;
        let result_shape = match meta.get("result_shape").map(String::as_str) {
            None | Some("free_text") => ResultShape::FreeText,
            Some("labeled_fields") => ResultShape::LabeledFields,
            Some("enumerated_list") => ResultShape::EnumeratedList,
            Some(other) => return Err(malformed(&format!("unknown result_shape {other}"))),
        };
        let output_schema = match meta.get("required_sections") {
            Some(list) => OutputSchema {
                required_sections: split_list(list).into_iter().map(|s| s.to_lowercase()).collect(),
                result_shape,
            },
            None => OutputSchema::standard(result_shape),
        };
        output_schema.validate().map_err(|r| malformed(&r))?;

        let mut key_term_definitions = BTreeMap::new();
        for term in meta.get("key_terms").map(|v| split_list(v)).unwrap_or_default() {
            let def = glossary.definition(&term).ok_or_else(|| TemplateError::UnknownTerm {
                name: name.to_string(),
                term: term.clone(),
            })?;
            key_term_definitions.insert(term, def.to_string());
        }
        if meta.get("guide_words").is_some_and(|v| parse_bool(v)) {
            for gw in &glossary.guide_words {
                key_term_definitions.insert(gw.name.clone(), gw.definition.clone());
            }
        }
        let forbidden_patterns = if meta.get("forbidden_patterns").is_some_and(|v| parse_bool(v)) {
            glossary.forbidden_phrases.clone()
        } else {
            Vec::new()
        };
        let optional_placeholders = meta
            .get("optional")
            .map(|v| split_list(v).into_iter().collect())
            .unwrap_or_default();

        let mut system_text = String::new();
        let mut user_text = String::new();
        let mut inputs = Vec::new();
        let mut outputs = Vec::new();
        let mut current = Block::None;
        for line in blocks.lines() {
            match line.trim() {
                "[system]" => current = Block::System,
                "[user]" => current = Block::User,
                "[example.input]" => {
                    inputs.push(String::new());
                    current = Block::Input;
                }
                "[example.output]" => {
                    outputs.push(String::new());
                    current = Block::Output;
                }
                _ => {
                    let buf = match current {
                        Block::None => continue,
                        Block::System => &mut system_text,
                        Block::User => &mut user_text,
                        Block::Input => inputs.last_mut().expect("input block open"),
                        Block::Output => outputs.last_mut().expect("output block open"),
                    };
                    buf.push_str(line);
                    buf.push('\n');
                }
            }
        }
        if inputs.len() != outputs.len() {
            return Err(malformed("every example needs an input and an output"));
        }
        let system_text = system_text.trim().to_string();
        let user_text = user_text.trim().to_string();
        if system_text.is_empty() || user_text.is_empty() {
            return Err(malformed("system and user blocks are required"));
        }
        let few_shot_examples = inputs
            .into_iter()
            .zip(outputs)
            .map(|(i, o)| FewShotExample {
                input_sketch: i.trim().to_string(),
                output_sketch: o.trim().to_string(),
            })
            .collect();

        let mut hasher = Sha256::new();
        hasher.update(source.as_bytes());
        for (k, v) in &key_term_definitions {
            hasher.update(k.as_bytes());
            hasher.update(v.as_bytes());
        }
        for p in &forbidden_patterns {
            hasher.update(p.as_bytes());
        }
        let version = hex::encode(hasher.finalize());

        Ok(Self {
            step_id,
            temperature,
            system_text,
            user_text,
            key_term_definitions,
            few_shot_examples,
            forbidden_patterns,
            output_schema,
            optional_placeholders,
            version,
        })
    }

    /// Placeholders that must be bound at render time.
    pub fn required_placeholders(&self) -> Vec<String> {
        let mut names = placeholders(&self.system_text);
        for n in placeholders(&self.user_text) {
            if !names.contains(&n) {
                names.push(n);
            }
        }
        names.retain(|n| !self.optional_placeholders.contains(n));
        names
    }
}

/// Templates for every step, keyed by step id.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateSet {
    templates: BTreeMap<String, PromptTemplate>,
}

const BUILTIN: &[(&str, &str)] = &[
    ("scenarios.txt", include_str!("../../templates/scenarios.txt")),
    ("selection.txt", include_str!("../../templates/selection.txt")),
    ("malfunctions.txt", include_str!("../../templates/malfunctions.txt")),
    ("hazardous_event.txt", include_str!("../../templates/hazardous_event.txt")),
    ("severity.txt", include_str!("../../templates/severity.txt")),
    ("safety_goal.txt", include_str!("../../templates/safety_goal.txt")),
    ("redundancy.txt", include_str!("../../templates/redundancy.txt")),
    ("agent_check.txt", include_str!("../../templates/agent_check.txt")),
];

impl TemplateSet {
    /// The templates shipped with the crate.
    pub fn builtin(glossary: &Glossary) -> Result<Self, TemplateError> {
        Self::from_sources(BUILTIN.iter().map(|(n, s)| (n.to_string(), s.to_string())), glossary)
    }

    /// Built-ins overridden by any `*.txt` file in `dir` with the same step id.
    pub fn load_dir(dir: &Path, glossary: &Glossary) -> Result<Self, TemplateError> {
        let mut set = Self::builtin(glossary)?;
        let mut entries: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|e| e == "txt"))
            .collect();
        entries.sort();
        for path in entries {
            let name = path.display().to_string();
            let source = std::fs::read_to_string(&path)?;
            let t = PromptTemplate::parse(&name, &source, glossary)?;
            set.templates.insert(t.step_id.clone(), t);
        }
        Ok(set)
    }

    fn from_sources(
        sources: impl Iterator<Item = (String, String)>,
        glossary: &Glossary,
    ) -> Result<Self, TemplateError> {
        let mut templates = BTreeMap::new();
        for (name, source) in sources {
            let t = PromptTemplate::parse(&name, &source, glossary)?;
            templates.insert(t.step_id.clone(), t);
        }
        Ok(Self { templates })
    }

    pub fn get(&self, step_id: &str) -> Option<&PromptTemplate> {
        self.templates.get(step_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &PromptTemplate> {
        self.templates.values()
    }

    pub fn set_temperature(&mut self, step_id: &str, temperature: f64) -> bool {
        match self.templates.get_mut(step_id) {
            Some(t) => {
                t.temperature = temperature;
                true
            }
            None => false,
        }
    }

    /// Combined hash over every template version.
    pub fn version(&self) -> String {
        let mut hasher = Sha256::new();
        for t in self.templates.values() {
            hasher.update(t.step_id.as_bytes());
            hasher.update(t.version.as_bytes());
        }
        hex::encode(hasher.finalize())
    }
}
