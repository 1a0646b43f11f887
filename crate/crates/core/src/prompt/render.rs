use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use super::template::{substitute, PromptTemplate, ResultShape};
use crate::llm::ChatMessage;

/// Minimum length of a copied run that counts as few-shot leakage.
pub const LEAKAGE_WINDOW: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RenderError {
    #[error("unbound placeholder {0:?}")]
    Unbound(String),
    #[error("few-shot examples contain text copied from the item definition: {0:?}")]
    FewShotLeakage(String),
}

/// Placeholder bindings plus texts that must not appear in the examples.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RenderContext {
    pub vars: BTreeMap<String, String>,
    pub protected: Vec<String>,
}

impl RenderContext {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(mut self, key: &str, value: impl Into<String>) -> Self {
        self.vars.insert(key.to_string(), value.into());
        self
    }

    pub fn protect<S: AsRef<str>>(mut self, texts: impl IntoIterator<Item = S>) -> Self {
        self.protected
            .extend(texts.into_iter().map(|s| s.as_ref().to_string()));
        self
    }
}

pub fn definitions_block(template: &PromptTemplate) -> String {
    let mut out = String::new();
    if template.key_term_definitions.is_empty() {
        return out;
    }
    out.push_str("# Definitions\nUse exactly these definitions of key terms:\n");
    for (term, def) in &template.key_term_definitions {
        let _ = writeln!(out, "- {term}: {def}");
    }
    out
}

pub fn few_shot_block(template: &PromptTemplate) -> String {
    let mut out = String::new();
    if template.few_shot_examples.is_empty() {
        return out;
    }
    out.push_str(
        "# Examples\nThe following generic examples show the expected process and format. \
         They are not about the function under analysis.\n",
    );
    for (i, ex) in template.few_shot_examples.iter().enumerate() {
        let _ = write!(
            out,
            "Example {n} input:\n{}\nExample {n} output:\n{}\n",
            ex.input_sketch,
            ex.output_sketch,
            n = i + 1
        );
    }
    out
}

fn forbidden_block(template: &PromptTemplate) -> String {
    let mut out = String::new();
    if template.forbidden_patterns.is_empty() {
        return out;
    }
    out.push_str("# Forbidden phrases\nNever use these vague phrases; state the precise condition instead:\n");
    for p in &template.forbidden_patterns {
        let _ = writeln!(out, "- \"{p}\"");
    }
    out
}

fn format_block(template: &PromptTemplate) -> String {
    let mut out = String::from(
        "# Output format\nAnswer with the following sections, each introduced by a header line \
         exactly as shown and in this order:\n",
    );
    for s in &template.output_schema.required_sections {
        let _ = writeln!(out, "## {s}");
    }
    out.push_str(match template.output_schema.result_shape {
        ResultShape::FreeText => "The result section contains only the requested text.\n",
        ResultShape::LabeledFields => {
            "The result section consists of `Label: value` lines using the labels requested above.\n"
        }
        ResultShape::EnumeratedList => {
            "The result section is a list of entries in the layout requested above.\n"
        }
    });
    out
}

/// Find a run of at least [`LEAKAGE_WINDOW`] characters of any protected text
/// inside `block`.
pub fn find_leak(block: &str, protected: &[String]) -> Option<String> {
    for text in protected {
        let chars: Vec<char> = text.chars().collect();
        if chars.len() < LEAKAGE_WINDOW {
            continue;
        }
        for start in 0..=chars.len() - LEAKAGE_WINDOW {
            let window: String = chars[start..start + LEAKAGE_WINDOW].iter().collect();
            if block.contains(&window) {
                return Some(window);
            }
        }
    }
    None
}

/// Render the system and user messages for one call. Pure.
pub fn render(template: &PromptTemplate, context: &RenderContext) -> Result<Vec<ChatMessage>, RenderError> {
    for name in template.required_placeholders() {
        if !context.vars.contains_key(&name) {
            return Err(RenderError::Unbound(name));
        }
    }
    let examples = few_shot_block(template);
    if let Some(leak) = find_leak(&examples, &context.protected) {
        return Err(RenderError::FewShotLeakage(leak));
    }
    let mut system = substitute(&template.system_text, &context.vars);
    for block in [
        definitions_block(template),
        examples,
        forbidden_block(template),
        format_block(template),
    ] {
        if !block.is_empty() {
            system.push_str("\n\n");
            system.push_str(block.trim_end());
        }
    }
    let user = substitute(&template.user_text, &context.vars);
    Ok(vec![ChatMessage::system(system), ChatMessage::user(user)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::{Glossary, TemplateSet};

    fn severity_ctx() -> RenderContext {
        RenderContext::new()
            .set("function_name", "CAEM")
            .set("scenario", "Ego on urban road, pedestrian at kerb")
            .set("scenario_detail", "Ego at 40 km/h")
            .set("malfunction", "commission of lateral motion request")
            .set("consequence", "Ego swerves towards the pedestrian")
    }

    #[test]
    fn severity_contains_guide_word_definitions() {
        let set = TemplateSet::builtin(&Glossary::default()).unwrap();
        let msgs = render(set.get("severity").unwrap(), &severity_ctx()).unwrap();
        let sys = &msgs[0].content;
        assert!(sys.contains("the function does not produce the intended effect"));
        assert!(sys.contains("The function produces the intended effect when it should not"));
        assert!(msgs[1].content.contains("Ego swerves towards the pedestrian"));
    }

    #[test]
    fn unbound_placeholder_named() {
        let set = TemplateSet::builtin(&Glossary::default()).unwrap();
        let mut ctx = severity_ctx();
        ctx.vars.remove("scenario");
        assert_eq!(
            render(set.get("severity").unwrap(), &ctx),
            Err(RenderError::Unbound("scenario".into()))
        );
    }

    #[test]
    fn rendering_is_pure() {
        let set = TemplateSet::builtin(&Glossary::default()).unwrap();
        let t = set.get("severity").unwrap();
        assert_eq!(render(t, &severity_ctx()).unwrap(), render(t, &severity_ctx()).unwrap());
    }

    #[test]
    fn leakage_detected() {
        let set = TemplateSet::builtin(&Glossary::default()).unwrap();
        let t = set.get("severity").unwrap();
        let copied: String = t.few_shot_examples[0].input_sketch.chars().take(30).collect();
        let ctx = severity_ctx().protect([format!("prefix {copied} suffix")]);
        assert!(matches!(render(t, &ctx), Err(RenderError::FewShotLeakage(_))));
    }

    #[test]
    fn short_texts_never_leak() {
        assert_eq!(find_leak("the vehicle", &["the vehicle".to_string()]), None);
    }
}
