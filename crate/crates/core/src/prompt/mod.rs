//! Per-step prompt assets, rendering, structured response parsing and the
//! single repair round trip.

mod glossary;
mod parse;
mod render;
mod template;

use thiserror::Error;

pub use glossary::{default_key_terms, Glossary};
pub use parse::{labeled_fields, parse_structured, ParseError, ParsedSections};
pub use render::{definitions_block, few_shot_block, find_leak, render, RenderContext, RenderError, LEAKAGE_WINDOW};
pub use template::{
    placeholders, FewShotExample, OutputSchema, PromptTemplate, ResultShape, TemplateError,
    TemplateSet, ASSUMPTIONS, BACKGROUND, REASONING, RESULT,
};

use crate::llm::{ChatMessage, LlmError, LlmGateway, LlmRequest, LlmResponse, TranscriptEntry};

/// Why a response was not accepted on first try.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RepairReason {
    MissingSections(Vec<String>),
    InvalidResult(String),
    Truncated,
}

impl RepairReason {
    fn instruction(&self) -> String {
        match self {
            RepairReason::MissingSections(missing) => format!(
                "Your previous answer is missing the required sections: {}. Answer again and \
                 include every required section, each introduced by its `## <section>` header \
                 line, with the result section last.",
                missing.join(", ")
            ),
            RepairReason::InvalidResult(problem) => format!(
                "Your previous answer could not be used: {problem}. Answer again with all \
                 required sections and a result section in the requested layout."
            ),
            RepairReason::Truncated => "Your previous answer was cut off. Answer again, more \
                 concisely, with all required sections and the result section last."
                .to_string(),
        }
    }
}

impl std::fmt::Display for RepairReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RepairReason::MissingSections(m) => write!(f, "missing sections: {}", m.join(", ")),
            RepairReason::InvalidResult(p) => write!(f, "invalid result: {p}"),
            RepairReason::Truncated => write!(f, "truncated output"),
        }
    }
}

#[derive(Debug, Error)]
pub enum CallError {
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    /// The response stayed unusable after the repair attempt.
    #[error("row failed after repair: {0}")]
    RowFailed(RepairReason),
}

/// Row key used for the repair call, so replay fixtures can differ.
pub fn repair_row_key(row_key: Option<&str>) -> String {
    match row_key {
        Some(k) => format!("{k}.repair"),
        None => "repair".to_string(),
    }
}

/// Re-issue `original` once with the rejected answer and a corrective
/// instruction appended.
pub fn repair_once(
    gateway: &LlmGateway,
    original: &LlmRequest,
    rejected: &str,
    reason: &RepairReason,
    transcript: &mut Vec<TranscriptEntry>,
) -> Result<LlmResponse, LlmError> {
    let mut request = original.clone();
    request.row_key = Some(repair_row_key(original.row_key.as_deref()));
    request.messages.push(ChatMessage::assistant(rejected));
    request.messages.push(ChatMessage::user(reason.instruction()));
    gateway.complete(&request, transcript)
}

/// A fully parsed, validated answer.
#[derive(Debug, Clone, PartialEq)]
pub struct Answer<T> {
    pub value: T,
    pub sections: ParsedSections,
    pub repaired: bool,
}

/// One LLM step invocation for one row.
pub struct StepCall<'a> {
    pub gateway: &'a LlmGateway,
    pub template: &'a PromptTemplate,
    pub row_key: Option<String>,
    pub max_tokens: u32,
}

impl StepCall<'_> {
    pub fn request(&self, context: &RenderContext) -> Result<LlmRequest, RenderError> {
        Ok(LlmRequest {
            step_id: self.template.step_id.clone(),
            row_key: self.row_key.clone(),
            messages: render(self.template, context)?,
            temperature: self.template.temperature,
            max_tokens: self.max_tokens,
        })
    }

    /// Render, call, parse and validate, repairing at most once. The
    /// number of backend requests is at most two, not counting transport
    /// retries inside the gateway.
    pub fn ask<T>(
        &self,
        context: &RenderContext,
        transcript: &mut Vec<TranscriptEntry>,
        validate: impl Fn(&ParsedSections) -> Result<T, String>,
    ) -> Result<Answer<T>, CallError> {
        let request = self.request(context)?;
        let evaluate = |content: &str| -> Result<(T, ParsedSections), RepairReason> {
            let parsed = parse_structured(content, &self.template.output_schema)
                .map_err(|e| RepairReason::MissingSections(e.missing))?;
            let value = validate(&parsed).map_err(RepairReason::InvalidResult)?;
            Ok((value, parsed))
        };

        let (rejected, reason) = match self.gateway.complete(&request, transcript) {
            Ok(resp) => match evaluate(&resp.content) {
                Ok((value, sections)) => {
                    return Ok(Answer { value, sections, repaired: false });
                }
                Err(reason) => (resp.content, reason),
            },
            Err(LlmError::TruncatedOutput(resp)) => (resp.content, RepairReason::Truncated),
            Err(other) => return Err(other.into()),
        };

        let repaired = match repair_once(self.gateway, &request, &rejected, &reason, transcript) {
            Ok(resp) => resp,
            Err(LlmError::TruncatedOutput(_)) => return Err(CallError::RowFailed(RepairReason::Truncated)),
            Err(other) => return Err(other.into()),
        };
        match evaluate(&repaired.content) {
            Ok((value, sections)) => Ok(Answer { value, sections, repaired: true }),
            Err(reason) => Err(CallError::RowFailed(reason)),
        }
    }
}
