//! The individual pipeline steps. LLM steps take a [`StepEnv`]; the rule
//! based steps are plain functions.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::LazyLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{PipelineConfig, SelectionMode};
use crate::llm::{LlmError, LlmGateway, TranscriptEntry};
use crate::model::{
    make_id, EventState, GuideWord, HazardousEvent, ItemDefinition, Malfunction, MalfunctionSource,
    OperationalScenario, ScenarioLayer, ScenarioSource, Severity, EVENT_PREFIX, MALFUNCTION_PREFIX,
    SCENARIO_PREFIX,
};
use crate::prompt::{labeled_fields, CallError, PromptTemplate, RenderContext, RenderError, StepCall, TemplateSet};

/// A row (or block) that could not be produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowFailure {
    pub row_id: String,
    pub step: String,
    pub reason: String,
}

/// What every step writes to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepArtifact<T> {
    pub items: Vec<T>,
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(default)]
    pub failures: Vec<RowFailure>,
}

impl<T> StepArtifact<T> {
    pub fn new(items: Vec<T>) -> Self {
        Self { items, warnings: Vec::new(), failures: Vec::new() }
    }
}

#[derive(Debug, Error)]
pub enum StepError {
    #[error("{step}: no usable output ({reason})")]
    Empty { step: String, reason: String },
    #[error(transparent)]
    Llm(LlmError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("combine: {0}")]
    Combine(String),
    #[error("no template for step {0:?}")]
    MissingTemplate(String),
}

/// Everything an LLM step needs.
pub struct StepEnv<'a> {
    pub gateway: &'a LlmGateway,
    pub templates: &'a TemplateSet,
    pub cfg: &'a PipelineConfig,
    pub pool: &'a rayon::ThreadPool,
}

impl StepEnv<'_> {
    pub fn template(&self, step_id: &str) -> Result<&PromptTemplate, StepError> {
        self.templates
            .get(step_id)
            .ok_or_else(|| StepError::MissingTemplate(step_id.to_string()))
    }

    fn call<'b>(&'b self, template: &'b PromptTemplate, row_key: Option<String>) -> StepCall<'b> {
        StepCall {
            gateway: self.gateway,
            template,
            row_key,
            max_tokens: self.cfg.llm.max_tokens,
        }
    }
}

/// Split a call error into a per-row failure reason or a run-stopping error.
pub fn classify(err: CallError) -> Result<String, StepError> {
    match err {
        CallError::RowFailed(reason) => Ok(reason.to_string()),
        CallError::Render(e) => Err(StepError::Render(e)),
        CallError::Llm(e @ (LlmError::Credential | LlmError::Config(_) | LlmError::InvalidRequest(_))) => {
            Err(StepError::Llm(e))
        }
        CallError::Llm(e) => Ok(e.to_string()),
    }
}

/// Run `f` over `items` on the pool, keeping input order for results and
/// transcripts alike.
fn per_row<T, R, F>(pool: &rayon::ThreadPool, items: &[T], f: F) -> (Vec<R>, Vec<TranscriptEntry>)
where
    T: Sync,
    R: Send,
    F: Fn(&T, &mut Vec<TranscriptEntry>) -> R + Sync,
{
    let pairs: Vec<(R, Vec<TranscriptEntry>)> = pool.install(|| {
        items
            .par_iter()
            .map(|item| {
                let mut log = Vec::new();
                let r = f(item, &mut log);
                (r, log)
            })
            .collect()
    });
    let mut results = Vec::with_capacity(pairs.len());
    let mut transcript = Vec::new();
    for (r, log) in pairs {
        results.push(r);
        transcript.extend(log);
    }
    (results, transcript)
}

fn item_context(item: &ItemDefinition) -> RenderContext {
    RenderContext::new()
        .set("function_name", item.function_name.clone())
        .set("description", item.description.clone())
        .protect(item.protected_texts())
}

// ---------------------------------------------------------------- scenarios

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedScenario {
    pub core: String,
    pub detailed: String,
    pub factors: BTreeMap<ScenarioLayer, Vec<String>>,
    pub warnings: Vec<String>,
}

static FIELD: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^\**(core|detailed|factors)\**\s*:\s*(.*)$").expect("field regex"));
static FACTOR: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[-*]\s*([A-Za-z][A-Za-z _-]*?)\s*:\s*(.*)$").expect("factor regex"));

#[derive(Clone, Copy, PartialEq)]
enum Field {
    None,
    Core,
    Detailed,
    Factors,
}

fn parse_block(block: &str) -> Result<ParsedScenario, String> {
    let mut core = String::new();
    let mut detailed = String::new();
    let mut factors: BTreeMap<ScenarioLayer, Vec<String>> = BTreeMap::new();
    let mut warnings = Vec::new();
    let mut seen_factors = false;
    let mut field = Field::None;
    for line in block.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if let Some(c) = FIELD.captures(line) {
            let value = c[2].trim();
            field = match c[1].to_ascii_lowercase().as_str() {
                "core" => {
                    core = value.to_string();
                    Field::Core
                }
                "detailed" => {
                    detailed = value.to_string();
                    Field::Detailed
                }
                _ => {
                    seen_factors = true;
                    Field::Factors
                }
            };
            continue;
        }
        match field {
            Field::Factors => match FACTOR.captures(line) {
                Some(c) => match c[1].parse::<ScenarioLayer>() {
                    Ok(layer) => factors.entry(layer).or_default().extend(
                        c[2].split(';').map(str::trim).filter(|v| !v.is_empty()).map(String::from),
                    ),
                    Err(e) => warnings.push(format!("{e}; factor skipped")),
                },
                None => warnings.push(format!("unreadable factor line {line:?}")),
            },
            Field::Core => {
                core.push(' ');
                core.push_str(line);
            }
            Field::Detailed => {
                detailed.push(' ');
                detailed.push_str(line);
            }
            Field::None => {}
        }
    }
    if core.trim().is_empty() {
        return Err("block has no core scenario".to_string());
    }
    if !seen_factors || factors.is_empty() {
        warnings.push("no factor annotations".to_string());
    }
    Ok(ParsedScenario { core: core.trim().to_string(), detailed: detailed.trim().to_string(), factors, warnings })
}

/// Blocks introduced by `###` header lines; text before the first is ignored.
pub fn parse_scenario_blocks(result: &str) -> Vec<Result<ParsedScenario, String>> {
    let mut blocks: Vec<String> = Vec::new();
    for line in result.lines() {
        if line.trim_start().starts_with("###") {
            blocks.push(String::new());
        } else if let Some(b) = blocks.last_mut() {
            b.push_str(line);
            b.push('\n');
        }
    }
    blocks.iter().map(|b| parse_block(b)).collect()
}

pub fn generate_scenarios(
    env: &StepEnv<'_>,
    item: &ItemDefinition,
    transcript: &mut Vec<TranscriptEntry>,
) -> Result<StepArtifact<OperationalScenario>, StepError> {
    let template = env.template("scenarios")?;
    let ctx = item_context(item)
        .set("function_outputs", item.function_outputs.join(", "))
        .set("odd_notes", item.odd_notes.clone())
        .set("driver_interaction", item.driver_interaction.clone())
        .set("target_count", env.cfg.scenarios_target_count.to_string());
    let answer = env.call(template, None).ask(&ctx, transcript, |p| {
        let blocks = parse_scenario_blocks(p.result());
        if blocks.iter().any(Result::is_ok) {
            Ok(blocks)
        } else {
            Err("no scenario block with a core scenario".to_string())
        }
    });
    let blocks = match answer {
        Ok(a) => a.value,
        Err(e) => {
            let reason = classify(e)?;
            return Err(StepError::Empty { step: "scenarios".into(), reason });
        }
    };
    let mut out = StepArtifact::new(Vec::new());
    for (i, block) in blocks.into_iter().enumerate() {
        match block {
            Ok(parsed) => {
                let id = make_id(SCENARIO_PREFIX, out.items.len());
                out.warnings.extend(parsed.warnings.iter().map(|w| format!("{id}: {w}")));
                out.items.push(OperationalScenario {
                    id,
                    core_summary: parsed.core,
                    detailed_description: parsed.detailed,
                    factors: parsed.factors,
                    cluster_id: None,
                    source: ScenarioSource::LlmGenerated,
                });
            }
            Err(reason) => out.failures.push(RowFailure {
                row_id: format!("scenario block {}", i + 1),
                step: "scenarios".into(),
                reason,
            }),
        }
    }
    if out.items.len() != env.cfg.scenarios_target_count {
        out.warnings.push(format!(
            "{} scenarios produced, {} requested",
            out.items.len(),
            env.cfg.scenarios_target_count
        ));
    }
    Ok(out)
}

// ---------------------------------------------------------------- selection

/// Greedy maximum coverage of factor values; ties go to the smallest id.
/// The result keeps the input order.
pub fn greedy_select(scenarios: &[OperationalScenario], k: usize) -> Vec<String> {
    let mut covered: BTreeSet<(ScenarioLayer, String)> = BTreeSet::new();
    let mut chosen: BTreeSet<&str> = BTreeSet::new();
    while chosen.len() < k.min(scenarios.len()) {
        let best = scenarios
            .iter()
            .filter(|s| !chosen.contains(s.id.as_str()))
            .map(|s| (s.factor_set().difference(&covered).count(), s))
            .max_by(|(ga, a), (gb, b)| ga.cmp(gb).then_with(|| b.id.cmp(&a.id)))
            .map(|(_, s)| s)
            .expect("fewer chosen than available");
        covered.extend(best.factor_set());
        chosen.insert(&best.id);
    }
    scenarios
        .iter()
        .filter(|s| chosen.contains(s.id.as_str()))
        .map(|s| s.id.clone())
        .collect()
}

static SCENARIO_ID: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"SC-\d+").expect("id regex"));

fn scenario_listing(scenarios: &[OperationalScenario]) -> String {
    scenarios
        .iter()
        .map(|s| {
            let factors = s
                .factors
                .iter()
                .map(|(l, v)| format!("{l}={}", v.join("; ")))
                .collect::<Vec<_>>()
                .join(", ");
            format!("{}: {}\n  factors: {factors}", s.id, s.core_summary)
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn tag_clusters(scenarios: &[OperationalScenario], ids: &[String]) -> Vec<OperationalScenario> {
    scenarios
        .iter()
        .filter(|s| ids.contains(&s.id))
        .enumerate()
        .map(|(i, s)| OperationalScenario {
            cluster_id: Some(format!("CL-{:02}", i + 1)),
            ..s.clone()
        })
        .collect()
}

pub fn cluster_and_select(
    env: &StepEnv<'_>,
    scenarios: &[OperationalScenario],
    k: usize,
    transcript: &mut Vec<TranscriptEntry>,
) -> Result<StepArtifact<OperationalScenario>, StepError> {
    let all: Vec<String> = scenarios.iter().map(|s| s.id.clone()).collect();
    if k >= scenarios.len() {
        return Ok(StepArtifact::new(tag_clusters(scenarios, &all)));
    }
    let mut warnings = Vec::new();
    let ids = match env.cfg.selection_mode {
        SelectionMode::Deterministic => greedy_select(scenarios, k),
        SelectionMode::Llm => {
            let template = env.template("selection")?;
            let ctx = RenderContext::new()
                .set("scenario_list", scenario_listing(scenarios))
                .set("k", k.to_string());
            let picked = env.call(template, None).ask(&ctx, transcript, |p| {
                let mut ids: Vec<String> = Vec::new();
                for m in SCENARIO_ID.find_iter(p.result()) {
                    if !ids.iter().any(|i| i == m.as_str()) {
                        ids.push(m.as_str().to_string());
                    }
                }
                Ok(ids)
            });
            match picked {
                Ok(a) => {
                    let unknown: Vec<&String> = a.value.iter().filter(|i| !all.contains(i)).collect();
                    if !unknown.is_empty() || a.value.len() != k {
                        warnings.push(format!(
                            "selection returned {} ids ({} unknown), expected {k}; deterministic selection used",
                            a.value.len(),
                            unknown.len()
                        ));
                        greedy_select(scenarios, k)
                    } else {
                        a.value
                    }
                }
                Err(e) => {
                    warnings.push(format!("selection call failed ({}); deterministic selection used", classify(e)?));
                    greedy_select(scenarios, k)
                }
            }
        }
    };
    let mut out = StepArtifact::new(tag_clusters(scenarios, &ids));
    out.warnings = warnings;
    Ok(out)
}

// ------------------------------------------------------------- malfunctions

/// Every (output, guide word) pair, output-major.
pub fn malfunction_stubs(item: &ItemDefinition, catalogue: &[GuideWord]) -> Vec<Malfunction> {
    let mut out = Vec::new();
    for (o, output) in item.function_outputs.iter().enumerate() {
        for gw in catalogue {
            out.push(Malfunction {
                id: make_id(MALFUNCTION_PREFIX, out.len()),
                output_ref: o,
                guide_word: gw.name.clone(),
                description: format!("{} of {}", gw.name, output),
                source: MalfunctionSource::RuleEnumerated,
            });
        }
    }
    out
}

pub fn enumerate_malfunctions(
    env: &StepEnv<'_>,
    item: &ItemDefinition,
    catalogue: &[GuideWord],
    transcript: &mut Vec<TranscriptEntry>,
) -> Result<StepArtifact<Malfunction>, StepError> {
    let template = env.template("malfunctions")?;
    let stubs = malfunction_stubs(item, catalogue);
    let (results, log) = per_row(env.pool, &stubs, |stub, log| {
        let ctx = item_context(item)
            .set("output", item.function_outputs[stub.output_ref].clone())
            .set("guide_word", stub.guide_word.clone());
        env.call(template, Some(stub.id.clone())).ask(&ctx, log, |p| {
            let text = p.result().trim();
            if text.is_empty() {
                Err("empty description".to_string())
            } else {
                Ok(text.split_whitespace().collect::<Vec<_>>().join(" "))
            }
        })
    });
    transcript.extend(log);
    let mut out = StepArtifact::new(Vec::new());
    for (stub, result) in stubs.into_iter().zip(results) {
        match result {
            Ok(a) => out.items.push(Malfunction {
                description: a.value,
                source: MalfunctionSource::LlmExpanded,
                ..stub
            }),
            Err(e) => {
                out.warnings.push(format!("{}: expansion failed ({}); stub kept", stub.id, classify(e)?));
                out.items.push(stub);
            }
        }
    }
    Ok(out)
}

// ------------------------------------------------------------------ combine

/// Full cartesian product, scenario-major. Rule based.
pub fn combine(
    scenarios: &[OperationalScenario],
    malfunctions: &[Malfunction],
) -> Result<Vec<HazardousEvent>, StepError> {
    if scenarios.is_empty() || malfunctions.is_empty() {
        return Err(StepError::Combine("both scenario and malfunction lists must be non-empty".into()));
    }
    let mut seen = HashSet::new();
    for id in scenarios.iter().map(|s| &s.id).chain(malfunctions.iter().map(|m| &m.id)) {
        if !seen.insert(id) {
            return Err(StepError::Combine(format!("duplicate id {id}")));
        }
    }
    let mut out = Vec::with_capacity(scenarios.len() * malfunctions.len());
    for s in scenarios {
        for m in malfunctions {
            out.push(HazardousEvent::draft(
                make_id(EVENT_PREFIX, out.len()),
                s.id.clone(),
                m.id.clone(),
            ));
        }
    }
    Ok(out)
}

// ---------------------------------------------------------- row LLM steps

/// Lookup tables for the references held by a row.
pub struct RowRefs<'a> {
    pub item: &'a ItemDefinition,
    pub scenarios: &'a [OperationalScenario],
    pub malfunctions: &'a [Malfunction],
}

impl<'a> RowRefs<'a> {
    pub fn scenario(&self, id: &str) -> Option<&'a OperationalScenario> {
        self.scenarios.iter().find(|s| s.id == id)
    }

    pub fn malfunction(&self, id: &str) -> Option<&'a Malfunction> {
        self.malfunctions.iter().find(|m| m.id == id)
    }

    /// Shared bindings for every per-row prompt.
    pub fn context(&self, row: &HazardousEvent) -> Option<RenderContext> {
        let s = self.scenario(&row.scenario_ref)?;
        let m = self.malfunction(&row.malfunction_ref)?;
        let output = self.item.function_outputs.get(m.output_ref)?;
        Some(
            item_context(self.item)
                .set("output", output.clone())
                .set("guide_word", m.guide_word.clone())
                .set("malfunction", m.description.clone())
                .set("scenario", s.core_summary.clone())
                .set("scenario_detail", s.detailed_description.clone())
                .set("consequence", row.consequence.clone())
                .set("kinematics", row.kinematic_rationale.clone().unwrap_or_default())
                .set("severity", row.severity.map(|s| s.to_string()).unwrap_or_default())
                .set("severity_rationale", row.severity_rationale.clone()),
        )
    }
}

fn fail_row(row: &HazardousEvent, step: &str, reason: String, out: &mut StepArtifact<HazardousEvent>) {
    out.failures.push(RowFailure { row_id: row.id.clone(), step: step.into(), reason });
    out.items.push(HazardousEvent { state: EventState::Failed, ..row.clone() });
}

pub fn formulate(
    env: &StepEnv<'_>,
    refs: &RowRefs<'_>,
    drafts: &[HazardousEvent],
    transcript: &mut Vec<TranscriptEntry>,
) -> Result<StepArtifact<HazardousEvent>, StepError> {
    let template = env.template("hazardous_event")?;
    let (results, log) = per_row(env.pool, drafts, |row, log| {
        if row.state != EventState::Draft {
            return None;
        }
        let ctx = refs.context(row)?;
        Some(env.call(template, Some(row.id.clone())).ask(&ctx, log, |p| {
            let fields = labeled_fields(p.result());
            let consequence = fields.get("consequence").cloned().unwrap_or_default();
            if consequence.is_empty() {
                return Err("expected a `Consequence:` line".to_string());
            }
            Ok((consequence, fields.get("kinematics").cloned().filter(|k| !k.is_empty())))
        }))
    });
    transcript.extend(log);
    let mut out = StepArtifact::new(Vec::new());
    for (row, result) in drafts.iter().zip(results) {
        match result {
            None if row.state != EventState::Draft => out.items.push(row.clone()),
            None => fail_row(row, "formulate", "unresolved scenario or malfunction reference".into(), &mut out),
            Some(Ok(a)) => out.items.push(HazardousEvent {
                consequence: a.value.0,
                kinematic_rationale: a.value.1,
                explanation: a.sections.explanation(),
                state: EventState::Formulated,
                ..row.clone()
            }),
            Some(Err(e)) => {
                let reason = classify(e)?;
                fail_row(row, "formulate", reason, &mut out);
            }
        }
    }
    if !out.items.iter().any(|r| r.state == EventState::Formulated) {
        return Err(StepError::Empty { step: "formulate".into(), reason: "every row failed".into() });
    }
    Ok(out)
}

fn parse_severity(fields: &BTreeMap<String, String>) -> Result<Severity, String> {
    let raw = fields
        .get("severity")
        .ok_or_else(|| "expected a `Severity:` line".to_string())?;
    let token = raw.split_whitespace().next().unwrap_or("");
    token.trim_matches(|c: char| !c.is_alphanumeric()).parse()
}

pub fn assess_severity(
    env: &StepEnv<'_>,
    refs: &RowRefs<'_>,
    rows: &[HazardousEvent],
    transcript: &mut Vec<TranscriptEntry>,
) -> Result<StepArtifact<HazardousEvent>, StepError> {
    let template = env.template("severity")?;
    let (results, log) = per_row(env.pool, rows, |row, log| {
        if row.state != EventState::Formulated {
            return None;
        }
        let ctx = refs.context(row)?;
        Some(env.call(template, Some(row.id.clone())).ask(&ctx, log, |p| {
            let fields = labeled_fields(p.result());
            let severity = parse_severity(&fields)?;
            let rationale = fields
                .get("rationale")
                .filter(|r| !r.is_empty())
                .cloned()
                .unwrap_or_else(|| p.get("reasoning").to_string());
            if rationale.trim().is_empty() {
                return Err("no rationale given".to_string());
            }
            Ok((severity, rationale))
        }))
    });
    transcript.extend(log);
    let mut out = StepArtifact::new(Vec::new());
    for (row, result) in rows.iter().zip(results) {
        match result {
            None if row.state != EventState::Formulated => out.items.push(row.clone()),
            None => fail_row(row, "severity", "unresolved scenario or malfunction reference".into(), &mut out),
            Some(Ok(a)) => {
                let mut explanation = row.explanation.clone();
                explanation.reasoning = join_nonempty(&explanation.reasoning, a.sections.get("reasoning"));
                explanation.assumptions = join_nonempty(&explanation.assumptions, a.sections.get("assumptions"));
                out.items.push(HazardousEvent {
                    severity: Some(a.value.0),
                    severity_rationale: a.value.1,
                    explanation,
                    state: EventState::Assessed,
                    ..row.clone()
                });
            }
            Some(Err(e)) => {
                let reason = classify(e)?;
                fail_row(row, "severity", reason, &mut out);
            }
        }
    }
    if !out.items.iter().any(|r| r.state == EventState::Assessed) {
        return Err(StepError::Empty { step: "severity".into(), reason: "every row failed".into() });
    }
    Ok(out)
}

fn join_nonempty(a: &str, b: &str) -> String {
    match (a.trim().is_empty(), b.trim().is_empty()) {
        (_, true) => a.to_string(),
        (true, false) => b.to_string(),
        (false, false) => format!("{a}\n\n{b}"),
    }
}

/// Ids of assessed rows above S0, in table order.
pub fn gate_for_goals(rows: &[HazardousEvent]) -> Vec<String> {
    rows.iter().filter(|r| r.needs_goal()).map(|r| r.id.clone()).collect()
}
