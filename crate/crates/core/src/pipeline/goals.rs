//! Safety-goal specification per strategy and the two-stage redundancy check.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::steps::{classify, RowFailure, RowRefs, StepEnv, StepError};
use crate::llm::{LlmGateway, TranscriptEntry};
use crate::model::{
    make_id, ExplanationBundle, FindingMethod, GoalStatus, HazardousEvent, RedundancyFinding, Relation, SafetyGoal,
    Strategy, GOAL_PREFIX,
};
use crate::prompt::{labeled_fields, PromptTemplate, RenderContext, StepCall};
use crate::quality::{lint_goal, rule, LintRuleSet};
use crate::text::{jaccard, normalize_text};

/// A goal already specified in this run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BufferEntry {
    pub goal_id: String,
    pub text: String,
    /// Deterministic statement of what the goal was asked to achieve.
    pub intent: String,
}

/// Append-only store of generated goals.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GoalBuffer {
    entries: Vec<BufferEntry>,
}

impl GoalBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, entry: BufferEntry) {
        self.entries.push(entry);
    }

    pub fn entries(&self) -> &[BufferEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, goal_id: &str) -> Option<&BufferEntry> {
        self.entries.iter().find(|e| e.goal_id == goal_id)
    }
}

/// Settings of the redundancy check. Without a gateway, stage 2 is
/// skipped and every surviving pair is reported as a lexical overlap.
pub struct RedundancyCheck<'a> {
    pub gateway: Option<&'a LlmGateway>,
    pub template: Option<&'a PromptTemplate>,
    pub threshold: f64,
    pub stop_words: &'a [String],
    pub max_tokens: u32,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RedundancyOutcome {
    pub findings: Vec<RedundancyFinding>,
    pub warnings: Vec<String>,
    /// Whether stage 2 was needed.
    pub classified: bool,
}

static RELATION_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^[-*\s]*([A-Za-z]+-[A-Za-z0-9]+)\s*:\s*([A-Za-z_ -]+?)\s*(?:\|\s*(.*))?$").expect("relation regex")
});

fn parse_relations(result: &str) -> BTreeMap<String, (Relation, String)> {
    result
        .lines()
        .filter_map(|l| RELATION_LINE.captures(l.trim()))
        .filter_map(|c| {
            let relation = c[2].parse::<Relation>().ok()?;
            let rationale = c.get(3).map(|m| m.as_str().trim().to_string()).unwrap_or_default();
            Some((c[1].to_string(), (relation, rationale)))
        })
        .collect()
}

/// Compare `candidate` with each `(id, text)` in `existing`. Exact
/// normalized matches are duplicates outright; pairs at or above the
/// Jaccard threshold go to one classification call. Distinct pairs
/// produce no finding.
pub fn find_redundancies(
    check: &RedundancyCheck<'_>,
    candidate_id: &str,
    candidate: &str,
    existing: &[(String, String)],
    row_key: &str,
    transcript: &mut Vec<TranscriptEntry>,
) -> Result<RedundancyOutcome, StepError> {
    let mut out = RedundancyOutcome::default();
    let normalized = normalize_text(candidate, check.stop_words);
    let mut survivors: Vec<(&String, &String, f64)> = Vec::new();
    for (id, text) in existing {
        if normalize_text(text, check.stop_words) == normalized {
            out.findings.push(RedundancyFinding {
                goal_a: candidate_id.to_string(),
                goal_b: id.clone(),
                relation: Relation::Duplicate,
                rationale: "identical after normalization".to_string(),
                method: FindingMethod::Lexical,
            });
            continue;
        }
        let j = jaccard(candidate, text, check.stop_words);
        if j >= check.threshold {
            survivors.push((id, text, j));
        }
    }
    if survivors.is_empty() {
        return Ok(out);
    }
    out.classified = true;
    let lexical = |id: &String, j: f64| RedundancyFinding {
        goal_a: candidate_id.to_string(),
        goal_b: id.clone(),
        relation: Relation::PartialOverlap,
        rationale: format!("token overlap {j:.2}; not classified"),
        method: FindingMethod::Lexical,
    };
    let classified = match (check.gateway, check.template) {
        (Some(gateway), Some(template)) => {
            let listing = survivors
                .iter()
                .map(|(id, text, _)| format!("{id}: {text}"))
                .collect::<Vec<_>>()
                .join("\n");
            let ctx = RenderContext::new()
                .set("candidate", candidate.to_string())
                .set("existing_goals", listing);
            let call = StepCall { gateway, template, row_key: Some(row_key.to_string()), max_tokens: check.max_tokens };
            match call.ask(&ctx, transcript, |p| Ok(parse_relations(p.result()))) {
                Ok(a) => Some(a.value),
                Err(e) => {
                    out.warnings.push(format!("{row_key}: redundancy classification failed ({})", classify(e)?));
                    None
                }
            }
        }
        _ => None,
    };
    for (id, _, j) in survivors {
        match classified.as_ref().and_then(|m| m.get(id.as_str())) {
            Some((Relation::Distinct, _)) => {}
            Some((relation, rationale)) => out.findings.push(RedundancyFinding {
                goal_a: candidate_id.to_string(),
                goal_b: id.clone(),
                relation: *relation,
                rationale: rationale.clone(),
                method: FindingMethod::Llm,
            }),
            None => {
                if classified.is_some() {
                    out.warnings.push(format!("{row_key}: no classification for {id}"));
                }
                out.findings.push(lexical(id, j));
            }
        }
    }
    Ok(out)
}

/// Goal-shaped statement of what a strategy asks for on one event, used
/// to look for reusable goals before generating.
pub fn intent_text(function: &str, strategy: Strategy, malfunction: &str, scenario: &str, consequence: &str) -> String {
    match strategy {
        Strategy::AvoidFailureMode => format!("{function} shall avoid the malfunction: {malfunction}"),
        Strategy::RestrictExposure => format!("{function} shall not be active in the scenario: {scenario}"),
        Strategy::ImproveControllability => {
            format!("{function} shall keep controllable the hazardous event: {consequence}")
        }
        Strategy::ReduceSeverity => format!("{function} shall reduce the severity of the hazardous event: {consequence}"),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GoalsArtifact {
    pub goals: Vec<SafetyGoal>,
    pub findings: Vec<RedundancyFinding>,
    #[serde(default)]
    pub warnings: Vec<String>,
    /// Gated rows left without any goal.
    #[serde(default)]
    pub failures: Vec<RowFailure>,
}

pub struct GoalContext<'a> {
    pub env: &'a StepEnv<'a>,
    pub refs: &'a RowRefs<'a>,
    pub rules: &'a LintRuleSet,
    pub redundancy: RedundancyCheck<'a>,
}

/// One goal per enabled strategy for `event`, reusing buffered goals where
/// the buffer already states the requirement. `next_index` numbers goals.
pub fn specify_safety_goals(
    gc: &GoalContext<'_>,
    event: &HazardousEvent,
    strategies: &[Strategy],
    buffer: &mut GoalBuffer,
    next_index: &mut usize,
    transcript: &mut Vec<TranscriptEntry>,
) -> Result<GoalsArtifact, StepError> {
    let template = gc.env.template("safety_goal")?;
    let mut out = GoalsArtifact::default();
    let Some(base) = gc.refs.context(event) else {
        out.warnings.push(format!("{}: unresolved references; no goals", event.id));
        return Ok(out);
    };
    let scenario = gc.refs.scenario(&event.scenario_ref).map(|s| s.core_summary.as_str()).unwrap_or("");
    let malfunction = gc.refs.malfunction(&event.malfunction_ref).map(|m| m.description.as_str()).unwrap_or("");

    for &strategy in strategies {
        let goal_id = make_id(GOAL_PREFIX, *next_index);
        let key = format!("{}.{}", event.id, strategy.as_str());
        let intent = intent_text(&gc.refs.item.function_name, strategy, malfunction, scenario, &event.consequence);

        let by_intent: Vec<(String, String)> =
            buffer.entries().iter().map(|e| (e.goal_id.clone(), e.intent.clone())).collect();
        let pre = find_redundancies(&gc.redundancy, &goal_id, &intent, &by_intent, &format!("{key}.intent"), transcript)?;
        out.warnings.extend(pre.warnings);
        let reusable = pre
            .findings
            .into_iter()
            .find(|f| matches!(f.relation, Relation::Duplicate | Relation::SubsumedBy));
        if let Some(found) = reusable {
            let existing = buffer.get(&found.goal_b).expect("finding refers to buffer");
            out.goals.push(SafetyGoal {
                id: goal_id.clone(),
                text: existing.text.clone(),
                strategy,
                covered_events: vec![event.id.clone()],
                status: GoalStatus::ReusedExisting,
                explanation: ExplanationBundle {
                    background: format!("Goal {} already states this requirement.", existing.goal_id),
                    assumptions: String::new(),
                    reasoning: found.rationale.clone(),
                },
                lint_findings: lint_goal(&existing.text, gc.rules),
                reuses: Some(existing.goal_id.clone()),
            });
            out.findings.push(found);
            *next_index += 1;
            continue;
        }

        let ctx = base
            .clone()
            .set("strategy_title", strategy.title())
            .set("strategy_guidance", strategy.guidance());
        let call = StepCall { gateway: gc.env.gateway, template, row_key: Some(key.clone()), max_tokens: gc.env.cfg.llm.max_tokens };
        let answer = call.ask(&ctx, transcript, |p| {
            let text = labeled_fields(p.result()).get("safety_goal").cloned().unwrap_or_default();
            if text.is_empty() {
                return Err("expected a `Safety goal:` line".to_string());
            }
            if lint_goal(&text, gc.rules).iter().any(|f| f.rule_id == rule::MISSING_SHALL) {
                return Err(format!("the goal must use \"{}\"", gc.rules.required_modal));
            }
            Ok(text)
        });
        let answer = match answer {
            Ok(a) => a,
            Err(e) => {
                out.warnings.push(format!("{key}: strategy skipped ({})", classify(e)?));
                continue;
            }
        };
        let text = answer.value;
        let by_text: Vec<(String, String)> =
            buffer.entries().iter().map(|e| (e.goal_id.clone(), e.text.clone())).collect();
        let post = find_redundancies(&gc.redundancy, &goal_id, &text, &by_text, &format!("{key}.goal"), transcript)?;
        out.warnings.extend(post.warnings);
        out.findings.extend(post.findings);
        buffer.push(BufferEntry { goal_id: goal_id.clone(), text: text.clone(), intent });
        out.goals.push(SafetyGoal {
            id: goal_id,
            lint_findings: lint_goal(&text, gc.rules),
            text,
            strategy,
            covered_events: vec![event.id.clone()],
            status: GoalStatus::Proposed,
            explanation: answer.sections.explanation(),
            reuses: None,
        });
        *next_index += 1;
    }
    if out.goals.is_empty() {
        out.failures.push(RowFailure {
            row_id: event.id.clone(),
            step: "goals".into(),
            reason: "no safety goal could be specified for any strategy".into(),
        });
    }
    Ok(out)
}
