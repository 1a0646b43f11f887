use std::collections::BTreeSet;

use crate::llm::{LlmGateway, TranscriptEntry};
use crate::model::{HaraTable, LintFinding, LintLevel, Severity};
use crate::prompt::{labeled_fields, RenderContext, StepCall, TemplateSet};
use crate::text::normalize_text;

pub const CONSISTENCY_RULE: &str = "inconsistent-severity";
pub const AGENT_RULE: &str = "agent-mismatch";

/// One error per group of rows whose normalized consequences match but
/// whose severities differ. Groups come out in first-appearance order.
/// Row id, severity and raw consequence.
type Member<'a> = (&'a str, Severity, &'a str);

pub fn check_consistency(table: &HaraTable, stop_words: &[String]) -> Vec<LintFinding> {
    let mut groups: Vec<(String, Vec<Member>)> = Vec::new();
    for row in &table.rows {
        let Some(sev) = row.assessed_severity() else { continue };
        let key = normalize_text(&row.consequence, stop_words);
        if key.is_empty() {
            continue;
        }
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, members)) => members.push((&row.id, sev, &row.consequence)),
            None => groups.push((key, vec![(&row.id, sev, &row.consequence)])),
        }
    }
    groups
        .into_iter()
        .filter_map(|(_, members)| {
            let severities: BTreeSet<Severity> = members.iter().map(|m| m.1).collect();
            if severities.len() < 2 {
                return None;
            }
            let ids: Vec<String> = members.iter().map(|m| m.0.to_string()).collect();
            let sev_list = members
                .iter()
                .map(|m| format!("{} {}", m.0, m.1))
                .collect::<Vec<_>>()
                .join(", ");
            Some(LintFinding {
                rule_id: CONSISTENCY_RULE.to_string(),
                level: LintLevel::Error,
                snippet: members[0].2.to_string(),
                message: format!("same consequence assessed with different severities: {sev_list}"),
                targets: ids,
            })
        })
        .collect()
}

/// LLM-assisted check that each goal names the agents of the events it
/// covers. Calls that fail are skipped.
pub fn deep_agent_check(
    table: &HaraTable,
    gateway: &LlmGateway,
    templates: &TemplateSet,
    max_tokens: u32,
    transcript: &mut Vec<TranscriptEntry>,
) -> Vec<LintFinding> {
    let Some(template) = templates.get("agent_check") else {
        log::warn!("agent_check template missing; deep check skipped");
        return Vec::new();
    };
    let mut out = Vec::new();
    for goal in table.goals.iter().filter(|g| g.reuses.is_none()) {
        let events = goal
            .covered_events
            .iter()
            .filter_map(|id| table.row(id))
            .map(|row| {
                let scenario = table
                    .scenario(&row.scenario_ref)
                    .map(|s| s.core_summary.as_str())
                    .unwrap_or("");
                format!("- {}: {} / {}", row.id, scenario, row.consequence)
            })
            .collect::<Vec<_>>()
            .join("\n");
        let ctx = RenderContext::new()
            .set("goal_text", goal.text.clone())
            .set("events", events);
        let call = StepCall {
            gateway,
            template,
            row_key: Some(goal.id.clone()),
            max_tokens,
        };
        let answer = call.ask(&ctx, transcript, |p| {
            let fields = labeled_fields(p.result());
            match fields.get("consistent").map(|v| v.to_lowercase()) {
                Some(v) if v.starts_with("yes") => Ok((true, fields.get("agents").cloned().unwrap_or_default())),
                Some(v) if v.starts_with("no") => Ok((false, fields.get("agents").cloned().unwrap_or_default())),
                _ => Err("expected `Consistent: yes|no`".to_string()),
            }
        });
        match answer {
            Ok(a) if !a.value.0 => {
                let mut targets = vec![goal.id.clone()];
                targets.extend(goal.covered_events.iter().cloned());
                out.push(LintFinding {
                    rule_id: AGENT_RULE.to_string(),
                    level: LintLevel::Warning,
                    snippet: goal.text.clone(),
                    message: format!("goal agents differ from the covered events: {}", a.value.1),
                    targets,
                });
            }
            Ok(_) => {}
            Err(e) => log::warn!("agent check for {} skipped: {e}", goal.id),
        }
    }
    out
}
