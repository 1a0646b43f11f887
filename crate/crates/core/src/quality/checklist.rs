use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::consistency::check_consistency;
use super::lint::{lint_goal, lint_summary, rule, LintRuleSet};
use crate::model::{ChecklistCriterion, HaraTable, LintFinding, LintLevel};

const CRITERIA: [(char, &str); 10] = [
    ('a', "Considering the Operation Design Domain and the output under analysis (i.e., lateral motion request), have all failure modes or functional insufficiencies (i.e., Commission and Omission) been identified in the HARA?"),
    ('b', "Have all relevant hazardous events been identified? (e.g., the relevant scenario elements in ODD are covered for both Omission and Commission)"),
    ('c', "Have all Hazardous Events been correctly formulated to present the consequence of the identified malfunction (or functional insufficiency) in the specified scenario?"),
    ('d', "Are the safety mechanisms excluded from the analysis? (e.g., no assumption is made on the possible internal mechanisms to avoid the hazardous events)"),
    ('e', "Are all assigned severities corresponding with the rational?"),
    ('f', "Is there any inconsistency within the results of HARA? (e.g., the severity classifications are different for the same consequence.)"),
    ('g', "Are there safety goals formulated for each hazardous events with severity higher than S0?"),
    ('h', "Does the safety goal cover the hazardous event? (i.e., the safety goal is enough to avoid or mitigate the hazardous event)"),
    ('i', "Have all safety goals been formulated in a correct way? (e.g., Unambiguous)"),
    ('j', "Is the HARA contributing to the achievement of functional safety or SOTIF?"),
];

/// The five answer options for each criterion.
pub const SCORE_SCALE: [(u8, &str); 5] = [
    (1, "Not fulfilled systematically in all rows of HARA"),
    (2, "Not fulfilled in most of the rows of HARA"),
    (3, "No opinion"),
    (4, "Fulfilled in most of the rows of HARA"),
    (5, "Fulfilled in all rows of HARA"),
];

pub fn checklist_criteria() -> Vec<ChecklistCriterion> {
    CRITERIA
        .iter()
        .map(|(letter, text)| ChecklistCriterion { letter: *letter, text: text.to_string() })
        .collect()
}

/// Evidence slot. `machine_signal` is absent for human-only criteria;
/// `human_judgment` is left blank for the reviewer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub machine_signal: Option<String>,
    pub findings: Vec<LintFinding>,
    pub human_judgment: String,
}

impl Evidence {
    fn human_only() -> Self {
        Self { machine_signal: None, findings: Vec::new(), human_judgment: String::new() }
    }

    fn machine(signal: String, findings: Vec<LintFinding>) -> Self {
        Self { machine_signal: Some(signal), findings, human_judgment: String::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChecklistEntry {
    pub criterion: ChecklistCriterion,
    pub evidence: Evidence,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleOption {
    pub score: u8,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewPackage {
    pub item_ref: String,
    pub criteria: Vec<ChecklistEntry>,
    pub scale: Vec<ScaleOption>,
}

fn goal_lint(table: &HaraTable, rules: &LintRuleSet) -> Vec<LintFinding> {
    table
        .goals
        .iter()
        .flat_map(|g| {
            lint_goal(&g.text, rules).into_iter().map(move |mut f| {
                f.targets = vec![g.id.clone()];
                f
            })
        })
        .collect()
}

fn gate_evidence(table: &HaraTable) -> Evidence {
    let violations = table.check_goal_coverage();
    if violations.is_empty() {
        return Evidence::machine("machine-verified: pass".to_string(), Vec::new());
    }
    let findings = violations
        .iter()
        .map(|v| LintFinding {
            rule_id: "gate-soundness".to_string(),
            level: LintLevel::Error,
            snippet: String::new(),
            message: v.to_string(),
            targets: Vec::new(),
        })
        .collect();
    Evidence::machine(format!("machine-verified: fail ({} violations)", violations.len()), findings)
}

/// The ten review criteria with machine evidence for d, f, g and i.
pub fn checklist_scaffold(table: &HaraTable, rules: &LintRuleSet, stop_words: &[String]) -> ReviewPackage {
    let lint = goal_lint(table, rules);
    let criteria = checklist_criteria()
        .into_iter()
        .map(|criterion| {
            let evidence = match criterion.letter {
                'd' => {
                    let tech: Vec<LintFinding> = lint
                        .iter()
                        .filter(|f| f.rule_id == rule::TECHNOLOGY_TERM)
                        .cloned()
                        .collect();
                    Evidence::machine(format!("{} technology-term warnings", tech.len()), tech)
                }
                'f' => {
                    let found = check_consistency(table, stop_words);
                    let signal = if found.is_empty() {
                        "machine-verified: no inconsistent severities".to_string()
                    } else {
                        format!("{} groups with inconsistent severities", found.len())
                    };
                    Evidence::machine(signal, found)
                }
                'g' => gate_evidence(table),
                'i' => Evidence::machine(
                    format!("{} goals linted: {}", table.goals.len(), lint_summary(&lint)),
                    lint.clone(),
                ),
                _ => Evidence::human_only(),
            };
            ChecklistEntry { criterion, evidence }
        })
        .collect();
    ReviewPackage {
        item_ref: table.item_ref.clone(),
        criteria,
        scale: SCORE_SCALE
            .iter()
            .map(|(score, label)| ScaleOption { score: *score, label: label.to_string() })
            .collect(),
    }
}

impl ReviewPackage {
    /// Read-only text rendering for reviewers.
    pub fn render_text(&self) -> String {
        let mut out = format!("Review checklist for {}\n\nScale:\n", self.item_ref);
        for s in &self.scale {
            let _ = writeln!(out, "  {}: {}", s.score, s.label);
        }
        for entry in &self.criteria {
            let _ = write!(out, "\n{}. {}\n", entry.criterion.letter, entry.criterion.text);
            match &entry.evidence.machine_signal {
                Some(signal) => {
                    let _ = writeln!(out, "   Machine evidence: {signal}");
                    for f in &entry.evidence.findings {
                        let target = if f.targets.is_empty() {
                            String::new()
                        } else {
                            format!("[{}] ", f.targets.join(", "))
                        };
                        let _ = writeln!(out, "     - {target}{}: {}", f.rule_id, f.message);
                    }
                }
                None => out.push_str("   Machine evidence: none (human judgment)\n"),
            }
            out.push_str("   Score (1-5): ____\n   Comment: ____\n");
        }
        out
    }
}
