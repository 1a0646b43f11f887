//! Deterministic checks over goals and tables, the review checklist and
//! expert-score aggregation.

mod checklist;
mod consistency;
mod lint;
mod scores;

pub use checklist::{checklist_criteria, checklist_scaffold, ChecklistEntry, Evidence, ReviewPackage, SCORE_SCALE};
pub use consistency::{check_consistency, deep_agent_check, CONSISTENCY_RULE};
pub use lint::{default_vague_phrases, lint_goal, lint_summary, LintRuleSet, rule};
pub use scores::{aggregate_all, aggregate_scores, remap, ScoreError};
