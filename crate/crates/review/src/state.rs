use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use hara_core::model::{GoalStatus, HaraTable, Strategy, Verdict};

use crate::decision::{DecisionKind, DecisionPayload, Resolution, ReviewDecision};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalReview {
    /// Status from the most recent accept, reject or adopt decision.
    pub status: GoalStatus,
    pub by_reviewer: BTreeMap<String, GoalStatus>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolutionState {
    pub resolution: Resolution,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Review state derived from the decision log.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewState {
    pub decisions: usize,
    pub goals: BTreeMap<String, GoalReview>,
    /// event id -> reviewer -> preferred strategy
    pub preferred_strategy: BTreeMap<String, BTreeMap<String, Strategy>>,
    /// "goal_a|goal_b" with ids sorted -> reviewer -> resolution
    pub redundancy: BTreeMap<String, BTreeMap<String, ResolutionState>>,
    /// target -> reviewer -> comment
    pub comments: BTreeMap<String, BTreeMap<String, String>>,
    /// criterion -> reviewer -> raw score
    pub verdicts: BTreeMap<char, BTreeMap<String, u8>>,
}

impl ReviewState {
    pub fn verdicts(&self) -> Vec<Verdict> {
        self.verdicts
            .iter()
            .flat_map(|(c, by)| {
                by.iter().map(|(r, s)| Verdict { criterion: *c, reviewer: r.clone(), raw_score: *s })
            })
            .collect()
    }

    /// The table with goal statuses replaced by review outcomes.
    pub fn overlay(&self, table: &HaraTable) -> HaraTable {
        let mut out = table.clone();
        for goal in &mut out.goals {
            if let Some(r) = self.goals.get(&goal.id) {
                goal.status = r.status;
            }
        }
        out
    }
}

pub fn pair_key(a: &str, b: &str) -> String {
    if a <= b {
        format!("{a}|{b}")
    } else {
        format!("{b}|{a}")
    }
}

/// Replay `log` from empty. Later decisions replace earlier ones by the same
/// reviewer on the same subject.
pub fn fold(log: &[ReviewDecision]) -> ReviewState {
    let mut s = ReviewState { decisions: log.len(), ..Default::default() };
    for d in log {
        let reviewer = d.reviewer.clone();
        match (d.kind, &d.payload) {
            (DecisionKind::AcceptGoal | DecisionKind::RejectGoal | DecisionKind::AdoptReused, _) => {
                let status = if d.kind == DecisionKind::RejectGoal { GoalStatus::Rejected } else { GoalStatus::Accepted };
                let entry = s
                    .goals
                    .entry(d.target.clone())
                    .or_insert_with(|| GoalReview { status, by_reviewer: BTreeMap::new() });
                entry.status = status;
                entry.by_reviewer.insert(reviewer, status);
            }
            (DecisionKind::PreferStrategy, DecisionPayload::Strategy { strategy }) => {
                s.preferred_strategy.entry(d.target.clone()).or_default().insert(reviewer, *strategy);
            }
            (DecisionKind::ResolveRedundancy, DecisionPayload::Resolution { other, resolution, note }) => {
                s.redundancy
                    .entry(pair_key(&d.target, other))
                    .or_default()
                    .insert(reviewer, ResolutionState { resolution: *resolution, note: note.clone() });
            }
            (DecisionKind::Comment, DecisionPayload::Comment { text }) => {
                s.comments.entry(d.target.clone()).or_default().insert(reviewer, text.clone());
            }
            (DecisionKind::Verdict, DecisionPayload::Verdict { criterion, raw_score }) => {
                s.verdicts.entry(*criterion).or_default().insert(reviewer, *raw_score);
            }
            _ => {}
        }
    }
    s
}
