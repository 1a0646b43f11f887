use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use hara_core::model::{GoalStatus, HaraTable, Strategy, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionKind {
    AcceptGoal,
    RejectGoal,
    AdoptReused,
    PreferStrategy,
    ResolveRedundancy,
    Comment,
    Verdict,
}

impl DecisionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DecisionKind::AcceptGoal => "accept_goal",
            DecisionKind::RejectGoal => "reject_goal",
            DecisionKind::AdoptReused => "adopt_reused",
            DecisionKind::PreferStrategy => "prefer_strategy",
            DecisionKind::ResolveRedundancy => "resolve_redundancy",
            DecisionKind::Comment => "comment",
            DecisionKind::Verdict => "verdict",
        }
    }
}

impl fmt::Display for DecisionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    KeepA,
    KeepB,
    MergeNote,
}

/// Kind-specific fields, checked against the kind when a decision is posted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DecisionPayload {
    Verdict { criterion: char, raw_score: u8 },
    Strategy { strategy: Strategy },
    Resolution {
        other: String,
        resolution: Resolution,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        note: Option<String>,
    },
    Comment { text: String },
    None {},
}

/// Request body of `POST /decisions`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewDecision {
    pub target: String,
    pub kind: DecisionKind,
    #[serde(default)]
    pub payload: Value,
    pub reviewer: String,
}

/// One line of `decisions.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewDecision {
    pub id: String,
    pub target: String,
    pub kind: DecisionKind,
    pub payload: DecisionPayload,
    pub reviewer: String,
    pub at: DateTime<Utc>,
}

impl ReviewDecision {
    pub fn verdict(&self) -> Option<Verdict> {
        match (self.kind, &self.payload) {
            (DecisionKind::Verdict, DecisionPayload::Verdict { criterion, raw_score }) => Some(Verdict {
                criterion: *criterion,
                reviewer: self.reviewer.clone(),
                raw_score: *raw_score,
            }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct ValidationError(pub String);

fn invalid<T>(msg: impl Into<String>) -> Result<T, ValidationError> {
    Err(ValidationError(msg.into()))
}

fn payload<T: serde::de::DeserializeOwned>(kind: DecisionKind, raw: &Value) -> Result<T, ValidationError> {
    serde_json::from_value(raw.clone()).map_err(|e| ValidationError(format!("payload for {kind}: {e}")))
}

impl NewDecision {
    /// Check the target against the run and normalize the payload.
    pub fn validate(&self, table: &HaraTable) -> Result<DecisionPayload, ValidationError> {
        if self.reviewer.trim().is_empty() {
            return invalid("reviewer must not be empty");
        }
        let goal = table.goal(&self.target);
        let row = table.row(&self.target);
        match self.kind {
            DecisionKind::AcceptGoal | DecisionKind::RejectGoal | DecisionKind::AdoptReused => {
                let Some(goal) = goal else {
                    return invalid(format!("{} needs a goal id, got {:?}", self.kind, self.target));
                };
                if self.kind == DecisionKind::AdoptReused && goal.status != GoalStatus::ReusedExisting {
                    return invalid(format!("{} is not a reused goal", goal.id));
                }
                no_payload(self.kind, &self.payload)
            }
            DecisionKind::PreferStrategy => {
                let Some(row) = row else {
                    return invalid(format!("prefer_strategy needs an event id, got {:?}", self.target));
                };
                #[derive(Deserialize)]
                #[serde(deny_unknown_fields)]
                struct P {
                    strategy: Strategy,
                }
                let p: P = payload(self.kind, &self.payload)?;
                if !table.goals_for_row(&row.id).any(|g| g.strategy == p.strategy) {
                    return invalid(format!("{} has no {} goal", row.id, p.strategy));
                }
                Ok(DecisionPayload::Strategy { strategy: p.strategy })
            }
            DecisionKind::ResolveRedundancy => {
                if goal.is_none() {
                    return invalid(format!("resolve_redundancy needs a goal id, got {:?}", self.target));
                }
                #[derive(Deserialize)]
                #[serde(deny_unknown_fields)]
                struct P {
                    other: String,
                    resolution: Resolution,
                    #[serde(default)]
                    note: Option<String>,
                }
                let p: P = payload(self.kind, &self.payload)?;
                let pair = |a: &str, b: &str| {
                    (a == self.target && b == p.other) || (a == p.other && b == self.target)
                };
                if !table.redundancy_findings.iter().any(|f| pair(&f.goal_a, &f.goal_b)) {
                    return invalid(format!("no redundancy finding between {} and {}", self.target, p.other));
                }
                let note = p.note.filter(|n| !n.trim().is_empty());
                if p.resolution == Resolution::MergeNote && note.is_none() {
                    return invalid("merge_note needs a note");
                }
                Ok(DecisionPayload::Resolution { other: p.other, resolution: p.resolution, note })
            }
            DecisionKind::Comment => {
                if goal.is_none() && row.is_none() && self.target != table.item_ref {
                    return invalid(format!("unknown target {:?}", self.target));
                }
                #[derive(Deserialize)]
                #[serde(deny_unknown_fields)]
                struct P {
                    text: String,
                }
                let p: P = payload(self.kind, &self.payload)?;
                if p.text.trim().is_empty() {
                    return invalid("comment text must not be empty");
                }
                Ok(DecisionPayload::Comment { text: p.text })
            }
            DecisionKind::Verdict => {
                if self.target != table.item_ref {
                    return invalid(format!("verdicts target the item {:?}, got {:?}", table.item_ref, self.target));
                }
                #[derive(Deserialize)]
                #[serde(deny_unknown_fields)]
                struct P {
                    criterion: char,
                    raw_score: u8,
                }
                let p: P = payload(self.kind, &self.payload)?;
                let v = Verdict { criterion: p.criterion, reviewer: self.reviewer.clone(), raw_score: p.raw_score };
                v.validate().map_err(ValidationError)?;
                Ok(DecisionPayload::Verdict { criterion: p.criterion, raw_score: p.raw_score })
            }
        }
    }
}

fn no_payload(kind: DecisionKind, raw: &Value) -> Result<DecisionPayload, ValidationError> {
    match raw {
        Value::Null => Ok(DecisionPayload::None {}),
        Value::Object(m) if m.is_empty() => Ok(DecisionPayload::None {}),
        _ => invalid(format!("{kind} takes no payload")),
    }
}
