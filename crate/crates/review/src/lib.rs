//! Review service for a completed run: serves the table, records reviewer
//! decisions in an append-only `decisions.jsonl`, and derives review state
//! by folding over that log.

mod decision;
mod server;
mod state;
mod store;

pub use decision::{DecisionKind, DecisionPayload, NewDecision, Resolution, ReviewDecision, ValidationError};
pub use server::{bind_localhost, router, serve, RowView, ScoreView};
pub use state::{fold, GoalReview, ReviewState};
pub use store::{ReviewRun, StoreError, DECISIONS};
