use std::collections::BTreeMap;
use std::future::Future;
use std::net::{Ipv4Addr, SocketAddr};
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::net::TcpListener;

use hara_core::model::{
    AggregatedScore, HaraTable, HazardousEvent, LintFinding, Malfunction, OperationalScenario, RedundancyFinding,
    SafetyGoal, Strategy,
};
use hara_core::quality::{aggregate_all, ScoreError};

use crate::decision::NewDecision;
use crate::state::ReviewState;
use crate::store::{ReviewRun, StoreError};

/// One row with everything a reviewer needs next to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowView {
    pub row: HazardousEvent,
    pub scenario: Option<OperationalScenario>,
    pub malfunction: Option<Malfunction>,
    pub goals: Vec<SafetyGoal>,
    pub lint_findings: Vec<LintFinding>,
    pub redundancy_findings: Vec<RedundancyFinding>,
    pub preferred_strategy: BTreeMap<String, Strategy>,
    pub comments: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScoreView {
    Score(AggregatedScore),
    NoData { criterion: char, no_data: bool, n_excluded: usize },
}

pub fn scores(state: &ReviewState) -> BTreeMap<char, ScoreView> {
    aggregate_all(&state.verdicts())
        .into_iter()
        .map(|(c, r)| {
            let view = match r {
                Ok(s) => ScoreView::Score(s),
                Err(ScoreError::NoData { n_excluded, .. }) => ScoreView::NoData { criterion: c, no_data: true, n_excluded },
                Err(ScoreError::OutOfRange(v)) => unreachable!("verdict {v} passed validation"),
            };
            (c, view)
        })
        .collect()
}

fn error(status: StatusCode, msg: impl ToString) -> Response {
    (status, Json(json!({ "error": msg.to_string() }))).into_response()
}

fn row_view(table: &HaraTable, state: &ReviewState, consistency: &[LintFinding], id: &str) -> Option<RowView> {
    let row = table.row(id)?.clone();
    let goals: Vec<SafetyGoal> = state.overlay(table).goals.into_iter().filter(|g| g.covered_events.contains(&row.id)).collect();
    let mut lint_findings: Vec<LintFinding> = goals
        .iter()
        .flat_map(|g| {
            g.lint_findings.iter().cloned().map(|mut f| {
                if f.targets.is_empty() {
                    f.targets = vec![g.id.clone()];
                }
                f
            })
        })
        .collect();
    lint_findings.extend(consistency.iter().filter(|f| f.targets.contains(&row.id)).cloned());
    let redundancy_findings = table
        .redundancy_findings
        .iter()
        .filter(|f| goals.iter().any(|g| g.id == f.goal_a || g.id == f.goal_b))
        .cloned()
        .collect();
    Some(RowView {
        scenario: table.scenario(&row.scenario_ref).cloned(),
        malfunction: table.malfunction(&row.malfunction_ref).cloned(),
        preferred_strategy: state.preferred_strategy.get(&row.id).cloned().unwrap_or_default(),
        comments: state.comments.get(&row.id).cloned().unwrap_or_default(),
        row,
        goals,
        lint_findings,
        redundancy_findings,
    })
}

type Shared = State<Arc<ReviewRun>>;

async fn get_table(State(run): Shared) -> Json<HaraTable> {
    Json(run.state().overlay(run.table()))
}

async fn get_row(State(run): Shared, Path(id): Path<String>) -> Response {
    match row_view(run.table(), &run.state(), run.consistency_findings(), &id) {
        Some(v) => Json(v).into_response(),
        None => error(StatusCode::NOT_FOUND, format!("no row {id:?}")),
    }
}

async fn post_decision(State(run): Shared, body: Result<Json<NewDecision>, JsonRejection>) -> Response {
    let Json(new) = match body {
        Ok(b) => b,
        Err(JsonRejection::JsonDataError(e)) => return error(StatusCode::UNPROCESSABLE_ENTITY, e.body_text()),
        Err(e) => return error(e.status(), e.body_text()),
    };
    match tokio::task::spawn_blocking(move || run.append(new)).await {
        Ok(Ok(d)) => (StatusCode::CREATED, Json(json!({ "id": d.id, "decision": d }))).into_response(),
        Ok(Err(StoreError::Invalid(e))) => error(StatusCode::UNPROCESSABLE_ENTITY, e),
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

async fn get_decisions(State(run): Shared) -> Response {
    Json(run.decisions()).into_response()
}

async fn get_state(State(run): Shared) -> Json<ReviewState> {
    Json(run.state())
}

async fn get_scores(State(run): Shared) -> Json<BTreeMap<char, ScoreView>> {
    Json(scores(&run.state()))
}

async fn get_package(State(run): Shared) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], run.review_package()).into_response()
}

pub fn router(run: Arc<ReviewRun>) -> Router {
    Router::new()
        .route("/hara", get(get_table))
        .route("/hara/rows/{id}", get(get_row))
        .route("/decisions", post(post_decision).get(get_decisions))
        .route("/state", get(get_state))
        .route("/scores", get(get_scores))
        .route("/export/review-package", get(get_package))
        .with_state(run)
}

/// Bind 127.0.0.1 only. Port 0 picks a free port.
pub async fn bind_localhost(port: u16) -> std::io::Result<TcpListener> {
    TcpListener::bind(SocketAddr::from((Ipv4Addr::LOCALHOST, port))).await
}

/// Serve until `shutdown` resolves, then finish in-flight requests.
pub async fn serve(
    listener: TcpListener,
    run: Arc<ReviewRun>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(run)).with_graceful_shutdown(shutdown).await
}
