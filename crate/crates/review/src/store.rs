use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, MutexGuard};

use chrono::Utc;
use serde::Serialize;
use thiserror::Error;

use hara_core::model::{make_id, HaraTable, ItemDefinition, LintFinding};
use hara_core::pipeline::{load_run, PipelineConfig, TABLE};
use hara_core::quality::{check_consistency, checklist_scaffold, ReviewPackage};

use crate::decision::{NewDecision, ReviewDecision, ValidationError};
use crate::server::{scores, ScoreView};
use crate::state::{fold, ReviewState};

pub const DECISIONS: &str = "decisions.jsonl";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0} is not a completed run: {1}")]
    NotARun(PathBuf, String),
    #[error("{path} line {line}: {reason}")]
    CorruptLog { path: PathBuf, line: usize, reason: String },
    #[error(transparent)]
    Invalid(#[from] ValidationError),
}

struct Log {
    file: File,
    decisions: Vec<ReviewDecision>,
}

/// A completed run opened for review. The pipeline artifacts are only read.
pub struct ReviewRun {
    dir: PathBuf,
    item: ItemDefinition,
    config: PipelineConfig,
    table: HaraTable,
    consistency: Vec<LintFinding>,
    log: Mutex<Log>,
}

#[derive(Serialize)]
struct PackageExport<'a> {
    item: &'a ItemDefinition,
    table: &'a HaraTable,
    checklist: ReviewPackage,
    decisions: &'a [ReviewDecision],
    state: ReviewState,
    scores: std::collections::BTreeMap<char, ScoreView>,
}

impl ReviewRun {
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        let not_run = |e: String| StoreError::NotARun(dir.to_path_buf(), e);
        let (item, config) = load_run(dir).map_err(|e| not_run(e.to_string()))?;
        let table_path = dir.join(TABLE);
        let raw = fs::read(&table_path).map_err(|e| not_run(format!("{TABLE}: {e}")))?;
        let table: HaraTable = serde_json::from_slice(&raw).map_err(|e| not_run(format!("{TABLE}: {e}")))?;
        let consistency = check_consistency(&table, &config.stop_words);

        let log_path = dir.join(DECISIONS);
        let io = |source| StoreError::Io { path: log_path.clone(), source };
        let mut decisions = Vec::new();
        if log_path.exists() {
            let text = fs::read_to_string(&log_path).map_err(io)?;
            for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let d = serde_json::from_str(line).map_err(|e| StoreError::CorruptLog {
                    path: log_path.clone(),
                    line: i + 1,
                    reason: e.to_string(),
                })?;
                decisions.push(d);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&log_path).map_err(io)?;
        Ok(ReviewRun { dir: dir.to_path_buf(), item, config, table, consistency, log: Mutex::new(Log { file, decisions }) })
    }

    fn log(&self) -> MutexGuard<'_, Log> {
        self.log.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn table(&self) -> &HaraTable {
        &self.table
    }

    pub fn consistency_findings(&self) -> &[LintFinding] {
        &self.consistency
    }

    pub fn decisions(&self) -> Vec<ReviewDecision> {
        self.log().decisions.clone()
    }

    pub fn state(&self) -> ReviewState {
        fold(&self.log().decisions)
    }

    /// Validate, assign the next id, append one line and fsync.
    pub fn append(&self, new: NewDecision) -> Result<ReviewDecision, StoreError> {
        let payload = new.validate(&self.table)?;
        let mut log = self.log();
        let decision = ReviewDecision {
            id: make_id("D", log.decisions.len()),
            target: new.target,
            kind: new.kind,
            payload,
            reviewer: new.reviewer,
            at: Utc::now(),
        };
        let mut line = serde_json::to_string(&decision).expect("decision serializes");
        line.push('\n');
        let path = self.dir.join(DECISIONS);
        let io = |source| StoreError::Io { path: path.clone(), source };
        log.file.write_all(line.as_bytes()).map_err(io)?;
        log.file.sync_data().map_err(io)?;
        log.decisions.push(decision.clone());
        Ok(decision)
    }

    /// Item, table, checklist, decisions, derived state and scores as one
    /// JSON document. Same log, same bytes.
    pub fn review_package(&self) -> Vec<u8> {
        let log = self.log();
        let state = fold(&log.decisions);
        let export = PackageExport {
            item: &self.item,
            table: &self.table,
            checklist: checklist_scaffold(&self.table, &self.config.lint, &self.config.stop_words),
            decisions: &log.decisions,
            scores: scores(&state),
            state,
        };
        let mut out = serde_json::to_vec_pretty(&export).expect("package serializes");
        out.push(b'\n');
        out
    }
}
