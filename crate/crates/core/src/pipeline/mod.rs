//! Staged, checkpointed execution from an item definition to a HARA table.
//!
//! Every step reads its inputs from the run directory and writes one
//! artifact plus a checkpoint, so any prefix of completed steps can be
//! resumed.

mod checkpoint;
mod config;
mod goals;
mod steps;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::Utc;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

pub use checkpoint::{checkpoint_path, read_checkpoint, sha256_hex, write_atomic, Checkpoint};
pub use config::{Backend, ConfigError, LlmSettings, PipelineConfig, SelectionMode};
pub use goals::{
    find_redundancies, intent_text, specify_safety_goals, BufferEntry, GoalBuffer, GoalContext, GoalsArtifact,
    RedundancyCheck, RedundancyOutcome,
};
pub use steps::{
    assess_severity, classify, cluster_and_select, combine, enumerate_malfunctions, formulate, gate_for_goals,
    generate_scenarios, greedy_select, malfunction_stubs, parse_scenario_blocks, ParsedScenario, RowFailure, RowRefs,
    StepArtifact, StepEnv, StepError,
};

use crate::llm::{LlmGateway, TranscriptEntry};
use crate::model::{
    guideword_catalogue, EventState, GuideWord, HaraTable, HazardousEvent, ItemDefinition, LintFinding, Malfunction,
    OperationalScenario, Provenance,
};
use crate::prompt::{Glossary, TemplateError, TemplateSet};
use crate::quality::{check_consistency, deep_agent_check};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Scenarios,
    Selection,
    Malfunctions,
    Combine,
    Formulate,
    Severity,
    Gate,
    Goals,
    Render,
}

impl Step {
    pub const ALL: [Step; 9] = [
        Step::Scenarios,
        Step::Selection,
        Step::Malfunctions,
        Step::Combine,
        Step::Formulate,
        Step::Severity,
        Step::Gate,
        Step::Goals,
        Step::Render,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Step::Scenarios => "scenarios",
            Step::Selection => "selection",
            Step::Malfunctions => "malfunctions",
            Step::Combine => "combine",
            Step::Formulate => "formulate",
            Step::Severity => "severity",
            Step::Gate => "gate",
            Step::Goals => "goals",
            Step::Render => "render",
        }
    }

    /// Files the step writes into the run directory.
    pub fn outputs(self) -> &'static [&'static str] {
        match self {
            Step::Scenarios => &[SCENARIOS],
            Step::Selection => &[SELECTED],
            Step::Malfunctions => &[MALFUNCTIONS],
            Step::Combine => &[DRAFTS],
            Step::Formulate => &[FORMULATED],
            Step::Severity => &[EVENTS],
            Step::Gate => &[GATE],
            Step::Goals => &[GOALS],
            Step::Render => &[TABLE, REPORT],
        }
    }

    /// Files the step reads.
    fn inputs(self) -> &'static [&'static str] {
        match self {
            Step::Scenarios | Step::Malfunctions => &[ITEM],
            Step::Selection => &[SCENARIOS],
            Step::Combine => &[SELECTED, MALFUNCTIONS],
            Step::Formulate => &[ITEM, SELECTED, MALFUNCTIONS, DRAFTS],
            Step::Severity => &[ITEM, SELECTED, MALFUNCTIONS, FORMULATED],
            Step::Gate => &[EVENTS],
            Step::Goals => &[ITEM, SELECTED, MALFUNCTIONS, EVENTS, GATE],
            Step::Render => &[ITEM, SELECTED, MALFUNCTIONS, EVENTS, GOALS],
        }
    }

    /// Templates whose wording and temperature affect the step.
    fn templates(self) -> &'static [&'static str] {
        match self {
            Step::Scenarios => &["scenarios"],
            Step::Selection => &["selection"],
            Step::Malfunctions => &["malfunctions"],
            Step::Formulate => &["hazardous_event"],
            Step::Severity => &["severity"],
            Step::Goals => &["safety_goal", "redundancy"],
            Step::Render => &["agent_check"],
            Step::Combine | Step::Gate => &[],
        }
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Step {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Step::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown step {s:?}"))
    }
}

pub const ITEM: &str = "item.json";
pub const CONFIG: &str = "config.toml";
pub const SCENARIOS: &str = "scenarios.json";
pub const SELECTED: &str = "selected_scenarios.json";
pub const MALFUNCTIONS: &str = "malfunctions.json";
pub const DRAFTS: &str = "drafts.json";
pub const FORMULATED: &str = "formulated.json";
pub const EVENTS: &str = "events.json";
pub const GATE: &str = "gate.json";
pub const GOALS: &str = "goals.json";
pub const TABLE: &str = "table.json";
pub const REPORT: &str = "report.json";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Item(#[from] crate::model::ItemError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("corrupt checkpoint for step {step}: {reason}")]
    CorruptCheckpoint { step: Step, reason: String },
    #[error("pipeline failed at step {step}: {reason}")]
    Failed { step: Step, reason: String },
    #[error("step {step}: {source}")]
    Step { step: Step, source: StepError },
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes).map_err(|source| PipelineError::Json { path: path.to_path_buf(), source })
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("artifact types serialize");
    bytes.push(b'\n');
    bytes
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    PipelineFailed,
}

/// Summary written next to the table, on success and on failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_step: Option<Step>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub rows: usize,
    pub assessed_rows: usize,
    pub goals: usize,
    pub failed_rows: Vec<RowFailure>,
    pub warnings: Vec<String>,
    pub consistency_findings: Vec<LintFinding>,
    pub invariant_violations: Vec<String>,
    /// Backend attempts recorded in each step's transcript.
    pub llm_calls: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Stop after this step completes, as if interrupted.
    pub stop_after: Option<Step>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub run_dir: PathBuf,
    pub table: Option<HaraTable>,
    pub report: Option<RunReport>,
    pub executed: Vec<Step>,
    pub skipped: Vec<Step>,
    /// Backend attempts made during this invocation.
    pub llm_calls: usize,
}

/// Configured pipeline bound to one LLM gateway.
pub struct Pipeline {
    cfg: PipelineConfig,
    templates: TemplateSet,
    catalogue: Vec<GuideWord>,
    gateway: LlmGateway,
    pool: rayon::ThreadPool,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig, gateway: LlmGateway) -> Result<Self, PipelineError> {
        cfg.validate()?;
        let catalogue = guideword_catalogue(cfg.guide_word_extensions);
        let glossary = Glossary {
            guide_words: catalogue.clone(),
            forbidden_phrases: cfg.lint.vague_phrases.clone(),
            ..Glossary::default()
        }
        .with_overrides(&cfg.key_terms);
        let mut templates = match &cfg.templates_dir {
            Some(dir) => TemplateSet::load_dir(dir, &glossary)?,
            None => TemplateSet::builtin(&glossary)?,
        };
        for (step, t) in &cfg.temperatures {
            if !templates.set_temperature(step, *t) {
                log::warn!("temperature override for unknown step {step:?} ignored");
            }
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.parallelism)
            .build()
            .map_err(|e| PipelineError::Pool(e.to_string()))?;
        Ok(Self { cfg, templates, catalogue, gateway, pool })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    pub fn gateway(&self) -> &LlmGateway {
        &self.gateway
    }

    /// Configuration and prompt assets that influence `step`.
    fn fingerprint(&self, step: Step) -> String {
        let c = &self.cfg;
        let settings = match step {
            Step::Scenarios => json!({ "target": c.scenarios_target_count }),
            Step::Selection => json!({ "k": c.diverse_selection_count, "mode": c.selection_mode }),
            Step::Malfunctions => json!({ "catalogue": self.catalogue }),
            Step::Goals => json!({
                "strategies": c.strategies(),
                "threshold": c.redundancy_threshold,
                "stop_words": c.stop_words,
                "lint": c.lint,
            }),
            Step::Render => json!({
                "stop_words": c.stop_words,
                "lint": c.lint,
                "deep": c.deep_consistency_check,
            }),
            Step::Combine | Step::Formulate | Step::Severity | Step::Gate => json!({}),
        };
        let templates: Vec<_> = step
            .templates()
            .iter()
            .filter_map(|id| self.templates.get(id))
            .map(|t| json!({ "id": t.step_id, "version": t.version, "temperature": t.temperature }))
            .collect();
        let llm = if step.templates().is_empty() {
            json!(null)
        } else {
            json!({ "model": self.gateway.model_name(), "max_tokens": c.llm.max_tokens })
        };
        sha256_hex(json!({ "settings": settings, "templates": templates, "llm": llm }).to_string().as_bytes())
    }

    fn input_hashes(&self, step: Step, run_dir: &Path) -> Result<BTreeMap<String, String>, PipelineError> {
        let mut out = BTreeMap::new();
        for name in step.inputs() {
            let path = run_dir.join(name);
            let bytes = fs::read(&path).map_err(io_err(&path))?;
            out.insert(name.to_string(), sha256_hex(&bytes));
        }
        out.insert("config".to_string(), self.fingerprint(step));
        Ok(out)
    }

    /// Run (or continue) the pipeline for `item` in `run_dir`.
    pub fn run(&self, item: &ItemDefinition, run_dir: &Path, opts: &RunOptions) -> Result<RunOutcome, PipelineError> {
        item.validate().map_err(crate::model::ItemError::Invalid)?;
        for dir in [run_dir.to_path_buf(), run_dir.join("checkpoints"), run_dir.join("transcripts")] {
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        }
        write_if_changed(&run_dir.join(ITEM), &to_json(item))?;
        write_if_changed(&run_dir.join(CONFIG), self.cfg.to_toml()?.as_bytes())?;

        let calls_before = self.gateway.call_count();
        let mut outcome = RunOutcome {
            run_dir: run_dir.to_path_buf(),
            table: None,
            report: None,
            executed: Vec::new(),
            skipped: Vec::new(),
            llm_calls: 0,
        };
        let mut cascade = false;
        for step in Step::ALL {
            let inputs = self.input_hashes(step, run_dir)?;
            let existing = read_checkpoint(run_dir, step.as_str())
                .map_err(|reason| PipelineError::CorruptCheckpoint { step, reason })?;
            let valid = !cascade
                && existing.is_some_and(|cp| cp.input_hashes == inputs && cp.outputs_intact(run_dir));
            if valid {
                outcome.skipped.push(step);
            } else {
                cascade = true;
                let mut transcript = Vec::new();
                let result = self.execute(step, run_dir, &mut transcript);
                write_transcript(run_dir, step, &transcript)?;
                match result {
                    Ok(()) => {}
                    Err(PipelineError::Step { step, source: StepError::Empty { reason, .. } })
                    | Err(PipelineError::Step { step, source: StepError::Combine(reason) }) => {
                        let report = failure_report(run_dir, step, &reason)?;
                        write_atomic(&run_dir.join(REPORT), &to_json(&report)).map_err(io_err(run_dir))?;
                        return Err(PipelineError::Failed { step, reason });
                    }
                    Err(e) => return Err(e),
                }
                let mut output_hashes = BTreeMap::new();
                for name in step.outputs() {
                    let path = run_dir.join(name);
                    let bytes = fs::read(&path).map_err(io_err(&path))?;
                    output_hashes.insert(name.to_string(), sha256_hex(&bytes));
                }
                let cp = Checkpoint {
                    step_id: step.as_str().to_string(),
                    input_hashes: inputs,
                    output_artifacts: step.outputs().iter().map(|s| s.to_string()).collect(),
                    output_hashes,
                    completed_at: Utc::now(),
                };
                let path = checkpoint_path(run_dir, step.as_str());
                write_atomic(&path, &to_json(&cp)).map_err(io_err(&path))?;
                outcome.executed.push(step);
            }
            if opts.stop_after == Some(step) {
                break;
            }
        }
        outcome.llm_calls = self.gateway.call_count() - calls_before;
        if run_dir.join(TABLE).exists() && outcome.executed.len() + outcome.skipped.len() == Step::ALL.len() {
            outcome.table = Some(read_json(&run_dir.join(TABLE))?);
            outcome.report = Some(read_json(&run_dir.join(REPORT))?);
        }
        Ok(outcome)
    }

    fn env(&self) -> StepEnv<'_> {
        StepEnv { gateway: &self.gateway, templates: &self.templates, cfg: &self.cfg, pool: &self.pool }
    }

    fn execute(&self, step: Step, dir: &Path, transcript: &mut Vec<TranscriptEntry>) -> Result<(), PipelineError> {
        let env = self.env();
        let wrap = |source| PipelineError::Step { step, source };
        let item: ItemDefinition = read_json(&dir.join(ITEM))?;
        let write = |name: &str, bytes: Vec<u8>| {
            let path = dir.join(name);
            write_atomic(&path, &bytes).map_err(io_err(&path))
        };
        match step {
            Step::Scenarios => {
                let out = generate_scenarios(&env, &item, transcript).map_err(wrap)?;
                write(SCENARIOS, to_json(&out))
            }
            Step::Selection => {
                let all: StepArtifact<OperationalScenario> = read_json(&dir.join(SCENARIOS))?;
                let out = cluster_and_select(&env, &all.items, self.cfg.diverse_selection_count, transcript)
                    .map_err(wrap)?;
                write(SELECTED, to_json(&out))
            }
            Step::Malfunctions => {
                let out = enumerate_malfunctions(&env, &item, &self.catalogue, transcript).map_err(wrap)?;
                write(MALFUNCTIONS, to_json(&out))
            }
            Step::Combine => {
                let s: StepArtifact<OperationalScenario> = read_json(&dir.join(SELECTED))?;
                let m: StepArtifact<Malfunction> = read_json(&dir.join(MALFUNCTIONS))?;
                let drafts = combine(&s.items, &m.items).map_err(wrap)?;
                write(DRAFTS, to_json(&StepArtifact::new(drafts)))
            }
            Step::Formulate | Step::Severity => {
                let s: StepArtifact<OperationalScenario> = read_json(&dir.join(SELECTED))?;
                let m: StepArtifact<Malfunction> = read_json(&dir.join(MALFUNCTIONS))?;
                let refs = RowRefs { item: &item, scenarios: &s.items, malfunctions: &m.items };
                if step == Step::Formulate {
                    let drafts: StepArtifact<HazardousEvent> = read_json(&dir.join(DRAFTS))?;
                    let out = formulate(&env, &refs, &drafts.items, transcript).map_err(wrap)?;
                    write(FORMULATED, to_json(&out))
                } else {
                    let rows: StepArtifact<HazardousEvent> = read_json(&dir.join(FORMULATED))?;
                    let out = assess_severity(&env, &refs, &rows.items, transcript).map_err(wrap)?;
                    write(EVENTS, to_json(&out))
                }
            }
            Step::Gate => {
                let rows: StepArtifact<HazardousEvent> = read_json(&dir.join(EVENTS))?;
                write(GATE, to_json(&StepArtifact::new(gate_for_goals(&rows.items))))
            }
            Step::Goals => {
                let out = self.goals_step(&env, dir, &item, transcript)?;
                write(GOALS, to_json(&out))
            }
            Step::Render => {
                let (table, report) = self.render_step(dir, &item, transcript)?;
                write(TABLE, to_json(&table))?;
                write(REPORT, to_json(&report))
            }
        }
    }

    fn goals_step(
        &self,
        env: &StepEnv<'_>,
        dir: &Path,
        item: &ItemDefinition,
        transcript: &mut Vec<TranscriptEntry>,
    ) -> Result<GoalsArtifact, PipelineError> {
        let s: StepArtifact<OperationalScenario> = read_json(&dir.join(SELECTED))?;
        let m: StepArtifact<Malfunction> = read_json(&dir.join(MALFUNCTIONS))?;
        let rows: StepArtifact<HazardousEvent> = read_json(&dir.join(EVENTS))?;
        let gate: StepArtifact<String> = read_json(&dir.join(GATE))?;
        let refs = RowRefs { item, scenarios: &s.items, malfunctions: &m.items };
        let gc = GoalContext {
            env,
            refs: &refs,
            rules: &self.cfg.lint,
            redundancy: RedundancyCheck {
                gateway: Some(&self.gateway),
                template: self.templates.get("redundancy"),
                threshold: self.cfg.redundancy_threshold,
                stop_words: &self.cfg.stop_words,
                max_tokens: self.cfg.llm.max_tokens,
            },
        };
        let strategies = self.cfg.strategies();
        let mut buffer = GoalBuffer::new();
        let mut next_index = 0;
        let mut out = GoalsArtifact::default();
        for id in &gate.items {
            let Some(event) = rows.items.iter().find(|r| &r.id == id) else {
                out.warnings.push(format!("gated row {id} not found"));
                continue;
            };
            let part = specify_safety_goals(&gc, event, &strategies, &mut buffer, &mut next_index, transcript)
                .map_err(|source| PipelineError::Step { step: Step::Goals, source })?;
            out.goals.extend(part.goals);
            out.findings.extend(part.findings);
            out.warnings.extend(part.warnings);
            out.failures.extend(part.failures);
        }
        Ok(out)
    }

    fn render_step(
        &self,
        dir: &Path,
        item: &ItemDefinition,
        transcript: &mut Vec<TranscriptEntry>,
    ) -> Result<(HaraTable, RunReport), PipelineError> {
        let s: StepArtifact<OperationalScenario> = read_json(&dir.join(SELECTED))?;
        let m: StepArtifact<Malfunction> = read_json(&dir.join(MALFUNCTIONS))?;
        let events: StepArtifact<HazardousEvent> = read_json(&dir.join(EVENTS))?;
        let goals: GoalsArtifact = read_json(&dir.join(GOALS))?;
        let mut rows = events.items;
        for failure in &goals.failures {
            if let Some(row) = rows.iter_mut().find(|r| r.id == failure.row_id) {
                row.state = EventState::Failed;
            }
        }
        let table = HaraTable {
            item_ref: item.id.clone(),
            rows,
            goals: goals.goals,
            scenarios: s.items,
            malfunctions: m.items,
            redundancy_findings: goals.findings,
            provenance: Provenance {
                model_name: self.gateway.model_name(),
                temperature_by_step: self.templates.iter().map(|t| (t.step_id.clone(), t.temperature)).collect(),
                prompt_version: self.templates.version(),
                created_at: Utc::now(),
            },
        };
        let mut consistency = check_consistency(&table, &self.cfg.stop_words);
        if self.cfg.deep_consistency_check {
            consistency.extend(deep_agent_check(
                &table,
                &self.gateway,
                &self.templates,
                self.cfg.llm.max_tokens,
                transcript,
            ));
        }
        let (failed_rows, warnings) = collect_diagnostics(dir)?;
        let mut llm_calls = transcript_counts(dir)?;
        llm_calls.insert(Step::Render.as_str().to_string(), transcript.len());
        let report = RunReport {
            status: RunStatus::Completed,
            failed_step: None,
            error: None,
            rows: table.rows.len(),
            assessed_rows: table.rows.iter().filter(|r| r.assessed_severity().is_some()).count(),
            goals: table.goals.len(),
            failed_rows,
            warnings,
            consistency_findings: consistency,
            invariant_violations: table.check_invariants().iter().map(ToString::to_string).collect(),
            llm_calls,
        };
        Ok((table, report))
    }
}

fn write_if_changed(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if fs::read(path).ok().as_deref() == Some(bytes) {
        return Ok(());
    }
    write_atomic(path, bytes).map_err(io_err(path))
}

fn transcript_path(run_dir: &Path, step: Step) -> PathBuf {
    run_dir.join("transcripts").join(format!("{}.jsonl", step.as_str()))
}

fn write_transcript(run_dir: &Path, step: Step, entries: &[TranscriptEntry]) -> Result<(), PipelineError> {
    let path = transcript_path(run_dir, step);
    let mut buf = Vec::new();
    for e in entries {
        serde_json::to_writer(&mut buf, e).expect("transcript entries serialize");
        buf.write_all(b"\n").expect("write to vec");
    }
    write_atomic(&path, &buf).map_err(io_err(&path))
}

/// Transcript lines per step, from the run directory.
pub fn transcript_counts(run_dir: &Path) -> Result<BTreeMap<String, usize>, PipelineError> {
    let mut out = BTreeMap::new();
    for step in Step::ALL {
        let path = transcript_path(run_dir, step);
        if let Ok(text) = fs::read_to_string(&path) {
            out.insert(step.as_str().to_string(), text.lines().filter(|l| !l.trim().is_empty()).count());
        }
    }
    Ok(out)
}

/// Row failures and warnings from every step artifact present.
fn collect_diagnostics(dir: &Path) -> Result<(Vec<RowFailure>, Vec<String>), PipelineError> {
    #[derive(Deserialize)]
    struct Diagnostics {
        #[serde(default)]
        warnings: Vec<String>,
        #[serde(default)]
        failures: Vec<RowFailure>,
    }
    let mut failures = Vec::new();
    let mut warnings = Vec::new();
    for name in [SCENARIOS, SELECTED, MALFUNCTIONS, DRAFTS, FORMULATED, EVENTS, GATE, GOALS] {
        let path = dir.join(name);
        if path.exists() {
            let d: Diagnostics = read_json(&path)?;
            warnings.extend(d.warnings);
            failures.extend(d.failures);
        }
    }
    Ok((failures, warnings))
}

fn failure_report(dir: &Path, step: Step, reason: &str) -> Result<RunReport, PipelineError> {
    let (failed_rows, warnings) = collect_diagnostics(dir)?;
    Ok(RunReport {
        status: RunStatus::PipelineFailed,
        failed_step: Some(step),
        error: Some(reason.to_string()),
        rows: 0,
        assessed_rows: 0,
        goals: 0,
        failed_rows,
        warnings,
        consistency_findings: Vec::new(),
        invariant_violations: Vec::new(),
        llm_calls: transcript_counts(dir)?,
    })
}

/// Load the item and configuration stored in an existing run directory.
pub fn load_run(run_dir: &Path) -> Result<(ItemDefinition, PipelineConfig), PipelineError> {
    let item_path = run_dir.join(ITEM);
    let raw = fs::read_to_string(&item_path).map_err(io_err(&item_path))?;
    let item = crate::model::validate_item_definition(&raw)?;
    let cfg_path = run_dir.join(CONFIG);
    let cfg_text = fs::read_to_string(&cfg_path).map_err(io_err(&cfg_path))?;
    Ok((item, PipelineConfig::from_toml(&cfg_text)?))
}

/// Continue a run from its first missing or stale checkpoint.
pub fn resume(run_dir: &Path, gateway: LlmGateway, opts: &RunOptions) -> Result<RunOutcome, PipelineError> {
    let (item, cfg) = load_run(run_dir)?;
    Pipeline::new(cfg, gateway)?.run(&item, run_dir, opts)
}

/// Convenience wrapper: build the pipeline and run it once.
pub fn run_pipeline(
    item: &ItemDefinition,
    cfg: PipelineConfig,
    gateway: LlmGateway,
    run_dir: &Path,
    opts: &RunOptions,
) -> Result<RunOutcome, PipelineError> {
    Pipeline::new(cfg, gateway)?.run(item, run_dir, opts)
}
