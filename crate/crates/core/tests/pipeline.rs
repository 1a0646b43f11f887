use std::fs;
use std::path::Path;
use std::time::Instant;

use hara_core::demo::{demo_item, structured, write_demo_fixtures};
use hara_core::llm::{write_fixture, FinishReason, LlmGateway};
use hara_core::model::{EventState, GoalStatus, HaraTable, Severity, Strategy};
use hara_core::pipeline::{
    resume, run_pipeline, PipelineConfig, PipelineError, RunOptions, RunReport, RunStatus, Step,
};
use Severity::*;

fn cfg(n: usize) -> PipelineConfig {
    PipelineConfig {
        scenarios_target_count: n,
        diverse_selection_count: n,
        ..Default::default()
    }
}

fn fixtures(severities: &[Severity]) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    write_demo_fixtures(dir.path(), 3, severities).unwrap();
    dir
}

fn run(fx: &Path, out: &Path, opts: &RunOptions) -> Result<hara_core::pipeline::RunOutcome, PipelineError> {
    run_pipeline(&demo_item(), cfg(3), LlmGateway::mock(fx).unwrap(), out, opts)
}

fn table_without_timestamp(dir: &Path) -> String {
    let mut v: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("table.json")).unwrap()).unwrap();
    v["provenance"]["created_at"] = serde_json::Value::Null;
    serde_json::to_string_pretty(&v).unwrap()
}

const E2E: [Severity; 6] = [S2, S0, S1, S2, S0, S0];

#[test]
fn end_to_end_six_rows_twelve_goals() {
    let fx = fixtures(&E2E);
    let out = tempfile::tempdir().unwrap();
    let started = Instant::now();
    let outcome = run(fx.path(), out.path(), &RunOptions::default()).unwrap();
    assert!(started.elapsed().as_secs_f64() < 10.0);
    let table = outcome.table.unwrap();
    assert_eq!(table.rows.len(), 6);
    assert_eq!(table.goals.len(), 12);
    let covered: Vec<&str> = table.rows.iter().filter(|r| table.goals_for_row(&r.id).next().is_some()).map(|r| r.id.as_str()).collect();
    assert_eq!(covered, ["HE-0001", "HE-0003", "HE-0004"]);
    for row in ["HE-0001", "HE-0003", "HE-0004"] {
        let strategies: Vec<Strategy> = table.goals_for_row(row).map(|g| g.strategy).collect();
        assert_eq!(strategies, Strategy::ALL);
    }
    assert!(table.check_invariants().is_empty(), "{:?}", table.check_invariants());
    assert!(table.rows.iter().all(|r| r.exposure.is_none() && r.controllability.is_none()));
    assert!(table.rows.iter().all(|r| !r.explanation.background.is_empty()));
    // HE-0003 repeats HE-0001's malfunction; HE-0004 repeats HE-0003's scenario
    let reused: Vec<_> = table.goals.iter().filter(|g| g.status == GoalStatus::ReusedExisting).collect();
    assert_eq!(reused.len(), 2);
    assert_eq!((reused[0].covered_events[0].as_str(), reused[0].strategy), ("HE-0003", Strategy::AvoidFailureMode));
    assert_eq!(reused[0].reuses.as_deref(), Some("SG-0001"));
    assert_eq!((reused[1].covered_events[0].as_str(), reused[1].strategy), ("HE-0004", Strategy::RestrictExposure));
    assert_eq!(reused[1].reuses.as_deref(), Some("SG-0006"));
    for f in ["item.json", "config.toml", "scenarios.json", "malfunctions.json", "events.json", "table.json", "report.json"] {
        assert!(out.path().join(f).exists(), "{f}");
    }
    assert!(out.path().join("transcripts/severity.jsonl").exists());
    assert!(out.path().join("checkpoints/render.json").exists());
}

#[test]
fn identical_runs_are_byte_identical() {
    let fx = fixtures(&E2E);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run(fx.path(), a.path(), &RunOptions::default()).unwrap();
    run(fx.path(), b.path(), &RunOptions::default()).unwrap();
    assert_eq!(table_without_timestamp(a.path()), table_without_timestamp(b.path()));
    assert_eq!(fs::read(a.path().join("report.json")).unwrap(), fs::read(b.path().join("report.json")).unwrap());
}

#[test]
fn resume_after_each_early_step() {
    let fx = fixtures(&E2E);
    let full = tempfile::tempdir().unwrap();
    let reference = run(fx.path(), full.path(), &RunOptions::default()).unwrap();
    let expected = table_without_timestamp(full.path());
    for step in &Step::ALL[..6] {
        let dir = tempfile::tempdir().unwrap();
        let first = run(fx.path(), dir.path(), &RunOptions { stop_after: Some(*step) }).unwrap();
        assert!(first.table.is_none());
        let second = resume(dir.path(), LlmGateway::mock(fx.path()).unwrap(), &RunOptions::default()).unwrap();
        assert_eq!(&second.skipped, &first.executed, "after {step}");
        assert_eq!(first.llm_calls + second.llm_calls, reference.llm_calls, "after {step}");
        assert_eq!(table_without_timestamp(dir.path()), expected, "after {step}");
    }
}

#[test]
fn unchanged_rerun_makes_no_calls() {
    let fx = fixtures(&E2E);
    let out = tempfile::tempdir().unwrap();
    run(fx.path(), out.path(), &RunOptions::default()).unwrap();
    let again = resume(out.path(), LlmGateway::mock(fx.path()).unwrap(), &RunOptions::default()).unwrap();
    assert_eq!(again.llm_calls, 0);
    assert!(again.executed.is_empty());
    assert!(again.table.is_some());
}

#[test]
fn edited_description_reruns_everything() {
    let fx = fixtures(&E2E);
    let out = tempfile::tempdir().unwrap();
    run(fx.path(), out.path(), &RunOptions::default()).unwrap();
    let mut item = demo_item();
    item.description.push_str(" It is active above 10 km/h.");
    let again = run_pipeline(&item, cfg(3), LlmGateway::mock(fx.path()).unwrap(), out.path(), &RunOptions::default()).unwrap();
    assert_eq!(again.executed, Step::ALL);
}

#[test]
fn tampered_artifact_reruns_from_that_step() {
    let fx = fixtures(&E2E);
    let out = tempfile::tempdir().unwrap();
    run(fx.path(), out.path(), &RunOptions::default()).unwrap();
    let path = out.path().join("scenarios.json");
    let text = fs::read_to_string(&path).unwrap().replace("pedestrian", "jogger");
    fs::write(&path, text).unwrap();
    let again = resume(out.path(), LlmGateway::mock(fx.path()).unwrap(), &RunOptions::default()).unwrap();
    assert_eq!(again.executed, Step::ALL);
}

#[test]
fn corrupt_checkpoint_names_step() {
    let fx = fixtures(&E2E);
    let out = tempfile::tempdir().unwrap();
    run(fx.path(), out.path(), &RunOptions::default()).unwrap();
    fs::write(out.path().join("checkpoints/formulate.json"), "{").unwrap();
    let err = resume(out.path(), LlmGateway::mock(fx.path()).unwrap(), &RunOptions::default()).unwrap_err();
    assert!(matches!(err, PipelineError::CorruptCheckpoint { step: Step::Formulate, .. }));
    assert!(err.to_string().contains("formulate"));
}

#[test]
fn malformed_scenarios_fail_pipeline_with_report() {
    let fx = fixtures(&E2E);
    let body = structured("b", "r", "### SCENARIO\nDetailed: no core here\n");
    write_fixture(&fx.path().join("scenarios.default.json"), &body, FinishReason::Stop).unwrap();
    write_fixture(&fx.path().join("scenarios.repair.json"), &body, FinishReason::Stop).unwrap();
    let out = tempfile::tempdir().unwrap();
    let err = run(fx.path(), out.path(), &RunOptions::default()).unwrap_err();
    assert!(matches!(err, PipelineError::Failed { step: Step::Scenarios, .. }));
    let report: RunReport = serde_json::from_slice(&fs::read(out.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report.status, RunStatus::PipelineFailed);
    assert_eq!(report.failed_step, Some(Step::Scenarios));
}

#[test]
fn missing_factor_block_keeps_scenario_with_warning() {
    let fx = fixtures(&E2E);
    let body = structured(
        "b",
        "r",
        "### SCENARIO\nCore: A.\nDetailed: a\n### SCENARIO\nCore: B.\nDetailed: b\nFactors:\n- road: urban\n### SCENARIO\nCore: C.\nFactors:\n- objects: bus\n",
    );
    write_fixture(&fx.path().join("scenarios.default.json"), &body, FinishReason::Stop).unwrap();
    let out = tempfile::tempdir().unwrap();
    let outcome = run(fx.path(), out.path(), &RunOptions::default()).unwrap();
    let table = outcome.table.unwrap();
    assert_eq!(table.scenarios.len(), 3);
    assert!(table.scenarios[0].factors.is_empty());
    assert!(outcome.report.unwrap().warnings.iter().any(|w| w.contains("SC-0001") && w.contains("factor")));
}

#[test]
fn out_of_range_severity_fails_row_only() {
    let fx = fixtures(&E2E);
    let bad = structured("b", "r", "Severity: S5\nRationale: too high");
    for name in ["severity.HE-0004.json", "severity.HE-0004.repair.json"] {
        write_fixture(&fx.path().join(name), &bad, FinishReason::Stop).unwrap();
    }
    let out = tempfile::tempdir().unwrap();
    let outcome = run(fx.path(), out.path(), &RunOptions::default()).unwrap();
    let table: HaraTable = outcome.table.unwrap();
    let row = table.row("HE-0004").unwrap();
    assert_eq!(row.state, EventState::Failed);
    assert_eq!(table.goals_for_row("HE-0004").count(), 0);
    assert_eq!(table.goals.len(), 8);
    assert!(table.check_invariants().is_empty());
    let report = outcome.report.unwrap();
    assert!(report.failed_rows.iter().any(|f| f.row_id == "HE-0004" && f.step == "severity"));
}

#[test]
fn equal_consequences_with_different_severities_are_reported() {
    let fx = fixtures(&E2E);
    let same = structured("b", "r", "Consequence: Ego leaves the lane\nKinematics: n/a");
    for id in ["HE-0001", "HE-0003"] {
        write_fixture(&fx.path().join(format!("hazardous_event.{id}.json")), &same, FinishReason::Stop).unwrap();
    }
    let out = tempfile::tempdir().unwrap();
    let report = run(fx.path(), out.path(), &RunOptions::default()).unwrap().report.unwrap();
    assert_eq!(report.consistency_findings.len(), 1);
    assert_eq!(report.consistency_findings[0].targets, ["HE-0001", "HE-0003"]);
}

#[test]
fn llm_selection_replays_fixture_ids() {
    let fx = fixtures(&E2E);
    write_fixture(&fx.path().join("selection.default.json"), &structured("b", "r", "SC-0003\nSC-0001"), FinishReason::Stop)
        .unwrap();
    let out = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig { diverse_selection_count: 2, ..cfg(3) };
    let outcome = run_pipeline(&demo_item(), cfg, LlmGateway::mock(fx.path()).unwrap(), out.path(), &RunOptions::default())
        .unwrap();
    let ids: Vec<String> = outcome.table.unwrap().scenarios.iter().map(|s| s.id.clone()).collect();
    assert_eq!(ids, ["SC-0001", "SC-0003"]);
}

#[test]
fn unknown_selection_ids_fall_back() {
    let fx = fixtures(&E2E);
    write_fixture(&fx.path().join("selection.default.json"), &structured("b", "r", "SC-0009\nSC-0001"), FinishReason::Stop)
        .unwrap();
    let out = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig { diverse_selection_count: 2, ..cfg(3) };
    let outcome = run_pipeline(&demo_item(), cfg, LlmGateway::mock(fx.path()).unwrap(), out.path(), &RunOptions::default())
        .unwrap();
    assert_eq!(outcome.table.unwrap().scenarios.len(), 2);
    assert!(outcome.report.unwrap().warnings.iter().any(|w| w.contains("deterministic selection")));
}

#[test]
fn all_s0_completes_without_goals() {
    let fx = fixtures(&[S0; 6]);
    let out = tempfile::tempdir().unwrap();
    let table = run(fx.path(), out.path(), &RunOptions::default()).unwrap().table.unwrap();
    assert!(table.goals.is_empty());
    assert!(table.check_invariants().is_empty());
}

#[test]
fn csv_export_round_trips_rows_and_severities() {
    use hara_core::export::{export_table, ExportFormat, COLUMNS};
    let fx = fixtures(&E2E);
    let out = tempfile::tempdir().unwrap();
    let table = run(fx.path(), out.path(), &RunOptions::default()).unwrap().table.unwrap();
    let csv_text = export_table(&table, ExportFormat::Csv).unwrap();
    let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
    assert_eq!(reader.headers().unwrap().iter().collect::<Vec<_>>(), COLUMNS);
    let records: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(records.len(), 6);
    for (rec, row) in records.iter().zip(&table.rows) {
        assert_eq!(rec[0], row.id);
        assert_eq!(rec[6], row.severity.unwrap().to_string());
    }
    assert_eq!(&records[0][8], "SG-0001; SG-0002; SG-0003; SG-0004");
    let md = export_table(&table, ExportFormat::Markdown).unwrap();
    assert_eq!(md.lines().take_while(|l| !l.is_empty()).count(), 8);
}
