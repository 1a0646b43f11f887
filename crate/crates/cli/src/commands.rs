use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use hara_core::demo::{demo_item, write_demo_fixtures, MAX_DEMO_SCENARIOS};
use hara_core::export::{export_table, ExportFormat};
use hara_core::llm::{HttpBackend, LlmGateway, RetryPolicy};
use hara_core::model::{validate_item_definition, HaraTable, LintLevel, Severity, Verdict};
use hara_core::pipeline::{
    load_run, run_pipeline, Backend, PipelineConfig, PipelineError, RunOptions, RunOutcome, RunStatus, Step, TABLE,
};
use hara_core::quality::{aggregate_all, check_consistency, lint_goal, ScoreError};
use hara_review::{bind_localhost, ReviewRun};

/// Exit 2 for bad input, 1 for everything that fails at runtime.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) => ExitCode::from(2),
            CliError::Runtime(_) => ExitCode::from(1),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

fn usage(m: impl ToString) -> CliError {
    CliError::Usage(m.to_string())
}

fn runtime(m: impl ToString) -> CliError {
    CliError::Runtime(m.to_string())
}

type CmdResult = Result<ExitCode, CliError>;

pub struct BackendOverride {
    pub backend: Option<Backend>,
    pub fixtures: Option<PathBuf>,
}

impl BackendOverride {
    fn apply(self, cfg: &mut PipelineConfig) -> Result<(), CliError> {
        if let Some(b) = self.backend {
            cfg.backend = b;
        }
        if let Some(dir) = self.fixtures {
            let dir = dir.canonicalize().map_err(|e| usage(format!("fixtures {}: {e}", dir.display())))?;
            cfg.fixtures = Some(dir);
        }
        Ok(())
    }
}

fn gateway(cfg: &PipelineConfig) -> Result<LlmGateway, CliError> {
    match cfg.backend {
        Backend::Mock => {
            let dir = cfg.fixtures.as_ref().ok_or_else(|| usage("the mock backend needs --fixtures <dir>"))?;
            LlmGateway::mock(dir).map_err(usage)
        }
        Backend::Real => {
            let http = cfg.llm.http();
            if std::env::var(&http.api_key_env).map_or(true, |k| k.is_empty()) {
                return Err(usage(format!("the real backend reads its credential from ${}, which is not set", http.api_key_env)));
            }
            let backend = HttpBackend::from_env(&http).map_err(usage)?;
            Ok(LlmGateway::new(Arc::new(backend), RetryPolicy::default(), cfg.parallelism))
        }
    }
}

fn read_config(path: Option<&Path>) -> Result<PipelineConfig, CliError> {
    match path {
        None => Ok(PipelineConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
            PipelineConfig::from_toml(&text).map_err(|e| usage(format!("{}: {e}", p.display())))
        }
    }
}

fn pipeline_error(e: PipelineError) -> CliError {
    match e {
        PipelineError::Item(_) | PipelineError::Config(_) => usage(e),
        _ => runtime(e),
    }
}

fn summarize(outcome: &RunOutcome) -> CmdResult {
    println!("run directory: {}", outcome.run_dir.display());
    let names = |steps: &[Step]| steps.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ");
    if !outcome.skipped.is_empty() {
        println!("skipped steps: {}", names(&outcome.skipped));
    }
    println!("executed steps: {}", names(&outcome.executed));
    println!("llm calls: {}", outcome.llm_calls);
    let Some(report) = &outcome.report else {
        println!("stopped before the table was rendered; continue with `hara resume`");
        return Ok(ExitCode::SUCCESS);
    };
    println!("rows: {} (assessed {}, failed {})", report.rows, report.assessed_rows, report.failed_rows.len());
    println!("goals: {}", report.goals);
    for f in &report.failed_rows {
        println!("  failed {} at {}: {}", f.row_id, f.step, f.reason);
    }
    println!("warnings: {}", report.warnings.len());
    println!("consistency findings: {}", report.consistency_findings.len());
    for v in &report.invariant_violations {
        println!("  invariant violated: {v}");
    }
    match report.status {
        RunStatus::Completed => Ok(ExitCode::SUCCESS),
        RunStatus::PipelineFailed => Err(runtime(report.error.clone().unwrap_or_else(|| "pipeline failed".into()))),
    }
}

pub fn run(
    item_path: &Path,
    backend: BackendOverride,
    config: Option<&Path>,
    out: Option<PathBuf>,
    stop_after: Option<Step>,
) -> CmdResult {
    let raw = fs::read_to_string(item_path).map_err(|e| usage(format!("{}: {e}", item_path.display())))?;
    let item = validate_item_definition(&raw).map_err(usage)?;
    let mut cfg = read_config(config)?;
    backend.apply(&mut cfg)?;
    let gw = gateway(&cfg)?;
    let out = out.unwrap_or_else(|| PathBuf::from("runs").join(&item.id));
    let outcome = run_pipeline(&item, cfg, gw, &out, &RunOptions { stop_after }).map_err(pipeline_error)?;
    summarize(&outcome)
}

pub fn resume(run_dir: &Path, backend: BackendOverride) -> CmdResult {
    let (_, mut cfg) = load_run(run_dir).map_err(pipeline_error)?;
    backend.apply(&mut cfg)?;
    let gw = gateway(&cfg)?;
    let outcome = hara_core::pipeline::resume(run_dir, gw, &RunOptions::default()).map_err(pipeline_error)?;
    summarize(&outcome)
}

fn read_table(path: &Path) -> Result<HaraTable, CliError> {
    let bytes = fs::read(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| usage(format!("{}: {e}", path.display())))
}

pub fn lint(path: &Path, config: Option<&Path>) -> CmdResult {
    let cfg = read_config(config)?;
    let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let mut findings = Vec::new();
    let mut checked = 0;
    match serde_json::from_str::<HaraTable>(&text) {
        Ok(table) => {
            for g in &table.goals {
                checked += 1;
                findings.extend(lint_goal(&g.text, &cfg.lint).into_iter().map(|f| (g.id.clone(), f)));
            }
            for f in check_consistency(&table, &cfg.stop_words) {
                findings.push((f.targets.join(","), f));
            }
        }
        Err(_) => {
            for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                checked += 1;
                findings.extend(lint_goal(line.trim(), &cfg.lint).into_iter().map(|f| (format!("line {}", i + 1), f)));
            }
        }
    }
    let errors = findings.iter().filter(|(_, f)| f.level == LintLevel::Error).count();
    for (target, f) in &findings {
        let level = match f.level {
            LintLevel::Error => "error",
            LintLevel::Warning => "warning",
        };
        println!("{target}: {level} [{}] {} ({:?})", f.rule_id, f.message, f.snippet);
    }
    println!("{checked} goals checked: {errors} errors, {} warnings", findings.len() - errors);
    Ok(if errors > 0 { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

fn round(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

pub fn scores(path: &Path, json: bool) -> CmdResult {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let mut verdicts = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let v: Verdict = serde_json::from_str(line).map_err(|e| usage(format!("line {}: {e}", i + 1)))?;
        v.validate().map_err(|e| usage(format!("line {}: {e}", i + 1)))?;
        verdicts.push(v);
    }
    let all = aggregate_all(&verdicts);
    if json {
        let map: serde_json::Map<String, serde_json::Value> = all
            .iter()
            .map(|(c, r)| {
                let v = match r {
                    Ok(s) => serde_json::to_value(s).expect("score serializes"),
                    Err(e) => serde_json::json!({ "criterion": c, "no_data": true, "error": e.to_string() }),
                };
                (c.to_string(), v)
            })
            .collect();
        println!("{}", serde_json::to_string_pretty(&map).expect("map serializes"));
        return Ok(ExitCode::SUCCESS);
    }
    if all.is_empty() {
        println!("no verdicts");
    }
    for (c, r) in &all {
        match r {
            Ok(s) => println!(
                "{c}: mean {} stddev {} (used {}, excluded {})",
                round(s.mean),
                round(s.stddev),
                s.n_used,
                s.n_excluded
            ),
            Err(ScoreError::NoData { n_excluded, .. }) => println!("{c}: no data (excluded {n_excluded})"),
            Err(e) => println!("{c}: {e}"),
        }
    }
    Ok(ExitCode::SUCCESS)
}

pub fn export(run_dir: &Path, format: ExportFormat, output: Option<&Path>) -> CmdResult {
    let table = read_table(&run_dir.join(TABLE))?;
    let text = export_table(&table, format).map_err(runtime)?;
    match output {
        Some(p) => fs::write(p, text).map_err(|e| runtime(format!("{}: {e}", p.display())))?,
        None => print!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}

pub fn demo(dir: &Path, scenarios: usize) -> CmdResult {
    if !(1..=MAX_DEMO_SCENARIOS).contains(&scenarios) {
        return Err(usage(format!("--scenarios must be 1..={MAX_DEMO_SCENARIOS}")));
    }
    let io = |e: std::io::Error| runtime(format!("{}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(io)?;
    let item = serde_json::to_string_pretty(&demo_item()).expect("item serializes");
    fs::write(dir.join("item.json"), item + "\n").map_err(io)?;
    let cfg = PipelineConfig {
        scenarios_target_count: scenarios,
        diverse_selection_count: scenarios,
        ..Default::default()
    };
    fs::write(dir.join("config.toml"), cfg.to_toml().map_err(runtime)?).map_err(io)?;
    let cycle = [Severity::S2, Severity::S0, Severity::S1, Severity::S3];
    let severities: Vec<Severity> = (0..scenarios * 2).map(|i| cycle[i % cycle.len()]).collect();
    write_demo_fixtures(&dir.join("fixtures"), scenarios, &severities).map_err(io)?;
    println!("wrote {0}/item.json, {0}/config.toml and {0}/fixtures", dir.display());
    println!(
        "try: hara run {0}/item.json --fixtures {0}/fixtures --config {0}/config.toml --out {0}/run",
        dir.display()
    );
    Ok(ExitCode::SUCCESS)
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
}

pub fn serve(run_dir: &Path, port: u16) -> CmdResult {
    let run = Arc::new(ReviewRun::open(run_dir).map_err(runtime)?);
    let rt = tokio::runtime::Runtime::new().map_err(runtime)?;
    rt.block_on(async {
        let listener = bind_localhost(port).await.map_err(|e| runtime(format!("cannot bind 127.0.0.1:{port}: {e}")))?;
        let addr = listener.local_addr().map_err(runtime)?;
        println!("serving {} on http://{addr}", run_dir.display());
        hara_review::serve(listener, run, shutdown_signal()).await.map_err(runtime)?;
        println!("stopped");
        Ok(ExitCode::SUCCESS)
    })
}
