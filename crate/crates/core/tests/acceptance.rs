//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use hara_core::demo::{demo_item, structured, write_demo_fixtures, MAX_DEMO_SCENARIOS};
use hara_core::llm::{write_fixture, FinishReason, LlmGateway, TranscriptEntry};
use hara_core::model::{
    guideword_catalogue, EventState, ExplanationBundle, FindingMethod, HaraTable, HazardousEvent, LintFinding,
    Malfunction, MalfunctionSource, OperationalScenario, Provenance, Relation, ScenarioSource, Severity, Strategy,
};
use hara_core::pipeline::{
    combine, find_redundancies, resume, run_pipeline, PipelineConfig, RedundancyCheck, RunOptions, RunOutcome,
    Step, StepError,
};
use hara_core::prompt::{few_shot_block, find_leak, render, Glossary, RenderContext, TemplateSet};
use hara_core::quality::{aggregate_scores, check_consistency, checklist_scaffold, lint_goal, LintRuleSet, ScoreError};
use hara_core::text::default_stop_words;
use Severity::*;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {{
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    }};
}

fn cfg(n: usize) -> PipelineConfig {
    PipelineConfig { scenarios_target_count: n, diverse_selection_count: n, ..Default::default() }
}

fn mock_run(fx: &Path, out: &Path, n: usize, opts: &RunOptions) -> Result<RunOutcome, String> {
    let gw = LlmGateway::mock(fx).map_err(|e| e.to_string())?;
    run_pipeline(&demo_item(), cfg(n), gw, out, opts).map_err(|e| e.to_string())
}

fn tempdir() -> tempfile::TempDir {
    tempfile::tempdir().expect("temp dir")
}

// ------------------------------------------------------------------ e2e

fn end_to_end() -> Outcome {
    let fx = tempdir();
    let out = tempdir();
    let severities = [S2, S0, S1, S2, S0, S0];
    write_demo_fixtures(fx.path(), 3, &severities).map_err(|e| e.to_string())?;
    let started = Instant::now();
    let outcome = mock_run(fx.path(), out.path(), 3, &RunOptions::default())?;
    let elapsed = started.elapsed().as_secs_f64();
    let table = outcome.table.ok_or("no table")?;
    ensure!(table.rows.len() == 3 * 2, "{} rows", table.rows.len());
    let expected: BTreeSet<String> = severities
        .iter()
        .enumerate()
        .filter(|(_, s)| **s > S0)
        .map(|(i, _)| format!("HE-{:04}", i + 1))
        .collect();
    let covered: BTreeSet<String> = table.goals.iter().flat_map(|g| g.covered_events.iter().cloned()).collect();
    ensure!(covered == expected, "goals cover {covered:?}, expected {expected:?}");
    for id in &expected {
        let strategies: BTreeSet<Strategy> = table.goals_for_row(id).map(|g| g.strategy).collect();
        ensure!(strategies.len() == 4 && table.goals_for_row(id).count() == 4, "{id}: {strategies:?}");
    }
    ensure!(table.goals.len() == 12, "{} goals", table.goals.len());
    let violations = table.check_invariants();
    ensure!(violations.is_empty(), "invariants: {violations:?}");
    ensure!(elapsed < 10.0, "took {elapsed:.2} s");
    Ok(format!("6 rows, 12 goals, invariants hold, {elapsed:.2} s"))
}

// ---------------------------------------------------------- gate soundness

fn gate_soundness() -> Outcome {
    const RUNS: usize = 100;
    let mut rng = StdRng::seed_from_u64(0x6a7e);
    let plans: Vec<(usize, Vec<Option<Severity>>)> = (0..RUNS)
        .map(|_| {
            let scenarios = rng.random_range(1..=MAX_DEMO_SCENARIOS);
            let rows = (0..scenarios * 2)
                .map(|_| if rng.random_bool(0.1) { None } else { Some(Severity::ALL[rng.random_range(0..4)]) })
                .collect();
            (scenarios, rows)
        })
        .collect();
    let results: Vec<Result<(usize, usize, usize), String>> = std::thread::scope(|s| {
        let handles: Vec<_> = plans
            .chunks(RUNS / 10)
            .map(|chunk| s.spawn(move || chunk.iter().map(|(n, rows)| gate_case(*n, rows)).collect::<Vec<_>>()))
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker")).collect()
    });
    let (mut rows, mut goals, mut failed) = (0, 0, 0);
    for r in results {
        let (r, g, f) = r?;
        rows += r;
        goals += g;
        failed += f;
    }
    Ok(format!("{RUNS} runs, {rows} rows, {goals} goals, {failed} failed rows; no violation"))
}

/// `None` rows get an out-of-range severity and must end up failed.
fn gate_case(scenarios: usize, plan: &[Option<Severity>]) -> Result<(usize, usize, usize), String> {
    let fx = tempdir();
    let out = tempdir();
    let severities: Vec<Severity> = plan.iter().map(|s| s.unwrap_or(S0)).collect();
    write_demo_fixtures(fx.path(), scenarios, &severities).map_err(|e| e.to_string())?;
    for (i, s) in plan.iter().enumerate() {
        if s.is_none() {
            let bad = structured("b", "r", "Severity: S7\nRationale: none");
            for suffix in ["", ".repair"] {
                let name = format!("severity.HE-{:04}{suffix}.json", i + 1);
                write_fixture(&fx.path().join(name), &bad, FinishReason::Stop).map_err(|e| e.to_string())?;
            }
        }
    }
    let table = match mock_run(fx.path(), out.path(), scenarios, &RunOptions::default()) {
        Ok(o) => o.table.ok_or("no table")?,
        // every row failed: nothing to check beyond the failure itself
        Err(e) if plan.iter().all(Option::is_none) && e.contains("severity") => return Ok((plan.len(), 0, plan.len())),
        Err(e) => return Err(e),
    };
    for goal in &table.goals {
        for ev in &goal.covered_events {
            let row = table.row(ev).ok_or(format!("{} covers missing {ev}", goal.id))?;
            ensure!(row.severity.is_some_and(|s| s > S0) && row.state == EventState::Assessed, "{} on {ev}", goal.id);
        }
    }
    for (i, (row, planned)) in table.rows.iter().zip(plan).enumerate() {
        match planned {
            None => ensure!(row.state == EventState::Failed, "row {i} should have failed"),
            Some(s) => {
                ensure!(row.severity == Some(*s), "row {i}: {:?} vs {s}", row.severity);
                let has_goal = table.goals_for_row(&row.id).next().is_some();
                ensure!(has_goal == (*s > S0), "row {} ({s}) has_goal={has_goal}", row.id);
            }
        }
    }
    ensure!(table.check_goal_coverage().is_empty(), "coverage: {:?}", table.check_goal_coverage());
    let package = checklist_scaffold(&table, &LintRuleSet::default(), &default_stop_words());
    let g = package.criteria.iter().find(|c| c.criterion.letter == 'g').ok_or("no criterion g")?;
    ensure!(
        g.evidence.machine_signal.as_deref() == Some("machine-verified: pass"),
        "criterion g signal {:?}",
        g.evidence.machine_signal
    );
    let failed = table.rows.iter().filter(|r| r.state == EventState::Failed).count();
    Ok((table.rows.len(), table.goals.len(), failed))
}

// ----------------------------------------------------------------- combine

fn scenarios(m: usize) -> Vec<OperationalScenario> {
    (0..m)
        .map(|i| OperationalScenario {
            id: format!("SC-{:04}", i + 1),
            core_summary: format!("s{i}"),
            detailed_description: String::new(),
            factors: BTreeMap::new(),
            cluster_id: None,
            source: ScenarioSource::LlmGenerated,
        })
        .collect()
}

fn malfunctions(n: usize) -> Vec<Malfunction> {
    (0..n)
        .map(|i| Malfunction {
            id: format!("MF-{:04}", i + 1),
            output_ref: 0,
            guide_word: "omission".into(),
            description: format!("m{i}"),
            source: MalfunctionSource::RuleEnumerated,
        })
        .collect()
}

fn combination_oracle() -> Outcome {
    let mut cases = 0;
    for m in 0..=6 {
        for n in 0..=6 {
            let (s, f) = (scenarios(m), malfunctions(n));
            let got = combine(&s, &f);
            if m == 0 || n == 0 {
                ensure!(matches!(got, Err(StepError::Combine(_))), "({m},{n}) should be an error");
                cases += 1;
                continue;
            }
            let got = got.map_err(|e| e.to_string())?;
            // k-th pair of a scenario-major product is (k / n, k % n)
            let oracle: Vec<(String, String)> =
                (0..m * n).map(|k| (s[k / n].id.clone(), f[k % n].id.clone())).collect();
            let pairs: Vec<(String, String)> =
                got.iter().map(|e| (e.scenario_ref.clone(), e.malfunction_ref.clone())).collect();
            ensure!(pairs == oracle, "({m},{n}) order or content differs");
            let mut sorted_got = pairs.clone();
            sorted_got.sort();
            let mut sorted_oracle = oracle.clone();
            sorted_oracle.sort();
            ensure!(sorted_got == sorted_oracle, "({m},{n}) multiset differs");
            ensure!(got.iter().all(|e| e.consequence.is_empty()), "({m},{n}) drafts not empty");
            cases += 1;
        }
    }
    Ok(format!("{cases} size pairs match"))
}

// ------------------------------------------------- determinism and resume

fn strip_timestamp(dir: &Path) -> Result<String, String> {
    let bytes = fs::read(dir.join("table.json")).map_err(|e| e.to_string())?;
    let mut v: serde_json::Value = serde_json::from_slice(&bytes).map_err(|e| e.to_string())?;
    v["provenance"]["created_at"] = serde_json::Value::Null;
    Ok(v.to_string())
}

fn step_calls(entries: &[TranscriptEntry]) -> usize {
    entries.len()
}

fn read_transcript(dir: &Path, step: Step) -> Vec<TranscriptEntry> {
    fs::read_to_string(dir.join("transcripts").join(format!("{step}.jsonl")))
        .unwrap_or_default()
        .lines()
        .filter(|l| !l.is_empty())
        .map(|l| serde_json::from_str(l).expect("transcript line"))
        .collect()
}

fn determinism_and_resume() -> Outcome {
    let fx = tempdir();
    write_demo_fixtures(fx.path(), 3, &[S2, S0, S1, S2, S0, S0]).map_err(|e| e.to_string())?;
    let a = tempdir();
    let b = tempdir();
    let full = mock_run(fx.path(), a.path(), 3, &RunOptions::default())?;
    mock_run(fx.path(), b.path(), 3, &RunOptions::default())?;
    let reference = strip_timestamp(a.path())?;
    ensure!(reference == strip_timestamp(b.path())?, "two identical runs differ");
    let per_step: BTreeMap<Step, usize> =
        Step::ALL.iter().map(|s| (*s, step_calls(&read_transcript(a.path(), *s)))).collect();

    for (k, step) in Step::ALL[..6].iter().enumerate() {
        let dir = tempdir();
        let first = mock_run(fx.path(), dir.path(), 3, &RunOptions { stop_after: Some(*step) })?;
        let gw = LlmGateway::mock(fx.path()).map_err(|e| e.to_string())?;
        let second = resume(dir.path(), gw, &RunOptions::default()).map_err(|e| e.to_string())?;
        ensure!(second.skipped == Step::ALL[..=k], "after {step}: skipped {:?}", second.skipped);
        let remaining: usize = Step::ALL[k + 1..].iter().map(|s| per_step[s]).sum();
        ensure!(
            second.llm_calls == remaining,
            "after {step}: resume made {} calls, {remaining} expected",
            second.llm_calls
        );
        ensure!(first.llm_calls + second.llm_calls == full.llm_calls, "after {step}: call totals differ");
        ensure!(strip_timestamp(dir.path())? == reference, "after {step}: final table differs");
    }
    Ok(format!("byte-identical tables; 6 resume points, {} calls per full run", full.llm_calls))
}

// ------------------------------------------------------------------ scores

fn multisets(size: usize, min: u8, acc: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
    if acc.len() == size {
        out.push(acc.clone());
        return;
    }
    for v in min..=5 {
        acc.push(v);
        multisets(size, v, acc, out);
        acc.pop();
    }
}

fn score_oracle() -> Outcome {
    let mut all = Vec::new();
    for size in 0..=5 {
        multisets(size, 1, &mut Vec::new(), &mut all);
    }
    let size_five = all.iter().filter(|m| m.len() == 5).count();
    ensure!(size_five == 126, "{size_five} multisets of size 5");
    for m in &all {
        let kept: Vec<i64> = m.iter().filter(|&&v| v != 3).map(|&v| [0, 1, 2, 0, 3, 4][v as usize]).collect();
        let got = aggregate_scores('a', m);
        if kept.is_empty() {
            ensure!(
                got == Err(ScoreError::NoData { criterion: 'a', n_excluded: m.len() }),
                "{m:?}: expected no_data, got {got:?}"
            );
            continue;
        }
        let got = got.map_err(|e| format!("{m:?}: {e}"))?;
        let n = kept.len() as i64;
        let sum: i64 = kept.iter().sum();
        let sq: i64 = kept.iter().map(|v| v * v).sum();
        let mean = sum as f64 / n as f64;
        let stddev = (((n * sq - sum * sum) as f64) / ((n * n) as f64)).sqrt();
        ensure!(got.mean == mean, "{m:?}: mean {} vs {mean}", got.mean);
        ensure!((got.stddev - stddev).abs() < 1e-12, "{m:?}: stddev {} vs {stddev}", got.stddev);
        ensure!(got.n_used == kept.len() && got.n_excluded == m.len() - kept.len(), "{m:?}: counts");
    }
    let spot = aggregate_scores('g', &[5, 5, 4, 3, 4]).map_err(|e| e.to_string())?;
    ensure!(spot.mean == 3.5 && spot.n_excluded == 1, "spot value {spot:?}");
    Ok(format!("{} multisets of size <= 5 ({size_five} of size 5) match; [5,5,4,3,4] -> 3.5", all.len()))
}

// ------------------------------------------------------------------ linter

fn linter_corpus() -> Outcome {
    let defective: [(&str, &[&str]); 10] = [
        ("The vehicle shall avoid lane departure when necessary", &["vague-phrase"]),
        ("CAEM shall not steer towards objects in the vicinity of the ego vehicle", &["vague-phrase"]),
        ("the system should avoid the malfunction", &["missing-shall", "recommendation-modal"]),
        ("CAEM should not request lateral motion towards pedestrians", &["missing-shall", "recommendation-modal"]),
        ("The radar shall confirm the object before CAEM requests lateral motion", &["technology-term"]),
        (
            "CAEM shall use the camera and a sensor fusion algorithm to verify free space",
            &["technology-term", "technology-term", "technology-term"],
        ),
        ("CAEM does not cause lane departure", &["missing-shall"]),
        ("CAEM shall only steer if needed", &["vague-phrase"]),
        (
            "CAEM shall limit lateral motion as appropriate to prevent unnecessary lane changes",
            &["vague-phrase", "vague-phrase"],
        ),
        ("The software module shall reject lateral requests above 3 m/s2", &["technology-term"]),
    ];
    let clean = [
        "CAEM shall not cause lane departure unless to avoid collision",
        "CAEM shall not request lateral motion when no collision ahead is imminent",
        "CAEM shall limit lateral acceleration to 3 m/s2 during an evasive manoeuvre",
        "The driver shall be able to override a lateral motion request at any time",
        "CAEM shall be inactive above 130 km/h",
    ];
    let rules = LintRuleSet::default();
    let mut seeded = 0;
    for (text, expected) in defective {
        let found = lint_goal(text, &rules);
        let mut got: Vec<&str> = found.iter().map(|f| f.rule_id.as_str()).collect();
        let mut want = expected.to_vec();
        got.sort();
        want.sort();
        ensure!(got == want, "{text:?}: {got:?}, expected {want:?}");
        ensure!(found.iter().all(|f| text.contains(&f.snippet)), "{text:?}: snippet not in text");
        seeded += expected.len();
    }
    for text in clean {
        let found: Vec<LintFinding> = lint_goal(text, &rules);
        ensure!(found.is_empty(), "{text:?}: unexpected {found:?}");
    }
    Ok(format!("{seeded} seeded defects in 10 goals flagged; 5 clean goals without findings"))
}

// ------------------------------------------------------------- consistency

fn synthetic_table(rows: &[(&str, Severity)]) -> HaraTable {
    HaraTable {
        item_ref: "ITEM".into(),
        rows: rows
            .iter()
            .enumerate()
            .map(|(i, (consequence, s))| HazardousEvent {
                consequence: consequence.to_string(),
                severity: Some(*s),
                severity_rationale: "r".into(),
                explanation: ExplanationBundle::default(),
                state: EventState::Assessed,
                ..HazardousEvent::draft(format!("HE-{:04}", i + 1), "SC-0001".into(), "MF-0001".into())
            })
            .collect(),
        goals: vec![],
        scenarios: scenarios(1),
        malfunctions: malfunctions(1),
        redundancy_findings: vec![],
        provenance: Provenance {
            model_name: "mock".into(),
            temperature_by_step: BTreeMap::new(),
            prompt_version: "v".into(),
            created_at: chrono::DateTime::UNIX_EPOCH,
        },
    }
}

fn consistency_checker() -> Outcome {
    let table = synthetic_table(&[
        ("Ego collides with the pedestrian at the kerb", S2),
        ("Ego leaves the lane into oncoming traffic", S3),
        ("ego collides with the pedestrian at the kerb.", S2),
        ("Ego brushes the guard rail", S1),
        ("Ego leaves the lane into oncoming traffic!", S2),
        ("Ego collides with THE pedestrian at the kerb", S2),
        ("Ego stops in the tunnel", S0),
        ("Ego hits the cyclist from behind", S3),
    ]);
    let findings = check_consistency(&table, &default_stop_words());
    ensure!(findings.len() == 1, "{} findings: {findings:?}", findings.len());
    ensure!(findings[0].targets == ["HE-0002", "HE-0005"], "targets {:?}", findings[0].targets);
    Ok("1 finding naming HE-0002, HE-0005".into())
}

// -------------------------------------------------------------- redundancy

fn token_set(words: &[&str]) -> BTreeSet<String> {
    words.iter().map(|w| w.to_string()).collect()
}

fn hand_jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    a.intersection(b).count() as f64 / a.union(b).count() as f64
}

fn redundancy_prefilter() -> Outcome {
    let sw = default_stop_words();
    let fx = tempdir();
    let gw = LlmGateway::mock(fx.path()).map_err(|e| e.to_string())?;
    let glossary = Glossary::default();
    let templates = TemplateSet::builtin(&glossary).map_err(|e| e.to_string())?;
    let check = RedundancyCheck {
        gateway: Some(&gw),
        template: templates.get("redundancy"),
        threshold: 0.4,
        stop_words: &sw,
        max_tokens: 256,
    };
    let mut log = Vec::new();

    let existing = vec![("SG-0001".to_string(), "CAEM shall not cause lane departure unless to avoid collision".to_string())];
    let dup = find_redundancies(&check, "SG-0002", "CAEM shall not cause lane departure unless to avoid collision", &existing, "dup", &mut log)
        .map_err(|e| e.to_string())?;
    ensure!(dup.findings.len() == 1 && dup.findings[0].relation == Relation::Duplicate, "duplicate: {:?}", dup.findings);
    ensure!(gw.call_count() == 0, "duplicate made an LLM call");

    let a = "The vehicle shall not depart the lane";
    let b = "Braking shall engage within 200 ms";
    let hand = hand_jaccard(
        &token_set(&["vehicle", "not", "depart", "lane"]),
        &token_set(&["braking", "engage", "within", "200", "ms"]),
    );
    ensure!(hand < 0.4, "hand value {hand}");
    let low = find_redundancies(&check, "SG-0002", a, &[("SG-0001".into(), b.into())], "low", &mut log)
        .map_err(|e| e.to_string())?;
    ensure!(low.findings.is_empty() && !low.classified, "low pair: {:?}", low.findings);
    ensure!(gw.call_count() == 0, "low pair made an LLM call");

    // {caem, hold, brake} vs {caem, hold, release, park}: 2 shared of 5
    let c = "CAEM shall hold the brake";
    let d = "CAEM shall hold and release the park";
    let boundary = hand_jaccard(&token_set(&["caem", "hold", "brake"]), &token_set(&["caem", "hold", "release", "park"]));
    ensure!(boundary == 0.4, "constructed pair has {boundary}");
    ensure!(hara_core::text::jaccard(c, d, &sw) == 0.4, "library Jaccard differs from hand value");
    write_fixture(
        &fx.path().join("redundancy.edge.json"),
        &structured("b", "r", "SG-0001: subsumed_by | the existing goal is broader"),
        FinishReason::Stop,
    )
    .map_err(|e| e.to_string())?;
    let edge = find_redundancies(&check, "SG-0002", c, &[("SG-0001".into(), d.into())], "edge", &mut log)
        .map_err(|e| e.to_string())?;
    ensure!(edge.classified && gw.call_count() == 1, "boundary pair did not reach classification");
    ensure!(
        edge.findings.len() == 1
            && edge.findings[0].relation == Relation::SubsumedBy
            && edge.findings[0].method == FindingMethod::Llm,
        "boundary findings {:?}",
        edge.findings
    );
    Ok(format!("duplicate without call; low pair J={hand:.3} no finding; J=0.4 pair classified"))
}

// ----------------------------------------------------------------- prompts

fn full_context(template_vars: &[String]) -> RenderContext {
    let item = demo_item();
    let mut ctx = RenderContext::new().protect(item.protected_texts());
    for v in template_vars {
        ctx = ctx.set(v, format!("value of {v}"));
    }
    ctx
}

fn prompt_invariants() -> Outcome {
    let glossary = Glossary { guide_words: guideword_catalogue(true), ..Glossary::default() };
    let overrides: BTreeMap<String, String> =
        [("hazard".to_string(), "Company definition: potential source of harm from the item.".to_string())].into();
    let glossary = glossary.with_overrides(&overrides);
    let templates = TemplateSet::builtin(&glossary).map_err(|e| e.to_string())?;
    let mut checked = 0;
    for t in templates.iter() {
        let vars: Vec<String> = hara_core::prompt::placeholders(&format!("{}{}", t.system_text, t.user_text));
        let messages = render(t, &full_context(&vars)).map_err(|e| format!("{}: {e}", t.step_id))?;
        let system = &messages[0].content;
        ensure!(!t.key_term_definitions.is_empty(), "{} declares no key terms", t.step_id);
        for (term, def) in &t.key_term_definitions {
            ensure!(system.contains(def.as_str()), "{}: definition of {term} missing", t.step_id);
            ensure!(glossary.definition(term) == Some(def.as_str()), "{}: {term} not from the glossary", t.step_id);
        }
        ensure!(
            find_leak(&few_shot_block(t), &demo_item().protected_texts().iter().map(|s| s.to_string()).collect::<Vec<_>>())
                .is_none(),
            "{}: few-shot leakage",
            t.step_id
        );
        checked += 1;
    }
    ensure!(
        render(templates.get("malfunctions").ok_or("no template")?, &full_context(&["function_name".into(), "description".into(), "output".into(), "guide_word".into()]))
            .map_err(|e| e.to_string())?[0]
            .content
            .contains("Company definition"),
        "key-term override not rendered"
    );

    // per-row call bound over a full run that includes one forced repair
    let fx = tempdir();
    let out = tempdir();
    write_demo_fixtures(fx.path(), 3, &[S2, S0, S1, S2, S0, S0]).map_err(|e| e.to_string())?;
    let bad = structured("b", "r", "Severity: unknown");
    for name in ["severity.HE-0002.json", "severity.HE-0002.repair.json"] {
        write_fixture(&fx.path().join(name), &bad, FinishReason::Stop).map_err(|e| e.to_string())?;
    }
    mock_run(fx.path(), out.path(), 3, &RunOptions::default())?;
    let mut per_row: BTreeMap<(String, String), usize> = BTreeMap::new();
    for step in Step::ALL {
        for e in read_transcript(out.path(), step) {
            let key = e.request.row_key.clone().unwrap_or_default();
            let key = key.strip_suffix(".repair").or(key.strip_prefix("repair")).unwrap_or(&key).to_string();
            *per_row.entry((e.request.step_id.clone(), key)).or_default() += 1;
        }
    }
    let max = per_row.values().copied().max().unwrap_or(0);
    ensure!(max <= 2, "a row needed {max} calls: {per_row:?}");
    ensure!(per_row.get(&("severity".into(), "HE-0002".into())) == Some(&2), "forced repair not observed");
    Ok(format!("{checked} templates render all key terms, no leakage; max {max} calls per row and step"))
}

// -------------------------------------------------------------------- main

fn main() {
    panic::set_hook(Box::new(|_| {}));
    type Check = fn() -> Outcome;
    let criteria: [(&str, Check); 9] = [
        ("end-to-end mock run", end_to_end),
        ("gate soundness property", gate_soundness),
        ("combination oracle", combination_oracle),
        ("determinism and resume", determinism_and_resume),
        ("score aggregation oracle", score_oracle),
        ("linter corpus", linter_corpus),
        ("consistency checker", consistency_checker),
        ("redundancy pre-filter", redundancy_prefilter),
        ("prompt invariants", prompt_invariants),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let started = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = started.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS  {name:<28} {detail} ({secs:.2} s)"),
            Err(reason) => {
                failed += 1;
                println!("FAIL  {name:<28} {reason}");
            }
        }
    }
    println!("{} of {} acceptance criteria passed", 9 - failed, 9);
    if failed > 0 {
        std::process::exit(1);
    }
}
