//! Domain types shared by the pipeline, the quality suite and the review service.
//!
//! Every type here is an immutable value object serialized as UTF-8 JSON with
//! lowercase enum tags. Revisions are made by building new values.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The function under analysis, as supplied by the user.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemDefinition {
    pub id: String,
    pub function_name: String,
    pub description: String,
    pub function_outputs: Vec<String>,
    #[serde(default)]
    pub odd_notes: String,
    #[serde(default)]
    pub driver_interaction: String,
}

/// A single violated item-definition invariant.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ItemViolation {
    #[error("empty description")]
    EmptyDescription,
    #[error("no function outputs")]
    NoOutputs,
    #[error("duplicate output after normalization: {0:?}")]
    DuplicateOutput(String),
    #[error("empty output name at position {0}")]
    EmptyOutput(usize),
}

#[derive(Debug, Error)]
pub enum ItemError {
    #[error("item definition is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid item definition: {}", join_violations(.0))]
    Invalid(Vec<ItemViolation>),
}

fn join_violations(v: &[ItemViolation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// Lowercase and collapse internal whitespace.
pub fn normalize_name(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

impl ItemDefinition {
    pub fn validate(&self) -> Result<(), Vec<ItemViolation>> {
        let mut violations = Vec::new();
        if self.description.trim().is_empty() {
            violations.push(ItemViolation::EmptyDescription);
        }
        if self.function_outputs.is_empty() {
            violations.push(ItemViolation::NoOutputs);
        }
        let mut seen = HashSet::new();
        for (i, out) in self.function_outputs.iter().enumerate() {
            let norm = normalize_name(out);
            if norm.is_empty() {
                violations.push(ItemViolation::EmptyOutput(i));
            } else if !seen.insert(norm) {
                violations.push(ItemViolation::DuplicateOutput(out.clone()));
            }
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(violations)
        }
    }

    /// Free-text fields that must never leak into generic few-shot examples.
    pub fn protected_texts(&self) -> Vec<&str> {
        let mut texts = vec![
            self.function_name.as_str(),
            self.description.as_str(),
            self.odd_notes.as_str(),
            self.driver_interaction.as_str(),
        ];
        texts.extend(self.function_outputs.iter().map(String::as_str));
        texts
    }
}

/// Parse and validate an item definition from its on-disk JSON form.
pub fn validate_item_definition(raw: &str) -> Result<ItemDefinition, ItemError> {
    let item: ItemDefinition = serde_json::from_str(raw)?;
    item.validate().map_err(ItemError::Invalid)?;
    Ok(item)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuideWord {
    pub name: String,
    pub definition: String,
}

impl GuideWord {
    fn new(name: &str, definition: &str) -> Self {
        Self {
            name: name.to_string(),
            definition: definition.to_string(),
        }
    }
}

/// The two classic guide words used for systematic hazard identification.
pub fn default_guideword_catalogue() -> Vec<GuideWord> {
    vec![
        GuideWord::new("omission", "the function does not produce the intended effect"),
        GuideWord::new(
            "commission",
            "The function produces the intended effect when it should not",
        ),
    ]
}

/// Default catalogue, optionally followed by the timing and magnitude words.
pub fn guideword_catalogue(extensions: bool) -> Vec<GuideWord> {
    let mut words = default_guideword_catalogue();
    if extensions {
        words.extend([
            GuideWord::new(
                "delay",
                "The function produces the intended effect later than required",
            ),
            GuideWord::new(
                "too_much",
                "The function produces a larger effect than intended",
            ),
            GuideWord::new(
                "too_little",
                "The function produces a smaller effect than intended",
            ),
        ]);
    }
    words
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MalfunctionSource {
    RuleEnumerated,
    LlmExpanded,
    UserSupplied,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Malfunction {
    pub id: String,
    pub output_ref: usize,
    pub guide_word: String,
    pub description: String,
    pub source: MalfunctionSource,
}

/// Scenario description layers. The catalogue is fixed.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioLayer {
    Road,
    Infrastructure,
    TemporaryManipulation,
    Objects,
    Environment,
    DigitalInformation,
}

impl ScenarioLayer {
    pub const ALL: [ScenarioLayer; 6] = [
        ScenarioLayer::Road,
        ScenarioLayer::Infrastructure,
        ScenarioLayer::TemporaryManipulation,
        ScenarioLayer::Objects,
        ScenarioLayer::Environment,
        ScenarioLayer::DigitalInformation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioLayer::Road => "road",
            ScenarioLayer::Infrastructure => "infrastructure",
            ScenarioLayer::TemporaryManipulation => "temporary_manipulation",
            ScenarioLayer::Objects => "objects",
            ScenarioLayer::Environment => "environment",
            ScenarioLayer::DigitalInformation => "digital_information",
        }
    }
}

impl FromStr for ScenarioLayer {
    type Err = String;

    /// Accepts the canonical names plus spaced / hyphenated variants.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = normalize_name(s).replace([' ', '-'], "_");
        let key = key.trim_end_matches('s');
        ScenarioLayer::ALL
            .into_iter()
            .find(|l| l.as_str().trim_end_matches('s') == key)
            .ok_or_else(|| format!("unknown scenario layer {s:?}"))
    }
}

impl fmt::Display for ScenarioLayer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioSource {
    LlmGenerated,
    UserSupplied,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperationalScenario {
    pub id: String,
    pub core_summary: String,
    pub detailed_description: String,
    pub factors: BTreeMap<ScenarioLayer, Vec<String>>,
    pub cluster_id: Option<String>,
    pub source: ScenarioSource,
}

impl OperationalScenario {
    /// The set of (layer, normalized value) pairs, used for diversity coverage.
    pub fn factor_set(&self) -> BTreeSet<(ScenarioLayer, String)> {
        self.factors
            .iter()
            .flat_map(|(layer, values)| values.iter().map(|v| (*layer, normalize_name(v))))
            .filter(|(_, v)| !v.is_empty())
            .collect()
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    S0,
    S1,
    S2,
    S3,
}

impl Severity {
    pub const ALL: [Severity; 4] = [Severity::S0, Severity::S1, Severity::S2, Severity::S3];

    /// Whether the event is safety relevant and needs a goal.
    pub fn is_safety_relevant(self) -> bool {
        self > Severity::S0
    }
}

impl FromStr for Severity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "S0" => Ok(Severity::S0),
            "S1" => Ok(Severity::S1),
            "S2" => Ok(Severity::S2),
            "S3" => Ok(Severity::S3),
            other => Err(format!("severity out of range: {other:?}")),
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Severity::S0 => "S0",
            Severity::S1 => "S1",
            Severity::S2 => "S2",
            Severity::S3 => "S3",
        };
        f.write_str(s)
    }
}

/// Exposure class. Carried as an annotation only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exposure {
    E0,
    E1,
    E2,
    E3,
    E4,
}

/// Controllability class. Carried as an annotation only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Controllability {
    C0,
    C1,
    C2,
    C3,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplanationBundle {
    pub background: String,
    pub assumptions: String,
    pub reasoning: String,
}

/// Lifecycle of a hazardous-event row through the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventState {
    #[default]
    Draft,
    Formulated,
    Assessed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HazardousEvent {
    pub id: String,
    pub scenario_ref: String,
    pub malfunction_ref: String,
    pub consequence: String,
    pub kinematic_rationale: Option<String>,
    pub severity: Option<Severity>,
    pub severity_rationale: String,
    pub exposure: Option<Exposure>,
    pub controllability: Option<Controllability>,
    pub explanation: ExplanationBundle,
    #[serde(default)]
    pub state: EventState,
}

impl HazardousEvent {
    pub fn draft(id: String, scenario_ref: String, malfunction_ref: String) -> Self {
        Self {
            id,
            scenario_ref,
            malfunction_ref,
            consequence: String::new(),
            kinematic_rationale: None,
            severity: None,
            severity_rationale: String::new(),
            exposure: None,
            controllability: None,
            explanation: ExplanationBundle::default(),
            state: EventState::Draft,
        }
    }

    /// Severity of a fully assessed row; `None` for drafts and failed rows.
    pub fn assessed_severity(&self) -> Option<Severity> {
        match self.state {
            EventState::Assessed => self.severity,
            _ => None,
        }
    }

    pub fn needs_goal(&self) -> bool {
        self.assessed_severity()
            .is_some_and(Severity::is_safety_relevant)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    AvoidFailureMode,
    RestrictExposure,
    ImproveControllability,
    ReduceSeverity,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::AvoidFailureMode,
        Strategy::RestrictExposure,
        Strategy::ImproveControllability,
        Strategy::ReduceSeverity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::AvoidFailureMode => "avoid_failure_mode",
            Strategy::RestrictExposure => "restrict_exposure",
            Strategy::ImproveControllability => "improve_controllability",
            Strategy::ReduceSeverity => "reduce_severity",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Strategy::AvoidFailureMode => "Avoid the failure mode",
            Strategy::RestrictExposure => "Avoid being exposed to the situation",
            Strategy::ImproveControllability => "Improve controllability",
            Strategy::ReduceSeverity => "Reduce the severity",
        }
    }

    /// Instruction handed to the goal-specification prompt.
    pub fn guidance(self) -> &'static str {
        match self {
            Strategy::AvoidFailureMode => {
                "Eliminate the cause of the hazardous event: require that the malfunctioning \
                 behaviour itself does not occur. This does not limit the function and is \
                 preferred where the technology allows it."
            }
            Strategy::RestrictExposure => {
                "Assume the failure mode cannot be ruled out with confidence. Require that the \
                 function is not active in, or is kept out of, the operational situation of the \
                 hazardous event, i.e. restrict the operational design domain."
            }
            Strategy::ImproveControllability => {
                "Require that the road users involved (driver, passengers, pedestrians, other \
                 drivers) keep or regain the ability to control the situation and avoid harm."
            }
            Strategy::ReduceSeverity => {
                "Identify factors of the hazardous event that determine the harm, such as \
                 speed, acceleration, deceleration or lateral motion, and require limits on \
                 them so the resulting harm is lower."
            }
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.as_str() == s.trim())
            .ok_or_else(|| format!("unknown strategy {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalStatus {
    Proposed,
    ReusedExisting,
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LintLevel {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LintFinding {
    pub rule_id: String,
    pub level: LintLevel,
    pub snippet: String,
    pub message: String,
    /// Rows or goals the finding is about, when it spans several.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub targets: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SafetyGoal {
    pub id: String,
    pub text: String,
    pub strategy: Strategy,
    pub covered_events: Vec<String>,
    pub status: GoalStatus,
    pub explanation: ExplanationBundle,
    pub lint_findings: Vec<LintFinding>,
    /// For `reused_existing` goals, the buffer goal this one points at.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reuses: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Duplicate,
    Subsumes,
    SubsumedBy,
    PartialOverlap,
    Distinct,
}

impl Relation {
    /// The relation seen from the other goal's side.
    pub fn inverse(self) -> Relation {
        match self {
            Relation::Subsumes => Relation::SubsumedBy,
            Relation::SubsumedBy => Relation::Subsumes,
            other => other,
        }
    }
}

impl FromStr for Relation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match normalize_name(s).replace([' ', '-'], "_").as_str() {
            "duplicate" => Ok(Relation::Duplicate),
            "subsumes" => Ok(Relation::Subsumes),
            "subsumed_by" => Ok(Relation::SubsumedBy),
            "partial_overlap" => Ok(Relation::PartialOverlap),
            "distinct" => Ok(Relation::Distinct),
            other => Err(format!("unknown relation {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FindingMethod {
    Lexical,
    Llm,
}

/// Relation of `goal_a` (the candidate) to `goal_b` (an existing goal).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedundancyFinding {
    pub goal_a: String,
    pub goal_b: String,
    pub relation: Relation,
    pub rationale: String,
    pub method: FindingMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub model_name: String,
    pub temperature_by_step: BTreeMap<String, f64>,
    pub prompt_version: String,
    pub created_at: DateTime<Utc>,
}

/// The complete analysis artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HaraTable {
    pub item_ref: String,
    pub rows: Vec<HazardousEvent>,
    pub goals: Vec<SafetyGoal>,
    pub scenarios: Vec<OperationalScenario>,
    pub malfunctions: Vec<Malfunction>,
    #[serde(default)]
    pub redundancy_findings: Vec<RedundancyFinding>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TableViolation {
    #[error("duplicate row id {0}")]
    DuplicateRow(String),
    #[error("duplicate goal id {0}")]
    DuplicateGoal(String),
    #[error("row {row} references unknown scenario {target}")]
    DanglingScenario { row: String, target: String },
    #[error("row {row} references unknown malfunction {target}")]
    DanglingMalfunction { row: String, target: String },
    #[error("goal {goal} covers unknown row {target}")]
    DanglingEvent { goal: String, target: String },
    #[error("goal {0} covers no rows")]
    EmptyCoverage(String),
    #[error("goal {goal} covers row {row} which is not above S0")]
    CoversNonRelevant { goal: String, row: String },
    #[error("row {0} has severity above S0 but no goal")]
    Uncovered(String),
    #[error("goal {0} text lacks \"shall\"")]
    MissingShall(String),
    #[error("row {0} is assessed but has empty consequence or rationale")]
    IncompleteRow(String),
    #[error("goal {goal} reuses unknown goal {target}")]
    DanglingReuse { goal: String, target: String },
}

/// Word-boundary, case-insensitive check for the mandatory modal.
pub fn contains_shall(text: &str) -> bool {
    text.split(|c: char| !c.is_alphanumeric() && c != '_')
        .any(|w| w.eq_ignore_ascii_case("shall"))
}

impl HaraTable {
    pub fn row(&self, id: &str) -> Option<&HazardousEvent> {
        self.rows.iter().find(|r| r.id == id)
    }

    pub fn goal(&self, id: &str) -> Option<&SafetyGoal> {
        self.goals.iter().find(|g| g.id == id)
    }

    pub fn scenario(&self, id: &str) -> Option<&OperationalScenario> {
        self.scenarios.iter().find(|s| s.id == id)
    }

    pub fn malfunction(&self, id: &str) -> Option<&Malfunction> {
        self.malfunctions.iter().find(|m| m.id == id)
    }

    pub fn goals_for_row<'a>(&'a self, row_id: &'a str) -> impl Iterator<Item = &'a SafetyGoal> {
        self.goals
            .iter()
            .filter(move |g| g.covered_events.iter().any(|e| e == row_id))
    }

    /// Referential integrity and the post-pipeline gate invariants.
    pub fn check_invariants(&self) -> Vec<TableViolation> {
        let mut out = Vec::new();
        let scenario_ids: HashSet<&str> = self.scenarios.iter().map(|s| s.id.as_str()).collect();
        let malfunction_ids: HashSet<&str> =
            self.malfunctions.iter().map(|m| m.id.as_str()).collect();
        let mut row_ids = HashSet::new();
        for row in &self.rows {
            if !row_ids.insert(row.id.as_str()) {
                out.push(TableViolation::DuplicateRow(row.id.clone()));
            }
            if !scenario_ids.contains(row.scenario_ref.as_str()) {
                out.push(TableViolation::DanglingScenario {
                    row: row.id.clone(),
                    target: row.scenario_ref.clone(),
                });
            }
            if !malfunction_ids.contains(row.malfunction_ref.as_str()) {
                out.push(TableViolation::DanglingMalfunction {
                    row: row.id.clone(),
                    target: row.malfunction_ref.clone(),
                });
            }
            if row.state == EventState::Assessed
                && (row.consequence.trim().is_empty() || row.severity_rationale.trim().is_empty())
            {
                out.push(TableViolation::IncompleteRow(row.id.clone()));
            }
        }
        out.extend(self.check_goal_coverage());
        let mut goal_ids = HashSet::new();
        for goal in &self.goals {
            if !goal_ids.insert(goal.id.as_str()) {
                out.push(TableViolation::DuplicateGoal(goal.id.clone()));
            }
            if !contains_shall(&goal.text) {
                out.push(TableViolation::MissingShall(goal.id.clone()));
            }
        }
        for goal in &self.goals {
            if let Some(target) = &goal.reuses {
                if !goal_ids.contains(target.as_str()) {
                    out.push(TableViolation::DanglingReuse {
                        goal: goal.id.clone(),
                        target: target.clone(),
                    });
                }
            }
        }
        out
    }

    /// Gate soundness alone: goals only on rows above S0, and every
    /// non-failed row above S0 covered.
    pub fn check_goal_coverage(&self) -> Vec<TableViolation> {
        let mut out = Vec::new();
        for goal in &self.goals {
            if goal.covered_events.is_empty() {
                out.push(TableViolation::EmptyCoverage(goal.id.clone()));
            }
            for ev in &goal.covered_events {
                match self.row(ev) {
                    None => out.push(TableViolation::DanglingEvent {
                        goal: goal.id.clone(),
                        target: ev.clone(),
                    }),
                    Some(row) if !row.needs_goal() => {
                        out.push(TableViolation::CoversNonRelevant {
                            goal: goal.id.clone(),
                            row: row.id.clone(),
                        })
                    }
                    Some(_) => {}
                }
            }
        }
        for row in self.rows.iter().filter(|r| r.needs_goal()) {
            if self.goals_for_row(&row.id).next().is_none() {
                out.push(TableViolation::Uncovered(row.id.clone()));
            }
        }
        out
    }
}

/// Review checklist item, lettered `a` to `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChecklistCriterion {
    pub letter: char,
    pub text: String,
}

/// One reviewer's overall score for one criterion on the 1..5 scale.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub criterion: char,
    pub reviewer: String,
    pub raw_score: u8,
}

impl Verdict {
    pub fn validate(&self) -> Result<(), String> {
        if !('a'..='j').contains(&self.criterion) {
            return Err(format!("unknown criterion {:?}", self.criterion));
        }
        if !(1..=5).contains(&self.raw_score) {
            return Err(format!("raw_score {} outside 1..5", self.raw_score));
        }
        Ok(())
    }
}

/// Mean and population standard deviation on the remapped 1..4 scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedScore {
    pub criterion: char,
    pub mean: f64,
    pub stddev: f64,
    pub n_used: usize,
    pub n_excluded: usize,
}

/// Zero-padded creation-order identifier with a type prefix, e.g. `HE-0007`.
pub fn make_id(prefix: &str, index: usize) -> String {
    format!("{prefix}-{:04}", index + 1)
}

pub const SCENARIO_PREFIX: &str = "SC";
pub const MALFUNCTION_PREFIX: &str = "MF";
pub const EVENT_PREFIX: &str = "HE";
pub const GOAL_PREFIX: &str = "SG";
