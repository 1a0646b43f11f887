//! Human-readable renderings of a finished table.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::model::{EventState, HaraTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Markdown,
    Json,
}

impl FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ExportFormat::Csv),
            "md" | "markdown" => Ok(ExportFormat::Markdown),
            "json" => Ok(ExportFormat::Json),
            other => Err(format!("unknown export format {other:?} (expected csv, md or json)")),
        }
    }
}

impl fmt::Display for ExportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExportFormat::Csv => "csv",
            ExportFormat::Markdown => "md",
            ExportFormat::Json => "json",
        })
    }
}

#[derive(Debug, Error)]
pub enum ExportError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub const COLUMNS: [&str; 9] = [
    "ID",
    "Core Scenario",
    "Detailed Scenario",
    "Guide Word",
    "Malfunction",
    "Hazardous Event",
    "Severity",
    "Severity Rationale",
    "Safety Goal IDs",
];

/// One record per row, in [`COLUMNS`] order.
pub fn table_records(table: &HaraTable) -> Vec<[String; 9]> {
    table
        .rows
        .iter()
        .map(|row| {
            let scenario = table.scenario(&row.scenario_ref);
            let malfunction = table.malfunction(&row.malfunction_ref);
            let severity = match (row.state, row.severity) {
                (EventState::Failed, _) => "failed".to_string(),
                (_, Some(s)) => s.to_string(),
                (_, None) => String::new(),
            };
            let goals: Vec<&str> = table.goals_for_row(&row.id).map(|g| g.id.as_str()).collect();
            [
                row.id.clone(),
                scenario.map(|s| s.core_summary.clone()).unwrap_or_default(),
                scenario.map(|s| s.detailed_description.clone()).unwrap_or_default(),
                malfunction.map(|m| m.guide_word.clone()).unwrap_or_default(),
                malfunction.map(|m| m.description.clone()).unwrap_or_default(),
                row.consequence.clone(),
                severity,
                row.severity_rationale.clone(),
                goals.join("; "),
            ]
        })
        .collect()
}

fn markdown_cell(s: &str) -> String {
    s.replace('|', "\\|").replace(['\n', '\r'], " ")
}

pub fn export_table(table: &HaraTable, format: ExportFormat) -> Result<String, ExportError> {
    match format {
        ExportFormat::Json => Ok(serde_json::to_string_pretty(table)? + "\n"),
        ExportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(COLUMNS)?;
            for rec in table_records(table) {
                w.write_record(&rec)?;
            }
            let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
            Ok(String::from_utf8(bytes).expect("csv of utf-8 fields"))
        }
        ExportFormat::Markdown => {
            let mut out = format!("| {} |\n|{}\n", COLUMNS.join(" | "), "---|".repeat(COLUMNS.len()));
            for rec in table_records(table) {
                let cells: Vec<String> = rec.iter().map(|c| markdown_cell(c)).collect();
                out.push_str(&format!("| {} |\n", cells.join(" | ")));
            }
            if !table.goals.is_empty() {
                out.push_str("\n| Safety Goal | Strategy | Status | Text |\n|---|---|---|---|\n");
                for g in &table.goals {
                    out.push_str(&format!(
                        "| {} | {} | {} | {} |\n",
                        g.id,
                        g.strategy,
                        serde_json::to_value(g.status)?.as_str().unwrap_or_default(),
                        markdown_cell(&g.text)
                    ));
                }
            }
            Ok(out)
        }
    }
}
