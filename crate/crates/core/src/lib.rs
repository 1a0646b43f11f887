//! Core library for LLM-assisted hazard analysis and risk assessment:
//! domain model, LLM gateway, prompt engine, pipeline and quality checks.

pub mod demo;
pub mod export;
pub mod llm;
pub mod model;
pub mod prompt;
pub mod quality;
pub mod pipeline;
pub mod text;
