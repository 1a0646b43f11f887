use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::HttpBackendConfig;
use crate::model::Strategy;
use crate::quality::LintRuleSet;
use crate::text::default_stop_words;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Real,
    #[default]
    Mock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMode {
    #[default]
    Llm,
    Deterministic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmSettings {
    pub base_url: String,
    pub model: String,
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub max_tokens: u32,
}

impl Default for LlmSettings {
    fn default() -> Self {
        let http = HttpBackendConfig::default();
        Self {
            base_url: http.base_url,
            model: http.model,
            api_key_env: http.api_key_env,
            timeout_secs: http.timeout_secs,
            max_tokens: 1500,
        }
    }
}

impl LlmSettings {
    pub fn http(&self) -> HttpBackendConfig {
        HttpBackendConfig {
            base_url: self.base_url.clone(),
            model: self.model.clone(),
            api_key_env: self.api_key_env.clone(),
            timeout_secs: self.timeout_secs,
        }
    }
}

/// Run configuration, stored as `config.toml` in every run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub guide_word_extensions: bool,
    pub scenarios_target_count: usize,
    pub diverse_selection_count: usize,
    pub strategies_enabled: Vec<Strategy>,
    pub parallelism: usize,
    pub backend: Backend,
    pub fixtures: Option<PathBuf>,
    pub selection_mode: SelectionMode,
    pub redundancy_threshold: f64,
    pub stop_words: Vec<String>,
    pub deep_consistency_check: bool,
    pub templates_dir: Option<PathBuf>,
    /// Per-step temperature overrides keyed by step id.
    pub temperatures: BTreeMap<String, f64>,
    /// Company-specific key-term definitions.
    pub key_terms: BTreeMap<String, String>,
    pub lint: LintRuleSet,
    pub llm: LlmSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            guide_word_extensions: false,
            scenarios_target_count: 8,
            diverse_selection_count: 4,
            strategies_enabled: Strategy::ALL.to_vec(),
            parallelism: 4,
            backend: Backend::Mock,
            fixtures: None,
            selection_mode: SelectionMode::Llm,
            redundancy_threshold: 0.4,
            stop_words: default_stop_words(),
            deep_consistency_check: false,
            templates_dir: None,
            temperatures: BTreeMap::new(),
            key_terms: BTreeMap::new(),
            lint: LintRuleSet::default(),
            llm: LlmSettings::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot parse configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot write configuration: {0}")]
    Write(#[from] toml::ser::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.scenarios_target_count == 0 || self.diverse_selection_count == 0 {
            return invalid("counts must be at least 1");
        }
        if self.parallelism == 0 {
            return invalid("parallelism must be at least 1");
        }
        if self.strategies_enabled.is_empty() {
            return invalid("at least one strategy must be enabled");
        }
        if !(0.0..=1.0).contains(&self.redundancy_threshold) {
            return invalid("redundancy_threshold must lie in 0..1");
        }
        if self.lint.required_modal.trim().is_empty() {
            return invalid("lint.required_modal must not be empty");
        }
        Ok(())
    }

    /// Enabled strategies in canonical order, without repeats.
    pub fn strategies(&self) -> Vec<Strategy> {
        Strategy::ALL
            .into_iter()
            .filter(|s| self.strategies_enabled.contains(s))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let cfg = PipelineConfig {
            fixtures: Some("fx".into()),
            ..Default::default()
        };
        let back = PipelineConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = PipelineConfig::from_toml("scenarios_target_count = 3\n[lint]\nvague_phrases = [\"asap\"]\n").unwrap();
        assert_eq!(cfg.scenarios_target_count, 3);
        assert_eq!(cfg.lint.vague_phrases, ["asap"]);
        assert_eq!(cfg.lint.required_modal, "shall");
        assert_eq!(cfg.redundancy_threshold, 0.4);
    }

    #[test]
    fn rejects_empty_strategies() {
        assert!(PipelineConfig::from_toml("strategies_enabled = []").is_err());
    }
}
