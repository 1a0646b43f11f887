use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{default_guideword_catalogue, GuideWord};
use crate::quality::default_vague_phrases;

/// Definitions injected into prompts, shared across steps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Glossary {
    pub key_terms: BTreeMap<String, String>,
    pub guide_words: Vec<GuideWord>,
    /// Phrases the goal prompts forbid and the linter flags.
    pub forbidden_phrases: Vec<String>,
}

pub fn default_key_terms() -> BTreeMap<String, String> {
    [
        (
            "scenario",
            "A description of the temporal development of scenes in which the vehicle with the \
             function operates, including the road layout, infrastructure, other road users and \
             objects, environmental conditions and the actions of every agent involved.",
        ),
        (
            "malfunctioning behaviour",
            "A failure or an unintended behaviour of the function with respect to its design \
             intent, described for one function output and one guide word.",
        ),
        (
            "hazard",
            "A potential source of harm caused by malfunctioning behaviour of the function.",
        ),
        (
            "hazardous event",
            "The combination of a hazard with an operational scenario, stated as the concrete \
             consequence that the malfunctioning behaviour has for the agents in that scenario.",
        ),
        (
            "severity",
            "An estimate of the extent of harm to one or more persons that can occur in a \
             hazardous event. S0: no injuries. S1: light and moderate injuries. S2: severe and \
             life-threatening injuries, survival probable. S3: life-threatening injuries with \
             survival uncertain, or fatal injuries.",
        ),
        (
            "safety goal",
            "A top-level safety requirement for a hazardous event, formulated with \"shall\", \
             stating what must be achieved to avoid or mitigate the hazardous event without \
             prescribing a technical solution.",
        ),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

impl Default for Glossary {
    fn default() -> Self {
        Self {
            key_terms: default_key_terms(),
            guide_words: default_guideword_catalogue(),
            forbidden_phrases: default_vague_phrases(),
        }
    }
}

impl Glossary {
    pub fn definition(&self, term: &str) -> Option<&str> {
        self.key_terms
            .get(term)
            .map(String::as_str)
            .or_else(|| {
                self.guide_words
                    .iter()
                    .find(|g| g.name == term)
                    .map(|g| g.definition.as_str())
            })
    }

    /// Replace definitions with company-specific text where given.
    pub fn with_overrides(mut self, overrides: &BTreeMap<String, String>) -> Self {
        for (k, v) in overrides {
            self.key_terms.insert(k.clone(), v.clone());
        }
        self
    }
}
