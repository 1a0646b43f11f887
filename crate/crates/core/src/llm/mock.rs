use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{
    prompt_fingerprint, AttemptError, ChatBackend, FinishReason, LlmError, LlmRequest,
    LlmResponse, Usage,
};

#[derive(Debug, Deserialize)]
struct Fixture {
    content: String,
    #[serde(default = "stop")]
    finish_reason: FinishReason,
    #[serde(default)]
    usage: Usage,
}

fn stop() -> FinishReason {
    FinishReason::Stop
}

/// Deterministic replay of recorded responses.
///
/// Lookup order: `<step_id>.<row_key>.json` (row key `default` when absent),
/// then `<step_id>.<sha256-prefix-16>.json` over the normalized prompt.
#[derive(Debug, Clone)]
pub struct MockBackend {
    dir: PathBuf,
}

impl MockBackend {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self, LlmError> {
        let dir = dir.into();
        if !dir.is_dir() {
            return Err(LlmError::Config(format!(
                "fixture directory {} does not exist",
                dir.display()
            )));
        }
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn keyed_path(&self, step_id: &str, row_key: &str) -> PathBuf {
        self.dir.join(format!("{step_id}.{row_key}.json"))
    }

    pub fn hashed_path(&self, request: &LlmRequest) -> PathBuf {
        self.dir.join(format!(
            "{}.{}.json",
            request.step_id,
            prompt_fingerprint(&request.messages)
        ))
    }

    pub fn lookup(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError> {
        let candidates = [
            self.keyed_path(&request.step_id, request.fixture_key()),
            self.hashed_path(request),
        ];
        let path = candidates
            .iter()
            .find(|p| p.is_file())
            .ok_or_else(|| LlmError::FixtureMissing {
                step_id: request.step_id.clone(),
                row_key: request.fixture_key().to_string(),
            })?;
        let unreadable = |reason: String| LlmError::Fixture {
            path: path.display().to_string(),
            reason,
        };
        let raw = std::fs::read_to_string(path).map_err(|e| unreadable(e.to_string()))?;
        let fixture: Fixture = serde_json::from_str(&raw).map_err(|e| unreadable(e.to_string()))?;
        Ok(LlmResponse {
            content: fixture.content,
            finish_reason: fixture.finish_reason,
            usage: fixture.usage,
        })
    }
}

impl ChatBackend for MockBackend {
    fn send(&self, request: &LlmRequest) -> Result<LlmResponse, AttemptError> {
        self.lookup(request).map_err(AttemptError::Fatal)
    }

    fn model_name(&self) -> String {
        "mock".to_string()
    }
}

/// Write a fixture file in the replay format.
pub fn write_fixture(path: &Path, content: &str, finish_reason: FinishReason) -> std::io::Result<()> {
    let body = serde_json::json!({ "content": content, "finish_reason": finish_reason });
    std::fs::write(path, serde_json::to_vec_pretty(&body)?)
}
