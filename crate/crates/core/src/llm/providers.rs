//! Completion provider adapters: a live HTTP endpoint and an offline stub.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use crate::llm::{LlmError, ModelSpec};
use crate::policy::NetworkPolicy;

use super::prompts::prompt_hash;

/// Anything that can turn a prompt into completion text.
pub trait CompletionProvider {
    fn complete(&self, model: &ModelSpec, prompt: &str) -> Result<String, LlmError>;
    fn name(&self) -> &str;
}

/// Live provider speaking the neutral wire contract:
/// POST `{model_id, prompt, temperature, max_tokens}` → `{text}`.
pub struct HttpProvider {
    endpoint: String,
    api_key: Option<String>,
    policy: Arc<NetworkPolicy>,
    client: reqwest::blocking::Client,
}

#[derive(serde::Serialize)]
struct WireRequest<'a> {
    model_id: &'a str,
    prompt: &'a str,
    temperature: f64,
    max_tokens: u32,
}

#[derive(serde::Deserialize)]
struct WireResponse {
    text: String,
}

impl HttpProvider {
    pub fn new(endpoint: &str, api_key: Option<String>, policy: Arc<NetworkPolicy>) -> Self {
        HttpProvider {
            endpoint: endpoint.to_string(),
            api_key,
            policy,
            client: reqwest::blocking::Client::new(),
        }
    }
}

impl CompletionProvider for HttpProvider {
    fn complete(&self, model: &ModelSpec, prompt: &str) -> Result<String, LlmError> {
        self.policy.authorize_live_call(&self.endpoint)?;
        let request = WireRequest {
            model_id: &model.model_id,
            prompt,
            temperature: model.temperature,
            max_tokens: model.max_output_tokens,
        };
        let mut builder = self.client.post(&self.endpoint).json(&request);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder.send().map_err(|e| LlmError::ProviderError {
            provider: self.name().to_string(),
            status: e.to_string(),
        })?;
        if !response.status().is_success() {
            return Err(LlmError::ProviderError {
                provider: self.name().to_string(),
                status: format!("http status {}", response.status()),
            });
        }
        let body: WireResponse = response.json().map_err(|e| LlmError::ProviderError {
            provider: self.name().to_string(),
            status: format!("malformed response body: {e}"),
        })?;
        Ok(body.text)
    }

    fn name(&self) -> &str {
        "http"
    }
}

/// Offline responder backed by a JSON map from prompt hash to text.
///
/// A prompt whose hash is absent is a hard error so fixture drift surfaces
/// loudly instead of silently producing empty answers.
pub struct StubResponder {
    map: HashMap<String, String>,
}

impl StubResponder {
    pub fn new(map: HashMap<String, String>) -> Self {
        StubResponder { map }
    }

    /// Loads the stub map from a JSON file (`{"<prompt hash>": "text", ...}`).
    pub fn from_file(path: &Path) -> Result<Self, LlmError> {
        let bytes = std::fs::read(path).map_err(|e| LlmError::ProviderError {
            provider: "stub".into(),
            status: format!("cannot read {}: {e}", path.display()),
        })?;
        let map = serde_json::from_slice(&bytes).map_err(|e| LlmError::ProviderError {
            provider: "stub".into(),
            status: format!("malformed stub map {}: {e}", path.display()),
        })?;
        Ok(StubResponder { map })
    }
}

impl CompletionProvider for StubResponder {
    fn complete(&self, _model: &ModelSpec, prompt: &str) -> Result<String, LlmError> {
        let hash = prompt_hash(prompt);
        self.map
            .get(&hash)
            .cloned()
            .ok_or_else(|| LlmError::ProviderError {
                provider: "stub".into(),
                status: format!("no stub response for prompt hash {hash}"),
            })
    }

    fn name(&self) -> &str {
        "stub"
    }
}
