//! OpenAI-compatible chat-completion client.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{BackendError, CompletionBackend, CompletionRequest, HistoryEntry};

const WIRE_ROLES: [&str; 3] = ["system", "user", "assistant"];

#[derive(Debug, Serialize, PartialEq)]
pub(crate) struct WireMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Serialize)]
pub(crate) struct WireRequest<'a> {
    pub model: &'a str,
    pub messages: Vec<WireMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Debug, Deserialize)]
struct WireChoice {
    message: WireReply,
}

#[derive(Debug, Deserialize)]
struct WireReply {
    content: Option<String>,
}

/// Speaker-labelled history becomes `user` turns prefixed with the speaker.
/// Entries already labelled with a wire role pass through untouched.
fn to_wire(entry: &HistoryEntry) -> WireMessage {
    if WIRE_ROLES.contains(&entry.role.as_str()) {
        WireMessage {
            role: entry.role.clone(),
            content: entry.content.clone(),
        }
    } else {
        WireMessage {
            role: "user".into(),
            content: format!("{}: {}", entry.role, entry.content),
        }
    }
}

pub(crate) fn wire_request<'a>(model: &'a str, request: &CompletionRequest) -> WireRequest<'a> {
    let mut messages = Vec::with_capacity(request.history.len() + 1);
    if !request.system_prompt.is_empty() {
        messages.push(WireMessage {
            role: "system".into(),
            content: request.system_prompt.clone(),
        });
    }
    messages.extend(request.history.iter().map(to_wire));
    WireRequest {
        model,
        messages,
        temperature: request.temperature,
        max_tokens: request.max_tokens,
        seed: request.seed,
    }
}

pub struct HttpBackend {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    api_key: String,
}

impl HttpBackend {
    pub fn new(base_url: String, model: String, api_key: String) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .into();
        Self {
            agent,
            endpoint: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            model,
            api_key,
        }
    }
}

impl CompletionBackend for HttpBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        request.validate()?;
        let body = wire_request(&self.model, request);
        let mut response = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(&body)
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        if !(200..300).contains(&status) {
            let body = response.body_mut().read_to_string().unwrap_or_default();
            return Err(BackendError::Status { status, body });
        }
        let parsed: WireResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::MalformedResponse(e.to_string()))?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .unwrap_or_default();
        if text.trim().is_empty() {
            return Err(BackendError::EmptyCompletion);
        }
        Ok(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_body_layout() {
        let req = CompletionRequest::new("Mayor", "You are the mayor.")
            .with_message("Moderator", "We are in a township.")
            .with_message("user", "raw")
            .with_temperature(0.5)
            .with_max_tokens(64);
        let body = serde_json::to_value(wire_request("gpt-4", &req)).unwrap();
        assert_eq!(
            body,
            serde_json::json!({
                "model": "gpt-4",
                "messages": [
                    {"role": "system", "content": "You are the mayor."},
                    {"role": "user", "content": "Moderator: We are in a township."},
                    {"role": "user", "content": "raw"}
                ],
                "temperature": 0.5,
                "max_tokens": 64
            })
        );
        let seeded = serde_json::to_value(wire_request("m", &req.with_seed(Some(7)))).unwrap();
        assert_eq!(seeded["seed"], 7);
    }
}
