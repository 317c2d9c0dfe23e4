#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Mutex;

use discourse_core::backend::{BackendError, CompletionBackend, CompletionRequest, ScriptedReplay};
use discourse_core::orchestrator::SessionConfig;
use discourse_core::scenario::{ScenarioInstance, ScenarioTemplate};
use serde::Deserialize;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
}

#[derive(Debug, Deserialize)]
pub struct ExpectedMessage {
    pub speaker: String,
    pub content: String,
}

pub fn reference_expected() -> Vec<ExpectedMessage> {
    let raw = std::fs::read_to_string(fixture("reference_expected.json")).unwrap();
    serde_json::from_str(&raw).unwrap()
}

pub fn reference_render_text() -> String {
    reference_expected()
        .iter()
        .map(|m| format!("{}:\n{}\n\n", m.speaker, m.content))
        .collect()
}

/// Seed 7 makes the first uniform draw land on the Mayor.
pub fn reference_config() -> SessionConfig {
    SessionConfig {
        max_iterations: 21,
        moderator_period: 7,
        summon_cap: 3,
        seed: 7,
        ..SessionConfig::default()
    }
}

pub fn reference_scenario() -> ScenarioInstance {
    ScenarioTemplate::flood_reference().render(90).unwrap()
}

pub fn reference_backend() -> ScriptedReplay {
    ScriptedReplay::from_path(fixture("reference_replay.json")).unwrap()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Call {
    pub tag: String,
    pub history_len: usize,
    pub last_history: Option<String>,
}

/// Wraps a backend and records every request it sees.
pub struct Recorder<B> {
    pub inner: B,
    pub calls: Mutex<Vec<Call>>,
}

impl<B> Recorder<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            calls: Mutex::new(Vec::new()),
        }
    }

    pub fn calls(&self) -> Vec<Call> {
        self.calls.lock().unwrap().clone()
    }

    pub fn calls_tagged(&self, tag: &str) -> Vec<Call> {
        self.calls().into_iter().filter(|c| c.tag == tag).collect()
    }
}

impl<B: CompletionBackend> CompletionBackend for Recorder<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        self.calls.lock().unwrap().push(Call {
            tag: request.tag.clone(),
            history_len: request.history.len(),
            last_history: request.history.last().map(|h| h.content.clone()),
        });
        self.inner.complete(request)
    }
}
