//! Deterministic offline backends.

use std::path::Path;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BackendError, CompletionBackend, CompletionRequest};

/// One recorded response in a replay fixture.
///
/// `turn` is the 1-based call number. A non-empty `speaker_hint` other than
/// `*` must match the request tag (case-insensitively).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub turn: u32,
    #[serde(default)]
    pub speaker_hint: String,
    pub response: String,
}

/// Replays a fixture file, one entry per call, in call order.
#[derive(Debug)]
pub struct ScriptedReplay {
    entries: Vec<FixtureEntry>,
    cursor: Mutex<usize>,
}

impl ScriptedReplay {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let path = path.as_ref();
        let invalid = |reason: String| BackendError::InvalidFixture {
            path: path.to_path_buf(),
            reason,
        };
        let raw = std::fs::read_to_string(path).map_err(|e| invalid(e.to_string()))?;
        let entries: Vec<FixtureEntry> =
            serde_json::from_str(&raw).map_err(|e| invalid(e.to_string()))?;
        Self::new(entries).map_err(|e| match e {
            BackendError::InvalidFixture { reason, .. } => invalid(reason),
            other => other,
        })
    }

    pub fn new(entries: Vec<FixtureEntry>) -> Result<Self, BackendError> {
        for (i, entry) in entries.iter().enumerate() {
            let expected = i as u32 + 1;
            if entry.turn != expected {
                return Err(BackendError::InvalidFixture {
                    path: Default::default(),
                    reason: format!("entry {i} has turn {} (expected {expected})", entry.turn),
                });
            }
        }
        Ok(Self {
            entries,
            cursor: Mutex::new(0),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of entries served so far.
    pub fn served(&self) -> usize {
        *self.cursor.lock().expect("replay cursor poisoned")
    }
}

impl CompletionBackend for ScriptedReplay {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        request.validate()?;
        let mut cursor = self.cursor.lock().expect("replay cursor poisoned");
        let entry = self
            .entries
            .get(*cursor)
            .ok_or(BackendError::FixtureExhausted { served: *cursor })?;
        let hint = entry.speaker_hint.trim();
        if !hint.is_empty()
            && hint != "*"
            && !request.tag.is_empty()
            && !hint.eq_ignore_ascii_case(request.tag.trim())
        {
            return Err(BackendError::FixtureMismatch {
                turn: entry.turn,
                expected: hint.to_string(),
                actual: request.tag.clone(),
            });
        }
        *cursor += 1;
        if entry.response.trim().is_empty() {
            return Err(BackendError::EmptyCompletion);
        }
        Ok(entry.response.clone())
    }
}

/// Cycles through a fixed list of responses, ignoring the request.
#[derive(Debug)]
pub struct FixedResponder {
    responses: Vec<String>,
    cursor: Mutex<usize>,
}

impl FixedResponder {
    pub fn new(responses: Vec<String>) -> Result<Self, BackendError> {
        if responses.is_empty() {
            return Err(BackendError::Config(
                "fixed responder needs at least one response".into(),
            ));
        }
        Ok(Self {
            responses,
            cursor: Mutex::new(0),
        })
    }

    pub fn constant(response: impl Into<String>) -> Self {
        Self {
            responses: vec![response.into()],
            cursor: Mutex::new(0),
        }
    }
}

impl CompletionBackend for FixedResponder {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        request.validate()?;
        let mut cursor = self.cursor.lock().expect("responder cursor poisoned");
        let text = &self.responses[*cursor % self.responses.len()];
        *cursor += 1;
        if text.trim().is_empty() {
            return Err(BackendError::EmptyCompletion);
        }
        Ok(text.clone())
    }
}

/// Answers every call with a uniform integer from a seeded ChaCha stream.
#[derive(Debug)]
pub struct RandomInteger {
    low: i64,
    high: i64,
    rng: Mutex<ChaCha8Rng>,
}

impl RandomInteger {
    pub fn new(low: i64, high: i64, seed: u64) -> Result<Self, BackendError> {
        if low > high {
            return Err(BackendError::Config(format!("empty range {low}..={high}")));
        }
        Ok(Self {
            low,
            high,
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
        })
    }
}

impl CompletionBackend for RandomInteger {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        request.validate()?;
        let value = self
            .rng
            .lock()
            .expect("generator poisoned")
            .gen_range(self.low..=self.high);
        Ok(value.to_string())
    }
}
