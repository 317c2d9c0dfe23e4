//! The conference-room record: the only memory a session has.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use super::SessionConfig;
use crate::extraction::Addressee;
use crate::scenario::ScenarioInstance;
use crate::text::display_label;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Speaker {
    Agent(String),
    System,
    Summarizer,
}

impl Speaker {
    pub fn label(&self) -> &str {
        match self {
            Speaker::Agent(name) => name,
            Speaker::System => "System",
            Speaker::Summarizer => "Summarizer",
        }
    }

    pub fn agent(&self) -> Option<&str> {
        match self {
            Speaker::Agent(name) => Some(name),
            _ => None,
        }
    }
}

impl fmt::Display for Speaker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl Serialize for Speaker {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for Speaker {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let label = String::deserialize(deserializer)?;
        Ok(match label.as_str() {
            "System" => Speaker::System,
            "Summarizer" => Speaker::Summarizer,
            _ => Speaker::Agent(label),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    Bootstrap,
    AgentTurn,
    ModeratorInsert,
    SystemAnnouncement,
    Summary,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub index: usize,
    pub speaker: Speaker,
    pub addressee: Addressee,
    pub kind: MessageKind,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssemblyEntry {
    pub role_name: String,
    pub joined_at_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeratorLogEntry {
    pub at_index: usize,
    pub analysis_text: String,
    pub inserted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SummaryStatus {
    Complete,
    /// Stored verbatim although some required sections were not found.
    Malformed {
        missing: Vec<String>,
    },
    Failed {
        reason: String,
    },
    EmptySession,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptMeta {
    pub scenario_name: String,
    pub probability_percent: u8,
    pub seed: u64,
    pub config: SessionConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary_status: Option<SummaryStatus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub meta: TranscriptMeta,
    pub assembly_log: Vec<AssemblyEntry>,
    pub moderator_log: Vec<ModeratorLogEntry>,
    pub messages: Vec<Message>,
}

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("transcript invariant violated: {0}")]
    Invariant(String),
    #[error("transcript JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("transcript file {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// `{scenario}_{probability}pct_run{k}.json`
pub fn transcript_file_name(scenario_name: &str, probability_percent: u8, run: usize) -> String {
    format!("{scenario_name}_{probability_percent}pct_run{run}.json")
}

impl Transcript {
    pub fn scenario(&self) -> ScenarioInstance {
        ScenarioInstance {
            rendered_text: self
                .messages
                .first()
                .map(|m| m.content.clone())
                .unwrap_or_default(),
            probability_percent: self.meta.probability_percent,
            template_name: self.meta.scenario_name.clone(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.meta.seed
    }

    pub fn summary(&self) -> Option<&Message> {
        self.messages
            .last()
            .filter(|m| m.kind == MessageKind::Summary)
    }

    pub fn agent_turns(&self) -> impl Iterator<Item = &Message> {
        self.messages
            .iter()
            .filter(|m| m.kind == MessageKind::AgentTurn)
    }

    /// Roles that joined after the opening message.
    pub fn summoned_roles(&self) -> impl Iterator<Item = &str> {
        self.assembly_log
            .iter()
            .filter(|e| e.joined_at_index > 0)
            .map(|e| e.role_name.as_str())
    }

    pub fn validate(&self) -> Result<(), TranscriptError> {
        let fail = |msg: String| Err(TranscriptError::Invariant(msg));
        for (i, m) in self.messages.iter().enumerate() {
            if m.index != i {
                return fail(format!("message {i} carries index {}", m.index));
            }
        }
        let bootstraps: Vec<_> = self
            .messages
            .iter()
            .filter(|m| m.kind == MessageKind::Bootstrap)
            .collect();
        if bootstraps.len() != 1 || bootstraps[0].index != 0 {
            return fail("exactly one bootstrap message is required, at index 0".into());
        }
        let summaries = self
            .messages
            .iter()
            .filter(|m| m.kind == MessageKind::Summary)
            .count();
        if summaries > 1 || (summaries == 1 && self.summary().is_none()) {
            return fail("at most one summary message, and only in last position".into());
        }
        for m in self.agent_turns() {
            let name = m.speaker.label();
            let joined = self
                .assembly_log
                .iter()
                .find(|e| e.role_name == name)
                .map(|e| e.joined_at_index);
            match joined {
                Some(j) if j <= m.index => {}
                _ => {
                    return fail(format!(
                        "agent turn {} by `{name}` before it joined",
                        m.index
                    ))
                }
            }
        }
        let inserted: Vec<usize> = self
            .moderator_log
            .iter()
            .filter(|e| e.inserted)
            .map(|e| e.at_index)
            .collect();
        let inserts: Vec<usize> = self
            .messages
            .iter()
            .filter(|m| m.kind == MessageKind::ModeratorInsert)
            .map(|m| m.index)
            .collect();
        if inserted != inserts {
            return fail("moderator log and moderator inserts disagree".into());
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("transcripts always serialize")
    }

    pub fn from_json(json: &str) -> Result<Self, TranscriptError> {
        let transcript: Transcript = serde_json::from_str(json)?;
        transcript.validate()?;
        Ok(transcript)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TranscriptError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| TranscriptError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Writes the transcript into `dir` under its conventional file name.
    pub fn save(&self, dir: impl AsRef<Path>, run: usize) -> Result<PathBuf, TranscriptError> {
        let dir = dir.as_ref();
        let path = dir.join(transcript_file_name(
            &self.meta.scenario_name,
            self.meta.probability_percent,
            run,
        ));
        let io = |source| TranscriptError::Io {
            path: path.clone(),
            source,
        };
        std::fs::create_dir_all(dir).map_err(io)?;
        std::fs::write(&path, self.to_json() + "\n").map_err(io)?;
        Ok(path)
    }

    /// Plain-text rendering: a `Speaker:` line followed by the content.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for m in &self.messages {
            out.push_str(&display_label(m.speaker.label()));
            out.push_str(":\n");
            out.push_str(&m.content);
            out.push_str("\n\n");
        }
        out
    }
}
