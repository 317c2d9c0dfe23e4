//! The virtual conference room.
//!
//! The orchestrator owns the transcript and decides who speaks. Agents are
//! stateless: every turn sends the whole conversation so far. After each
//! response the extractor decides the addressee, which becomes the next
//! speaker unless it is the current speaker or unknown, in which case the next
//! speaker is drawn uniformly from the other participants. The moderator
//! reviews the discussion every `moderator_period` turns and never takes a
//! regular turn.

mod session;
mod transcript;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::ConvergenceMetrics;
use crate::backend::MAX_TEMPERATURE;
use crate::extraction::{Addressee, ExtractionResult};
use crate::persona::{shipped_personas, validate_assembly, PersonaSpec};

pub use session::{
    moderator_check, run_session, summarize, summon_agent, ModeratorOutcome, SummonOutcome,
    EMPTY_SESSION_NOTICE, REQUIRED_SUMMARY_SECTIONS, SUMMARIZER_PROMPT,
};
pub use transcript::{
    transcript_file_name, AssemblyEntry, Message, MessageKind, ModeratorLogEntry, Speaker,
    SummaryStatus, Transcript, TranscriptError, TranscriptMeta,
};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtractionMode {
    /// Extractor completion call, deterministic parser on failure.
    #[default]
    Agent,
    /// Deterministic parser only; no extractor calls.
    Deterministic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub max_iterations: u32,
    pub moderator_period: u32,
    pub summon_cap: u32,
    pub temperature: f64,
    pub seed: u64,
    pub max_tokens: u32,
    pub extraction: ExtractionMode,
    /// Stop early once this many consecutive turns pass without a summon.
    /// `None` disables early stopping.
    pub stability_window: Option<u32>,
    pub initial_personas: Vec<PersonaSpec>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            max_iterations: 20,
            moderator_period: 6,
            summon_cap: 3,
            temperature: 0.7,
            seed: 0,
            max_tokens: 1024,
            extraction: ExtractionMode::Agent,
            stability_window: None,
            initial_personas: shipped_personas(),
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), SessionError> {
        let invalid = |msg: &str| Err(SessionError::InvalidConfig(msg.to_string()));
        validate_assembly(&self.initial_personas)
            .map_err(|e| SessionError::InvalidConfig(e.to_string()))?;
        if self
            .initial_personas
            .iter()
            .filter(|p| p.is_moderator)
            .count()
            != 1
        {
            return invalid("exactly one initial persona must be the moderator");
        }
        if self
            .initial_personas
            .iter()
            .filter(|p| !p.is_moderator)
            .count()
            < 2
        {
            return invalid("at least two non-moderator personas are required");
        }
        if self.moderator_period < 2 {
            return invalid("moderator_period must be at least 2");
        }
        if self.summon_cap > self.max_iterations {
            return invalid("summon_cap cannot exceed max_iterations");
        }
        if !(0.0..=MAX_TEMPERATURE).contains(&self.temperature) {
            return invalid("temperature outside [0, 2]");
        }
        if self.max_tokens == 0 {
            return invalid("max_tokens must be at least 1");
        }
        if self.stability_window == Some(0) {
            return invalid("stability_window must be positive");
        }
        Ok(())
    }

    pub fn moderator(&self) -> &PersonaSpec {
        self.initial_personas
            .iter()
            .find(|p| p.is_moderator)
            .expect("validated config has a moderator")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub transcript: Transcript,
    pub summary: String,
    pub summary_status: SummaryStatus,
    pub convergence: ConvergenceMetrics,
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("invalid session config: {0}")]
    InvalidConfig(String),
    /// The partial transcript has no summary.
    #[error("session aborted: {reason}")]
    Aborted {
        transcript: Box<Transcript>,
        reason: String,
    },
}

/// Picks who speaks after the current speaker.
///
/// A directed address to another eligible participant is honored. Anything
/// else (a broadcast, a self-address, an unknown or moderator name) draws
/// uniformly from `assembly` minus the current speaker and the moderator.
pub fn select_next_speaker<R: Rng + ?Sized>(
    extraction: &ExtractionResult,
    assembly: &[String],
    current_speaker: &str,
    moderator: Option<&str>,
    rng: &mut R,
) -> String {
    let is = |a: &str, b: &str| a.trim().eq_ignore_ascii_case(b.trim());
    let candidates: Vec<&String> = assembly
        .iter()
        .filter(|r| !is(r, current_speaker) && !moderator.is_some_and(|m| is(r, m)))
        .collect();
    assert!(
        !candidates.is_empty(),
        "speaker selection needs another non-moderator participant"
    );
    if let Addressee::Specific(target) = &extraction.addressee {
        if let Some(hit) = candidates.iter().find(|r| is(r, target)) {
            return (*hit).clone();
        }
    }
    candidates[rng.gen_range(0..candidates.len())].clone()
}
