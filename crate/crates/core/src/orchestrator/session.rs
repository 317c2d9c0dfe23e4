use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tracing::{info, warn};

use super::{
    select_next_speaker, AssemblyEntry, ExtractionMode, Message, MessageKind, ModeratorLogEntry,
    RunOutput, SessionConfig, SessionError, Speaker, SummaryStatus, Transcript, TranscriptMeta,
};
use crate::analysis::convergence_metrics;
use crate::backend::{BackendError, CompletionBackend, CompletionRequest, HistoryEntry};
use crate::extraction::{extract_turn, Addressee, TurnExtraction};
use crate::persona::{
    build_persona_prompt, generate_persona_from_description, PersonaSpec, VERDICT_MARKER,
};
use crate::scenario::ScenarioInstance;

pub const SUMMARIZER_PROMPT: &str = include_str!("../../assets/prompts/summarizer.txt");

pub const EMPTY_SESSION_NOTICE: &str =
    "Report summary: no agent contributions were recorded, so there are no recommendations to report.";

/// Lowercase fragments the summary must contain to count as well-formed.
pub const REQUIRED_SUMMARY_SECTIONS: [&str; 6] = [
    "agents present from the beginning",
    "agents summoned",
    "key points",
    "advantages",
    "drawbacks",
    "conclusion",
];

const MODERATOR_CUE: &str =
    "Give your analysis of the discussion so far, starting with your verdict line.";
const SUMMARIZER_CUE: &str = "Write the report for the conversation above.";

fn history(transcript: &Transcript) -> Vec<HistoryEntry> {
    transcript
        .messages
        .iter()
        .map(|m| HistoryEntry::new(m.speaker.label(), m.content.clone()))
        .collect()
}

fn push_message(
    transcript: &mut Transcript,
    speaker: Speaker,
    addressee: Addressee,
    kind: MessageKind,
    content: String,
) -> usize {
    let index = transcript.messages.len();
    transcript.messages.push(Message {
        index,
        speaker,
        addressee,
        kind,
        content,
    });
    index
}

fn roster(assembly: &[PersonaSpec]) -> Vec<String> {
    assembly.iter().map(|p| p.role_name.clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModeratorOutcome {
    Inserted(Message),
    Logged(String),
}

/// Asks the moderator for an analysis and either inserts it or only logs it.
///
/// The verdict comes from a `VERDICT: REFOCUS` / `VERDICT: LOG` line. A
/// missing or unknown verdict, or an empty analysis, is treated as log-only.
pub fn moderator_check(
    transcript: &mut Transcript,
    moderator: &PersonaSpec,
    assembly: &[PersonaSpec],
    config: &SessionConfig,
    backend: &dyn CompletionBackend,
) -> Result<ModeratorOutcome, BackendError> {
    let prompt = build_persona_prompt(moderator, &roster(assembly))
        .map_err(|e| BackendError::InvalidRequest(e.to_string()))?;
    let request = CompletionRequest::new("moderator", prompt.text)
        .with_history(history(transcript))
        .with_message("user", MODERATOR_CUE)
        .with_temperature(config.temperature)
        .with_max_tokens(config.max_tokens)
        .with_seed(Some(config.seed));
    let response = backend.complete(&request)?;

    let mut refocus = false;
    let mut analysis_lines = Vec::new();
    for line in response.lines() {
        let trimmed = line.trim_start();
        let is_verdict = trimmed
            .get(..VERDICT_MARKER.len())
            .is_some_and(|h| h.eq_ignore_ascii_case(VERDICT_MARKER));
        if is_verdict {
            let verdict = trimmed[VERDICT_MARKER.len()..].trim();
            refocus = verdict.eq_ignore_ascii_case("REFOCUS");
        } else {
            analysis_lines.push(line);
        }
    }
    let analysis = analysis_lines.join("\n").trim().to_string();
    let at_index = transcript.messages.len();
    if refocus && !analysis.is_empty() {
        push_message(
            transcript,
            Speaker::Agent(moderator.role_name.clone()),
            Addressee::Everyone,
            MessageKind::ModeratorInsert,
            analysis.clone(),
        );
        transcript.moderator_log.push(ModeratorLogEntry {
            at_index,
            analysis_text: analysis,
            inserted: true,
        });
        Ok(ModeratorOutcome::Inserted(
            transcript.messages[at_index].clone(),
        ))
    } else {
        let logged = if analysis.is_empty() {
            response.trim().to_string()
        } else {
            analysis
        };
        transcript.moderator_log.push(ModeratorLogEntry {
            at_index,
            analysis_text: logged.clone(),
            inserted: false,
        });
        Ok(ModeratorOutcome::Logged(logged))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SummonOutcome {
    Summoned(String),
    CapReached,
    Failed(String),
}

/// Generates and seats a new agent described by another agent.
///
/// On success the agent joins the assembly and a `System` announcement is
/// appended. A failed generation is announced; a request over the cap is
/// dropped with a warning only.
pub fn summon_agent(
    description: &str,
    transcript: &mut Transcript,
    assembly: &mut Vec<PersonaSpec>,
    config: &SessionConfig,
    backend: &dyn CompletionBackend,
) -> SummonOutcome {
    let used = transcript.summoned_roles().count() as u32;
    if used >= config.summon_cap {
        warn!(%description, cap = config.summon_cap, "summon cap reached, request ignored");
        return SummonOutcome::CapReached;
    }
    let generated = generate_persona_from_description(
        description,
        backend,
        config.temperature,
        config.max_tokens,
    )
    .map_err(|e| e.to_string())
    .and_then(|spec| {
        if assembly.iter().any(|p| {
            p.role_name
                .trim()
                .eq_ignore_ascii_case(spec.role_name.trim())
        }) {
            Err(format!("`{}` is already in the room", spec.role_name))
        } else {
            Ok(spec)
        }
    });
    match generated {
        Ok(spec) => {
            let role = spec.role_name.clone();
            let index = push_message(
                transcript,
                Speaker::System,
                Addressee::Everyone,
                MessageKind::SystemAnnouncement,
                format!("New agent has been summoned: {role}"),
            );
            transcript.assembly_log.push(AssemblyEntry {
                role_name: role.clone(),
                joined_at_index: index,
            });
            assembly.push(spec);
            info!(%role, "agent summoned");
            SummonOutcome::Summoned(role)
        }
        Err(reason) => {
            warn!(%description, %reason, "summon failed");
            push_message(
                transcript,
                Speaker::System,
                Addressee::Everyone,
                MessageKind::SystemAnnouncement,
                format!("Agent could not be summoned: {}", description.trim()),
            );
            SummonOutcome::Failed(reason)
        }
    }
}

/// Produces the closing report with one stateless call over the whole transcript.
pub fn summarize(
    transcript: &Transcript,
    config: &SessionConfig,
    backend: &dyn CompletionBackend,
) -> (String, SummaryStatus) {
    if transcript.agent_turns().next().is_none() {
        return (
            EMPTY_SESSION_NOTICE.to_string(),
            SummaryStatus::EmptySession,
        );
    }
    let request = CompletionRequest::new("summarizer", SUMMARIZER_PROMPT)
        .with_history(history(transcript))
        .with_message("user", SUMMARIZER_CUE)
        .with_temperature(config.temperature)
        .with_max_tokens(config.max_tokens.max(2048))
        .with_seed(Some(config.seed));
    match backend.complete(&request) {
        Ok(summary) => {
            let lower = summary.to_lowercase();
            let missing: Vec<String> = REQUIRED_SUMMARY_SECTIONS
                .iter()
                .filter(|s| !lower.contains(*s))
                .map(|s| s.to_string())
                .collect();
            let status = if missing.is_empty() {
                SummaryStatus::Complete
            } else {
                SummaryStatus::Malformed { missing }
            };
            (summary, status)
        }
        Err(err) => (
            format!("Summary unavailable: {err}"),
            SummaryStatus::Failed {
                reason: err.to_string(),
            },
        ),
    }
}

struct Room<'a> {
    config: &'a SessionConfig,
    backend: &'a dyn CompletionBackend,
    rng: ChaCha8Rng,
    transcript: Transcript,
    assembly: Vec<PersonaSpec>,
    moderator: PersonaSpec,
}

impl Room<'_> {
    fn abort(self, reason: String) -> SessionError {
        let mut transcript = self.transcript;
        transcript.meta.aborted = Some(reason.clone());
        SessionError::Aborted {
            transcript: Box::new(transcript),
            reason,
        }
    }

    fn speaking_roster(&self) -> Vec<String> {
        self.assembly
            .iter()
            .filter(|p| !p.is_moderator)
            .map(|p| p.role_name.clone())
            .collect()
    }

    /// One agent call; the response may become several messages.
    fn take_turn(&mut self, role: &str) -> Result<TurnExtraction, String> {
        let persona = self
            .assembly
            .iter()
            .find(|p| p.role_name == role)
            .ok_or_else(|| format!("unknown speaker `{role}`"))?;
        let roster = roster(&self.assembly);
        let prompt = build_persona_prompt(persona, &roster).map_err(|e| e.to_string())?;
        let request = CompletionRequest::new(role, prompt.text)
            .with_history(history(&self.transcript))
            .with_temperature(self.config.temperature)
            .with_max_tokens(self.config.max_tokens)
            .with_seed(Some(self.config.seed));
        let raw = self
            .backend
            .complete(&request)
            .map_err(|e| format!("turn by `{role}` failed: {e}"))?;
        let extractor = match self.config.extraction {
            ExtractionMode::Agent => Some(self.backend),
            ExtractionMode::Deterministic => None,
        };
        let extraction =
            extract_turn(&raw, &roster, extractor).map_err(|e| format!("turn by `{role}`: {e}"))?;
        let mut segments = Vec::with_capacity(extraction.segments.len());
        for segment in extraction.segments {
            let segment = segment.without_self_address(role);
            push_message(
                &mut self.transcript,
                Speaker::Agent(role.to_string()),
                segment.addressee.clone(),
                MessageKind::AgentTurn,
                segment.content.clone(),
            );
            segments.push(segment);
        }
        Ok(TurnExtraction {
            segments,
            used_fallback: extraction.used_fallback,
        })
    }

    /// Runs a counted turn plus the immediate turns of anyone it summons.
    /// Returns whether a summon succeeded and who spoke last with what routing.
    fn turn_with_summons(
        &mut self,
        role: String,
    ) -> Result<(bool, String, TurnExtraction), String> {
        let mut speaker = role;
        let mut extraction = self.take_turn(&speaker)?;
        let mut summoned_any = false;
        while let Some(description) = extraction.summon_request().map(str::to_string) {
            match summon_agent(
                &description,
                &mut self.transcript,
                &mut self.assembly,
                self.config,
                self.backend,
            ) {
                SummonOutcome::Summoned(new_role) => {
                    summoned_any = true;
                    extraction = self.take_turn(&new_role)?;
                    speaker = new_role;
                }
                SummonOutcome::CapReached | SummonOutcome::Failed(_) => break,
            }
        }
        Ok((summoned_any, speaker, extraction))
    }

    fn run(mut self) -> Result<RunOutput, SessionError> {
        let initial: Vec<String> = self.speaking_roster();
        let mut next = initial[self.rng.gen_range(0..initial.len())].clone();
        let mut turns = 0u32;
        let mut quiet_turns = 0u32;

        while turns < self.config.max_iterations {
            let (summoned, last_speaker, extraction) = match self.turn_with_summons(next.clone()) {
                Ok(outcome) => outcome,
                Err(reason) => return Err(self.abort(reason)),
            };
            turns += 1;
            quiet_turns = if summoned { 0 } else { quiet_turns + 1 };

            let speaking = self.speaking_roster();
            next = select_next_speaker(
                extraction.routing(),
                &speaking,
                &last_speaker,
                Some(&self.moderator.role_name),
                &mut self.rng,
            );

            if turns.is_multiple_of(self.config.moderator_period) {
                let moderator = self.moderator.clone();
                if let Err(err) = moderator_check(
                    &mut self.transcript,
                    &moderator,
                    &self.assembly,
                    self.config,
                    self.backend,
                ) {
                    return Err(self.abort(format!("moderator check failed: {err}")));
                }
            }

            if self
                .config
                .stability_window
                .is_some_and(|window| quiet_turns >= window)
            {
                info!(turns, "assembly stable, stopping early");
                break;
            }
        }

        let (summary, status) = summarize(&self.transcript, self.config, self.backend);
        push_message(
            &mut self.transcript,
            Speaker::Summarizer,
            Addressee::Everyone,
            MessageKind::Summary,
            summary.clone(),
        );
        self.transcript.meta.summary_status = Some(status.clone());
        let convergence = convergence_metrics(&self.transcript);
        Ok(RunOutput {
            transcript: self.transcript,
            summary,
            summary_status: status,
            convergence,
        })
    }
}

/// Runs one deliberation from the opening scenario to the closing report.
pub fn run_session(
    config: &SessionConfig,
    scenario: &ScenarioInstance,
    backend: &dyn CompletionBackend,
) -> Result<RunOutput, SessionError> {
    config.validate()?;
    let moderator = config.moderator().clone();
    let mut transcript = Transcript {
        meta: TranscriptMeta {
            scenario_name: scenario.template_name.clone(),
            probability_percent: scenario.probability_percent,
            seed: config.seed,
            config: config.clone(),
            summary_status: None,
            aborted: None,
        },
        assembly_log: config
            .initial_personas
            .iter()
            .map(|p| AssemblyEntry {
                role_name: p.role_name.clone(),
                joined_at_index: 0,
            })
            .collect(),
        moderator_log: Vec::new(),
        messages: Vec::new(),
    };
    push_message(
        &mut transcript,
        Speaker::Agent(moderator.role_name.clone()),
        Addressee::Everyone,
        MessageKind::Bootstrap,
        scenario.rendered_text.clone(),
    );
    Room {
        config,
        backend,
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        transcript,
        assembly: config.initial_personas.clone(),
        moderator,
    }
    .run()
}
