//! Persona definitions and their compiled system prompts.
//!
//! A persona narrows what an agent may claim to know and how it behaves in the
//! room. Prompts are compiled in a fixed order (framing, objectives,
//! restrictions, interaction rules) so that two runs with the same personas
//! send byte-identical instructions.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::backend::{BackendError, CompletionBackend, CompletionRequest};

/// Prefix an agent writes on its own line to ask for a new expert.
pub const SUMMON_MARKER: &str = "SUMMON:";
/// Prefix of the moderator's insert-or-log decision line.
pub const VERDICT_MARKER: &str = "VERDICT:";

/// Speaker labels owned by the room itself.
pub const RESERVED_NAMES: [&str; 3] = ["System", "Summarizer", "everyone"];

pub const SHIPPED_PERSONAS: &str = include_str!("../assets/personas/flood.json");
pub const PERSONA_GENERATOR_PROMPT: &str = include_str!("../assets/prompts/persona_generator.txt");

#[derive(Debug, Error)]
pub enum PersonaError {
    #[error("invalid persona `{role}`: {reason}")]
    InvalidSpec { role: String, reason: String },
    #[error("invalid assembly: {0}")]
    InvalidAssembly(String),
    #[error("persona description must not be empty")]
    EmptyDescription,
    #[error("could not summon `{description}`: {reason}")]
    SummonFailed { description: String, reason: String },
    #[error("cannot read persona file {path}: {reason}")]
    File { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonaSpec {
    pub role_name: String,
    pub description: String,
    #[serde(default)]
    pub knowledge_restrictions: Vec<String>,
    #[serde(default)]
    pub objectives: Vec<String>,
    #[serde(default)]
    pub may_disagree: bool,
    #[serde(default)]
    pub chain_of_thought: bool,
    #[serde(default)]
    pub is_moderator: bool,
}

impl PersonaSpec {
    pub fn validate(&self) -> Result<(), PersonaError> {
        let invalid = |reason: &str| PersonaError::InvalidSpec {
            role: self.role_name.clone(),
            reason: reason.to_string(),
        };
        if self.role_name.trim().is_empty() {
            return Err(invalid("role name is empty"));
        }
        if RESERVED_NAMES
            .iter()
            .any(|r| r.eq_ignore_ascii_case(self.role_name.trim()))
        {
            return Err(invalid("role name is reserved"));
        }
        if self.role_name.contains('\n') {
            return Err(invalid("role name spans several lines"));
        }
        if !self.is_moderator && self.objectives.iter().all(|o| o.trim().is_empty()) {
            return Err(invalid(
                "non-moderator personas need at least one objective",
            ));
        }
        Ok(())
    }
}

/// Checks the assembly-level rules: valid members, unique names, one moderator at most.
pub fn validate_assembly(personas: &[PersonaSpec]) -> Result<(), PersonaError> {
    for p in personas {
        p.validate()?;
    }
    check_unique(personas.iter().map(|p| p.role_name.as_str()))?;
    if personas.iter().filter(|p| p.is_moderator).count() > 1 {
        return Err(PersonaError::InvalidAssembly(
            "more than one moderator".into(),
        ));
    }
    Ok(())
}

fn check_unique<'a>(names: impl IntoIterator<Item = &'a str>) -> Result<(), PersonaError> {
    let mut seen: Vec<String> = Vec::new();
    for name in names {
        let key = name.trim().to_lowercase();
        if seen.contains(&key) {
            return Err(PersonaError::InvalidAssembly(format!(
                "duplicate role `{name}`"
            )));
        }
        seen.push(key);
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct PersonaFileEntry {
    description: String,
    #[serde(default)]
    objectives: Vec<String>,
    #[serde(default)]
    knowledge_restrictions: Vec<String>,
    #[serde(default)]
    may_disagree: bool,
    #[serde(default)]
    chain_of_thought: bool,
    #[serde(default)]
    is_moderator: bool,
}

/// Parses a persona file (`role_name -> fields`), keeping file order.
pub fn parse_persona_file(json: &str) -> Result<Vec<PersonaSpec>, PersonaError> {
    let map: serde_json::Map<String, serde_json::Value> =
        serde_json::from_str(json).map_err(|e| PersonaError::File {
            path: "<inline>".into(),
            reason: e.to_string(),
        })?;
    let mut personas = Vec::with_capacity(map.len());
    for (role_name, value) in map {
        let entry: PersonaFileEntry =
            serde_json::from_value(value).map_err(|e| PersonaError::InvalidSpec {
                role: role_name.clone(),
                reason: e.to_string(),
            })?;
        personas.push(PersonaSpec {
            role_name,
            description: entry.description,
            knowledge_restrictions: entry.knowledge_restrictions,
            objectives: entry.objectives,
            may_disagree: entry.may_disagree,
            chain_of_thought: entry.chain_of_thought,
            is_moderator: entry.is_moderator,
        });
    }
    validate_assembly(&personas)?;
    Ok(personas)
}

pub fn load_persona_file(path: impl AsRef<Path>) -> Result<Vec<PersonaSpec>, PersonaError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| PersonaError::File {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    parse_persona_file(&text).map_err(|e| match e {
        PersonaError::File { reason, .. } => PersonaError::File {
            path: path.display().to_string(),
            reason,
        },
        other => other,
    })
}

/// Mayor, scientist, spokesperson and moderator for the flood scenario.
pub fn shipped_personas() -> Vec<PersonaSpec> {
    parse_persona_file(SHIPPED_PERSONAS).expect("shipped personas are valid")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemPrompt {
    pub text: String,
    pub role_name: String,
}

/// Compiles the system prompt for `spec` sitting in a room with `roster`.
pub fn build_persona_prompt(
    spec: &PersonaSpec,
    roster: &[String],
) -> Result<SystemPrompt, PersonaError> {
    spec.validate()?;
    if roster.is_empty() {
        return Err(PersonaError::InvalidAssembly("roster is empty".into()));
    }
    check_unique(roster.iter().map(String::as_str))?;

    let others: Vec<&str> = roster
        .iter()
        .map(String::as_str)
        .filter(|r| !r.trim().eq_ignore_ascii_case(spec.role_name.trim()))
        .collect();
    let others = if others.is_empty() {
        "nobody else yet".to_string()
    } else {
        others.join(", ")
    };

    let mut text = format!(
        "Your role in this meeting: {}.\n{}\n",
        spec.role_name,
        spec.description.trim()
    );
    if !spec.objectives.is_empty() {
        text.push_str("\nObjectives:\n");
        for objective in &spec.objectives {
            text.push_str(&format!("- {}\n", objective.trim()));
        }
    }
    if !spec.knowledge_restrictions.is_empty() {
        text.push_str(
            "\nKnowledge restrictions. You have no expert knowledge of the following domains \
             and must not claim expertise in them:\n",
        );
        for restriction in &spec.knowledge_restrictions {
            text.push_str(&format!("- {}\n", restriction.trim()));
        }
    }

    if spec.is_moderator {
        text.push_str("\nModeration rules:\n");
        text.push_str(
            "- Do not take part in the discussion yourself and do not propose measures.\n",
        );
        text.push_str(&format!(
            "- When asked for an analysis, summarize the major points the participants ({others}) \
             have addressed so far.\n"
        ));
        text.push_str(
            "- If the discussion shows signs of digression, ask the participants to refocus on the topic.\n",
        );
        text.push_str(&format!(
            "- Begin every analysis with a line `{VERDICT_MARKER} REFOCUS` when it should be shared \
             with the participants, or `{VERDICT_MARKER} LOG` when no refocusing is needed.\n"
        ));
    } else {
        text.push_str("\nInteraction rules:\n");
        if spec.may_disagree {
            text.push_str(
                "- You may disagree with the other participants and challenge their points \
                 when you think they are mistaken.\n",
            );
        }
        if spec.chain_of_thought {
            text.push_str(
                "- Reason step by step: write out your intermediate thoughts before giving \
                 your final contribution.\n",
            );
        }
        text.push_str(&format!(
            "- Address a specific participant ({others}) by name when your message is meant \
             for them; otherwise make a general statement to everyone.\n"
        ));
        text.push_str(&format!(
            "- If the discussion needs expertise that nobody in the room has, request a new \
             expert on a separate line written as `{SUMMON_MARKER} <short description of the expert>`.\n"
        ));
        text.push_str("- Keep your contribution brief and speak only for yourself.\n");
    }

    Ok(SystemPrompt {
        text,
        role_name: spec.role_name.clone(),
    })
}

/// Turns an agent-written expert description into a role name:
/// whitespace collapsed, leading article and trailing punctuation dropped.
pub fn role_name_from_description(description: &str) -> String {
    let collapsed = description.split_whitespace().collect::<Vec<_>>().join(" ");
    let trimmed = collapsed.trim_end_matches(['.', ',', ';', ':', '!', '?']);
    for article in ["a ", "an ", "the "] {
        if trimmed.len() > article.len() && trimmed[..article.len()].eq_ignore_ascii_case(article) {
            return trimmed[article.len()..].to_string();
        }
    }
    trimmed.to_string()
}

/// Fields of a generated persona block. Exposed for fixture checks.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GeneratedPersona {
    pub role: Option<String>,
    pub description: String,
    pub objectives: Vec<String>,
    pub restrictions: Vec<String>,
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Description,
    Objectives,
    Restrictions,
}

/// Parses the fenced, field-labelled block produced by the persona generator.
pub fn parse_generated_persona(text: &str) -> Option<GeneratedPersona> {
    let body = fenced_body(text).unwrap_or(text);
    let mut out = GeneratedPersona::default();
    let mut section = Section::None;
    for line in body.lines() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = strip_label(trimmed, "ROLE") {
            out.role = Some(rest.to_string()).filter(|r| !r.is_empty());
            section = Section::None;
        } else if let Some(rest) = strip_label(trimmed, "DESCRIPTION") {
            out.description = rest.to_string();
            section = Section::Description;
        } else if let Some(rest) = strip_label(trimmed, "OBJECTIVES") {
            push_item(&mut out.objectives, rest);
            section = Section::Objectives;
        } else if let Some(rest) = strip_label(trimmed, "RESTRICTIONS") {
            push_item(&mut out.restrictions, rest);
            section = Section::Restrictions;
        } else {
            match section {
                Section::Description => {
                    out.description.push(' ');
                    out.description.push_str(trimmed);
                }
                Section::Objectives => push_item(&mut out.objectives, trimmed),
                Section::Restrictions => push_item(&mut out.restrictions, trimmed),
                Section::None => {}
            }
        }
    }
    out.description = out.description.trim().to_string();
    if out.description.is_empty() || out.objectives.is_empty() {
        return None;
    }
    Some(out)
}

fn fenced_body(text: &str) -> Option<&str> {
    let start = text.find("```")?;
    let after = &text[start + 3..];
    let body_start = after.find('\n')? + 1;
    let body = &after[body_start..];
    let end = body.find("```")?;
    Some(&body[..end])
}

fn strip_label<'a>(line: &'a str, label: &str) -> Option<&'a str> {
    let head = line.get(..label.len())?;
    if !head.eq_ignore_ascii_case(label) {
        return None;
    }
    line[label.len()..]
        .trim_start()
        .strip_prefix(':')
        .map(str::trim)
}

fn push_item(items: &mut Vec<String>, raw: &str) {
    let item = raw.trim().trim_start_matches(['-', '*', '•']).trim_start();
    let item = match item.split_once(". ") {
        Some((n, rest)) if !n.is_empty() && n.chars().all(|c| c.is_ascii_digit()) => rest,
        _ => item,
    };
    let item = item.trim();
    if !item.is_empty() && !item.eq_ignore_ascii_case("none") {
        items.push(item.to_string());
    }
}

/// Asks the backend for a persona matching `description`.
///
/// One re-prompt is made when the first answer cannot be parsed. Summoned
/// agents may disagree, do not use step-by-step reasoning and never moderate.
pub fn generate_persona_from_description(
    description: &str,
    backend: &dyn CompletionBackend,
    temperature: f64,
    max_tokens: u32,
) -> Result<PersonaSpec, PersonaError> {
    if description.trim().is_empty() {
        return Err(PersonaError::EmptyDescription);
    }
    let failed = |reason: String| PersonaError::SummonFailed {
        description: description.to_string(),
        reason,
    };
    let role_name = role_name_from_description(description);
    let request = CompletionRequest::new("persona-generator", PERSONA_GENERATOR_PROMPT)
        .with_message("user", format!("Expert needed: {}", description.trim()))
        .with_temperature(temperature)
        .with_max_tokens(max_tokens);

    let first = backend
        .complete(&request)
        .map_err(|e| failed(e.to_string()))?;
    let parsed = match parse_generated_persona(&first) {
        Some(p) => p,
        None => {
            warn!(%description, "persona generation unparseable, re-prompting");
            let retry = request.with_message("assistant", first).with_message(
                "user",
                "That answer did not follow the format. Reply with only the fenced persona block.",
            );
            let second = backend
                .complete(&retry)
                .map_err(|e: BackendError| failed(e.to_string()))?;
            parse_generated_persona(&second)
                .ok_or_else(|| failed("generated persona could not be parsed".into()))?
        }
    };

    let spec = PersonaSpec {
        role_name,
        description: parsed.description,
        knowledge_restrictions: parsed.restrictions,
        objectives: parsed.objectives,
        may_disagree: true,
        chain_of_thought: false,
        is_moderator: false,
    };
    spec.validate().map_err(|e| failed(e.to_string()))?;
    Ok(spec)
}
