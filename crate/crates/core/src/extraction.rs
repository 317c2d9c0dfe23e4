//! Routing features pulled out of each raw agent response.
//!
//! The extractor is a separate, contextless completion call: it sees only the
//! response and the roster. When it fails or answers in an unusable shape the
//! deterministic [`fallback_parse`] takes over, so extraction never fails a turn.

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::debug;

use crate::backend::{CompletionBackend, CompletionRequest};
use crate::persona::SUMMON_MARKER;
use crate::text::{name_matcher, split_sentences};

pub const EXTRACTOR_PROMPT: &str = include_str!("../assets/prompts/extractor.txt");
/// Bumped whenever the extractor prompt text changes.
pub const EXTRACTOR_PROMPT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExtractionError {
    #[error("agent response is empty")]
    EmptyResponse,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Addressee {
    Specific(String),
    Everyone,
}

impl Addressee {
    pub fn role(&self) -> Option<&str> {
        match self {
            Addressee::Specific(r) => Some(r),
            Addressee::Everyone => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub addressee: Addressee,
    pub content: String,
    pub summon_request: Option<String>,
}

impl ExtractionResult {
    /// An agent naming itself is treated as speaking to everyone.
    pub fn without_self_address(mut self, speaker: &str) -> Self {
        if let Addressee::Specific(r) = &self.addressee {
            if r.eq_ignore_ascii_case(speaker) {
                self.addressee = Addressee::Everyone;
            }
        }
        self
    }
}

/// Result of extracting one raw response.
///
/// The extractor may split a response into several consecutive messages;
/// `segments` holds them in order and is never empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TurnExtraction {
    pub segments: Vec<ExtractionResult>,
    pub used_fallback: bool,
}

impl TurnExtraction {
    /// Routing is decided by the last message of the turn.
    pub fn routing(&self) -> &ExtractionResult {
        self.segments
            .last()
            .expect("extraction has at least one segment")
    }

    /// Only the first summon request of a turn is honored.
    pub fn summon_request(&self) -> Option<&str> {
        self.segments
            .iter()
            .find_map(|s| s.summon_request.as_deref())
    }
}

/// Removes summon marker lines and surrounding whitespace.
pub fn strip_control_markup(raw: &str) -> String {
    raw.lines()
        .filter(|line| !is_marker_line(line, SUMMON_MARKER))
        .collect::<Vec<_>>()
        .join("\n")
        .trim()
        .to_string()
}

fn is_marker_line(line: &str, marker: &str) -> bool {
    line.trim_start()
        .get(..marker.len())
        .is_some_and(|head| head.eq_ignore_ascii_case(marker))
}

fn marker_summon(raw: &str) -> Option<String> {
    raw.lines()
        .filter(|line| is_marker_line(line, SUMMON_MARKER))
        .map(|line| line.trim_start()[SUMMON_MARKER.len()..].trim())
        .find(|desc| !desc.is_empty())
        .map(str::to_string)
}

fn cleaned_content(raw: &str) -> String {
    let cleaned = strip_control_markup(raw);
    if cleaned.is_empty() {
        raw.trim().to_string()
    } else {
        cleaned
    }
}

fn resolve_addressee(name: &str, roster: &[String]) -> Addressee {
    let name = name.trim().trim_end_matches(['.', ',']);
    roster
        .iter()
        .find(|r| r.trim().eq_ignore_ascii_case(name))
        .map(|r| Addressee::Specific(r.clone()))
        .unwrap_or(Addressee::Everyone)
}

/// Deterministic parser: the addressee is the roster name appearing earliest
/// in the first sentence; a summon is recognized only from a `SUMMON:` line.
pub fn fallback_parse(raw_response: &str, roster: &[String]) -> ExtractionResult {
    let content = cleaned_content(raw_response);
    let first = split_sentences(&content).first().copied().unwrap_or("");
    let addressee = roster
        .iter()
        .filter(|r| !r.trim().is_empty())
        .filter_map(|r| {
            name_matcher(r)
                .find(first)
                .map(|m| (m.start(), std::cmp::Reverse(r.len()), r))
        })
        .min()
        .map(|(_, _, r)| Addressee::Specific(r.clone()))
        .unwrap_or(Addressee::Everyone);
    ExtractionResult {
        addressee,
        content,
        summon_request: marker_summon(raw_response),
    }
}

#[derive(Default)]
struct Block {
    addressee: Option<String>,
    summon: Option<String>,
    content: Option<String>,
}

fn label_value<'a>(line: &'a str, label: &str) -> Option<&'a str> {
    let trimmed = line.trim_start();
    let head = trimmed.get(..label.len())?;
    if !head.eq_ignore_ascii_case(label) {
        return None;
    }
    trimmed[label.len()..]
        .trim_start()
        .strip_prefix(':')
        .map(str::trim)
}

/// Parses `ADDRESSEE / SUMMON / CONTENT` blocks from extractor output.
fn parse_blocks(output: &str) -> Option<Vec<Block>> {
    let mut blocks: Vec<Block> = Vec::new();
    let mut in_content = false;
    for line in output.lines() {
        if let Some(value) = label_value(line, "ADDRESSEE") {
            blocks.push(Block {
                addressee: Some(value.to_string()),
                ..Block::default()
            });
            in_content = false;
            continue;
        }
        let block = blocks.last_mut()?;
        if !in_content {
            if let Some(value) = label_value(line, "SUMMON") {
                block.summon = Some(value.to_string());
                continue;
            }
            if let Some(value) = label_value(line, "CONTENT") {
                block.content = Some(value.to_string());
                in_content = true;
                continue;
            }
        } else if let Some(content) = block.content.as_mut() {
            content.push('\n');
            content.push_str(line);
        }
    }
    if blocks.is_empty() {
        return None;
    }
    for block in &mut blocks {
        let content = block.content.as_deref().map(str::trim).unwrap_or("");
        if content.is_empty() {
            return None;
        }
        block.content = Some(content.to_string());
    }
    Some(blocks)
}

fn summon_value(value: Option<&str>) -> Option<String> {
    value
        .map(str::trim)
        .filter(|v| !v.is_empty() && !v.eq_ignore_ascii_case("none"))
        .map(str::to_string)
}

/// Interprets extractor output against the raw response.
///
/// A single block keeps the raw response (minus markup) as content. Several
/// blocks are accepted only if each content appears verbatim in the cleaned
/// response, so the extractor can split but never rewrite.
fn interpret(output: &str, raw_response: &str, roster: &[String]) -> Option<Vec<ExtractionResult>> {
    let blocks = parse_blocks(output)?;
    let cleaned = cleaned_content(raw_response);
    let marker = marker_summon(raw_response);
    let mut segments: Vec<ExtractionResult> = if blocks.len() == 1 {
        let block = &blocks[0];
        vec![ExtractionResult {
            addressee: resolve_addressee(block.addressee.as_deref().unwrap_or(""), roster),
            content: cleaned,
            summon_request: summon_value(block.summon.as_deref()),
        }]
    } else {
        let mut out = Vec::with_capacity(blocks.len());
        for block in &blocks {
            let content = block.content.clone().unwrap_or_default();
            if !cleaned.contains(content.as_str()) {
                return None;
            }
            out.push(ExtractionResult {
                addressee: resolve_addressee(block.addressee.as_deref().unwrap_or(""), roster),
                content,
                summon_request: summon_value(block.summon.as_deref()),
            });
        }
        out
    };
    if segments.iter().all(|s| s.summon_request.is_none()) {
        segments[0].summon_request = marker;
    }
    Some(segments)
}

pub fn extractor_request(raw_response: &str, roster: &[String]) -> CompletionRequest {
    CompletionRequest::new("extractor", EXTRACTOR_PROMPT)
        .with_message(
            "user",
            format!(
                "Participants: {}\n\nMessage:\n{}",
                roster.join(", "),
                raw_response.trim()
            ),
        )
        .with_temperature(0.0)
}

/// Extracts addressee, content and summon request from a raw response.
///
/// With no extractor backend the deterministic parser is used directly.
pub fn extract_turn(
    raw_response: &str,
    roster: &[String],
    extractor: Option<&dyn CompletionBackend>,
) -> Result<TurnExtraction, ExtractionError> {
    if raw_response.trim().is_empty() {
        return Err(ExtractionError::EmptyResponse);
    }
    if let Some(backend) = extractor {
        match backend.complete(&extractor_request(raw_response, roster)) {
            Ok(output) => {
                if let Some(segments) = interpret(&output, raw_response, roster) {
                    return Ok(TurnExtraction {
                        segments,
                        used_fallback: false,
                    });
                }
                debug!("extractor output unusable, using fallback parser");
            }
            Err(err) => debug!(error = %err, "extractor failed, using fallback parser"),
        }
    }
    Ok(TurnExtraction {
        segments: vec![fallback_parse(raw_response, roster)],
        used_fallback: extractor.is_some(),
    })
}
