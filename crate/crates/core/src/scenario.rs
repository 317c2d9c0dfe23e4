//! Bootstrap scenarios with a single probability slot.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PLACEHOLDER: &str = "<probability parameter>";

/// Shipped flood scenario.
pub const FLOOD_TEMPLATE: &str = include_str!("../assets/scenarios/flood.txt");
/// Shorter flood wording used as the opening message in the recorded sample conversation.
pub const FLOOD_REFERENCE_TEMPLATE: &str = include_str!("../assets/scenarios/flood_reference.txt");

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScenarioError {
    #[error("probability {0}% outside 0..=100")]
    ProbabilityOutOfRange(i64),
    #[error("template `{name}` must contain `{PLACEHOLDER}` exactly once (found {found})")]
    Placeholder { name: String, found: usize },
    #[error("cannot read template {path}: {reason}")]
    Io { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioTemplate {
    name: String,
    template_text: String,
}

impl ScenarioTemplate {
    pub fn new(
        name: impl Into<String>,
        template_text: impl Into<String>,
    ) -> Result<Self, ScenarioError> {
        let name = name.into();
        let template_text = template_text.into();
        let found = template_text.matches(PLACEHOLDER).count();
        if found != 1 {
            return Err(ScenarioError::Placeholder { name, found });
        }
        Ok(Self {
            name,
            template_text,
        })
    }

    pub fn flood() -> Self {
        Self::new("flood", FLOOD_TEMPLATE).expect("shipped template is valid")
    }

    pub fn flood_reference() -> Self {
        Self::new("flood", FLOOD_REFERENCE_TEMPLATE).expect("shipped template is valid")
    }

    /// Loads a UTF-8 template; the file stem becomes the scenario name.
    /// One trailing newline is dropped.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let text = text
            .strip_suffix("\r\n")
            .or_else(|| text.strip_suffix('\n'))
            .unwrap_or(&text);
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "scenario".into());
        Self::new(name, text)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn text(&self) -> &str {
        &self.template_text
    }

    pub fn render(&self, probability_percent: i64) -> Result<ScenarioInstance, ScenarioError> {
        let probability = u8::try_from(probability_percent)
            .ok()
            .filter(|p| *p <= 100)
            .ok_or(ScenarioError::ProbabilityOutOfRange(probability_percent))?;
        Ok(ScenarioInstance {
            rendered_text: self
                .template_text
                .replacen(PLACEHOLDER, &format!("{probability}%"), 1),
            probability_percent: probability,
            template_name: self.name.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioInstance {
    pub rendered_text: String,
    pub probability_percent: u8,
    pub template_name: String,
}

pub fn render_scenario(
    template: &ScenarioTemplate,
    probability_percent: i64,
) -> Result<ScenarioInstance, ScenarioError> {
    template.render(probability_percent)
}
