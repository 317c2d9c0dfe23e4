use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::orchestrator::Transcript;

/// Assembly-level statistics used to judge whether a session has settled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceMetrics {
    pub assembly_size: usize,
    pub roles: Vec<String>,
    pub participation_rate: BTreeMap<String, f64>,
    pub summons_used: usize,
    /// Set when the transcript has no agent turns; all rates are then 0.
    pub no_agent_turns: bool,
}

pub fn convergence_metrics(transcript: &Transcript) -> ConvergenceMetrics {
    let roles: Vec<String> = transcript
        .assembly_log
        .iter()
        .map(|e| e.role_name.clone())
        .collect();
    let mut counts: BTreeMap<String, usize> = roles.iter().map(|r| (r.clone(), 0)).collect();
    let mut total = 0usize;
    for m in transcript.agent_turns() {
        *counts.entry(m.speaker.label().to_string()).or_default() += 1;
        total += 1;
    }
    let participation_rate = counts
        .into_iter()
        .map(|(role, n)| {
            let rate = if total == 0 {
                0.0
            } else {
                n as f64 / total as f64
            };
            (role, rate)
        })
        .collect();
    ConvergenceMetrics {
        assembly_size: roles.len(),
        summons_used: transcript.summoned_roles().count(),
        roles,
        participation_rate,
        no_agent_turns: total == 0,
    }
}
