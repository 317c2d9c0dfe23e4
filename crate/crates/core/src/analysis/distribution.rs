use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{classify_recommendations, ClassifyMode, Taxonomy};
use crate::orchestrator::{MessageKind, Transcript};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    /// Everything said during the discussion.
    Explored,
    /// The closing report only.
    Selected,
}

impl Scope {
    pub fn as_str(self) -> &'static str {
        match self {
            Scope::Explored => "explored",
            Scope::Selected => "selected",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyDistribution {
    pub scope: Scope,
    pub counts: BTreeMap<String, u64>,
    pub total: u64,
    pub shares: BTreeMap<String, f64>,
}

impl FrequencyDistribution {
    pub fn from_counts(scope: Scope, counts: BTreeMap<String, u64>) -> Self {
        let total: u64 = counts.values().sum();
        let shares = counts
            .iter()
            .map(|(id, &n)| {
                let share = if total > 0 {
                    n as f64 / total as f64
                } else {
                    0.0
                };
                (id.clone(), share)
            })
            .collect();
        Self {
            scope,
            counts,
            total,
            shares,
        }
    }

    pub fn empty(scope: Scope, taxonomy: &Taxonomy) -> Self {
        Self::from_counts(scope, taxonomy.zero_counts())
    }

    pub fn count(&self, category: &str) -> u64 {
        self.counts.get(category).copied().unwrap_or(0)
    }

    pub fn share(&self, category: &str) -> f64 {
        self.shares.get(category).copied().unwrap_or(0.0)
    }

    /// Count-wise sum, renormalized.
    pub fn merged(&self, other: &FrequencyDistribution) -> Self {
        let mut counts = self.counts.clone();
        for (id, n) in &other.counts {
            *counts.entry(id.clone()).or_default() += n;
        }
        Self::from_counts(self.scope, counts)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distributions {
    pub explored: FrequencyDistribution,
    pub selected: FrequencyDistribution,
    pub missing_summary: bool,
    pub classifier_fallback: bool,
}

/// Explored counts every agent turn and moderator insert; selected counts the
/// summary. Messages are classified one by one and summed.
pub fn build_distributions(
    transcript: &Transcript,
    taxonomy: &Taxonomy,
    mode: ClassifyMode<'_>,
) -> Distributions {
    let mut explored = taxonomy.zero_counts();
    let mut fallback = false;
    for m in transcript.messages.iter().filter(|m| {
        matches!(
            m.kind,
            MessageKind::AgentTurn | MessageKind::ModeratorInsert
        )
    }) {
        let c = classify_recommendations(&m.content, taxonomy, mode);
        fallback |= c.fallback_used;
        for (id, n) in c.counts {
            *explored.entry(id).or_default() += n;
        }
    }
    let (selected, missing_summary) = match transcript.summary() {
        Some(summary) => {
            let c = classify_recommendations(&summary.content, taxonomy, mode);
            fallback |= c.fallback_used;
            (c.counts, false)
        }
        None => (taxonomy.zero_counts(), true),
    };
    Distributions {
        explored: FrequencyDistribution::from_counts(Scope::Explored, explored),
        selected: FrequencyDistribution::from_counts(Scope::Selected, selected),
        missing_summary,
        classifier_fallback: fallback,
    }
}
