use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{
    build_distributions, AnalysisError, ClassifyMode, FrequencyDistribution, Scope, Taxonomy,
};
use crate::orchestrator::Transcript;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchCell {
    pub runs: usize,
    /// Fewer runs than `runs_per_cell` were aggregated.
    pub incomplete: bool,
    pub explored: FrequencyDistribution,
    pub selected: FrequencyDistribution,
    /// Number of sessions in which each summoned role appeared.
    pub summon_tally: BTreeMap<String, u64>,
    pub missing_summaries: usize,
    pub classifier_fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub scenario: String,
    pub runs_per_cell: usize,
    pub cells: BTreeMap<u8, BatchCell>,
}

/// Aggregates transcripts grouped by probability.
///
/// Per-cell counts are summed over runs and renormalized. `runs_per_cell` is
/// the largest group size; smaller groups are flagged incomplete.
pub fn aggregate_batch(
    groups: &BTreeMap<u8, Vec<Transcript>>,
    taxonomy: &Taxonomy,
    mode: ClassifyMode<'_>,
) -> Result<BatchReport, AnalysisError> {
    let mut scenario: Option<&str> = None;
    for (&p, runs) in groups {
        if runs.is_empty() {
            return Err(AnalysisError::Grouping(format!("no runs at {p}%")));
        }
        for t in runs {
            if t.meta.probability_percent != p {
                return Err(AnalysisError::Grouping(format!(
                    "run at {}% filed under {p}%",
                    t.meta.probability_percent
                )));
            }
            match scenario {
                None => scenario = Some(&t.meta.scenario_name),
                Some(s) if s != t.meta.scenario_name => {
                    return Err(AnalysisError::Grouping(format!(
                        "mixed scenarios `{s}` and `{}`",
                        t.meta.scenario_name
                    )))
                }
                Some(_) => {}
            }
        }
    }
    let runs_per_cell = groups.values().map(Vec::len).max().unwrap_or(0);

    let cells = groups
        .iter()
        .map(|(&p, runs)| {
            let mut explored = FrequencyDistribution::empty(Scope::Explored, taxonomy);
            let mut selected = FrequencyDistribution::empty(Scope::Selected, taxonomy);
            let mut summon_tally = BTreeMap::new();
            let mut missing_summaries = 0;
            let mut classifier_fallbacks = 0;
            for t in runs {
                let d = build_distributions(t, taxonomy, mode);
                explored = explored.merged(&d.explored);
                selected = selected.merged(&d.selected);
                missing_summaries += usize::from(d.missing_summary);
                classifier_fallbacks += usize::from(d.classifier_fallback);
                let mut roles: Vec<&str> = t.summoned_roles().collect();
                roles.sort_unstable();
                roles.dedup();
                for role in roles {
                    *summon_tally.entry(role.to_string()).or_insert(0) += 1;
                }
            }
            let cell = BatchCell {
                runs: runs.len(),
                incomplete: runs.len() < runs_per_cell,
                explored,
                selected,
                summon_tally,
                missing_summaries,
                classifier_fallbacks,
            };
            (p, cell)
        })
        .collect();

    Ok(BatchReport {
        scenario: scenario.unwrap_or_default().to_string(),
        runs_per_cell,
        cells,
    })
}

impl BatchReport {
    /// Mark a cell as short of its requested run count.
    pub fn flag_incomplete(&mut self, probability: u8) {
        if let Some(cell) = self.cells.get_mut(&probability) {
            cell.incomplete = true;
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("probability,scope,category,count,share\n");
        for (p, cell) in &self.cells {
            for dist in [&cell.explored, &cell.selected] {
                for (id, n) in &dist.counts {
                    let _ = writeln!(
                        out,
                        "{p},{},{id},{n},{:.6}",
                        dist.scope.as_str(),
                        dist.share(id)
                    );
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
