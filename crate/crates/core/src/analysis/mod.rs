//! Recommendation counting and the statistics computed over sessions.

mod batch;
mod classify;
mod convergence;
mod distribution;
mod probe;

use thiserror::Error;

pub use batch::{aggregate_batch, BatchCell, BatchReport};
pub use classify::{
    classify_recommendations, Category, Classification, ClassifyMode, Taxonomy, CLASSIFIER_PROMPT,
    SHIPPED_TAXONOMY,
};
pub use convergence::{convergence_metrics, ConvergenceMetrics};
pub use distribution::{build_distributions, Distributions, FrequencyDistribution, Scope};
pub use probe::{distribution_probe, Histogram, ProbeKey, ProbeParser, ProbeSettings};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("invalid taxonomy: {0}")]
    InvalidTaxonomy(String),
    #[error("cannot read taxonomy {path}: {reason}")]
    TaxonomyFile { path: String, reason: String },
    #[error("grouping error: {0}")]
    Grouping(String),
    #[error("probe needs at least one draw")]
    EmptyProbe,
}
