use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::LazyLock;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};
use tracing::debug;

use super::AnalysisError;
use crate::backend::{CompletionBackend, CompletionRequest};
use crate::text::split_sentences;

pub const SHIPPED_TAXONOMY: &str = include_str!("../../assets/taxonomy/flood.json");
pub const CLASSIFIER_PROMPT: &str = include_str!("../../assets/prompts/classifier.txt");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub id: String,
    pub display_name: String,
    /// Case-insensitive regular expressions.
    pub patterns: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TaxonomyFile {
    #[serde(default)]
    version: u32,
    categories: Vec<Category>,
}

#[derive(Debug, Clone)]
pub struct Taxonomy {
    version: u32,
    categories: Vec<Category>,
    matchers: Vec<Vec<Regex>>,
}

impl Taxonomy {
    pub fn new(version: u32, categories: Vec<Category>) -> Result<Self, AnalysisError> {
        let mut seen = BTreeSet::new();
        let mut matchers = Vec::with_capacity(categories.len());
        for category in &categories {
            if category.id.trim().is_empty() {
                return Err(AnalysisError::InvalidTaxonomy("empty category id".into()));
            }
            if !seen.insert(category.id.as_str()) {
                return Err(AnalysisError::InvalidTaxonomy(format!(
                    "duplicate category id `{}`",
                    category.id
                )));
            }
            if category.patterns.is_empty() {
                return Err(AnalysisError::InvalidTaxonomy(format!(
                    "category `{}` has no patterns",
                    category.id
                )));
            }
            let compiled = category
                .patterns
                .iter()
                .map(|p| {
                    RegexBuilder::new(p)
                        .case_insensitive(true)
                        .build()
                        .map_err(|e| {
                            AnalysisError::InvalidTaxonomy(format!("`{}`: {e}", category.id))
                        })
                })
                .collect::<Result<Vec<_>, _>>()?;
            matchers.push(compiled);
        }
        Ok(Self {
            version,
            categories,
            matchers,
        })
    }

    pub fn from_json(json: &str) -> Result<Self, AnalysisError> {
        let file: TaxonomyFile = serde_json::from_str(json)
            .map_err(|e| AnalysisError::InvalidTaxonomy(e.to_string()))?;
        Self::new(file.version, file.categories)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, AnalysisError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| AnalysisError::TaxonomyFile {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    pub fn shipped() -> Self {
        static SHIPPED: LazyLock<Taxonomy> = LazyLock::new(|| {
            Taxonomy::from_json(SHIPPED_TAXONOMY).expect("shipped taxonomy is valid")
        });
        SHIPPED.clone()
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    pub fn zero_counts(&self) -> BTreeMap<String, u64> {
        self.categories.iter().map(|c| (c.id.clone(), 0)).collect()
    }

    /// Category ids whose patterns match `sentence`, in taxonomy order.
    pub fn labels(&self, sentence: &str) -> Vec<&str> {
        self.categories
            .iter()
            .zip(&self.matchers)
            .filter(|(_, patterns)| patterns.iter().any(|p| p.is_match(sentence)))
            .map(|(c, _)| c.id.as_str())
            .collect()
    }

    fn contains(&self, id: &str) -> bool {
        self.categories.iter().any(|c| c.id == id)
    }
}

#[derive(Clone, Copy)]
pub enum ClassifyMode<'a> {
    Keyword,
    /// Sentence labelling by a classifier completion; keyword counting on failure.
    Llm(&'a dyn CompletionBackend),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Classification {
    pub counts: BTreeMap<String, u64>,
    pub fallback_used: bool,
}

fn keyword_counts(sentences: &[&str], taxonomy: &Taxonomy) -> BTreeMap<String, u64> {
    let mut counts = taxonomy.zero_counts();
    for sentence in sentences {
        for id in taxonomy.labels(sentence) {
            *counts.get_mut(id).expect("label from taxonomy") += 1;
        }
    }
    counts
}

fn classifier_request(sentences: &[&str], taxonomy: &Taxonomy) -> CompletionRequest {
    let categories = taxonomy
        .categories()
        .iter()
        .map(|c| format!("{}: {}", c.id, c.display_name))
        .collect::<Vec<_>>()
        .join("\n");
    let numbered = sentences
        .iter()
        .enumerate()
        .map(|(i, s)| format!("{}. {}", i + 1, s.replace('\n', " ")))
        .collect::<Vec<_>>()
        .join("\n");
    CompletionRequest::new("classifier", CLASSIFIER_PROMPT)
        .with_message(
            "user",
            format!("Categories:\n{categories}\n\nSentences:\n{numbered}"),
        )
        .with_temperature(0.0)
        .with_max_tokens(4096)
}

/// Parses `<n>: id, id` lines. Every sentence must be answered exactly once.
fn parse_labels(output: &str, n: usize, taxonomy: &Taxonomy) -> Option<BTreeMap<String, u64>> {
    static LINE: LazyLock<Regex> =
        LazyLock::new(|| Regex::new(r"^\s*(\d+)\s*[:.)\-]\s*(.*)$").expect("static regex"));
    let mut answered = vec![false; n];
    let mut counts = taxonomy.zero_counts();
    for line in output.lines().filter(|l| !l.trim().is_empty()) {
        let caps = LINE.captures(line)?;
        let k: usize = caps[1].parse().ok()?;
        if k == 0 || k > n || answered[k - 1] {
            return None;
        }
        answered[k - 1] = true;
        let ids: BTreeSet<&str> = caps[2]
            .split(',')
            .map(str::trim)
            .filter(|id| !id.is_empty() && !id.eq_ignore_ascii_case("none"))
            .filter(|id| taxonomy.contains(id))
            .collect();
        for id in ids {
            *counts.get_mut(id).expect("checked id") += 1;
        }
    }
    answered.iter().all(|a| *a).then_some(counts)
}

/// Counts, per category, the sentences of `text` that mention it.
///
/// A sentence can count toward several categories. Every category id appears
/// in the result, with zero when unmatched.
pub fn classify_recommendations(
    text: &str,
    taxonomy: &Taxonomy,
    mode: ClassifyMode<'_>,
) -> Classification {
    let sentences = split_sentences(text);
    match mode {
        ClassifyMode::Keyword => Classification {
            counts: keyword_counts(&sentences, taxonomy),
            fallback_used: false,
        },
        ClassifyMode::Llm(_) if sentences.is_empty() => Classification {
            counts: taxonomy.zero_counts(),
            fallback_used: false,
        },
        ClassifyMode::Llm(backend) => {
            let parsed = backend
                .complete(&classifier_request(&sentences, taxonomy))
                .map_err(|e| debug!(error = %e, "classifier call failed"))
                .ok()
                .and_then(|out| parse_labels(&out, sentences.len(), taxonomy));
            match parsed {
                Some(counts) => Classification {
                    counts,
                    fallback_used: false,
                },
                None => Classification {
                    counts: keyword_counts(&sentences, taxonomy),
                    fallback_used: true,
                },
            }
        }
    }
}
