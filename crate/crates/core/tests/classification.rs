mod common;

use std::collections::BTreeMap;

use common::*;
use discourse_core::analysis::{
    build_distributions, classify_recommendations, ClassifyMode, Taxonomy,
};
use discourse_core::orchestrator::{run_session, MessageKind, Transcript};
use discourse_core::text::split_sentences;
use serde::Deserialize;

#[derive(Deserialize)]
struct Labeled {
    sentence: String,
    labels: Vec<String>,
}

#[derive(Deserialize)]
struct Oracle {
    explored: Vec<Labeled>,
    selected: Vec<Labeled>,
}

fn oracle() -> Oracle {
    serde_json::from_str(&std::fs::read_to_string(fixture("reference_labels.json")).unwrap())
        .unwrap()
}

fn histogram(labeled: &[Labeled], taxonomy: &Taxonomy) -> BTreeMap<String, u64> {
    let mut counts = taxonomy.zero_counts();
    for l in labeled {
        for id in &l.labels {
            *counts.get_mut(id).expect("oracle uses taxonomy ids") += 1;
        }
    }
    counts
}

fn reference() -> Transcript {
    run_session(
        &reference_config(),
        &reference_scenario(),
        &reference_backend(),
    )
    .unwrap()
    .transcript
}

#[test]
fn oracle_covers_the_transcript_sentences() {
    let t = reference();
    let oracle = oracle();
    let explored: Vec<&str> = t
        .messages
        .iter()
        .filter(|m| {
            matches!(
                m.kind,
                MessageKind::AgentTurn | MessageKind::ModeratorInsert
            )
        })
        .flat_map(|m| split_sentences(&m.content))
        .collect();
    let labeled: Vec<&str> = oracle
        .explored
        .iter()
        .map(|l| l.sentence.as_str())
        .collect();
    assert_eq!(explored, labeled);
    let selected = split_sentences(&t.summary().unwrap().content);
    let labeled: Vec<&str> = oracle
        .selected
        .iter()
        .map(|l| l.sentence.as_str())
        .collect();
    assert_eq!(selected, labeled);
}

#[test]
fn keyword_counts_equal_the_oracle() {
    let taxonomy = Taxonomy::shipped();
    let oracle = oracle();
    for l in oracle.explored.iter().chain(&oracle.selected) {
        let c = classify_recommendations(&l.sentence, &taxonomy, ClassifyMode::Keyword);
        let got: Vec<&str> = c
            .counts
            .iter()
            .filter(|(_, &n)| n > 0)
            .map(|(k, _)| k.as_str())
            .collect();
        assert_eq!(got, l.labels, "{}", l.sentence);
    }

    let d = build_distributions(&reference(), &taxonomy, ClassifyMode::Keyword);
    assert_eq!(d.explored.counts, histogram(&oracle.explored, &taxonomy));
    assert_eq!(d.selected.counts, histogram(&oracle.selected, &taxonomy));
    assert!(!d.missing_summary);
}

#[test]
fn summary_names_the_key_tasks() {
    let d = build_distributions(&reference(), &Taxonomy::shipped(), ClassifyMode::Keyword);
    for id in [
        "evacuation",
        "infrastructure",
        "vulnerable_support",
        "environmental_impact",
        "communication",
    ] {
        assert!(d.selected.count(id) > 0, "{id}");
    }
    for id in [
        "evacuation",
        "reservoir_management",
        "temporary_housing",
        "communication",
    ] {
        assert!(d.explored.count(id) > 0, "{id}");
    }
    let total: f64 = d.selected.shares.values().sum();
    assert!((total - 1.0).abs() < 1e-9);
}

#[test]
fn single_category_summary() {
    let mut t = reference();
    let last = t.messages.len() - 1;
    t.messages[last].content = "Evacuate the east bank. Evacuation buses leave at noon.".into();
    let d = build_distributions(&t, &Taxonomy::shipped(), ClassifyMode::Keyword);
    assert_eq!(d.selected.count("evacuation"), 2);
    assert_eq!(d.selected.count("transportation"), 1);
}

#[test]
fn missing_summary_is_flagged() {
    let mut t = reference();
    t.messages.pop();
    let d = build_distributions(&t, &Taxonomy::shipped(), ClassifyMode::Keyword);
    assert!(d.missing_summary);
    assert_eq!(d.selected.total, 0);
    assert!(d.selected.shares.values().all(|&s| s == 0.0));
}
