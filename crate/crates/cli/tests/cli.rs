mod support;

use std::path::Path;

use discourse_core::orchestrator::Transcript;
use support::*;

fn core_path(rel: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core")
        .join(rel)
        .to_string_lossy()
        .into_owned()
}

#[test]
fn run_replays_a_fixture_and_prints_the_summary() {
    let out = tempfile::tempdir().unwrap();
    let o = run_bin(&[
        "run",
        "--scenario",
        &core_path("assets/scenarios/flood_reference.txt"),
        "--probability",
        "90",
        "--backend",
        &format!(
            "scripted:{}",
            core_path("tests/fixtures/reference_replay.json")
        ),
        "--seed",
        "7",
        "--max-iterations",
        "21",
        "--moderator-period",
        "7",
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("Report summary:"));
    let t = Transcript::load(out.path().join("flood_reference_90pct_run1.json")).unwrap();
    assert_eq!(t.messages.len(), 32);
    assert_eq!(t.meta.seed, 7);
}

#[test]
fn out_of_range_probability_is_a_usage_error() {
    let o = run_bin(&["run", "--probability", "150", "--backend", "cyclic:ok"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_backend_is_a_usage_error() {
    let o = run_bin(&["run", "--probability", "50"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--backend"));
}

#[test]
fn missing_api_key_is_a_usage_error() {
    let o = bin()
        .args([
            "run",
            "--probability",
            "50",
            "--backend",
            "http:http://127.0.0.1:9/v1",
            "--model",
            "m",
        ])
        .env_remove("DISCOURSE_API_KEY")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("DISCOURSE_API_KEY"));
}

#[test]
fn endpoint_failure_aborts_and_keeps_the_partial_transcript() {
    let server = flaky_server(3);
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(
        &config,
        r#"{"retry": {"max_attempts": 2, "initial_delay_ms": 0, "multiplier": 2},
            "session": {"extraction": "deterministic", "max_iterations": 10}}"#,
    )
    .unwrap();
    let o = bin()
        .args([
            "run",
            "--probability",
            "75",
            "--backend",
            &format!("http:{}", server.base_url),
            "--model",
            "test-model",
            "--config",
            config.to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
        ])
        .env("DISCOURSE_API_KEY", "test-key")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let t = Transcript::load(dir.path().join("flood_75pct_run1.json")).unwrap();
    assert!(t.summary().is_none());
    assert!(t.meta.aborted.is_some());
    assert_eq!(t.agent_turns().count(), 3);
    // Three good calls, then the failing call and its retry.
    assert_eq!(server.served.load(std::sync::atomic::Ordering::SeqCst), 5);
}

#[test]
fn singleton_batch_and_analyze_agree() {
    let dir = tempfile::tempdir().unwrap();
    let grid = write_grid(&dir.path().join("grid"), &[(50, 1, 1)]);
    let config = write_grid_config(dir.path());
    let out = dir.path().join("out");
    let o = run_bin(&[
        "batch",
        "--probabilities",
        "50",
        "--repetitions",
        "1",
        "--backend",
        &format!("scripted:{}", grid.display()),
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("50%: 1 runs hydrologist=1"));
    let report = std::fs::read_to_string(out.join("report.json")).unwrap();
    assert!(report.contains("\"runs_per_cell\": 1"));

    let again = dir.path().join("analyzed");
    let o = run_bin(&[
        "analyze",
        "--dir",
        out.join("transcripts").to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        std::fs::read_to_string(again.join("report.json")).unwrap(),
        report
    );
    assert_eq!(
        std::fs::read_to_string(again.join("report.csv")).unwrap(),
        std::fs::read_to_string(out.join("report.csv")).unwrap()
    );
}

#[test]
fn batch_flags_cells_with_failed_sessions() {
    let dir = tempfile::tempdir().unwrap();
    let grid = write_grid(&dir.path().join("grid"), &[(50, 2, 0), (90, 2, 0)]);
    // Truncate one script so its session runs out of replies.
    let short = dir.path().join("grid/p90_r2.json");
    let mut script: Vec<serde_json::Value> =
        serde_json::from_str(&std::fs::read_to_string(&short).unwrap()).unwrap();
    script.truncate(2);
    std::fs::write(&short, serde_json::to_string(&script).unwrap()).unwrap();
    let config = write_grid_config(dir.path());
    let out = dir.path().join("out");
    let o = run_bin(&[
        "batch",
        "--probabilities",
        "50,90",
        "--repetitions",
        "2",
        "--backend",
        &format!("scripted:{}", grid.display()),
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("90%: 1 runs (incomplete)"));
    assert!(out.join("aborted/flood_90pct_run2.json").exists());
}

#[test]
fn batch_with_an_empty_cell_fails() {
    let dir = tempfile::tempdir().unwrap();
    let grid = write_grid(&dir.path().join("grid"), &[(50, 1, 0), (90, 1, 0)]);
    std::fs::write(dir.path().join("grid/p90_r1.json"), "[]").unwrap();
    let config = write_grid_config(dir.path());
    let o = run_bin(&[
        "batch",
        "--probabilities",
        "50,90",
        "--backend",
        &format!("scripted:{}", grid.display()),
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn batch_rejects_duplicate_probabilities() {
    let o = run_bin(&[
        "batch",
        "--probabilities",
        "50,50",
        "--backend",
        "cyclic:ok",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn analyze_skips_corrupt_files() {
    let dir = tempfile::tempdir().unwrap();
    let grid = write_grid(&dir.path().join("grid"), &[(75, 2, 1)]);
    let config = write_grid_config(dir.path());
    let out = dir.path().join("out");
    let o = run_bin(&[
        "batch",
        "--probabilities",
        "75",
        "--repetitions",
        "2",
        "--backend",
        &format!("scripted:{}", grid.display()),
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    std::fs::write(out.join("transcripts/zz_corrupt.json"), "{not json").unwrap();
    let o = run_bin(&[
        "analyze",
        "--dir",
        out.join("transcripts").to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("75%: 2 runs hydrologist=1"));
    assert!(stdout(&o).contains("skipped 1"));
    assert!(stderr(&o).contains("zz_corrupt.json"));
}

#[test]
fn analyze_of_an_empty_directory_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_bin(&["analyze", "--dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn probe_cyclic_die() {
    let dir = tempfile::tempdir().unwrap();
    let prompt = dir.path().join("die.txt");
    std::fs::write(
        &prompt,
        "Roll a six-sided die. Answer with the number only.\n",
    )
    .unwrap();
    let o = run_bin(&[
        "probe",
        "--prompt",
        prompt.to_str().unwrap(),
        "--n",
        "600",
        "--backend",
        "cyclic:1,2,3,4,5,6",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        stdout(&o),
        "value,count\n1,100\n2,100\n3,100\n4,100\n5,100\n6,100\n"
    );
}

#[test]
fn probe_needs_draws() {
    let dir = tempfile::tempdir().unwrap();
    let prompt = dir.path().join("die.txt");
    std::fs::write(&prompt, "Roll.").unwrap();
    let o = run_bin(&[
        "probe",
        "--prompt",
        prompt.to_str().unwrap(),
        "--n",
        "0",
        "--backend",
        "cyclic:1",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.json");
    std::fs::write(
        &config,
        r#"{"probability": 40, "seed": 9, "session": {"max_iterations": 2, "summon_cap": 1, "extraction": "deterministic"}}"#,
    )
    .unwrap();
    let o = run_bin(&[
        "run",
        "--probability",
        "90",
        "--seed",
        "1",
        "--max-iterations",
        "8",
        "--backend",
        "cyclic:Report summary: agents present from the beginning. agents summoned. key points. advantages. drawbacks. conclusion.",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let t = Transcript::load(dir.path().join("flood_40pct_run1.json")).unwrap();
    assert_eq!(t.meta.seed, 9);
    assert_eq!(t.meta.config.max_iterations, 2);
    assert_eq!(t.agent_turns().count(), 2);
}
