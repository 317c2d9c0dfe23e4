use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use discourse_core::analysis::{
    aggregate_batch, distribution_probe, BatchReport, ClassifyMode, Histogram, ProbeParser,
    ProbeSettings, Taxonomy,
};
use discourse_core::backend::{BackendKind, CompletionBackend, RetryPolicy};
use discourse_core::orchestrator::{
    run_session, ExtractionMode, SessionConfig, SessionError, Transcript,
};
use discourse_core::persona::load_persona_file;
use discourse_core::scenario::{ScenarioInstance, ScenarioTemplate};
use tracing::{info, warn};

use crate::config::{backend_for_session, parse_backend, FileConfig};
use crate::{
    AnalyzeArgs, BatchArgs, ClassifyArg, CliError, ExtractionArg, ParserArg, ProbeArgs, RunArgs,
    SessionArgs,
};

struct Resolved {
    config: SessionConfig,
    scenario: ScenarioTemplate,
    backend: BackendKind,
    retry: RetryPolicy,
}

fn resolve(args: &SessionArgs, file: &FileConfig) -> Result<Resolved, CliError> {
    let scenario = match file.scenario_path.as_ref().or(args.scenario.as_ref()) {
        Some(path) => {
            ScenarioTemplate::from_path(path).map_err(|e| CliError::usage(e.to_string()))?
        }
        None => ScenarioTemplate::flood(),
    };
    let mut config = SessionConfig::default();
    if let Some(path) = file.personas_path.as_ref().or(args.personas.as_ref()) {
        config.initial_personas =
            load_persona_file(path).map_err(|e| CliError::usage(e.to_string()))?;
    }
    let s = &file.session;
    if let Some(v) = s.max_iterations.or(args.max_iterations) {
        config.max_iterations = v;
    }
    if let Some(v) = s.moderator_period.or(args.moderator_period) {
        config.moderator_period = v;
    }
    if let Some(v) = s.summon_cap.or(args.summon_cap) {
        config.summon_cap = v;
    }
    if let Some(v) = s.temperature.or(args.temperature) {
        config.temperature = v;
    }
    if let Some(v) = s.max_tokens {
        config.max_tokens = v;
    }
    let extraction = args.extraction.map(|e| match e {
        ExtractionArg::Agent => ExtractionMode::Agent,
        ExtractionArg::Deterministic => ExtractionMode::Deterministic,
    });
    if let Some(v) = s.extraction.or(extraction) {
        config.extraction = v;
    }
    if s.stability_window.is_some() {
        config.stability_window = s.stability_window;
    }
    let backend = match (&file.backend, &args.backend) {
        (Some(kind), _) => kind.clone(),
        (None, Some(spec)) => parse_backend(spec, args.model.as_deref())?,
        (None, None) => return Err(CliError::usage("--backend is required")),
    };
    Ok(Resolved {
        config,
        scenario,
        backend,
        retry: file.retry.clone().unwrap_or_default(),
    })
}

fn render(template: &ScenarioTemplate, probability: i64) -> Result<ScenarioInstance, CliError> {
    template
        .render(probability)
        .map_err(|e| CliError::usage(e.to_string()))
}

fn open(kind: &BackendKind, retry: &RetryPolicy) -> Result<Box<dyn CompletionBackend>, CliError> {
    kind.preflight()
        .map_err(|e| CliError::usage(e.to_string()))?;
    kind.open(retry).map_err(|e| CliError::usage(e.to_string()))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| CliError::failure(format!("cannot create {}: {e}", parent.display())))?;
    }
    std::fs::write(path, contents)
        .map_err(|e| CliError::failure(format!("cannot write {}: {e}", path.display())))
}

fn io_failure(e: std::io::Error) -> CliError {
    CliError::failure(e.to_string())
}

pub fn run(args: &RunArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let file = FileConfig::load_optional(args.session.config.as_deref())?;
    let Resolved {
        mut config,
        scenario,
        backend,
        retry,
    } = resolve(&args.session, &file)?;
    let probability = file
        .probability
        .or(args.probability)
        .ok_or_else(|| CliError::usage("--probability is required"))?;
    let instance = render(&scenario, probability)?;
    config.seed = file.seed.or(args.seed).unwrap_or(0);
    config
        .validate()
        .map_err(|e| CliError::usage(e.to_string()))?;
    let backend = open(&backend, &retry)?;
    let out_dir = file.output_dir.clone().unwrap_or_else(|| args.out.clone());

    match run_session(&config, &instance, backend.as_ref()) {
        Ok(output) => {
            let path = output
                .transcript
                .save(&out_dir, 1)
                .map_err(|e| CliError::failure(e.to_string()))?;
            info!(path = %path.display(), "transcript written");
            writeln!(stdout, "{}", output.summary).map_err(io_failure)?;
            Ok(())
        }
        Err(SessionError::Aborted { transcript, reason }) => {
            let path = transcript
                .save(&out_dir, 1)
                .map_err(|e| CliError::failure(e.to_string()))?;
            warn!(path = %path.display(), "partial transcript written");
            Err(CliError::failure(format!("session aborted: {reason}")))
        }
        Err(err @ SessionError::InvalidConfig(_)) => Err(CliError::usage(err.to_string())),
    }
}

fn load_taxonomy(path: Option<&PathBuf>) -> Result<Taxonomy, CliError> {
    match path {
        Some(p) => Taxonomy::load(p).map_err(|e| CliError::usage(e.to_string())),
        None => Ok(Taxonomy::shipped()),
    }
}

fn classifier<'a>(
    arg: ClassifyArg,
    backend: Option<&'a dyn CompletionBackend>,
) -> Result<ClassifyMode<'a>, CliError> {
    match (arg, backend) {
        (ClassifyArg::Keyword, _) => Ok(ClassifyMode::Keyword),
        (ClassifyArg::Llm, Some(b)) => Ok(ClassifyMode::Llm(b)),
        (ClassifyArg::Llm, None) => Err(CliError::usage("--classify llm needs --backend")),
    }
}

fn write_report(report: &BatchReport, dir: &Path) -> Result<(), CliError> {
    write_file(&dir.join("report.json"), &(report.to_json() + "\n"))?;
    write_file(&dir.join("report.csv"), &report.to_csv())
}

fn report_lines(report: &BatchReport, stdout: &mut dyn Write) -> Result<(), CliError> {
    for (p, cell) in &report.cells {
        let tally = cell
            .summon_tally
            .iter()
            .map(|(role, n)| format!("{role}={n}"))
            .collect::<Vec<_>>()
            .join(" ");
        let flag = if cell.incomplete { " (incomplete)" } else { "" };
        writeln!(stdout, "{p}%: {} runs{flag} {tally}", cell.runs).map_err(io_failure)?;
    }
    Ok(())
}

struct Job {
    probability: u8,
    run: usize,
    seed: u64,
}

/// Runs the grid, writes every transcript under `out/transcripts` (aborted
/// ones under `out/aborted`) and the aggregate under `out/report.*`.
pub fn batch(args: &BatchArgs, stdout: &mut dyn Write) -> Result<BatchReport, CliError> {
    let file = FileConfig::load_optional(args.session.config.as_deref())?;
    let resolved = resolve(&args.session, &file)?;
    let probabilities = file
        .probabilities
        .clone()
        .unwrap_or_else(|| args.probabilities.clone());
    if probabilities.is_empty() {
        return Err(CliError::usage("--probabilities is required"));
    }
    if probabilities.iter().collect::<BTreeSet<_>>().len() != probabilities.len() {
        return Err(CliError::usage("--probabilities has duplicates"));
    }
    let instances = probabilities
        .iter()
        .map(|&p| render(&resolved.scenario, p).map(|i| (i.probability_percent, i)))
        .collect::<Result<BTreeMap<u8, ScenarioInstance>, _>>()?;
    let repetitions = file.repetitions.or(args.repetitions).unwrap_or(1);
    if repetitions == 0 {
        return Err(CliError::usage("--repetitions must be at least 1"));
    }
    let base_seed = file.base_seed.or(args.base_seed).unwrap_or(0);
    let out = file.output_dir.clone().unwrap_or_else(|| args.out.clone());
    let taxonomy = load_taxonomy(file.taxonomy_path.as_ref().or(args.taxonomy.as_ref()))?;
    resolved
        .config
        .validate()
        .map_err(|e| CliError::usage(e.to_string()))?;

    let mut jobs = Vec::new();
    for (i, &p) in probabilities.iter().enumerate() {
        for r in 0..repetitions {
            let k = i * repetitions + r;
            jobs.push(Job {
                probability: p as u8,
                run: r + 1,
                seed: base_seed + k as u64,
            });
        }
    }
    for job in &jobs {
        backend_for_session(&resolved.backend, job.probability, job.run)
            .preflight()
            .map_err(|e| CliError::usage(e.to_string()))?;
    }

    let parallel = file
        .parallel
        .or(args.parallel)
        .unwrap_or(probabilities.len())
        .clamp(1, jobs.len());
    let transcripts_dir = out.join("transcripts");
    let aborted_dir = out.join("aborted");
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<Transcript, String>>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());

    std::thread::scope(|scope| {
        for _ in 0..parallel {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(idx) else { break };
                let outcome = run_job(
                    job,
                    &resolved,
                    &instances[&job.probability],
                    &transcripts_dir,
                    &aborted_dir,
                );
                results.lock().expect("results lock")[idx] = Some(outcome);
            });
        }
    });

    let mut groups: BTreeMap<u8, Vec<Transcript>> =
        instances.keys().map(|&p| (p, Vec::new())).collect();
    let mut failures = 0;
    for (job, result) in jobs.iter().zip(results.into_inner().expect("results lock")) {
        match result.expect("every job ran") {
            Ok(t) => groups
                .get_mut(&job.probability)
                .expect("known cell")
                .push(t),
            Err(reason) => {
                failures += 1;
                warn!(probability = job.probability, run = job.run, %reason, "session failed");
            }
        }
    }
    let empty: Vec<u8> = groups
        .iter()
        .filter(|(_, runs)| runs.is_empty())
        .map(|(&p, _)| p)
        .collect();
    groups.retain(|_, runs| !runs.is_empty());
    if groups.is_empty() {
        return Err(CliError::failure("no session completed"));
    }

    let classify_backend = match args.classify {
        ClassifyArg::Llm => Some(open(&resolved.backend, &resolved.retry)?),
        ClassifyArg::Keyword => None,
    };
    let mode = classifier(args.classify, classify_backend.as_deref())?;
    let mut report =
        aggregate_batch(&groups, &taxonomy, mode).map_err(|e| CliError::failure(e.to_string()))?;
    for (&p, runs) in &groups {
        if runs.len() < repetitions {
            report.flag_incomplete(p);
        }
    }
    write_report(&report, &out)?;
    report_lines(&report, stdout)?;
    writeln!(
        stdout,
        "{} of {} sessions completed; report in {}",
        jobs.len() - failures,
        jobs.len(),
        out.display()
    )
    .map_err(io_failure)?;

    if empty.is_empty() {
        Ok(report)
    } else {
        Err(CliError::failure(format!("no completed runs at {empty:?}")))
    }
}

fn run_job(
    job: &Job,
    resolved: &Resolved,
    instance: &ScenarioInstance,
    transcripts_dir: &Path,
    aborted_dir: &Path,
) -> Result<Transcript, String> {
    let kind = backend_for_session(&resolved.backend, job.probability, job.run);
    let backend = kind.open(&resolved.retry).map_err(|e| e.to_string())?;
    let config = SessionConfig {
        seed: job.seed,
        ..resolved.config.clone()
    };
    match run_session(&config, instance, backend.as_ref()) {
        Ok(output) => {
            output
                .transcript
                .save(transcripts_dir, job.run)
                .map_err(|e| e.to_string())?;
            Ok(output.transcript)
        }
        Err(SessionError::Aborted { transcript, reason }) => {
            if let Err(e) = transcript.save(aborted_dir, job.run) {
                warn!(error = %e, "could not save partial transcript");
            }
            Err(reason)
        }
        Err(err) => Err(err.to_string()),
    }
}

/// Rebuilds the report from the `*.json` transcripts in a directory.
pub fn analyze(args: &AnalyzeArgs, stdout: &mut dyn Write) -> Result<BatchReport, CliError> {
    let taxonomy = load_taxonomy(args.taxonomy.as_ref())?;
    let entries = std::fs::read_dir(&args.dir)
        .map_err(|e| CliError::failure(format!("cannot read {}: {e}", args.dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::failure(format!(
            "no transcripts in {}",
            args.dir.display()
        )));
    }

    let mut groups: BTreeMap<u8, Vec<Transcript>> = BTreeMap::new();
    let mut skipped = 0;
    for path in &paths {
        match Transcript::load(path) {
            Ok(t) => groups
                .entry(t.meta.probability_percent)
                .or_default()
                .push(t),
            Err(e) => {
                skipped += 1;
                warn!(path = %path.display(), error = %e, "skipping transcript");
            }
        }
    }
    if groups.is_empty() {
        return Err(CliError::failure("no readable transcripts"));
    }

    let backend = match (&args.classify, &args.backend) {
        (ClassifyArg::Llm, Some(spec)) => Some(open(
            &parse_backend(spec, args.model.as_deref())?,
            &RetryPolicy::default(),
        )?),
        _ => None,
    };
    let mode = classifier(args.classify, backend.as_deref())?;
    let report =
        aggregate_batch(&groups, &taxonomy, mode).map_err(|e| CliError::failure(e.to_string()))?;
    let out = args.out.clone().unwrap_or_else(|| {
        args.dir
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map_or_else(|| PathBuf::from("."), Path::to_path_buf)
    });
    write_report(&report, &out)?;
    report_lines(&report, stdout)?;
    if skipped > 0 {
        writeln!(stdout, "skipped {skipped} unreadable file(s)").map_err(io_failure)?;
    }
    Ok(report)
}

pub fn probe(args: &ProbeArgs, stdout: &mut dyn Write) -> Result<Histogram, CliError> {
    if args.n == 0 {
        return Err(CliError::usage("--n must be at least 1"));
    }
    let prompt = std::fs::read_to_string(&args.prompt).map_err(|e| {
        CliError::usage(format!("cannot read prompt {}: {e}", args.prompt.display()))
    })?;
    let kind = parse_backend(&args.backend, args.model.as_deref())?;
    let backend = open(&kind, &RetryPolicy::default())?;
    let settings = ProbeSettings {
        parser: match args.parser {
            ParserArg::Integer => ProbeParser::Integer,
            ParserArg::FirstNumber => ProbeParser::FirstNumber,
        },
        bin_width: args.bin_width,
        parallelism: args.parallel,
        temperature: args.temperature,
        ..ProbeSettings::default()
    };
    let histogram = distribution_probe(prompt.trim(), args.n, backend.as_ref(), settings)
        .map_err(|e| CliError::usage(e.to_string()))?;
    match &args.out {
        Some(path) => write_file(path, &histogram.to_csv())?,
        None => stdout
            .write_all(histogram.to_csv().as_bytes())
            .map_err(io_failure)?,
    }
    Ok(histogram)
}
