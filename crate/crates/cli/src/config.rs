use std::path::{Path, PathBuf};

use discourse_core::backend::{BackendKind, RetryPolicy, DEFAULT_API_KEY_ENV};
use discourse_core::orchestrator::ExtractionMode;
use regex::Regex;
use serde::Deserialize;

use crate::CliError;

/// Parses `--backend` values.
///
/// * `scripted:PATH` replays a fixture file
/// * `cyclic:a,b,c` cycles through fixed replies
/// * `uniform:LO-HI[:SEED]` draws seeded uniform integers
/// * `http:BASE_URL` talks to an OpenAI-compatible endpoint (needs `--model`)
pub fn parse_backend(spec: &str, model: Option<&str>) -> Result<BackendKind, CliError> {
    let (kind, rest) = spec
        .split_once(':')
        .ok_or_else(|| CliError::usage(format!("backend `{spec}` has no kind prefix")))?;
    match kind {
        "scripted" if !rest.is_empty() => Ok(BackendKind::ScriptedReplay {
            fixture_path: PathBuf::from(rest),
        }),
        "cyclic" if !rest.is_empty() => Ok(BackendKind::FixedResponder {
            responses: rest.split(',').map(str::to_string).collect(),
        }),
        "uniform" => {
            let re = Regex::new(r"^(-?\d+)-(-?\d+)(?::(\d+))?$").expect("static regex");
            let caps = re.captures(rest).ok_or_else(|| {
                CliError::usage(format!("expected uniform:LO-HI[:SEED], got `{spec}`"))
            })?;
            let low: i64 = caps[1]
                .parse()
                .map_err(|_| CliError::usage("bad lower bound"))?;
            let high: i64 = caps[2]
                .parse()
                .map_err(|_| CliError::usage("bad upper bound"))?;
            if low > high {
                return Err(CliError::usage(format!("empty range {low}-{high}")));
            }
            let seed = caps
                .get(3)
                .map_or(Ok(0), |m| m.as_str().parse())
                .map_err(|_| CliError::usage("bad seed"))?;
            Ok(BackendKind::RandomInteger { low, high, seed })
        }
        "http" if !rest.is_empty() => {
            let model = model.ok_or_else(|| CliError::usage("http backends need --model"))?;
            Ok(BackendKind::HttpEndpoint {
                base_url: rest.to_string(),
                model_id: model.to_string(),
                api_key_ref: DEFAULT_API_KEY_ENV.to_string(),
            })
        }
        _ => Err(CliError::usage(format!("unrecognized backend `{spec}`"))),
    }
}

/// Replaces `{probability}` and `{run}` in scripted fixture paths so each
/// batch session can replay its own file.
pub fn backend_for_session(kind: &BackendKind, probability: u8, run: usize) -> BackendKind {
    match kind {
        BackendKind::ScriptedReplay { fixture_path } => {
            let path = fixture_path
                .to_string_lossy()
                .replace("{probability}", &probability.to_string())
                .replace("{run}", &run.to_string());
            BackendKind::ScriptedReplay {
                fixture_path: PathBuf::from(path),
            }
        }
        other => other.clone(),
    }
}

/// Values read from `--config`. Anything set here wins over the flags.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub backend: Option<BackendKind>,
    pub retry: Option<RetryPolicy>,
    pub scenario_path: Option<PathBuf>,
    pub personas_path: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub taxonomy_path: Option<PathBuf>,
    pub probability: Option<i64>,
    pub probabilities: Option<Vec<i64>>,
    pub repetitions: Option<usize>,
    pub base_seed: Option<u64>,
    pub seed: Option<u64>,
    pub parallel: Option<usize>,
    #[serde(default)]
    pub session: SessionOverrides,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionOverrides {
    pub max_iterations: Option<u32>,
    pub moderator_period: Option<u32>,
    pub summon_cap: Option<u32>,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
    pub extraction: Option<ExtractionMode>,
    pub stability_window: Option<u32>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))
    }

    pub fn load_optional(path: Option<&Path>) -> Result<Self, CliError> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }
}
