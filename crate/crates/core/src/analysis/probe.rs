use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{LazyLock, Mutex};

use regex::Regex;
use serde::{Deserialize, Serialize};
use tracing::debug;

use super::AnalysisError;
use crate::backend::{CompletionBackend, CompletionRequest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeParser {
    /// The whole reply, trimmed and without a trailing period, is one integer.
    Integer,
    /// The first integer appearing anywhere in the reply.
    FirstNumber,
}

impl ProbeParser {
    pub fn parse(self, reply: &str) -> Option<i64> {
        match self {
            ProbeParser::Integer => reply.trim().trim_end_matches('.').trim().parse().ok(),
            ProbeParser::FirstNumber => {
                static NUMBER: LazyLock<Regex> =
                    LazyLock::new(|| Regex::new(r"-?\d+").expect("static regex"));
                NUMBER.find(reply).and_then(|m| m.as_str().parse().ok())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ProbeKey {
    Value(i64),
    Unparsed,
    Failed,
}

impl fmt::Display for ProbeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProbeKey::Value(v) => write!(f, "{v}"),
            ProbeKey::Unparsed => f.write_str("unparsed"),
            ProbeKey::Failed => f.write_str("failed"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Histogram {
    pub counts: BTreeMap<ProbeKey, u64>,
    pub n: u64,
}

impl Histogram {
    pub fn count(&self, key: ProbeKey) -> u64 {
        self.counts.get(&key).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    fn add(&mut self, key: ProbeKey) {
        *self.counts.entry(key).or_insert(0) += 1;
        self.n += 1;
    }

    pub fn merge(&mut self, other: &Histogram) {
        for (k, c) in &other.counts {
            *self.counts.entry(*k).or_insert(0) += c;
        }
        self.n += other.n;
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("value,count\n");
        for (k, c) in &self.counts {
            let _ = writeln!(out, "{k},{c}");
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeSettings {
    pub parser: ProbeParser,
    /// Values are floored to multiples of this width when set.
    pub bin_width: Option<i64>,
    pub parallelism: usize,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        Self {
            parser: ProbeParser::Integer,
            bin_width: None,
            parallelism: 1,
            temperature: 1.0,
            max_tokens: 64,
        }
    }
}

fn key_for(
    reply: Result<String, crate::backend::BackendError>,
    settings: &ProbeSettings,
) -> ProbeKey {
    match reply {
        Err(e) => {
            debug!(error = %e, "probe draw failed");
            ProbeKey::Failed
        }
        Ok(text) => match settings.parser.parse(&text) {
            None => ProbeKey::Unparsed,
            Some(v) => match settings.bin_width {
                Some(w) if w > 1 => ProbeKey::Value(v.div_euclid(w) * w),
                _ => ProbeKey::Value(v),
            },
        },
    }
}

/// Sends `prompt` `n` times as independent single-message conversations and
/// tallies the parsed replies. Failed draws are counted, not fatal.
pub fn distribution_probe(
    prompt: &str,
    n: usize,
    backend: &dyn CompletionBackend,
    settings: ProbeSettings,
) -> Result<Histogram, AnalysisError> {
    if n == 0 {
        return Err(AnalysisError::EmptyProbe);
    }
    let request = CompletionRequest::new("probe", "")
        .with_message("user", prompt)
        .with_temperature(settings.temperature)
        .with_max_tokens(settings.max_tokens);
    let next = AtomicUsize::new(0);
    let merged = Mutex::new(Histogram::default());
    let workers = settings.parallelism.clamp(1, n);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| {
                let mut local = Histogram::default();
                while next.fetch_add(1, Ordering::Relaxed) < n {
                    local.add(key_for(backend.complete(&request), &settings));
                }
                merged.lock().expect("histogram lock").merge(&local);
            });
        }
    });
    Ok(merged.into_inner().expect("histogram lock"))
}
