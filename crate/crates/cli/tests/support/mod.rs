#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde_json::json;

pub fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_discourse"));
    cmd.env_remove("RUST_LOG");
    cmd
}

pub fn run_bin(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub const GRID_TURNS: u32 = 4;

const PERSONA: &str = "```persona\nROLE: Hydrologist\nDESCRIPTION: A hydrologist who models river discharge for the township.\n\
OBJECTIVES:\n- Provide river flow forecasts.\nRESTRICTIONS:\n- municipal finance\n```";

fn summary(probability: u8) -> String {
    let focus = if probability >= 90 {
        "- evacuation of flood-prone areas.\n- temporary shelters for displaced residents."
    } else {
        "- sandbagging along the river bank.\n- public communication about the forecast."
    };
    format!(
        "Report summary:\n\n**agents present from the beginning:**\n1. Mayor\n2. Scientist\n3. Spokesperson\n4. Moderator\n\n\
         **agents summoned during the conversation:**\nsee the transcript\n\n**key points and tasks:**\n{focus}\n\n\
         **advantages and drawbacks of proposed solutions:**\n- advantages: fewer casualties.\n- drawbacks: cost.\n\n\
         **conclusion:**\nact on the forecast."
    )
}

/// Replay script for one grid session with deterministic extraction,
/// `GRID_TURNS` turns and one moderator check at the end.
pub fn grid_script(probability: u8, summon: bool) -> serde_json::Value {
    let mut entries = Vec::new();
    let mut add = |hint: &str, response: String| {
        entries
            .push(json!({"turn": entries.len() + 1, "speaker_hint": hint, "response": response}));
    };
    if summon {
        add(
            "*",
            "We need river flow forecasts before deciding.\nSUMMON: hydrologist".into(),
        );
        add("persona-generator", PERSONA.into());
        add(
            "hydrologist",
            "The watershed is saturated; prepare to evacuate low areas.".into(),
        );
    } else {
        add("*", "We need river flow forecasts before deciding.".into());
    }
    add(
        "*",
        format!("At {probability}% we should start sandbagging the east bank."),
    );
    add(
        "*",
        "Low-income neighborhoods need transportation for evacuation.".into(),
    );
    add("*", "Keep the reservoir release controlled.".into());
    add(
        "moderator",
        "VERDICT: LOG\nThe discussion is on track.".into(),
    );
    add("summarizer", summary(probability));
    serde_json::Value::Array(entries)
}

/// Writes `p{probability}_r{run}.json` scripts. Runs `1..=summons[p]` call in
/// a hydrologist.
pub fn write_grid(dir: &Path, cells: &[(u8, usize, usize)]) -> PathBuf {
    std::fs::create_dir_all(dir).unwrap();
    for &(p, runs, summons) in cells {
        for r in 1..=runs {
            let script = grid_script(p, r <= summons);
            std::fs::write(
                dir.join(format!("p{p}_r{r}.json")),
                serde_json::to_string_pretty(&script).unwrap(),
            )
            .unwrap();
        }
    }
    dir.join("p{probability}_r{run}.json")
}

/// Writes a JSON config selecting deterministic extraction and `GRID_TURNS` turns.
pub fn write_grid_config(dir: &Path) -> PathBuf {
    let path = dir.join("grid_config.json");
    let config = json!({
        "session": {
            "max_iterations": GRID_TURNS,
            "moderator_period": GRID_TURNS,
            "summon_cap": 1,
            "extraction": "deterministic"
        }
    });
    std::fs::write(&path, config.to_string()).unwrap();
    path
}

/// A minimal OpenAI-style endpoint that answers `healthy` requests and then
/// refuses with 503 and `Connection: close`.
pub struct FlakyServer {
    pub base_url: String,
    pub served: Arc<AtomicUsize>,
}

pub fn flaky_server(healthy: usize) -> FlakyServer {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base_url = format!("http://{}/v1", listener.local_addr().unwrap());
    let served = Arc::new(AtomicUsize::new(0));
    let counter = served.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { break };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap_or(0);
                }
                if line == "\r\n" {
                    break;
                }
            }
            let mut body = vec![0u8; length];
            let _ = reader.read_exact(&mut body);
            let n = counter.fetch_add(1, Ordering::SeqCst);
            let (status, payload) = if n < healthy {
                let reply = json!({"choices": [{"message": {"role": "assistant",
                    "content": format!("Point {n}: we should prepare evacuation routes.")}}]});
                ("200 OK", reply.to_string())
            } else {
                (
                    "503 Service Unavailable",
                    r#"{"error":"overloaded"}"#.to_string(),
                )
            };
            let _ = write!(
                stream,
                "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
                payload.len()
            );
        }
    });
    FlakyServer { base_url, served }
}
