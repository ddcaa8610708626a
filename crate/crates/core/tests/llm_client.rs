use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use bubblesim_core::agents::{
    build_prompt, llm_decide, AgentHistory, ChatEndpoint, FeedbackType, HistoryEntry,
};
use bubblesim_core::catalog::{generate_fixture, summarize_item, BranchingShape};
use bubblesim_core::personas::{generate_profiles, render_profile, MotivationKind};
use bubblesim_core::simulation::{run, run_to_dir, Backend, SimulationConfig};

/// A request as seen by the mock server.
#[derive(Debug, Clone)]
struct Seen {
    authorization: Option<String>,
    body: serde_json::Value,
}

type Reply = (u16, String);

/// Minimal HTTP/1.1 server answering each request with `respond(n, request)`
/// where `n` counts requests from zero. One request per connection.
struct MockServer {
    url: String,
    seen: Arc<Mutex<Vec<Seen>>>,
}

impl MockServer {
    fn start<F>(respond: F) -> MockServer
    where
        F: Fn(usize, &Seen) -> Reply + Send + Sync + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1", listener.local_addr().unwrap());
        let seen = Arc::new(Mutex::new(Vec::new()));
        let log = Arc::clone(&seen);
        let respond = Arc::new(respond);
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { break };
                let log = Arc::clone(&log);
                let respond = Arc::clone(&respond);
                thread::spawn(move || serve(stream, &log, respond.as_ref()));
            }
        });
        MockServer { url, seen }
    }

    fn requests(&self) -> Vec<Seen> {
        self.seen.lock().unwrap().clone()
    }
}

fn serve(stream: TcpStream, log: &Mutex<Vec<Seen>>, respond: &dyn Fn(usize, &Seen) -> Reply) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut length = 0;
    let mut authorization = None;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            match name.to_ascii_lowercase().as_str() {
                "content-length" => length = value.trim().parse().unwrap(),
                "authorization" => authorization = Some(value.trim().to_string()),
                _ => {}
            }
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body).unwrap();
    let request = Seen {
        authorization,
        body: serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null),
    };
    let (status, reply) = {
        let mut log = log.lock().unwrap();
        let reply = respond(log.len(), &request);
        log.push(request);
        reply
    };
    let mut stream = stream;
    let _ = write!(
        stream,
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
        reply.len()
    );
}

fn chat(content: &str) -> Reply {
    let body = serde_json::json!({
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]
    });
    (200, body.to_string())
}

fn endpoint(url: &str, key: Option<&str>) -> ChatEndpoint {
    ChatEndpoint::new(
        url,
        "mock-model",
        key.map(String::from),
        Duration::from_secs(5),
    )
    .with_backoff(Duration::from_millis(1))
}

#[test]
fn parses_a_clean_reply_and_sends_credentials() {
    let server = MockServer::start(|_, _| chat("FEEDBACK: WATCH AND COLLECT\nREASON: useful"));
    let outcome = llm_decide(&endpoint(&server.url, Some("sk-test")), "prompt text", 3);
    assert_eq!(outcome.decision.feedback, FeedbackType::WatchAndCollect);
    assert_eq!(outcome.decision.explanation, "useful");
    assert_eq!(outcome.attempts.len(), 1);

    let requests = server.requests();
    assert_eq!(requests.len(), 1);
    assert_eq!(requests[0].authorization.as_deref(), Some("Bearer sk-test"));
    let body = &requests[0].body;
    assert_eq!(body["model"], "mock-model");
    assert_eq!(body["messages"][0]["role"], "system");
    assert_eq!(body["messages"][1]["content"], "prompt text");
}

#[test]
fn no_key_means_no_authorization_header() {
    let server = MockServer::start(|_, _| chat("FEEDBACK: SKIP\nREASON: meh"));
    llm_decide(&endpoint(&server.url, None), "p", 1);
    assert_eq!(server.requests()[0].authorization, None);
}

#[test]
fn retries_after_an_unparseable_reply() {
    let server = MockServer::start(|n, _| {
        if n == 0 {
            chat("I would probably enjoy it.")
        } else {
            chat("FEEDBACK: WATCH AND LIKE\nREASON: funny")
        }
    });
    let outcome = llm_decide(&endpoint(&server.url, None), "p", 3);
    assert_eq!(outcome.decision.feedback, FeedbackType::WatchAndLike);
    assert_eq!(outcome.attempts.len(), 2);
    assert_eq!(server.requests().len(), 2);
}

#[test]
fn unparseable_replies_fall_back_to_skip() {
    let server = MockServer::start(|_, _| chat("no idea"));
    let outcome = llm_decide(&endpoint(&server.url, None), "p", 3);
    assert_eq!(outcome.decision.feedback, FeedbackType::Skip);
    assert_eq!(outcome.decision.explanation, "unparseable");
    assert_eq!(outcome.attempts.len(), 3);
}

#[test]
fn server_errors_fall_back_to_skip() {
    let server = MockServer::start(|_, _| (500, "{}".into()));
    let outcome = llm_decide(&endpoint(&server.url, None), "p", 2);
    assert_eq!(outcome.decision.feedback, FeedbackType::Skip);
    assert_eq!(outcome.decision.explanation, "backend unavailable");
    assert_eq!(outcome.attempts.len(), 2);
    assert!(outcome.attempts.iter().all(|a| a.error.is_some()));
}

#[test]
fn unreachable_backend_falls_back_to_skip() {
    let port = TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let url = format!("http://127.0.0.1:{port}/v1");
    let outcome = llm_decide(&endpoint(&url, None), "p", 2);
    assert_eq!(outcome.decision.feedback, FeedbackType::Skip);
    assert_eq!(outcome.attempts.len(), 2);
}

/// Answers from the prompt text so that replies differ across items.
fn persona_reply(_: usize, request: &Seen) -> Reply {
    let prompt = request.body["messages"][1]["content"]
        .as_str()
        .unwrap_or("");
    let hash = prompt
        .bytes()
        .fold(0u32, |h, b| h.wrapping_mul(31).wrapping_add(u32::from(b)));
    match hash % 7 {
        0 => chat("hmm, hard to say"),
        1 => chat("FEEDBACK: DISLIKE\nREASON: not for me"),
        2 => chat("FEEDBACK: SKIP\nREASON: boring"),
        3 => chat("FEEDBACK: WATCH AND LIKE\nREASON: fun"),
        4 => chat("FEEDBACK: WATCH AND COMMENT\nREASON: want to discuss"),
        5 => chat("FEEDBACK: WATCH AND COLLECT\nREASON: keep it"),
        _ => chat("FEEDBACK: JUST WATCH\nREASON: fine"),
    }
}

fn llm_config(url: &str) -> SimulationConfig {
    let mut config = SimulationConfig {
        n_users: 3,
        items_per_iteration: 3,
        n_iterations: 3,
        backend: Backend::Llm,
        seed: 12,
        ..SimulationConfig::default()
    };
    config.llm.base_url = url.to_string();
    config.llm.api_key_env = "BUBBLESIM_TEST_ONLY_KEY".into();
    config.llm.max_attempts = 2;
    config.llm.backoff_ms = 1;
    config.llm.max_in_flight = 2;
    config
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            out.extend(files_under(&path));
        } else {
            out.push(path);
        }
    }
    out
}

#[test]
fn llm_run_records_a_replayable_transcript_without_the_key() {
    std::env::set_var("BUBBLESIM_TEST_ONLY_KEY", "sk-never-persisted");
    let server = MockServer::start(persona_reply);
    let catalog = generate_fixture(7, 400, BranchingShape::short_video()).unwrap();
    let config = llm_config(&server.url);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("llm");
    let live = run_to_dir(&config, &catalog, &out, &mut |_| {}).unwrap();

    assert_eq!(live.records.len(), 27);
    assert!(live.transcript.len() >= 27);
    assert!(server
        .requests()
        .iter()
        .all(|r| r.authorization.as_deref() == Some("Bearer sk-never-persisted")));
    for file in files_under(&out) {
        let bytes = std::fs::read(&file).unwrap();
        let text = String::from_utf8_lossy(&bytes);
        assert!(!text.contains("sk-never-persisted"), "{}", file.display());
    }

    let replay_config = SimulationConfig {
        backend: Backend::Transcript,
        transcript: Some(out.join("transcripts/transcript.jsonl")),
        ..config.clone()
    };
    let before = server.requests().len();
    let replayed = run(&replay_config, &catalog, &mut |_| {}).unwrap();
    assert_eq!(server.requests().len(), before);
    assert_eq!(replayed.records, live.records);
    assert_eq!(replayed.metrics, live.metrics);
}

fn golden(name: &str, actual: &str) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("{}: {e} (run with UPDATE_GOLDEN=1)", path.display()));
    assert_eq!(actual, expected, "{name} differs from its golden file");
}

#[test]
fn profile_and_prompt_match_golden_files() {
    let catalog = generate_fixture(7, 400, BranchingShape::short_video()).unwrap();
    let profile = generate_profiles(1, 5, MotivationKind::Gratification, &catalog)
        .unwrap()
        .remove(0);
    let profile_text = render_profile(&profile);
    golden("profile.txt", &profile_text);

    let mut history = AgentHistory::new(20);
    for (n, feedback) in [FeedbackType::WatchAndLike, FeedbackType::Skip]
        .into_iter()
        .enumerate()
    {
        let item = catalog.item(n + 1);
        history.push(HistoryEntry::new(item, summarize_item(item), feedback));
    }
    let prompt = build_prompt(&profile_text, &history, &summarize_item(catalog.item(0)));
    golden("prompt.txt", &prompt);
}
