use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

fn data() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn iassess(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iassess"))
        .args(["--log-level", "warn"])
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn segment_happy_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("seg.json");
    let t = data().join("corpus/transcripts/demo-001.json");
    let o = iassess(&[
        "segment",
        "--transcript",
        s(&t),
        "--schema",
        s(&data().join("schema.json")),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["interview_id"], "demo-001");
    assert!(!v["sections"].as_array().unwrap().is_empty());
}

#[test]
fn missing_argument_is_a_usage_error() {
    let t = data().join("corpus/transcripts/demo-001.json");
    let o = iassess(&["segment", "--transcript", s(&t), "--out", "/tmp/never.json"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--schema"));
    assert_eq!(code(&iassess(&["run"])), 1);
    assert_eq!(code(&iassess(&["--help"])), 0);
}

#[test]
fn bad_data_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let o = iassess(&[
        "segment",
        "--transcript",
        s(&bad),
        "--schema",
        s(&data().join("schema.json")),
        "--out",
        "/tmp/x",
    ]);
    assert_eq!(code(&o), 2);
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[paths]\nschema = \"missing.json\"\n").unwrap();
    assert_eq!(code(&iassess(&["--config", s(&cfg), "run"])), 2);
    std::fs::write(&cfg, "bogus_key = 1\n").unwrap();
    assert_eq!(code(&iassess(&["--config", s(&cfg), "run"])), 2);
}

#[test]
fn score_prints_the_metric() {
    let r = data().join("corpus/transcripts/demo-002.json");
    let h = data().join("corpus/diarized/demo-002.json");
    let o = iassess(&["score", "--ref", s(&r), "--hyp", s(&r), "--metric", "wer"]);
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "0.000000");
    let o = iassess(&["score", "--ref", s(&r), "--hyp", s(&h), "--metric", "tder"]);
    assert_eq!(code(&o), 0);
    let v: f64 = String::from_utf8_lossy(&o.stdout).trim().parse().unwrap();
    assert!(v > 0.0 && v < 1.0);
}

/// Serves `failures` HTTP 500s, then answers every request with an
/// abstention. Returns the url and the request counter.
fn flaky_server(failures: usize) -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/complete", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap_or(0);
                }
            }
            let mut body = vec![0u8; len];
            let _ = reader.read_exact(&mut body);
            let n = counter.fetch_add(1, Ordering::SeqCst);
            let (status, payload) = if n < failures {
                ("500 Internal Server Error", "{}".to_string())
            } else {
                (
                    "200 OK",
                    serde_json::json!({"text": r#"{"reason":"not discussed","answer":"NA"}"#}).to_string(),
                )
            };
            let _ = write!(
                stream,
                "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
                payload.len()
            );
        }
    });
    (url, hits)
}

fn http_config(dir: &Path, url: &str) -> PathBuf {
    let cfg = dir.join("http.toml");
    let text = format!(
        "[llm]\nprovider = \"http\"\nurl = \"{url}\"\ntimeout_secs = 5\nparallelism = 1\n\
         [llm.retry]\nmax_attempts = 3\nbase_delay_ms = 1\nmax_delay_ms = 2\n\
         [assess]\ntimestamp = \"2024-01-01T00:00:00Z\"\n"
    );
    std::fs::write(&cfg, text).unwrap();
    cfg
}

fn assess_args<'a>(cfg: &'a Path, out: &'a Path, t: &'a Path, schema: &'a Path) -> Vec<&'a str> {
    vec![
        "--config",
        s(cfg),
        "assess",
        "--transcript",
        s(t),
        "--schema",
        s(schema),
        "--out",
        s(out),
    ]
}

#[test]
fn transient_http_failures_are_retried() {
    let dir = tempfile::tempdir().unwrap();
    let (url, hits) = flaky_server(2);
    let cfg = http_config(dir.path(), &url);
    let out = dir.path().join("report.json");
    let t = data().join("corpus/transcripts/demo-003.json");
    let schema = data().join("schema.json");
    let o = iassess(&assess_args(&cfg, &out, &t, &schema));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(report["errors"]
        .as_array()
        .unwrap()
        .iter()
        .all(|e| e["class"] != "provider"));
    let preds = report["predictions"].as_array().unwrap();
    assert!(!preds.is_empty());
    // the first call took three attempts, every later one a single attempt
    assert!(hits.load(Ordering::SeqCst) >= 3);
}

#[test]
fn unreachable_provider_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let port = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let cfg = http_config(dir.path(), &format!("http://127.0.0.1:{port}/v1/complete"));
    let out = dir.path().join("report.json");
    let t = data().join("corpus/transcripts/demo-003.json");
    let schema = data().join("schema.json");
    let o = iassess(&assess_args(&cfg, &out, &t, &schema));
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    // outputs are still written
    assert!(out.exists());
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("failed after retries"));
    assert!(stderr.contains("attempts=3"), "{stderr}");
}

#[test]
fn log_lines_are_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("seg.json");
    let t = data().join("corpus/transcripts/demo-001.json");
    let o = Command::new(env!("CARGO_BIN_EXE_iassess"))
        .args(["--log-level", "debug", "segment", "--transcript", s(&t), "--schema"])
        .arg(data().join("schema.json"))
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let stderr = String::from_utf8_lossy(&o.stderr);
    let lines: Vec<&str> = stderr.lines().collect();
    assert!(!lines.is_empty());
    for line in lines {
        let v: serde_json::Value = serde_json::from_str(line).unwrap_or_else(|e| panic!("{line}: {e}"));
        assert!(v["level"].is_string() && v["msg"].is_string() && v["ts"].is_string());
    }
}

#[test]
fn run_reproduces_the_golden_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = data().join("run.toml");
    let o = iassess(&["--config", s(&cfg), "--workers", "2", "run", "--out", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let got = std::fs::read(dir.path().join("report.json")).unwrap();
    let want = std::fs::read(data().join("golden/report.json")).unwrap();
    assert!(got == want, "report differs from data/golden/report.json");
    let table = std::fs::read_to_string(dir.path().join("metrics.txt")).unwrap();
    assert_eq!(
        table,
        std::fs::read_to_string(data().join("golden/metrics.txt")).unwrap()
    );
    assert_eq!(String::from_utf8_lossy(&o.stdout), table);
}

#[test]
fn synth_then_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, r#"{"seed": 5, "interviews": 2}"#).unwrap();
    let schema = data().join("schema.json");
    let corpus = dir.path().join("corpus");
    let o = iassess(&[
        "synth",
        "--spec",
        s(&spec),
        "--schema",
        s(&schema),
        "--out-dir",
        s(&corpus),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let t = corpus.join("transcripts/synth-001.json");
    let report = dir.path().join("r.json");
    let mock = corpus.join("mock_llm.json");
    let gold = corpus.join("gold.json");
    let o = iassess(&[
        "assess",
        "--transcript",
        s(&t),
        "--schema",
        s(&schema),
        "--mock",
        s(&mock),
        "--gold",
        s(&gold),
        "--out",
        s(&report),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let eval = dir.path().join("eval.json");
    let o = iassess(&[
        "evaluate",
        "--pred",
        s(&report),
        "--gold",
        s(&gold),
        "--schema",
        s(&schema),
        "--out",
        s(&eval),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    // noise-free mock answers reproduce the planted gold
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&eval).unwrap()).unwrap();
    let scale = v["rows"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["var_type"] == "scale" && r["section"] == "all");
    assert_eq!(scale.unwrap()["accuracy"], 1.0);
}
