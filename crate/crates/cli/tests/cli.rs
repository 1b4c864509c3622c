//! The `ironylab` binary end to end.

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ironylab"))
}

fn core_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core")
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn run_fixture(out: &Path) {
    let config = core_dir().join("fixtures/e2e/experiment.toml");
    ok(bin()
        .args(["run", "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap());
}

#[test]
fn report_reprints_the_run_report() {
    let tmp = tempfile::tempdir().unwrap();
    run_fixture(tmp.path());
    let json = ok(bin().arg("report").arg("--log").arg(tmp.path().join("results.jsonl")).output().unwrap());
    assert_eq!(json, std::fs::read_to_string(tmp.path().join("report.json")).unwrap());
    let csv = ok(bin()
        .arg("report")
        .arg("--csv")
        .arg("--log")
        .arg(tmp.path().join("results.jsonl"))
        .output()
        .unwrap());
    assert!(csv.starts_with("dataset,strategy,model,P,R,F1,F,S,H,B\nfixture,idadp,mock-model,"));
}

#[test]
fn overrides_and_bad_input() {
    let tmp = tempfile::tempdir().unwrap();
    let config = core_dir().join("fixtures/e2e/experiment.toml");
    let out = bin()
        .args(["run", "--strategy", "nonsense", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown strategy"));

    ok(bin()
        .args(["run", "--limit", "4", "--seed", "3", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(tmp.path())
        .output()
        .unwrap());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["evaluated"], 4);
}

#[test]
fn prompts_export_matches_golden() {
    let tmp = tempfile::tempdir().unwrap();
    ok(bin().args(["prompts", "export", "--out"]).arg(tmp.path()).output().unwrap());
    for entry in std::fs::read_dir(core_dir().join("prompts")).unwrap() {
        let path = entry.unwrap().path();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(tmp.path().join(path.file_name().unwrap())).unwrap()
        );
    }
}

#[test]
fn stats_prints_corpus_summary() {
    let out = ok(bin()
        .args(["stats", "--dataset", "semeval", "--path"])
        .arg(core_dir().join("fixtures/corpora/semeval.tsv"))
        .output()
        .unwrap());
    assert!(out.starts_with("SemEval: size 20  ironic ratio 0.5000"), "{out}");
}

#[test]
fn knowledge_extract_with_mock() {
    let tmp = tempfile::tempdir().unwrap();
    let script = tmp.path().join("mock.json");
    let answers = serde_json::json!({
        "rules": [
            {"contains": ["definition of irony"], "reply": "Irony is saying the opposite of what you mean. It is common."},
            {"contains": ["key features"], "reply": "- contrast between words and situation\n- exaggerated praise\n- mocking tone"},
            {"contains": ["sequence of steps"], "reply": "1. Read the text.\n2. Find the literal meaning.\n3. Find the intended meaning.\n4. Compare them.\n5. Decide.\n6. Extra."}
        ],
        "default": "Sure."
    });
    std::fs::write(&script, answers.to_string()).unwrap();
    let out = ok(bin()
        .args(["knowledge", "extract", "--provider", "mock", "--mock-script"])
        .arg(&script)
        .output()
        .unwrap());
    let t: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(t["exchanges"].as_array().unwrap().len(), 7);
    assert_eq!(t["bundle"]["definition"], "Irony is saying the opposite of what you mean.");
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn http(port: u16, method: &str, path: &str, body: &str) -> String {
    let mut s = TcpStream::connect(("127.0.0.1", port)).unwrap();
    write!(
        s,
        "{method} {path} HTTP/1.1\r\nHost: localhost\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut resp = String::new();
    s.read_to_string(&mut resp).unwrap();
    resp
}

#[test]
fn serve_answers_over_tcp() {
    let tmp = tempfile::tempdir().unwrap();
    run_fixture(tmp.path());
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let _server = Server(
        bin()
            .args(["serve", "--port", &port.to_string(), "--log"])
            .arg(tmp.path().join("results.jsonl"))
            .stderr(Stdio::null())
            .spawn()
            .unwrap(),
    );
    let deadline = Instant::now() + Duration::from_secs(10);
    while TcpStream::connect(("127.0.0.1", port)).is_err() {
        assert!(Instant::now() < deadline, "server did not start");
        std::thread::sleep(Duration::from_millis(50));
    }
    let resp = http(port, "POST", "/api/items/s01/score", r#"{"contextual":1,"consistency":1,"clarity":0}"#);
    assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");
    let resp = http(port, "GET", "/api/summary", "");
    assert!(resp.contains("\"human_mean\":2.0"), "{resp}");
    let resp = http(port, "GET", "/api/items/zzz", "");
    assert!(resp.starts_with("HTTP/1.1 404"), "{resp}");
    // annotations persist next to the log
    let stored = std::fs::read_to_string(tmp.path().join("annotations.jsonl")).unwrap();
    assert_eq!(stored.lines().count(), 1);
}
