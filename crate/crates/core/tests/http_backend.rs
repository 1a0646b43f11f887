use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use hara_core::llm::{
    ChatMessage, FinishReason, HttpBackend, HttpBackendConfig, LlmError, LlmGateway, LlmRequest, RetryPolicy,
};

const SECRET: &str = "sk-test-secret-value";

fn completion(finish: &str) -> String {
    serde_json::json!({
        "choices": [{ "message": { "role": "assistant", "content": "## result\nok" }, "finish_reason": finish }],
        "usage": { "prompt_tokens": 7, "completion_tokens": 3 }
    })
    .to_string()
}


/// Serve one scripted `(status, body)` per connection and keep the raw requests.
fn stub(script: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    thread::spawn(move || {
        for (status, body) in script {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut head = String::new();
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                head.push_str(&line);
                if line == "\r\n" {
                    break;
                }
            }
            let mut payload = vec![0; length];
            reader.read_exact(&mut payload).unwrap();
            head.push_str(&String::from_utf8_lossy(&payload));
            log.lock().unwrap().push(head);
            let reply = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
        }
    });
    (url, seen)
}

fn gateway(url: &str) -> LlmGateway {
    let cfg = HttpBackendConfig { base_url: url.to_string(), timeout_secs: 5, ..Default::default() };
    let backend = HttpBackend::new(&cfg, Some(SECRET.to_string())).unwrap();
    LlmGateway::new(Arc::new(backend), RetryPolicy { max_attempts: 3, backoff_ms: vec![10, 40] }, 2)
}

fn request() -> LlmRequest {
    LlmRequest {
        step_id: "severity".into(),
        row_key: Some("HE-0001".into()),
        messages: vec![ChatMessage::system("s"), ChatMessage::user("u")],
        temperature: 0.0,
        max_tokens: 64,
    }
}

#[test]
fn retries_transient_errors_then_succeeds() {
    let (url, seen) = stub(vec![(503, "{}".into()), (503, "{}".into()), (200, completion("stop"))]);
    let gw = gateway(&url);
    let mut log = Vec::new();
    let resp = gw.complete(&request(), &mut log).unwrap();
    assert_eq!(resp.content, "## result\nok");
    assert_eq!(resp.usage.prompt_tokens, 7);
    assert_eq!(gw.call_count(), 3);
    let reasons: Vec<FinishReason> = log.iter().map(|e| e.response.finish_reason).collect();
    assert_eq!(reasons, [FinishReason::Error, FinishReason::Error, FinishReason::Stop]);
    assert_eq!(log.iter().map(|e| e.attempt).collect::<Vec<_>>(), [1, 2, 3]);
    let requests = seen.lock().unwrap();
    assert!(requests[0].starts_with("POST /chat/completions"));
    assert!(requests[0].contains(&format!("Bearer {SECRET}")) || requests[0].contains(&format!("bearer {SECRET}")));
    assert!(requests[0].contains("\"max_tokens\":64"));
}

#[test]
fn gives_up_after_three_attempts() {
    let (url, _) = stub(vec![(500, "{}".into()), (502, "{}".into()), (429, "{}".into())]);
    let gw = gateway(&url);
    let err = gw.complete(&request(), &mut Vec::new()).unwrap_err();
    assert!(matches!(err, LlmError::BackendUnavailable { attempts: 3, .. }));
}

#[test]
fn unauthorized_is_not_retried() {
    let (url, _) = stub(vec![(401, "{}".into())]);
    let gw = gateway(&url);
    let err = gw.complete(&request(), &mut Vec::new()).unwrap_err();
    assert!(matches!(err, LlmError::Credential));
    assert_eq!(gw.call_count(), 1);
}

#[test]
fn length_finish_is_truncation() {
    let (url, _) = stub(vec![(200, completion("length"))]);
    let err = gateway(&url).complete(&request(), &mut Vec::new()).unwrap_err();
    assert!(matches!(err, LlmError::TruncatedOutput(_)));
}

#[test]
fn credential_never_reaches_transcript() {
    let (url, _) = stub(vec![(503, "{}".into()), (200, completion("stop"))]);
    let mut log = Vec::new();
    gateway(&url).complete(&request(), &mut log).unwrap();
    let dumped = serde_json::to_string(&log).unwrap();
    assert!(!dumped.contains(SECRET));
}
