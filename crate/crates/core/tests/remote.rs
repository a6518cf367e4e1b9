//! RemoteClient against a scripted local HTTP server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use assocbench::corpus::ConceptKind;
use assocbench::memory::{MemoryBase, MemoryParams, MemoryStrategy};
use assocbench::modelio::{CallKey, CompletionRequest, ModelClient, ModelError, RemoteClient, RemoteConfig};
use assocbench::prompt::{render_association_prompt, PromptTemplates};

struct Received {
    headers: Vec<String>,
    body: String,
}

type Canned = (u16, Vec<(&'static str, &'static str)>, &'static str);

/// Serves one canned response per connection, in order, then stops.
fn mock(responses: Vec<Canned>) -> (String, Arc<Mutex<Vec<Received>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for (status, extra, body) in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut headers = Vec::new();
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end().to_string();
                if line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                headers.push(line);
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(Received { headers, body: String::from_utf8(buf).unwrap() });
            let mut out = stream;
            let mut head = format!("HTTP/1.1 {status} X\r\nContent-Length: {}\r\nConnection: close\r\n", body.len());
            for (k, v) in extra {
                head.push_str(&format!("{k}: {v}\r\n"));
            }
            write!(out, "{head}\r\n{body}").unwrap();
        }
    });
    (url, seen)
}

fn ok(text: &'static str) -> Canned {
    (200, vec![("Content-Type", "application/json")], text)
}

const IMAGE2: &str = r#"{"choices":[{"message":{"role":"assistant","content":"Image2"}}]}"#;

fn client(endpoint: String) -> RemoteClient {
    RemoteClient::new(
        "remote",
        RemoteConfig {
            endpoint,
            model: "test-model".into(),
            backoff_base_ms: 10,
            requests_per_second: 1000.0,
            ..RemoteConfig::default()
        },
    )
    .unwrap()
}

fn request() -> CompletionRequest {
    let mem = MemoryBase::new(MemoryStrategy::NoM, MemoryParams::default());
    CompletionRequest {
        parts: render_association_prompt(&PromptTemplates::default(), &mem, ConceptKind::Attribute, "https://x/q.jpg", "https://x/a.jpg", "https://x/b.jpg")
            .unwrap(),
        hint: None,
        key: CallKey::new(1, 0, 0),
    }
}

#[test]
fn request_body_interleaves_text_and_images() {
    let (url, seen) = mock(vec![ok(IMAGE2)]);
    let c = client(url);
    let req = request();
    assert_eq!(c.complete(&req, Duration::from_secs(5)).unwrap(), "Image2");

    let seen = seen.lock().unwrap();
    let body = &seen[0].body;
    assert_eq!(*body, c.request_body(&req.parts).unwrap());
    let v: serde_json::Value = serde_json::from_str(body).unwrap();
    assert_eq!(v["model"], "test-model");
    assert_eq!(v["temperature"], 0.0);
    let content = v["messages"][0]["content"].as_array().unwrap();
    let kinds: Vec<&str> = content.iter().map(|p| p["type"].as_str().unwrap()).collect();
    let urls: Vec<&str> = content.iter().filter_map(|p| p["image_url"]["url"].as_str()).collect();
    assert_eq!(urls, ["https://x/q.jpg", "https://x/a.jpg", "https://x/b.jpg"]);
    assert_eq!(kinds.iter().filter(|k| **k == "image_url").count(), 3);
    assert_eq!(kinds[0], "text");
    let text: String = content.iter().filter_map(|p| p["text"].as_str()).collect();
    assert_eq!(text, req.parts.text().replace("<image>", ""));
    assert!(seen[0].headers.iter().any(|h| h.eq_ignore_ascii_case("content-type: application/json")));
}

#[test]
fn rate_limit_honours_retry_after() {
    let (url, seen) = mock(vec![(429, vec![("Retry-After", "1")], "slow down"), ok(IMAGE2)]);
    let started = Instant::now();
    assert_eq!(client(url).complete(&request(), Duration::from_secs(10)).unwrap(), "Image2");
    assert!(started.elapsed() >= Duration::from_millis(950));
    assert_eq!(seen.lock().unwrap().len(), 2);
}

#[test]
fn server_errors_are_retried_with_same_body() {
    let (url, seen) = mock(vec![(500, vec![], "boom"), (503, vec![], "busy"), ok(IMAGE2)]);
    assert_eq!(client(url).complete(&request(), Duration::from_secs(10)).unwrap(), "Image2");
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 3);
    assert!(seen.iter().all(|r| r.body == seen[0].body));
}

#[test]
fn client_errors_are_not_retried() {
    let (url, seen) = mock(vec![(400, vec![], "bad image"), ok(IMAGE2)]);
    let err = client(url).complete(&request(), Duration::from_secs(5)).unwrap_err();
    assert!(matches!(err, ModelError::Refused { status: 400, .. }), "{err:?}");
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn auth_header_from_environment() {
    let (url, seen) = mock(vec![ok(IMAGE2)]);
    std::env::set_var("ASSOCBENCH_TEST_KEY", "sekrit");
    let c = RemoteClient::new(
        "remote",
        RemoteConfig {
            endpoint: url,
            model: "m".into(),
            auth_env: Some("ASSOCBENCH_TEST_KEY".into()),
            ..RemoteConfig::default()
        },
    )
    .unwrap();
    c.complete(&request(), Duration::from_secs(5)).unwrap();
    assert!(seen.lock().unwrap()[0].headers.iter().any(|h| h == "authorization: Bearer sekrit"));
}

#[test]
fn too_many_images_fails_before_sending() {
    let c = RemoteClient::new(
        "remote",
        RemoteConfig { endpoint: "http://127.0.0.1:9/".into(), max_images: 2, ..RemoteConfig::default() },
    )
    .unwrap();
    let err = c.complete(&request(), Duration::from_secs(1)).unwrap_err();
    assert!(matches!(err, ModelError::TooManyImages { images: 3, max: 2 }), "{err:?}");
}
