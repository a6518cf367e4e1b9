//! The session server over real HTTP.

use std::path::Path;
use std::sync::Arc;
use std::thread;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};

use assocbench::corpus::{ConceptKind, Corpus};
use assocbench::fixtures::synthetic_corpus;
use assocbench::modelio::{OracleClient, OracleConfig};
use assocbench::refine::read_review_file;
use assocbench::runner::{run_chain, Agent, RunParams, Terminal};
use assocbench::server::{serve, AppState, ServerOptions, Summary};

struct Server {
    base: String,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    handle: Option<thread::JoinHandle<()>>,
}

impl Server {
    fn start(corpus: Corpus, options: ServerOptions) -> Server {
        let state = Arc::new(AppState::new(corpus, options).unwrap());
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let (addr_tx, addr_rx) = std::sync::mpsc::channel();
        let handle = thread::spawn(move || {
            let rt = tokio::runtime::Runtime::new().unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                addr_tx.send(listener.local_addr().unwrap()).unwrap();
                serve(listener, state, async {
                    rx.await.ok();
                })
                .await
                .unwrap();
            });
        });
        let addr = addr_rx.recv().unwrap();
        Server { base: format!("http://{addr}"), stop: Some(tx), handle: Some(handle) }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn corpus() -> Corpus {
    synthetic_corpus(ConceptKind::Attribute, 200, 3, 8)
}

fn options(dir: &Path) -> ServerOptions {
    ServerOptions::new(dir.join("images"), dir.join("state"))
}

fn create(http: &Client, s: &Server, body: Value) -> Value {
    let resp = http.post(s.url("/sessions")).json(&body).send().unwrap();
    assert_eq!(resp.status(), StatusCode::CREATED);
    resp.json().unwrap()
}

/// Picks the option that shares a label with the query, as a careful human would.
fn perfect_choice(c: &Corpus, q: &Value) -> &'static str {
    let labels = |v: &Value| c.sample(&v["id"].as_str().unwrap().into()).unwrap().labels.clone();
    let query = labels(&q["query"]);
    let first = labels(&q["options"][0]["image"]);
    if first.intersection(&query).next().is_some() {
        "Image1"
    } else {
        "Image2"
    }
}

fn play(http: &Client, s: &Server, c: &Corpus, id: &str, mut wrong_at: Option<usize>) -> Vec<Value> {
    let mut questions = Vec::new();
    loop {
        let resp = http.get(s.url(&format!("/sessions/{id}/next"))).send().unwrap();
        if resp.status() == StatusCode::CONFLICT {
            break;
        }
        assert_eq!(resp.status(), StatusCode::OK);
        let q: Value = resp.json().unwrap();
        let mut choice = perfect_choice(c, &q);
        if wrong_at == Some(q["step"].as_u64().unwrap() as usize) {
            choice = if choice == "Image1" { "Image2" } else { "Image1" };
            wrong_at = None;
        }
        let reply: Value = http
            .post(s.url(&format!("/sessions/{id}/answer")))
            .json(&json!({ "choice": choice }))
            .send()
            .unwrap()
            .json()
            .unwrap();
        questions.push(q);
        if reply["done"].as_bool().unwrap() {
            break;
        }
    }
    questions
}

#[test]
fn human_session_matches_model_round() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus();
    let s = Server::start(c.clone(), options(dir.path()));
    let http = Client::new();

    let created = create(&http, &s, json!({ "concepts": ["metal"], "strategy": "StructM", "seed": 41, "cap": 25, "tester": "ana" }));
    assert_eq!(created["phase"], "preview");
    assert_eq!(created["preview"].as_array().unwrap().len(), 3);
    let id = created["session_id"].as_str().unwrap();

    let questions = play(&http, &s, &c, id, None);
    assert_eq!(questions.len(), 25);
    for q in &questions {
        let text = q.to_string();
        assert!(!text.contains("correct") && !text.contains("concept"), "{text}");
    }
    let summary: Summary = http.get(s.url(&format!("/sessions/{id}/summary"))).send().unwrap().json().unwrap();
    assert_eq!(summary.terminal, Some(Terminal::CapReached));
    assert_eq!(summary.final_step_count, 25);
    let human = summary.to_round_result();
    assert_eq!(human.backend, "human:ana");

    let oracle = OracleClient::new("oracle", OracleConfig { p_assoc: 1.0, ..Default::default() }).unwrap();
    let params = RunParams { round_id: 41, ..RunParams::new(human.strategy) };
    let model = run_chain(&c, &summary.plan, &Agent::Single(Arc::new(oracle)), &params).unwrap().result;
    assert_eq!(model.final_step_count, human.final_step_count);
    assert_eq!(model.terminal, human.terminal);
    for (m, h) in model.steps.iter().zip(&human.steps) {
        assert_eq!(
            (&m.concept, &m.query, &m.option1, &m.option2, m.correct_option, m.association_correct),
            (&h.concept, &h.query, &h.option1, &h.option2, h.correct_option, h.association_correct)
        );
    }
    // the memory shown to the tester is the seeded one
    assert!(questions[0]["memory_text"].as_str().unwrap().contains("metal"));
}

#[test]
fn wrong_answer_ends_session_and_later_calls_conflict() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus();
    let s = Server::start(c.clone(), options(dir.path()));
    let http = Client::new();
    let id = create(&http, &s, json!({ "concepts": ["metal"], "seed": 5, "cap": 50 }))["session_id"].as_str().unwrap().to_string();

    let played = play(&http, &s, &c, &id, Some(3));
    assert_eq!(played.len(), 4);
    let resp = http.get(s.url(&format!("/sessions/{id}/next"))).send().unwrap();
    assert_eq!(resp.status(), StatusCode::CONFLICT);
    let body: Value = resp.json().unwrap();
    assert_eq!(body["terminal"], "wrong_answer");
    assert_eq!(body["final_step_count"], 3);
    let resp = http.post(s.url(&format!("/sessions/{id}/answer"))).json(&json!({ "choice": "Image1" })).send().unwrap();
    assert_eq!(resp.status(), StatusCode::CONFLICT);
}

#[test]
fn request_errors() {
    let dir = tempfile::tempdir().unwrap();
    let s = Server::start(corpus(), options(dir.path()));
    let http = Client::new();

    assert_eq!(http.get(s.url("/sessions/nope/next")).send().unwrap().status(), StatusCode::NOT_FOUND);
    assert_eq!(http.get(s.url("/sessions/nope/summary")).send().unwrap().status(), StatusCode::NOT_FOUND);
    let bad_cap = http.post(s.url("/sessions")).json(&json!({ "concepts": ["metal"], "cap": 501 })).send().unwrap();
    assert_eq!(bad_cap.status(), StatusCode::BAD_REQUEST);
    let bad_concept = http.post(s.url("/sessions")).json(&json!({ "concepts": ["nonsense"] })).send().unwrap();
    assert_eq!(bad_concept.status(), StatusCode::BAD_REQUEST);

    let id = create(&http, &s, json!({ "concepts": ["metal"], "seed": 1 }))["session_id"].as_str().unwrap().to_string();
    // answering before a question is served
    let early = http.post(s.url(&format!("/sessions/{id}/answer"))).json(&json!({ "choice": "Image1" })).send().unwrap();
    assert_eq!(early.status(), StatusCode::CONFLICT);
    http.get(s.url(&format!("/sessions/{id}/next"))).send().unwrap();
    let token = http.post(s.url(&format!("/sessions/{id}/answer"))).json(&json!({ "choice": "Image3" })).send().unwrap();
    assert_eq!(token.status(), StatusCode::BAD_REQUEST);
    let empty = http.post(s.url(&format!("/sessions/{id}/report"))).json(&json!({ "category": " " })).send().unwrap();
    assert_eq!(empty.status(), StatusCode::BAD_REQUEST);
    assert!(!http.get(s.url("/images/..%2Fsecret")).send().unwrap().status().is_success());
}

#[test]
fn report_goes_to_review_queue() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus();
    let opts = options(dir.path());
    let queue = opts.review_queue();
    let s = Server::start(c.clone(), opts);
    let http = Client::new();
    let id = create(&http, &s, json!({ "concepts": ["metal"], "seed": 9 }))["session_id"].as_str().unwrap().to_string();
    let q: Value = http.get(s.url(&format!("/sessions/{id}/next"))).send().unwrap().json().unwrap();

    let resp = http
        .post(s.url(&format!("/sessions/{id}/report")))
        .json(&json!({ "category": "violence", "note": "option 2" }))
        .send()
        .unwrap();
    assert_eq!(resp.status(), StatusCode::NO_CONTENT);
    let (items, _) = read_review_file(&queue).unwrap();
    let ids: Vec<&str> = items.iter().map(|i| i.sample_id.as_str()).collect();
    let shown = [&q["query"]["id"], &q["options"][0]["image"]["id"], &q["options"][1]["image"]["id"]];
    assert_eq!(ids.len(), 3);
    for v in shown {
        assert!(ids.contains(&v.as_str().unwrap()));
    }
    assert!(items.iter().all(|i| i.ethic_flag.as_deref() == Some("violence") && i.note == "option 2"));
}

#[test]
fn images_are_served_from_root() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus();
    let rel = c.samples()[0].image_ref.clone();
    let path = dir.path().join("images").join(&rel);
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    std::fs::write(&path, b"\xff\xd8jpeg").unwrap();
    let s = Server::start(c, options(dir.path()));
    let resp = Client::new().get(s.url(&format!("/images/{rel}"))).send().unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.bytes().unwrap().as_ref(), b"\xff\xd8jpeg");
}

#[test]
fn sessions_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus();
    let http = Client::new();
    let (id, first) = {
        let s = Server::start(c.clone(), options(dir.path()));
        let id = create(&http, &s, json!({ "concepts": ["metal"], "seed": 12, "cap": 10 }))["session_id"].as_str().unwrap().to_string();
        let q: Value = http.get(s.url(&format!("/sessions/{id}/next"))).send().unwrap().json().unwrap();
        let choice = perfect_choice(&c, &q);
        http.post(s.url(&format!("/sessions/{id}/answer"))).json(&json!({ "choice": choice })).send().unwrap();
        let pending: Value = http.get(s.url(&format!("/sessions/{id}/next"))).send().unwrap().json().unwrap();
        (id, pending)
    };
    let s = Server::start(c.clone(), options(dir.path()));
    let again: Value = http.get(s.url(&format!("/sessions/{id}/next"))).send().unwrap().json().unwrap();
    assert_eq!(again, first);
    let summary: Summary = http.get(s.url(&format!("/sessions/{id}/summary"))).send().unwrap().json().unwrap();
    assert_eq!(summary.steps.len(), 1);
    assert!(summary.steps[0].chosen_option.is_some());
    let rest = play(&http, &s, &c, &id, None);
    assert_eq!(rest.len(), 9);
    let summary: Summary = http.get(s.url(&format!("/sessions/{id}/summary"))).send().unwrap().json().unwrap();
    assert_eq!(summary.final_step_count, 10);
    assert!(summary.steps.iter().all(|st| st.chosen_option == Some(st.correct_option)));
}
