//! HTTP session service for human testers.
//!
//! A session follows the same candidate generator and seed discipline as
//! [`run_chain`](crate::runner::run_chain): preview of ground-truth example
//! pairs, then one question per step until a wrong answer, the cap, or an
//! exhausted pool. Humans skip the deduction call. Every state change is
//! appended to a per-session event log, and sessions are rebuilt from those
//! logs on start-up.

use std::collections::{BTreeSet, HashMap};
use std::io::Write;
use std::path::{Component, Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::builder::{self, candidate_step, make_round, BuildError, Exhausted, OptionSlot, RoundKind, RoundPlan, StepCandidates, StepError};
use crate::corpus::{Concept, Corpus, SampleId};
use crate::memory::{MemoryBase, MemoryParams, MemoryStrategy};
use crate::refine::{append_review_item, ReviewItem, Verdict};
use crate::rng::{self, RoundRng, Stream};
use crate::runner::{count_steps, RoundResult, StepRecord, Terminal};

pub const MAX_CAP: usize = builder::DEFAULT_CAP;

#[derive(Debug, Clone)]
pub struct ServerOptions {
    /// Directory that relative image references resolve against.
    pub image_root: PathBuf,
    /// Optional directory of static UI assets served at `/`.
    pub ui_dir: Option<PathBuf>,
    /// Session event logs and the review queue live here.
    pub state_dir: PathBuf,
    pub max_cap: usize,
    pub example_count: usize,
    pub memory: MemoryParams,
}

impl ServerOptions {
    pub fn new(image_root: impl Into<PathBuf>, state_dir: impl Into<PathBuf>) -> Self {
        Self {
            image_root: image_root.into(),
            ui_dir: None,
            state_dir: state_dir.into(),
            max_cap: MAX_CAP,
            example_count: builder::DEFAULT_EXAMPLE_COUNT,
            memory: MemoryParams::default(),
        }
    }

    pub fn review_queue(&self) -> PathBuf {
        self.state_dir.join("review_queue.jsonl")
    }

    fn session_log(&self, id: &str) -> PathBuf {
        self.state_dir.join("sessions").join(format!("{id}.jsonl"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Preview,
    Main,
    Done,
}

/// Resolved session parameters, as logged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSpec {
    pub kind: RoundKind,
    pub concepts: Vec<Concept>,
    /// Memory strategy whose rendering is shown alongside each question.
    pub strategy: MemoryStrategy,
    pub seed: u64,
    pub cap: usize,
    pub example_count: usize,
    pub segment_len: usize,
}

#[derive(Debug, Clone, Deserialize)]
pub struct CreateRequest {
    #[serde(default)]
    pub kind: Option<RoundKind>,
    pub concepts: Vec<Concept>,
    #[serde(default, alias = "strategy-view", alias = "strategy_view")]
    pub strategy: Option<MemoryStrategy>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub tester: Option<String>,
    #[serde(default)]
    pub cap: Option<usize>,
    #[serde(default)]
    pub example_count: Option<usize>,
    #[serde(default)]
    pub segment_len: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageView {
    pub id: SampleId,
    pub name: String,
    pub image: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreviewItem {
    pub anchor: ImageView,
    pub positive: ImageView,
    pub shared: BTreeSet<Concept>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptionView {
    pub label: String,
    pub image: ImageView,
}

/// The question for one step. Carries no hint of the correct option.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub step: usize,
    pub step_count: usize,
    pub query: ImageView,
    pub options: Vec<OptionView>,
    pub memory_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerReply {
    pub correct: bool,
    pub step_count: usize,
    pub done: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminal: Option<Terminal>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub session_id: String,
    pub tester: String,
    pub phase: Phase,
    pub round_id: u64,
    pub strategy: MemoryStrategy,
    pub plan: RoundPlan,
    /// Answered steps only; a question awaiting an answer is never included.
    pub steps: Vec<StepRecord>,
    pub final_step_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminal: Option<Terminal>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exhausted: Option<Exhausted>,
}

impl Summary {
    /// The session as a round result, for comparison with model runs.
    pub fn to_round_result(&self) -> RoundResult {
        RoundResult {
            round_id: self.round_id,
            backend: format!("human:{}", self.tester),
            strategy: self.strategy,
            plan: self.plan.clone(),
            steps: self.steps.clone(),
            final_step_count: self.final_step_count,
            terminal: self.terminal.unwrap_or(Terminal::CapReached),
            exhausted: self.exhausted,
            error: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Created { session_id: String, tester: String, spec: SessionSpec },
    Started,
    Served { t: usize },
    Answered {
        t: usize,
        choice: OptionSlot,
        correct: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        evidence: Option<String>,
    },
    Report { category: String, note: String, samples: Vec<SampleId> },
    Done { terminal: Terminal, final_step_count: usize },
}

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("{0}")]
    BadRequest(String),
    #[error("session is finished")]
    Done,
    #[error("no question is pending")]
    NoPending,
    #[error("internal error: {0}")]
    Internal(String),
}

pub struct Session {
    pub id: String,
    pub tester: String,
    pub spec: SessionSpec,
    phase: Phase,
    plan: RoundPlan,
    preview: Vec<PreviewItem>,
    memory_text: String,
    rng: RoundRng,
    query: SampleId,
    pending: Option<(StepCandidates, Instant)>,
    steps: Vec<StepRecord>,
    terminal: Option<Terminal>,
    exhausted: Option<Exhausted>,
}

fn view(corpus: &Corpus, id: &SampleId) -> ImageView {
    let s = corpus.sample(id).expect("ids come from the corpus");
    let image = if s.image_ref.contains("://") {
        s.image_ref.clone()
    } else {
        format!("/images/{}", s.image_ref.trim_start_matches('/'))
    };
    ImageView {
        id: s.id.clone(),
        name: s.display_name.clone(),
        image,
    }
}

impl Session {
    pub fn new(corpus: &Corpus, id: String, tester: String, spec: SessionSpec, memory: MemoryParams) -> Result<Session, BuildError> {
        let plan = make_round(corpus, spec.kind, &spec.concepts, spec.cap, spec.seed, spec.example_count, spec.segment_len)?;
        let examples = builder::sample_examples(corpus, &plan)?;
        let mut base = MemoryBase::new(spec.strategy, memory);
        base.seed_examples(&examples, corpus, Some(plan.concept_at(0)))?;
        let preview = examples
            .iter()
            .map(|e| PreviewItem {
                anchor: view(corpus, &e.anchor),
                positive: view(corpus, &e.positive),
                shared: e.shared.clone(),
            })
            .collect();
        Ok(Session {
            id,
            tester,
            phase: Phase::Preview,
            memory_text: base.render(corpus.kind()),
            rng: rng::stream(plan.seed, Stream::Steps),
            query: plan.start.clone(),
            plan,
            spec,
            preview,
            pending: None,
            steps: Vec::new(),
            terminal: None,
            exhausted: None,
        })
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn preview(&self) -> &[PreviewItem] {
        &self.preview
    }

    fn finish(&mut self, terminal: Terminal, events: &mut Vec<Event>) {
        self.phase = Phase::Done;
        self.terminal = Some(terminal);
        events.push(Event::Done {
            terminal,
            final_step_count: count_steps(&self.steps),
        });
    }

    /// The current question, drawing a new one when none is pending. The
    /// first call ends the preview phase.
    pub fn next(&mut self, corpus: &Corpus, events: &mut Vec<Event>) -> Result<Question, SessionError> {
        if self.phase == Phase::Done {
            return Err(SessionError::Done);
        }
        if self.phase == Phase::Preview {
            self.phase = Phase::Main;
            events.push(Event::Started);
        }
        if self.pending.is_none() {
            let t = self.steps.len();
            if t >= self.plan.cap {
                self.finish(Terminal::CapReached, events);
                return Err(SessionError::Done);
            }
            match candidate_step(corpus, &self.plan, t, &self.query, &mut self.rng) {
                Ok(c) => {
                    self.pending = Some((c, Instant::now()));
                    events.push(Event::Served { t });
                }
                Err(StepError::Exhausted(why)) => {
                    self.exhausted = Some(why);
                    self.finish(Terminal::Exhausted, events);
                    return Err(SessionError::Done);
                }
                Err(StepError::Build(e)) => return Err(SessionError::Internal(e.to_string())),
            }
        }
        let (c, _) = self.pending.as_ref().expect("set above");
        Ok(Question {
            step: c.step_index,
            step_count: count_steps(&self.steps),
            query: view(corpus, &c.query),
            options: [OptionSlot::Option1, OptionSlot::Option2]
                .into_iter()
                .map(|slot| OptionView {
                    label: slot.token().to_string(),
                    image: view(corpus, c.option(slot)),
                })
                .collect(),
            memory_text: self.memory_text.clone(),
        })
    }

    pub fn answer(&mut self, choice: OptionSlot, evidence: Option<String>, events: &mut Vec<Event>) -> Result<AnswerReply, SessionError> {
        if self.phase == Phase::Done {
            return Err(SessionError::Done);
        }
        let Some((c, served)) = self.pending.take() else {
            return Err(SessionError::NoPending);
        };
        let correct = choice == c.correct;
        events.push(Event::Answered {
            t: c.step_index,
            choice,
            correct,
            evidence: evidence.clone(),
        });
        self.steps.push(StepRecord {
            t: c.step_index,
            concept: c.concept.clone(),
            query: c.query.clone(),
            option1: c.option1.clone(),
            option2: c.option2.clone(),
            correct_option: c.correct,
            chosen_option: Some(choice),
            association_correct: correct,
            deduction_performed: false,
            deduced: BTreeSet::new(),
            deduction_correct: false,
            prompt_memory: self.memory_text.clone(),
            raw_association: vec![choice.token().to_string()],
            raw_deduction: None,
            votes: None,
            evidence_text: evidence,
            latency_ms: served.elapsed().as_millis() as u64,
        });
        if !correct {
            self.finish(Terminal::WrongAnswer, events);
        } else {
            self.query = c.positive().clone();
            if self.steps.len() >= self.plan.cap {
                self.finish(Terminal::CapReached, events);
            }
        }
        Ok(AnswerReply {
            correct,
            step_count: count_steps(&self.steps),
            done: self.phase == Phase::Done,
            terminal: self.terminal,
        })
    }

    /// Sample ids a tester currently sees.
    pub fn on_screen(&self) -> Vec<SampleId> {
        if let Some((c, _)) = &self.pending {
            return vec![c.query.clone(), c.option1.clone(), c.option2.clone()];
        }
        if self.phase == Phase::Preview {
            return self
                .preview
                .iter()
                .flat_map(|p| [p.anchor.id.clone(), p.positive.id.clone()])
                .collect();
        }
        match self.steps.last() {
            Some(s) => vec![s.query.clone(), s.option1.clone(), s.option2.clone()],
            None => vec![self.plan.start.clone()],
        }
    }

    pub fn summary(&self) -> Summary {
        Summary {
            session_id: self.id.clone(),
            tester: self.tester.clone(),
            phase: self.phase,
            round_id: self.spec.seed,
            strategy: self.spec.strategy,
            plan: self.plan.clone(),
            steps: self.steps.clone(),
            final_step_count: count_steps(&self.steps),
            terminal: self.terminal,
            exhausted: self.exhausted,
        }
    }

    /// Rebuilds a session from its event log.
    pub fn replay(corpus: &Corpus, events: &[Event], memory: MemoryParams) -> Result<Session, SessionError> {
        let mut it = events.iter();
        let Some(Event::Created { session_id, tester, spec }) = it.next() else {
            return Err(SessionError::Internal("event log does not start with creation".into()));
        };
        let mut s = Session::new(corpus, session_id.clone(), tester.clone(), spec.clone(), memory)
            .map_err(|e| SessionError::Internal(e.to_string()))?;
        let mut sink = Vec::new();
        for ev in it {
            match ev {
                Event::Started | Event::Served { .. } => {
                    // Done sessions reject `next`; their state is restored by the answers
                    let _ = s.next(corpus, &mut sink);
                }
                Event::Answered { choice, evidence, .. } => {
                    s.answer(*choice, evidence.clone(), &mut sink)?;
                }
                Event::Report { .. } | Event::Done { .. } | Event::Created { .. } => {}
            }
        }
        Ok(s)
    }
}

/// Parses an answer token: `Image1`/`Image2` (any case) or `1`/`2`.
pub fn parse_choice_token(s: &str) -> Option<OptionSlot> {
    match s.trim().to_ascii_lowercase().as_str() {
        "image1" | "1" => Some(OptionSlot::Option1),
        "image2" | "2" => Some(OptionSlot::Option2),
        _ => None,
    }
}

pub struct AppState {
    pub corpus: Arc<Corpus>,
    pub options: ServerOptions,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    review_lock: Mutex<()>,
}

fn append_events(path: &Path, events: &[Event]) -> std::io::Result<()> {
    if events.is_empty() {
        return Ok(());
    }
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut text = String::new();
    for e in events {
        text.push_str(&serde_json::to_string(e).expect("events serialize"));
        text.push('\n');
    }
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(text.as_bytes())
}

impl AppState {
    /// Creates the state, restoring any sessions found under the state dir.
    pub fn new(corpus: Corpus, options: ServerOptions) -> std::io::Result<AppState> {
        let state = AppState {
            corpus: Arc::new(corpus),
            options,
            sessions: Mutex::new(HashMap::new()),
            review_lock: Mutex::new(()),
        };
        state.restore()?;
        Ok(state)
    }

    fn restore(&self) -> std::io::Result<()> {
        let dir = self.options.state_dir.join("sessions");
        let Ok(entries) = std::fs::read_dir(&dir) else {
            return Ok(());
        };
        let mut sessions = self.sessions.lock().expect("lock");
        for entry in entries.flatten() {
            let path = entry.path();
            if path.extension().is_none_or(|e| e != "jsonl") {
                continue;
            }
            let text = std::fs::read_to_string(&path)?;
            let events: Vec<Event> = text.lines().filter_map(|l| serde_json::from_str(l).ok()).collect();
            match Session::replay(&self.corpus, &events, self.options.memory) {
                Ok(s) => {
                    sessions.insert(s.id.clone(), Arc::new(Mutex::new(s)));
                }
                Err(e) => log::warn!("{}: cannot restore session: {e}", path.display()),
            }
        }
        Ok(())
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().expect("lock").len()
    }

    fn get(&self, id: &str) -> Option<Arc<Mutex<Session>>> {
        self.sessions.lock().expect("lock").get(id).cloned()
    }

    fn log(&self, id: &str, events: &[Event]) -> Result<(), SessionError> {
        append_events(&self.options.session_log(id), events).map_err(|e| SessionError::Internal(e.to_string()))
    }

    pub fn create(&self, req: CreateRequest) -> Result<(Session, Vec<Event>), SessionError> {
        let cap = req.cap.unwrap_or(self.options.max_cap);
        if cap == 0 || cap > self.options.max_cap {
            return Err(SessionError::BadRequest(format!("cap must be in 1..={}", self.options.max_cap)));
        }
        let spec = SessionSpec {
            kind: req.kind.unwrap_or(RoundKind::Synchronous),
            concepts: req.concepts,
            strategy: req.strategy.unwrap_or(MemoryStrategy::NoM),
            seed: req.seed.unwrap_or_else(|| rand::random::<u32>() as u64),
            cap,
            example_count: req.example_count.unwrap_or(self.options.example_count),
            segment_len: req.segment_len.unwrap_or(builder::DEFAULT_SEGMENT_LEN),
        };
        let id = format!("{:016x}", rand::random::<u64>());
        let tester = req.tester.unwrap_or_else(|| format!("anon-{}", &id[..8]));
        let session = Session::new(&self.corpus, id.clone(), tester.clone(), spec.clone(), self.options.memory)
            .map_err(|e| SessionError::BadRequest(e.to_string()))?;
        Ok((session, vec![Event::Created { session_id: id, tester, spec }]))
    }
}

type Shared = Arc<AppState>;

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(serde_json::json!({ "error": message.into() }))).into_response()
}

fn session_error(e: SessionError, id: &str, s: Option<&Session>) -> Response {
    match e {
        SessionError::BadRequest(m) => error(StatusCode::BAD_REQUEST, m),
        SessionError::Done => {
            let terminal = s.and_then(|s| s.terminal);
            let count = s.map(|s| count_steps(&s.steps)).unwrap_or(0);
            (
                StatusCode::CONFLICT,
                Json(serde_json::json!({
                    "error": "session is finished",
                    "terminal": terminal,
                    "final_step_count": count,
                    "summary": format!("/sessions/{id}/summary"),
                })),
            )
                .into_response()
        }
        SessionError::NoPending => error(StatusCode::CONFLICT, "no question is pending"),
        SessionError::Internal(m) => error(StatusCode::INTERNAL_SERVER_ERROR, m),
    }
}

fn not_found(id: &str) -> Response {
    error(StatusCode::NOT_FOUND, format!("unknown session '{id}'"))
}

async fn create_session(State(state): State<Shared>, body: Result<Json<CreateRequest>, JsonRejection>) -> Response {
    let Json(req) = match body {
        Ok(b) => b,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.body_text()),
    };
    let (session, events) = match state.create(req) {
        Ok(s) => s,
        Err(e) => return session_error(e, "", None),
    };
    if let Err(e) = state.log(&session.id, &events) {
        return session_error(e, "", None);
    }
    let body = serde_json::json!({
        "session_id": session.id,
        "tester": session.tester,
        "seed": session.spec.seed,
        "phase": session.phase,
        "cap": session.spec.cap,
        "preview": session.preview,
    });
    state
        .sessions
        .lock()
        .expect("lock")
        .insert(session.id.clone(), Arc::new(Mutex::new(session)));
    (StatusCode::CREATED, Json(body)).into_response()
}

async fn next_question(State(state): State<Shared>, UrlPath(id): UrlPath<String>) -> Response {
    let Some(session) = state.get(&id) else {
        return not_found(&id);
    };
    let mut s = session.lock().expect("lock");
    let mut events = Vec::new();
    let result = s.next(&state.corpus, &mut events);
    if let Err(e) = state.log(&id, &events) {
        return session_error(e, &id, Some(&s));
    }
    match result {
        Ok(q) => Json(q).into_response(),
        Err(e) => session_error(e, &id, Some(&s)),
    }
}

#[derive(Debug, Deserialize)]
struct AnswerBody {
    choice: String,
    #[serde(default)]
    evidence: Option<String>,
}

async fn post_answer(
    State(state): State<Shared>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<AnswerBody>, JsonRejection>,
) -> Response {
    let Some(session) = state.get(&id) else {
        return not_found(&id);
    };
    let Json(body) = match body {
        Ok(b) => b,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.body_text()),
    };
    let Some(choice) = parse_choice_token(&body.choice) else {
        return error(StatusCode::BAD_REQUEST, format!("invalid choice '{}'; expected Image1 or Image2", body.choice));
    };
    let mut s = session.lock().expect("lock");
    let mut events = Vec::new();
    let result = s.answer(choice, body.evidence, &mut events);
    if let Err(e) = state.log(&id, &events) {
        return session_error(e, &id, Some(&s));
    }
    match result {
        Ok(reply) => Json(reply).into_response(),
        Err(e) => session_error(e, &id, Some(&s)),
    }
}

#[derive(Debug, Deserialize)]
struct ReportBody {
    #[serde(default)]
    category: String,
    #[serde(default)]
    note: String,
}

async fn post_report(
    State(state): State<Shared>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<ReportBody>, JsonRejection>,
) -> Response {
    let Some(session) = state.get(&id) else {
        return not_found(&id);
    };
    let Json(body) = match body {
        Ok(b) => b,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.body_text()),
    };
    let category = body.category.trim().to_string();
    if category.is_empty() {
        return error(StatusCode::BAD_REQUEST, "category must not be empty");
    }
    let s = session.lock().expect("lock");
    let samples = s.on_screen();
    let event = Event::Report {
        category: category.clone(),
        note: body.note.clone(),
        samples: samples.clone(),
    };
    if let Err(e) = state.log(&id, &[event]) {
        return session_error(e, &id, Some(&s));
    }
    let _guard = state.review_lock.lock().expect("lock");
    for sid in &samples {
        let Ok(sample) = state.corpus.sample(sid) else { continue };
        let item = ReviewItem {
            ethic_flag: Some(category.clone()),
            note: body.note.clone(),
            verdict: Verdict::Keep,
            ..ReviewItem::for_sample(sample)
        };
        if let Err(e) = append_review_item(&state.options.review_queue(), &item) {
            return error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string());
        }
    }
    StatusCode::NO_CONTENT.into_response()
}

async fn get_summary(State(state): State<Shared>, UrlPath(id): UrlPath<String>) -> Response {
    let Some(session) = state.get(&id) else {
        return not_found(&id);
    };
    let s = session.lock().expect("lock");
    Json(s.summary()).into_response()
}

/// Joins `rel` onto `root`, refusing anything that could escape it.
pub fn safe_join(root: &Path, rel: &str) -> Option<PathBuf> {
    let rel = Path::new(rel);
    let mut out = root.to_path_buf();
    for c in rel.components() {
        match c {
            Component::Normal(p) => out.push(p),
            Component::CurDir => {}
            _ => return None,
        }
    }
    Some(out)
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref() {
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("png") => "image/png",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        Some("svg") => "image/svg+xml",
        Some("html") => "text/html; charset=utf-8",
        Some("js") => "text/javascript",
        Some("css") => "text/css",
        Some("json") => "application/json",
        _ => "application/octet-stream",
    }
}

async fn serve_file(root: &Path, rel: &str) -> Response {
    let Some(path) = safe_join(root, rel) else {
        return error(StatusCode::BAD_REQUEST, "invalid path");
    };
    match tokio::fs::read(&path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response(),
        Err(_) => error(StatusCode::NOT_FOUND, "not found"),
    }
}

async fn get_image(State(state): State<Shared>, UrlPath(rel): UrlPath<String>) -> Response {
    serve_file(&state.options.image_root, &rel).await
}

async fn get_ui(State(state): State<Shared>, uri: axum::http::Uri) -> Response {
    let Some(dir) = &state.options.ui_dir else {
        return error(StatusCode::NOT_FOUND, "not found");
    };
    let rel = uri.path().trim_start_matches('/');
    let rel = if rel.is_empty() { "index.html" } else { rel };
    serve_file(dir, rel).await
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/next", get(next_question))
        .route("/sessions/{id}/answer", post(post_answer))
        .route("/sessions/{id}/report", post(post_report))
        .route("/sessions/{id}/summary", get(get_summary))
        .route("/images/{*path}", get(get_image))
        .fallback(get_ui)
        .with_state(state)
}

/// Serves until `shutdown` resolves.
pub async fn serve<F>(listener: tokio::net::TcpListener, state: Shared, shutdown: F) -> std::io::Result<()>
where
    F: std::future::Future<Output = ()> + Send + 'static,
{
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}
