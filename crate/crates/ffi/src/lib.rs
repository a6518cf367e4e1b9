//! C ABI for the assocbench harness.
//!
//! Objects cross the boundary as opaque handles (`AbCorpus`, `AbRound`) that
//! the caller releases with the matching `*_free` function. Every fallible
//! call returns an [`AbStatus`]; on failure `ab_last_error()` describes the
//! most recent error on the calling thread. Strings returned through `char**`
//! out-parameters are owned by the caller and released with
//! `ab_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;

use assocbench::builder::{make_round, BuildError, RoundKind};
use assocbench::config::RunConfig;
use assocbench::corpus::{load_manifest, Corpus, CorpusError};
use assocbench::experiment::{report_from_logs, run_experiment};
use assocbench::modelio::{OracleClient, OracleConfig};
use assocbench::runner::{run_chain, Agent, RoundRun, RunError, RunParams};
use assocbench::MemoryStrategy;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AbStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    InvalidInput = 4,
    Infeasible = 5,
    /// A run finished but some rounds ended in transport failures.
    Transport = 6,
    Internal = 7,
    Panic = 8,
}

/// A loaded corpus.
pub struct AbCorpus {
    inner: Arc<Corpus>,
}

/// A finished chain round.
pub struct AbRound {
    run: RoundRun,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl std::fmt::Display) {
    let text = message.to_string().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).expect("nul bytes removed"));
}

fn fail(status: AbStatus, message: impl std::fmt::Display) -> AbStatus {
    set_error(message);
    status
}

fn guard(f: impl FnOnce() -> AbStatus) -> AbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(AbStatus::Panic, "panic inside assocbench"),
    }
}

unsafe fn arg_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, AbStatus> {
    if p.is_null() {
        return Err(fail(AbStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(AbStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

fn corpus_status(e: &CorpusError) -> AbStatus {
    match e {
        CorpusError::Io { .. } => AbStatus::Io,
        _ => AbStatus::InvalidInput,
    }
}

fn run_status(e: &RunError) -> AbStatus {
    match e {
        RunError::Build(BuildError::ChainInfeasible(_)) => AbStatus::Infeasible,
        RunError::Build(BuildError::Corpus(c)) => corpus_status(c),
        RunError::Build(_) => AbStatus::InvalidInput,
        _ => AbStatus::Internal,
    }
}

fn give_string(out: *mut *mut c_char, s: String) -> AbStatus {
    match CString::new(s) {
        Ok(c) => {
            unsafe { *out = c.into_raw() };
            AbStatus::Ok
        }
        Err(_) => fail(AbStatus::Internal, "string contains a nul byte"),
    }
}

/// Message for the last failed call on this thread. Valid until the next
/// call into this library from the same thread; never null.
#[no_mangle]
pub extern "C" fn ab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn ab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ab_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a corpus manifest.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ab_corpus_load(path: *const c_char, out: *mut *mut AbCorpus) -> AbStatus {
    guard(|| {
        if out.is_null() {
            return fail(AbStatus::NullArgument, "out is null");
        }
        let path = match arg_str(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match load_manifest(Path::new(path)) {
            Ok((corpus, _)) => {
                *out = Box::into_raw(Box::new(AbCorpus { inner: Arc::new(corpus) }));
                AbStatus::Ok
            }
            Err(e) => fail(corpus_status(&e), e),
        }
    })
}

/// Number of accepted samples; 0 for a null handle.
///
/// # Safety
/// `corpus` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ab_corpus_len(corpus: *const AbCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.inner.len())
}

/// # Safety
/// `corpus` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn ab_corpus_free(corpus: *mut AbCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Runs one synchronous chain round for `concept` against a Bernoulli oracle
/// that picks the correct option with probability `p_assoc` and always
/// deduces correctly. `strategy` is one of NoM, StructM, NLM, ChainM.
///
/// # Safety
/// `corpus` must be a live handle, strings nul-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ab_run_oracle_chain(
    corpus: *const AbCorpus,
    concept: *const c_char,
    strategy: *const c_char,
    cap: usize,
    seed: u64,
    p_assoc: f64,
    out: *mut *mut AbRound,
) -> AbStatus {
    guard(|| {
        let (Some(corpus), false) = (corpus.as_ref(), out.is_null()) else {
            return fail(AbStatus::NullArgument, "corpus or out is null");
        };
        let concept = match arg_str(concept, "concept") {
            Ok(c) => c.to_string(),
            Err(s) => return s,
        };
        let strategy: MemoryStrategy = match arg_str(strategy, "strategy").map(str::parse) {
            Ok(Ok(s)) => s,
            Ok(Err(e)) => return fail(AbStatus::InvalidInput, e),
            Err(s) => return s,
        };
        let oracle = match OracleClient::new("oracle", OracleConfig { p_assoc, seed, ..Default::default() }) {
            Ok(o) => o,
            Err(e) => return fail(AbStatus::InvalidInput, e),
        };
        let plan = match make_round(&corpus.inner, RoundKind::Synchronous, &[concept], cap, seed, 3, 2) {
            Ok(p) => p,
            Err(e) => {
                let e = RunError::from(e);
                return fail(run_status(&e), e);
            }
        };
        let agent = Agent::Single(Arc::new(oracle));
        match run_chain(&corpus.inner, &plan, &agent, &RunParams::new(strategy)) {
            Ok(run) => {
                *out = Box::into_raw(Box::new(AbRound { run }));
                AbStatus::Ok
            }
            Err(e) => fail(run_status(&e), e),
        }
    })
}

/// Correct steps before termination; 0 for a null handle.
///
/// # Safety
/// `round` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ab_round_final_step_count(round: *const AbRound) -> usize {
    round.as_ref().map_or(0, |r| r.run.result.final_step_count)
}

/// The round result as JSON.
///
/// # Safety
/// `round` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ab_round_to_json(round: *const AbRound, out: *mut *mut c_char) -> AbStatus {
    guard(|| {
        let (Some(round), false) = (round.as_ref(), out.is_null()) else {
            return fail(AbStatus::NullArgument, "round or out is null");
        };
        match serde_json::to_string(&round.run.result) {
            Ok(s) => give_string(out, s),
            Err(e) => fail(AbStatus::Internal, e),
        }
    })
}

/// # Safety
/// `round` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn ab_round_free(round: *mut AbRound) {
    if !round.is_null() {
        drop(Box::from_raw(round));
    }
}

/// Runs the experiment described by a TOML config file, writing logs and
/// reports to its output directory. On success or `AB_STATUS_TRANSPORT`,
/// `report_json` (if not null) receives the report.
///
/// # Safety
/// `config_path` must be nul-terminated; `report_json` null or writable.
#[no_mangle]
pub unsafe extern "C" fn ab_run_config(config_path: *const c_char, report_json: *mut *mut c_char) -> AbStatus {
    guard(|| {
        let path = match arg_str(config_path, "config_path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        let config = match RunConfig::load(Path::new(path)) {
            Ok(c) => c,
            Err(e) => return fail(AbStatus::InvalidInput, e),
        };
        let corpus = match load_manifest(&config.corpus) {
            Ok((c, _)) => c,
            Err(e) => return fail(corpus_status(&e), e),
        };
        let agents = match config.validate(&corpus).and_then(|_| config.build_agents()) {
            Ok(a) => a,
            Err(e) => return fail(AbStatus::InvalidInput, e),
        };
        let outcome = match run_experiment(&config, &corpus, &agents, None) {
            Ok(o) => o,
            Err(e) => return fail(AbStatus::Internal, e),
        };
        if !report_json.is_null() {
            let status = give_string(report_json, outcome.report.to_json());
            if status != AbStatus::Ok {
                return status;
            }
        }
        if outcome.transport_failures > 0 {
            return fail(
                AbStatus::Transport,
                format!("{} rounds ended by transport failures", outcome.transport_failures),
            );
        }
        AbStatus::Ok
    })
}

/// Recomputes the report (JSON) from a directory of round logs.
///
/// # Safety
/// `logs_dir` must be nul-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ab_report_from_logs(logs_dir: *const c_char, out: *mut *mut c_char) -> AbStatus {
    guard(|| {
        if out.is_null() {
            return fail(AbStatus::NullArgument, "out is null");
        }
        let dir = match arg_str(logs_dir, "logs_dir") {
            Ok(d) => d,
            Err(s) => return s,
        };
        match report_from_logs(Path::new(dir)) {
            Ok(r) => give_string(out, r.to_json()),
            Err(e) => fail(AbStatus::Io, e),
        }
    })
}
