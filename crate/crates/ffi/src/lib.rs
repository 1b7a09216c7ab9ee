//! C ABI over the review-workflow engine.
//!
//! One `RcEngine` handle owns a state directory (and its advisory lock), a
//! replayed engine, and a simulated clock. Every mutating call persists the
//! chain, the registry, and the clock before it returns, so handles and the
//! CLI can be pointed at the same directory (not concurrently; the lock
//! enforces that).
//!
//! Conventions:
//!
//! * Functions return [`RcStatus`]; `RcOk` is zero.
//! * On any failure, [`rc_last_error`] returns a message for the calling
//!   thread, valid until that thread's next call into this library.
//! * Strings are NUL-terminated UTF-8. Output buffers are written with a
//!   terminating NUL and truncation is an error (`RcParameter`).

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use revchain_core::engine::{Engine, EngineConfig};
use revchain_core::ledger::{Difficulty, LedgerError};
use revchain_core::registry::RegistryError;
use revchain_core::selection::SelectionError;
use revchain_core::store::{StateDir, StateLock, StoreError};
use revchain_core::workflow::{
    InvitationAnswer, Recommendation, ScreenDecision, Verdict, WorkflowError,
};

/// Result of every fallible call. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RcStatus {
    RcOk = 0,
    RcNullArgument = 1,
    RcInvalidUtf8 = 2,
    RcIo = 3,
    RcParse = 4,
    RcLookup = 5,
    RcConflict = 6,
    RcState = 7,
    RcDeadline = 8,
    RcInsufficientReviewers = 9,
    RcParameter = 10,
    RcConfig = 11,
    RcInternal = 12,
}

/// Opaque handle: a locked state directory plus the replayed engine.
pub struct RcEngine {
    dir: StateDir,
    engine: Engine,
    clock_ms: u64,
    _lock: StateLock,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> =
        RefCell::new(CString::new("").expect("empty cstring"));
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).expect("no interior NUL");
    });
}

fn clear_error() {
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new("").expect("empty cstring");
    });
}

fn fail(status: RcStatus, message: impl AsRef<str>) -> RcStatus {
    set_error(message.as_ref());
    status
}

fn workflow_status(e: &WorkflowError) -> RcStatus {
    match e {
        WorkflowError::UnknownCase(_) | WorkflowError::UnknownInvitation(_) => RcStatus::RcLookup,
        WorkflowError::DuplicateCase(_) | WorkflowError::DuplicateReport(_) => {
            RcStatus::RcConflict
        }
        WorkflowError::LateResponse(_) | WorkflowError::ReportOverdue(_) => RcStatus::RcDeadline,
        WorkflowError::InvalidState(_) | WorkflowError::BadEvent(_) => RcStatus::RcState,
        WorkflowError::Registry(inner) => registry_status(inner),
        WorkflowError::Selection(inner) => selection_status(inner),
        WorkflowError::Ledger(inner) => ledger_status(inner),
        WorkflowError::Io(_) => RcStatus::RcIo,
    }
}

fn registry_status(e: &RegistryError) -> RcStatus {
    match e {
        RegistryError::UnknownPerson(_) | RegistryError::UnknownArticle(_) => RcStatus::RcLookup,
        RegistryError::UnknownSchemaVersion(_) | RegistryError::Parse(_) => RcStatus::RcParse,
        RegistryError::Io(_) => RcStatus::RcIo,
    }
}

fn selection_status(e: &SelectionError) -> RcStatus {
    match e {
        SelectionError::TargetOutOfRange(_) => RcStatus::RcParameter,
        SelectionError::InsufficientReviewers { .. } => RcStatus::RcInsufficientReviewers,
        SelectionError::Registry(inner) => registry_status(inner),
    }
}

fn ledger_status(e: &LedgerError) -> RcStatus {
    match e {
        LedgerError::Malformed { .. } | LedgerError::InvalidHex(_) => RcStatus::RcParse,
        LedgerError::DifficultyOutOfRange(_) => RcStatus::RcParameter,
        LedgerError::Io(_) => RcStatus::RcIo,
        _ => RcStatus::RcInternal,
    }
}

fn store_status(e: &StoreError) -> RcStatus {
    match e {
        StoreError::AlreadyInitialized(_)
        | StoreError::NotInitialized(_)
        | StoreError::Locked { .. }
        | StoreError::Config(_) => RcStatus::RcConfig,
        StoreError::Ledger(inner) => ledger_status(inner),
        StoreError::Registry(inner) => registry_status(inner),
        StoreError::Workflow(inner) => workflow_status(inner),
        StoreError::Io(_) => RcStatus::RcIo,
    }
}

fn store_fail(e: StoreError) -> RcStatus {
    fail(store_status(&e), e.to_string())
}

fn workflow_fail(e: WorkflowError) -> RcStatus {
    fail(workflow_status(&e), e.to_string())
}

unsafe fn required_str<'a>(pointer: *const c_char, name: &str) -> Result<&'a str, RcStatus> {
    if pointer.is_null() {
        return Err(fail(
            RcStatus::RcNullArgument,
            format!("{name} must not be NULL"),
        ));
    }
    CStr::from_ptr(pointer).to_str().map_err(|_| {
        fail(
            RcStatus::RcInvalidUtf8,
            format!("{name} is not valid UTF-8"),
        )
    })
}

unsafe fn engine_mut<'a>(handle: *mut RcEngine) -> Result<&'a mut RcEngine, RcStatus> {
    handle.as_mut().ok_or_else(|| {
        fail(RcStatus::RcNullArgument, "engine handle must not be NULL")
    })
}

unsafe fn engine_ref<'a>(handle: *const RcEngine) -> Result<&'a RcEngine, RcStatus> {
    handle.as_ref().ok_or_else(|| {
        fail(RcStatus::RcNullArgument, "engine handle must not be NULL")
    })
}

fn guarded(action: impl FnOnce() -> RcStatus) -> RcStatus {
    match catch_unwind(AssertUnwindSafe(action)) {
        Ok(status) => status,
        Err(_) => fail(RcStatus::RcInternal, "internal panic"),
    }
}

impl RcEngine {
    fn persist(&self) -> Result<(), StoreError> {
        self.dir.persist(&self.engine)?;
        self.dir.write_clock(self.clock_ms)
    }
}

fn open_handle(root: &Path) -> Result<Box<RcEngine>, StoreError> {
    let dir = StateDir::open(root)?;
    let lock = dir.lock()?;
    let engine = dir.load_engine(EngineConfig::default())?;
    let clock_ms = dir.read_clock()?;
    Ok(Box::new(RcEngine {
        dir,
        engine,
        clock_ms,
        _lock: lock,
    }))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message for the calling thread's most recent failure. Empty string when
/// the last call succeeded. Valid until this thread's next call.
#[no_mangle]
pub extern "C" fn rc_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Create a state directory with a fresh chain at `difficulty` leading zero
/// hex digits, then open it. The new handle is written to `out`.
#[no_mangle]
pub unsafe extern "C" fn rc_engine_init(
    state_dir: *const c_char,
    difficulty: u8,
    out: *mut *mut RcEngine,
) -> RcStatus {
    guarded(|| {
        clear_error();
        let root = match required_str(state_dir, "state_dir") {
            Ok(s) => s,
            Err(status) => return status,
        };
        if out.is_null() {
            return fail(RcStatus::RcNullArgument, "out must not be NULL");
        }
        let difficulty = match Difficulty::new(difficulty) {
            Ok(d) => d,
            Err(e) => return fail(RcStatus::RcParameter, e.to_string()),
        };
        if let Err(e) = StateDir::init(Path::new(root), difficulty, None) {
            return store_fail(e);
        }
        match open_handle(Path::new(root)) {
            Ok(handle) => {
                *out = Box::into_raw(handle);
                RcStatus::RcOk
            }
            Err(e) => store_fail(e),
        }
    })
}

/// Open an existing state directory. The new handle is written to `out`.
#[no_mangle]
pub unsafe extern "C" fn rc_engine_open(
    state_dir: *const c_char,
    out: *mut *mut RcEngine,
) -> RcStatus {
    guarded(|| {
        clear_error();
        let root = match required_str(state_dir, "state_dir") {
            Ok(s) => s,
            Err(status) => return status,
        };
        if out.is_null() {
            return fail(RcStatus::RcNullArgument, "out must not be NULL");
        }
        match open_handle(Path::new(root)) {
            Ok(handle) => {
                *out = Box::into_raw(handle);
                RcStatus::RcOk
            }
            Err(e) => store_fail(e),
        }
    })
}

/// Release a handle and its directory lock. NULL is a no-op.
#[no_mangle]
pub unsafe extern "C" fn rc_engine_close(engine: *mut RcEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Ingest a corpus JSON file. Each count pointer may be NULL.
#[no_mangle]
pub unsafe extern "C" fn rc_engine_ingest(
    engine: *mut RcEngine,
    corpus_path: *const c_char,
    persons_added: *mut usize,
    articles_added: *mut usize,
    records_rejected: *mut usize,
) -> RcStatus {
    guarded(|| {
        clear_error();
        let handle = match engine_mut(engine) {
            Ok(h) => h,
            Err(status) => return status,
        };
        let path = match required_str(corpus_path, "corpus_path") {
            Ok(s) => s,
            Err(status) => return status,
        };
        let report = match handle.engine.ingest_corpus(Path::new(path)) {
            Ok(report) => report,
            Err(e) => return workflow_fail(e),
        };
        if let Err(e) = handle.persist() {
            return store_fail(e);
        }
        if !persons_added.is_null() {
            *persons_added = report.persons_added;
        }
        if !articles_added.is_null() {
            *articles_added = report.articles_added;
        }
        if !records_rejected.is_null() {
            *records_rejected = report.rejects.len();
        }
        RcStatus::RcOk
    })
}

fn mutate(
    engine: *mut RcEngine,
    action: impl FnOnce(&mut Engine, u64) -> Result<(), WorkflowError>,
) -> RcStatus {
    guarded(|| {
        clear_error();
        let handle = match unsafe { engine_mut(engine) } {
            Ok(h) => h,
            Err(status) => return status,
        };
        if let Err(e) = action(&mut handle.engine, handle.clock_ms) {
            return workflow_fail(e);
        }
        match handle.persist() {
            Ok(()) => RcStatus::RcOk,
            Err(e) => store_fail(e),
        }
    })
}

/// Open a review case for an ingested article.
#[no_mangle]
pub unsafe extern "C" fn rc_engine_submit(
    engine: *mut RcEngine,
    article_id: *const c_char,
) -> RcStatus {
    let article_id = match required_str(article_id, "article_id") {
        Ok(s) => s.to_string(),
        Err(status) => return status,
    };
    mutate(engine, |e, now| {
        e.submit_manuscript(&article_id, now).map(|_| ())
    })
}

/// Screen a submitted case. Nonzero `proceed` sends the invitation batch;
/// zero desk-rejects.
#[no_mangle]
pub unsafe extern "C" fn rc_engine_screen(
    engine: *mut RcEngine,
    article_id: *const c_char,
    proceed: bool,
) -> RcStatus {
    let article_id = match required_str(article_id, "article_id") {
        Ok(s) => s.to_string(),
        Err(status) => return status,
    };
    let decision = if proceed {
        ScreenDecision::Proceed
    } else {
        ScreenDecision::DeskReject
    };
    mutate(engine, |e, now| {
        e.screen(&article_id, decision, now).map(|_| ())
    })
}

/// Record a reviewer's answer. Nonzero `accept` accepts; zero declines.
#[no_mangle]
pub unsafe extern "C" fn rc_engine_respond(
    engine: *mut RcEngine,
    invitation_id: *const c_char,
    accept: bool,
) -> RcStatus {
    let invitation_id = match required_str(invitation_id, "invitation_id") {
        Ok(s) => s.to_string(),
        Err(status) => return status,
    };
    let answer = if accept {
        InvitationAnswer::Accept
    } else {
        InvitationAnswer::Decline
    };
    mutate(engine, |e, now| e.respond(&invitation_id, answer, now))
}

fn parse_recommendation(text: &str) -> Option<Recommendation> {
    match text {
        "accept" => Some(Recommendation::Accept),
        "minor_revise" => Some(Recommendation::MinorRevise),
        "major_revise" => Some(Recommendation::MajorRevise),
        "reject" => Some(Recommendation::Reject),
        _ => None,
    }
}

fn parse_verdict(text: &str) -> Option<Verdict> {
    match text {
        "accept" => Some(Verdict::Accept),
        "revise" => Some(Verdict::Revise),
        "reject" => Some(Verdict::Reject),
        _ => None,
    }
}

/// File a review report. `recommendation` is one of "accept",
/// "minor_revise", "major_revise", "reject".
#[no_mangle]
pub unsafe extern "C" fn rc_engine_report(
    engine: *mut RcEngine,
    invitation_id: *const c_char,
    recommendation: *const c_char,
) -> RcStatus {
    let invitation_id = match required_str(invitation_id, "invitation_id") {
        Ok(s) => s.to_string(),
        Err(status) => return status,
    };
    let recommendation = match required_str(recommendation, "recommendation") {
        Ok(s) => match parse_recommendation(s) {
            Some(r) => r,
            None => {
                return fail(
                    RcStatus::RcParameter,
                    format!("unknown recommendation {s:?}"),
                )
            }
        },
        Err(status) => return status,
    };
    mutate(engine, |e, now| {
        e.submit_report(&invitation_id, recommendation, now)
    })
}

/// Record the editorial verdict. `verdict` is one of "accept", "revise",
/// "reject".
#[no_mangle]
pub unsafe extern "C" fn rc_engine_decide(
    engine: *mut RcEngine,
    article_id: *const c_char,
    verdict: *const c_char,
) -> RcStatus {
    let article_id = match required_str(article_id, "article_id") {
        Ok(s) => s.to_string(),
        Err(status) => return status,
    };
    let verdict = match required_str(verdict, "verdict") {
        Ok(s) => match parse_verdict(s) {
            Some(v) => v,
            None => return fail(RcStatus::RcParameter, format!("unknown verdict {s:?}")),
        },
        Err(status) => return status,
    };
    mutate(engine, |e, now| e.decide(&article_id, verdict, now))
}

/// Advance the simulated clock by `advance_ms` and expire lapsed
/// invitations and reports. Each count pointer may be NULL.
#[no_mangle]
pub unsafe extern "C" fn rc_engine_tick(
    engine: *mut RcEngine,
    advance_ms: u64,
    invitations_expired: *mut usize,
    reports_overdue: *mut usize,
    replacements_sent: *mut usize,
) -> RcStatus {
    guarded(|| {
        clear_error();
        let handle = match engine_mut(engine) {
            Ok(h) => h,
            Err(status) => return status,
        };
        let now = handle.clock_ms.saturating_add(advance_ms);
        let summary = match handle.engine.tick(now) {
            Ok(summary) => summary,
            Err(e) => return workflow_fail(e),
        };
        handle.clock_ms = now;
        if let Err(e) = handle.persist() {
            return store_fail(e);
        }
        if !invitations_expired.is_null() {
            *invitations_expired = summary.invitations_expired;
        }
        if !reports_overdue.is_null() {
            *reports_overdue = summary.reports_overdue;
        }
        if !replacements_sent.is_null() {
            *replacements_sent = summary.replacements_sent;
        }
        RcStatus::RcOk
    })
}

/// Current simulated clock in ms. Returns 0 on a NULL handle.
#[no_mangle]
pub unsafe extern "C" fn rc_engine_clock_ms(engine: *const RcEngine) -> u64 {
    engine.as_ref().map_or(0, |h| h.clock_ms)
}

/// Move the simulated clock to an absolute time. Only forward moves are
/// allowed.
#[no_mangle]
pub unsafe extern "C" fn rc_engine_set_clock_ms(
    engine: *mut RcEngine,
    now_ms: u64,
) -> RcStatus {
    guarded(|| {
        clear_error();
        let handle = match engine_mut(engine) {
            Ok(h) => h,
            Err(status) => return status,
        };
        if now_ms < handle.clock_ms {
            return fail(
                RcStatus::RcParameter,
                format!("clock may not move back ({now_ms} < {})", handle.clock_ms),
            );
        }
        handle.clock_ms = now_ms;
        match handle.dir.write_clock(now_ms) {
            Ok(()) => RcStatus::RcOk,
            Err(e) => store_fail(e),
        }
    })
}

/// Number of blocks in the chain, genesis included. 0 on a NULL handle.
#[no_mangle]
pub unsafe extern "C" fn rc_engine_chain_length(engine: *const RcEngine) -> u64 {
    engine.as_ref().map_or(0, |h| h.engine.chain.len() as u64)
}

/// Re-verify every block. `RcOk` means the chain is intact.
#[no_mangle]
pub unsafe extern "C" fn rc_engine_validate(engine: *const RcEngine) -> RcStatus {
    guarded(|| {
        clear_error();
        let handle = match engine_ref(engine) {
            Ok(h) => h,
            Err(status) => return status,
        };
        match handle.engine.chain.validate() {
            Ok(report) if report.valid => RcStatus::RcOk,
            Ok(report) => fail(
                RcStatus::RcState,
                format!(
                    "chain invalid at block {}: {}",
                    report.first_bad_index.unwrap_or_default(),
                    report
                        .reason
                        .map_or_else(|| "unknown".to_string(), |r| r.to_string())
                ),
            ),
            Err(e) => fail(ledger_status(&e), e.to_string()),
        }
    })
}

/// Write the case status name ("InReview", "Accepted", ...) for an article
/// into `buf` (NUL-terminated). `buf_len` is the buffer size in bytes.
#[no_mangle]
pub unsafe extern "C" fn rc_engine_case_status(
    engine: *const RcEngine,
    article_id: *const c_char,
    buf: *mut c_char,
    buf_len: usize,
) -> RcStatus {
    guarded(|| {
        clear_error();
        let handle = match engine_ref(engine) {
            Ok(h) => h,
            Err(status) => return status,
        };
        let article_id = match required_str(article_id, "article_id") {
            Ok(s) => s,
            Err(status) => return status,
        };
        if buf.is_null() {
            return fail(RcStatus::RcNullArgument, "buf must not be NULL");
        }
        let case = match handle.engine.case(article_id) {
            Ok(case) => case,
            Err(e) => return workflow_fail(e),
        };
        let name = case.status.to_string();
        if buf_len <= name.len() {
            return fail(
                RcStatus::RcParameter,
                format!("buffer of {buf_len} too small for {} bytes", name.len() + 1),
            );
        }
        ptr::copy_nonoverlapping(name.as_ptr(), buf as *mut u8, name.len());
        *buf.add(name.len()) = 0;
        RcStatus::RcOk
    })
}
