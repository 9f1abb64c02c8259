//! C ABI over the playseq engine.
//!
//! Handles are opaque and owned by the caller; free them with the matching
//! `*_free` function. Every fallible call returns a `PsStatus`; on failure
//! `ps_last_error` describes the problem for the calling thread. Strings
//! returned through out-pointers are heap-allocated JSON and must be
//! released with `ps_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use playseq::analytics::{player_embedding, similar_players};
use playseq::codec::{read_corpus, EncodeConfig, EncodedCorpus, Episode};
use playseq::inference::{run_whatif, WhatIfRequest};
use playseq::model::Checkpoint;
use playseq::train::evaluate;
use playseq::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    NotFound = 5,
    VocabMismatch = 6,
    Format = 7,
    BufferTooSmall = 8,
    Internal = 9,
    Panic = 10,
}

/// A loaded checkpoint.
pub struct PsModel {
    ck: Checkpoint,
}

/// A loaded episode corpus.
pub struct PsCorpus {
    episodes: Vec<Episode>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).unwrap_or_default());
}

fn status_of(e: &Error) -> PsStatus {
    match e {
        Error::Io(_) => PsStatus::Io,
        Error::UnknownPlayer(_) => PsStatus::NotFound,
        Error::VocabMismatch { .. } => PsStatus::VocabMismatch,
        Error::Checkpoint(_) | Error::Json(_) | Error::MalformedInput { .. } | Error::InvalidEpisode(_) => PsStatus::Format,
        Error::InvalidArgument(_) | Error::Domain(_) | Error::Substitution(_) | Error::Empty(_) | Error::ContextOverflow { .. } => {
            PsStatus::InvalidArgument
        }
        _ => PsStatus::Internal,
    }
}

struct Fail(PsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            PsStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside playseq");
            PsStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(PsStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(PsStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put_json(out: *mut *mut c_char, value: &impl serde::Serialize) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    let s = serde_json::to_string(value).map_err(|e| Fail(PsStatus::Internal, e.to_string()))?;
    *out = CString::new(s).map_err(|e| Fail(PsStatus::Internal, e.to_string()))?.into_raw();
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ps_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn ps_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn ps_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ps_model_load(path: *const c_char, out: *mut *mut PsModel) -> PsStatus {
    guard(|| {
        let path = PathBuf::from(str_arg(path, "path")?);
        if out.is_null() {
            return Err(null("out"));
        }
        let ck = Checkpoint::load(path)?;
        *out = Box::into_raw(Box::new(PsModel { ck }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from `ps_model_load` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ps_model_free(model: *mut PsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle; `vocab_size` and `embed_dim` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ps_model_dims(model: *const PsModel, vocab_size: *mut usize, embed_dim: *mut usize) -> PsStatus {
    guard(|| {
        let m = handle(model, "model")?;
        if vocab_size.is_null() || embed_dim.is_null() {
            return Err(null("output pointer"));
        }
        *vocab_size = m.ck.params.config.vocab_size;
        *embed_dim = m.ck.params.config.embed_dim;
        Ok(())
    })
}

/// Copies a player's embedding into `buf`, which must hold `embed_dim` floats.
///
/// # Safety
/// `model` must be a live handle; `buf` must point to `len` writable floats.
#[no_mangle]
pub unsafe extern "C" fn ps_player_embedding(model: *const PsModel, player_id: u32, buf: *mut f32, len: usize) -> PsStatus {
    guard(|| {
        let m = handle(model, "model")?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let row = player_embedding(&m.ck.params, &m.ck.vocab, player_id)?;
        if len < row.len() {
            return Err(Fail(PsStatus::BufferTooSmall, format!("buffer holds {len} floats, need {}", row.len())));
        }
        ptr::copy_nonoverlapping(row.as_ptr(), buf, row.len());
        Ok(())
    })
}

/// JSON array of the `k` most similar players.
///
/// # Safety
/// `model` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ps_similar_players_json(model: *const PsModel, player_id: u32, k: usize, out: *mut *mut c_char) -> PsStatus {
    guard(|| {
        let m = handle(model, "model")?;
        put_json(out, &similar_players(&m.ck.params, &m.ck.vocab, player_id, k)?)
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ps_corpus_load(path: *const c_char, out: *mut *mut PsCorpus) -> PsStatus {
    guard(|| {
        let path = PathBuf::from(str_arg(path, "path")?);
        if out.is_null() {
            return Err(null("out"));
        }
        let episodes = read_corpus(path)?;
        *out = Box::into_raw(Box::new(PsCorpus { episodes }));
        Ok(())
    })
}

/// # Safety
/// `corpus` must be null or a handle from `ps_corpus_load` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ps_corpus_free(corpus: *mut PsCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// # Safety
/// `corpus` must be a live handle; `len` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ps_corpus_len(corpus: *const PsCorpus, len: *mut usize) -> PsStatus {
    guard(|| {
        let c = handle(corpus, "corpus")?;
        if len.is_null() {
            return Err(null("len"));
        }
        *len = c.episodes.len();
        Ok(())
    })
}

/// Teacher-forced metrics as a JSON object.
///
/// # Safety
/// Handles must be live; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ps_evaluate_json(model: *const PsModel, corpus: *const PsCorpus, out: *mut *mut c_char) -> PsStatus {
    guard(|| {
        let (m, c) = (handle(model, "model")?, handle(corpus, "corpus")?);
        let enc = EncodedCorpus::encode(&c.episodes, &m.ck.vocab, EncodeConfig::fitting(m.ck.params.config.block_size)?)?;
        put_json(out, &evaluate(&m.ck.params, &m.ck.vocab, &enc)?)
    })
}

/// Runs a what-if substitution. `request_json` holds at least `out_player`
/// and `in_player`; the remaining fields take their defaults.
///
/// # Safety
/// Handles must be live; `request_json` NUL-terminated; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ps_simulate_json(
    model: *const PsModel,
    corpus: *const PsCorpus,
    request_json: *const c_char,
    out: *mut *mut c_char,
) -> PsStatus {
    guard(|| {
        let (m, c) = (handle(model, "model")?, handle(corpus, "corpus")?);
        let req: WhatIfRequest = serde_json::from_str(str_arg(request_json, "request_json")?)
            .map_err(|e| Fail(PsStatus::InvalidArgument, format!("bad request: {e}")))?;
        let enc = EncodeConfig::fitting(m.ck.params.config.block_size)?;
        put_json(out, &run_whatif(&m.ck.params, &m.ck.vocab, enc, &c.episodes, &req)?)
    })
}
