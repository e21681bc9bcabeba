//! C ABI over the recommender: load a checkpoint and a domain, rank the
//! catalog zero-shot for a user history, and read back the results.
//!
//! Conventions: every fallible call returns a [`PrerecStatus`]; outputs come
//! back through out-pointers holding opaque handles that must be released
//! with the matching `_free` function. The last error message is kept in
//! thread-local storage and read with [`prerec_last_error`]. Strings are
//! NUL-terminated UTF-8.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};

use prerec::checkpoint::Checkpoint;
use prerec::corpus::load::{load_catalog, load_interactions, LogFormat};
use prerec::corpus::DomainDataset;
use prerec::embedding::EmbeddingTable;
use prerec::error::Error;
use prerec::evaluation::r_ndcg;
use prerec::inference::{rank_topk, resolve_history, ModelScorer, RankedList};
use prerec::popularity::DomainIntervalCounts;

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

/// Result codes for every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrerecStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    IoError = 3,
    DataError = 4,
    ConfigError = 5,
    NumericError = 6,
}

fn status_of(err: &Error) -> PrerecStatus {
    match err {
        Error::Config(_) => PrerecStatus::ConfigError,
        Error::Io { .. } | Error::Json { .. } => PrerecStatus::IoError,
        Error::Ingest { .. } | Error::Data(_) => PrerecStatus::DataError,
        Error::Numeric(_) | Error::Encoder(_) => PrerecStatus::NumericError,
    }
}

fn fail(err: Error) -> PrerecStatus {
    let code = status_of(&err);
    set_error(err.to_string());
    code
}

/// A loaded model checkpoint.
pub struct PrerecCheckpoint {
    inner: Checkpoint,
}

/// A loaded domain: catalog, embeddings, interactions, interval counts.
pub struct PrerecDomain {
    dataset: DomainDataset,
    counts: DomainIntervalCounts,
}

/// A ranked catalog slice with scores.
pub struct PrerecRanking {
    inner: RankedList,
}

unsafe fn cstr_arg<'a>(ptr: *const c_char) -> Result<&'a str, PrerecStatus> {
    if ptr.is_null() {
        set_error("null string argument");
        return Err(PrerecStatus::NullArgument);
    }
    unsafe { CStr::from_ptr(ptr) }.to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        PrerecStatus::InvalidUtf8
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn prerec_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Copies the last error message into `buf` (truncated to `cap - 1` bytes,
/// always NUL-terminated when `cap > 0`). Returns the full message length.
///
/// # Safety
/// `buf` must point to at least `cap` writable bytes (or be null).
#[no_mangle]
pub unsafe extern "C" fn prerec_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            unsafe {
                std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
                *buf.add(n) = 0;
            }
        }
        bytes.len()
    })
}

/// Loads a checkpoint archive from `path`.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn prerec_checkpoint_load(
    path: *const c_char,
    out: *mut *mut PrerecCheckpoint,
) -> PrerecStatus {
    if out.is_null() {
        set_error("null output pointer");
        return PrerecStatus::NullArgument;
    }
    let path = match unsafe { cstr_arg(path) } {
        Ok(p) => p,
        Err(code) => return code,
    };
    match Checkpoint::load(Path::new(path)) {
        Ok(inner) => {
            unsafe { *out = Box::into_raw(Box::new(PrerecCheckpoint { inner })) };
            PrerecStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// # Safety
/// `handle` must come from [`prerec_checkpoint_load`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn prerec_checkpoint_free(handle: *mut PrerecCheckpoint) {
    if !handle.is_null() {
        drop(unsafe { Box::from_raw(handle) });
    }
}

/// Loads one domain from an interactions file (`format`: 0 = CSV,
/// 1 = JSONL), a JSONL catalog, and an embedding manifest. Interval counts
/// use `interval_secs` (pass 0 for the 15-day default).
///
/// # Safety
/// All pointer arguments must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn prerec_domain_load(
    interactions_path: *const c_char,
    format: u32,
    catalog_path: *const c_char,
    embeddings_manifest_path: *const c_char,
    domain_id: *const c_char,
    interval_secs: i64,
    out: *mut *mut PrerecDomain,
) -> PrerecStatus {
    if out.is_null() {
        set_error("null output pointer");
        return PrerecStatus::NullArgument;
    }
    let (interactions, catalog_p, manifest, domain) = unsafe {
        match (
            cstr_arg(interactions_path),
            cstr_arg(catalog_path),
            cstr_arg(embeddings_manifest_path),
            cstr_arg(domain_id),
        ) {
            (Ok(a), Ok(b), Ok(c), Ok(d)) => (a, b, c, d),
            (Err(e), ..) | (_, Err(e), ..) | (_, _, Err(e), _) | (_, _, _, Err(e)) => {
                return e
            }
        }
    };
    let fmt = match format {
        0 => LogFormat::Csv,
        1 => LogFormat::Jsonl,
        other => {
            set_error(format!("unknown log format code {other}"));
            return PrerecStatus::ConfigError;
        }
    };
    let secs = if interval_secs <= 0 {
        prerec::popularity::DEFAULT_INTERVAL_SECS
    } else {
        interval_secs
    };
    let build = || -> prerec::Result<PrerecDomain> {
        let log = load_interactions(&PathBuf::from(interactions), fmt)?;
        let catalog = load_catalog(&PathBuf::from(catalog_p))?;
        let table = EmbeddingTable::load(&PathBuf::from(manifest))?;
        let dataset = DomainDataset::assemble(&log, &catalog, &table, domain)?;
        let counts = DomainIntervalCounts::from_dataset(&dataset, secs)?;
        Ok(PrerecDomain { dataset, counts })
    };
    match build() {
        Ok(d) => {
            unsafe { *out = Box::into_raw(Box::new(d)) };
            PrerecStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// # Safety
/// `handle` must come from [`prerec_domain_load`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn prerec_domain_free(handle: *mut PrerecDomain) {
    if !handle.is_null() {
        drop(unsafe { Box::from_raw(handle) });
    }
}

/// Number of catalog items in the domain.
///
/// # Safety
/// `domain` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn prerec_domain_items(domain: *const PrerecDomain) -> usize {
    if domain.is_null() {
        return 0;
    }
    unsafe { &*domain }.dataset.n_items()
}

/// Ranks the domain catalog zero-shot for a user history at time `time`,
/// keeping the top `k_pct` percent. History ids unknown to the catalog are
/// skipped.
///
/// # Safety
/// `history_ids` must point to `history_len` valid NUL-terminated strings;
/// handles must be live; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn prerec_zero_shot_rank(
    checkpoint: *const PrerecCheckpoint,
    domain: *const PrerecDomain,
    history_ids: *const *const c_char,
    history_len: usize,
    time: i64,
    k_pct: f64,
    out: *mut *mut PrerecRanking,
) -> PrerecStatus {
    if checkpoint.is_null() || domain.is_null() || out.is_null() {
        set_error("null handle argument");
        return PrerecStatus::NullArgument;
    }
    if history_len > 0 && history_ids.is_null() {
        set_error("null history with nonzero length");
        return PrerecStatus::NullArgument;
    }
    let ckpt = unsafe { &*checkpoint };
    let dom = unsafe { &*domain };
    let mut ids = Vec::with_capacity(history_len);
    for i in 0..history_len {
        let ptr = unsafe { *history_ids.add(i) };
        match unsafe { cstr_arg(ptr) } {
            Ok(s) => ids.push(s.to_string()),
            Err(code) => return code,
        }
    }
    let run = || -> prerec::Result<RankedList> {
        let (history, _skipped) = resolve_history(&dom.dataset, &ids);
        let mut scorer = ModelScorer::zero_shot(&ckpt.inner.params, &dom.dataset, &dom.counts)?;
        let probs = scorer.probabilities(&history, time)?;
        rank_topk(&dom.dataset.items, &probs, k_pct)
    };
    match run() {
        Ok(inner) => {
            unsafe { *out = Box::into_raw(Box::new(PrerecRanking { inner })) };
            PrerecStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Number of entries in a ranking.
///
/// # Safety
/// `ranking` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn prerec_ranking_len(ranking: *const PrerecRanking) -> usize {
    if ranking.is_null() {
        return 0;
    }
    unsafe { &*ranking }.inner.items.len()
}

/// Copies the item id at `index` (0-based; rank = index + 1) into `buf`,
/// NUL-terminated. Returns the full id length, or 0 on a bad index.
///
/// # Safety
/// `ranking` must be a live handle; `buf` must hold `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn prerec_ranking_item(
    ranking: *const PrerecRanking,
    index: usize,
    buf: *mut c_char,
    cap: usize,
) -> usize {
    if ranking.is_null() {
        return 0;
    }
    let list = &unsafe { &*ranking }.inner;
    let Some(id) = list.items.get(index) else {
        set_error(format!("ranking index {index} out of range"));
        return 0;
    };
    let c = CString::new(id.as_str()).unwrap_or_default();
    let bytes = c.as_bytes();
    if !buf.is_null() && cap > 0 {
        let n = bytes.len().min(cap - 1);
        unsafe {
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
    }
    bytes.len()
}

/// Score at `index`; NaN on a bad index.
///
/// # Safety
/// `ranking` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn prerec_ranking_score(
    ranking: *const PrerecRanking,
    index: usize,
) -> f64 {
    if ranking.is_null() {
        return f64::NAN;
    }
    unsafe { &*ranking }
        .inner
        .scores
        .get(index)
        .copied()
        .unwrap_or(f64::NAN)
}

/// # Safety
/// `handle` must come from [`prerec_zero_shot_rank`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn prerec_ranking_free(handle: *mut PrerecRanking) {
    if !handle.is_null() {
        drop(unsafe { Box::from_raw(handle) });
    }
}

/// Catalog-normalized NDCG at a 1-based rank (no truncation).
#[no_mangle]
pub extern "C" fn prerec_r_ndcg(rank: u64, a: f64, b: f64, n_items: u64) -> f64 {
    if rank == 0 || n_items == 0 || !(a > 1.0) || !(b > 0.0) {
        return f64::NAN;
    }
    r_ndcg(rank as usize, a, b, n_items as usize)
}
