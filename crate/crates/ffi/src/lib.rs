//! C ABI for issueloc.
//!
//! Every fallible function returns an [`IlStatus`]. On failure the message
//! is available from [`il_last_error_message`] on the same thread until the
//! next failing call. Handles are opaque and must be released with their
//! matching `*_free` function. Strings returned through `char **` out
//! parameters are owned by the caller and released with [`il_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use issueloc::contrastive::{info_nce_loss_and_grad, ContrastiveBatch};
use issueloc::embed::{hash_embed, retrieve, EmbeddingVector, VectorIndex};
use issueloc::eval::rouge1_scores;
use issueloc::rerank::{first_token_loss, parse_permutation};
use issueloc::units::{extract_units, RepoSnapshot, DEFAULT_EXTENSION};
use issueloc::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IlStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Format = 4,
    InvalidInput = 5,
    Numeric = 6,
    Integrity = 7,
    Provider = 8,
    Config = 9,
    BufferTooSmall = 10,
    Panic = 11,
}

/// A loaded vector index.
pub struct IlIndex {
    inner: VectorIndex,
}

/// Retrieval result: unit ids with scores, best first.
pub struct IlRankedList {
    ids: Vec<CString>,
    scores: Vec<f64>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(CString::new(s).expect("nul bytes removed")));
}

fn status_of(err: &Error) -> IlStatus {
    match err {
        Error::SnapshotAccess { .. } | Error::Io { .. } => IlStatus::Io,
        Error::Json { .. } | Error::DiffParse { .. } | Error::IndexFormat(_) => IlStatus::Format,
        Error::NumericInput(_) | Error::Divergence { .. } => IlStatus::Numeric,
        Error::Integrity(_) => IlStatus::Integrity,
        Error::Provider(_) | Error::PartialIndexFailure { .. } => IlStatus::Provider,
        Error::Config(_) | Error::Budget { .. } | Error::WindowSize { .. } => IlStatus::Config,
        _ => IlStatus::InvalidInput,
    }
}

struct Fail(IlStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> IlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => IlStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            IlStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(IlStatus::NullArgument, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(IlStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn write_out<T>(p: *mut T, v: T, what: &str) -> Result<(), Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    *p = v;
    Ok(())
}

/// Library version, statically allocated.
#[no_mangle]
pub extern "C" fn il_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or null. Do not free.
#[no_mangle]
pub extern "C" fn il_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn il_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Opens an index file.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn il_index_open(path: *const c_char, out: *mut *mut IlIndex) -> IlStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = VectorIndex::read(Path::new(path))?;
        *out = Box::into_raw(Box::new(IlIndex { inner }));
        Ok(())
    })
}

/// # Safety
/// `index` must come from [`il_index_open`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn il_index_free(index: *mut IlIndex) {
    if !index.is_null() {
        drop(Box::from_raw(index));
    }
}

/// # Safety
/// `index` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn il_index_len(index: *const IlIndex, out: *mut usize) -> IlStatus {
    guard(|| {
        let index = index.as_ref().ok_or_else(|| null("index"))?;
        write_out(out, index.inner.len(), "out")
    })
}

/// # Safety
/// `index` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn il_index_dimension(index: *const IlIndex, out: *mut usize) -> IlStatus {
    guard(|| {
        let index = index.as_ref().ok_or_else(|| null("index"))?;
        write_out(out, index.inner.dimension(), "out")
    })
}

/// Top `top_k` units by cosine against `query` (normalized here).
///
/// # Safety
/// `query` must point to `dimension` floats; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn il_index_retrieve(
    index: *const IlIndex,
    query: *const f32,
    dimension: usize,
    top_k: usize,
    out: *mut *mut IlRankedList,
) -> IlStatus {
    guard(|| {
        let index = index.as_ref().ok_or_else(|| null("index"))?;
        let q = slice_arg(query, dimension, "query")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let qv = EmbeddingVector::normalized(q.to_vec())?;
        let ranked = retrieve(&index.inner, &qv, top_k)?;
        let list = IlRankedList {
            ids: ranked
                .entries
                .iter()
                .map(|e| CString::new(e.unit_id.as_str()).expect("unit ids have no nul"))
                .collect(),
            scores: ranked.entries.iter().map(|e| e.score).collect(),
        };
        *out = Box::into_raw(Box::new(list));
        Ok(())
    })
}

/// # Safety
/// `list` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn il_ranked_list_len(list: *const IlRankedList) -> usize {
    list.as_ref().map_or(0, |l| l.ids.len())
}

/// Entry `i`. The id pointer stays valid until the list is freed.
///
/// # Safety
/// `list` must be a live handle; out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn il_ranked_list_get(
    list: *const IlRankedList,
    i: usize,
    unit_id: *mut *const c_char,
    score: *mut f64,
) -> IlStatus {
    guard(|| {
        let list = list.as_ref().ok_or_else(|| null("list"))?;
        if i >= list.ids.len() {
            return Err(Fail(
                IlStatus::InvalidInput,
                format!("entry {i} out of range for {} entries", list.ids.len()),
            ));
        }
        write_out(unit_id, list.ids[i].as_ptr(), "unit_id")?;
        write_out(score, list.scores[i], "score")
    })
}

/// # Safety
/// `list` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn il_ranked_list_free(list: *mut IlRankedList) {
    if !list.is_null() {
        drop(Box::from_raw(list));
    }
}

/// Deterministic feature-hashing embedding into `out[0..dimension]`.
///
/// # Safety
/// `text` must be nul-terminated; `out` must hold `dimension` floats.
#[no_mangle]
pub unsafe extern "C" fn il_hash_embed(text: *const c_char, dimension: usize, seed: u64, out: *mut f32) -> IlStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let dst = slice_out(out, dimension, "out")?;
        let v = hash_embed(text, dimension, seed)?;
        dst.copy_from_slice(v.values());
        Ok(())
    })
}

/// InfoNCE over `n` queries, each with one positive and `m` negatives, all
/// row-major with `dim` columns: `queries` and `positives` are `n*dim`,
/// `negatives` is `n*m*dim`. Gradient outputs may be null; when given they
/// have the matching input's length.
///
/// # Safety
/// All non-null pointers must cover the lengths above.
#[no_mangle]
pub unsafe extern "C" fn il_info_nce(
    queries: *const f64,
    positives: *const f64,
    negatives: *const f64,
    n: usize,
    m: usize,
    dim: usize,
    temperature: f64,
    loss: *mut f64,
    grad_queries: *mut f64,
    grad_positives: *mut f64,
    grad_negatives: *mut f64,
) -> IlStatus {
    guard(|| {
        let q = slice_arg(queries, n * dim, "queries")?;
        let p = slice_arg(positives, n * dim, "positives")?;
        let ng = slice_arg(negatives, n * m * dim, "negatives")?;
        let rows = |s: &[f64]| -> Vec<Vec<f64>> { s.chunks(dim.max(1)).map(<[f64]>::to_vec).collect() };
        let batch = ContrastiveBatch {
            queries: rows(q),
            positives: rows(p),
            negatives: (0..n).map(|i| rows(&ng[i * m * dim..(i + 1) * m * dim])).collect(),
        };
        let (l, g) = info_nce_loss_and_grad(&batch, temperature)?;
        write_out(loss, l, "loss")?;
        if !grad_queries.is_null() {
            slice_out(grad_queries, n * dim, "grad_queries")?.copy_from_slice(&g.queries.concat());
        }
        if !grad_positives.is_null() {
            slice_out(grad_positives, n * dim, "grad_positives")?.copy_from_slice(&g.positives.concat());
        }
        if !grad_negatives.is_null() {
            let flat: Vec<f64> = g.negatives.into_iter().flatten().flatten().collect();
            slice_out(grad_negatives, n * m * dim, "grad_negatives")?.copy_from_slice(&flat);
        }
        Ok(())
    })
}

/// Cross-entropy of the first generated identifier; `target` is 1-based.
///
/// # Safety
/// `logits` must point to `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn il_first_token_loss(logits: *const f64, n: usize, target: usize, out: *mut f64) -> IlStatus {
    guard(|| {
        let l = slice_arg(logits, n, "logits")?;
        write_out(out, first_token_loss(l, target)?, "out")
    })
}

/// Repairs model output into a permutation of `1..=window_len`, written to
/// `out`, which must hold at least `window_len` entries.
///
/// # Safety
/// `text` must be nul-terminated; `out` must hold `out_len` entries.
#[no_mangle]
pub unsafe extern "C" fn il_parse_permutation(
    text: *const c_char,
    window_len: usize,
    out: *mut usize,
    out_len: usize,
) -> IlStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        if out_len < window_len {
            return Err(Fail(
                IlStatus::BufferTooSmall,
                format!("output holds {out_len} entries, need {window_len}"),
            ));
        }
        let perm = parse_permutation(text, window_len);
        slice_out(out, window_len, "out")?.copy_from_slice(&perm.order);
        Ok(())
    })
}

/// Unigram overlap of `a` against `b`. Any out pointer may be null.
///
/// # Safety
/// Strings must be nul-terminated; non-null outs must be writable.
#[no_mangle]
pub unsafe extern "C" fn il_rouge1(
    a: *const c_char,
    b: *const c_char,
    precision: *mut f64,
    recall: *mut f64,
    f1: *mut f64,
) -> IlStatus {
    guard(|| {
        let s = rouge1_scores(str_arg(a, "a")?, str_arg(b, "b")?)?;
        for (p, v) in [(precision, s.precision), (recall, s.recall), (f1, s.f1)] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Extracts the `.py` function inventory of a checkout as a JSON array.
/// Free the result with [`il_string_free`].
///
/// # Safety
/// Strings must be nul-terminated; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn il_extract_units_json(
    root: *const c_char,
    repo_id: *const c_char,
    commit_ref: *const c_char,
    out_json: *mut *mut c_char,
) -> IlStatus {
    guard(|| {
        let snap = RepoSnapshot::new(
            str_arg(repo_id, "repo_id")?,
            str_arg(root, "root")?,
            str_arg(commit_ref, "commit_ref")?,
        )?;
        if out_json.is_null() {
            return Err(null("out_json"));
        }
        let ex = extract_units(&snap, &[DEFAULT_EXTENSION])?;
        let json = serde_json::to_string(&ex.units).expect("units serialize");
        *out_json = CString::new(json).expect("json has no nul").into_raw();
        Ok(())
    })
}
