//! C ABI over a trained SHARE checkpoint.
//!
//! Every fallible call returns a [`ShareStatus`]; on failure
//! [`share_last_error`] holds a message for the calling thread. Handles are
//! opaque and must be released with [`share_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use share_core::checkpoint::Checkpoint;
use share_core::error::ModelError;
use share_core::model::{predict_topk, session_logits};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShareStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    BadCheckpoint = 4,
    UnknownItem = 5,
    OutOfRange = 6,
    InvalidArgument = 7,
    BufferTooSmall = 8,
    Numerical = 9,
    Panic = 10,
}

/// A loaded model with its vocabulary.
pub struct ShareModel {
    checkpoint: Checkpoint,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    let c = CString::new(msg).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(status: ShareStatus, msg: impl Into<String>) -> ShareStatus {
    set_error(msg);
    status
}

fn model_status(e: &ModelError) -> ShareStatus {
    match e {
        ModelError::Io { .. } => ShareStatus::Io,
        ModelError::Checkpoint(_) => ShareStatus::BadCheckpoint,
        ModelError::ItemOutOfRange { .. } => ShareStatus::OutOfRange,
        ModelError::EmptySequence | ModelError::InvalidConfig(_) | ModelError::WindowTooSmall(_) => {
            ShareStatus::InvalidArgument
        }
        _ => ShareStatus::Numerical,
    }
}

fn guard(f: impl FnOnce() -> ShareStatus) -> ShareStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(ShareStatus::Panic, "panic inside share-ffi"))
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, ShareStatus> {
    if s.is_null() {
        return Err(fail(ShareStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(ShareStatus::InvalidUtf8, "argument is not valid UTF-8"))
}

unsafe fn model_ref<'a>(model: *const ShareModel) -> Result<&'a ShareModel, ShareStatus> {
    model
        .as_ref()
        .ok_or_else(|| fail(ShareStatus::NullPointer, "null model handle"))
}

unsafe fn items_slice<'a>(items: *const usize, len: usize) -> Result<&'a [usize], ShareStatus> {
    if len == 0 {
        return Err(fail(ShareStatus::InvalidArgument, "empty item sequence"));
    }
    if items.is_null() {
        return Err(fail(ShareStatus::NullPointer, "null item array"));
    }
    Ok(std::slice::from_raw_parts(items, len))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn share_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failure on this thread. The pointer stays valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn share_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads a checkpoint file into a new handle written to `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn share_model_load(path: *const c_char, out: *mut *mut ShareModel) -> ShareStatus {
    guard(|| {
        if out.is_null() {
            return fail(ShareStatus::NullPointer, "null output pointer");
        }
        *out = ptr::null_mut();
        let path = match read_str(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match Checkpoint::load(Path::new(path)) {
            Ok(checkpoint) => {
                *out = Box::into_raw(Box::new(ShareModel { checkpoint }));
                ShareStatus::Ok
            }
            Err(e) => fail(model_status(&e), e.to_string()),
        }
    })
}

/// Releases a handle. Null is accepted.
///
/// # Safety
/// `model` must come from [`share_model_load`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn share_model_free(model: *mut ShareModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of items in the model's vocabulary (0 for a null handle).
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn share_model_num_items(model: *const ShareModel) -> usize {
    model.as_ref().map_or(0, |m| m.checkpoint.vocabulary.len())
}

/// Embedding dimension (0 for a null handle).
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn share_model_embed_dim(model: *const ShareModel) -> usize {
    model.as_ref().map_or(0, |m| m.checkpoint.config.embed_dim)
}

/// Looks up the index of an item key.
///
/// # Safety
/// `model` must be a live handle, `key` NUL-terminated, `out_index` valid.
#[no_mangle]
pub unsafe extern "C" fn share_model_index_of(
    model: *const ShareModel,
    key: *const c_char,
    out_index: *mut usize,
) -> ShareStatus {
    guard(|| {
        let (m, key) = match (model_ref(model), read_str(key)) {
            (Ok(m), Ok(k)) => (m, k),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        if out_index.is_null() {
            return fail(ShareStatus::NullPointer, "null output pointer");
        }
        match m.checkpoint.vocabulary.index_of(key) {
            Some(i) => {
                *out_index = i;
                ShareStatus::Ok
            }
            None => fail(ShareStatus::UnknownItem, format!("unknown item key `{key}`")),
        }
    })
}

/// Copies the key of item `index` into `buf` with a trailing NUL. The key
/// length without the NUL is always written to `*out_len` (when non-null),
/// so a call with `buf_len = 0` sizes the buffer.
///
/// # Safety
/// `buf` must hold `buf_len` bytes (or be null when `buf_len` is 0).
#[no_mangle]
pub unsafe extern "C" fn share_model_item_key(
    model: *const ShareModel,
    index: usize,
    buf: *mut c_char,
    buf_len: usize,
    out_len: *mut usize,
) -> ShareStatus {
    guard(|| {
        let m = match model_ref(model) {
            Ok(m) => m,
            Err(s) => return s,
        };
        let Some(key) = m.checkpoint.vocabulary.key(index) else {
            return fail(
                ShareStatus::OutOfRange,
                format!("item index {index} out of range for {} items", m.checkpoint.vocabulary.len()),
            );
        };
        if !out_len.is_null() {
            *out_len = key.len();
        }
        if buf_len < key.len() + 1 {
            return fail(ShareStatus::BufferTooSmall, format!("key needs {} bytes", key.len() + 1));
        }
        if buf.is_null() {
            return fail(ShareStatus::NullPointer, "null buffer");
        }
        ptr::copy_nonoverlapping(key.as_ptr(), buf.cast::<u8>(), key.len());
        *buf.add(key.len()) = 0;
        ShareStatus::Ok
    })
}

/// Ranks all items for the session `items[0..len]` (indices, click order)
/// and writes the best `k` to `out_items`/`out_scores`, which must hold
/// `k` entries. `*out_count` receives `min(k, num_items)`.
///
/// # Safety
/// All pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn share_model_predict_topk(
    model: *const ShareModel,
    items: *const usize,
    len: usize,
    k: usize,
    out_items: *mut usize,
    out_scores: *mut f64,
    out_count: *mut usize,
) -> ShareStatus {
    guard(|| {
        let (m, seq) = match (model_ref(model), items_slice(items, len)) {
            (Ok(m), Ok(s)) => (m, s),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        if k > 0 && (out_items.is_null() || out_scores.is_null()) {
            return fail(ShareStatus::NullPointer, "null output array");
        }
        let ck = &m.checkpoint;
        match predict_topk(&ck.params, seq, ck.config.max_window, k) {
            Ok(top) => {
                for (i, (item, score)) in top.iter().enumerate() {
                    *out_items.add(i) = *item;
                    *out_scores.add(i) = *score;
                }
                if !out_count.is_null() {
                    *out_count = top.len();
                }
                ShareStatus::Ok
            }
            Err(e) => fail(model_status(&e), e.to_string()),
        }
    })
}

/// Writes the logit of every item for the session into `out_scores`, which
/// must hold `out_len >= num_items` entries.
///
/// # Safety
/// All pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn share_model_scores(
    model: *const ShareModel,
    items: *const usize,
    len: usize,
    out_scores: *mut f64,
    out_len: usize,
) -> ShareStatus {
    guard(|| {
        let (m, seq) = match (model_ref(model), items_slice(items, len)) {
            (Ok(m), Ok(s)) => (m, s),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        let ck = &m.checkpoint;
        let n = ck.vocabulary.len();
        if out_len < n {
            return fail(ShareStatus::BufferTooSmall, format!("scores need {n} entries"));
        }
        if out_scores.is_null() {
            return fail(ShareStatus::NullPointer, "null output array");
        }
        match session_logits(&ck.params, seq, ck.config.max_window) {
            Ok(logits) => {
                ptr::copy_nonoverlapping(logits.as_ptr(), out_scores, n);
                ShareStatus::Ok
            }
            Err(e) => fail(model_status(&e), e.to_string()),
        }
    })
}
