//! C ABI over the `hcoh` crate.
//!
//! Every fallible function returns an [`HcohStatus`]. On failure a
//! human-readable message is kept per thread and can be fetched with
//! [`hcoh_last_error_message`]. Handles are opaque and must be released
//! with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use hcoh::codec::{hamming_words, words_for};
use hcoh::seed::SeedSet;
use hcoh::{
    checkpoint, BinaryCodeSet, Error, GradientFactor, HashModel, OnlineHasher, TargetCoder,
    TrainBatch,
};

/// Result codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HcohStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    CodebookExhausted = 4,
    NumericFailure = 5,
    Io = 6,
    Format = 7,
    Panic = 8,
}

impl From<&Error> for HcohStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidArgument(_) | Error::InvalidOrder(_) | Error::UnknownLabel(_) | Error::UndefinedAp => {
                HcohStatus::InvalidArgument
            }
            Error::DimensionMismatch { .. } | Error::CountMismatch { .. } => HcohStatus::DimensionMismatch,
            Error::CodebookExhausted { .. } => HcohStatus::CodebookExhausted,
            Error::NumericFailure { .. } | Error::NonFiniteFeature { .. } => HcohStatus::NumericFailure,
            Error::Io { .. } => HcohStatus::Io,
            Error::BadMagic { .. } | Error::BadHeader { .. } | Error::Truncated { .. } => HcohStatus::Format,
        }
    }
}

/// Opaque online hasher: model, codebook and reducer.
pub struct HcohHasher {
    inner: OnlineHasher,
}

/// Opaque set of packed binary codes with labels.
pub struct HcohCodeSet {
    inner: BinaryCodeSet,
}

/// Retrieval metrics. `map_at_k` is NaN when no cutoff was requested.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct HcohEvalSummary {
    pub map: f64,
    pub map_at_k: f64,
    pub precision_at_k: f64,
    pub n_queries: usize,
    pub n_database: usize,
    pub skipped_queries: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn fail(status: HcohStatus, msg: impl Into<String>) -> HcohStatus {
    set_error(msg.into());
    status
}

fn guard(f: impl FnOnce() -> Result<(), HcohStatus>) -> HcohStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HcohStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => fail(HcohStatus::Panic, "internal panic"),
    }
}

fn check(e: Error) -> HcohStatus {
    let status = HcohStatus::from(&e);
    fail(status, e.to_string())
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), HcohStatus> {
    if p.is_null() {
        Err(fail(HcohStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

/// # Safety
/// `p` must be null (only when `len == 0`) or valid for `len` reads.
unsafe fn slice_in<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], HcohStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, name)?;
    Ok(unsafe { slice::from_raw_parts(p, len) })
}

unsafe fn path_in<'a>(p: *const c_char) -> Result<&'a Path, HcohStatus> {
    non_null(p, "path")?;
    let s = unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| fail(HcohStatus::InvalidArgument, "path is not valid UTF-8"))?;
    Ok(Path::new(s))
}

/// Message for the most recent failure on this thread, or null if none.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hcoh_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn hcoh_status_string(status: HcohStatus) -> *const c_char {
    let s: &'static CStr = match status {
        HcohStatus::Ok => c"ok",
        HcohStatus::NullPointer => c"null pointer",
        HcohStatus::InvalidArgument => c"invalid argument",
        HcohStatus::DimensionMismatch => c"dimension mismatch",
        HcohStatus::CodebookExhausted => c"codebook exhausted",
        HcohStatus::NumericFailure => c"numeric failure",
        HcohStatus::Io => c"i/o error",
        HcohStatus::Format => c"malformed file",
        HcohStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}

/// Number of 64-bit words used to store one code of `bits` bits.
#[no_mangle]
pub extern "C" fn hcoh_words_per_code(bits: usize) -> usize {
    words_for(bits)
}

/// Hamming distance between two packed codes of `bits` bits.
///
/// # Safety
/// `a` and `b` must each point to `hcoh_words_per_code(bits)` words.
#[no_mangle]
pub unsafe extern "C" fn hcoh_hamming(a: *const u64, b: *const u64, bits: usize) -> u32 {
    let n = words_for(bits);
    if n == 0 || a.is_null() || b.is_null() {
        return 0;
    }
    let (a, b) = unsafe { (slice::from_raw_parts(a, n), slice::from_raw_parts(b, n)) };
    hamming_words(a, b)
}

/// Creates a fresh hasher. All random state is derived from `seed`.
/// `sigmoid_gradient` selects the `(1 - h) h` gradient factor instead of the
/// tanh derivative.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn hcoh_hasher_new(
    feature_dim: usize,
    bits: usize,
    eta: f64,
    max_labels: usize,
    seed: u64,
    sigmoid_gradient: bool,
    out: *mut *mut HcohHasher,
) -> HcohStatus {
    guard(|| {
        non_null(out, "out")?;
        let seeds = SeedSet::from_master(seed);
        let factor = if sigmoid_gradient { GradientFactor::SigmoidForm } else { GradientFactor::TanhDerivative };
        let model = HashModel::init(feature_dim, bits, eta, seeds.model).map_err(check)?.with_gradient_factor(factor);
        let coder = TargetCoder::for_bits(bits, max_labels, seeds.codebook, seeds.reducer).map_err(check)?;
        let inner = OnlineHasher::new(model, coder).map_err(check)?;
        unsafe { *out = Box::into_raw(Box::new(HcohHasher { inner })) };
        Ok(())
    })
}

/// Releases a hasher. Null is ignored.
///
/// # Safety
/// `h` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hcoh_hasher_free(h: *mut HcohHasher) {
    if !h.is_null() {
        drop(unsafe { Box::from_raw(h) });
    }
}

/// Loads a hasher from a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hcoh_hasher_load(path: *const c_char, out: *mut *mut HcohHasher) -> HcohStatus {
    guard(|| {
        non_null(out, "out")?;
        let path = unsafe { path_in(path) }?;
        let inner = checkpoint::load(path).map_err(check)?;
        unsafe { *out = Box::into_raw(Box::new(HcohHasher { inner })) };
        Ok(())
    })
}

/// Writes a checkpoint atomically.
///
/// # Safety
/// `h` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn hcoh_hasher_save(h: *const HcohHasher, path: *const c_char) -> HcohStatus {
    guard(|| {
        non_null(h, "hasher")?;
        let path = unsafe { path_in(path) }?;
        checkpoint::save(unsafe { &(*h).inner }, path).map_err(check)
    })
}

/// One SGD step on a batch of `n` row-major instances.
///
/// # Safety
/// `features` must hold `n * feature_dim` values and `labels` `n` values.
#[no_mangle]
pub unsafe extern "C" fn hcoh_hasher_train(
    h: *mut HcohHasher,
    features: *const f64,
    labels: *const u32,
    n: usize,
) -> HcohStatus {
    guard(|| {
        non_null(h, "hasher")?;
        let h = unsafe { &mut (*h).inner };
        let d = h.model().feature_dim();
        let x = unsafe { slice_in(features, n * d, "features") }?;
        let y = unsafe { slice_in(labels, n, "labels") }?;
        let batch = TrainBatch::new(d, x.to_vec(), y.to_vec()).map_err(check)?;
        h.step(&batch).map_err(check)
    })
}

/// Encodes `n` row-major instances into `out_words`, which must have room
/// for `n * hcoh_words_per_code(bits)` words (`out_len`).
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn hcoh_hasher_encode(
    h: *const HcohHasher,
    features: *const f64,
    n: usize,
    out_words: *mut u64,
    out_len: usize,
) -> HcohStatus {
    guard(|| {
        non_null(h, "hasher")?;
        let model = unsafe { (*h).inner.model() };
        let d = model.feature_dim();
        let need = n * words_for(model.code_length());
        if out_len < need {
            return Err(fail(
                HcohStatus::DimensionMismatch,
                format!("output buffer holds {out_len} words, need {need}"),
            ));
        }
        let x = unsafe { slice_in(features, n * d, "features") }?;
        let set = hcoh::encode(model, x, vec![0; n]).map_err(check)?;
        if need > 0 {
            non_null(out_words, "out_words")?;
            unsafe { slice::from_raw_parts_mut(out_words, need) }.copy_from_slice(set.words());
        }
        Ok(())
    })
}

/// Encodes `n` labelled instances into a new code set handle.
///
/// # Safety
/// Pointers must be valid for the stated lengths; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hcoh_hasher_encode_set(
    h: *const HcohHasher,
    features: *const f64,
    labels: *const u32,
    n: usize,
    out: *mut *mut HcohCodeSet,
) -> HcohStatus {
    guard(|| {
        non_null(h, "hasher")?;
        non_null(out, "out")?;
        let model = unsafe { (*h).inner.model() };
        let x = unsafe { slice_in(features, n * model.feature_dim(), "features") }?;
        let y = unsafe { slice_in(labels, n, "labels") }?;
        let inner = hcoh::encode(model, x, y.to_vec()).map_err(check)?;
        unsafe { *out = Box::into_raw(Box::new(HcohCodeSet { inner })) };
        Ok(())
    })
}

/// # Safety
/// `h` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hcoh_hasher_feature_dim(h: *const HcohHasher) -> usize {
    if h.is_null() { 0 } else { unsafe { (*h).inner.model().feature_dim() } }
}

/// # Safety
/// `h` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hcoh_hasher_bits(h: *const HcohHasher) -> usize {
    if h.is_null() { 0 } else { unsafe { (*h).inner.model().code_length() } }
}

/// Number of SGD steps taken so far.
///
/// # Safety
/// `h` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hcoh_hasher_round(h: *const HcohHasher) -> u64 {
    if h.is_null() { 0 } else { unsafe { (*h).inner.model().round() } }
}

/// Order of the Hadamard codebook backing the targets.
///
/// # Safety
/// `h` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hcoh_hasher_codeword_order(h: *const HcohHasher) -> usize {
    if h.is_null() { 0 } else { unsafe { (*h).inner.coder().codebook().order() } }
}

/// Builds a code set from packed words (`n * hcoh_words_per_code(bits)`)
/// and `n` labels. Padding bits past `bits` must be zero.
///
/// # Safety
/// Pointers must be valid for the stated lengths; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hcoh_codeset_new(
    bits: usize,
    words: *const u64,
    labels: *const u32,
    n: usize,
    out: *mut *mut HcohCodeSet,
) -> HcohStatus {
    guard(|| {
        non_null(out, "out")?;
        let w = unsafe { slice_in(words, n * words_for(bits), "words") }?;
        let y = unsafe { slice_in(labels, n, "labels") }?;
        let inner = BinaryCodeSet::new(bits, w.to_vec(), y.to_vec()).map_err(check)?;
        unsafe { *out = Box::into_raw(Box::new(HcohCodeSet { inner })) };
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hcoh_codeset_read(path: *const c_char, out: *mut *mut HcohCodeSet) -> HcohStatus {
    guard(|| {
        non_null(out, "out")?;
        let path = unsafe { path_in(path) }?;
        let inner = BinaryCodeSet::read(path).map_err(check)?;
        unsafe { *out = Box::into_raw(Box::new(HcohCodeSet { inner })) };
        Ok(())
    })
}

/// # Safety
/// `set` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn hcoh_codeset_write(set: *const HcohCodeSet, path: *const c_char) -> HcohStatus {
    guard(|| {
        non_null(set, "code set")?;
        let path = unsafe { path_in(path) }?;
        unsafe { &(*set).inner }.write(path).map_err(check)
    })
}

/// # Safety
/// `set` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hcoh_codeset_len(set: *const HcohCodeSet) -> usize {
    if set.is_null() { 0 } else { unsafe { (*set).inner.len() } }
}

/// # Safety
/// `set` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hcoh_codeset_bits(set: *const HcohCodeSet) -> usize {
    if set.is_null() { 0 } else { unsafe { (*set).inner.bits() } }
}

/// Pointer to the packed words of code `i`, or null when out of range.
/// Valid while the set is alive.
///
/// # Safety
/// `set` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hcoh_codeset_code(set: *const HcohCodeSet, i: usize) -> *const u64 {
    if set.is_null() {
        return ptr::null();
    }
    let set = unsafe { &(*set).inner };
    if i >= set.len() { ptr::null() } else { set.code_words(i).as_ptr() }
}

/// Releases a code set. Null is ignored.
///
/// # Safety
/// `set` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hcoh_codeset_free(set: *mut HcohCodeSet) {
    if !set.is_null() {
        drop(unsafe { Box::from_raw(set) });
    }
}

/// Hamming-ranking evaluation of `queries` against `database`.
/// `k_map == 0` means no mAP cutoff.
///
/// # Safety
/// Handles must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hcoh_evaluate(
    queries: *const HcohCodeSet,
    database: *const HcohCodeSet,
    k_prec: usize,
    k_map: usize,
    out: *mut HcohEvalSummary,
) -> HcohStatus {
    guard(|| {
        non_null(queries, "queries")?;
        non_null(database, "database")?;
        non_null(out, "out")?;
        let (q, db) = unsafe { (&(*queries).inner, &(*database).inner) };
        let k_map = (k_map > 0).then_some(k_map);
        let r = hcoh::evaluate(q, db, k_prec, k_map).map_err(check)?;
        unsafe {
            *out = HcohEvalSummary {
                map: r.map,
                map_at_k: r.map_at_k.unwrap_or(f64::NAN),
                precision_at_k: r.precision_at_k,
                n_queries: r.n_queries,
                n_database: r.n_database,
                skipped_queries: r.skipped_queries,
            }
        };
        Ok(())
    })
}
