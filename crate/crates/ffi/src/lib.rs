//! C ABI over the scoring and selection engine.
//!
//! Objects cross the boundary as opaque handles that the caller releases
//! with the matching `sp_*_free`. Every fallible call returns an
//! [`SpStatus`]; on failure, [`sp_last_error_message`] describes the error
//! for the calling thread. Status values equal the CLI exit codes.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use libc::size_t;
use semiprune::dynamics::{self, LabelPool, TrajectoryLog};
use semiprune::scoring::{self, Metric, ScoreSpec, ScoreTable};
use semiprune::selection::{self, SelectionMethod, SelectionPlan, SelectorConfig};
use semiprune::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidString = 2,
    Io = 3,
    Format = 4,
    Invariant = 5,
    Dimension = 6,
    Domain = 7,
    Degenerate = 8,
    Config = 9,
    /// The engine panicked; this is a bug.
    Panic = 10,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpMetric {
    Aum = 0,
    Dual = 1,
    Forgetting = 2,
    El2n = 3,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpMethod {
    DoubleEnd = 0,
    Beta = 1,
    TopK = 2,
    BottomK = 3,
    Random = 4,
}

/// Opaque trajectory log.
pub struct SpLog(TrajectoryLog);
/// Opaque label pool.
pub struct SpPool(LabelPool);
/// Opaque score table.
pub struct SpScores(ScoreTable);
/// Opaque selection plan.
pub struct SpPlan(SelectionPlan);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SpStatus {
    match e.exit_code() {
        3 => SpStatus::Io,
        4 => SpStatus::Format,
        5 => SpStatus::Invariant,
        6 => SpStatus::Dimension,
        7 => SpStatus::Domain,
        8 => SpStatus::Degenerate,
        _ => SpStatus::Config,
    }
}

enum Fail {
    Null(&'static str),
    Utf8,
    Engine(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Engine(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SpStatus::Ok
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            SpStatus::NullArgument
        }
        Ok(Err(Fail::Utf8)) => {
            set_error("string argument is not valid UTF-8".into());
            SpStatus::InvalidString
        }
        Ok(Err(Fail::Engine(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            SpStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null("path"));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail::Utf8)
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn put<T>(out: *mut *mut T, v: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null("out"));
    }
    *out = Box::into_raw(Box::new(v));
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message of the last failed call on this thread, or null after a
/// success. Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn sp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Reads a `TRJ1` file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sp_log_read(path: *const c_char, out: *mut *mut SpLog) -> SpStatus {
    guard(|| put(out, SpLog(dynamics::read_log(path_arg(path)?)?)))
}

/// Builds a log from `n * t * c` probabilities in example, epoch, class
/// order. Epoch ids are `1..=t`.
///
/// # Safety
/// `probs` must point to `n * t * c` floats; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sp_log_new(
    n: size_t,
    t: size_t,
    c: size_t,
    probs: *const f32,
    out: *mut *mut SpLog,
) -> SpStatus {
    guard(|| {
        let len = n
            .checked_mul(t)
            .and_then(|x| x.checked_mul(c))
            .ok_or(Fail::Engine(Error::Domain("log size overflows".into())))?;
        let p = slice_arg(probs, len, "probs")?;
        let ids = (1..=t as u32).collect();
        put(out, SpLog(TrajectoryLog::new(n, t, c, p.to_vec(), ids, "ffi")?))
    })
}

/// Writes a log in `TRJ1` format.
///
/// # Safety
/// `log` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sp_log_write(log: *const SpLog, path: *const c_char) -> SpStatus {
    guard(|| {
        let log = borrow(log, "log")?;
        dynamics::write_log(&log.0, path_arg(path)?)?;
        Ok(())
    })
}

/// Number of examples, epochs and classes. Any out pointer may be null.
///
/// # Safety
/// `log` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sp_log_dims(log: *const SpLog, n: *mut size_t, t: *mut size_t, c: *mut size_t) -> SpStatus {
    guard(|| {
        let log = &borrow(log, "log")?.0;
        for (p, v) in [(n, log.n_examples()), (t, log.n_epochs()), (c, log.n_classes())] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `log` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sp_log_free(log: *mut SpLog) {
    free(log)
}

/// Pool from per-example labels. `is_ground_truth` may be null (no
/// example is marked as ground truth).
///
/// # Safety
/// `labels` must point to `n` values and `is_ground_truth`, when non-null,
/// to `n` bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sp_pool_new(
    labels: *const u32,
    is_ground_truth: *const u8,
    n: size_t,
    n_classes: size_t,
    out: *mut *mut SpPool,
) -> SpStatus {
    guard(|| {
        let labels: Vec<usize> = slice_arg(labels, n, "labels")?.iter().map(|&l| l as usize).collect();
        let flags = if is_ground_truth.is_null() {
            vec![false; n]
        } else {
            slice_arg(is_ground_truth, n, "is_ground_truth")?.iter().map(|&b| b != 0).collect()
        };
        put(out, SpPool(LabelPool::new(labels, flags, None, n_classes)?))
    })
}

/// Pool stored in the log's label section.
///
/// # Safety
/// `log` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sp_pool_from_log(log: *const SpLog, out: *mut *mut SpPool) -> SpStatus {
    guard(|| {
        let pool = borrow(log, "log")?
            .0
            .label_pool()?
            .ok_or(Fail::Engine(Error::Format("log has no label section".into())))?;
        put(out, SpPool(pool))
    })
}

/// # Safety
/// `pool` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sp_pool_free(pool: *mut SpPool) {
    free(pool)
}

/// Scores every example. `window` and `gamma` apply to DUAL, `n_early` to
/// EL2N; other metrics ignore them.
///
/// # Safety
/// `log` and `pool` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sp_score(
    log: *const SpLog,
    pool: *const SpPool,
    metric: SpMetric,
    window: size_t,
    gamma: f64,
    n_early: size_t,
    out: *mut *mut SpScores,
) -> SpStatus {
    guard(|| {
        let log = &borrow(log, "log")?.0;
        let pool = &borrow(pool, "pool")?.0;
        let metric = match metric {
            SpMetric::Aum => Metric::Aum,
            SpMetric::Dual => Metric::Dual,
            SpMetric::Forgetting => Metric::Forgetting,
            SpMetric::El2n => Metric::El2n,
        };
        put(out, SpScores(scoring::compute(log, pool, &ScoreSpec { metric, window, gamma, n_early })?))
    })
}

/// # Safety
/// `scores` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sp_scores_len(scores: *const SpScores) -> size_t {
    scores.as_ref().map_or(0, |s| s.0.len())
}

/// Copies scores and prediction means into caller buffers of length `len`
/// (which must equal the table length). Either buffer may be null.
///
/// # Safety
/// `scores` must be a live handle; non-null buffers must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sp_scores_copy(
    scores: *const SpScores,
    out_scores: *mut f64,
    out_pred_mean: *mut f64,
    len: size_t,
) -> SpStatus {
    guard(|| {
        let t = &borrow(scores, "scores")?.0;
        if len != t.len() {
            return Err(Error::Dimension(format!("buffer length {len}, table length {}", t.len())).into());
        }
        if !out_scores.is_null() {
            ptr::copy_nonoverlapping(t.scores.as_ptr(), out_scores, len);
        }
        if !out_pred_mean.is_null() {
            ptr::copy_nonoverlapping(t.pred_mean.as_ptr(), out_pred_mean, len);
        }
        Ok(())
    })
}

/// # Safety
/// `scores` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sp_scores_free(scores: *mut SpScores) {
    free(scores)
}

/// Selects a coreset keeping `round(n * (1 - r))` examples. `cutoff`
/// applies to double-end; `concentration`, `c_d` and `q` to Beta sampling;
/// `seed` to Beta and random.
///
/// # Safety
/// `scores` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sp_select(
    scores: *const SpScores,
    method: SpMethod,
    r: f64,
    cutoff: f64,
    concentration: f64,
    c_d: f64,
    q: f64,
    seed: u64,
    out: *mut *mut SpPlan,
) -> SpStatus {
    guard(|| {
        let t = &borrow(scores, "scores")?.0;
        let method = match method {
            SpMethod::DoubleEnd => SelectionMethod::DoubleEnd,
            SpMethod::Beta => SelectionMethod::Beta,
            SpMethod::TopK => SelectionMethod::TopK,
            SpMethod::BottomK => SelectionMethod::BottomK,
            SpMethod::Random => SelectionMethod::Random,
        };
        let cfg = SelectorConfig { method, cutoff_ratio: cutoff, concentration, c_d, mu_fraction: q };
        put(out, SpPlan(selection::select(t, r, &cfg, seed)?))
    })
}

/// # Safety
/// `plan` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sp_plan_len(plan: *const SpPlan) -> size_t {
    plan.as_ref().map_or(0, |p| p.0.selected.len())
}

/// Copies the ascending selected indices into a buffer of length `len`
/// (which must equal the plan length).
///
/// # Safety
/// `plan` must be a live handle; `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn sp_plan_indices(plan: *const SpPlan, out: *mut u64, len: size_t) -> SpStatus {
    guard(|| {
        let p = &borrow(plan, "plan")?.0;
        if len != p.selected.len() {
            return Err(Error::Dimension(format!("buffer length {len}, plan length {}", p.selected.len())).into());
        }
        if out.is_null() && len > 0 {
            return Err(Fail::Null("out"));
        }
        for (k, &i) in p.selected.iter().enumerate() {
            *out.add(k) = i as u64;
        }
        Ok(())
    })
}

/// Writes the plan in the engine's text format.
///
/// # Safety
/// `plan` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sp_plan_write(plan: *const SpPlan, path: *const c_char) -> SpStatus {
    guard(|| {
        let p = borrow(plan, "plan")?;
        selection::write_plan(&p.0, path_arg(path)?)?;
        Ok(())
    })
}

/// # Safety
/// `plan` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sp_plan_free(plan: *mut SpPlan) {
    free(plan)
}

/// Beta sampler shape at ratio `r`.
///
/// # Safety
/// `alpha` and `beta` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sp_beta_params(
    r: f64,
    mu_d: f64,
    concentration: f64,
    c_d: f64,
    alpha: *mut f64,
    beta: *mut f64,
) -> SpStatus {
    guard(|| {
        if alpha.is_null() || beta.is_null() {
            return Err(Fail::Null("alpha/beta"));
        }
        let bp = selection::beta_params(r, mu_d, concentration, c_d)?;
        *alpha = bp.alpha_r;
        *beta = bp.beta_r;
        Ok(())
    })
}
