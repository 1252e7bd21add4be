//! C ABI for the anytime TDP engine.
//!
//! Every entry point returns a [`TdpStatus`]. On failure a description is
//! kept per thread and can be read with [`tdp_last_error_message`].
//! Hypotheses are numbered from 1, as in the command-line tool.
//! Engines are opaque, owned by the caller, and must be released with
//! [`tdp_engine_free`]. An engine is not safe to share between threads
//! without external locking.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use anytime_tdp::closed_testing::{BoundRow, BoundTracker, DiscoverySet, SortedEValues};
use anytime_tdp::eprocess::{check_alpha, EProcessFamily, PriorSides, ProcessBank};
use anytime_tdp::Error;

/// Result codes shared by all functions.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TdpStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    NullPointer = 1,
    /// Malformed data: wrong lengths, negative e-values, bad indices.
    InputError = 2,
    /// Invalid parameters such as alpha outside (0, 1).
    ConfigError = 3,
    /// A numeric routine failed.
    NumericError = 4,
    /// Exhaustive closed testing was asked for more than 20 hypotheses.
    TooLarge = 5,
    /// The call does not fit the engine's mode or stage.
    InvalidState = 6,
    /// A Rust panic was caught at the boundary. This is a bug.
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TdpFamilyKind {
    GaussianLr = 0,
    TLr = 1,
    Mom = 2,
}

/// E-process family for observation input.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct TdpFamily {
    pub kind: TdpFamilyKind,
    /// Effect size for `GaussianLr` and `TLr`.
    pub delta: f64,
    /// Minimal relevant effect for `Mom`.
    pub delta_min: f64,
    /// Quadrature nodes for `Mom`; 0 selects the default of 64.
    pub quadrature_nodes: usize,
    /// Nonzero to mirror the moment prior onto negative effects.
    pub two_sided: u8,
}

/// Bound for one discovery set after the latest update.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TdpBound {
    pub time: u64,
    /// Upper bound on the number of true nulls in the set at this time.
    pub c_inst: usize,
    /// Running minimum of `c_inst`.
    pub c_ard: usize,
    pub tdp_inst: f64,
    pub tdp_ard: f64,
}

impl From<BoundRow> for TdpBound {
    fn from(r: BoundRow) -> Self {
        Self { time: r.time as u64, c_inst: r.c_inst, c_ard: r.c_ard, tdp_inst: r.tdp_inst, tdp_ard: r.tdp_ard }
    }
}

/// Streaming engine: per-hypothesis e-values plus bound trackers.
pub struct TdpEngine {
    m: usize,
    alpha: f64,
    bank: Option<ProcessBank>,
    trackers: Vec<BoundTracker>,
    latest: Vec<TdpBound>,
    e: Vec<f64>,
    time: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = CString::new(text).unwrap_or_default());
}

struct Failure(TdpStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Input(_) | Error::Io(_) => TdpStatus::InputError,
            Error::Config(_) => TdpStatus::ConfigError,
            Error::Numeric(_) => TdpStatus::NumericError,
            Error::TooLarge { .. } => TdpStatus::TooLarge,
        };
        Failure(status, e.to_string())
    }
}

fn fail<T>(status: TdpStatus, msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, msg.into()))
}

/// Runs `f`, recording any failure or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TdpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            TdpStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            set_error(format!("panic: {msg}"));
            TdpStatus::Panic
        }
    }
}

/// # Safety
/// `ptr` must be NULL or valid for `len` reads.
unsafe fn slice<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return fail(TdpStatus::NullPointer, format!("{what} is NULL"));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

/// # Safety
/// `ptr` must be NULL or valid for writes.
unsafe fn out<'a, T>(ptr: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    ptr.as_mut().map_or_else(|| fail(TdpStatus::NullPointer, format!("{what} is NULL")), Ok)
}

/// # Safety
/// `ptr` must be NULL or a live engine from [`tdp_engine_new`].
unsafe fn engine<'a>(ptr: *mut TdpEngine) -> Result<&'a mut TdpEngine, Failure> {
    out(ptr, "engine")
}

fn family_from_c(f: &TdpFamily) -> Result<EProcessFamily, Failure> {
    let mut family = match f.kind {
        TdpFamilyKind::GaussianLr => EProcessFamily::gaussian_lr(f.delta),
        TdpFamilyKind::TLr => EProcessFamily::t_lr(f.delta),
        TdpFamilyKind::Mom => EProcessFamily::mom(f.delta_min),
    };
    if f.quadrature_nodes != 0 {
        family.quadrature_nodes = f.quadrature_nodes;
    }
    if f.two_sided != 0 {
        family.prior = PriorSides::TwoSided;
    }
    family.validate()?;
    Ok(family)
}

/// Message for the most recent failure on this thread, or an empty string.
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn tdp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tdp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates an engine over `m` hypotheses at level `alpha`.
///
/// With `family` NULL the engine takes precomputed e-values through
/// [`tdp_engine_push_evalues`]; otherwise it builds e-processes from raw
/// observations pushed with [`tdp_engine_push_observations`].
///
/// # Safety
/// `family` must be NULL or point to a valid `TdpFamily`; `out_engine` must
/// be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tdp_engine_new(
    m: usize,
    alpha: f64,
    family: *const TdpFamily,
    out_engine: *mut *mut TdpEngine,
) -> TdpStatus {
    guard(|| {
        let slot = out(out_engine, "out_engine")?;
        *slot = ptr::null_mut();
        if m == 0 {
            return fail(TdpStatus::InputError, "m must be positive");
        }
        check_alpha(alpha)?;
        let bank = match family.as_ref() {
            Some(f) => Some(ProcessBank::new(family_from_c(f)?, m)?),
            None => None,
        };
        let engine = TdpEngine { m, alpha, bank, trackers: Vec::new(), latest: Vec::new(), e: vec![1.0; m], time: 0 };
        *slot = Box::into_raw(Box::new(engine));
        Ok(())
    })
}

/// Releases an engine. NULL is ignored.
///
/// # Safety
/// `engine` must be NULL or come from [`tdp_engine_new`] and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn tdp_engine_free(engine: *mut TdpEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Registers a discovery set (1-based indices) and returns its id through
/// `out_set_id`. Sets can only be added before the first update.
///
/// # Safety
/// `indices` must be valid for `len` reads and `out_set_id` for writes.
#[no_mangle]
pub unsafe extern "C" fn tdp_engine_add_set(
    engine: *mut TdpEngine,
    indices: *const usize,
    len: usize,
    out_set_id: *mut usize,
) -> TdpStatus {
    guard(|| {
        let eng = self::engine(engine)?;
        let id = out(out_set_id, "out_set_id")?;
        if eng.time > 0 {
            return fail(TdpStatus::InvalidState, "discovery sets must be added before the first update");
        }
        let indices = slice(indices, len, "indices")?.to_vec();
        let set = DiscoverySet::new(format!("set{}", eng.trackers.len()), indices)?;
        let size = set.len();
        eng.trackers.push(BoundTracker::new(set, eng.m, eng.alpha)?);
        eng.latest.push(TdpBound { time: 0, c_inst: size, c_ard: size, tdp_inst: 0.0, tdp_ard: 0.0 });
        *id = eng.trackers.len() - 1;
        Ok(())
    })
}

fn advance(eng: &mut TdpEngine, e: Vec<f64>) -> Result<(), Failure> {
    let time = eng.time + 1;
    let sorted = SortedEValues::new(&e)?;
    // Compute every row before committing so a failure leaves the engine untouched.
    let mut trackers = eng.trackers.clone();
    let rows = trackers
        .iter_mut()
        .map(|t| t.observe_sorted(time as usize, &sorted).map(TdpBound::from))
        .collect::<anytime_tdp::Result<Vec<_>>>()?;
    eng.trackers = trackers;
    eng.latest = rows;
    eng.e = e;
    eng.time = time;
    Ok(())
}

/// Feeds one subject's observations (`len` must equal `m`).
///
/// # Safety
/// `ys` must be valid for `len` reads.
#[no_mangle]
pub unsafe extern "C" fn tdp_engine_push_observations(engine: *mut TdpEngine, ys: *const f64, len: usize) -> TdpStatus {
    guard(|| {
        let eng = self::engine(engine)?;
        let ys = slice(ys, len, "ys")?;
        let Some(bank) = eng.bank.as_mut() else {
            return fail(TdpStatus::InvalidState, "engine was created for e-value input");
        };
        if ys.len() != eng.m {
            return fail(TdpStatus::InputError, format!("got {} observations, expected {}", ys.len(), eng.m));
        }
        let mut next = bank.clone();
        next.update(ys)?;
        let e = next.e_values();
        advance(eng, e)?;
        eng.bank = Some(next);
        Ok(())
    })
}

/// Feeds the next row of e-values (`len` must equal `m`).
///
/// # Safety
/// `e` must be valid for `len` reads.
#[no_mangle]
pub unsafe extern "C" fn tdp_engine_push_evalues(engine: *mut TdpEngine, e: *const f64, len: usize) -> TdpStatus {
    guard(|| {
        let eng = self::engine(engine)?;
        let e = slice(e, len, "e")?;
        if eng.bank.is_some() {
            return fail(TdpStatus::InvalidState, "engine was created for observation input");
        }
        if e.len() != eng.m {
            return fail(TdpStatus::InputError, format!("got {} e-values, expected {}", e.len(), eng.m));
        }
        if let Some(bad) = e.iter().find(|v| v.is_nan() || **v < 0.0) {
            return fail(TdpStatus::InputError, format!("e-values must be nonnegative, got {bad}"));
        }
        advance(eng, e.to_vec())
    })
}

/// Latest bound for a set. Before any update it is the trivial bound.
///
/// # Safety
/// `out_bound` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tdp_engine_bound(engine: *mut TdpEngine, set_id: usize, out_bound: *mut TdpBound) -> TdpStatus {
    guard(|| {
        let eng = self::engine(engine)?;
        let slot = out(out_bound, "out_bound")?;
        match eng.latest.get(set_id) {
            Some(b) => {
                *slot = *b;
                Ok(())
            }
            None => fail(TdpStatus::InputError, format!("no discovery set with id {set_id}")),
        }
    })
}

/// Current e-value of hypothesis `index` (1-based).
///
/// # Safety
/// `out_value` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tdp_engine_evalue(engine: *mut TdpEngine, index: usize, out_value: *mut f64) -> TdpStatus {
    guard(|| {
        let eng = self::engine(engine)?;
        let slot = out(out_value, "out_value")?;
        if index == 0 || index > eng.m {
            return fail(TdpStatus::InputError, format!("hypothesis index {index} outside 1..={}", eng.m));
        }
        *slot = eng.e[index - 1];
        Ok(())
    })
}

/// Number of updates absorbed so far.
///
/// # Safety
/// `out_time` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tdp_engine_time(engine: *mut TdpEngine, out_time: *mut u64) -> TdpStatus {
    guard(|| {
        let eng = self::engine(engine)?;
        *out(out_time, "out_time")? = eng.time;
        Ok(())
    })
}

/// Closed-testing bound on the number of true nulls in `r` via the
/// sort-and-scan shortcut, `O(m log m)`.
///
/// # Safety
/// `e` must be valid for `m` reads, `r` for `r_len` reads, `out_c` for writes.
#[no_mangle]
pub unsafe extern "C" fn tdp_shortcut_bound(
    e: *const f64,
    m: usize,
    r: *const usize,
    r_len: usize,
    alpha: f64,
    out_c: *mut usize,
) -> TdpStatus {
    guard(|| {
        let slot = out(out_c, "out_c")?;
        let set = DiscoverySet::new("R", slice(r, r_len, "r")?.to_vec())?;
        let (c, _) = anytime_tdp::shortcut_bound(slice(e, m, "e")?, &set, alpha)?;
        *slot = c;
        Ok(())
    })
}

/// Same bound by exhaustive closed testing; limited to `m <= 20`.
///
/// # Safety
/// As for [`tdp_shortcut_bound`].
#[no_mangle]
pub unsafe extern "C" fn tdp_brute_force_bound(
    e: *const f64,
    m: usize,
    r: *const usize,
    r_len: usize,
    alpha: f64,
    out_c: *mut usize,
) -> TdpStatus {
    guard(|| {
        let slot = out(out_c, "out_c")?;
        let set = DiscoverySet::new("R", slice(r, r_len, "r")?.to_vec())?;
        *slot = anytime_tdp::brute_force_bound(slice(e, m, "e")?, &set, alpha)?;
        Ok(())
    })
}

/// Converts one e-process path into its p-process, writing `len` values.
///
/// # Safety
/// `e` must be valid for `len` reads and `out_p` for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn tdp_e_to_p(e: *const f64, len: usize, out_p: *mut f64) -> TdpStatus {
    guard(|| {
        let p = anytime_tdp::e_to_p_process(slice(e, len, "e")?)?;
        if len == 0 {
            return Ok(());
        }
        if out_p.is_null() {
            return fail(TdpStatus::NullPointer, "out_p is NULL");
        }
        std::slice::from_raw_parts_mut(out_p, len).copy_from_slice(&p.values);
        Ok(())
    })
}

/// t likelihood ratio at statistic `t` from `n_t` observations with
/// `lambda` degrees of freedom, against effect size `delta`.
///
/// # Safety
/// `out_value` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tdp_t_lr(t: f64, n_t: u64, lambda: u64, delta: f64, out_value: *mut f64) -> TdpStatus {
    guard(|| {
        let slot = out(out_value, "out_value")?;
        *slot = anytime_tdp::eprocess::t_lr(t, n_t, lambda, delta)?;
        Ok(())
    })
}
