//! C interface to `tumor_branching`.
//!
//! Models are opaque handles created by `tb_model_*` constructors and
//! released with `tb_model_free`. Every fallible call returns a `TbStatus`;
//! on failure `tb_last_error_message` describes the error for the calling
//! thread. Output arrays are caller-allocated with explicit lengths.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use tumor_branching::chain::{build_gompertz_bd, build_sparse_rates};
use tumor_branching::config::ExperimentConfig;
use tumor_branching::simulator::{run_ensemble, Outcome, RunConfig};
use tumor_branching::spectral::{perron_triple, MatrixKind};
use tumor_branching::{Beta, BranchingModel, Error, TailPolicy};

/// Status codes; the numeric values match the command-line exit codes
/// where the two overlap.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TbStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Numerics = 3,
    InvalidArgument = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TbTailPolicy {
    Kill = 0,
    Reflect = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TbMatrix {
    Q = 0,
    A = 1,
    AShift = 2,
    Skeleton = 3,
}

/// Opaque model handle.
pub struct TbModel {
    inner: BranchingModel,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TbKappa0 {
    pub green: f64,
    pub quadrature: f64,
    pub quadrature_error: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TbSurvival {
    pub replicas: usize,
    pub extinct: usize,
    pub censored: usize,
    /// Mean population size at the horizon over all replicas.
    pub mean_total: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: TbStatus, msg: impl Into<String>) -> TbStatus {
    set_error(msg.into());
    status
}

fn from_error(e: Error) -> TbStatus {
    let status = match e {
        Error::Config(_) | Error::Parse { .. } | Error::Io(_) => TbStatus::Config,
        Error::InvalidParameter(_) | Error::DimensionMismatch { .. } => TbStatus::InvalidArgument,
        _ => TbStatus::Numerics,
    };
    fail(status, e.to_string())
}

fn guard<F: FnOnce() -> TbStatus>(f: F) -> TbStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(TbStatus::Panic, format!("internal panic: {msg}"))
        }
    }
}

unsafe fn model_ref<'a>(m: *const TbModel) -> Option<&'a BranchingModel> {
    m.as_ref().map(|m| &m.inner)
}

unsafe fn out_slice<'a>(ptr: *mut f64, len: usize, need: usize) -> Result<&'a mut [f64], TbStatus> {
    if ptr.is_null() {
        return Err(fail(TbStatus::NullPointer, "output buffer is null"));
    }
    if len < need {
        return Err(fail(
            TbStatus::BufferTooSmall,
            format!("buffer holds {len}, need {need}"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, need))
}

fn publish(model: BranchingModel, out: *mut *mut TbModel) -> TbStatus {
    let boxed = Box::new(TbModel { inner: model });
    unsafe { *out = Box::into_raw(boxed) };
    TbStatus::Ok
}

fn tail(p: u32) -> Option<TailPolicy> {
    match p {
        x if x == TbTailPolicy::Kill as u32 => Some(TailPolicy::Kill),
        x if x == TbTailPolicy::Reflect as u32 => Some(TailPolicy::Reflect),
        _ => None,
    }
}

fn matrix_kind(m: u32) -> Option<MatrixKind> {
    [
        (TbMatrix::Q, MatrixKind::Q),
        (TbMatrix::A, MatrixKind::A),
        (TbMatrix::AShift, MatrixKind::AShift),
        (TbMatrix::Skeleton, MatrixKind::Skeleton),
    ]
    .into_iter()
    .find(|(t, _)| *t as u32 == m)
    .map(|(_, k)| k)
}

/// Gompertz chain truncated at `k` with `β(x) = kappa · min(x, x_cap)^r`.
/// A non-positive `x_cap` means no cap; `tail_policy` is a `TbTailPolicy`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn tb_model_gompertz(
    a: f64,
    n: f64,
    k: usize,
    tail_policy: u32,
    kappa: f64,
    r: f64,
    x_cap: f64,
    out: *mut *mut TbModel,
) -> TbStatus {
    guard(|| {
        if out.is_null() {
            return fail(TbStatus::NullPointer, "out is null");
        }
        let beta = Beta::Power {
            kappa,
            r,
            x_cap: (x_cap > 0.0).then_some(x_cap),
        };
        let Some(policy) = tail(tail_policy) else {
            return fail(TbStatus::InvalidArgument, format!("unknown tail policy {tail_policy}"));
        };
        match build_gompertz_bd(a, n, k, policy).and_then(|q| BranchingModel::with_beta(q, beta)) {
            Ok(m) => publish(m, out),
            Err(e) => from_error(e),
        }
    })
}

/// Chain from `len` triples `(from[i], to[i], rate[i])` on types `1..=k`,
/// `to = 0` meaning absorption, with per-type creation rates `beta[0..k]`.
///
/// # Safety
/// `from`, `to` and `rate` must point to `len` elements, `beta` to `k`
/// elements, and `out` to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn tb_model_from_triples(
    from: *const usize,
    to: *const usize,
    rate: *const f64,
    len: usize,
    k: usize,
    tail_policy: u32,
    beta: *const f64,
    out: *mut *mut TbModel,
) -> TbStatus {
    guard(|| {
        if out.is_null() || beta.is_null() || (len > 0 && (from.is_null() || to.is_null() || rate.is_null())) {
            return fail(TbStatus::NullPointer, "null argument");
        }
        let triples: Vec<(usize, usize, f64)> = (0..len).map(|i| (*from.add(i), *to.add(i), *rate.add(i))).collect();
        let beta = std::slice::from_raw_parts(beta, k).to_vec();
        let Some(policy) = tail(tail_policy) else {
            return fail(TbStatus::InvalidArgument, format!("unknown tail policy {tail_policy}"));
        };
        match build_sparse_rates(&triples, k, policy).and_then(|q| BranchingModel::new(q, beta)) {
            Ok(m) => publish(m, out),
            Err(e) => from_error(e),
        }
    })
}

/// Model described by a TOML experiment config file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tb_model_from_config(path: *const c_char, out: *mut *mut TbModel) -> TbStatus {
    guard(|| {
        if out.is_null() || path.is_null() {
            return fail(TbStatus::NullPointer, "null argument");
        }
        let Ok(p) = CStr::from_ptr(path).to_str() else {
            return fail(TbStatus::InvalidArgument, "path is not UTF-8");
        };
        match ExperimentConfig::load(Path::new(p)).and_then(|c| c.build_model()) {
            Ok(m) => publish(m, out),
            Err(e) => from_error(e),
        }
    })
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `model` must come from a `tb_model_*` constructor and not be used again.
#[no_mangle]
pub unsafe extern "C" fn tb_model_free(model: *mut TbModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of types, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tb_model_size(model: *const TbModel) -> usize {
    model_ref(model).map_or(0, |m| m.size())
}

/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tb_kappa0(model: *const TbModel, tol: f64, out: *mut TbKappa0) -> TbStatus {
    guard(|| {
        let (Some(m), false) = (model_ref(model), out.is_null()) else {
            return fail(TbStatus::NullPointer, "null argument");
        };
        match m.kappa0(tol) {
            Ok(k) => {
                *out = TbKappa0 {
                    green: k.green,
                    quadrature: k.quadrature,
                    quadrature_error: k.quadrature_error,
                };
                TbStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Perron root and normalized eigenvectors (`Σν = 1`, `ν·μ = 1`) of the
/// `TbMatrix` selected by `matrix`. `nu` and `mu` may be null when not wanted.
///
/// # Safety
/// `model` must be a live handle, `lambda` writable, and non-null `nu`/`mu`
/// must hold `len` elements.
#[no_mangle]
pub unsafe extern "C" fn tb_perron(
    model: *const TbModel,
    matrix: u32,
    tol: f64,
    max_iter: usize,
    lambda: *mut f64,
    nu: *mut f64,
    mu: *mut f64,
    len: usize,
) -> TbStatus {
    guard(|| {
        let (Some(m), false) = (model_ref(model), lambda.is_null()) else {
            return fail(TbStatus::NullPointer, "null argument");
        };
        let Some(kind) = matrix_kind(matrix) else {
            return fail(TbStatus::InvalidArgument, format!("unknown matrix {matrix}"));
        };
        let tr = match kind.select(m).and_then(|a| perron_triple(&a, tol, max_iter)) {
            Ok(t) => t,
            Err(e) => return from_error(e),
        };
        for (ptr, v) in [(nu, &tr.nu), (mu, &tr.mu)] {
            if !ptr.is_null() {
                match out_slice(ptr, len, v.len()) {
                    Ok(s) => s.copy_from_slice(v),
                    Err(s) => return s,
                }
            }
        }
        *lambda = tr.lambda_star;
        TbStatus::Ok
    })
}

/// Extinction probabilities per starting type.
///
/// # Safety
/// `model` must be a live handle and `q` must hold `len` elements.
#[no_mangle]
pub unsafe extern "C" fn tb_extinction(
    model: *const TbModel,
    tol: f64,
    max_iter: usize,
    q: *mut f64,
    len: usize,
) -> TbStatus {
    guard(|| {
        let Some(m) = model_ref(model) else {
            return fail(TbStatus::NullPointer, "model is null");
        };
        let dst = match out_slice(q, len, m.size()) {
            Ok(s) => s,
            Err(s) => return s,
        };
        match m.extinction_fixed_point(tol, max_iter) {
            Ok(e) => {
                dst.copy_from_slice(&e.q);
                TbStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Simulates `replicas` populations started from one particle of
/// `initial_type` up to `horizon`.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tb_simulate(
    model: *const TbModel,
    initial_type: usize,
    horizon: f64,
    replicas: usize,
    seed: u64,
    out: *mut TbSurvival,
) -> TbStatus {
    guard(|| {
        let (Some(m), false) = (model_ref(model), out.is_null()) else {
            return fail(TbStatus::NullPointer, "null argument");
        };
        let k = m.size();
        if initial_type == 0 || initial_type > k {
            return fail(
                TbStatus::InvalidArgument,
                format!("initial type {initial_type} outside 1..={k}"),
            );
        }
        let mut rc = RunConfig::new(k, horizon, vec![horizon], replicas, seed);
        rc.initial = vec![0; k];
        rc.initial[initial_type - 1] = 1;
        let trs = match run_ensemble(m, &rc) {
            Ok(t) => t,
            Err(e) => return from_error(e),
        };
        let extinct = trs
            .iter()
            .filter(|t| matches!(t.outcome, Outcome::Extinct { .. }))
            .count();
        let censored = trs
            .iter()
            .filter(|t| matches!(t.outcome, Outcome::Censored { .. }))
            .count();
        let total: f64 = trs
            .iter()
            .map(|t| t.snapshots.last().map_or(0, |s| s.total) as f64)
            .sum();
        *out = TbSurvival {
            replicas,
            extinct,
            censored,
            mean_total: if replicas == 0 { 0.0 } else { total / replicas as f64 },
        };
        TbStatus::Ok
    })
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next `tb_*` call on the same thread.
#[no_mangle]
pub extern "C" fn tb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_out_is_reported() {
        let s = unsafe {
            tb_model_gompertz(
                1.0,
                20.0,
                10,
                TbTailPolicy::Kill as u32,
                0.1,
                1.0,
                0.0,
                std::ptr::null_mut(),
            )
        };
        assert_eq!(s, TbStatus::NullPointer);
        assert!(!tb_last_error_message().is_null());
    }

    #[test]
    fn version_is_terminated() {
        let v = unsafe { CStr::from_ptr(tb_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }
}
