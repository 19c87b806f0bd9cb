//! C bindings for the blindmc estimators.
//!
//! The surface follows the usual C-library conventions: opaque handles
//! created and destroyed through paired functions, integer status codes
//! for every fallible call, and a thread-local message describing the
//! most recent failure. Complex buffers cross the boundary as
//! re/im-interleaved doubles. Every entry point is panic-isolated; a
//! caught panic reports `BLINDMC_STATUS_INTERNAL_PANIC` instead of
//! unwinding into the caller.
//!
//! The matching header is generated into `include/blindmc.h` at build
//! time.

// Pointer arguments are null-checked before any dereference; passing a
// non-null pointer to anything other than what the header documents is
// undefined behavior, as in any C API.
#![allow(clippy::not_unsafe_ptr_arg_deref)]

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use blindmc::algorithms::{
    estimate_all, EstimateResult, GammaMode, Method, SigmaHatMode, SolverConfig,
};
use blindmc::io::{read_basis_json, read_observations_csv};
use blindmc::mat::CMatrix;
use blindmc::metrics::sin_angle;
use blindmc::model::{BilinearBasis, ObservationSet};
use blindmc::Error;
use num_complex::Complex64;

/// Outcome of a bindings call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlindmcStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// Shapes, sizes, or option values that do not make sense together.
    InvalidArgument = 2,
    /// A data file could not be parsed.
    ParseError = 3,
    /// An estimator failed numerically.
    NumericalError = 4,
    /// The filesystem said no.
    IoError = 5,
    /// A panic was caught at the boundary; state is unchanged.
    InternalPanic = 6,
}

/// Estimator selector for `blindmc_deconvolve`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlindmcMethod {
    Cc = 0,
    Sccc = 1,
    AltEig = 2,
    Rtpm = 3,
}

impl From<BlindmcMethod> for Method {
    fn from(m: BlindmcMethod) -> Method {
        match m {
            BlindmcMethod::Cc => Method::Cc,
            BlindmcMethod::Sccc => Method::Sccc,
            BlindmcMethod::AltEig => Method::AltEig,
            BlindmcMethod::Rtpm => Method::Rtpm,
        }
    }
}

/// Options for one deconvolution run. Obtain defaults from
/// `blindmc_solver_options_default` and override fields as needed.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct BlindmcSolverOptions {
    pub method: BlindmcMethod,
    /// Iteration cap for the alternating methods; ≥ 1.
    pub max_iters: u32,
    /// Convergence threshold on the sin-angle step between iterates; > 0.
    pub tol: f64,
    /// Noise-variance estimate σ̂² used by the debiasing shift; ≥ 0
    /// (0 disables compensation).
    pub sigma_hat_sq: f64,
}

/// Opaque: a validated bilinear basis (M blocks of K×D).
pub struct BlindmcBasis {
    inner: BilinearBasis,
}

/// Opaque: M channel outputs of shared length L.
pub struct BlindmcObservations {
    inner: ObservationSet,
}

/// Opaque: the result of one estimator run.
pub struct BlindmcEstimate {
    inner: EstimateResult,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> BlindmcStatus {
    match err {
        Error::Dimension(_) | Error::Domain(_) | Error::Config(_) => BlindmcStatus::InvalidArgument,
        Error::Parse { .. } => BlindmcStatus::ParseError,
        Error::Numerical(_) => BlindmcStatus::NumericalError,
        Error::Io { .. } => BlindmcStatus::IoError,
    }
}

fn fail(err: &Error) -> BlindmcStatus {
    set_last_error(&err.to_string());
    status_of(err)
}

/// Runs `body` with panics converted to `InternalPanic`.
fn guarded<F: FnOnce() -> BlindmcStatus>(body: F) -> BlindmcStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_last_error("internal panic caught at the C boundary");
            BlindmcStatus::InternalPanic
        }
    }
}

fn complexes_from_interleaved(data: &[f64]) -> Vec<Complex64> {
    data.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect()
}

fn write_interleaved(src: &[Complex64], dst: &mut [f64]) {
    for (z, pair) in src.iter().zip(dst.chunks_exact_mut(2)) {
        pair[0] = z.re;
        pair[1] = z.im;
    }
}

unsafe fn path_arg(ptr: *const c_char) -> Result<&'static Path, BlindmcStatus> {
    if ptr.is_null() {
        set_last_error("path argument is null");
        return Err(BlindmcStatus::NullArgument);
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Ok(Path::new(s)),
        Err(_) => {
            set_last_error("path argument is not valid UTF-8");
            Err(BlindmcStatus::InvalidArgument)
        }
    }
}

// ── Library info and error reporting ────────────────────────────────────

/// Version of the bindings as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn blindmc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Copies the most recent error message for this thread into `buf`
/// (NUL-terminated, truncated to `cap` bytes) and returns the full
/// message length in bytes, excluding the NUL. Call with `cap` 0 to
/// query the length alone.
#[no_mangle]
pub extern "C" fn blindmc_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let msg = slot.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            unsafe {
                std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
                *buf.add(n) = 0;
            }
        }
        bytes.len()
    })
}

// ── Basis handles ───────────────────────────────────────────────────────

/// Builds a basis from `channels` blocks of `taps`×`dim` complex entries:
/// `data` holds channels·taps·dim re/im pairs, blocks concatenated in
/// channel order, row-major within each block.
#[no_mangle]
pub extern "C" fn blindmc_basis_create(
    channels: usize,
    taps: usize,
    dim: usize,
    data: *const f64,
    out: *mut *mut BlindmcBasis,
) -> BlindmcStatus {
    guarded(|| {
        if data.is_null() || out.is_null() {
            set_last_error("basis data and output pointers must be non-null");
            return BlindmcStatus::NullArgument;
        }
        let len = channels * taps * dim * 2;
        let flat = unsafe { std::slice::from_raw_parts(data, len) };
        let per_block = taps * dim * 2;
        let blocks: Vec<CMatrix> = (0..channels)
            .map(|m| {
                let entries = complexes_from_interleaved(&flat[m * per_block..(m + 1) * per_block]);
                CMatrix::from_fn(taps, dim, |r, c| entries[r * dim + c])
            })
            .collect();
        match BilinearBasis::new(blocks) {
            Ok(inner) => {
                unsafe { *out = Box::into_raw(Box::new(BlindmcBasis { inner })) };
                BlindmcStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Loads a basis from the JSON file format used by the CLI.
#[no_mangle]
pub extern "C" fn blindmc_basis_read_json(
    path: *const c_char,
    out: *mut *mut BlindmcBasis,
) -> BlindmcStatus {
    guarded(|| {
        if out.is_null() {
            set_last_error("output pointer must be non-null");
            return BlindmcStatus::NullArgument;
        }
        let path = match unsafe { path_arg(path) } {
            Ok(p) => p,
            Err(s) => return s,
        };
        match read_basis_json(path) {
            Ok(inner) => {
                unsafe { *out = Box::into_raw(Box::new(BlindmcBasis { inner })) };
                BlindmcStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Channel count M of the basis; 0 for a null handle.
#[no_mangle]
pub extern "C" fn blindmc_basis_channels(basis: *const BlindmcBasis) -> usize {
    unsafe { basis.as_ref() }.map_or(0, |b| b.inner.channels())
}

/// Taps per channel K; 0 for a null handle.
#[no_mangle]
pub extern "C" fn blindmc_basis_taps(basis: *const BlindmcBasis) -> usize {
    unsafe { basis.as_ref() }.map_or(0, |b| b.inner.taps())
}

/// Subspace dimension D; 0 for a null handle.
#[no_mangle]
pub extern "C" fn blindmc_basis_dim(basis: *const BlindmcBasis) -> usize {
    unsafe { basis.as_ref() }.map_or(0, |b| b.inner.dim())
}

/// Destroys a basis handle; a null handle is a no-op.
#[no_mangle]
pub extern "C" fn blindmc_basis_free(basis: *mut BlindmcBasis) {
    if !basis.is_null() {
        drop(unsafe { Box::from_raw(basis) });
    }
}

// ── Observation handles ─────────────────────────────────────────────────

/// Builds an observation set from `channels` outputs of `len` complex
/// samples each: `data` holds channels·len re/im pairs, one channel after
/// another.
#[no_mangle]
pub extern "C" fn blindmc_observations_create(
    channels: usize,
    len: usize,
    data: *const f64,
    out: *mut *mut BlindmcObservations,
) -> BlindmcStatus {
    guarded(|| {
        if data.is_null() || out.is_null() {
            set_last_error("observation data and output pointers must be non-null");
            return BlindmcStatus::NullArgument;
        }
        let flat = unsafe { std::slice::from_raw_parts(data, channels * len * 2) };
        let outputs: Vec<Vec<Complex64>> = (0..channels)
            .map(|m| complexes_from_interleaved(&flat[m * len * 2..(m + 1) * len * 2]))
            .collect();
        let inner = ObservationSet { outputs, sigma_w: None };
        match inner.validate() {
            Ok(()) => {
                unsafe { *out = Box::into_raw(Box::new(BlindmcObservations { inner })) };
                BlindmcStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Loads observations from the CSV file format used by the CLI.
#[no_mangle]
pub extern "C" fn blindmc_observations_read_csv(
    path: *const c_char,
    out: *mut *mut BlindmcObservations,
) -> BlindmcStatus {
    guarded(|| {
        if out.is_null() {
            set_last_error("output pointer must be non-null");
            return BlindmcStatus::NullArgument;
        }
        let path = match unsafe { path_arg(path) } {
            Ok(p) => p,
            Err(s) => return s,
        };
        match read_observations_csv(path) {
            Ok(inner) => {
                unsafe { *out = Box::into_raw(Box::new(BlindmcObservations { inner })) };
                BlindmcStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Channel count M; 0 for a null handle.
#[no_mangle]
pub extern "C" fn blindmc_observations_channels(obs: *const BlindmcObservations) -> usize {
    unsafe { obs.as_ref() }.map_or(0, |o| o.inner.channels())
}

/// Observation length L; 0 for a null handle.
#[no_mangle]
pub extern "C" fn blindmc_observations_len(obs: *const BlindmcObservations) -> usize {
    unsafe { obs.as_ref() }.map_or(0, |o| o.inner.len())
}

/// Destroys an observation handle; a null handle is a no-op.
#[no_mangle]
pub extern "C" fn blindmc_observations_free(obs: *mut BlindmcObservations) {
    if !obs.is_null() {
        drop(unsafe { Box::from_raw(obs) });
    }
}

// ── Solving ─────────────────────────────────────────────────────────────

/// Fills `out` with the default options: RTPM, 50 iterations, tolerance
/// 1e-10, no noise compensation.
#[no_mangle]
pub extern "C" fn blindmc_solver_options_default(out: *mut BlindmcSolverOptions) -> BlindmcStatus {
    if out.is_null() {
        set_last_error("options pointer must be non-null");
        return BlindmcStatus::NullArgument;
    }
    unsafe {
        *out = BlindmcSolverOptions {
            method: BlindmcMethod::Rtpm,
            max_iters: 50,
            tol: 1e-10,
            sigma_hat_sq: 0.0,
        };
    }
    BlindmcStatus::Ok
}

/// Runs one estimator on the observations under the given basis. On
/// success `*out` owns the result; free it with `blindmc_estimate_free`.
#[no_mangle]
pub extern "C" fn blindmc_deconvolve(
    obs: *const BlindmcObservations,
    basis: *const BlindmcBasis,
    options: *const BlindmcSolverOptions,
    out: *mut *mut BlindmcEstimate,
) -> BlindmcStatus {
    guarded(|| {
        if obs.is_null() || basis.is_null() || options.is_null() || out.is_null() {
            set_last_error("observations, basis, options, and output must be non-null");
            return BlindmcStatus::NullArgument;
        }
        let (obs, basis, opts) = unsafe { (&(*obs).inner, &(*basis).inner, *options) };
        if !opts.sigma_hat_sq.is_finite() || opts.sigma_hat_sq < 0.0 {
            set_last_error("sigma_hat_sq must be finite and nonnegative");
            return BlindmcStatus::InvalidArgument;
        }
        let cfg = SolverConfig {
            max_iters: opts.max_iters as usize,
            tol: opts.tol,
            sigma_hat_sq: SigmaHatMode::Value(opts.sigma_hat_sq),
            gamma_mode: GammaMode::SampleNorm,
        };
        let method: Method = opts.method.into();
        let mut all = match estimate_all(obs, basis, &cfg, &[method], None) {
            Ok(all) => all,
            Err(e) => return fail(&e),
        };
        match all.results.pop().expect("one method requested").1 {
            Ok(inner) => {
                unsafe { *out = Box::into_raw(Box::new(BlindmcEstimate { inner })) };
                BlindmcStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

// ── Estimate accessors ──────────────────────────────────────────────────

/// Length of the stacked channel estimate in complex entries (M·K);
/// 0 for a null handle.
#[no_mangle]
pub extern "C" fn blindmc_estimate_channel_len(est: *const BlindmcEstimate) -> usize {
    unsafe { est.as_ref() }.map_or(0, |e| e.inner.h_hat.len())
}

/// Copies the stacked unit-norm channel estimate into `out` as re/im
/// pairs; `cap` counts doubles and must be at least 2·M·K.
#[no_mangle]
pub extern "C" fn blindmc_estimate_channels(
    est: *const BlindmcEstimate,
    out: *mut f64,
    cap: usize,
) -> BlindmcStatus {
    copy_complex(est, out, cap, |e| Some(&e.h_hat))
}

/// Whether this estimate carries per-channel gains (the bilinear methods).
#[no_mangle]
pub extern "C" fn blindmc_estimate_has_gains(est: *const BlindmcEstimate) -> bool {
    unsafe { est.as_ref() }.is_some_and(|e| e.inner.a_hat.is_some())
}

/// Copies the unit-norm gain estimate (M re/im pairs).
#[no_mangle]
pub extern "C" fn blindmc_estimate_gains(
    est: *const BlindmcEstimate,
    out: *mut f64,
    cap: usize,
) -> BlindmcStatus {
    copy_complex(est, out, cap, |e| e.a_hat.as_deref())
}

/// Whether this estimate carries subspace coefficients (absent for CC).
#[no_mangle]
pub extern "C" fn blindmc_estimate_has_coeffs(est: *const BlindmcEstimate) -> bool {
    unsafe { est.as_ref() }.is_some_and(|e| e.inner.b_hat.is_some())
}

/// Copies the unit-norm coefficient estimate (D re/im pairs).
#[no_mangle]
pub extern "C" fn blindmc_estimate_coeffs(
    est: *const BlindmcEstimate,
    out: *mut f64,
    cap: usize,
) -> BlindmcStatus {
    copy_complex(est, out, cap, |e| e.b_hat.as_deref())
}

fn copy_complex(
    est: *const BlindmcEstimate,
    out: *mut f64,
    cap: usize,
    select: impl Fn(&EstimateResult) -> Option<&[Complex64]>,
) -> BlindmcStatus {
    guarded(|| {
        let est = match unsafe { est.as_ref() } {
            Some(e) => &e.inner,
            None => {
                set_last_error("estimate handle is null");
                return BlindmcStatus::NullArgument;
            }
        };
        if out.is_null() {
            set_last_error("output buffer is null");
            return BlindmcStatus::NullArgument;
        }
        let src = match select(est) {
            Some(s) => s,
            None => {
                set_last_error("this estimate does not carry the requested factor");
                return BlindmcStatus::InvalidArgument;
            }
        };
        if cap < 2 * src.len() {
            set_last_error("output buffer too small");
            return BlindmcStatus::InvalidArgument;
        }
        let dst = unsafe { std::slice::from_raw_parts_mut(out, 2 * src.len()) };
        write_interleaved(src, dst);
        BlindmcStatus::Ok
    })
}

/// Number of iterations the estimator ran (0 for the one-shot methods).
#[no_mangle]
pub extern "C" fn blindmc_estimate_iterations(est: *const BlindmcEstimate) -> usize {
    unsafe { est.as_ref() }.map_or(0, |e| e.inner.iterations.len())
}

/// Whether the iteration stopped by meeting its tolerance.
#[no_mangle]
pub extern "C" fn blindmc_estimate_converged(est: *const BlindmcEstimate) -> bool {
    unsafe { est.as_ref() }.is_some_and(|e| e.inner.converged)
}

/// Whether any eigenproblem along the way had a numerically repeated
/// extremal eigenvalue.
#[no_mangle]
pub extern "C" fn blindmc_estimate_degenerate(est: *const BlindmcEstimate) -> bool {
    unsafe { est.as_ref() }.is_some_and(|e| e.inner.degenerate)
}

/// Wall-clock seconds the estimator spent.
#[no_mangle]
pub extern "C" fn blindmc_estimate_elapsed_seconds(est: *const BlindmcEstimate) -> f64 {
    unsafe { est.as_ref() }.map_or(0.0, |e| e.inner.elapsed)
}

/// Destroys an estimate handle; a null handle is a no-op.
#[no_mangle]
pub extern "C" fn blindmc_estimate_free(est: *mut BlindmcEstimate) {
    if !est.is_null() {
        drop(unsafe { Box::from_raw(est) });
    }
}

// ── Metrics ─────────────────────────────────────────────────────────────

/// Sine of the principal angle between two complex vectors of `len`
/// entries (each passed as 2·len interleaved doubles). Invariant to
/// scaling of either argument.
#[no_mangle]
pub extern "C" fn blindmc_sin_angle(
    u: *const f64,
    v: *const f64,
    len: usize,
    out: *mut f64,
) -> BlindmcStatus {
    guarded(|| {
        if u.is_null() || v.is_null() || out.is_null() {
            set_last_error("sin-angle arguments must be non-null");
            return BlindmcStatus::NullArgument;
        }
        let uu = complexes_from_interleaved(unsafe { std::slice::from_raw_parts(u, 2 * len) });
        let vv = complexes_from_interleaved(unsafe { std::slice::from_raw_parts(v, 2 * len) });
        match sin_angle(&uu, &vv) {
            Ok(s) => {
                unsafe { *out = s };
                BlindmcStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}
