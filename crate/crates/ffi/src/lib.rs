//! C interface to the `frd` library.
//!
//! Decompositions and samplers are exposed as opaque handles created by
//! `frd_*_new`/`frd_decompose*` and released with the matching `*_free`.
//! Every fallible call returns an [`FrdStatus`]; on failure the message is
//! kept per thread and read back with [`frd_last_error_message`].
//!
//! Kernel and field buffers are row-major over lattice sites. A kernel
//! occupies `site_count * m * m` doubles with entry `(x, r, s)` at
//! `x * m * m + r * m + s`; a field occupies `site_count * m` doubles.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use frd::config::parse_config;
use frd::decomposition::{build_schedule, decompose, DecompositionResult};
use frd::elliptic::EllipticMap;
use frd::lattice::TorusGeometry;
use frd::sampling::{sample_component, sample_total, SamplerState};
use frd::spectral::Kernel;
use frd::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidGeometry = 3,
    InvalidCoefficients = 4,
    Numerical = 5,
    Io = 6,
    OutOfRange = 7,
    BufferSize = 8,
    Panic = 9,
}

/// Lattice and component sizes of a decomposition.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct FrdShape {
    pub dim: usize,
    pub components: usize,
    pub base: usize,
    pub depth: usize,
    pub side: usize,
    pub site_count: usize,
}

/// Checks computed with the decomposition.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct FrdDiagnostics {
    /// Largest entry of `|Σ_k C_k − G|`.
    pub sum_residual: f64,
    /// Largest far-field deviation over levels with a finite range.
    pub max_range_residual: f64,
    /// Smallest eigenvalue over all kernel symbols.
    pub min_psd_eigenvalue: f64,
    pub imag_residue: f64,
    pub symmetry_residual: f64,
}

/// Opaque decomposition handle.
pub struct FrdDecomposition {
    result: DecompositionResult,
}

/// Opaque sampler handle; independent of the decomposition it came from.
pub struct FrdSampler {
    state: SamplerState,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(message: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = message);
}

fn status_of(e: &Error) -> FrdStatus {
    match e {
        Error::InvalidGeometry(_) | Error::CubeTooLarge { .. } | Error::InvalidSchedule(_) => {
            FrdStatus::InvalidGeometry
        }
        Error::NotSymmetric { .. } | Error::NotPositiveDefinite { .. } => FrdStatus::InvalidCoefficients,
        Error::InvalidArgument(_)
        | Error::Parse { .. }
        | Error::Validation { .. }
        | Error::ShapeMismatch(_)
        | Error::OrderTooHigh { .. }
        | Error::OutsideDisc { .. }
        | Error::InadmissiblePath(_) => FrdStatus::InvalidArgument,
        Error::Io(_) => FrdStatus::Io,
        _ => FrdStatus::Numerical,
    }
}

struct Failure(FrdStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FrdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            FrdStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {message}"));
            FrdStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(FrdStatus::NullPointer, format!("{what} is null"))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn output<'a>(out: *mut f64, len: usize, expected: usize) -> Result<&'a mut [f64], Failure> {
    if out.is_null() {
        return Err(null("output buffer"));
    }
    if len != expected {
        return Err(Failure(FrdStatus::BufferSize, format!("buffer holds {len} values, need {expected}")));
    }
    Ok(std::slice::from_raw_parts_mut(out, len))
}

fn store<T>(out: *mut *mut T, value: T) {
    // SAFETY: callers check `out` for null before computing `value`.
    unsafe { *out = Box::into_raw(Box::new(value)) };
}

/// Library version as a NUL-terminated static string.
#[no_mangle]
pub extern "C" fn frd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (truncated and
/// NUL-terminated when `len > 0`). Returns the full message length in bytes,
/// excluding the terminator; pass `buf = NULL` to query it.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn frd_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Decomposes the Green's function on `(Z / base^depth Z)^dim` with the
/// default cube schedule. `coefficients` holds `A[(r, j), (s, k)]` row-major
/// with `(dim * components)^2` entries, or a single value `a` for `a · I`.
///
/// # Safety
/// `coefficients` must point to `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn frd_decompose(
    dim: usize,
    components: usize,
    base: usize,
    depth: usize,
    coefficients: *const f64,
    len: usize,
    out: *mut *mut FrdDecomposition,
) -> FrdStatus {
    guard(|| {
        if coefficients.is_null() {
            return Err(null("coefficients"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let raw = std::slice::from_raw_parts(coefficients, len);
        let g = TorusGeometry::new(dim, components, base, depth)?;
        let a = match raw {
            [a] => EllipticMap::scalar(dim, components, *a)?,
            _ => EllipticMap::new(dim, components, raw)?,
        };
        let result = decompose(&a, &g, &build_schedule(&g, None)?)?;
        store(out, FrdDecomposition { result });
        Ok(())
    })
}

/// Decomposes from a JSON run configuration, the same format the `frd`
/// command line tool reads.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn frd_decompose_json(json: *const c_char, out: *mut *mut FrdDecomposition) -> FrdStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| Failure(FrdStatus::InvalidArgument, format!("configuration is not UTF-8: {e}")))?;
        let config = parse_config(text)?;
        let result = decompose(&config.map, &config.geometry, &config.schedule)?;
        store(out, FrdDecomposition { result });
        Ok(())
    })
}

/// Releases a decomposition; null is ignored.
///
/// # Safety
/// `h` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn frd_decomposition_free(h: *mut FrdDecomposition) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// # Safety
/// `h` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn frd_decomposition_shape(h: *const FrdDecomposition, out: *mut FrdShape) -> FrdStatus {
    guard(|| {
        let g = &handle(h, "decomposition")?.result.geometry;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = FrdShape {
            dim: g.dim(),
            components: g.components(),
            base: g.base(),
            depth: g.depth(),
            side: g.side(),
            site_count: g.site_count(),
        };
        Ok(())
    })
}

/// # Safety
/// `h` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn frd_decomposition_diagnostics(
    h: *const FrdDecomposition,
    out: *mut FrdDiagnostics,
) -> FrdStatus {
    guard(|| {
        let d = &handle(h, "decomposition")?.result.diagnostics;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = FrdDiagnostics {
            sum_residual: d.sum_residual,
            max_range_residual: d.range.iter().filter(|r| r.applicable).map(|r| r.residual).fold(0.0, f64::max),
            min_psd_eigenvalue: d.psd.iter().map(|p| p.min_eigenvalue).fold(f64::INFINITY, f64::min),
            imag_residue: d.imag_residue,
            symmetry_residual: d.symmetry_residual,
        };
        Ok(())
    })
}

fn level_kernel(result: &DecompositionResult, k: usize) -> Result<&Kernel, Failure> {
    let levels = result.geometry.depth() + 1;
    match k {
        0 => Ok(&result.green.kernel),
        k if k <= levels => Ok(result.kernel(k)),
        _ => Err(Failure(FrdStatus::OutOfRange, format!("level {k} outside 0..={levels}"))),
    }
}

/// Finite range `r_k` of level `k` in `1..=depth`, or `-1` for a skipped
/// level (whose kernel vanishes). The last level `depth + 1` has no finite
/// range and also reports `-1`.
///
/// # Safety
/// `h` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn frd_kernel_range(h: *const FrdDecomposition, k: usize, out: *mut i64) -> FrdStatus {
    guard(|| {
        let result = &handle(h, "decomposition")?.result;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        level_kernel(result, k)?;
        let depth = result.geometry.depth();
        *out = if k == 0 || k > depth || result.schedule.is_skipped(k) { -1 } else { result.schedule.range(k) };
        Ok(())
    })
}

/// Copies the kernel of level `k` (`0` for the full Green's function,
/// `1..=depth + 1` for the scales) into `out`, which must hold exactly
/// `site_count * m * m` doubles.
///
/// # Safety
/// `h` must be a live handle and `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn frd_kernel_copy(h: *const FrdDecomposition, k: usize, out: *mut f64, len: usize) -> FrdStatus {
    guard(|| {
        let kernel = level_kernel(&handle(h, "decomposition")?.result, k)?;
        output(out, len, kernel.values().len())?.copy_from_slice(kernel.values());
        Ok(())
    })
}

/// Creates a sampler for the Gaussian fields with covariances `C_k`. Draws
/// are a pure function of `(seed, k, index)`.
///
/// # Safety
/// `h` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn frd_sampler_new(h: *const FrdDecomposition, seed: u64, out: *mut *mut FrdSampler) -> FrdStatus {
    guard(|| {
        let result = &handle(h, "decomposition")?.result;
        if out.is_null() {
            return Err(null("out"));
        }
        let state = SamplerState::new(result, seed)?;
        store(out, FrdSampler { state });
        Ok(())
    })
}

/// Releases a sampler; null is ignored.
///
/// # Safety
/// `s` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn frd_sampler_free(s: *mut FrdSampler) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Draws sample `index` of level `k` (`1..=depth + 1`), or of the total field
/// when `k = 0`, into `out` of `site_count * m` doubles.
///
/// # Safety
/// `s` must be a live handle and `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn frd_sampler_draw(
    s: *const FrdSampler,
    k: usize,
    index: u64,
    out: *mut f64,
    len: usize,
) -> FrdStatus {
    guard(|| {
        let state = &handle(s, "sampler")?.state;
        let levels = state.levels();
        if k > levels {
            return Err(Failure(FrdStatus::OutOfRange, format!("level {k} outside 0..={levels}")));
        }
        let g = state.geometry();
        let buf = output(out, len, g.site_count() * g.components())?;
        let field = if k == 0 { sample_total(state, index) } else { sample_component(state, k, index) };
        for (b, v) in buf.iter_mut().zip(field.values()) {
            *b = v.re;
        }
        Ok(())
    })
}
