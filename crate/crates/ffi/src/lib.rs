//! C interface. Objects cross the boundary as opaque handles that the caller
//! releases with the matching `*_free` function. Every fallible call returns
//! a [`CtStatus`]; on failure `ct_last_error` describes what went wrong on
//! the calling thread.
//!
//! Matrices are passed as row-major `double` arrays.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use contratensor::cica::{self, CicaModel};
use contratensor::cumulants::{fourth_cumulant, DataMatrix};
use contratensor::decomp::DecompConfig;
use contratensor::htd::htd;
use contratensor::tensor::{SymDecomposition, SymTensor4};
use contratensor::{Error, ErrorKind};
use nalgebra::DMatrix;

/// Result of every fallible call. The numeric values match the CLI exit
/// codes where the two overlap.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DataError = 3,
    NumericalError = 4,
    Panic = 5,
}

/// Symmetric fourth-order tensor.
pub struct CtTensor(SymTensor4);

/// Weighted rank-one terms from a decomposition.
pub struct CtDecomposition(SymDecomposition);

/// Fitted contrastive model.
pub struct CtModel(CicaModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: CtStatus, msg: impl Into<String>) -> CtStatus {
    set_error(msg.into());
    status
}

fn from_error(e: Error) -> CtStatus {
    let status = match e.kind() {
        ErrorKind::Usage => CtStatus::InvalidArgument,
        ErrorKind::Data => CtStatus::DataError,
        ErrorKind::Numerical => CtStatus::NumericalError,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> Result<(), CtStatus>) -> CtStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CtStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(CtStatus::Panic, "internal panic"),
    }
}

fn lib<T>(r: contratensor::Result<T>) -> Result<T, CtStatus> {
    r.map_err(from_error)
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, CtStatus> {
    p.as_ref().ok_or_else(|| fail(CtStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, CtStatus> {
    p.as_mut().ok_or_else(|| fail(CtStatus::NullPointer, format!("{what} is null")))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], CtStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(CtStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], CtStatus> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(fail(CtStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn checked_len(a: usize, b: usize) -> Result<usize, CtStatus> {
    a.checked_mul(b)
        .ok_or_else(|| fail(CtStatus::InvalidArgument, "array size overflows"))
}

unsafe fn data_matrix(rows: *const f64, n: usize, p: usize) -> Result<DataMatrix, CtStatus> {
    let values = slice(rows, checked_len(n, p)?, "data")?;
    lib(DataMatrix::new(DMatrix::from_row_slice(n, p, values)))
}

fn boxed<T>(out: &mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Message for the most recent failure on this thread, or null. The pointer
/// stays valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn ct_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ct_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Sample fourth-order cumulant of an `n x p` row-major data matrix.
///
/// # Safety
/// `rows` must point to `n * p` doubles and `out` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn ct_tensor_from_data(rows: *const f64, n: usize, p: usize, out: *mut *mut CtTensor) -> CtStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let data = data_matrix(rows, n, p)?;
        boxed(out, CtTensor(lib(fourth_cumulant(&data))?));
        Ok(())
    })
}

/// Tensor from `p^4` entries in row-major `(i, j, k, l)` order, symmetrized.
///
/// # Safety
/// `entries` must point to `p^4` doubles and `out` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn ct_tensor_from_entries(entries: *const f64, p: usize, out: *mut *mut CtTensor) -> CtStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let len = checked_len(checked_len(p, p)?, checked_len(p, p)?)?;
        let raw = slice(entries, len, "entries")?;
        boxed(out, CtTensor(lib(SymTensor4::symmetrize(p, raw))?));
        Ok(())
    })
}

/// Dimension `p` of a tensor, or 0 for null.
///
/// # Safety
/// `t` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ct_tensor_dim(t: *const CtTensor) -> usize {
    t.as_ref().map_or(0, |t| t.0.dim())
}

/// Copies the `p^4` entries into `out`.
///
/// # Safety
/// `out` must have room for `p^4` doubles.
#[no_mangle]
pub unsafe extern "C" fn ct_tensor_entries(t: *const CtTensor, out: *mut f64) -> CtStatus {
    guard(|| {
        let t = deref(t, "tensor")?;
        let src = t.0.as_slice();
        slice_mut(out, src.len(), "out")?.copy_from_slice(src);
        Ok(())
    })
}

/// # Safety
/// `t` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ct_tensor_free(t: *mut CtTensor) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Hierarchical decomposition with at most `rank` terms.
///
/// # Safety
/// `t` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ct_htd(t: *const CtTensor, rank: usize, out: *mut *mut CtDecomposition) -> CtStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let t = deref(t, "tensor")?;
        boxed(out, CtDecomposition(lib(htd(&t.0, rank))?));
        Ok(())
    })
}

/// Number of terms, or 0 for null.
///
/// # Safety
/// `d` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ct_decomposition_len(d: *const CtDecomposition) -> usize {
    d.as_ref().map_or(0, |d| d.0.len())
}

/// Weight and unit vector of term `index`; `vector` needs room for `p`
/// doubles where `p` is the tensor dimension.
///
/// # Safety
/// `d` must be a live handle; `weight` and `vector` writable.
#[no_mangle]
pub unsafe extern "C" fn ct_decomposition_term(
    d: *const CtDecomposition,
    index: usize,
    weight: *mut f64,
    vector: *mut f64,
) -> CtStatus {
    guard(|| {
        let d = deref(d, "decomposition")?;
        let term = d.0.terms().get(index).ok_or_else(|| {
            fail(CtStatus::InvalidArgument, format!("term {index} out of range (len {})", d.0.len()))
        })?;
        *out_ptr(weight, "weight")? = term.weight;
        slice_mut(vector, term.dim(), "vector")?.copy_from_slice(term.vector.as_slice());
        Ok(())
    })
}

/// # Safety
/// `d` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ct_decomposition_free(d: *mut CtDecomposition) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

fn decomp_config(seed: u64, restarts: usize) -> DecompConfig {
    DecompConfig {
        seed,
        restarts: if restarts == 0 { DecompConfig::default().restarts } else { restarts },
        ..DecompConfig::default()
    }
}

/// General contrastive fit with `r` background and `l` foreground terms.
/// `restarts == 0` selects the default.
///
/// # Safety
/// Tensor arguments must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ct_fit_general(
    k4x: *const CtTensor,
    k4y: *const CtTensor,
    r: usize,
    l: usize,
    seed: u64,
    restarts: usize,
    out: *mut *mut CtModel,
) -> CtStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let (x, y) = (deref(k4x, "k4x")?, deref(k4y, "k4y")?);
        let model = lib(cica::fit_general(&x.0, &y.0, r, l, &decomp_config(seed, restarts)))?;
        boxed(out, CtModel(model));
        Ok(())
    })
}

/// Proportional fit. A NaN `gamma` estimates it, which needs the background
/// rank `r`; `r == 0` means unknown.
///
/// # Safety
/// Tensor arguments must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ct_fit_proportional(
    k4x: *const CtTensor,
    k4y: *const CtTensor,
    l: usize,
    gamma: f64,
    r: usize,
    out: *mut *mut CtModel,
) -> CtStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let (x, y) = (deref(k4x, "k4x")?, deref(k4y, "k4y")?);
        let gamma = (!gamma.is_nan()).then_some(gamma);
        let r = (r > 0).then_some(r);
        let model = lib(cica::fit_proportional(&x.0, &y.0, l, gamma, r, &DecompConfig::default()))?;
        boxed(out, CtModel(model));
        Ok(())
    })
}

/// Input dimension the model expects (original space when PCA is attached).
///
/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ct_model_input_dim(m: *const CtModel) -> usize {
    m.as_ref().map_or(0, |m| m.0.pca.as_ref().map_or(m.0.dim(), |b| b.input_dim()))
}

/// Number of foreground patterns, or 0 for null.
///
/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ct_model_num_patterns(m: *const CtModel) -> usize {
    m.as_ref().map_or(0, |m| m.0.foreground.len())
}

/// Foreground pattern `index` in model coordinates with its weight. `vector`
/// needs room for the model dimension.
///
/// # Safety
/// `m` must be a live handle; `nu` and `vector` writable.
#[no_mangle]
pub unsafe extern "C" fn ct_model_pattern(m: *const CtModel, index: usize, nu: *mut f64, vector: *mut f64) -> CtStatus {
    guard(|| {
        let m = deref(m, "model")?;
        let term = m.0.foreground.get(index).ok_or_else(|| {
            fail(
                CtStatus::InvalidArgument,
                format!("pattern {index} out of range (len {})", m.0.foreground.len()),
            )
        })?;
        *out_ptr(nu, "nu")? = term.nu;
        slice_mut(vector, term.vector.len(), "vector")?.copy_from_slice(&term.vector);
        Ok(())
    })
}

/// γ of a proportional model, NaN otherwise.
///
/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ct_model_gamma(m: *const CtModel) -> f64 {
    m.as_ref().and_then(|m| m.0.gamma).unwrap_or(f64::NAN)
}

/// Coordinates of each row of an `n x p` matrix on patterns `i` and `j`
/// (0-based), written row-major into `out` (`n * 2` doubles).
///
/// # Safety
/// `rows` must hold `n * p` doubles and `out` `n * 2`.
#[no_mangle]
pub unsafe extern "C" fn ct_model_project(
    m: *const CtModel,
    rows: *const f64,
    n: usize,
    p: usize,
    i: usize,
    j: usize,
    out: *mut f64,
) -> CtStatus {
    guard(|| {
        let m = deref(m, "model")?;
        let data = data_matrix(rows, n, p)?;
        let coords = lib(cica::project(&data, &m.0, i, j))?;
        let dst = slice_mut(out, checked_len(n, 2)?, "out")?;
        for (k, row) in coords.row_iter().enumerate() {
            dst[2 * k] = row[0];
            dst[2 * k + 1] = row[1];
        }
        Ok(())
    })
}

/// Serializes the model. Release the string with `ct_string_free`.
///
/// # Safety
/// `m` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ct_model_to_json(m: *const CtModel, out: *mut *mut c_char) -> CtStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let json = lib(deref(m, "model")?.0.to_json())?;
        let c = CString::new(json).map_err(|_| fail(CtStatus::DataError, "JSON contains NUL"))?;
        *out = c.into_raw();
        Ok(())
    })
}

/// Parses and validates a model document.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ct_model_from_json(json: *const c_char, out: *mut *mut CtModel) -> CtStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        if json.is_null() {
            return Err(fail(CtStatus::NullPointer, "json is null"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|_| fail(CtStatus::DataError, "json is not valid UTF-8"))?;
        boxed(out, CtModel(lib(CicaModel::from_json(text))?));
        Ok(())
    })
}

/// # Safety
/// `m` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ct_model_free(m: *mut CtModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ct_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
