//! C ABI over `fixhead`.
//!
//! Every function returns a [`FixheadStatus`]. On failure a description is
//! kept per thread and can be read with [`fixhead_last_error`]. Objects are
//! handed out as opaque pointers and must be released with the matching
//! `_free` function. Matrices are row-major `double` arrays.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use fixhead::hadamard::{fwht_in_place, sylvester};
use fixhead::head::CosineReduction;
use fixhead::projection::{random_orthonormal, unit_rows, FixedProjection};
use fixhead::{Error, Head, LossKind, Matrix, Mlp};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FixheadStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    Io = 4,
    Format = 5,
    Numerical = 6,
    Panic = 7,
}

/// Loss selector for [`fixhead_head_loss_and_grads`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FixheadLoss {
    CrossEntropy = 0,
    CosineSum = 1,
    CosineMean = 2,
}

/// Fixed `N x C` projection.
pub struct FixheadProjection {
    inner: FixedProjection,
}

/// Classifier head: learned, orthonormal or truncated Hadamard.
pub struct FixheadHead {
    inner: Head,
}

/// Trained network restored from a checkpoint.
pub struct FixheadModel {
    inner: Mlp,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> FixheadStatus {
    match e {
        Error::Dimension(_) | Error::LengthMismatch { .. } => FixheadStatus::Dimension,
        Error::InvalidArgument(_) | Error::NoForwardCache => FixheadStatus::InvalidArgument,
        Error::Io { .. } => FixheadStatus::Io,
        Error::BadMagic { .. } | Error::Truncated { .. } | Error::Format { .. } => {
            FixheadStatus::Format
        }
        Error::GramSchmidtBreakdown { .. }
        | Error::Diverged { .. }
        | Error::NonPositiveAlpha { .. }
        | Error::BenchMismatch { .. } => FixheadStatus::Numerical,
    }
}

struct Fail(FixheadStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(FixheadStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> FixheadStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            FixheadStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("panic inside fixhead".to_string());
            FixheadStatus::Panic
        }
    }
}

unsafe fn slice<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn slice_mut<'a>(ptr: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

unsafe fn path_arg(path: *const c_char) -> Result<PathBuf, Fail> {
    if path.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(path).to_str().map_err(|_| {
        Fail(
            FixheadStatus::InvalidArgument,
            "path is not valid UTF-8".to_string(),
        )
    })?;
    Ok(PathBuf::from(s))
}

fn expect_len(got: usize, want: usize, what: &str) -> Result<(), Fail> {
    if got != want {
        return Err(Fail(
            FixheadStatus::Dimension,
            format!("{what}: expected length {want}, got {got}"),
        ));
    }
    Ok(())
}

unsafe fn publish<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn handle<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, Fail> {
    ptr.as_ref().ok_or_else(|| null(what))
}

/// Message for the last failed call on this thread, or NULL after a
/// successful one. The pointer stays valid until the next call into the
/// library from the same thread.
#[no_mangle]
pub extern "C" fn fixhead_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fixhead_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// In-place unnormalized Walsh-Hadamard transform; `len` must be a power
/// of two.
///
/// # Safety
/// `data` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn fixhead_fwht(data: *mut f64, len: usize) -> FixheadStatus {
    guard(|| {
        if len == 0 {
            return Err(Fail(
                FixheadStatus::InvalidArgument,
                "length must be positive".into(),
            ));
        }
        Ok(fwht_in_place(slice_mut(data, len, "data")?)?)
    })
}

/// Writes the `n x n` Sylvester Hadamard matrix (entries ±1).
///
/// # Safety
/// `out` must point to `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn fixhead_sylvester(
    n: usize,
    out: *mut f64,
    out_len: usize,
) -> FixheadStatus {
    guard(|| {
        let h = sylvester(n)?;
        expect_len(out_len, n * n, "sylvester output")?;
        slice_mut(out, out_len, "out")?.copy_from_slice(h.as_slice());
        Ok(())
    })
}

/// Random projection with orthonormal columns; needs `n_classes <= n_features`.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn fixhead_projection_orthonormal(
    n_features: usize,
    n_classes: usize,
    seed: u64,
    out: *mut *mut FixheadProjection,
) -> FixheadStatus {
    guard(|| {
        let inner = random_orthonormal(n_features, n_classes, seed)?;
        publish(out, FixheadProjection { inner })
    })
}

/// Random projection with independent unit-norm columns; any `n_classes`.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn fixhead_projection_unit_rows(
    n_features: usize,
    n_classes: usize,
    seed: u64,
    out: *mut *mut FixheadProjection,
) -> FixheadStatus {
    guard(|| {
        let inner = unit_rows(n_features, n_classes, seed)?;
        publish(out, FixheadProjection { inner })
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn fixhead_projection_load(
    path: *const c_char,
    out: *mut *mut FixheadProjection,
) -> FixheadStatus {
    guard(|| {
        let inner = FixedProjection::load(path_arg(path)?)?;
        publish(out, FixheadProjection { inner })
    })
}

/// # Safety
/// `projection` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn fixhead_projection_save(
    projection: *const FixheadProjection,
    path: *const c_char,
) -> FixheadStatus {
    guard(|| {
        Ok(handle(projection, "projection")?
            .inner
            .save(path_arg(path)?)?)
    })
}

/// # Safety
/// All pointers must be valid; the shape outputs may be NULL.
#[no_mangle]
pub unsafe extern "C" fn fixhead_projection_shape(
    projection: *const FixheadProjection,
    n_features: *mut usize,
    n_classes: *mut usize,
) -> FixheadStatus {
    guard(|| {
        let p = &handle(projection, "projection")?.inner;
        if let Some(n) = n_features.as_mut() {
            *n = p.n_features();
        }
        if let Some(c) = n_classes.as_mut() {
            *c = p.n_classes();
        }
        Ok(())
    })
}

/// Copies the `n_features x n_classes` matrix into `out`.
///
/// # Safety
/// `out` must point to `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn fixhead_projection_data(
    projection: *const FixheadProjection,
    out: *mut f64,
    out_len: usize,
) -> FixheadStatus {
    guard(|| {
        let q = handle(projection, "projection")?.inner.q();
        expect_len(out_len, q.as_slice().len(), "projection output")?;
        slice_mut(out, out_len, "out")?.copy_from_slice(q.as_slice());
        Ok(())
    })
}

/// # Safety
/// `projection` must come from this library and not be used afterwards.
/// NULL is accepted.
#[no_mangle]
pub unsafe extern "C" fn fixhead_projection_free(projection: *mut FixheadProjection) {
    if !projection.is_null() {
        drop(Box::from_raw(projection));
    }
}

/// Fixed head over a copy of `projection`, with trainable scale 1 and zero bias.
///
/// # Safety
/// `projection` must come from this library; `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn fixhead_head_orthonormal(
    projection: *const FixheadProjection,
    out: *mut *mut FixheadHead,
) -> FixheadStatus {
    guard(|| {
        let p = handle(projection, "projection")?.inner.clone();
        publish(
            out,
            FixheadHead {
                inner: Head::orthonormal(p),
            },
        )
    })
}

/// Truncated Hadamard head for `n_features` inputs and `n_classes` outputs.
///
/// # Safety
/// `out` must be a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn fixhead_head_hadamard(
    n_features: usize,
    n_classes: usize,
    out: *mut *mut FixheadHead,
) -> FixheadStatus {
    guard(|| {
        let inner = Head::hadamard(n_features, n_classes)?;
        publish(out, FixheadHead { inner })
    })
}

/// Ordinary affine head with an `n_features x n_classes` weight matrix.
///
/// # Safety
/// `weights` must point to `n_features * n_classes` doubles.
#[no_mangle]
pub unsafe extern "C" fn fixhead_head_learned(
    weights: *const f64,
    n_features: usize,
    n_classes: usize,
    out: *mut *mut FixheadHead,
) -> FixheadStatus {
    guard(|| {
        let w = slice(weights, n_features * n_classes, "weights")?;
        let m = Matrix::from_vec(n_features, n_classes, w.to_vec())?;
        publish(
            out,
            FixheadHead {
                inner: Head::learned(m),
            },
        )
    })
}

/// # Safety
/// `head` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn fixhead_head_set_alpha(
    head: *mut FixheadHead,
    alpha: f64,
) -> FixheadStatus {
    guard(|| {
        let h = head.as_mut().ok_or_else(|| null("head"))?;
        if !alpha.is_finite() {
            return Err(Fail(
                FixheadStatus::InvalidArgument,
                "alpha must be finite".into(),
            ));
        }
        h.inner.set_alpha(alpha);
        Ok(())
    })
}

/// # Safety
/// `head` must come from this library; `alpha` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fixhead_head_alpha(
    head: *const FixheadHead,
    alpha: *mut f64,
) -> FixheadStatus {
    guard(|| {
        let a = alpha.as_mut().ok_or_else(|| null("alpha"))?;
        *a = handle(head, "head")?.inner.alpha();
        Ok(())
    })
}

/// Logits for representation `x` (`x_len` = number of features) into
/// `out` (`out_len` = number of classes).
///
/// # Safety
/// Buffers must hold the stated number of doubles.
#[no_mangle]
pub unsafe extern "C" fn fixhead_head_logits(
    head: *const FixheadHead,
    x: *const f64,
    x_len: usize,
    out: *mut f64,
    out_len: usize,
) -> FixheadStatus {
    guard(|| {
        let h = &handle(head, "head")?.inner;
        let y = h.logits(slice(x, x_len, "x")?)?;
        expect_len(out_len, y.len(), "logits output")?;
        slice_mut(out, out_len, "out")?.copy_from_slice(&y);
        Ok(())
    })
}

/// Loss at `(x, target)` and its gradients. `d_input` has `x_len` entries
/// and `d_bias` one per class. `d_alpha` and `d_bias` may be NULL; they are
/// zero for the cosine losses and for the learned head's scale.
///
/// # Safety
/// Non-NULL buffers must hold the stated number of doubles.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn fixhead_head_loss_and_grads(
    head: *const FixheadHead,
    loss_kind: FixheadLoss,
    x: *const f64,
    x_len: usize,
    target: usize,
    loss: *mut f64,
    d_input: *mut f64,
    d_alpha: *mut f64,
    d_bias: *mut f64,
) -> FixheadStatus {
    guard(|| {
        let h = &handle(head, "head")?.inner;
        let kind = match loss_kind {
            FixheadLoss::CrossEntropy => LossKind::CrossEntropy,
            FixheadLoss::CosineSum => LossKind::Cosine(CosineReduction::Sum),
            FixheadLoss::CosineMean => LossKind::Cosine(CosineReduction::Mean),
        };
        let (l, g) = h.loss_and_grads_for(kind, slice(x, x_len, "x")?, target)?;
        *loss.as_mut().ok_or_else(|| null("loss"))? = l;
        slice_mut(d_input, x_len, "d_input")?.copy_from_slice(&g.d_input);
        if let Some(a) = d_alpha.as_mut() {
            *a = g.d_alpha;
        }
        if !d_bias.is_null() {
            slice_mut(d_bias, g.d_bias.len(), "d_bias")?.copy_from_slice(&g.d_bias);
        }
        Ok(())
    })
}

/// # Safety
/// `head` must come from this library and not be used afterwards. NULL is
/// accepted.
#[no_mangle]
pub unsafe extern "C" fn fixhead_head_free(head: *mut FixheadHead) {
    if !head.is_null() {
        drop(Box::from_raw(head));
    }
}

/// Restores a network written by `fixhead train`.
///
/// # Safety
/// `path` must be NUL-terminated; `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn fixhead_model_load(
    path: *const c_char,
    out: *mut *mut FixheadModel,
) -> FixheadStatus {
    guard(|| {
        let inner = Mlp::load_checkpoint(path_arg(path)?)?;
        publish(out, FixheadModel { inner })
    })
}

/// # Safety
/// `model` must come from this library; the outputs may be NULL.
#[no_mangle]
pub unsafe extern "C" fn fixhead_model_shape(
    model: *const FixheadModel,
    input_dim: *mut usize,
    n_classes: *mut usize,
) -> FixheadStatus {
    guard(|| {
        let m = &handle(model, "model")?.inner;
        if let Some(d) = input_dim.as_mut() {
            *d = m.input_dim();
        }
        if let Some(c) = n_classes.as_mut() {
            *c = m.head().n_classes();
        }
        Ok(())
    })
}

/// Logits for input `z` and, if `class_out` is non-NULL, the predicted class.
///
/// # Safety
/// `z` must hold `z_len` doubles and `logits` `logits_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn fixhead_model_predict(
    model: *const FixheadModel,
    z: *const f64,
    z_len: usize,
    logits: *mut f64,
    logits_len: usize,
    class_out: *mut usize,
) -> FixheadStatus {
    guard(|| {
        let m = &handle(model, "model")?.inner;
        let (_, y) = m.predict(slice(z, z_len, "z")?)?;
        expect_len(logits_len, y.len(), "logits output")?;
        slice_mut(logits, logits_len, "logits")?.copy_from_slice(&y);
        if let Some(c) = class_out.as_mut() {
            *c = fixhead::numerics::argmax(&y);
        }
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library and not be used afterwards. NULL is
/// accepted.
#[no_mangle]
pub unsafe extern "C" fn fixhead_model_free(model: *mut FixheadModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
