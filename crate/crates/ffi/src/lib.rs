//! C interface to `sftip-core`.
//!
//! Fields and results are opaque heap handles owned by the caller and
//! released with their `_free` function. Every function returns a
//! [`SftipStatus`]; on failure [`sftip_last_error_message`] describes the
//! most recent error on the calling thread. Panics never cross the
//! boundary.
//!
//! PSFs are stored centered: the optical axis sits at `(width/2, height/2)`.
//! Fields are row-major `double` arrays.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use sftip_core::metrics::IterationRecord;
use sftip_core::sftip::{psf_psnr, sftip_run, TipConfig, TipOutcome};
use sftip_core::simkit::{ConvergenceScenario, ScenarioSpec, SceneKind};
use sftip_core::{Error, RealField};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SftipStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    Degenerate = 4,
    Panic = 5,
}

/// Opaque real-valued 2-D field.
pub struct SftipField(RealField);

/// Opaque outcome of [`sftip_run_solver`].
pub struct SftipResult(TipOutcome);

/// Solver settings. Start from [`sftip_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SftipConfig {
    /// Patches per axis.
    pub grid_p: u32,
    /// PSF support side in pixels.
    pub support_s: u32,
    pub iters: u32,
    /// OTF-update regularization, relative to the mean patch power.
    pub eps_h: f64,
    /// Object-update regularization, relative to the mean OTF power.
    pub eps_o: f64,
    pub seed: u64,
    /// Shift-align PSF estimates to the ground truth before PSNR.
    pub align: bool,
}

/// One row of the convergence trace.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SftipIterationRecord {
    /// 1-based.
    pub iteration: u32,
    pub residual: f64,
    /// NaN when the run had no ground-truth PSF.
    pub psf_psnr_db: f64,
    /// Cumulative count of PSF delta fallbacks.
    pub delta_fallbacks: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SftipScene {
    BarTarget = 0,
    Checkerboard = 1,
    Flat = 2,
}

impl From<SftipScene> for SceneKind {
    fn from(s: SftipScene) -> Self {
        match s {
            SftipScene::BarTarget => SceneKind::BarTarget,
            SftipScene::Checkerboard => SceneKind::Checkerboard,
            SftipScene::Flat => SceneKind::Flat,
        }
    }
}

impl From<SftipConfig> for TipConfig {
    fn from(c: SftipConfig) -> Self {
        TipConfig {
            grid_p: c.grid_p as usize,
            support_s: c.support_s as usize,
            iters: c.iters as usize,
            eps_h: c.eps_h,
            eps_o: c.eps_o,
            seed: c.seed,
            align: c.align,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior nuls removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(SftipStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::ShapeMismatch { .. } | Error::CountMismatch { .. } => SftipStatus::ShapeMismatch,
            Error::Degenerate(_) => SftipStatus::Degenerate,
            _ => SftipStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(SftipStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SftipStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SftipStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {message}"));
            SftipStatus::Panic
        }
    }
}

unsafe fn field_ref<'a>(p: *const SftipField, what: &str) -> Result<&'a RealField, Failure> {
    p.as_ref().map(|f| &f.0).ok_or_else(|| null(what))
}

fn boxed_field(field: RealField) -> *mut SftipField {
    Box::into_raw(Box::new(SftipField(field)))
}

/// Message for the last failed call on this thread, or null if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sftip_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn sftip_config_default() -> SftipConfig {
    let d = TipConfig::default();
    SftipConfig {
        grid_p: d.grid_p as u32,
        support_s: d.support_s as u32,
        iters: d.iters as u32,
        eps_h: d.eps_h,
        eps_o: d.eps_o,
        seed: d.seed,
        align: d.align,
    }
}

/// Copies `width * height` samples from `data` into a new field.
///
/// # Safety
/// `data` must point to `width * height` readable doubles and `out` must
/// be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sftip_field_new(
    width: usize,
    height: usize,
    data: *const f64,
    out: *mut *mut SftipField,
) -> SftipStatus {
    guard(|| {
        if data.is_null() {
            return Err(null("data"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let len = width.checked_mul(height).ok_or_else(|| {
            Failure(SftipStatus::InvalidArgument, "field size overflows".into())
        })?;
        // SAFETY: caller guarantees `data` holds `len` doubles.
        let samples = std::slice::from_raw_parts(data, len).to_vec();
        let field = RealField::new(width, height, samples)?;
        *out = boxed_field(field);
        Ok(())
    })
}

/// Width of `field`, or 0 if it is null.
///
/// # Safety
/// `field` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sftip_field_width(field: *const SftipField) -> usize {
    field.as_ref().map_or(0, |f| f.0.width())
}

/// Height of `field`, or 0 if it is null.
///
/// # Safety
/// `field` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sftip_field_height(field: *const SftipField) -> usize {
    field.as_ref().map_or(0, |f| f.0.height())
}

/// Copies the samples of `field` into `dst`, which holds `len` doubles.
/// `len` must equal `width * height`.
///
/// # Safety
/// `field` must be a live handle and `dst` must point to `len` writable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn sftip_field_copy_data(
    field: *const SftipField,
    dst: *mut f64,
    len: usize,
) -> SftipStatus {
    guard(|| {
        let field = field_ref(field, "field")?;
        if dst.is_null() {
            return Err(null("dst"));
        }
        if len != field.len() {
            return Err(Error::BufferLength { expected: field.len(), actual: len }.into());
        }
        // SAFETY: caller guarantees `dst` holds `len` doubles.
        std::slice::from_raw_parts_mut(dst, len).copy_from_slice(field.samples());
        Ok(())
    })
}

/// Releases a field. Null is ignored.
///
/// # Safety
/// `field` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sftip_field_free(field: *mut SftipField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// Runs the solver on `image`. `truth_psf` may be null; when given, the
/// trace records PSF PSNR against it.
///
/// # Safety
/// `image` and `config` must be valid, `truth_psf` null or valid, and
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sftip_run_solver(
    image: *const SftipField,
    config: *const SftipConfig,
    truth_psf: *const SftipField,
    out: *mut *mut SftipResult,
) -> SftipStatus {
    guard(|| {
        let image = field_ref(image, "image")?;
        let config = *config.as_ref().ok_or_else(|| null("config"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let truth = truth_psf.as_ref().map(|f| &f.0);
        let outcome = sftip_run(image, config.into(), truth)?;
        *out = Box::into_raw(Box::new(SftipResult(outcome)));
        Ok(())
    })
}

/// New field holding the estimated PSF (centered, unit sum).
///
/// # Safety
/// `result` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sftip_result_psf(
    result: *const SftipResult,
    out: *mut *mut SftipField,
) -> SftipStatus {
    guard(|| {
        let result = result.as_ref().ok_or_else(|| null("result"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = boxed_field(result.0.psf.clone());
        Ok(())
    })
}

/// New field holding the recovered object.
///
/// # Safety
/// `result` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sftip_result_object(
    result: *const SftipResult,
    out: *mut *mut SftipField,
) -> SftipStatus {
    guard(|| {
        let result = result.as_ref().ok_or_else(|| null("result"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = boxed_field(result.0.object.clone());
        Ok(())
    })
}

/// Number of trace records, or 0 if `result` is null.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sftip_result_trace_len(result: *const SftipResult) -> usize {
    result.as_ref().map_or(0, |r| r.0.trace.len())
}

/// Copies trace record `index` (0-based) into `out`.
///
/// # Safety
/// `result` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sftip_result_trace_record(
    result: *const SftipResult,
    index: usize,
    out: *mut SftipIterationRecord,
) -> SftipStatus {
    guard(|| {
        let result = result.as_ref().ok_or_else(|| null("result"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let records = result.0.trace.records();
        let r: &IterationRecord = records.get(index).ok_or_else(|| {
            Failure(
                SftipStatus::InvalidArgument,
                format!("trace index {index} out of range 0..{}", records.len()),
            )
        })?;
        *out = SftipIterationRecord {
            iteration: r.iteration as u32,
            residual: r.residual,
            psf_psnr_db: r.psf_psnr_db.unwrap_or(f64::NAN),
            delta_fallbacks: r.delta_fallbacks as u32,
        };
        Ok(())
    })
}

/// Releases a result. Null is ignored.
///
/// # Safety
/// `result` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sftip_result_free(result: *mut SftipResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// PSNR in dB of `estimate` against `truth`, optionally after shift
/// alignment.
///
/// # Safety
/// `truth` and `estimate` must be live handles and `out_db` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sftip_psf_psnr(
    truth: *const SftipField,
    estimate: *const SftipField,
    align: bool,
    out_db: *mut f64,
) -> SftipStatus {
    guard(|| {
        let truth = field_ref(truth, "truth")?;
        let estimate = field_ref(estimate, "estimate")?;
        let out_db = out_db.as_mut().ok_or_else(|| null("out_db"))?;
        *out_db = psf_psnr(truth, estimate, align)?;
        Ok(())
    })
}

/// Simulates a square scene, a random Zernike aberration and the
/// resulting 16-bit observation. Any of the output pointers may be null
/// to skip that field.
///
/// # Safety
/// Non-null output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sftip_simulate(
    size: usize,
    scene: SftipScene,
    mode_count: u32,
    sigma: f64,
    pupil_fraction: f64,
    noise_sigma: f64,
    seed: u64,
    out_scene: *mut *mut SftipField,
    out_psf: *mut *mut SftipField,
    out_image: *mut *mut SftipField,
) -> SftipStatus {
    guard(|| {
        let spec = ScenarioSpec {
            size,
            scene: scene.into(),
            mode_count: mode_count as usize,
            sigma,
            pupil_fraction,
            noise_sigma,
            shift_scene: false,
            seed,
        };
        let s = ConvergenceScenario::generate(&spec)?;
        for (dst, field) in [(out_scene, s.scene), (out_psf, s.psf), (out_image, s.image)] {
            if let Some(dst) = dst.as_mut() {
                *dst = boxed_field(field);
            }
        }
        Ok(())
    })
}
