//! C interface to the lomae denoisers.
//!
//! Every function returns a [`LomaeStatus`]. On failure the message is kept
//! per thread and can be read with [`lomae_last_error`]. Handles are opaque
//! and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use lomae_core::eval::ssim_metric;
use lomae_core::io::{read_slice, write_slice};
use lomae_core::tomo::{make_dose_series, make_phantom, PhantomKind, SimulationConfig};
use lomae_core::zoo::{Checkpoint, Model, ModelConfig, Stage};
use lomae_core::{LomaeError, Slice};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LomaeStatus {
    Ok = 0,
    InvalidArgument = 1,
    Shape = 2,
    Config = 3,
    Dose = 4,
    Degenerate = 5,
    Protocol = 6,
    Checkpoint = 7,
    Format = 8,
    Io = 9,
    NullPointer = 10,
    Panic = 11,
}

impl LomaeStatus {
    fn of(e: &LomaeError) -> Self {
        match e.category() {
            "argument" => Self::InvalidArgument,
            "shape" => Self::Shape,
            "config" => Self::Config,
            "dose" => Self::Dose,
            "degenerate" => Self::Degenerate,
            "protocol" => Self::Protocol,
            "checkpoint" => Self::Checkpoint,
            "format" => Self::Format,
            _ => Self::Io,
        }
    }
}

/// A denoising network.
pub struct LomaeModel {
    inner: Model,
}

/// A single-channel image.
pub struct LomaeSlice {
    inner: Slice,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

enum Failure {
    Null(&'static str),
    Core(LomaeError),
}

impl From<LomaeError> for Failure {
    fn from(e: LomaeError) -> Self {
        Failure::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LomaeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            LomaeStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            LomaeStatus::NullPointer
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            LomaeStatus::of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            LomaeStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Core(LomaeError::InvalidArgument(format!("{what} is not UTF-8"))))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn lomae_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Copies `h * w` row-major floats into a new slice.
///
/// # Safety
/// `data` must point to `h * w` readable floats; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lomae_slice_new(data: *const f32, h: usize, w: usize, out: *mut *mut LomaeSlice) -> LomaeStatus {
    guard(|| {
        if data.is_null() {
            return Err(Failure::Null("data"));
        }
        if h == 0 || w == 0 {
            return Err(LomaeError::Shape(format!("empty {h}x{w} slice")).into());
        }
        let v: Vec<f64> = std::slice::from_raw_parts(data, h * w).iter().map(|&x| x as f64).collect();
        let inner = Slice::from_shape_vec((h, w), v).map_err(|e| LomaeError::Shape(e.to_string()))?;
        put(out, LomaeSlice { inner })
    })
}

/// # Safety
/// `slice` must be a live handle; `h` and `w` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lomae_slice_dims(slice: *const LomaeSlice, h: *mut usize, w: *mut usize) -> LomaeStatus {
    guard(|| {
        let s = ref_arg(slice, "slice")?;
        if h.is_null() || w.is_null() {
            return Err(Failure::Null("h/w"));
        }
        (*h, *w) = s.inner.dim();
        Ok(())
    })
}

/// Copies the pixels into `out`, which must hold `len >= h * w` floats.
///
/// # Safety
/// `slice` must be a live handle; `out` must point to `len` writable floats.
#[no_mangle]
pub unsafe extern "C" fn lomae_slice_copy(slice: *const LomaeSlice, out: *mut f32, len: usize) -> LomaeStatus {
    guard(|| {
        let s = ref_arg(slice, "slice")?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let n = s.inner.len();
        if len < n {
            return Err(LomaeError::Shape(format!("buffer of {len} floats for {n} pixels")).into());
        }
        let dst = std::slice::from_raw_parts_mut(out, n);
        for (d, v) in dst.iter_mut().zip(s.inner.iter()) {
            *d = *v as f32;
        }
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lomae_slice_read(path: *const c_char, out: *mut *mut LomaeSlice) -> LomaeStatus {
    guard(|| {
        let p = str_arg(path, "path")?;
        let inner = read_slice(Path::new(p))?;
        put(out, LomaeSlice { inner })
    })
}

/// # Safety
/// `slice` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn lomae_slice_write(slice: *const LomaeSlice, path: *const c_char) -> LomaeStatus {
    guard(|| {
        let s = ref_arg(slice, "slice")?;
        let p = str_arg(path, "path")?;
        write_slice(Path::new(p), &s.inner)?;
        Ok(())
    })
}

/// # Safety
/// `slice` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lomae_slice_free(slice: *mut LomaeSlice) {
    if !slice.is_null() {
        drop(Box::from_raw(slice));
    }
}

/// Simulates one phantom slice (`shepp_logan`, `ellipse_soup` or `disk`) and
/// its noisy reconstruction at incident count `dose`.
///
/// # Safety
/// `phantom` must be a NUL-terminated string; `noisy` and `clean` writable.
#[no_mangle]
pub unsafe extern "C" fn lomae_simulate_pair(
    phantom: *const c_char,
    n: usize,
    views: usize,
    dose: f64,
    attenuation_per_mm: f64,
    seed: u64,
    noisy: *mut *mut LomaeSlice,
    clean: *mut *mut LomaeSlice,
) -> LomaeStatus {
    guard(|| {
        let kind: PhantomKind = str_arg(phantom, "phantom")?.parse()?;
        if noisy.is_null() || clean.is_null() {
            return Err(Failure::Null("noisy/clean"));
        }
        let ph = make_phantom(kind, n, seed)?;
        let mut cfg = SimulationConfig::parallel(n, ph.pixel_size_mm, views);
        cfg.geometry.attenuation_per_mm = attenuation_per_mm;
        let pair = make_dose_series(&ph, &cfg, &[dose], &[seed])?.remove(0);
        put(noisy, LomaeSlice { inner: pair.noisy })?;
        put(clean, LomaeSlice { inner: pair.clean })
    })
}

/// Builds a named preset (`desk_swinir`, `desk_sunet`, `paper_swinir`,
/// `paper_sunet`) with the front-to-end shortcut on.
///
/// # Safety
/// `preset` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lomae_model_build(preset: *const c_char, seed: u64, out: *mut *mut LomaeModel) -> LomaeStatus {
    guard(|| {
        let cfg = match str_arg(preset, "preset")? {
            "desk_swinir" => ModelConfig::desk_swinir(),
            "desk_sunet" => ModelConfig::desk_sunet(),
            "paper_swinir" => ModelConfig::paper_swinir(),
            "paper_sunet" => ModelConfig::paper_sunet(),
            other => return Err(LomaeError::Config(format!("unknown preset '{other}'")).into()),
        };
        put(out, LomaeModel { inner: Model::build(&cfg, seed)? })
    })
}

/// Loads a checkpoint directory.
///
/// # Safety
/// `dir` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lomae_model_load(dir: *const c_char, out: *mut *mut LomaeModel) -> LomaeStatus {
    guard(|| {
        let d = str_arg(dir, "dir")?;
        let inner = Checkpoint::load(Path::new(d))?.to_model()?;
        put(out, LomaeModel { inner })
    })
}

/// Saves as a finetuned checkpoint when `finetuned` is nonzero, otherwise as
/// pretrained.
///
/// # Safety
/// `model` must be a live handle; `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn lomae_model_save(model: *const LomaeModel, dir: *const c_char, finetuned: i32) -> LomaeStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        let d = str_arg(dir, "dir")?;
        let stage = if finetuned != 0 { Stage::Finetuned } else { Stage::Pretrained };
        Checkpoint::from_model(&m.inner, stage, 0, [0; 32], 0).save(Path::new(d))?;
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn lomae_model_set_shortcut(model: *mut LomaeModel, enabled: i32) -> LomaeStatus {
    guard(|| {
        let m = model.as_mut().ok_or(Failure::Null("model"))?;
        m.inner.config.use_front_to_end_shortcut = enabled != 0;
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle; `size` writable.
#[no_mangle]
pub unsafe extern "C" fn lomae_model_input_size(model: *const LomaeModel, size: *mut usize) -> LomaeStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        if size.is_null() {
            return Err(Failure::Null("size"));
        }
        *size = m.inner.config.input_size;
        Ok(())
    })
}

/// Denoises `input` into a new slice.
///
/// # Safety
/// `model` and `input` must be live handles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lomae_model_forward(
    model: *const LomaeModel,
    input: *const LomaeSlice,
    out: *mut *mut LomaeSlice,
) -> LomaeStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        let x = ref_arg(input, "input")?;
        let inner = m.inner.forward(&x.inner)?;
        put(out, LomaeSlice { inner })
    })
}

/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lomae_model_free(model: *mut LomaeModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Mean local SSIM (11-pixel Gaussian window).
///
/// # Safety
/// `a` and `b` must be live handles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lomae_ssim(a: *const LomaeSlice, b: *const LomaeSlice, out: *mut f64) -> LomaeStatus {
    guard(|| {
        let (a, b) = (ref_arg(a, "a")?, ref_arg(b, "b")?);
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        *out = ssim_metric(&a.inner, &b.inner)?;
        Ok(())
    })
}
