//! C ABI over the optimizer.
//!
//! Objects cross the boundary as opaque handles created by `mc_*_new`/`_from_*`
//! functions and released with the matching `_free`. Every call returns an
//! [`McStatus`]; on failure the message is available from
//! [`mc_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use mimo_coupling::array_model::{ArrayGeometry, Wavenumber};
use mimo_coupling::channel::PathSet;
use mimo_coupling::experiment::{quality_factor, run_experiment, run_scheme, ExperimentConfig, Profile, SchemeConfig, SchemeKind, SchemeRun};
use mimo_coupling::rate::water_fill;
use mimo_coupling::scenario::draw_scenario;
use mimo_coupling::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    IllConditioned = 3,
    InvalidGeometry = 4,
    ContractViolation = 5,
    Config = 6,
    Io = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// Selects the profile a configuration is merged over.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McProfile {
    /// Use the file's `profile` key, or desk when absent.
    Auto = 0,
    Desk = 1,
    Paper = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McSide {
    Transmit = 0,
    Receive = 1,
}

/// Opaque experiment configuration.
pub struct McConfig(ExperimentConfig);

/// Opaque multipath realization.
pub struct McPathSet(PathSet);

/// Opaque outcome of one scheme run.
pub struct McResult {
    run: SchemeRun,
    wavelength: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(err: &Error) -> McStatus {
    match err {
        Error::IllConditionedCoupling { .. } => McStatus::IllConditioned,
        Error::InvalidGeometry(_) => McStatus::InvalidGeometry,
        Error::ContractViolation(_) => McStatus::ContractViolation,
        Error::Config(_) | Error::Json(_) => McStatus::Config,
        Error::Io(_) | Error::Csv(_) => McStatus::Io,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard<F>(f: F) -> McStatus
where
    F: FnOnce() -> Result<(), McStatus>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            McStatus::Ok
        }
        Ok(Err(status)) => status,
        Err(_) => {
            set_error("panic inside mimo-coupling");
            McStatus::Panic
        }
    }
}

fn fail(err: Error) -> McStatus {
    let status = status_of(&err);
    set_error(err.to_string());
    status
}

fn invalid(msg: &str) -> McStatus {
    set_error(msg);
    McStatus::InvalidArgument
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, McStatus> {
    if p.is_null() {
        set_error(format!("{what} is null"));
        return Err(McStatus::NullPointer);
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(&format!("{what} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, McStatus> {
    p.as_ref().ok_or_else(|| {
        set_error(format!("{what} is null"));
        McStatus::NullPointer
    })
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, McStatus> {
    p.as_mut().ok_or_else(|| {
        set_error(format!("{what} is null"));
        McStatus::NullPointer
    })
}

/// Copies `values` into `buf` (capacity `cap`) and stores the full length in
/// `len`. Fails with `BufferTooSmall` when `cap` is short; `len` is still set.
unsafe fn copy_out(values: &[f64], buf: *mut f64, cap: usize, len: *mut usize) -> Result<(), McStatus> {
    *out_arg(len, "len")? = values.len();
    if values.is_empty() {
        return Ok(());
    }
    if cap < values.len() {
        set_error(format!("buffer holds {cap} values, need {}", values.len()));
        return Err(McStatus::BufferTooSmall);
    }
    if buf.is_null() {
        set_error("buffer is null");
        return Err(McStatus::NullPointer);
    }
    ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
    Ok(())
}

/// Copies the last error message of this thread into `buf` as a
/// NUL-terminated string, truncating to `cap` bytes. Returns the full message
/// length excluding the terminator.
///
/// # Safety
/// `buf` must be null or point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn mc_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Quality factor `1/λ_min` of a uniform array with spacing in wavelengths.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mc_quality_factor(spacing_lambda: f64, count: usize, out: *mut f64) -> McStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let geom = ArrayGeometry::uniform_spacing(count, spacing_lambda).map_err(fail)?;
        *out = quality_factor(&geom, &Wavenumber::from_wavelength(1.0)).map_err(fail)?;
        Ok(())
    })
}

/// Water-filling over `n` channel gains (singular values). Writes `n` powers
/// and the water level.
///
/// # Safety
/// `singulars` and `powers` must point to `n` values; `level` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mc_water_fill(
    singulars: *const f64,
    n: usize,
    noise: f64,
    p_max: f64,
    powers: *mut f64,
    level: *mut f64,
) -> McStatus {
    guard(|| {
        if n > 0 && (singulars.is_null() || powers.is_null()) {
            set_error("singulars or powers is null");
            return Err(McStatus::NullPointer);
        }
        let level = out_arg(level, "level")?;
        let s = if n == 0 { &[][..] } else { std::slice::from_raw_parts(singulars, n) };
        let wf = water_fill(s, noise, p_max).map_err(fail)?;
        if n > 0 {
            ptr::copy_nonoverlapping(wf.powers[0].as_ptr(), powers, n);
        }
        *level = wf.level;
        Ok(())
    })
}

fn profile_of(p: McProfile) -> Option<Profile> {
    match p {
        McProfile::Auto => None,
        McProfile::Desk => Some(Profile::Desk),
        McProfile::Paper => Some(Profile::Paper),
    }
}

/// Parses a JSON configuration merged over `profile`.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mc_config_from_json(json: *const c_char, profile: McProfile, out: *mut *mut McConfig) -> McStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let text = str_arg(json, "json")?;
        let cfg = ExperimentConfig::from_json(text, profile_of(profile)).map_err(fail)?;
        *out = Box::into_raw(Box::new(McConfig(cfg)));
        Ok(())
    })
}

/// Profile defaults with no overrides; `Auto` means desk.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mc_config_default(profile: McProfile, out: *mut *mut McConfig) -> McStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let cfg = ExperimentConfig::from_profile(profile_of(profile).unwrap_or_default()).map_err(fail)?;
        *out = Box::into_raw(Box::new(McConfig(cfg)));
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mc_config_free(cfg: *mut McConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Draws the realization of trial seed `seed` under `cfg`'s scenario.
///
/// # Safety
/// `cfg` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mc_pathset_draw(cfg: *const McConfig, seed: u64, out: *mut *mut McPathSet) -> McStatus {
    guard(|| {
        let cfg = &ref_arg(cfg, "cfg")?.0;
        let out = out_arg(out, "out")?;
        let paths = draw_scenario(&cfg.scenario, cfg.rng, seed).map_err(fail)?;
        *out = Box::into_raw(Box::new(McPathSet(paths)));
        Ok(())
    })
}

/// Parses a path set in the `{"paths": [...]}` dump format.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mc_pathset_from_json(json: *const c_char, out: *mut *mut McPathSet) -> McStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let paths = PathSet::from_json(str_arg(json, "json")?).map_err(fail)?;
        *out = Box::into_raw(Box::new(McPathSet(paths)));
        Ok(())
    })
}

/// # Safety
/// `paths` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mc_pathset_len(paths: *const McPathSet, out: *mut usize) -> McStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(paths, "paths")?.0.len();
        Ok(())
    })
}

/// # Safety
/// `paths` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mc_pathset_free(paths: *mut McPathSet) {
    if !paths.is_null() {
        drop(Box::from_raw(paths));
    }
}

/// Runs scheme `c-ma`, `nc-ma`, `ula` or `cla` on one realization.
///
/// # Safety
/// `cfg` and `paths` must be live handles, `scheme` a NUL-terminated string
/// and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn mc_run_scheme(
    cfg: *const McConfig,
    paths: *const McPathSet,
    scheme: *const c_char,
    out: *mut *mut McResult,
) -> McStatus {
    guard(|| {
        let cfg = &ref_arg(cfg, "cfg")?.0;
        let paths = &ref_arg(paths, "paths")?.0;
        let out = out_arg(out, "out")?;
        let kind = SchemeKind::parse(str_arg(scheme, "scheme")?).map_err(fail)?;
        let run = run_scheme(cfg, &SchemeConfig::new(kind), paths).map_err(fail)?;
        *out = Box::into_raw(Box::new(McResult {
            run,
            wavelength: cfg.wavenumber().wavelength,
        }));
        Ok(())
    })
}

/// Physical objective and the objective under the scheme's own model, in
/// bits/s/Hz. Either output may be null.
///
/// # Safety
/// `result` must be a live handle; non-null outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn mc_result_objective(result: *const McResult, physical: *mut f64, modeled: *mut f64) -> McStatus {
    guard(|| {
        let r = ref_arg(result, "result")?;
        if let Some(p) = physical.as_mut() {
            *p = r.run.objective;
        }
        if let Some(m) = modeled.as_mut() {
            *m = r.run.modeled;
        }
        Ok(())
    })
}

/// Completed outer iterations and whether the run met its tolerance.
///
/// # Safety
/// `result` must be a live handle; non-null outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn mc_result_iterations(result: *const McResult, outer_iters: *mut usize, converged: *mut bool) -> McStatus {
    guard(|| {
        let r = ref_arg(result, "result")?;
        if let Some(n) = outer_iters.as_mut() {
            *n = r.run.outer_iters();
        }
        if let Some(c) = converged.as_mut() {
            *c = r.run.state.converged;
        }
        Ok(())
    })
}

/// Final element positions of one side, in wavelengths.
///
/// # Safety
/// `result` must be a live handle, `buf` must hold `cap` values and `len`
/// must be valid.
#[no_mangle]
pub unsafe extern "C" fn mc_result_positions(
    result: *const McResult,
    side: McSide,
    buf: *mut f64,
    cap: usize,
    len: *mut usize,
) -> McStatus {
    guard(|| {
        let r = ref_arg(result, "result")?;
        let geom = match side {
            McSide::Transmit => r.run.state.tx_geometry(),
            McSide::Receive => r.run.state.rx_geometry(),
        };
        let values: Vec<f64> = geom.positions().iter().map(|p| p / r.wavelength).collect();
        copy_out(&values, buf, cap, len)
    })
}

/// Objective after each outer iteration, starting with the initial point.
///
/// # Safety
/// As for [`mc_result_positions`].
#[no_mangle]
pub unsafe extern "C" fn mc_result_trace(result: *const McResult, buf: *mut f64, cap: usize, len: *mut usize) -> McStatus {
    guard(|| {
        let r = ref_arg(result, "result")?;
        copy_out(&r.run.state.outer_objectives(), buf, cap, len)
    })
}

/// # Safety
/// `result` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mc_result_free(result: *mut McResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Runs the full experiment and writes its files under `out_dir`. Returns
/// `ContractViolation` when some scheme failed on every trial; the files are
/// written regardless.
///
/// # Safety
/// `cfg` must be a live handle and `out_dir` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn mc_run_experiment(cfg: *const McConfig, out_dir: *const c_char) -> McStatus {
    guard(|| {
        let cfg = &ref_arg(cfg, "cfg")?.0;
        let dir = str_arg(out_dir, "out_dir")?;
        let report = run_experiment(cfg, Path::new(dir)).map_err(fail)?;
        if report.success() {
            Ok(())
        } else {
            set_error(format!("schemes failed on every trial: {}", report.summary.failed_schemes.join(", ")));
            Err(McStatus::ContractViolation)
        }
    })
}
