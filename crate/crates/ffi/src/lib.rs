//! C interface. Objects are opaque handles created by `*_new` and released
//! by the matching `*_free`; every fallible call returns a status code
//! (`SLITLAB_OK` or an error code) and writes results through out-pointers.
//! The message of the last failure on the calling thread is available from
//! `slitlab_last_error`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use slitlab::cantor::{CantorSpec, DEFAULT_TOL};
use slitlab::config::{run, single_ratio, ExperimentConfig};
use slitlab::dimension::{dim_upper_estimate, NetHierarchy, NetSet, SGrid, Separation};
use slitlab::extension::{norm_factor, AnalyticSource, ExtensionSetup, Part, TestFunction, UnassignedPolicy};
use slitlab::fields::GridField;
use slitlab::regions::{RegionKind, RegionSpec};
use slitlab::Error;

pub const SLITLAB_OK: i32 = 0;
pub const SLITLAB_ERR_INVALID_PARAMETER: i32 = 1;
pub const SLITLAB_ERR_DIMENSION_MISMATCH: i32 = 2;
pub const SLITLAB_ERR_NON_FINITE: i32 = 3;
pub const SLITLAB_ERR_UNSUPPORTED: i32 = 4;
pub const SLITLAB_ERR_INCONSISTENT_BRACKET: i32 = 5;
pub const SLITLAB_ERR_UNREACHABLE: i32 = 6;
pub const SLITLAB_ERR_PRECONDITION: i32 = 7;
pub const SLITLAB_ERR_EMPTY_AVERAGE: i32 = 8;
pub const SLITLAB_ERR_UNASSIGNED: i32 = 9;
pub const SLITLAB_ERR_ZERO_SEMINORM: i32 = 10;
pub const SLITLAB_ERR_MISSING_LEVEL: i32 = 11;
pub const SLITLAB_ERR_IO: i32 = 12;
pub const SLITLAB_ERR_SERIALIZATION: i32 = 13;
pub const SLITLAB_ERR_NULL_POINTER: i32 = 100;
pub const SLITLAB_ERR_UTF8: i32 = 101;
pub const SLITLAB_ERR_PANIC: i32 = 102;
pub const SLITLAB_ERR_BUFFER_TOO_SMALL: i32 = 103;

/// A region of the slit family.
pub struct SlitlabRegion {
    spec: RegionSpec,
}

/// Whitney decompositions and reflection map for one `Ω_λ`.
pub struct SlitlabSetup {
    setup: ExtensionSetup,
}

/// A tabulated field on a uniform grid.
pub struct SlitlabGrid {
    field: GridField,
}

/// Shape of a grid: `cells` cells of `components` values each, spacing
/// `h`, in dimension `n`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SlitlabGridInfo {
    pub n: usize,
    pub components: usize,
    pub cells: usize,
    pub h: f64,
}

enum Fail {
    Lib(Error),
    Null(&'static str),
    Utf8(&'static str),
    Buffer(usize),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> i32 {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SLITLAB_OK,
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            e.code()
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            SLITLAB_ERR_NULL_POINTER
        }
        Ok(Err(Fail::Utf8(what))) => {
            set_error(format!("not valid UTF-8: {what}"));
            SLITLAB_ERR_UTF8
        }
        Ok(Err(Fail::Buffer(need))) => {
            set_error(format!("buffer too small: need {need} elements"));
            SLITLAB_ERR_BUFFER_TOO_SMALL
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            SLITLAB_ERR_PANIC
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail::Utf8(what))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn slitlab_version() -> *const c_char {
    static V: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    V.as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn slitlab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Euclidean distance from `x` (length `len`) to the `len`-fold product of
/// the Cantor set with ratio `lambda`.
///
/// # Safety
/// `x` must point to `len` doubles and `out` to a writable double.
#[no_mangle]
pub unsafe extern "C" fn slitlab_cantor_distance(lambda: f64, x: *const f64, len: usize, out_dist: *mut f64) -> i32 {
    guard(|| {
        let x = slice(x, len, "x")?;
        let spec = CantorSpec::fixed(lambda, len, 64)?;
        *out(out_dist, "out_dist")? = spec.c_distance(x, DEFAULT_TOL)?;
        Ok(())
    })
}

/// `dim(C_λ) = (n−1) ln 2 / ln(1/λ)`.
///
/// # Safety
/// `out_dim` must be writable.
#[no_mangle]
pub unsafe extern "C" fn slitlab_cantor_dim(lambda: f64, n: usize, out_dim: *mut f64) -> i32 {
    guard(|| {
        if n < 2 {
            return Err(Error::InvalidParameter("n must be at least 2".into()).into());
        }
        let spec = CantorSpec::fixed(lambda, n - 1, 64)?;
        *out(out_dim, "out_dim")? = spec.cantor_dim(n)?;
        Ok(())
    })
}

/// Create a region: `kind` is one of `d`, `n`, `omega`, `q0`.
///
/// # Safety
/// `kind` must be a NUL-terminated string and `out_region` writable.
#[no_mangle]
pub unsafe extern "C" fn slitlab_region_new(
    kind: *const c_char,
    n: usize,
    lambda: f64,
    out_region: *mut *mut SlitlabRegion,
) -> i32 {
    guard(|| {
        let slot = out(out_region, "out_region")?;
        let kind = RegionKind::parse(text(kind, "kind")?)?;
        let spec = RegionSpec::slit(kind, n, lambda)?;
        *slot = Box::into_raw(Box::new(SlitlabRegion { spec }));
        Ok(())
    })
}

/// # Safety
/// `region` must come from `slitlab_region_new` (or be NULL) and not be
/// used afterwards.
#[no_mangle]
pub unsafe extern "C" fn slitlab_region_free(region: *mut SlitlabRegion) {
    if !region.is_null() {
        drop(Box::from_raw(region));
    }
}

/// # Safety
/// `region` must be live, `x` must point to `len` doubles, `out_inside`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn slitlab_region_contains(
    region: *const SlitlabRegion,
    x: *const f64,
    len: usize,
    out_inside: *mut bool,
) -> i32 {
    guard(|| {
        let r = handle(region, "region")?;
        *out(out_inside, "out_inside")? = r.spec.membership(slice(x, len, "x")?)?;
        Ok(())
    })
}

/// Certified bracket `lo <= dist(x, ∂N_λ) <= hi`; `region` must be of
/// kind `n`.
///
/// # Safety
/// As for `slitlab_region_contains`; `out_lo` and `out_hi` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn slitlab_region_boundary_distance(
    region: *const SlitlabRegion,
    x: *const f64,
    len: usize,
    out_lo: *mut f64,
    out_hi: *mut f64,
) -> i32 {
    guard(|| {
        let r = handle(region, "region")?;
        let (lo, hi) = r.spec.boundary_distance(slice(x, len, "x")?)?;
        *out(out_lo, "out_lo")? = lo;
        *out(out_hi, "out_hi")? = hi;
        Ok(())
    })
}

/// Build both Whitney decompositions and the reflection map.
///
/// # Safety
/// `out_setup` must be writable.
#[no_mangle]
pub unsafe extern "C" fn slitlab_setup_new(
    n: usize,
    lambda: f64,
    max_gen: i32,
    out_setup: *mut *mut SlitlabSetup,
) -> i32 {
    guard(|| {
        let slot = out(out_setup, "out_setup")?;
        let setup = ExtensionSetup::new(n, lambda, max_gen)?;
        *slot = Box::into_raw(Box::new(SlitlabSetup { setup }));
        Ok(())
    })
}

/// # Safety
/// `setup` must come from `slitlab_setup_new` (or be NULL) and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn slitlab_setup_free(setup: *mut SlitlabSetup) {
    if !setup.is_null() {
        drop(Box::from_raw(setup));
    }
}

/// Numbers of cubes in the interior and complement decompositions.
///
/// # Safety
/// `setup` must be live and the out-pointers writable.
#[no_mangle]
pub unsafe extern "C" fn slitlab_setup_cube_counts(
    setup: *const SlitlabSetup,
    out_interior: *mut usize,
    out_complement: *mut usize,
) -> i32 {
    guard(|| {
        let s = &handle(setup, "setup")?.setup;
        *out(out_interior, "out_interior")? = s.w.len();
        *out(out_complement, "out_complement")? = s.wt.len();
        Ok(())
    })
}

/// `‖∇Eu‖_p(N) / ‖∇u‖_p(Ω)` for a test function spec such as
/// `jump:depth=3`, `coord:1` or `random:seed=7`, on a grid of spacing `h`.
///
/// # Safety
/// `setup` must be live, `spec` NUL-terminated, `out_ratio` writable.
#[no_mangle]
pub unsafe extern "C" fn slitlab_setup_ratio(
    setup: *const SlitlabSetup,
    spec: *const c_char,
    p: f64,
    h: f64,
    out_ratio: *mut f64,
) -> i32 {
    guard(|| {
        let s = &handle(setup, "setup")?.setup;
        let t = TestFunction::parse(text(spec, "spec")?)?;
        *out(out_ratio, "out_ratio")? = single_ratio(s, &t, p, h)?;
        Ok(())
    })
}

/// Tabulate `Eu` over the bounding box of `D`, dropping unassigned cubes.
///
/// # Safety
/// `setup` must be live, `spec` NUL-terminated, `out_grid` writable.
#[no_mangle]
pub unsafe extern "C" fn slitlab_setup_extend(
    setup: *const SlitlabSetup,
    spec: *const c_char,
    h: f64,
    out_grid: *mut *mut SlitlabGrid,
) -> i32 {
    guard(|| {
        let s = &handle(setup, "setup")?.setup;
        let slot = out(out_grid, "out_grid")?;
        let prep = TestFunction::parse(text(spec, "spec")?)?.prepare(&s.omega, h)?;
        let source = AnalyticSource::new(|x: &[f64]| prep.eval(x), &s.omega, h)?;
        let asm = s.assemble(&source, UnassignedPolicy::Exclude)?;
        let field = asm.extend(&source, &s.omega.bbox, h, Part::Full)?;
        *slot = Box::into_raw(Box::new(SlitlabGrid { field }));
        Ok(())
    })
}

/// # Safety
/// `grid` must be live and `out_info` writable.
#[no_mangle]
pub unsafe extern "C" fn slitlab_grid_info(grid: *const SlitlabGrid, out_info: *mut SlitlabGridInfo) -> i32 {
    guard(|| {
        let g = &handle(grid, "grid")?.field;
        *out(out_info, "out_info")? = SlitlabGridInfo {
            n: g.dim(),
            components: g.components,
            cells: g.len(),
            h: g.h,
        };
        Ok(())
    })
}

/// Copy values (`cells * components`, last axis fastest) and the mask
/// (`cells` bytes; 0 marks cells outside the discrete domain). Either
/// buffer may be NULL to skip it.
///
/// # Safety
/// Non-NULL buffers must hold the stated number of elements.
#[no_mangle]
pub unsafe extern "C" fn slitlab_grid_copy(
    grid: *const SlitlabGrid,
    values: *mut f64,
    values_len: usize,
    mask: *mut u8,
    mask_len: usize,
) -> i32 {
    guard(|| {
        let g = &handle(grid, "grid")?.field;
        if !values.is_null() {
            if values_len < g.values.len() {
                return Err(Fail::Buffer(g.values.len()));
            }
            ptr::copy_nonoverlapping(g.values.as_ptr(), values, g.values.len());
        }
        if !mask.is_null() {
            if mask_len < g.mask.len() {
                return Err(Fail::Buffer(g.mask.len()));
            }
            ptr::copy_nonoverlapping(g.mask.as_ptr(), mask, g.mask.len());
        }
        Ok(())
    })
}

/// # Safety
/// `grid` must come from the library (or be NULL) and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn slitlab_grid_free(grid: *mut SlitlabGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Closed-form norm factor; `INFINITY` when it diverges.
///
/// # Safety
/// `out_factor` must be writable.
#[no_mangle]
pub unsafe extern "C" fn slitlab_norm_factor(lambda: f64, n: usize, p: f64, out_factor: *mut f64) -> i32 {
    guard(|| {
        *out(out_factor, "out_factor")? = norm_factor(lambda, n, p)?.value();
        Ok(())
    })
}

/// Net-based upper estimate of the dimension of `C_λ × {0}` using
/// `levels + 1` nets with `2λ^i` separation.
///
/// # Safety
/// The out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn slitlab_dim_estimate(
    lambda: f64,
    n: usize,
    levels: usize,
    seed: u64,
    out_s: *mut f64,
    out_certified: *mut bool,
) -> i32 {
    guard(|| {
        let set = NetSet::cantor_slit(lambda, n)?;
        let h = NetHierarchy::build(set, lambda, levels, Separation::Double, 100_000, seed)?;
        let est = dim_upper_estimate(&h, &SGrid::default())?;
        *out(out_s, "out_s")? = est.s;
        *out(out_certified, "out_certified")? = est.certified;
        Ok(())
    })
}

/// Run an experiment from TOML text; `out_dir` (nullable) overrides the
/// output directory. `out_passed` reports whether every sub-check passed.
///
/// # Safety
/// `config_toml` must be NUL-terminated, `out_dir` NULL or NUL-terminated,
/// `out_passed` writable.
#[no_mangle]
pub unsafe extern "C" fn slitlab_run_config(
    config_toml: *const c_char,
    out_dir: *const c_char,
    out_passed: *mut bool,
) -> i32 {
    guard(|| {
        let slot = out(out_passed, "out_passed")?;
        let mut cfg = ExperimentConfig::from_toml(text(config_toml, "config_toml")?)?;
        if !out_dir.is_null() {
            cfg.output.dir = PathBuf::from(text(out_dir, "out_dir")?);
        }
        *slot = run(&cfg)?.passed;
        Ok(())
    })
}
