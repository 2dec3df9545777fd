//! C ABI over the `nlos` library.
//!
//! Objects cross the boundary as opaque handles created by `nlos_*_new` or
//! returned through out-pointers, and released with the matching `*_free`.
//! Every fallible call returns an [`NlosStatus`]; on failure the message is
//! kept per thread and can be copied out with [`nlos_last_error_message`].
//! Arrays are row-major `f64`: transients `(x, y, t)`, directional albedo
//! `(c, x, y, z)` with `c` the vector component.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ndarray::{Array3, Array4};
use nlos::lct::DlctOperator;
use nlos::metrics::{extract_maps, psnr, DEFAULT_MASK_THRESHOLD};
use nlos::scene::{apply_noise, rasterize_scene, render_transients, NoiseSpec, SurfelScene};
use nlos::solvers::{reconstruct, Method, SolverConfig};
use nlos::ss::WindowSpec;
use nlos::{DirectionalAlbedoVolume, Error, ScanGrid, TransientVolume};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NlosStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidGrid = 3,
    DimensionMismatch = 4,
    OutsideFrustum = 5,
    NegativeBin = 6,
    Diverged = 7,
    Io = 8,
    Other = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NlosMethod {
    Ss = 0,
    LocalSs = 1,
    L1 = 2,
    Wiener = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NlosScene {
    TPlane = 0,
    SingleSurfel = 1,
}

/// Scan geometry; see `ScanGrid` in the core library.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct NlosGrid {
    pub wall_width_m: f64,
    pub scan_res: u32,
    pub bin_width: f64,
    pub num_bins: u32,
    pub depth_res: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct NlosSolverConfig {
    pub method: NlosMethod,
    pub lambda: f64,
    pub max_iters: u32,
    pub rel_tol: f64,
    pub window_len: u32,
    pub window_sigma: f64,
    pub wiener_alpha: f64,
    pub monotone_restart: bool,
}

pub struct NlosOperator(DlctOperator);
pub struct NlosTransient(TransientVolume);
pub struct NlosAlbedo(DirectionalAlbedoVolume);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> NlosStatus {
    match err {
        Error::InvalidGrid(_) => NlosStatus::InvalidGrid,
        Error::DimensionMismatch(_) => NlosStatus::DimensionMismatch,
        Error::InvalidArgument(_) | Error::NonFinite { .. } => NlosStatus::InvalidArgument,
        Error::OutsideFrustum { .. } => NlosStatus::OutsideFrustum,
        Error::NegativeBin { .. } => NlosStatus::NegativeBin,
        Error::Diverged { .. } => NlosStatus::Diverged,
        Error::Io { .. } => NlosStatus::Io,
        _ => NlosStatus::Other,
    }
}

/// Runs `f`, turning errors and panics into a status and a stored message.
fn guard(f: impl FnOnce() -> Result<(), (NlosStatus, String)>) -> NlosStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NlosStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            NlosStatus::Panic
        }
    }
}

fn lib(err: Error) -> (NlosStatus, String) {
    (status_of(&err), err.to_string())
}

fn null(name: &str) -> (NlosStatus, String) {
    (NlosStatus::NullPointer, format!("`{name}` is null"))
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> Result<&'a T, (NlosStatus, String)> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn put<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

fn to_grid(g: &NlosGrid) -> Result<ScanGrid, (NlosStatus, String)> {
    ScanGrid::new(
        g.wall_width_m,
        g.scan_res as usize,
        g.bin_width,
        g.num_bins as usize,
        g.depth_res as usize,
    )
    .map_err(lib)
}

unsafe fn slice<'a>(data: *const f64, len: usize, expected: usize) -> Result<&'a [f64], (NlosStatus, String)> {
    if data.is_null() {
        return Err(null("data"));
    }
    if len != expected {
        return Err((
            NlosStatus::DimensionMismatch,
            format!("expected {expected} values, got {len}"),
        ));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

unsafe fn copy_out(src: &[f64], out: *mut f64, len: usize) -> Result<(), (NlosStatus, String)> {
    if out.is_null() {
        return Err(null("out"));
    }
    if len < src.len() {
        return Err((
            NlosStatus::InvalidArgument,
            format!("buffer holds {len} values, need {}", src.len()),
        ));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    Ok(())
}

/// Copies the calling thread's last error message into `buf` (truncated and
/// nul-terminated) and returns the full message length in bytes, or 0 when
/// there is none.
#[no_mangle]
pub unsafe extern "C" fn nlos_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Fills `out` with the library defaults for `method`.
#[no_mangle]
pub unsafe extern "C" fn nlos_solver_config_default(method: NlosMethod, out: *mut NlosSolverConfig) -> NlosStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let d = SolverConfig::default();
        *out = NlosSolverConfig {
            method,
            lambda: d.lambda,
            max_iters: d.max_iters as u32,
            rel_tol: d.rel_tol,
            window_len: d.window.len as u32,
            window_sigma: d.window.sigma,
            wiener_alpha: d.wiener_alpha,
            monotone_restart: d.monotone_restart,
        };
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn nlos_operator_new(grid: *const NlosGrid, out: *mut *mut NlosOperator) -> NlosStatus {
    guard(|| {
        let grid = to_grid(deref(grid, "grid")?)?;
        if out.is_null() {
            return Err(null("out"));
        }
        put(out, NlosOperator(DlctOperator::new(&grid).map_err(lib)?));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn nlos_operator_free(op: *mut NlosOperator) {
    if !op.is_null() {
        drop(Box::from_raw(op));
    }
}

/// Wraps `len = scan_res^2 * num_bins` values as a transient.
#[no_mangle]
pub unsafe extern "C" fn nlos_transient_new(
    grid: *const NlosGrid,
    data: *const f64,
    len: usize,
    out: *mut *mut NlosTransient,
) -> NlosStatus {
    guard(|| {
        let grid = to_grid(deref(grid, "grid")?)?;
        let shape = grid.transient_shape();
        let values = slice(data, len, shape.0 * shape.1 * shape.2)?;
        let array = Array3::from_shape_vec(shape, values.to_vec()).expect("length checked");
        if out.is_null() {
            return Err(null("out"));
        }
        put(out, NlosTransient(TransientVolume::new(grid, array).map_err(lib)?));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn nlos_transient_len(t: *const NlosTransient) -> usize {
    t.as_ref().map_or(0, |t| t.0.data().len())
}

#[no_mangle]
pub unsafe extern "C" fn nlos_transient_copy(t: *const NlosTransient, out: *mut f64, len: usize) -> NlosStatus {
    guard(|| {
        let t = deref(t, "transient")?;
        copy_out(&t.0.data().iter().copied().collect::<Vec<_>>(), out, len)
    })
}

#[no_mangle]
pub unsafe extern "C" fn nlos_transient_free(t: *mut NlosTransient) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Wraps `len = 3 * scan_res^2 * depth_res` values as a directional albedo volume.
#[no_mangle]
pub unsafe extern "C" fn nlos_albedo_new(
    grid: *const NlosGrid,
    data: *const f64,
    len: usize,
    out: *mut *mut NlosAlbedo,
) -> NlosStatus {
    guard(|| {
        let grid = to_grid(deref(grid, "grid")?)?;
        let shape = grid.albedo_shape();
        let values = slice(data, len, shape.0 * shape.1 * shape.2 * shape.3)?;
        let array = Array4::from_shape_vec(shape, values.to_vec()).expect("length checked");
        if out.is_null() {
            return Err(null("out"));
        }
        put(out, NlosAlbedo(DirectionalAlbedoVolume::new(grid, array).map_err(lib)?));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn nlos_albedo_len(a: *const NlosAlbedo) -> usize {
    a.as_ref().map_or(0, |a| a.0.data().len())
}

#[no_mangle]
pub unsafe extern "C" fn nlos_albedo_copy(a: *const NlosAlbedo, out: *mut f64, len: usize) -> NlosStatus {
    guard(|| {
        let a = deref(a, "albedo")?;
        copy_out(&a.0.data().iter().copied().collect::<Vec<_>>(), out, len)
    })
}

#[no_mangle]
pub unsafe extern "C" fn nlos_albedo_free(a: *mut NlosAlbedo) {
    if !a.is_null() {
        drop(Box::from_raw(a));
    }
}

/// `H rho`.
#[no_mangle]
pub unsafe extern "C" fn nlos_forward(
    op: *const NlosOperator,
    rho: *const NlosAlbedo,
    out: *mut *mut NlosTransient,
) -> NlosStatus {
    guard(|| {
        let (op, rho) = (deref(op, "op")?, deref(rho, "rho")?);
        if out.is_null() {
            return Err(null("out"));
        }
        put(out, NlosTransient(op.0.forward(&rho.0).map_err(lib)?));
        Ok(())
    })
}

/// `H^T tau`.
#[no_mangle]
pub unsafe extern "C" fn nlos_adjoint(
    op: *const NlosOperator,
    tau: *const NlosTransient,
    out: *mut *mut NlosAlbedo,
) -> NlosStatus {
    guard(|| {
        let (op, tau) = (deref(op, "op")?, deref(tau, "tau")?);
        if out.is_null() {
            return Err(null("out"));
        }
        put(out, NlosAlbedo(op.0.adjoint(&tau.0).map_err(lib)?));
        Ok(())
    })
}

/// Renders a built-in scene at `depth` meters. `truth` may be null.
#[no_mangle]
pub unsafe extern "C" fn nlos_simulate(
    grid: *const NlosGrid,
    scene: NlosScene,
    depth: f64,
    measurement: *mut *mut NlosTransient,
    truth: *mut *mut NlosAlbedo,
) -> NlosStatus {
    guard(|| {
        let grid = to_grid(deref(grid, "grid")?)?;
        if measurement.is_null() {
            return Err(null("measurement"));
        }
        let scene = match scene {
            NlosScene::TPlane => SurfelScene::t_plane(&grid, depth),
            NlosScene::SingleSurfel => SurfelScene::single_surfel(&grid, depth),
        };
        let tau = render_transients(&scene, &grid, true).map_err(lib)?;
        if !truth.is_null() {
            put(truth, NlosAlbedo(rasterize_scene(&scene, &grid).map_err(lib)?));
        }
        put(measurement, NlosTransient(tau));
        Ok(())
    })
}

/// Poisson photon noise at `peak_photons` plus Gaussian read noise.
#[no_mangle]
pub unsafe extern "C" fn nlos_apply_noise(
    clean: *const NlosTransient,
    peak_photons: f64,
    gaussian_sigma: f64,
    seed: u64,
    out: *mut *mut NlosTransient,
) -> NlosStatus {
    guard(|| {
        let clean = deref(clean, "clean")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let spec = NoiseSpec {
            peak_photons,
            gaussian_sigma,
            seed,
        };
        put(out, NlosTransient(apply_noise(&clean.0, &spec).map_err(lib)?));
        Ok(())
    })
}

/// Runs the configured solver. `iterations` may be null.
#[no_mangle]
pub unsafe extern "C" fn nlos_reconstruct(
    op: *const NlosOperator,
    tau: *const NlosTransient,
    config: *const NlosSolverConfig,
    out: *mut *mut NlosAlbedo,
    iterations: *mut u32,
) -> NlosStatus {
    guard(|| {
        let (op, tau, c) = (deref(op, "op")?, deref(tau, "tau")?, deref(config, "config")?);
        if out.is_null() {
            return Err(null("out"));
        }
        let config = SolverConfig {
            method: match c.method {
                NlosMethod::Ss => Method::Ss,
                NlosMethod::LocalSs => Method::LocalSs,
                NlosMethod::L1 => Method::L1,
                NlosMethod::Wiener => Method::Wiener,
            },
            lambda: c.lambda,
            max_iters: c.max_iters as usize,
            rel_tol: c.rel_tol,
            window: WindowSpec::new(c.window_len as usize, c.window_sigma).map_err(lib)?,
            wiener_alpha: c.wiener_alpha,
            monotone_restart: c.monotone_restart,
            ..SolverConfig::default()
        };
        let (rho, report) = reconstruct(&op.0, &tau.0, &config).map_err(lib)?;
        if !iterations.is_null() {
            *iterations = report.iterations as u32;
        }
        put(out, NlosAlbedo(rho));
        Ok(())
    })
}

/// PSNR in dB between the normalized albedo projections of two volumes.
#[no_mangle]
pub unsafe extern "C" fn nlos_albedo_psnr(
    recon: *const NlosAlbedo,
    truth: *const NlosAlbedo,
    out: *mut f64,
) -> NlosStatus {
    guard(|| {
        let (r, t) = (deref(recon, "recon")?, deref(truth, "truth")?);
        if out.is_null() {
            return Err(null("out"));
        }
        let a = extract_maps(&r.0, DEFAULT_MASK_THRESHOLD);
        let b = extract_maps(&t.0, DEFAULT_MASK_THRESHOLD);
        *out = psnr(&a.albedo, &b.albedo).map_err(lib)?;
        Ok(())
    })
}
