//! C ABI over the poreflow library.
//!
//! Images travel as opaque handles; every other type crossing the boundary
//! is a flat C struct. Functions return a status code, `POREFLOW_STATUS_OK`
//! on success, and stash a human-readable message retrievable through
//! [poreflow_last_error_message] otherwise. Panics are caught at the
//! boundary and reported as a status instead of unwinding into C.
//!
//! The generated header lands in `include/poreflow.h` at build time.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use poreflow::classify::{classify, Category};
use poreflow::grid::{BoundaryCondition, Model};
use poreflow::post::effective_permeability;
use poreflow::solver::{auto_workflow, solve_image, SolverConfig};
use poreflow::voxel::{Axis, VoxelImage};
use poreflow::Error;

pub const POREFLOW_AXIS_X: c_int = 0;
pub const POREFLOW_AXIS_Y: c_int = 1;
pub const POREFLOW_AXIS_Z: c_int = 2;

/// Model selection: AUTO picks the model the connectivity category calls for.
pub const POREFLOW_MODEL_AUTO: c_int = 0;
pub const POREFLOW_MODEL_STOKES: c_int = 1;
pub const POREFLOW_MODEL_STOKES_BRINKMAN: c_int = 2;
pub const POREFLOW_MODEL_BRINKMAN: c_int = 3;
pub const POREFLOW_MODEL_DARCY: c_int = 4;
/// Reported when no solve ran (non-percolating sample under AUTO).
pub const POREFLOW_MODEL_NONE: c_int = -1;

pub const POREFLOW_BC_PRESSURE_DROP: c_int = 0;
pub const POREFLOW_BC_PERIODIC: c_int = 1;

/// Fluid and porous voxels together span inlet to outlet, pure fluid does not.
pub const POREFLOW_CATEGORY_A: c_int = 0;
/// The pure-fluid phase percolates on its own.
pub const POREFLOW_CATEGORY_B: c_int = 1;
/// No spanning path even through porous voxels.
pub const POREFLOW_CATEGORY_NON_PERCOLATING: c_int = 2;

/// Call outcome. Anything but OK leaves a message for
/// [poreflow_last_error_message].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoreflowStatus {
    Ok = 0,
    Io = 1,
    /// Invalid configuration, dimensions or voxel data.
    Config = 2,
    /// A solve was forced on a sample with no spanning pore path.
    NonPercolating = 3,
    /// Iteration budget exhausted or the operator lost definiteness.
    NonConvergence = 4,
    /// Null pointer or out-of-range enum value at the boundary.
    InvalidArgument = 5,
    /// Internal panic caught at the boundary.
    Panic = 6,
}

/// Opaque voxel image handle. Create with [poreflow_image_create] or
/// [poreflow_image_load_raw], release with [poreflow_image_free].
pub struct PoreflowImage {
    image: VoxelImage,
}

/// Connectivity of one image along one axis.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct PoreflowConnectivity {
    /// One of the POREFLOW_CATEGORY constants.
    pub category: c_int,
    /// Non-solid voxels that belong to no spanning component.
    pub removed_voxels: u64,
    /// Spanning components after isolated-region removal.
    pub component_count: u64,
}

/// Everything a solve needs. Fill with [poreflow_default_options] first and
/// override fields as needed; zero or negative tolerance overrides mean
/// "derive from rtol_s", a non-positive k_stokes_mkda means "no fictitious
/// fluid permeability".
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct PoreflowSolveOptions {
    /// Flow direction, one of the POREFLOW_AXIS constants.
    pub axis: c_int,
    /// One of the POREFLOW_MODEL constants (AUTO classifies first).
    pub model: c_int,
    /// One of the POREFLOW_BC constants.
    pub bc: c_int,
    pub p_in: f64,
    pub p_out: f64,
    /// Physical edge length of the sample box in meters.
    pub l_meters: f64,
    /// Outer relative residual target.
    pub rtol_s: f64,
    /// Velocity-solve tolerance; <= 0 derives 1e-2 * rtol_s.
    pub rtol_a: f64,
    /// Preconditioner tolerance; <= 0 derives rtol_s.
    pub rtol_shat: f64,
    pub maxit_outer: i64,
    pub maxit_inner: i64,
    /// Fictitious fluid permeability in mkDa for Brinkman and Darcy.
    pub k_stokes_mkda: f64,
    /// Zero recorded wall times so repeated runs are byte-identical.
    pub deterministic: bool,
}

/// One permeability computation: classification, model, reduced
/// permeability and solver statistics.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct PoreflowPermeability {
    /// One of the POREFLOW_CATEGORY constants.
    pub category: c_int,
    /// Model actually solved; POREFLOW_MODEL_NONE when nothing ran.
    pub model: c_int,
    /// One of the POREFLOW_AXIS constants.
    pub direction: c_int,
    /// Dimensionless permeability of the unit cube.
    pub k_hat: f64,
    pub k_m2: f64,
    pub k_mkda: f64,
    /// Volume-averaged flow-axis velocity.
    pub darcy_velocity: f64,
    /// Applied drop; zero under periodic forcing.
    pub pressure_drop: f64,
    /// Independent estimate from the outlet-plane flux.
    pub k_hat_flux: f64,
    /// L2 norm of the discrete divergence of the reported velocity.
    pub divergence_norm: f64,
    pub iterations_outer: u64,
    pub inner_iterations_total: u64,
    /// Final relative residual of the pressure system.
    pub rel_residual: f64,
    pub wall_time_s: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let cleaned: String = msg.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(cleaned).expect("NUL-free message");
    });
}

fn status_for(err: &Error) -> PoreflowStatus {
    match err {
        Error::Io(_) => PoreflowStatus::Io,
        Error::Dimension(_)
        | Error::InvalidPorosity { .. }
        | Error::Domain(_)
        | Error::Config(_)
        | Error::Contract(_) => PoreflowStatus::Config,
        Error::NonPercolating(_) => PoreflowStatus::NonPercolating,
        Error::NonConvergence { .. } | Error::Indefinite { .. } => {
            PoreflowStatus::NonConvergence
        }
    }
}

fn fail(err: &Error) -> PoreflowStatus {
    set_error(&err.to_string());
    status_for(err)
}

fn invalid(msg: &str) -> PoreflowStatus {
    set_error(msg);
    PoreflowStatus::InvalidArgument
}

/// Run `f`, converting panics into a status instead of unwinding into C.
fn guarded(f: impl FnOnce() -> PoreflowStatus) -> PoreflowStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            set_error(&format!("internal panic: {msg}"));
            PoreflowStatus::Panic
        }
    }
}

fn axis_from(v: c_int) -> Option<Axis> {
    match v {
        POREFLOW_AXIS_X => Some(Axis::X),
        POREFLOW_AXIS_Y => Some(Axis::Y),
        POREFLOW_AXIS_Z => Some(Axis::Z),
        _ => None,
    }
}

fn axis_code(axis: Axis) -> c_int {
    match axis {
        Axis::X => POREFLOW_AXIS_X,
        Axis::Y => POREFLOW_AXIS_Y,
        Axis::Z => POREFLOW_AXIS_Z,
    }
}

fn bc_from(v: c_int) -> Option<BoundaryCondition> {
    match v {
        POREFLOW_BC_PRESSURE_DROP => Some(BoundaryCondition::PressureDrop),
        POREFLOW_BC_PERIODIC => Some(BoundaryCondition::Periodic),
        _ => None,
    }
}

fn model_code(model: Model) -> c_int {
    match model {
        Model::Stokes => POREFLOW_MODEL_STOKES,
        Model::StokesBrinkman => POREFLOW_MODEL_STOKES_BRINKMAN,
        Model::Brinkman => POREFLOW_MODEL_BRINKMAN,
        Model::Darcy => POREFLOW_MODEL_DARCY,
    }
}

fn category_code(category: Category) -> c_int {
    match category {
        Category::A => POREFLOW_CATEGORY_A,
        Category::B => POREFLOW_CATEGORY_B,
        Category::NonPercolating => POREFLOW_CATEGORY_NON_PERCOLATING,
    }
}

fn solver_config(o: &PoreflowSolveOptions) -> Result<SolverConfig, PoreflowStatus> {
    if o.maxit_outer < 0 || o.maxit_inner < 0 {
        return Err(invalid("iteration budgets must be non-negative"));
    }
    Ok(SolverConfig {
        rtol_s: o.rtol_s,
        rtol_a_override: (o.rtol_a > 0.0).then_some(o.rtol_a),
        rtol_shat_override: (o.rtol_shat > 0.0).then_some(o.rtol_shat),
        maxit_outer: o.maxit_outer as usize,
        maxit_inner: o.maxit_inner as usize,
        k_stokes_mkda: (o.k_stokes_mkda > 0.0).then_some(o.k_stokes_mkda),
        deterministic: o.deterministic,
    })
}

/// Message describing the most recent failure on this thread. The pointer
/// stays valid until the next poreflow call on the same thread; the string
/// is empty if nothing failed yet.
#[no_mangle]
pub extern "C" fn poreflow_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Create an image from a voxel buffer of porosity bytes in 0..=100,
/// x-fastest layout, length nx*ny*nz.
///
/// # Safety
/// `data` must point to `len` readable bytes and `out` to a writable image
/// pointer. The buffer is copied; the caller keeps ownership of `data`.
#[no_mangle]
pub unsafe extern "C" fn poreflow_image_create(
    data: *const u8,
    len: usize,
    nx: usize,
    ny: usize,
    nz: usize,
    out: *mut *mut PoreflowImage,
) -> PoreflowStatus {
    guarded(|| {
        if data.is_null() || out.is_null() {
            return invalid("null pointer");
        }
        let bytes = unsafe { std::slice::from_raw_parts(data, len) }.to_vec();
        match VoxelImage::new([nx, ny, nz], bytes) {
            Ok(image) => {
                unsafe { *out = Box::into_raw(Box::new(PoreflowImage { image })) };
                PoreflowStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Load a raw image file of nx*ny*nz porosity bytes.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable image pointer.
#[no_mangle]
pub unsafe extern "C" fn poreflow_image_load_raw(
    path: *const c_char,
    nx: usize,
    ny: usize,
    nz: usize,
    out: *mut *mut PoreflowImage,
) -> PoreflowStatus {
    guarded(|| {
        if path.is_null() || out.is_null() {
            return invalid("null pointer");
        }
        let path = match unsafe { CStr::from_ptr(path) }.to_str() {
            Ok(s) => PathBuf::from(s),
            Err(_) => return invalid("path is not valid UTF-8"),
        };
        match VoxelImage::load_raw(&path, [nx, ny, nz]) {
            Ok(image) => {
                unsafe { *out = Box::into_raw(Box::new(PoreflowImage { image })) };
                PoreflowStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Release an image handle. Null is a no-op.
///
/// # Safety
/// `image` must be a pointer returned by an image constructor, not yet
/// freed; it is invalid after this call.
#[no_mangle]
pub unsafe extern "C" fn poreflow_image_free(image: *mut PoreflowImage) {
    if !image.is_null() {
        drop(unsafe { Box::from_raw(image) });
    }
}

/// Total, resolved (pure fluid) and unresolved (porous) porosity fractions.
///
/// # Safety
/// `image` must be a live image handle; the three outputs must be writable
/// or null (null outputs are skipped).
#[no_mangle]
pub unsafe extern "C" fn poreflow_image_porosity(
    image: *const PoreflowImage,
    total: *mut f64,
    resolved: *mut f64,
    unresolved: *mut f64,
) -> PoreflowStatus {
    guarded(|| {
        let Some(handle) = (unsafe { image.as_ref() }) else {
            return invalid("null image");
        };
        let (t, r, u) = handle.image.porosity_stats();
        unsafe {
            if !total.is_null() {
                *total = t;
            }
            if !resolved.is_null() {
                *resolved = r;
            }
            if !unresolved.is_null() {
                *unresolved = u;
            }
        }
        PoreflowStatus::Ok
    })
}

/// Classify pore-space connectivity along one axis.
///
/// # Safety
/// `image` must be a live image handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn poreflow_classify(
    image: *const PoreflowImage,
    axis: c_int,
    out: *mut PoreflowConnectivity,
) -> PoreflowStatus {
    guarded(|| {
        let Some(handle) = (unsafe { image.as_ref() }) else {
            return invalid("null image");
        };
        if out.is_null() {
            return invalid("null output");
        }
        let Some(axis) = axis_from(axis) else {
            return invalid("axis must be 0, 1 or 2");
        };
        let report = classify(&handle.image, axis);
        unsafe {
            *out = PoreflowConnectivity {
                category: category_code(report.category),
                removed_voxels: report.removed_voxels as u64,
                component_count: report.component_count as u64,
            };
        }
        PoreflowStatus::Ok
    })
}

/// Fill `out` with the default solve options: auto model, pressure drop
/// 1 → 0 along z, L = 1 m, rtol 1e-8, derived inner tolerances,
/// K_stokes = 1e7 mkDa.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn poreflow_default_options(
    out: *mut PoreflowSolveOptions,
) -> PoreflowStatus {
    guarded(|| {
        if out.is_null() {
            return invalid("null output");
        }
        let defaults = SolverConfig::default();
        unsafe {
            *out = PoreflowSolveOptions {
                axis: POREFLOW_AXIS_Z,
                model: POREFLOW_MODEL_AUTO,
                bc: POREFLOW_BC_PRESSURE_DROP,
                p_in: 1.0,
                p_out: 0.0,
                l_meters: 1.0,
                rtol_s: defaults.rtol_s,
                rtol_a: 0.0,
                rtol_shat: 0.0,
                maxit_outer: defaults.maxit_outer as i64,
                maxit_inner: defaults.maxit_inner as i64,
                k_stokes_mkda: defaults.k_stokes_mkda.unwrap_or(0.0),
                deterministic: false,
            };
        }
        PoreflowStatus::Ok
    })
}

/// Compute the effective permeability of `image` under `options`.
///
/// In AUTO mode a non-percolating sample succeeds with a zero record; a
/// forced model on such a sample returns NON_PERCOLATING instead.
///
/// # Safety
/// `image` must be a live image handle, `options` readable, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn poreflow_solve(
    image: *const PoreflowImage,
    options: *const PoreflowSolveOptions,
    out: *mut PoreflowPermeability,
) -> PoreflowStatus {
    guarded(|| {
        let Some(handle) = (unsafe { image.as_ref() }) else {
            return invalid("null image");
        };
        let Some(o) = (unsafe { options.as_ref() }) else {
            return invalid("null options");
        };
        if out.is_null() {
            return invalid("null output");
        }
        let Some(axis) = axis_from(o.axis) else {
            return invalid("axis must be 0, 1 or 2");
        };
        let Some(bc) = bc_from(o.bc) else {
            return invalid("bc must be 0 (pressure drop) or 1 (periodic)");
        };
        let cfg = match solver_config(o) {
            Ok(cfg) => cfg,
            Err(status) => return status,
        };
        let dp = (o.p_in, o.p_out);

        let (category, model, result, stats) = match o.model {
            POREFLOW_MODEL_AUTO => {
                let flow = match auto_workflow(&handle.image, axis, bc, dp, o.l_meters, &cfg) {
                    Ok(flow) => flow,
                    Err(e) => return fail(&e),
                };
                let model = flow
                    .model
                    .map(model_code)
                    .unwrap_or(POREFLOW_MODEL_NONE);
                let stats = flow.solution.map(|s| s.stats);
                (flow.report.category, model, flow.result, stats)
            }
            forced => {
                let model = match forced {
                    POREFLOW_MODEL_STOKES => Model::Stokes,
                    POREFLOW_MODEL_STOKES_BRINKMAN => Model::StokesBrinkman,
                    POREFLOW_MODEL_BRINKMAN => Model::Brinkman,
                    POREFLOW_MODEL_DARCY => Model::Darcy,
                    _ => return invalid("model must be one of the POREFLOW_MODEL constants"),
                };
                let sol = match solve_image(&handle.image, axis, model, bc, dp, o.l_meters, &cfg)
                {
                    Ok(sol) => sol,
                    Err(e) => return fail(&e),
                };
                let result = match effective_permeability(&sol) {
                    Ok(r) => r,
                    Err(e) => return fail(&e),
                };
                let category = classify(&handle.image, axis).category;
                (category, model_code(model), result, Some(sol.stats))
            }
        };

        unsafe {
            *out = PoreflowPermeability {
                category: category_code(category),
                model,
                direction: axis_code(result.direction),
                k_hat: result.k_hat,
                k_m2: result.k_m2,
                k_mkda: result.k_mkda,
                darcy_velocity: result.darcy_velocity,
                pressure_drop: result.pressure_drop,
                k_hat_flux: result.k_hat_flux,
                divergence_norm: result.divergence_norm,
                iterations_outer: stats.map_or(0, |s| s.iterations_outer as u64),
                inner_iterations_total: stats.map_or(0, |s| s.inner_iterations_total as u64),
                rel_residual: stats.map_or(0.0, |s| s.rel_residual),
                wall_time_s: stats.map_or(0.0, |s| s.wall_time_s),
            };
        }
        PoreflowStatus::Ok
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_statuses_follow_the_exit_code_contract() {
        assert_eq!(status_for(&Error::Config("x".into())), PoreflowStatus::Config);
        assert_eq!(
            status_for(&Error::Dimension("x".into())),
            PoreflowStatus::Config
        );
        assert_eq!(
            status_for(&Error::NonPercolating("x".into())),
            PoreflowStatus::NonPercolating
        );
        assert_eq!(
            status_for(&Error::NonConvergence { iterations: 1, residual: 1.0, target: 0.5 }),
            PoreflowStatus::NonConvergence
        );
        assert_eq!(
            status_for(&Error::Indefinite { iteration: 2 }),
            PoreflowStatus::NonConvergence
        );
    }

    #[test]
    fn messages_survive_interior_nul_bytes() {
        set_error("broken\0message");
        let text = LAST_ERROR.with(|slot| slot.borrow().to_str().unwrap().to_string());
        assert_eq!(text, "brokenmessage");
    }
}
