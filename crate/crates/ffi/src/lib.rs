//! C interface to the hierarchical spectral solver.
//!
//! A solver handle owns a layout, an operator and, after
//! `hps_solver_precompute`, the factored operator tree. Every entry point
//! returns an `HpsStatus`; on failure `hps_last_error_message` describes the
//! error on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, c_void, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::Arc;

use hps_core::geometry::{DomainSpec, SolverTree};
use hps_core::hps::FactorOptions;
use hps_core::pde::{Coefficient, EllipticOperator};
use hps_core::solver::{precompute, solve, SolverOptions, SolverState};
use hps_core::HpsError;

/// Status codes returned by every function.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HpsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    Ellipticity = 4,
    NonFiniteCoefficient = 5,
    ResonantLeaf = 6,
    ResonantMerge = 7,
    UndecomposableLayout = 8,
    InconsistentChildren = 9,
    DimensionMismatch = 10,
    SingularSystem = 11,
    ProbeNotOnMesh = 12,
    InsufficientPoints = 13,
    Format = 14,
    Io = 15,
    NotPrecomputed = 16,
    Panic = 17,
}

impl From<&HpsError> for HpsStatus {
    fn from(e: &HpsError) -> Self {
        match e {
            HpsError::InvalidArgument(_) => HpsStatus::InvalidArgument,
            HpsError::Domain(_) => HpsStatus::Domain,
            HpsError::EllipticityViolation { .. } => HpsStatus::Ellipticity,
            HpsError::NonFiniteCoefficient { .. } => HpsStatus::NonFiniteCoefficient,
            HpsError::ResonantLeaf { .. } => HpsStatus::ResonantLeaf,
            HpsError::ResonantMerge { .. } => HpsStatus::ResonantMerge,
            HpsError::UndecomposableLayout(_) => HpsStatus::UndecomposableLayout,
            HpsError::InconsistentChildren { .. } => HpsStatus::InconsistentChildren,
            HpsError::DimensionMismatch { .. } => HpsStatus::DimensionMismatch,
            HpsError::SingularSystem { .. } => HpsStatus::SingularSystem,
            HpsError::ProbeNotOnMesh { .. } => HpsStatus::ProbeNotOnMesh,
            HpsError::InsufficientPoints { .. } => HpsStatus::InsufficientPoints,
            HpsError::Format(_) => HpsStatus::Format,
            HpsError::Io(_) => HpsStatus::Io,
        }
    }
}

/// Leaf layout: `nx × ny` square cells of side `h` with lower-left corner at
/// `(origin_x, origin_y)`. `mask` holds `nx·ny` bytes, cell `(cx, cy)` at
/// `cx + nx·cy`, nonzero meaning present; a null `mask` selects all cells.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct HpsLayout {
    pub p: usize,
    pub nx: usize,
    pub ny: usize,
    pub mask: *const u8,
    pub h: f64,
    pub origin_x: f64,
    pub origin_y: f64,
}

/// Scalar field callback `b(x₁, x₂)`. It may be called from several threads
/// at once.
pub type HpsField = Option<unsafe extern "C" fn(x1: f64, x2: f64, user_data: *mut c_void) -> f64>;

/// The operator `−Δu − s ∂₂u − κ²(1 − b(x)) u`, with `b ≡ 0` when
/// `potential` is null.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct HpsOperator {
    pub kappa: f64,
    pub convection: f64,
    pub potential: HpsField,
    pub potential_data: *mut c_void,
    /// Lower bound on reciprocal condition estimates; values ≤ 0 select the default.
    pub rcond_min: f64,
    /// Nonzero keeps only the derivative rows later merges need.
    pub restrict_rows: u8,
}

/// Opaque solver handle.
pub struct HpsSolver {
    tree: Option<SolverTree>,
    /// Absent for handles loaded from a file.
    operator: Option<EllipticOperator>,
    options: SolverOptions,
    state: Option<SolverState>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: HpsStatus, msg: impl Into<String>) -> HpsStatus {
    set_last_error(msg.into());
    status
}

fn guard(f: impl FnOnce() -> Result<(), HpsStatus>) -> HpsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HpsStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(HpsStatus::Panic, "internal panic"),
    }
}

fn core_err(e: HpsError) -> HpsStatus {
    let status = HpsStatus::from(&e);
    fail(status, e.to_string())
}

struct ForeignField {
    f: unsafe extern "C" fn(f64, f64, *mut c_void) -> f64,
    data: *mut c_void,
}

// The caller guarantees the callback and its data are usable from any thread.
unsafe impl Send for ForeignField {}
unsafe impl Sync for ForeignField {}

fn build_operator(op: &HpsOperator) -> EllipticOperator {
    let mut out = EllipticOperator::convection_diffusion(op.convection);
    let k2 = op.kappa * op.kappa;
    out.c = match op.potential {
        None if k2 == 0.0 => Coefficient::Zero,
        None => Coefficient::Constant(-k2),
        Some(f) => {
            let field = Arc::new(ForeignField {
                f,
                data: op.potential_data,
            });
            Coefficient::field(move |x| {
                let b = unsafe { (field.f)(x[0], x[1], field.data) };
                -k2 * (1.0 - b)
            })
        }
    };
    out
}

fn layout_spec(layout: &HpsLayout) -> Result<DomainSpec, HpsStatus> {
    let cells = layout
        .nx
        .checked_mul(layout.ny)
        .ok_or_else(|| fail(HpsStatus::InvalidArgument, "layout too large"))?;
    let mask = if layout.mask.is_null() {
        vec![true; cells]
    } else {
        unsafe { std::slice::from_raw_parts(layout.mask, cells) }
            .iter()
            .map(|&b| b != 0)
            .collect()
    };
    Ok(DomainSpec {
        p: layout.p,
        nx: layout.nx,
        ny: layout.ny,
        mask,
        h: layout.h,
        origin: [layout.origin_x, layout.origin_y],
    })
}

unsafe fn handle<'a>(solver: *const HpsSolver) -> Result<&'a HpsSolver, HpsStatus> {
    solver
        .as_ref()
        .ok_or_else(|| fail(HpsStatus::NullPointer, "null solver handle"))
}

unsafe fn handle_mut<'a>(solver: *mut HpsSolver) -> Result<&'a mut HpsSolver, HpsStatus> {
    solver
        .as_mut()
        .ok_or_else(|| fail(HpsStatus::NullPointer, "null solver handle"))
}

impl HpsSolver {
    fn tree(&self) -> &SolverTree {
        match (&self.state, &self.tree) {
            (Some(s), _) => &s.tree,
            (None, Some(t)) => t,
            (None, None) => unreachable!("handle always holds a tree"),
        }
    }
}

/// Creates a solver for `layout` and `op`. On success `*out` receives a
/// handle to release with `hps_solver_free`.
///
/// # Safety
/// `layout` and `op` must point to valid structs; `layout.mask`, when not
/// null, must hold `nx·ny` bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hps_solver_new(
    layout: *const HpsLayout,
    op: *const HpsOperator,
    out: *mut *mut HpsSolver,
) -> HpsStatus {
    guard(|| {
        if layout.is_null() || op.is_null() || out.is_null() {
            return Err(fail(HpsStatus::NullPointer, "null argument"));
        }
        *out = ptr::null_mut();
        let (layout, op) = (&*layout, &*op);
        let spec = layout_spec(layout)?;
        let tree = SolverTree::new(spec).map_err(core_err)?;
        let mut factor = FactorOptions::default();
        if op.rcond_min > 0.0 {
            factor.rcond_min = op.rcond_min;
        }
        let solver = HpsSolver {
            tree: Some(tree),
            operator: Some(build_operator(op)),
            options: SolverOptions {
                factor,
                restrict_rows: op.restrict_rows != 0,
            },
            state: None,
        };
        *out = Box::into_raw(Box::new(solver));
        Ok(())
    })
}

/// Builds all solution operators. Calling it again rebuilds them.
///
/// # Safety
/// `solver` must be a handle from `hps_solver_new` or `hps_solver_load`.
#[no_mangle]
pub unsafe extern "C" fn hps_solver_precompute(solver: *mut HpsSolver) -> HpsStatus {
    guard(|| {
        let s = handle_mut(solver)?;
        let Some(operator) = s.operator.clone() else {
            return Err(fail(HpsStatus::InvalidArgument, "handle was loaded from a file and has no operator"));
        };
        let tree = match s.state.take() {
            Some(state) => state.tree,
            None => s.tree.take().expect("tree present before precompute"),
        };
        let backup = tree.clone();
        match precompute(tree, &operator, &s.options) {
            Ok(state) => {
                s.state = Some(state);
                Ok(())
            }
            Err(e) => {
                s.tree = Some(backup);
                Err(core_err(e))
            }
        }
    })
}

/// Number of mesh nodes `N`, or 0 for a null handle.
///
/// # Safety
/// `solver` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn hps_solver_node_count(solver: *const HpsSolver) -> usize {
    solver.as_ref().map_or(0, |s| s.tree().mesh.len())
}

/// Number of boundary nodes, or 0 for a null handle.
///
/// # Safety
/// `solver` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn hps_solver_boundary_count(solver: *const HpsSolver) -> usize {
    solver.as_ref().map_or(0, |s| s.tree().boundary().len())
}

/// Writes node coordinates as `x₁, x₂` pairs into `xy` (length `2N`).
///
/// # Safety
/// `xy` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn hps_solver_coordinates(solver: *const HpsSolver, xy: *mut f64, len: usize) -> HpsStatus {
    guard(|| {
        let s = handle(solver)?;
        let coords = &s.tree().mesh.coords;
        if xy.is_null() {
            return Err(fail(HpsStatus::NullPointer, "null output buffer"));
        }
        if len != 2 * coords.len() {
            return Err(core_err(HpsError::DimensionMismatch {
                expected: 2 * coords.len(),
                got: len,
            }));
        }
        let out = std::slice::from_raw_parts_mut(xy, len);
        for (k, c) in coords.iter().enumerate() {
            out[2 * k] = c[0];
            out[2 * k + 1] = c[1];
        }
        Ok(())
    })
}

/// Writes the global indices of the boundary nodes, in the order boundary
/// data is expected.
///
/// # Safety
/// `indices` must hold `len` entries.
#[no_mangle]
pub unsafe extern "C" fn hps_solver_boundary_indices(
    solver: *const HpsSolver,
    indices: *mut usize,
    len: usize,
) -> HpsStatus {
    guard(|| {
        let s = handle(solver)?;
        let gamma = s.tree().boundary();
        if indices.is_null() {
            return Err(fail(HpsStatus::NullPointer, "null output buffer"));
        }
        if len != gamma.len() {
            return Err(core_err(HpsError::DimensionMismatch {
                expected: gamma.len(),
                got: len,
            }));
        }
        std::slice::from_raw_parts_mut(indices, len).copy_from_slice(gamma);
        Ok(())
    })
}

/// Solves with boundary data `f` (one value per boundary node). Writes `u`
/// at all `N` nodes; `v` and `w`, if not null, receive `∂₁u` and `∂₂u` at the
/// boundary nodes.
///
/// # Safety
/// `f` must hold `f_len` doubles, `u` `u_len` doubles, and `v`/`w` (if not
/// null) `f_len` doubles each.
#[no_mangle]
pub unsafe extern "C" fn hps_solver_solve(
    solver: *const HpsSolver,
    f: *const f64,
    f_len: usize,
    u: *mut f64,
    u_len: usize,
    v: *mut f64,
    w: *mut f64,
) -> HpsStatus {
    guard(|| {
        let s = handle(solver)?;
        let state = s
            .state
            .as_ref()
            .ok_or_else(|| fail(HpsStatus::NotPrecomputed, "call hps_solver_precompute first"))?;
        if f.is_null() || u.is_null() {
            return Err(fail(HpsStatus::NullPointer, "null data buffer"));
        }
        let n = state.tree.mesh.len();
        if u_len != n {
            return Err(core_err(HpsError::DimensionMismatch { expected: n, got: u_len }));
        }
        let data = std::slice::from_raw_parts(f, f_len);
        let sol = solve(state, data).map_err(core_err)?;
        std::slice::from_raw_parts_mut(u, n).copy_from_slice(&sol.u);
        if !v.is_null() {
            std::slice::from_raw_parts_mut(v, f_len).copy_from_slice(&sol.v_bnd);
        }
        if !w.is_null() {
            std::slice::from_raw_parts_mut(w, f_len).copy_from_slice(&sol.w_bnd);
        }
        Ok(())
    })
}

/// Smallest reciprocal condition estimate over all nodes, or NaN before
/// pre-computation.
///
/// # Safety
/// `solver` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn hps_solver_min_rcond(solver: *const HpsSolver) -> f64 {
    solver
        .as_ref()
        .and_then(|s| s.state.as_ref())
        .map_or(f64::NAN, |st| st.min_rcond())
}

/// Writes the pre-computed operators to `path`.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn hps_solver_save(solver: *const HpsSolver, path: *const c_char) -> HpsStatus {
    guard(|| {
        let s = handle(solver)?;
        let state = s
            .state
            .as_ref()
            .ok_or_else(|| fail(HpsStatus::NotPrecomputed, "nothing to save"))?;
        let path = c_path(path)?;
        state.save(Path::new(&path)).map_err(core_err)
    })
}

/// Loads operators written by `hps_solver_save`. The returned handle can
/// solve immediately; it has no operator, so `hps_solver_precompute` fails
/// on it.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hps_solver_load(path: *const c_char, out: *mut *mut HpsSolver) -> HpsStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(HpsStatus::NullPointer, "null output handle"));
        }
        *out = ptr::null_mut();
        let path = c_path(path)?;
        let state = SolverState::load(Path::new(&path)).map_err(core_err)?;
        let solver = HpsSolver {
            tree: None,
            operator: None,
            options: SolverOptions {
                restrict_rows: state.restrict_rows,
                ..Default::default()
            },
            state: Some(state),
        };
        *out = Box::into_raw(Box::new(solver));
        Ok(())
    })
}

unsafe fn c_path(path: *const c_char) -> Result<String, HpsStatus> {
    if path.is_null() {
        return Err(fail(HpsStatus::NullPointer, "null path"));
    }
    CStr::from_ptr(path)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| fail(HpsStatus::InvalidArgument, "path is not UTF-8"))
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `solver` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hps_solver_free(solver: *mut HpsSolver) {
    if !solver.is_null() {
        drop(Box::from_raw(solver));
    }
}

/// Message for the last failure on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hps_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hps_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
