//! C interface to `robustbond`.
//!
//! Every function returns an [`RbStatus`]. On failure a description is kept
//! per thread and can be read with [`rb_last_error_message`]. Matrices are
//! passed row-major. Market states are laid out as `T` yields followed by
//! `n` spreads.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::{DMatrix, DVector};
use robustbond::analysis::{worst_case, AnalysisKind};
use robustbond::construction::{
    robust_construct_cutting_plane, robust_construct_dual, CuttingPlaneOptions, HoldingsSet, ObjectiveSpec,
};
use robustbond::instruments::{price_bonds, sensitivities, CashFlowMatrix, Compounding, MarketState, Portfolio};
use robustbond::uncertainty::{BoxSet, EllipsoidSet, PolyhedralSet, UncertaintySet};
use robustbond::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    DomainError = 4,
    EmptySet = 5,
    UnboundedSet = 6,
    Unsupported = 7,
    SolverFailure = 8,
    Infeasible = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RbCompounding {
    Continuous = 0,
    Periodic = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RbAnalysis {
    Exact = 0,
    Linearized = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RbConstruction {
    /// Dual program for boxes and polyhedra, cutting plane otherwise.
    Auto = 0,
    Dual = 1,
    CuttingPlane = 2,
}

/// Cash flows plus a nominal market state.
pub struct RbModel {
    cf: CashFlowMatrix,
    m_nom: MarketState,
    comp: Compounding,
}

/// An uncertainty set over market states.
pub struct RbSet {
    set: UncertaintySet,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> RbStatus {
    match err {
        Error::DimensionMismatch { .. } => RbStatus::DimensionMismatch,
        Error::PeriodicDomain { .. } | Error::ZeroNominalValue => RbStatus::DomainError,
        Error::EmptySet => RbStatus::EmptySet,
        Error::UnboundedSet(_) => RbStatus::UnboundedSet,
        Error::Unsupported(_) => RbStatus::Unsupported,
        Error::Solver { .. } => RbStatus::SolverFailure,
        Error::Infeasible(_) => RbStatus::Infeasible,
        _ => RbStatus::InvalidArgument,
    }
}

struct Failure(RbStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(RbStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RbStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RbStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("panic inside robustbond".into());
            RbStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn model_ref<'a>(model: *const RbModel) -> Result<&'a RbModel, Failure> {
    model.as_ref().ok_or_else(|| null("model"))
}

unsafe fn set_ref<'a>(set: *const RbSet) -> Result<&'a RbSet, Failure> {
    set.as_ref().ok_or_else(|| null("set"))
}

unsafe fn state(p: *const f64, periods: usize, bonds: usize, what: &str) -> Result<MarketState, Failure> {
    let v = slice(p, periods + bonds, what)?;
    Ok(MarketState::from_vector(v, periods))
}

unsafe fn holdings(model: &RbModel, p: *const f64) -> Result<Portfolio, Failure> {
    Ok(Portfolio::new(slice(p, model.cf.num_bonds(), "holdings")?.to_vec())?)
}

fn store<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    // SAFETY: checked non-null; the caller provides a writable slot.
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

/// Message for the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn rb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds a model from an `n_bonds × n_periods` cash-flow matrix and a
/// nominal state of `n_periods + n_bonds` rates per period.
///
/// # Safety
/// `flows` must hold `n_bonds * n_periods` values, `nominal` must hold
/// `n_periods + n_bonds` values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rb_model_new(
    flows: *const f64,
    n_bonds: usize,
    n_periods: usize,
    nominal: *const f64,
    compounding: RbCompounding,
    out: *mut *mut RbModel,
) -> RbStatus {
    guard(|| {
        let f = slice(flows, n_bonds * n_periods, "flows")?;
        let cf = CashFlowMatrix::new(DMatrix::from_row_slice(n_bonds, n_periods, f))?;
        let m_nom = state(nominal, n_periods, n_bonds, "nominal state")?;
        m_nom.check_dims(&cf)?;
        let comp = match compounding {
            RbCompounding::Continuous => Compounding::Continuous,
            RbCompounding::Periodic => Compounding::Periodic,
        };
        price_bonds(&cf, &m_nom, comp)?;
        store(out, RbModel { cf, m_nom, comp })
    })
}

/// # Safety
/// `model` must be null or a handle from [`rb_model_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rb_model_free(model: *mut RbModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Writes the nominal bond prices (`n_bonds` values).
///
/// # Safety
/// `model` must be a live handle and `prices` must have room for `n_bonds` values.
#[no_mangle]
pub unsafe extern "C" fn rb_model_prices(model: *const RbModel, prices: *mut f64) -> RbStatus {
    guard(|| {
        let m = model_ref(model)?;
        let p = price_bonds(&m.cf, &m.m_nom, m.comp)?;
        slice_mut(prices, p.len(), "prices")?.copy_from_slice(&p);
        Ok(())
    })
}

/// Gradient of `log V` at the nominal state: `n_periods` yield entries
/// followed by `n_bonds` spread entries.
///
/// # Safety
/// `holdings_ptr` must hold `n_bonds` values and `gradient` must have room for
/// `n_periods + n_bonds` values.
#[no_mangle]
pub unsafe extern "C" fn rb_model_sensitivities(
    model: *const RbModel,
    holdings_ptr: *const f64,
    gradient: *mut f64,
) -> RbStatus {
    guard(|| {
        let m = model_ref(model)?;
        let h = holdings(m, holdings_ptr)?;
        let s = sensitivities(&m.cf, &m.m_nom, &h, m.comp)?;
        let out = slice_mut(gradient, s.d_yld.len() + s.d_spr.len(), "gradient")?;
        for (o, v) in out.iter_mut().zip(s.d_yld.iter().chain(&s.d_spr)) {
            *o = *v;
        }
        Ok(())
    })
}

/// A box `lower ≤ m ≤ upper`; both bounds hold `n_periods + n_bonds` values.
///
/// # Safety
/// `lower` and `upper` must hold `n_periods + n_bonds` values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rb_set_new_box(
    lower: *const f64,
    upper: *const f64,
    n_periods: usize,
    n_bonds: usize,
    out: *mut *mut RbSet,
) -> RbStatus {
    guard(|| {
        let lo = state(lower, n_periods, n_bonds, "lower")?;
        let hi = state(upper, n_periods, n_bonds, "upper")?;
        store(out, RbSet { set: UncertaintySet::Box(BoxSet::new(lo, hi)?) })
    })
}

/// The set `{center + L z : ‖z‖² ≤ radius_sq}` with `L` of size `dim × rank`.
///
/// # Safety
/// `center` must hold `dim` values, `factor` must hold `dim * rank` values
/// and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rb_set_new_ellipsoid(
    center: *const f64,
    factor: *const f64,
    dim: usize,
    rank: usize,
    radius_sq: f64,
    out: *mut *mut RbSet,
) -> RbStatus {
    guard(|| {
        let c = DVector::from_column_slice(slice(center, dim, "center")?);
        let l = DMatrix::from_row_slice(dim, rank, slice(factor, dim * rank, "factor")?);
        store(out, RbSet { set: UncertaintySet::Ellipsoid(EllipsoidSet::new(c, l, radius_sq, None)?) })
    })
}

/// The polyhedron `{m : A m ≤ b}` with `A` of size `rows × dim`.
///
/// # Safety
/// `a` must hold `rows * dim` values, `b` must hold `rows` values and `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn rb_set_new_polyhedral(
    a: *const f64,
    b: *const f64,
    rows: usize,
    dim: usize,
    out: *mut *mut RbSet,
) -> RbStatus {
    guard(|| {
        let a = DMatrix::from_row_slice(rows, dim, slice(a, rows * dim, "A")?);
        let b = DVector::from_column_slice(slice(b, rows, "b")?);
        store(out, RbSet { set: UncertaintySet::Polyhedral(PolyhedralSet::new(a, b)?) })
    })
}

/// # Safety
/// `set` must be null or a handle from one of the `rb_set_new_*` functions not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rb_set_free(set: *mut RbSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// Worst-case change in log value of `holdings` over the set.
///
/// `argmin` may be null; otherwise it receives `n_periods + n_bonds` values.
///
/// # Safety
/// Handles must be live, `holdings_ptr` must hold `n_bonds` values and
/// `delta_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rb_worst_case(
    model: *const RbModel,
    set: *const RbSet,
    holdings_ptr: *const f64,
    method: RbAnalysis,
    delta_out: *mut f64,
    argmin: *mut f64,
) -> RbStatus {
    guard(|| {
        let m = model_ref(model)?;
        let s = set_ref(set)?;
        let h = holdings(m, holdings_ptr)?;
        if delta_out.is_null() {
            return Err(null("delta_out"));
        }
        let kind = match method {
            RbAnalysis::Exact => AnalysisKind::Exact,
            RbAnalysis::Linearized => AnalysisKind::Linearized,
        };
        let res = worst_case(&m.cf, &m.m_nom, &h, &s.set, kind, m.comp)?;
        *delta_out = res.delta_wc;
        if !argmin.is_null() {
            let v = res.argmin_state.to_vector();
            slice_mut(argmin, v.len(), "argmin")?.copy_from_slice(&v);
        }
        Ok(())
    })
}

/// Robust holdings minimizing `½‖h − reference‖₁ − lambda·Δ^wc(h)`, with the
/// budget fixed at the nominal value of `reference`.
///
/// `holdings_out` receives `n_bonds` values and `worst_delta` (may be null)
/// the exact worst case at the solution.
///
/// # Safety
/// Handles must be live, `reference` must hold `n_bonds` values and
/// `holdings_out` must have room for `n_bonds` values.
#[no_mangle]
pub unsafe extern "C" fn rb_construct(
    model: *const RbModel,
    set: *const RbSet,
    reference: *const f64,
    lambda: f64,
    method: RbConstruction,
    holdings_out: *mut f64,
    worst_delta: *mut f64,
) -> RbStatus {
    guard(|| {
        let m = model_ref(model)?;
        let s = set_ref(set)?;
        if m.comp != Compounding::Continuous {
            return Err(Failure(
                RbStatus::Unsupported,
                "robust construction requires continuous compounding".into(),
            ));
        }
        let h_ref = holdings(m, reference)?;
        let out = slice_mut(holdings_out, m.cf.num_bonds(), "holdings_out")?;
        let hset = HoldingsSet::from_nominal(&m.cf, &m.m_nom, &h_ref)?;
        let obj = ObjectiveSpec::turnover(&h_ref, lambda)?;
        let poly = match &s.set {
            UncertaintySet::Box(b) => Some(PolyhedralSet::from_box(b)),
            UncertaintySet::Polyhedral(p) => Some(p.clone()),
            _ => None,
        };
        let opts = CuttingPlaneOptions::default();
        let sol = match (method, poly) {
            (RbConstruction::Auto | RbConstruction::Dual, Some(p)) => {
                robust_construct_dual(&m.cf, &m.m_nom, &obj, &hset, &p)?
            }
            (RbConstruction::Dual, None) => {
                return Err(Failure(RbStatus::Unsupported, "the dual program needs a box or polyhedral set".into()))
            }
            _ => robust_construct_cutting_plane(&m.cf, &m.m_nom, &obj, &hset, &s.set, &opts)?,
        };
        out.copy_from_slice(sol.h_star.holdings());
        if !worst_delta.is_null() {
            *worst_delta = sol.worst_delta;
        }
        Ok(())
    })
}
