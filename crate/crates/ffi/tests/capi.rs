use std::ffi::CStr;
use std::ptr;

use robustbond_ffi::*;

// two bonds over three periods
const FLOWS: [f64; 6] = [2.0, 2.0, 102.0, 0.0, 101.0, 0.0];
const NOMINAL: [f64; 5] = [0.010, 0.012, 0.015, 0.002, 0.004];

fn model(comp: RbCompounding) -> *mut RbModel {
    let mut m = ptr::null_mut();
    let status = unsafe { rb_model_new(FLOWS.as_ptr(), 2, 3, NOMINAL.as_ptr(), comp, &mut m) };
    assert_eq!(status, RbStatus::Ok);
    m
}

fn shifted_box(up: f64) -> *mut RbSet {
    let lo: Vec<f64> = NOMINAL.iter().map(|v| v - up).collect();
    let hi: Vec<f64> = NOMINAL.iter().map(|v| v + up).collect();
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { rb_set_new_box(lo.as_ptr(), hi.as_ptr(), 3, 2, &mut s) }, RbStatus::Ok);
    s
}

fn last_error() -> String {
    let p = rb_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn discount(rate: f64, t: f64) -> f64 {
    (-t * rate).exp()
}

#[test]
fn prices_are_discounted_cash_flows() {
    let m = model(RbCompounding::Continuous);
    let mut p = [0.0; 2];
    assert_eq!(unsafe { rb_model_prices(m, p.as_mut_ptr()) }, RbStatus::Ok);
    let (y, s) = (&NOMINAL[..3], &NOMINAL[3..]);
    let p0 = 2.0 * discount(y[0] + s[0], 1.0) + 2.0 * discount(y[1] + s[0], 2.0) + 102.0 * discount(y[2] + s[0], 3.0);
    let p1 = 101.0 * discount(y[1] + s[1], 2.0);
    assert!((p[0] - p0).abs() < 1e-12);
    assert!((p[1] - p1).abs() < 1e-12);
    assert!(rb_last_error_message().is_null());
    unsafe { rb_model_free(m) };
}

#[test]
fn gradient_layout_is_yields_then_spreads() {
    let m = model(RbCompounding::Continuous);
    let h = [1.0, 0.0];
    let mut g = [f64::NAN; 5];
    assert_eq!(unsafe { rb_model_sensitivities(m, h.as_ptr(), g.as_mut_ptr()) }, RbStatus::Ok);
    // only bond 0 is held, so bond 1's spread has no exposure
    assert_eq!(g[4], 0.0);
    let yield_sum: f64 = g[..3].iter().sum();
    assert!((yield_sum - g[3]).abs() < 1e-12);
    unsafe { rb_model_free(m) };
}

#[test]
fn box_worst_case_is_the_upper_corner() {
    let m = model(RbCompounding::Continuous);
    let s = shifted_box(0.01);
    let h = [1.0, 1.0];
    let mut exact = 0.0;
    let mut argmin = [0.0; 5];
    let status = unsafe { rb_worst_case(m, s, h.as_ptr(), RbAnalysis::Exact, &mut exact, argmin.as_mut_ptr()) };
    assert_eq!(status, RbStatus::Ok);

    // parallel shift of every rate by one point: value at the top corner
    let value = |shift: f64| {
        let (y, sp) = (&NOMINAL[..3], &NOMINAL[3..]);
        (0..3).map(|t| FLOWS[t] * discount(y[t] + sp[0] + 2.0 * shift, t as f64 + 1.0)).sum::<f64>()
            + 101.0 * discount(y[1] + sp[1] + 2.0 * shift, 2.0)
    };
    let oracle = (value(0.01) / value(0.0)).ln();
    assert!((exact - oracle).abs() < 1e-9, "{exact} vs {oracle}");
    for (a, n) in argmin.iter().zip(NOMINAL) {
        assert!((a - (n + 0.01)).abs() < 1e-12);
    }

    let mut lin = 0.0;
    let status = unsafe { rb_worst_case(m, s, h.as_ptr(), RbAnalysis::Linearized, &mut lin, ptr::null_mut()) };
    assert_eq!(status, RbStatus::Ok);
    assert!(lin <= exact + 1e-12);
    unsafe {
        rb_set_free(s);
        rb_model_free(m);
    }
}

#[test]
fn construction_keeps_the_budget() {
    let m = model(RbCompounding::Continuous);
    let s = shifted_box(0.02);
    let reference = [1.0, 1.0];
    let mut prices = [0.0; 2];
    unsafe { rb_model_prices(m, prices.as_mut_ptr()) };
    let budget = prices[0] + prices[1];
    for method in [RbConstruction::Auto, RbConstruction::Dual, RbConstruction::CuttingPlane] {
        let mut h = [f64::NAN; 2];
        let mut wc = f64::NAN;
        let status = unsafe { rb_construct(m, s, reference.as_ptr(), 2.0, method, h.as_mut_ptr(), &mut wc) };
        assert_eq!(status, RbStatus::Ok, "{method:?}: {}", last_error());
        assert!(h.iter().all(|v| *v >= -1e-9));
        assert!((h[0] * prices[0] + h[1] * prices[1] - budget).abs() < 1e-6 * budget);
        assert!(wc < 0.0);
    }
    unsafe {
        rb_set_free(s);
        rb_model_free(m);
    }
}

#[test]
fn dual_construction_rejects_ellipsoids() {
    let m = model(RbCompounding::Continuous);
    let factor: Vec<f64> = (0..25).map(|k| if k % 6 == 0 { 0.005 } else { 0.0 }).collect();
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { rb_set_new_ellipsoid(NOMINAL.as_ptr(), factor.as_ptr(), 5, 5, 1.0, &mut s) }, RbStatus::Ok);
    let mut h = [0.0; 2];
    let status = unsafe { rb_construct(m, s, [1.0, 1.0].as_ptr(), 1.0, RbConstruction::Dual, h.as_mut_ptr(), ptr::null_mut()) };
    assert_eq!(status, RbStatus::Unsupported);
    assert!(last_error().contains("polyhedral"));

    let status = unsafe { rb_construct(m, s, [1.0, 1.0].as_ptr(), 1.0, RbConstruction::Auto, h.as_mut_ptr(), ptr::null_mut()) };
    assert_eq!(status, RbStatus::Ok);
    unsafe {
        rb_set_free(s);
        rb_model_free(m);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let mut m = ptr::null_mut();
    let status = unsafe { rb_model_new(ptr::null(), 2, 3, NOMINAL.as_ptr(), RbCompounding::Continuous, &mut m) };
    assert_eq!(status, RbStatus::NullPointer);
    assert!(last_error().contains("flows"));
    assert!(m.is_null());

    let bad = [0.01, 0.01, -1.5, 0.0, 0.0];
    let status = unsafe { rb_model_new(FLOWS.as_ptr(), 2, 3, bad.as_ptr(), RbCompounding::Periodic, &mut m) };
    assert_eq!(status, RbStatus::DomainError);

    let a = [1.0, 0.0, 0.0, 0.0, 0.0];
    let b = [0.0];
    let mut s = ptr::null_mut();
    let status = unsafe { rb_set_new_polyhedral(a.as_ptr(), b.as_ptr(), 1, 5, &mut s) };
    assert_eq!(status, RbStatus::UnboundedSet);

    let mut out = 0.0;
    let status = unsafe { rb_worst_case(ptr::null(), ptr::null(), ptr::null(), RbAnalysis::Exact, &mut out, ptr::null_mut()) };
    assert_eq!(status, RbStatus::NullPointer);

    let m = model(RbCompounding::Continuous);
    let s = shifted_box(0.01);
    let status = unsafe { rb_worst_case(m, s, [-1.0, 1.0].as_ptr(), RbAnalysis::Exact, &mut out, ptr::null_mut()) };
    assert_eq!(status, RbStatus::InvalidArgument);
    unsafe {
        rb_set_free(s);
        rb_model_free(m);
        rb_model_free(ptr::null_mut());
        rb_set_free(ptr::null_mut());
    }
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/robustbond.h");
    let source = include_str!("../src/lib.rs");
    let exports: Vec<&str> = source
        .split("extern \"C\" fn ")
        .skip(1)
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 10);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    assert!(header.contains("RB_STATUS_SOLVER_FAILURE = 8"));
}
