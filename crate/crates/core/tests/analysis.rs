mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;
use robustbond::analysis::*;
use robustbond::construction::build_f_matrix;
use robustbond::instruments::*;
use robustbond::uncertainty::*;
use robustbond::Error;

use common::case_with_box;

fn ellipsoid_around(m: &MarketState, scale: f64, seed: u64) -> EllipsoidSet {
    let d = m.dim();
    let l = DMatrix::from_fn(d, d, |r, c| {
        let v = ((seed as usize + 7 * r + 3 * c) % 11) as f64 / 11.0 - 0.5;
        if r == c {
            scale
        } else {
            scale * v
        }
    });
    EllipsoidSet::new(DVector::from_vec(m.to_vector()), l, 1.0, None).unwrap()
}

#[test]
fn single_zero_coupon_box_worst_case() {
    // one bond paying 100 at period 2; worst case raises y_2 and s by their widths
    let cf = CashFlowMatrix::from_rows(&[vec![0.0, 100.0]]).unwrap();
    let m = MarketState::new(vec![0.01, 0.02], vec![0.005]);
    let port = Portfolio::new(vec![1.0]).unwrap();
    let bx = BoxSet::around(&m, 0.01, 0.002).unwrap();
    let res = worst_case_exact(&cf, &m, &port, &UncertaintySet::Box(bx), Compounding::Continuous).unwrap();
    assert!((res.delta_wc - (-2.0 * 0.012)).abs() < 1e-8);
    assert!((res.relative_change - (-0.024f64).exp_m1()).abs() < 1e-8);
    assert_eq!(res.method, WorstCaseMethod::Exact);
}

#[test]
fn dispatcher_uses_box_corner() {
    let cf = CashFlowMatrix::from_rows(&[vec![2.0, 102.0], vec![100.0, 0.0]]).unwrap();
    let m = MarketState::new(vec![0.01, 0.02], vec![0.005, 0.0]);
    let port = Portfolio::new(vec![1.0, 2.0]).unwrap();
    let set = UncertaintySet::Box(BoxSet::around(&m, 0.01, 0.002).unwrap());
    let fast = worst_case(&cf, &m, &port, &set, AnalysisKind::Exact, Compounding::Continuous).unwrap();
    assert_eq!(fast.method, WorstCaseMethod::AnalyticBox);
    assert!(fast.solver_status.is_none());
    let slow = worst_case_exact(&cf, &m, &port, &set, Compounding::Continuous).unwrap();
    assert!((fast.delta_wc - slow.delta_wc).abs() < 1e-7);
}

#[test]
fn empty_intersection_is_reported() {
    let m = MarketState::new(vec![0.01], vec![0.0]);
    let a = BoxSet::around(&m, 0.001, 0.001).unwrap();
    let far = MarketState::new(vec![0.05], vec![0.0]);
    let b = BoxSet::around(&far, 0.001, 0.001).unwrap();
    let cf = CashFlowMatrix::from_rows(&[vec![100.0]]).unwrap();
    let port = Portfolio::new(vec![1.0]).unwrap();
    let set = UncertaintySet::Intersection(vec![UncertaintySet::Box(a), UncertaintySet::Box(b)]);
    let err = worst_case_exact(&cf, &m, &port, &set, Compounding::Continuous).unwrap_err();
    assert!(matches!(err, Error::EmptySet), "{err}");
}

#[test]
fn scenario_enumeration_covers_vertices() {
    let cf = CashFlowMatrix::from_rows(&[vec![3.0, 103.0, 0.0], vec![0.0, 0.0, 100.0]]).unwrap();
    let m = MarketState::new(vec![0.01, 0.012, 0.02], vec![0.002, 0.004]);
    let port = Portfolio::new(vec![1.0, 0.5]).unwrap();
    let shift = |d: f64| MarketState::new(m.yields.iter().map(|y| y + d).collect(), m.spreads.clone());
    let hull = ScenarioHull::new(vec![shift(-0.01), shift(0.0), shift(0.015)]).unwrap();
    let by_vertex = worst_case_scenarios(&cf, &m, &port, &hull, AnalysisKind::Linearized, Compounding::Continuous).unwrap();
    assert_eq!(by_vertex.method, WorstCaseMethod::ScenarioEnum);
    let exact = worst_case_scenarios(&cf, &m, &port, &hull, AnalysisKind::Exact, Compounding::Continuous).unwrap();
    // delta is monotone along a parallel shift, so the top vertex is worst
    let top = delta(&cf, &shift(0.015), &m, &port, Compounding::Continuous).unwrap();
    assert!((exact.delta_wc - top).abs() < 1e-7);
    assert!(by_vertex.delta_wc <= exact.delta_wc + 1e-8);
}

#[test]
fn periodic_worst_case_over_box() {
    let cf = CashFlowMatrix::from_rows(&[vec![5.0, 5.0, 105.0]]).unwrap();
    let m = MarketState::new(vec![0.03, 0.035, 0.04], vec![0.01]);
    let port = Portfolio::new(vec![1.0]).unwrap();
    let bx = BoxSet::around(&m, 0.01, 0.005).unwrap();
    let res = worst_case_exact(&cf, &m, &port, &UncertaintySet::Box(bx.clone()), Compounding::Periodic).unwrap();
    let corner = delta(&cf, bx.upper(), &m, &port, Compounding::Periodic).unwrap();
    assert!((res.delta_wc - corner).abs() < 1e-6, "{} vs {corner}", res.delta_wc);
    assert!(res.duals.is_none());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn exact_worst_case_is_attained_and_minimal((c, bx) in case_with_box(4, 8, 0.02), seed in any::<u64>()) {
        let set = UncertaintySet::Ellipsoid(ellipsoid_around(bx.lower(), 0.004, seed));
        let res = worst_case_exact(&c.cf, &c.m_nom, &c.port, &set, Compounding::Continuous).unwrap();
        prop_assert!(set.contains(&res.argmin_state, 1e-6).unwrap());
        let at_argmin = delta(&c.cf, &res.argmin_state, &c.m_nom, &c.port, Compounding::Continuous).unwrap();
        prop_assert!((at_argmin - res.delta_wc).abs() < 1e-6);
        let mut rng = StdRng::seed_from_u64(seed);
        for m in set.sample_points(20, c.cf.num_periods(), &mut rng).unwrap() {
            let d = delta(&c.cf, &m, &c.m_nom, &c.port, Compounding::Continuous).unwrap();
            prop_assert!(res.delta_wc <= d + 1e-8);
        }
    }

    #[test]
    fn worst_case_is_nonpositive_around_nominal((c, bx) in case_with_box(4, 8, 0.02)) {
        let res = worst_case_exact(&c.cf, &c.m_nom, &c.port, &UncertaintySet::Box(bx), Compounding::Continuous).unwrap();
        prop_assert!(res.delta_wc <= 1e-9);
        prop_assert!(res.relative_change <= 1e-9);
    }

    #[test]
    fn linearized_never_exceeds_exact((c, bx) in case_with_box(4, 8, 0.02), seed in any::<u64>(), kind in 0usize..3) {
        let set = match kind {
            0 => UncertaintySet::Box(bx),
            1 => UncertaintySet::Ellipsoid(ellipsoid_around(&c.m_nom, 0.003, seed)),
            _ => UncertaintySet::Polyhedral(PolyhedralSet::from_box(&bx)),
        };
        let lin = worst_case_linearized(&c.cf, &c.m_nom, &c.port, &set).unwrap();
        let exact = worst_case_exact(&c.cf, &c.m_nom, &c.port, &set, Compounding::Continuous).unwrap();
        prop_assert!(lin.delta_wc <= exact.delta_wc + 1e-8, "{} > {}", lin.delta_wc, exact.delta_wc);
        prop_assert!(set.contains(&lin.argmin_state, 1e-6).unwrap());
    }

    #[test]
    fn polyhedral_duals_satisfy_stationarity((c, bx) in case_with_box(3, 6, 0.02)) {
        let poly = PolyhedralSet::from_box(&bx);
        let res = worst_case_exact(&c.cf, &c.m_nom, &c.port, &UncertaintySet::Polyhedral(poly.clone()), Compounding::Continuous).unwrap();
        let duals = res.duals.expect("polyhedral sets report duals");
        let (n, periods) = (c.cf.num_bonds(), c.cf.num_periods());
        prop_assert!(duals.mu.iter().chain(&duals.nu).all(|v| *v >= 0.0));
        let per_period: f64 = duals.nu.iter().enumerate().map(|(k, v)| v / (k % periods + 1) as f64).sum();
        prop_assert!((per_period - 1.0).abs() < 1e-6);
        let lhs = poly.a().transpose() * DVector::from_column_slice(&duals.mu);
        let rhs = build_f_matrix(n, periods).transpose() * DVector::from_column_slice(&duals.nu);
        prop_assert!((lhs - rhs).amax() < 1e-6);
    }
}
