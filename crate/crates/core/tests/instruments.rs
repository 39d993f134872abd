mod common;

use approx::assert_relative_eq;
use proptest::prelude::*;
use robustbond::instruments::*;
use robustbond::Error;

use common::{case, case_with_box};

/// Prices summed term by term, independently of the library's log-sum-exp path.
fn naive_value(c: &common::Case, m: &MarketState, comp: Compounding) -> f64 {
    let flows = c.cf.matrix();
    let mut v = 0.0;
    for i in 0..flows.nrows() {
        for t in 0..flows.ncols() {
            let rate = m.yields[t] + m.spreads[i];
            let periods = (t + 1) as f64;
            let disc = match comp {
                Compounding::Continuous => (-periods * rate).exp(),
                Compounding::Periodic => (1.0 + rate).powf(-periods),
            };
            v += c.port.holdings()[i] * flows[(i, t)] * disc;
        }
    }
    v
}

#[test]
fn zero_coupon_price() {
    let cf = CashFlowMatrix::from_rows(&[vec![0.0, 0.0, 100.0]]).unwrap();
    let m = MarketState::new(vec![0.0, 0.0, 0.02], vec![0.01]);
    let p = price_bonds(&cf, &m, Compounding::Continuous).unwrap();
    assert_relative_eq!(p[0], 100.0 * (-0.09f64).exp(), max_relative = 1e-14);
    let p = price_bonds(&cf, &m, Compounding::Periodic).unwrap();
    assert_relative_eq!(p[0], 100.0 / 1.03f64.powi(3), max_relative = 1e-14);
}

#[test]
fn rejects_bad_cash_flows() {
    assert!(CashFlowMatrix::from_rows(&[vec![1.0, -1.0]]).is_err());
    assert!(CashFlowMatrix::from_rows(&[vec![0.0, 0.0]]).is_err());
    assert!(CashFlowMatrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    assert!(CashFlowMatrix::from_rows(&[]).is_err());
    assert!(CashFlowMatrix::from_rows(&[vec![f64::NAN, 1.0]]).is_err());
}

#[test]
fn rejects_short_positions() {
    assert!(Portfolio::new(vec![1.0, -0.5]).is_err());
    assert!(Portfolio::new(vec![f64::INFINITY]).is_err());
}

#[test]
fn maturities_are_last_payment() {
    let cf = CashFlowMatrix::from_rows(&[vec![1.0, 101.0, 0.0], vec![0.0, 0.0, 100.0]]).unwrap();
    assert_eq!(cf.maturities(), vec![2, 3]);
}

#[test]
fn periodic_domain_guard() {
    let cf = CashFlowMatrix::from_rows(&[vec![100.0]]).unwrap();
    let m = MarketState::new(vec![-0.9999999], vec![0.0]);
    let err = price_bonds(&cf, &m, Compounding::Periodic).unwrap_err();
    assert!(matches!(err, Error::PeriodicDomain { bond: 0, period: 1, .. }));
    assert!(price_bonds(&cf, &m, Compounding::Continuous).is_ok());
}

#[test]
fn zero_holdings_have_no_nominal_value() {
    let cf = CashFlowMatrix::from_rows(&[vec![100.0]]).unwrap();
    let m = MarketState::new(vec![0.01], vec![0.0]);
    let port = Portfolio::new(vec![0.0]).unwrap();
    assert!(matches!(delta(&cf, &m, &m, &port, Compounding::Continuous), Err(Error::ZeroNominalValue)));
    assert!(matches!(sensitivities(&cf, &m, &port, Compounding::Continuous), Err(Error::ZeroNominalValue)));
}

#[test]
fn sensitivities_need_continuous_compounding() {
    let cf = CashFlowMatrix::from_rows(&[vec![100.0]]).unwrap();
    let m = MarketState::new(vec![0.01], vec![0.0]);
    let port = Portfolio::new(vec![1.0]).unwrap();
    assert!(matches!(sensitivities(&cf, &m, &port, Compounding::Periodic), Err(Error::Unsupported(_))));
}

#[test]
fn annualizing_round_trips() {
    let conv = CompoundingConvention::new(Compounding::Continuous, 2).unwrap();
    assert_eq!(conv.annualize(0.02), 0.04);
    assert_eq!(conv.per_period(0.04), 0.02);
    assert!(CompoundingConvention::new(Compounding::Periodic, 0).is_err());
}

#[test]
fn relative_change_of_log_two() {
    assert_relative_eq!(relative_change(2f64.ln()), 1.0, max_relative = 1e-15);
    assert_eq!(relative_change(0.0), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn value_matches_term_sum(c in case(5, 12)) {
        for comp in [Compounding::Continuous, Compounding::Periodic] {
            let v = portfolio_value(&c.cf, &c.m_nom, &c.port, comp).unwrap();
            let log_v = log_portfolio_value(&c.cf, &c.m_nom, &c.port, comp).unwrap();
            let oracle = naive_value(&c, &c.m_nom, comp);
            prop_assert!((v - oracle).abs() <= 1e-12 * oracle);
            prop_assert!((log_v - oracle.ln()).abs() <= 1e-12);
        }
    }

    #[test]
    fn delta_vanishes_at_nominal(c in case(5, 12)) {
        let d = delta(&c.cf, &c.m_nom, &c.m_nom, &c.port, Compounding::Continuous).unwrap();
        prop_assert!(d.abs() <= 1e-14);
    }

    #[test]
    fn periodic_rate_is_continuous_log_rate(c in case(4, 10)) {
        let flat = MarketState::new(c.m_nom.yields.clone(), vec![0.0; c.cf.num_bonds()]);
        let logged = MarketState::new(flat.yields.iter().map(|y| y.ln_1p()).collect(), flat.spreads.clone());
        let periodic = price_bonds(&c.cf, &flat, Compounding::Periodic).unwrap();
        let continuous = price_bonds(&c.cf, &logged, Compounding::Continuous).unwrap();
        for (a, b) in periodic.iter().zip(&continuous) {
            prop_assert!((a - b).abs() <= 1e-12 * b);
        }
    }

    #[test]
    fn sensitivities_are_nonpositive_and_balanced(c in case(5, 12)) {
        let s = sensitivities(&c.cf, &c.m_nom, &c.port, Compounding::Continuous).unwrap();
        prop_assert!(s.d_yld.iter().chain(&s.d_spr).all(|g| *g <= 0.0));
        let (sy, ss): (f64, f64) = (s.d_yld.iter().sum(), s.d_spr.iter().sum());
        prop_assert!((sy - ss).abs() <= 1e-12 * sy.abs().max(1.0));
        // the sum is minus the value-weighted average payment time
        let v = naive_value(&c, &c.m_nom, Compounding::Continuous);
        let mut weighted = 0.0;
        for (i, t, amount) in c.cf.terms() {
            weighted += t as f64 * c.port.holdings()[i] * amount
                * (-(t as f64) * (c.m_nom.yields[t - 1] + c.m_nom.spreads[i])).exp();
        }
        prop_assert!((sy + weighted / v).abs() <= 1e-10 * sy.abs());
    }

    #[test]
    fn taylor_estimate_is_a_lower_bound((c, bx) in case_with_box(5, 12, 0.02), frac in prop::collection::vec(0.0..1.0f64, 17)) {
        let s = sensitivities(&c.cf, &c.m_nom, &c.port, Compounding::Continuous).unwrap();
        let (lo, hi) = (bx.lower().to_vector(), bx.upper().to_vector());
        let x: Vec<f64> = lo.iter().zip(&hi).zip(frac.iter().cycle()).map(|((l, h), f)| l + f * (h - l)).collect();
        let m = MarketState::from_vector(&x, c.cf.num_periods());
        let d = delta(&c.cf, &m, &c.m_nom, &c.port, Compounding::Continuous).unwrap();
        prop_assert!(taylor_delta(&s, &m, &c.m_nom).unwrap() <= d + 1e-9);
    }

    #[test]
    fn value_is_homogeneous_in_holdings(c in case(5, 10), k in 0.1..10.0f64) {
        let scaled = Portfolio::new(c.port.holdings().iter().map(|h| h * k).collect()).unwrap();
        let v = portfolio_value(&c.cf, &c.m_nom, &c.port, Compounding::Continuous).unwrap();
        let vk = portfolio_value(&c.cf, &c.m_nom, &scaled, Compounding::Continuous).unwrap();
        prop_assert!((vk - k * v).abs() <= 1e-12 * vk);
    }
}
