#![allow(dead_code)]

use proptest::prelude::*;
use robustbond::instruments::{CashFlowMatrix, MarketState, Portfolio};
use robustbond::uncertainty::BoxSet;

#[derive(Debug, Clone)]
pub struct Case {
    pub cf: CashFlowMatrix,
    pub m_nom: MarketState,
    pub port: Portfolio,
}

/// Coupon bonds with maturities in `1..=T`, per-period rates of a few percent.
pub fn case(max_bonds: usize, max_periods: usize) -> impl Strategy<Value = Case> {
    (1..=max_bonds, 2..=max_periods).prop_flat_map(|(n, t)| {
        let bond = (1..=t, 0.0..4.0f64);
        (
            prop::collection::vec(bond, n),
            prop::collection::vec(0.001..0.03f64, t),
            prop::collection::vec(0.0..0.01f64, n),
            prop::collection::vec(0.05..3.0f64, n),
        )
            .prop_map(move |(bonds, yields, spreads, h)| {
                let rows: Vec<Vec<f64>> = bonds
                    .iter()
                    .map(|&(mat, cpn)| {
                        (1..=t).map(|p| if p < mat { cpn } else if p == mat { cpn + 100.0 } else { 0.0 }).collect()
                    })
                    .collect();
                Case {
                    cf: CashFlowMatrix::from_rows(&rows).unwrap(),
                    m_nom: MarketState::new(yields, spreads),
                    port: Portfolio::new(h).unwrap(),
                }
            })
    })
}

/// Per-coordinate half-widths for a box around the nominal state, drawn as
/// fractions of `scale`.
pub fn widths(dim: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.0..1.0f64, 0.0..1.0f64), dim)
}

pub fn box_around(m: &MarketState, w: &[(f64, f64)], scale: f64) -> BoxSet {
    let x = m.to_vector();
    let periods = m.yields.len();
    let lo: Vec<f64> = x.iter().zip(w).map(|(v, (a, _))| v - scale * a).collect();
    let hi: Vec<f64> = x.iter().zip(w).map(|(v, (_, b))| v + scale * b).collect();
    BoxSet::new(MarketState::from_vector(&lo, periods), MarketState::from_vector(&hi, periods)).unwrap()
}

pub fn case_with_box(max_bonds: usize, max_periods: usize, scale: f64) -> impl Strategy<Value = (Case, BoxSet)> {
    case(max_bonds, max_periods).prop_flat_map(move |c| {
        let d = c.m_nom.dim();
        (Just(c), widths(d)).prop_map(move |(c, w)| {
            let b = box_around(&c.m_nom, &w, scale);
            (c, b)
        })
    })
}
