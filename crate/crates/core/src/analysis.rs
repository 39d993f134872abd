//! Worst-case change in log portfolio value over an uncertainty set.

use crate::conic::{add_lse_epigraph, solve, AffineExpr, ConeProgram, SolveStatus, SolverSettings};
use crate::error::{Error, Result};
use crate::instruments::{
    delta, log_portfolio_value, price_bonds, relative_change, sensitivities, taylor_delta, CashFlowMatrix, Compounding,
    MarketState, Portfolio,
};
use crate::uncertainty::{linear_over, ScenarioHull, UncertaintySet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorstCaseMethod {
    Exact,
    Linearized,
    /// Evaluation at the set's maximum element.
    AnalyticBox,
    /// Direct enumeration of scenario vertices.
    ScenarioEnum,
}

impl WorstCaseMethod {
    pub fn name(self) -> &'static str {
        match self {
            WorstCaseMethod::Exact => "exact",
            WorstCaseMethod::Linearized => "linearized",
            WorstCaseMethod::AnalyticBox => "analytic-box",
            WorstCaseMethod::ScenarioEnum => "scenario-enum",
        }
    }
}

/// Multipliers `(μ, ν)` of the worst-case problem over `{ x : A x ≤ b }`.
///
/// `nu` has one entry per (bond, period) pair, at index `i·T + (t-1)`.
/// Entries for zero cash flows or zero holdings are 0.
#[derive(Debug, Clone, PartialEq)]
pub struct DualVariables {
    pub mu: Vec<f64>,
    pub nu: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct WorstCaseResult {
    /// Worst-case log value change.
    pub delta_wc: f64,
    /// `exp(delta_wc) - 1`.
    pub relative_change: f64,
    pub argmin_state: MarketState,
    pub method: WorstCaseMethod,
    /// Status of the cone solve, absent for closed-form methods.
    pub solver_status: Option<SolveStatus>,
    /// Present for exact solves over boxes and polyhedra.
    pub duals: Option<DualVariables>,
}

impl WorstCaseResult {
    fn new(delta_wc: f64, argmin_state: MarketState, method: WorstCaseMethod, solver_status: Option<SolveStatus>) -> Self {
        Self { delta_wc, relative_change: relative_change(delta_wc), argmin_state, method, solver_status, duals: None }
    }
}

fn nominal_log_value(cf: &CashFlowMatrix, m_nom: &MarketState, port: &Portfolio, comp: Compounding) -> Result<f64> {
    let log_nom = log_portfolio_value(cf, m_nom, port, comp)?;
    if log_nom == f64::NEG_INFINITY {
        return Err(Error::ZeroNominalValue);
    }
    Ok(log_nom)
}

fn solver_error(status: SolveStatus, what: &str) -> Error {
    match status {
        SolveStatus::Infeasible => Error::EmptySet,
        status => Error::Solver { status, detail: what.to_string() },
    }
}

/// Value share below which a position is left out of the exact worst case.
pub const NEGLIGIBLE_SHARE: f64 = 1e-9;

/// Minimum of `delta` over the set, solved as an exponential-cone program.
///
/// Always solves the cone program, even when the set has a maximum element;
/// see [`worst_case`] for the shortcut.
pub fn worst_case_exact(
    cf: &CashFlowMatrix,
    m_nom: &MarketState,
    port: &Portfolio,
    set: &UncertaintySet,
    comp: Compounding,
) -> Result<WorstCaseResult> {
    m_nom.check_dims(cf)?;
    let log_nom = nominal_log_value(cf, m_nom, port, comp)?;
    let periods = cf.num_periods();
    let h = port.holdings();

    let mut prog = ConeProgram::new();
    let x = prog.add_vars(m_nom.dim());
    let tau = prog.add_var();
    prog.minimize(&AffineExpr::var(tau));
    let emitted = set.emit(&mut prog, &x)?;

    // Positions worth a negligible fraction of the portfolio only degrade the
    // conditioning of the cone program.
    let prices = price_bonds(cf, m_nom, comp)?;
    let total: f64 = h.iter().zip(&prices).map(|(a, p)| a * p).sum();
    let active: Vec<(usize, usize, f64)> =
        cf.terms().filter(|(i, _, _)| h[*i] * prices[*i] > NEGLIGIBLE_SHARE * total).collect();
    let terms: Vec<(AffineExpr, f64)> = active
        .iter()
        .map(|&(i, t, c)| {
            let rate = AffineExpr::var(x[t - 1]).with_term(x[periods + i], 1.0);
            let exponent = match comp {
                Compounding::Continuous => rate * -(t as f64),
                Compounding::Periodic => {
                    // w ≤ log(1 + y_t + s_i)
                    let w = prog.add_var();
                    prog.add_exp(AffineExpr::var(w), AffineExpr::constant(1.0), rate.plus(1.0));
                    AffineExpr::term(w, -(t as f64))
                }
            };
            (exponent, (h[i] * c).ln() - log_nom)
        })
        .collect();
    let lse = add_lse_epigraph(&mut prog, &terms, &AffineExpr::var(tau))?;

    let res = solve(&prog, &SolverSettings::default())?;
    if !res.is_optimal() {
        return Err(solver_error(res.status, "exact worst-case analysis"));
    }
    let argmin = MarketState::from_vector(&res.vars(&x), periods);
    let mut out = WorstCaseResult::new(res.var(tau), argmin, WorstCaseMethod::Exact, Some(res.status));

    let polyhedral_only = matches!(set, UncertaintySet::Box(_) | UncertaintySet::Polyhedral(_));
    if polyhedral_only && comp == Compounding::Continuous {
        let mu = emitted.polyhedral.iter().flat_map(|b| res.dual(*b).iter().map(|v| v.max(0.0))).collect();
        let mut nu = vec![0.0; cf.num_bonds() * periods];
        for (&(i, t, _), &cone) in active.iter().zip(&lse.cones) {
            nu[i * periods + t - 1] = t as f64 * (-res.dual(cone)[0]).max(0.0);
        }
        out.duals = Some(DualVariables { mu, nu });
    }
    Ok(out)
}

/// Minimum of the first-order Taylor estimate over the set.
pub fn worst_case_linearized(
    cf: &CashFlowMatrix,
    m_nom: &MarketState,
    port: &Portfolio,
    set: &UncertaintySet,
) -> Result<WorstCaseResult> {
    m_nom.check_dims(cf)?;
    let sens = sensitivities(cf, m_nom, port, Compounding::Continuous)?;
    let grad: Vec<f64> = sens.d_yld.iter().chain(&sens.d_spr).copied().collect();
    let (status, _, point) = linear_over(set, &grad)?;
    if status != SolveStatus::Optimal {
        return Err(solver_error(status, "linearized worst-case analysis"));
    }
    let argmin = MarketState::from_vector(&point, cf.num_periods());
    let value = taylor_delta(&sens, &argmin, m_nom)?;
    Ok(WorstCaseResult::new(value, argmin, WorstCaseMethod::Linearized, Some(status)))
}

/// Worst case over a scenario hull.
///
/// `Linearized` enumerates the vertices, which is exact for a linear
/// objective. `Exact` solves over the whole hull, since the minimizer of the
/// convex `delta` can lie strictly inside it.
pub fn worst_case_scenarios(
    cf: &CashFlowMatrix,
    m_nom: &MarketState,
    port: &Portfolio,
    hull: &ScenarioHull,
    kind: AnalysisKind,
    comp: Compounding,
) -> Result<WorstCaseResult> {
    let scenarios = hull.scenarios();
    match kind {
        AnalysisKind::Linearized => {
            let sens = sensitivities(cf, m_nom, port, comp)?;
            let mut best: Option<(f64, &MarketState)> = None;
            for s in scenarios {
                let v = taylor_delta(&sens, s, m_nom)?;
                if best.is_none_or(|(b, _)| v < b) {
                    best = Some((v, s));
                }
            }
            let (v, s) = best.expect("hull has at least one scenario");
            Ok(WorstCaseResult::new(v, s.clone(), WorstCaseMethod::ScenarioEnum, None))
        }
        _ if scenarios.len() == 1 => {
            let v = delta(cf, &scenarios[0], m_nom, port, comp)?;
            Ok(WorstCaseResult::new(v, scenarios[0].clone(), WorstCaseMethod::ScenarioEnum, None))
        }
        _ => worst_case_exact(cf, m_nom, port, &UncertaintySet::Hull(hull.clone()), comp),
    }
}

/// Which problem [`worst_case`] solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnalysisKind {
    Exact,
    Linearized,
}

/// Worst case using the cheapest correct method for the set: evaluation at
/// the maximum element when the set has one (exact problem), vertex
/// enumeration for hulls (linearized problem), a cone solve otherwise.
pub fn worst_case(
    cf: &CashFlowMatrix,
    m_nom: &MarketState,
    port: &Portfolio,
    set: &UncertaintySet,
    kind: AnalysisKind,
    comp: Compounding,
) -> Result<WorstCaseResult> {
    match (kind, set) {
        (AnalysisKind::Exact, _) if set.maximum_element().is_some() => {
            let top = set.maximum_element().expect("checked above");
            let v = delta(cf, &top, m_nom, port, comp)?;
            Ok(WorstCaseResult::new(v, top, WorstCaseMethod::AnalyticBox, None))
        }
        (AnalysisKind::Linearized, UncertaintySet::Hull(h)) => {
            worst_case_scenarios(cf, m_nom, port, h, AnalysisKind::Linearized, comp)
        }
        (AnalysisKind::Exact, _) => worst_case_exact(cf, m_nom, port, set, comp),
        (AnalysisKind::Linearized, _) => {
            if comp != Compounding::Continuous {
                return Err(Error::Unsupported("linearized analysis requires continuous compounding".into()));
            }
            worst_case_linearized(cf, m_nom, port, set)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::uncertainty::{BoxSet, EllipsoidSet};
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector};

    fn instance() -> (CashFlowMatrix, MarketState, Portfolio) {
        let cf = CashFlowMatrix::from_rows(&[
            vec![2.0, 102.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 100.0],
            vec![3.0, 3.0, 3.0, 103.0],
        ])
        .unwrap();
        let m = MarketState::new(vec![0.01, 0.012, 0.015, 0.017], vec![0.002, 0.004, 0.003]);
        (cf, m, Portfolio::new(vec![1.0, 0.5, 2.0]).unwrap())
    }

    #[test]
    fn singleton_box_gives_zero() {
        let (cf, m, h) = instance();
        let set = UncertaintySet::Box(BoxSet::new(m.clone(), m.clone()).unwrap());
        for comp in [Compounding::Continuous, Compounding::Periodic] {
            let r = worst_case_exact(&cf, &m, &h, &set, comp).unwrap();
            assert_abs_diff_eq!(r.delta_wc, 0.0, epsilon = 1e-7);
        }
        let r = worst_case_linearized(&cf, &m, &h, &set).unwrap();
        assert_abs_diff_eq!(r.delta_wc, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn box_matches_upper_corner() {
        let (cf, m, h) = instance();
        let bx = BoxSet::around(&m, 0.005, 0.002).unwrap();
        let set = UncertaintySet::Box(bx.clone());
        for comp in [Compounding::Continuous, Compounding::Periodic] {
            let expected = delta(&cf, bx.upper(), &m, &h, comp).unwrap();
            let r = worst_case_exact(&cf, &m, &h, &set, comp).unwrap();
            assert_abs_diff_eq!(r.delta_wc, expected, epsilon = 1e-6);
            let shortcut = worst_case(&cf, &m, &h, &set, AnalysisKind::Exact, comp).unwrap();
            assert_eq!(shortcut.method, WorstCaseMethod::AnalyticBox);
            assert_abs_diff_eq!(shortcut.delta_wc, expected, epsilon = 1e-15);
        }
    }

    #[test]
    fn box_duals_satisfy_stationarity() {
        let (cf, m, h) = instance();
        let set = UncertaintySet::Box(BoxSet::around(&m, 0.005, 0.002).unwrap());
        let r = worst_case_exact(&cf, &m, &h, &set, Compounding::Continuous).unwrap();
        let duals = r.duals.unwrap();
        let (t_len, n) = (4, 3);
        // Aᵀμ with A = [I; -I] against Fᵀν
        for j in 0..t_len + n {
            let lhs = duals.mu[j] - duals.mu[j + t_len + n];
            let rhs: f64 = (0..n * t_len)
                .filter(|k| (j < t_len && k % t_len == j) || (j >= t_len && k / t_len == j - t_len))
                .map(|k| duals.nu[k])
                .sum();
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-5);
        }
    }

    #[test]
    fn ellipsoid_linearized_support_function() {
        let (cf, m, h) = instance();
        let d = m.dim();
        let l = DMatrix::from_fn(d, d, |r, c| if r >= c { 0.001 * (1 + r + c) as f64 } else { 0.0 });
        let center = DVector::from_vec(m.to_vector()).add_scalar(0.001);
        let e = EllipsoidSet::new(center.clone(), l.clone(), 3.0, None).unwrap();
        let r = worst_case_linearized(&cf, &m, &h, &UncertaintySet::Ellipsoid(e)).unwrap();
        let s = sensitivities(&cf, &m, &h, Compounding::Continuous).unwrap();
        let g = DVector::from_iterator(d, s.d_yld.iter().chain(&s.d_spr).copied());
        let expected = g.dot(&(center - DVector::from_vec(m.to_vector()))) - 3f64.sqrt() * (l.transpose() * &g).norm();
        assert_abs_diff_eq!(r.delta_wc, expected, epsilon = 1e-6);
    }

    #[test]
    fn hull_enumeration_and_exact() {
        let (cf, m, h) = instance();
        let shift = |dy: f64, ds: f64| {
            MarketState::new(m.yields.iter().map(|y| y + dy).collect(), m.spreads.iter().map(|s| s + ds).collect())
        };
        let hull = ScenarioHull::new(vec![shift(0.01, 0.0), shift(0.0, 0.01), shift(-0.002, 0.004)]).unwrap();
        let lin = worst_case_scenarios(&cf, &m, &h, &hull, AnalysisKind::Linearized, Compounding::Continuous).unwrap();
        let exact = worst_case_scenarios(&cf, &m, &h, &hull, AnalysisKind::Exact, Compounding::Continuous).unwrap();
        let vertex_min = hull
            .scenarios()
            .iter()
            .map(|s| delta(&cf, s, &m, &h, Compounding::Continuous).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert!(exact.delta_wc <= vertex_min + 1e-7);
        assert!(lin.delta_wc <= exact.delta_wc + 1e-8);
    }

    #[test]
    fn zero_portfolio_rejected() {
        let (cf, m, _) = instance();
        let zero = Portfolio::new(vec![0.0; 3]).unwrap();
        let set = UncertaintySet::Box(BoxSet::new(m.clone(), m.clone()).unwrap());
        assert!(matches!(worst_case_exact(&cf, &m, &zero, &set, Compounding::Continuous), Err(Error::ZeroNominalValue)));
    }
}
