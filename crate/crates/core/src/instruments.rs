//! Bond cash flows, market states and portfolio valuation.
//!
//! Rates are stored per period. Period `t` runs from 1 to `T`; column `t - 1`
//! of a [`CashFlowMatrix`] holds the payment made at the end of period `t`.

use nalgebra::DMatrix;

use crate::error::{check_len, Error, Result};

/// Lower margin kept between `y_t + s_i` and `-1` under periodic compounding.
pub const PERIODIC_DOMAIN_EPS: f64 = 1e-6;

/// Nonnegative payment schedule, one row per bond and one column per period.
#[derive(Debug, Clone, PartialEq)]
pub struct CashFlowMatrix {
    flows: DMatrix<f64>,
}

impl CashFlowMatrix {
    pub fn new(flows: DMatrix<f64>) -> Result<Self> {
        if flows.nrows() == 0 || flows.ncols() == 0 {
            return Err(Error::InvalidInput("cash flow matrix must have at least one bond and one period".into()));
        }
        for i in 0..flows.nrows() {
            let row = flows.row(i);
            if row.iter().any(|c| !c.is_finite() || *c < 0.0) {
                return Err(Error::InvalidInput(format!("bond {i} has a negative or non-finite cash flow")));
            }
            if !row.iter().any(|c| *c > 0.0) {
                return Err(Error::InvalidInput(format!("bond {i} has no positive cash flow")));
            }
        }
        Ok(Self { flows })
    }

    /// Builds the matrix from per-bond rows of equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let periods = rows.first().map_or(0, Vec::len);
        for row in rows {
            check_len("cash flow row", periods, row.len())?;
        }
        Self::new(DMatrix::from_fn(n, periods, |i, t| rows[i][t]))
    }

    pub fn num_bonds(&self) -> usize {
        self.flows.nrows()
    }

    pub fn num_periods(&self) -> usize {
        self.flows.ncols()
    }

    /// Payment of bond `bond` at (1-based) period `period`.
    pub fn get(&self, bond: usize, period: usize) -> f64 {
        self.flows[(bond, period - 1)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.flows
    }

    /// Last period with a positive payment for each bond.
    pub fn maturities(&self) -> Vec<usize> {
        (0..self.num_bonds())
            .map(|i| {
                (1..=self.num_periods())
                    .rev()
                    .find(|&t| self.get(i, t) > 0.0)
                    .unwrap_or(0)
            })
            .collect()
    }

    /// Nonzero payments as `(bond, period, amount)`, bond-major, periods ascending.
    pub fn terms(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let periods = self.num_periods();
        (0..self.num_bonds()).flat_map(move |i| {
            (1..=periods).filter_map(move |t| {
                let c = self.flows[(i, t - 1)];
                (c > 0.0).then_some((i, t, c))
            })
        })
    }
}

/// A yield curve and a spread for every bond, both per period.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketState {
    pub yields: Vec<f64>,
    pub spreads: Vec<f64>,
}

impl MarketState {
    pub fn new(yields: Vec<f64>, spreads: Vec<f64>) -> Self {
        Self { yields, spreads }
    }

    /// Flat curve `y` for `periods` periods and spread `s` for `bonds` bonds.
    pub fn flat(periods: usize, bonds: usize, y: f64, s: f64) -> Self {
        Self::new(vec![y; periods], vec![s; bonds])
    }

    /// Stacks `(y, s)` into one vector of length `T + n`.
    pub fn to_vector(&self) -> Vec<f64> {
        self.yields.iter().chain(&self.spreads).copied().collect()
    }

    pub fn from_vector(x: &[f64], periods: usize) -> Self {
        Self::new(x[..periods].to_vec(), x[periods..].to_vec())
    }

    pub fn dim(&self) -> usize {
        self.yields.len() + self.spreads.len()
    }

    pub fn check_dims(&self, cf: &CashFlowMatrix) -> Result<()> {
        check_len("yield curve", cf.num_periods(), self.yields.len())?;
        check_len("spreads", cf.num_bonds(), self.spreads.len())
    }
}

/// Long-only holdings, in units of each bond.
#[derive(Debug, Clone, PartialEq)]
pub struct Portfolio {
    holdings: Vec<f64>,
}

impl Portfolio {
    pub fn new(holdings: Vec<f64>) -> Result<Self> {
        if let Some(i) = holdings.iter().position(|h| !h.is_finite() || *h < 0.0) {
            return Err(Error::InvalidInput(format!("holding {i} is negative or non-finite")));
        }
        Ok(Self { holdings })
    }

    pub fn holdings(&self) -> &[f64] {
        &self.holdings
    }

    pub fn len(&self) -> usize {
        self.holdings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.holdings.is_empty()
    }

    pub(crate) fn check_dims(&self, cf: &CashFlowMatrix) -> Result<()> {
        check_len("holdings", cf.num_bonds(), self.holdings.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Compounding {
    #[default]
    Continuous,
    Periodic,
}

/// Compounding rule plus the number of periods per year used for annualizing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompoundingConvention {
    pub compounding: Compounding,
    pub periods_per_year: u32,
}

impl CompoundingConvention {
    pub fn new(compounding: Compounding, periods_per_year: u32) -> Result<Self> {
        if periods_per_year == 0 {
            return Err(Error::InvalidInput("periods_per_year must be at least 1".into()));
        }
        Ok(Self { compounding, periods_per_year })
    }

    pub fn annualize(&self, per_period: f64) -> f64 {
        per_period * f64::from(self.periods_per_year)
    }

    pub fn per_period(&self, annualized: f64) -> f64 {
        annualized / f64::from(self.periods_per_year)
    }
}

impl Default for CompoundingConvention {
    fn default() -> Self {
        Self { compounding: Compounding::Continuous, periods_per_year: 2 }
    }
}

/// Gradients of `log V` with respect to the yield curve and the spreads.
#[derive(Debug, Clone, PartialEq)]
pub struct Sensitivities {
    pub d_yld: Vec<f64>,
    pub d_spr: Vec<f64>,
}

/// Log of the discount factor applied to a payment at `period` with rate `rate = y_t + s_i`.
fn log_discount(rate: f64, period: usize, comp: Compounding) -> f64 {
    let t = period as f64;
    match comp {
        Compounding::Continuous => -t * rate,
        Compounding::Periodic => -t * rate.ln_1p(),
    }
}

fn check_domain(cf: &CashFlowMatrix, m: &MarketState, comp: Compounding) -> Result<()> {
    m.check_dims(cf)?;
    if comp == Compounding::Periodic {
        for (i, s) in m.spreads.iter().enumerate() {
            for (t, y) in m.yields.iter().enumerate() {
                let rate = y + s;
                if rate <= -1.0 + PERIODIC_DOMAIN_EPS {
                    return Err(Error::PeriodicDomain { bond: i, period: t + 1, rate });
                }
            }
        }
    }
    Ok(())
}

pub fn price_bonds(cf: &CashFlowMatrix, m: &MarketState, comp: Compounding) -> Result<Vec<f64>> {
    check_domain(cf, m, comp)?;
    let mut prices = vec![0.0; cf.num_bonds()];
    for (i, t, c) in cf.terms() {
        prices[i] += c * log_discount(m.yields[t - 1] + m.spreads[i], t, comp).exp();
    }
    Ok(prices)
}

/// `log V` evaluated as a log-sum-exp over the nonzero weighted terms.
///
/// Returns `-inf` when the portfolio has no exposure.
pub fn log_portfolio_value(
    cf: &CashFlowMatrix,
    m: &MarketState,
    port: &Portfolio,
    comp: Compounding,
) -> Result<f64> {
    check_domain(cf, m, comp)?;
    port.check_dims(cf)?;
    let h = port.holdings();
    let exponents: Vec<f64> = cf
        .terms()
        .filter(|(i, _, _)| h[*i] > 0.0)
        .map(|(i, t, c)| log_discount(m.yields[t - 1] + m.spreads[i], t, comp) + (h[i] * c).ln())
        .collect();
    Ok(log_sum_exp(&exponents))
}

pub fn portfolio_value(
    cf: &CashFlowMatrix,
    m: &MarketState,
    port: &Portfolio,
    comp: Compounding,
) -> Result<f64> {
    port.check_dims(cf)?;
    let prices = price_bonds(cf, m, comp)?;
    Ok(prices.iter().zip(port.holdings()).map(|(p, h)| p * h).sum())
}

/// Change in log value `log V(m) - log V(m_nom)`.
pub fn delta(
    cf: &CashFlowMatrix,
    m: &MarketState,
    m_nom: &MarketState,
    port: &Portfolio,
    comp: Compounding,
) -> Result<f64> {
    let log_nom = log_portfolio_value(cf, m_nom, port, comp)?;
    if log_nom == f64::NEG_INFINITY {
        return Err(Error::ZeroNominalValue);
    }
    Ok(log_portfolio_value(cf, m, port, comp)? - log_nom)
}

/// Relative value change `exp(delta) - 1`.
pub fn relative_change(delta: f64) -> f64 {
    delta.exp_m1()
}

/// Yield and spread gradients of `log V` at `m_nom` under continuous compounding.
pub fn sensitivities(
    cf: &CashFlowMatrix,
    m_nom: &MarketState,
    port: &Portfolio,
    comp: Compounding,
) -> Result<Sensitivities> {
    if comp != Compounding::Continuous {
        return Err(Error::Unsupported("sensitivities require continuous compounding".into()));
    }
    let log_v = log_portfolio_value(cf, m_nom, port, comp)?;
    if log_v == f64::NEG_INFINITY {
        return Err(Error::ZeroNominalValue);
    }
    let h = port.holdings();
    let mut d_yld = vec![0.0; cf.num_periods()];
    let mut d_spr = vec![0.0; cf.num_bonds()];
    for (i, t, c) in cf.terms().filter(|(i, _, _)| h[*i] > 0.0) {
        // value share of this term, times -t
        let share = ((h[i] * c).ln() - t as f64 * (m_nom.yields[t - 1] + m_nom.spreads[i]) - log_v).exp();
        let g = -(t as f64) * share;
        d_yld[t - 1] += g;
        d_spr[i] += g;
    }
    Ok(Sensitivities { d_yld, d_spr })
}

/// First-order Taylor estimate of `delta`; a global lower bound on it.
pub fn taylor_delta(sens: &Sensitivities, m: &MarketState, m_nom: &MarketState) -> Result<f64> {
    check_len("yield curve", sens.d_yld.len(), m.yields.len())?;
    check_len("spreads", sens.d_spr.len(), m.spreads.len())?;
    check_len("nominal yield curve", sens.d_yld.len(), m_nom.yields.len())?;
    check_len("nominal spreads", sens.d_spr.len(), m_nom.spreads.len())?;
    let yld: f64 = sens.d_yld.iter().zip(m.yields.iter().zip(&m_nom.yields)).map(|(d, (y, y0))| d * (y - y0)).sum();
    let spr: f64 = sens.d_spr.iter().zip(m.spreads.iter().zip(&m_nom.spreads)).map(|(d, (s, s0))| d * (s - s0)).sum();
    Ok(yld + spr)
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
