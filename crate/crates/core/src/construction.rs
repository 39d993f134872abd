//! Robust portfolio construction.
//!
//! Minimizes `φ(h) - λ·Δ^wc(h)` over a holdings set, where `Δ^wc(h)` is the
//! worst-case log value change over an uncertainty set. For polyhedral sets
//! the inner minimization is replaced by its Lagrange dual, giving a single
//! exponential-cone program; other sets use a cutting-plane loop whose
//! oracle is [`worst_case_exact`].

use nalgebra::DMatrix;
use rand::{Rng, RngExt};

pub use crate::analysis::DualVariables;
use crate::analysis::worst_case_exact;
use crate::conic::{add_relative_entropy, solve, AffineExpr, ConeProgram, SolveStatus, SolverSettings, VarId};
use crate::error::{check_len, Error, Result};
use crate::instruments::{
    delta, price_bonds, CashFlowMatrix, Compounding, MarketState, Portfolio,
};
use crate::uncertainty::{standard_normal, PolyhedralSet, UncertaintySet};

/// Slack allowed in the dual feasibility checks of [`dual_objective`].
pub const DUAL_FEASIBILITY_TOL: f64 = 1e-6;

/// `nT × (T + n)` matrix with `(F x)_{i,t} = y_t + s_i`, row `i·T + (t-1)`.
pub fn build_f_matrix(bonds: usize, periods: usize) -> DMatrix<f64> {
    let mut f = DMatrix::zeros(bonds * periods, periods + bonds);
    for i in 0..bonds {
        for t in 0..periods {
            f[(i * periods + t, t)] = 1.0;
            f[(i * periods + t, periods + i)] = 1.0;
        }
    }
    f
}

/// Normalization of `ν` and orientation of the relative-entropy term in the
/// dual function.
///
/// With `q = ν/t` and `x = c·h`, the candidates are:
///
/// | convention    | normalization | entropy term       |
/// |---------------|---------------|--------------------|
/// | `Derived`     | `Σ ν/t = 1`   | `q·log(q/x)`       |
/// | `Printed`     | `Σ ν = 1`     | `q·log(q/x)`       |
/// | `CodeListing` | `Σ ν = 1`     | `x·log(x/q)`       |
///
/// Only `Derived` attains strong duality with the exact worst case; the
/// other two are kept so that the comparison can be rerun.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DualConvention {
    #[default]
    Derived,
    Printed,
    CodeListing,
}

impl DualConvention {
    pub const ALL: [DualConvention; 3] = [DualConvention::Derived, DualConvention::Printed, DualConvention::CodeListing];

    /// Weight of `ν_{i,t}` in the normalization row.
    fn norm_weight(self, period: usize) -> f64 {
        match self {
            DualConvention::Derived => 1.0 / period as f64,
            _ => 1.0,
        }
    }

    fn entropy(self, x: f64, q: f64) -> f64 {
        match self {
            DualConvention::CodeListing => rel_entr(x, q),
            _ => rel_entr(q, x),
        }
    }
}

/// `a·log(a/b)` with `0·log(0/b) = 0` and `+∞` when `a > 0 = b`.
fn rel_entr(a: f64, b: f64) -> f64 {
    if a == 0.0 && b >= 0.0 {
        0.0
    } else if a > 0.0 && b > 0.0 {
        a * (a / b).ln()
    } else {
        f64::INFINITY
    }
}

/// Dual function `g(h, μ, ν)`; `-∞` when the multipliers are infeasible.
///
/// `prices` are nominal prices, so `pᵀh` is the nominal portfolio value.
pub fn dual_objective(
    h: &Portfolio,
    duals: &DualVariables,
    poly: &PolyhedralSet,
    cf: &CashFlowMatrix,
    prices: &[f64],
    convention: DualConvention,
) -> f64 {
    let (n, periods) = (cf.num_bonds(), cf.num_periods());
    if h.len() != n || prices.len() != n || duals.nu.len() != n * periods || duals.mu.len() != poly.num_rows() || poly.dim() != n + periods {
        return f64::NEG_INFINITY;
    }
    let tol = DUAL_FEASIBILITY_TOL;
    if duals.mu.iter().chain(&duals.nu).any(|v| !(*v >= -tol)) {
        return f64::NEG_INFINITY;
    }
    let norm: f64 = (0..n * periods).map(|k| convention.norm_weight(k % periods + 1) * duals.nu[k]).sum();
    if (norm - 1.0).abs() > tol {
        return f64::NEG_INFINITY;
    }
    let mu = nalgebra::DVector::from_column_slice(&duals.mu);
    let nu = nalgebra::DVector::from_column_slice(&duals.nu);
    let stationarity = poly.a().transpose() * &mu - build_f_matrix(n, periods).transpose() * &nu;
    if stationarity.amax() > tol {
        return f64::NEG_INFINITY;
    }
    let value: f64 = prices.iter().zip(h.holdings()).map(|(p, x)| p * x).sum();
    if !(value > 0.0) {
        return f64::NEG_INFINITY;
    }
    let mut entropy = 0.0;
    for i in 0..n {
        for t in 1..=periods {
            let nu_k = duals.nu[i * periods + t - 1].max(0.0);
            let x = cf.get(i, t) * h.holdings()[i];
            if x == 0.0 && nu_k <= tol {
                continue;
            }
            entropy += convention.entropy(x, nu_k / t as f64);
        }
    }
    -value.ln() - mu.dot(poly.b()) - entropy
}

/// Maximizes `g(h, ·, ·)` over feasible multipliers.
pub fn maximize_dual(
    h: &Portfolio,
    poly: &PolyhedralSet,
    cf: &CashFlowMatrix,
    prices: &[f64],
    convention: DualConvention,
) -> Result<(f64, DualVariables)> {
    let (n, periods) = (cf.num_bonds(), cf.num_periods());
    check_len("holdings", n, h.len())?;
    check_len("prices", n, prices.len())?;
    check_len("polyhedron columns", n + periods, poly.dim())?;
    let value: f64 = prices.iter().zip(h.holdings()).map(|(p, x)| p * x).sum();
    if !(value > 0.0) {
        return Err(Error::ZeroNominalValue);
    }
    let mut prog = ConeProgram::new();
    let mu = prog.add_vars(poly.num_rows());
    prog.add_nonneg(mu.iter().map(|&v| AffineExpr::var(v)).collect());
    let terms: Vec<(usize, usize, f64)> = cf.terms().filter(|(i, _, _)| h.holdings()[*i] > 0.0).collect();
    let q = prog.add_vars(terms.len());
    let r = prog.add_vars(terms.len());
    for (k, &(i, _, c)) in terms.iter().enumerate() {
        let x = AffineExpr::constant(c * h.holdings()[i]);
        let qk = AffineExpr::var(q[k]);
        match convention {
            DualConvention::CodeListing => add_relative_entropy(&mut prog, x, qk, &AffineExpr::var(r[k])),
            _ => add_relative_entropy(&mut prog, qk, x, &AffineExpr::var(r[k])),
        };
    }
    emit_dual_rows(&mut prog, poly, &terms, &mu, &q, convention, periods);
    // maximize -log V - μᵀb - Σ r  ⇔  minimize μᵀb + Σ r
    prog.minimize(&AffineExpr::dot(&mu, poly.b().as_slice()));
    prog.minimize(&AffineExpr::sum(r.iter().copied()));
    let res = solve(&prog, &SolverSettings::default())?.require_optimal("dual maximization")?;
    let mut nu = vec![0.0; n * periods];
    for (k, &(i, t, _)) in terms.iter().enumerate() {
        nu[i * periods + t - 1] = t as f64 * res.var(q[k]).max(0.0);
    }
    let duals = DualVariables { mu: res.vars(&mu).into_iter().map(|v| v.max(0.0)).collect(), nu };
    Ok((-value.ln() - res.objective, duals))
}

/// Adds the normalization row and `Aᵀμ = Fᵀν` with `ν_k = t_k q_k`.
fn emit_dual_rows(
    prog: &mut ConeProgram,
    poly: &PolyhedralSet,
    terms: &[(usize, usize, f64)],
    mu: &[VarId],
    q: &[VarId],
    convention: DualConvention,
    periods: usize,
) {
    let norm = terms.iter().zip(q).fold(AffineExpr::constant(-1.0), |acc, (&(_, t, _), &qk)| {
        acc.with_term(qk, t as f64 * convention.norm_weight(t))
    });
    let mut rows = vec![norm];
    for j in 0..poly.dim() {
        let mut row = AffineExpr::dot(mu, poly.a().column(j).iter().copied().collect::<Vec<_>>().as_slice());
        for (&(i, t, _), &qk) in terms.iter().zip(q) {
            if t - 1 == j || periods + i == j {
                row.add_term(qk, -(t as f64));
            }
        }
        rows.push(row);
    }
    prog.add_zero(rows);
}

/// Long-only holdings with a budget row `pᵀh = B` and optional extra rows.
#[derive(Debug, Clone, PartialEq)]
pub struct HoldingsSet {
    prices: Vec<f64>,
    budget: f64,
    equalities: Vec<(Vec<f64>, f64)>,
    inequalities: Vec<(Vec<f64>, f64)>,
}

impl HoldingsSet {
    pub fn new(prices: Vec<f64>, budget: f64) -> Result<Self> {
        if prices.iter().any(|p| !(*p > 0.0) || !p.is_finite()) {
            return Err(Error::InvalidInput("budget prices must be positive".into()));
        }
        if !(budget > 0.0) || !budget.is_finite() {
            return Err(Error::InvalidInput(format!("budget must be positive, got {budget}")));
        }
        Ok(Self { prices, budget, equalities: Vec::new(), inequalities: Vec::new() })
    }

    /// Nominal prices and the nominal portfolio's value as budget.
    pub fn from_nominal(cf: &CashFlowMatrix, m_nom: &MarketState, h_nom: &Portfolio) -> Result<Self> {
        let prices = price_bonds(cf, m_nom, Compounding::Continuous)?;
        check_len("nominal holdings", prices.len(), h_nom.len())?;
        let budget = prices.iter().zip(h_nom.holdings()).map(|(p, h)| p * h).sum();
        Self::new(prices, budget)
    }

    /// Adds `aᵀh = b`.
    pub fn with_equality(mut self, a: Vec<f64>, b: f64) -> Result<Self> {
        check_len("holdings equality row", self.prices.len(), a.len())?;
        self.equalities.push((a, b));
        Ok(self)
    }

    /// Adds `aᵀh ≤ b`.
    pub fn with_inequality(mut self, a: Vec<f64>, b: f64) -> Result<Self> {
        check_len("holdings inequality row", self.prices.len(), a.len())?;
        self.inequalities.push((a, b));
        Ok(self)
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    pub fn contains(&self, h: &[f64], tol: f64) -> bool {
        let dot = |a: &[f64]| a.iter().zip(h).map(|(x, y)| x * y).sum::<f64>();
        h.len() == self.len()
            && h.iter().all(|v| *v >= -tol)
            && (dot(&self.prices) - self.budget).abs() <= tol * self.budget.max(1.0)
            && self.equalities.iter().all(|(a, b)| (dot(a) - b).abs() <= tol)
            && self.inequalities.iter().all(|(a, b)| dot(a) <= b + tol)
    }

    fn emit(&self, prog: &mut ConeProgram, h: &[VarId]) {
        prog.add_nonneg(h.iter().map(|&v| AffineExpr::var(v)).collect());
        let mut eq = vec![AffineExpr::dot(h, &self.prices).plus(-self.budget)];
        eq.extend(self.equalities.iter().map(|(a, b)| AffineExpr::dot(h, a).plus(-b)));
        prog.add_zero(eq);
        if !self.inequalities.is_empty() {
            prog.add_nonneg(self.inequalities.iter().map(|(a, b)| (-AffineExpr::dot(h, a)).plus(*b)).collect());
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ObjectiveKind {
    /// `½‖h - h_ref‖₁`.
    Turnover(Vec<f64>),
    /// `cᵀh`.
    LinearCost(Vec<f64>),
}

/// Nominal objective `φ` and robustness weight `λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveSpec {
    pub kind: ObjectiveKind,
    pub lambda: f64,
}

impl ObjectiveSpec {
    pub fn new(kind: ObjectiveKind, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidInput(format!("lambda must be a finite nonnegative number, got {lambda}")));
        }
        Ok(Self { kind, lambda })
    }

    pub fn turnover(h_ref: &Portfolio, lambda: f64) -> Result<Self> {
        Self::new(ObjectiveKind::Turnover(h_ref.holdings().to_vec()), lambda)
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(self.kind.clone(), lambda)
    }

    fn vector(&self) -> &[f64] {
        match &self.kind {
            ObjectiveKind::Turnover(v) | ObjectiveKind::LinearCost(v) => v,
        }
    }

    /// `φ(h)`.
    pub fn nominal_value(&self, h: &[f64]) -> f64 {
        match &self.kind {
            ObjectiveKind::Turnover(r) => 0.5 * h.iter().zip(r).map(|(a, b)| (a - b).abs()).sum::<f64>(),
            ObjectiveKind::LinearCost(c) => h.iter().zip(c).map(|(a, b)| a * b).sum(),
        }
    }

    fn emit(&self, prog: &mut ConeProgram, h: &[VarId]) -> AffineExpr {
        match &self.kind {
            ObjectiveKind::Turnover(r) => {
                let up = prog.add_vars(h.len());
                let down = prog.add_vars(h.len());
                prog.add_nonneg(up.iter().chain(&down).map(|&v| AffineExpr::var(v)).collect());
                let rows = (0..h.len())
                    .map(|i| AffineExpr::var(h[i]).with_term(up[i], -1.0).with_term(down[i], 1.0).plus(-r[i]))
                    .collect();
                prog.add_zero(rows);
                AffineExpr::sum(up.iter().chain(&down).copied()) * 0.5
            }
            ObjectiveKind::LinearCost(c) => AffineExpr::dot(h, c),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstructionMethod {
    Dual,
    Constrained,
    CuttingPlane,
}

#[derive(Debug, Clone)]
pub struct RobustSolution {
    pub h_star: Portfolio,
    /// A minimizer of `Δ(h*, ·)` over the set.
    pub worst_state: MarketState,
    /// `Δ^wc(h*)`, recomputed by exact analysis.
    pub worst_delta: f64,
    pub duals: Option<DualVariables>,
    /// Optimal value reported by the construction program.
    pub objective_value: f64,
    /// `φ(h*)`.
    pub nominal_term: f64,
    /// `-λ·Δ^wc(h*)`.
    pub robustness_term: f64,
    pub status: SolveStatus,
    pub method: ConstructionMethod,
    /// Master solves for the cutting-plane path, 1 otherwise.
    pub iterations: usize,
    /// Upper minus lower bound at termination; 0 for single-program paths.
    pub gap: f64,
    pub converged: bool,
}

struct Checked {
    n: usize,
    periods: usize,
}

fn check_inputs(cf: &CashFlowMatrix, m_nom: &MarketState, obj: &ObjectiveSpec, hset: &HoldingsSet) -> Result<Checked> {
    m_nom.check_dims(cf)?;
    let n = cf.num_bonds();
    check_len("holdings set", n, hset.len())?;
    check_len("objective vector", n, obj.vector().len())?;
    Ok(Checked { n, periods: cf.num_periods() })
}

fn holdings_from(values: Vec<f64>) -> Result<Portfolio> {
    Portfolio::new(values.into_iter().map(|v| v.max(0.0)).collect())
}

/// Builds the single-program dual form shared by the penalized and
/// constrained variants. Returns `(prog, h, φ, μ, q, risk)` where `risk`
/// is `μᵀb + Σ r_k = -g(h, μ, ν)`.
#[allow(clippy::type_complexity)]
fn dual_program(
    cf: &CashFlowMatrix,
    obj: &ObjectiveSpec,
    hset: &HoldingsSet,
    poly: &PolyhedralSet,
    dims: &Checked,
) -> Result<(ConeProgram, Vec<VarId>, AffineExpr, Vec<VarId>, Vec<VarId>, AffineExpr)> {
    check_len("polyhedron columns", dims.n + dims.periods, poly.dim())?;
    let mut prog = ConeProgram::new();
    let h = prog.add_vars(dims.n);
    hset.emit(&mut prog, &h);
    let phi = obj.emit(&mut prog, &h);
    let mu = prog.add_vars(poly.num_rows());
    prog.add_nonneg(mu.iter().map(|&v| AffineExpr::var(v)).collect());
    let terms: Vec<(usize, usize, f64)> = cf.terms().collect();
    let q = prog.add_vars(terms.len());
    let r = prog.add_vars(terms.len());
    let budget = hset.budget();
    for (k, &(i, _, c)) in terms.iter().enumerate() {
        // budget folds log(pᵀh) into the entropy arguments
        add_relative_entropy(&mut prog, AffineExpr::var(q[k]), AffineExpr::term(h[i], c / budget), &AffineExpr::var(r[k]));
    }
    emit_dual_rows(&mut prog, poly, &terms, &mu, &q, DualConvention::Derived, dims.periods);
    let risk = AffineExpr::dot(&mu, poly.b().as_slice()) + AffineExpr::sum(r.iter().copied());
    Ok((prog, h, phi, mu, q, risk))
}

fn extract_duals(cf: &CashFlowMatrix, res: &crate::conic::SolveResult, mu: &[VarId], q: &[VarId]) -> DualVariables {
    let periods = cf.num_periods();
    let mut nu = vec![0.0; cf.num_bonds() * periods];
    for ((i, t, _), &qk) in cf.terms().zip(q) {
        nu[i * periods + t - 1] = t as f64 * res.var(qk).max(0.0);
    }
    DualVariables { mu: res.vars(mu).into_iter().map(|v| v.max(0.0)).collect(), nu }
}

fn construction_error(status: SolveStatus, what: &str) -> Error {
    match status {
        SolveStatus::Infeasible => Error::Infeasible(what.to_string()),
        status => Error::Solver { status, detail: what.to_string() },
    }
}

/// Solves `min φ(h) - λ·Δ^wc(h)` over the holdings set as one cone program,
/// with the inner worst case dualized over `{ x : A x ≤ b }`.
pub fn robust_construct_dual(
    cf: &CashFlowMatrix,
    m_nom: &MarketState,
    obj: &ObjectiveSpec,
    hset: &HoldingsSet,
    poly: &PolyhedralSet,
) -> Result<RobustSolution> {
    let dims = check_inputs(cf, m_nom, obj, hset)?;
    let (mut prog, h, phi, mu, q, risk) = dual_program(cf, obj, hset, poly, &dims)?;
    prog.minimize(&phi);
    prog.minimize(&(risk * obj.lambda));
    let res = solve(&prog, &SolverSettings::default())?;
    if !res.is_optimal() {
        return Err(construction_error(res.status, "robust construction (dual form)"));
    }
    let h_star = holdings_from(res.vars(&h))?;
    let set = UncertaintySet::Polyhedral(poly.clone());
    finish(cf, m_nom, obj, &set, h_star, res.objective, Some(extract_duals(cf, &res, &mu, &q)), res.status, ConstructionMethod::Dual)
}

/// Minimizes `φ(h)` subject to a certified bound `Δ^wc(h) ≥ -eta`.
pub fn robust_construct_constrained(
    cf: &CashFlowMatrix,
    m_nom: &MarketState,
    obj: &ObjectiveSpec,
    hset: &HoldingsSet,
    poly: &PolyhedralSet,
    eta: f64,
) -> Result<RobustSolution> {
    if !(eta >= 0.0) {
        return Err(Error::InvalidInput(format!("eta must be nonnegative, got {eta}")));
    }
    let dims = check_inputs(cf, m_nom, obj, hset)?;
    let (mut prog, h, phi, mu, q, risk) = dual_program(cf, obj, hset, poly, &dims)?;
    prog.minimize(&phi);
    if eta.is_finite() {
        prog.add_nonneg(vec![(-risk).plus(eta)]);
    }
    let res = solve(&prog, &SolverSettings::default())?;
    if !res.is_optimal() {
        return Err(construction_error(res.status, &format!("no holdings keep the worst-case log change above -{eta}")));
    }
    let h_star = holdings_from(res.vars(&h))?;
    let set = UncertaintySet::Polyhedral(poly.clone());
    let duals = Some(extract_duals(cf, &res, &mu, &q));
    let mut sol = finish(cf, m_nom, obj, &set, h_star, res.objective, duals, res.status, ConstructionMethod::Constrained)?;
    if sol.worst_delta < -eta - 1e-6 {
        log::warn!("constrained solution misses its bound: worst case {} < -{eta}", sol.worst_delta);
        sol.converged = false;
    }
    Ok(sol)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    cf: &CashFlowMatrix,
    m_nom: &MarketState,
    obj: &ObjectiveSpec,
    set: &UncertaintySet,
    h_star: Portfolio,
    objective_value: f64,
    duals: Option<DualVariables>,
    status: SolveStatus,
    method: ConstructionMethod,
) -> Result<RobustSolution> {
    let wc = worst_case_exact(cf, m_nom, &h_star, set, Compounding::Continuous)?;
    let nominal_term = obj.nominal_value(h_star.holdings());
    Ok(RobustSolution {
        worst_state: wc.argmin_state,
        worst_delta: wc.delta_wc,
        duals,
        objective_value,
        nominal_term,
        robustness_term: -obj.lambda * wc.delta_wc,
        status,
        method,
        iterations: 1,
        gap: 0.0,
        converged: true,
        h_star,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CuttingPlaneOptions {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for CuttingPlaneOptions {
    fn default() -> Self {
        Self { tol: 1e-5, max_iters: 50 }
    }
}

/// Outer approximation of the robust problem over any set supported by
/// [`worst_case_exact`].
///
/// The master problem minimizes `φ(h) + λθ` with `θ ≥ -log(p(m_k)ᵀh / B)`
/// for each scenario `m_k` found so far. Scenarios start as `m_nom` plus the
/// worst case of the reference holdings (the turnover anchor, or the nominal
/// optimum for linear costs).
pub fn robust_construct_cutting_plane(
    cf: &CashFlowMatrix,
    m_nom: &MarketState,
    obj: &ObjectiveSpec,
    hset: &HoldingsSet,
    set: &UncertaintySet,
    opts: &CuttingPlaneOptions,
) -> Result<RobustSolution> {
    let dims = check_inputs(cf, m_nom, obj, hset)?;
    if opts.max_iters == 0 {
        return Err(Error::InvalidInput("cutting plane needs at least one iteration".into()));
    }
    let comp = Compounding::Continuous;
    let mut scenarios = vec![m_nom.clone()];
    let start = match &obj.kind {
        ObjectiveKind::Turnover(r) if r.iter().any(|v| *v > 0.0) => Portfolio::new(r.clone())?,
        _ => master_solve(cf, obj, hset, &scenarios, dims.n)?.0,
    };
    scenarios.push(worst_case_exact(cf, m_nom, &start, set, comp)?.argmin_state);

    let mut best: Option<(f64, Portfolio, crate::analysis::WorstCaseResult)> = None;
    let mut lower = f64::NEG_INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iters {
        iterations += 1;
        let (h, master_value) = master_solve(cf, obj, hset, &scenarios, dims.n)?;
        lower = lower.max(master_value);
        let wc = worst_case_exact(cf, m_nom, &h, set, comp)?;
        let upper = obj.nominal_value(h.holdings()) - obj.lambda * wc.delta_wc;
        log::debug!("cutting plane iteration {iterations}: lower {lower:.9}, upper {upper:.9}");
        let next = wc.argmin_state.clone();
        if best.as_ref().is_none_or(|(b, _, _)| upper < *b) {
            best = Some((upper, h, wc));
        }
        if best.as_ref().expect("set above").0 - lower <= opts.tol {
            converged = true;
            break;
        }
        scenarios.push(next);
    }
    let (upper, h_star, wc) = best.expect("at least one iteration ran");
    if !converged {
        log::warn!("cutting plane stopped after {iterations} iterations with gap {:e}", upper - lower);
    }
    Ok(RobustSolution {
        nominal_term: obj.nominal_value(h_star.holdings()),
        robustness_term: -obj.lambda * wc.delta_wc,
        worst_state: wc.argmin_state,
        worst_delta: wc.delta_wc,
        duals: wc.duals,
        objective_value: upper,
        status: SolveStatus::Optimal,
        method: ConstructionMethod::CuttingPlane,
        iterations,
        gap: (upper - lower).max(0.0),
        converged,
        h_star,
    })
}

fn master_solve(
    cf: &CashFlowMatrix,
    obj: &ObjectiveSpec,
    hset: &HoldingsSet,
    scenarios: &[MarketState],
    n: usize,
) -> Result<(Portfolio, f64)> {
    let mut prog = ConeProgram::new();
    let h = prog.add_vars(n);
    hset.emit(&mut prog, &h);
    let phi = obj.emit(&mut prog, &h);
    let theta = prog.add_var();
    prog.minimize(&phi);
    prog.minimize(&AffineExpr::term(theta, obj.lambda));
    for m in scenarios {
        let p = price_bonds(cf, m, Compounding::Continuous)?;
        let scaled: Vec<f64> = p.iter().map(|v| v / hset.budget()).collect();
        prog.add_exp(-AffineExpr::var(theta), AffineExpr::constant(1.0), AffineExpr::dot(&h, &scaled));
    }
    let res = solve(&prog, &SolverSettings::default())?;
    if !res.is_optimal() {
        return Err(construction_error(res.status, "cutting-plane master problem"));
    }
    Ok((holdings_from(res.vars(&h))?, res.objective))
}

/// Dual form for boxes and polyhedra, cutting plane for everything else.
pub fn robust_construct(
    cf: &CashFlowMatrix,
    m_nom: &MarketState,
    obj: &ObjectiveSpec,
    hset: &HoldingsSet,
    set: &UncertaintySet,
    opts: &CuttingPlaneOptions,
) -> Result<RobustSolution> {
    match set {
        UncertaintySet::Polyhedral(p) => robust_construct_dual(cf, m_nom, obj, hset, p),
        UncertaintySet::Box(b) => robust_construct_dual(cf, m_nom, obj, hset, &PolyhedralSet::from_box(b)),
        _ => robust_construct_cutting_plane(cf, m_nom, obj, hset, set, opts),
    }
}

/// Largest violations of the two saddle inequalities over sampled points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaddleReport {
    /// `max λ·(Δ(h*, m*) - Δ(h*, m))⁺` over sampled `m` in the set.
    pub market_violation: f64,
    /// `max (L(h*, m*) - L(h, m*))⁺` over sampled holdings `h`, with `L = φ - λΔ`.
    pub holdings_violation: f64,
    pub market_samples: usize,
    pub holdings_samples: usize,
}

impl SaddleReport {
    pub fn max_violation(&self) -> f64 {
        self.market_violation.max(self.holdings_violation)
    }

    pub fn holds(&self, slack: f64) -> bool {
        self.max_violation() <= slack
    }
}

/// Samples both sides of the saddle inequalities around `sol`.
///
/// Holdings are sampled on segments from `h*` toward extreme points of the
/// holdings set found with random linear objectives.
#[allow(clippy::too_many_arguments)]
pub fn verify_saddle_point<R: Rng + ?Sized>(
    sol: &RobustSolution,
    cf: &CashFlowMatrix,
    m_nom: &MarketState,
    obj: &ObjectiveSpec,
    hset: &HoldingsSet,
    set: &UncertaintySet,
    samples: usize,
    rng: &mut R,
) -> Result<SaddleReport> {
    let comp = Compounding::Continuous;
    let h_star = &sol.h_star;
    let lambda = obj.lambda;
    let d_star = delta(cf, &sol.worst_state, m_nom, h_star, comp)?;

    let mut market_violation: f64 = 0.0;
    for m in set.sample_points(samples, cf.num_periods(), rng)? {
        let d = delta(cf, &m, m_nom, h_star, comp)?;
        market_violation = market_violation.max(lambda * (d_star - d));
    }

    let l_star = obj.nominal_value(h_star.holdings()) - lambda * d_star;
    let n = h_star.len();
    let mut extremes = Vec::new();
    for _ in 0..samples.clamp(1, 8) {
        let c: Vec<f64> = (0..n).map(|_| standard_normal(rng)).collect();
        let mut prog = ConeProgram::new();
        let h = prog.add_vars(n);
        hset.emit(&mut prog, &h);
        prog.minimize(&AffineExpr::dot(&h, &c));
        let res = solve(&prog, &SolverSettings::default())?.require_optimal("holdings sampling")?;
        extremes.push(res.vars(&h));
    }
    let mut holdings_violation: f64 = 0.0;
    for k in 0..samples {
        let target = &extremes[k % extremes.len()];
        let theta: f64 = rng.random();
        let h: Vec<f64> =
            h_star.holdings().iter().zip(target).map(|(a, b)| (a + theta * (b - a)).max(0.0)).collect();
        let port = Portfolio::new(h)?;
        let l = obj.nominal_value(port.holdings()) - lambda * delta(cf, &sol.worst_state, m_nom, &port, comp)?;
        holdings_violation = holdings_violation.max(l_star - l);
    }
    Ok(SaddleReport { market_violation, holdings_violation, market_samples: samples, holdings_samples: samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::uncertainty::BoxSet;
    use approx::assert_abs_diff_eq;

    #[test]
    fn f_matrix_layout() {
        assert_eq!(build_f_matrix(1, 1), DMatrix::from_row_slice(1, 2, &[1.0, 1.0]));
        let expected = DMatrix::from_row_slice(
            4,
            4,
            &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0],
        );
        assert_eq!(build_f_matrix(2, 2), expected);
    }

    #[test]
    fn rel_entr_edges() {
        assert_eq!(rel_entr(0.0, 0.0), 0.0);
        assert_eq!(rel_entr(1.0, 0.0), f64::INFINITY);
        assert_abs_diff_eq!(rel_entr(1.0, std::f64::consts::E), -1.0, epsilon = 1e-15);
    }

    fn small() -> (CashFlowMatrix, MarketState, Portfolio) {
        let cf = CashFlowMatrix::from_rows(&[
            vec![101.0, 0.0, 0.0],
            vec![2.0, 2.0, 102.0],
            vec![0.0, 100.0, 0.0],
        ])
        .unwrap();
        let m = MarketState::new(vec![0.01, 0.012, 0.014], vec![0.001, 0.003, 0.002]);
        (cf, m, Portfolio::new(vec![0.3, 0.4, 0.3]).unwrap())
    }

    #[test]
    fn infeasible_multipliers_hit_sentinel() {
        let (cf, m, h) = small();
        let poly = PolyhedralSet::from_box(&BoxSet::around(&m, 0.01, 0.005).unwrap());
        let prices = price_bonds(&cf, &m, Compounding::Continuous).unwrap();
        let bad = DualVariables { mu: vec![0.0; poly.num_rows()], nu: vec![0.5; 9] };
        assert_eq!(dual_objective(&h, &bad, &poly, &cf, &prices, DualConvention::Derived), f64::NEG_INFINITY);
        let short = DualVariables { mu: vec![], nu: vec![] };
        assert_eq!(dual_objective(&h, &short, &poly, &cf, &prices, DualConvention::Printed), f64::NEG_INFINITY);
    }

    #[test]
    fn dual_maximum_matches_exact_analysis() {
        let (cf, m, h) = small();
        let bx = BoxSet::around(&m, 0.01, 0.005).unwrap();
        let poly = PolyhedralSet::from_box(&bx);
        let prices = price_bonds(&cf, &m, Compounding::Continuous).unwrap();
        let wc = worst_case_exact(&cf, &m, &h, &UncertaintySet::Box(bx), Compounding::Continuous).unwrap();
        let (g, duals) = maximize_dual(&h, &poly, &cf, &prices, DualConvention::Derived).unwrap();
        assert_abs_diff_eq!(g, wc.delta_wc, epsilon = 1e-6);
        let direct = dual_objective(&h, &duals, &poly, &cf, &prices, DualConvention::Derived);
        assert_abs_diff_eq!(direct, g, epsilon = 1e-5);
    }

    #[test]
    fn zero_lambda_keeps_nominal() {
        let (cf, m, h) = small();
        let hset = HoldingsSet::from_nominal(&cf, &m, &h).unwrap();
        let obj = ObjectiveSpec::turnover(&h, 0.0).unwrap();
        let poly = PolyhedralSet::from_box(&BoxSet::around(&m, 0.01, 0.005).unwrap());
        let sol = robust_construct_dual(&cf, &m, &obj, &hset, &poly).unwrap();
        assert!(sol.nominal_term < 1e-7, "{}", sol.nominal_term);
        for (a, b) in sol.h_star.holdings().iter().zip(h.holdings()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-6);
        }
    }

    #[test]
    fn dual_and_cutting_plane_agree() {
        let (cf, m, h) = small();
        let hset = HoldingsSet::from_nominal(&cf, &m, &h).unwrap();
        let bx = BoxSet::around(&m, 0.01, 0.005).unwrap();
        let poly = PolyhedralSet::from_box(&bx);
        let obj = ObjectiveSpec::turnover(&h, 0.2).unwrap();
        let dual = robust_construct_dual(&cf, &m, &obj, &hset, &poly).unwrap();
        assert_abs_diff_eq!(dual.objective_value, dual.nominal_term + dual.robustness_term, epsilon = 1e-5);
        let cp = robust_construct_cutting_plane(&cf, &m, &obj, &hset, &UncertaintySet::Box(bx), &CuttingPlaneOptions::default()).unwrap();
        assert!(cp.converged);
        assert_abs_diff_eq!(cp.objective_value, dual.objective_value, epsilon = 1e-4);
        assert!(hset.contains(dual.h_star.holdings(), 1e-8));
    }

    #[test]
    fn holdings_set_validation() {
        assert!(HoldingsSet::new(vec![1.0, -1.0], 1.0).is_err());
        assert!(HoldingsSet::new(vec![1.0], 0.0).is_err());
        let hs = HoldingsSet::new(vec![1.0, 2.0], 4.0).unwrap().with_inequality(vec![1.0, 0.0], 1.0).unwrap();
        assert!(hs.contains(&[0.0, 2.0], 1e-12));
        assert!(!hs.contains(&[2.0, 1.0], 1e-12));
        assert!(hs.clone().with_equality(vec![1.0], 0.0).is_err());
        assert!(ObjectiveSpec::new(ObjectiveKind::LinearCost(vec![1.0]), -1.0).is_err());
    }
}
