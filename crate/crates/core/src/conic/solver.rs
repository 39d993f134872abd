use std::time::Duration;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use super::program::{AffineExpr, BlockId, ConeKind, ConeProgram, VarId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalLimit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    /// Tighter tolerance tried first; if the solver stalls before reaching
    /// it, the solve is repeated at `tol`.
    pub polish_tol: Option<f64>,
    /// Requested duality-gap and feasibility tolerance.
    pub tol: f64,
    /// Loosest tolerance still reported as optimal (with a warning).
    pub accept_tol: f64,
    pub max_iter: u32,
    pub verbose: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { polish_tol: Some(1e-10), tol: 1e-8, accept_tol: 1e-6, max_iter: 200, verbose: false }
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Set when the solver only reached `accept_tol`.
    pub reduced_accuracy: bool,
    pub x: Vec<f64>,
    /// Dual values per block, in block order.
    pub duals: Vec<Vec<f64>>,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Largest cone violation of `x` re-evaluated against the program.
    pub cone_violation: f64,
    pub iterations: u32,
    pub solve_time: Duration,
}

impl SolveResult {
    pub fn value(&self, expr: &AffineExpr) -> f64 {
        expr.eval(&self.x)
    }

    pub fn var(&self, v: VarId) -> f64 {
        self.x[v]
    }

    pub fn vars(&self, vs: &[VarId]) -> Vec<f64> {
        vs.iter().map(|v| self.x[*v]).collect()
    }

    pub fn dual(&self, block: BlockId) -> &[f64] {
        &self.duals[block.0]
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    /// Turns a non-optimal status into an error naming `what` was being solved.
    pub fn require_optimal(self, what: &str) -> Result<Self> {
        match self.status {
            SolveStatus::Optimal => Ok(self),
            status => Err(Error::Solver { status, detail: what.to_string() }),
        }
    }
}

/// Something that can solve a [`ConeProgram`].
pub trait ConeSolver {
    fn solve(&self, prog: &ConeProgram, settings: &SolverSettings) -> Result<SolveResult>;
}

/// Interior-point backend built on the Clarabel solver.
#[derive(Debug, Clone, Copy, Default)]
pub struct ClarabelBackend;

impl ConeSolver for ClarabelBackend {
    fn solve(&self, prog: &ConeProgram, settings: &SolverSettings) -> Result<SolveResult> {
        prog.validate()?;
        let n = prog.num_vars();
        let m = prog.num_rows();

        // Clarabel form: A x + s = b, s ∈ K. A row g(x) = a·x + c ∈ K maps to A = -a, b = c.
        let mut rows = Vec::new();
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut rhs = Vec::with_capacity(m);
        let mut cones = Vec::with_capacity(prog.blocks().len());
        let mut r = 0;
        for block in prog.blocks() {
            for row in &block.rows {
                for (v, c) in row.canonical_terms() {
                    rows.push(r);
                    cols.push(v);
                    vals.push(-c);
                }
                rhs.push(row.constant);
                r += 1;
            }
            cones.push(match block.kind {
                ConeKind::Zero => SupportedConeT::ZeroConeT(block.dim()),
                ConeKind::Nonneg => SupportedConeT::NonnegativeConeT(block.dim()),
                ConeKind::SecondOrder => SupportedConeT::SecondOrderConeT(block.dim()),
                ConeKind::Exponential => SupportedConeT::ExponentialConeT(),
            });
        }
        let a = CscMatrix::new_from_triplets(m, n, rows, cols, vals);
        let p = CscMatrix::zeros((n, n));
        let run = |tol: f64| -> Result<DefaultSolver<f64>> {
            let clarabel_settings = DefaultSettingsBuilder::default()
                .verbose(settings.verbose)
                .max_iter(settings.max_iter)
                .tol_gap_abs(tol)
                .tol_gap_rel(tol)
                .tol_feas(tol)
                .reduced_tol_gap_abs(settings.accept_tol)
                .reduced_tol_gap_rel(settings.accept_tol)
                .reduced_tol_feas(settings.accept_tol)
                .presolve_enable(false)
                .build()
                .map_err(|e| Error::InvalidInput(format!("solver settings: {e}")))?;
            let mut solver = DefaultSolver::new(&p, prog.objective(), &a, &rhs, &cones, clarabel_settings)
                .map_err(|e| Error::InvalidInput(format!("solver setup: {e}")))?;
            solver.solve();
            Ok(solver)
        };
        let meets = |s: &DefaultSolver<f64>, tol: f64| {
            let i = &s.info;
            i.res_primal <= tol && i.res_dual <= tol && (i.gap_abs <= tol || i.gap_rel <= tol)
        };

        let mut solver = match settings.polish_tol.filter(|t| *t < settings.tol) {
            Some(tight) => run(tight)?,
            None => run(settings.tol)?,
        };
        let settled = matches!(
            solver.solution.status,
            SolverStatus::Solved
                | SolverStatus::PrimalInfeasible
                | SolverStatus::DualInfeasible
                | SolverStatus::AlmostPrimalInfeasible
                | SolverStatus::AlmostDualInfeasible
        ) || meets(&solver, settings.tol);
        if !settled {
            solver = run(settings.tol)?;
        }
        let sol = &solver.solution;
        log::debug!("clarabel {:?} iters {} gap {:e}/{:e} res {:e}/{:e}", sol.status, solver.info.iterations, solver.info.gap_abs, solver.info.gap_rel, solver.info.res_primal, solver.info.res_dual);

        let (status, reduced_accuracy) = match sol.status {
            SolverStatus::Solved => (SolveStatus::Optimal, false),
            SolverStatus::AlmostSolved => (SolveStatus::Optimal, !meets(&solver, settings.tol)),
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => (SolveStatus::Infeasible, false),
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => (SolveStatus::Unbounded, false),
            _ if meets(&solver, settings.tol) => (SolveStatus::Optimal, false),
            SolverStatus::MaxIterations | SolverStatus::InsufficientProgress | SolverStatus::NumericalError
                if meets(&solver, settings.accept_tol) =>
            {
                (SolveStatus::Optimal, true)
            }
            _ => (SolveStatus::NumericalLimit, false),
        };
        if reduced_accuracy {
            log::warn!("cone solve accepted at reduced accuracy ({:e})", settings.accept_tol);
        }

        let mut duals = Vec::with_capacity(prog.blocks().len());
        let mut offset = 0;
        for block in prog.blocks() {
            duals.push(sol.z[offset..offset + block.dim()].to_vec());
            offset += block.dim();
        }
        let x = sol.x.clone();
        Ok(SolveResult {
            status,
            reduced_accuracy,
            objective: prog.objective_value(&x),
            cone_violation: prog.max_violation(&x),
            x,
            duals,
            primal_residual: sol.r_prim,
            dual_residual: sol.r_dual,
            iterations: sol.iterations,
            solve_time: Duration::from_secs_f64(sol.solve_time.max(0.0)),
        })
    }
}

/// Solves `prog` with the reference backend.
pub fn solve(prog: &ConeProgram, settings: &SolverSettings) -> Result<SolveResult> {
    ClarabelBackend.solve(prog, settings)
}
