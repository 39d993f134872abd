//! Cone-program builder and solver adapter.
//!
//! Programs are built from affine rows grouped into zero, nonnegative,
//! second-order and exponential cone blocks, in insertion order. The
//! exponential cone triple `(x, y, z)` always means the closure of
//! `{ y > 0, y·exp(x/y) ≤ z }`.

mod dump;
mod program;
mod solver;

pub use dump::{from_text, to_text};
pub use program::{AffineExpr, BlockId, ConeBlock, ConeKind, ConeProgram, VarId};
pub use solver::{solve, ClarabelBackend, ConeSolver, SolveResult, SolveStatus, SolverSettings};

use crate::error::{Error, Result};

/// Blocks created by [`add_lse_epigraph`].
#[derive(Debug, Clone)]
pub struct LseHandles {
    /// `1 - Σ u_k ≥ 0`.
    pub budget: BlockId,
    /// One auxiliary share variable per term; at the optimum these are the softmax weights.
    pub shares: Vec<VarId>,
    pub cones: Vec<BlockId>,
}

/// Enforces `log Σ_k exp(a_k(x) + w_k) ≤ bound`.
///
/// Each term is `(a_k, w_k)` with `w_k` a finite log-weight. Uses
/// `Σ u_k ≤ 1` and `(a_k + w_k - bound, 1, u_k) ∈ K_exp`.
pub fn add_lse_epigraph(
    prog: &mut ConeProgram,
    terms: &[(AffineExpr, f64)],
    bound: &AffineExpr,
) -> Result<LseHandles> {
    if terms.is_empty() {
        return Err(Error::InvalidInput("log-sum-exp needs at least one term".into()));
    }
    if let Some(k) = terms.iter().position(|(_, w)| !w.is_finite()) {
        return Err(Error::InvalidInput(format!("log-sum-exp term {k} has a non-finite weight")));
    }
    let shares = prog.add_vars(terms.len());
    let budget = prog.add_nonneg(vec![-AffineExpr::sum(shares.iter().copied()) + AffineExpr::constant(1.0)]);
    let cones = terms
        .iter()
        .zip(&shares)
        .map(|((expr, w), &u)| {
            let x = expr.clone().plus(*w) - bound.clone();
            prog.add_exp(x, AffineExpr::constant(1.0), AffineExpr::var(u))
        })
        .collect();
    Ok(LseHandles { budget, shares, cones })
}

/// Enforces `p·log(p/q) ≤ bound` through `(-bound, p, q) ∈ K_exp`.
pub fn add_relative_entropy(
    prog: &mut ConeProgram,
    p: AffineExpr,
    q: AffineExpr,
    bound: &AffineExpr,
) -> BlockId {
    prog.add_exp(-bound.clone(), p, q)
}
