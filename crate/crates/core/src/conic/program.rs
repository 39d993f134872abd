use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// Index of a decision variable inside a [`ConeProgram`].
pub type VarId = usize;

/// `Σ coef·x[var] + constant`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AffineExpr {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn constant(c: f64) -> Self {
        Self { terms: Vec::new(), constant: c }
    }

    pub fn var(v: VarId) -> Self {
        Self::term(v, 1.0)
    }

    pub fn term(v: VarId, coef: f64) -> Self {
        Self { terms: vec![(v, coef)], constant: 0.0 }
    }

    /// Sum of the given variables.
    pub fn sum(vars: impl IntoIterator<Item = VarId>) -> Self {
        Self { terms: vars.into_iter().map(|v| (v, 1.0)).collect(), constant: 0.0 }
    }

    /// `Σ coefs[k]·vars[k]`.
    pub fn dot(vars: &[VarId], coefs: &[f64]) -> Self {
        Self {
            terms: vars.iter().zip(coefs).filter(|(_, c)| **c != 0.0).map(|(v, c)| (*v, *c)).collect(),
            constant: 0.0,
        }
    }

    pub fn add_term(&mut self, v: VarId, coef: f64) -> &mut Self {
        self.terms.push((v, coef));
        self
    }

    pub fn with_term(mut self, v: VarId, coef: f64) -> Self {
        self.terms.push((v, coef));
        self
    }

    pub fn plus(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|(v, c)| c * x[*v]).sum::<f64>()
    }

    /// Terms sorted by variable with duplicates summed and zeros dropped.
    pub fn canonical_terms(&self) -> Vec<(VarId, f64)> {
        let mut terms = self.terms.clone();
        terms.sort_by_key(|(v, _)| *v);
        let mut out: Vec<(VarId, f64)> = Vec::with_capacity(terms.len());
        for (v, c) in terms {
            match out.last_mut() {
                Some((lv, lc)) if *lv == v => *lc += c,
                _ => out.push((v, c)),
            }
        }
        out.retain(|(_, c)| *c != 0.0);
        out
    }
}

impl From<VarId> for AffineExpr {
    fn from(v: VarId) -> Self {
        Self::var(v)
    }
}

impl Add for AffineExpr {
    type Output = AffineExpr;
    fn add(mut self, rhs: AffineExpr) -> AffineExpr {
        self.terms.extend(rhs.terms);
        self.constant += rhs.constant;
        self
    }
}

impl Sub for AffineExpr {
    type Output = AffineExpr;
    fn sub(self, rhs: AffineExpr) -> AffineExpr {
        self + (-rhs)
    }
}

impl Neg for AffineExpr {
    type Output = AffineExpr;
    fn neg(self) -> AffineExpr {
        self * -1.0
    }
}

impl Mul<f64> for AffineExpr {
    type Output = AffineExpr;
    fn mul(mut self, k: f64) -> AffineExpr {
        self.terms.iter_mut().for_each(|(_, c)| *c *= k);
        self.constant *= k;
        self
    }
}

/// Cone families supported by the builder.
///
/// Exponential blocks hold one triple `(x, y, z)` and mean the closure of
/// `{ y > 0, y·exp(x/y) ≤ z }`. Second-order blocks `(t, v…)` mean `‖v‖₂ ≤ t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeKind {
    Zero,
    Nonneg,
    SecondOrder,
    Exponential,
}

impl ConeKind {
    pub fn tag(self) -> &'static str {
        match self {
            ConeKind::Zero => "zero",
            ConeKind::Nonneg => "nonneg",
            ConeKind::SecondOrder => "soc",
            ConeKind::Exponential => "exp",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Some(match tag {
            "zero" => ConeKind::Zero,
            "nonneg" => ConeKind::Nonneg,
            "soc" => ConeKind::SecondOrder,
            "exp" => ConeKind::Exponential,
            _ => return None,
        })
    }
}

/// Affine rows that must jointly lie in one cone.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeBlock {
    pub kind: ConeKind,
    pub rows: Vec<AffineExpr>,
}

impl ConeBlock {
    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    /// Distance-like violation of cone membership for the row values `vals`.
    pub fn violation_of(kind: ConeKind, vals: &[f64]) -> f64 {
        match kind {
            ConeKind::Zero => vals.iter().fold(0.0, |m, v| m.max(v.abs())),
            ConeKind::Nonneg => vals.iter().fold(0.0, |m, v| m.max(-v)),
            ConeKind::SecondOrder => {
                let norm = vals[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
                (norm - vals[0]).max(0.0)
            }
            ConeKind::Exponential => {
                let (x, y, z) = (vals[0], vals[1], vals[2]);
                let mut v = (-y).max(0.0) + (-z).max(0.0);
                let (y, z) = (y.max(0.0), z.max(0.0));
                if y > 0.0 && z > 0.0 {
                    v += (x - y * (z / y).ln()).max(0.0);
                } else {
                    v += x.max(0.0);
                }
                v
            }
        }
    }

    pub fn violation(&self, x: &[f64]) -> f64 {
        let vals: Vec<f64> = self.rows.iter().map(|r| r.eval(x)).collect();
        Self::violation_of(self.kind, &vals)
    }
}

/// Handle to a block, in insertion order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockId(pub usize);

/// Minimize `cᵀx + c₀` subject to affine expressions lying in cones.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConeProgram {
    num_vars: usize,
    objective: Vec<f64>,
    objective_constant: f64,
    blocks: Vec<ConeBlock>,
}

impl ConeProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self) -> VarId {
        self.num_vars += 1;
        self.objective.push(0.0);
        self.num_vars - 1
    }

    pub fn add_vars(&mut self, count: usize) -> Vec<VarId> {
        (0..count).map(|_| self.add_var()).collect()
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn num_rows(&self) -> usize {
        self.blocks.iter().map(ConeBlock::dim).sum()
    }

    pub fn blocks(&self) -> &[ConeBlock] {
        &self.blocks
    }

    pub fn block(&self, id: BlockId) -> &ConeBlock {
        &self.blocks[id.0]
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn objective_constant(&self) -> f64 {
        self.objective_constant
    }

    /// Adds `expr` to the objective being minimized.
    pub fn minimize(&mut self, expr: &AffineExpr) {
        for (v, c) in &expr.terms {
            self.objective[*v] += c;
        }
        self.objective_constant += expr.constant;
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective_constant + self.objective.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    pub fn add_block(&mut self, kind: ConeKind, rows: Vec<AffineExpr>) -> BlockId {
        self.blocks.push(ConeBlock { kind, rows });
        BlockId(self.blocks.len() - 1)
    }

    /// Each row `= 0`.
    pub fn add_zero(&mut self, rows: Vec<AffineExpr>) -> BlockId {
        self.add_block(ConeKind::Zero, rows)
    }

    /// Each row `≥ 0`.
    pub fn add_nonneg(&mut self, rows: Vec<AffineExpr>) -> BlockId {
        self.add_block(ConeKind::Nonneg, rows)
    }

    /// `‖v‖₂ ≤ t`.
    pub fn add_soc(&mut self, t: AffineExpr, v: Vec<AffineExpr>) -> BlockId {
        let mut rows = Vec::with_capacity(v.len() + 1);
        rows.push(t);
        rows.extend(v);
        self.add_block(ConeKind::SecondOrder, rows)
    }

    /// `(x, y, z)` in the exponential cone.
    pub fn add_exp(&mut self, x: AffineExpr, y: AffineExpr, z: AffineExpr) -> BlockId {
        self.add_block(ConeKind::Exponential, vec![x, y, z])
    }

    pub(crate) fn push_raw(&mut self, num_vars: usize, objective: Vec<f64>, constant: f64) {
        self.num_vars = num_vars;
        self.objective = objective;
        self.objective_constant = constant;
    }

    pub fn validate(&self) -> Result<()> {
        for (b, block) in self.blocks.iter().enumerate() {
            let ok_dim = match block.kind {
                ConeKind::Exponential => block.dim() == 3,
                ConeKind::SecondOrder => block.dim() >= 1,
                _ => block.dim() >= 1,
            };
            if !ok_dim {
                return Err(Error::InvalidInput(format!("block {b} ({}) has dimension {}", block.kind.tag(), block.dim())));
            }
            for row in &block.rows {
                if !row.constant.is_finite() {
                    return Err(Error::InvalidInput(format!("block {b} has a non-finite offset")));
                }
                for (v, c) in &row.terms {
                    if *v >= self.num_vars {
                        return Err(Error::InvalidInput(format!("block {b} references variable {v} of {}", self.num_vars)));
                    }
                    if !c.is_finite() {
                        return Err(Error::InvalidInput(format!("block {b} has a non-finite coefficient")));
                    }
                }
            }
        }
        if self.objective.iter().any(|c| !c.is_finite()) || !self.objective_constant.is_finite() {
            return Err(Error::InvalidInput("objective has non-finite entries".into()));
        }
        Ok(())
    }

    /// Largest cone-membership violation over all blocks at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.blocks.iter().map(|b| b.violation(x)).fold(0.0, f64::max)
    }
}
