//! Convex uncertainty sets over stacked `(y, s)` market states.
//!
//! Every set can emit cone constraints that pin a vector of program
//! variables `x = (y, s)` inside it, answer membership queries, and produce
//! sample points for property checks.

mod chi2;
mod history;

pub use chi2::{chi2_cdf, chi2_quantile};
pub use history::{ellipsoid_from_history, key_rate_map, HistoryPanel, RANK_TOLERANCE};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngExt};

use crate::conic::{solve, AffineExpr, BlockId, ConeProgram, SolveStatus, SolverSettings, VarId};
use crate::error::{check_len, Error, Result};
use crate::instruments::MarketState;

/// Elementwise bounds on yields and spreads.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSet {
    lower: MarketState,
    upper: MarketState,
}

impl BoxSet {
    pub fn new(lower: MarketState, upper: MarketState) -> Result<Self> {
        check_len("box yields", lower.yields.len(), upper.yields.len())?;
        check_len("box spreads", lower.spreads.len(), upper.spreads.len())?;
        let (lo, hi) = (lower.to_vector(), upper.to_vector());
        if let Some(j) = (0..lo.len()).find(|&j| !(lo[j] <= hi[j])) {
            return Err(Error::InvalidInput(format!("box bound {j}: min {} > max {}", lo[j], hi[j])));
        }
        Ok(Self { lower, upper })
    }

    /// Box of half-widths `dy`, `ds` around `center`.
    pub fn around(center: &MarketState, dy: f64, ds: f64) -> Result<Self> {
        let shift = |v: &[f64], d: f64| -> Vec<f64> { v.iter().map(|x| x + d).collect() };
        Self::new(
            MarketState::new(shift(&center.yields, -dy), shift(&center.spreads, -ds)),
            MarketState::new(shift(&center.yields, dy), shift(&center.spreads, ds)),
        )
    }

    pub fn lower(&self) -> &MarketState {
        &self.lower
    }

    pub fn upper(&self) -> &MarketState {
        &self.upper
    }
}

/// Convex hull of a finite list of scenarios.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioHull {
    scenarios: Vec<MarketState>,
}

impl ScenarioHull {
    pub fn new(scenarios: Vec<MarketState>) -> Result<Self> {
        let first = scenarios.first().ok_or_else(|| Error::InvalidInput("scenario hull needs at least one scenario".into()))?;
        let (periods, bonds) = (first.yields.len(), first.spreads.len());
        for s in &scenarios {
            check_len("scenario yields", periods, s.yields.len())?;
            check_len("scenario spreads", bonds, s.spreads.len())?;
        }
        Ok(Self { scenarios })
    }

    pub fn scenarios(&self) -> &[MarketState] {
        &self.scenarios
    }
}

/// `{ Z(center + L w) : ‖w‖₂² ≤ radius_sq }`, with `Z = I` when no map is given.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidSet {
    center: DVector<f64>,
    factor: DMatrix<f64>,
    radius_sq: f64,
    map: Option<DMatrix<f64>>,
}

impl EllipsoidSet {
    pub fn new(center: DVector<f64>, factor: DMatrix<f64>, radius_sq: f64, map: Option<DMatrix<f64>>) -> Result<Self> {
        if !(radius_sq > 0.0) || !radius_sq.is_finite() {
            return Err(Error::InvalidInput(format!("ellipsoid radius² must be positive, got {radius_sq}")));
        }
        check_len("ellipsoid factor rows", center.len(), factor.nrows())?;
        if factor.ncols() > center.len() {
            return Err(Error::InvalidInput("ellipsoid factor rank exceeds its dimension".into()));
        }
        if let Some(z) = &map {
            check_len("ellipsoid map columns", center.len(), z.ncols())?;
        }
        Ok(Self { center, factor, radius_sq, map })
    }

    /// Full-rank ellipsoid `{ x : (x-μ)ᵀ Σ⁻¹ (x-μ) ≤ radius_sq }` from a covariance.
    pub fn from_covariance(mean: DVector<f64>, cov: &DMatrix<f64>, radius_sq: f64) -> Result<Self> {
        let factor = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidInput("covariance is not positive definite".into()))?
            .l();
        Self::new(mean, factor, radius_sq, None)
    }

    pub fn radius_sq(&self) -> f64 {
        self.radius_sq
    }

    pub fn rank(&self) -> usize {
        self.factor.ncols()
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn map(&self) -> Option<&DMatrix<f64>> {
        self.map.as_ref()
    }

    /// Center in `(y, s)` coordinates.
    pub fn embedded_center(&self) -> DVector<f64> {
        match &self.map {
            Some(z) => z * &self.center,
            None => self.center.clone(),
        }
    }

    /// `Z L`, the shape factor in `(y, s)` coordinates.
    pub fn embedded_factor(&self) -> DMatrix<f64> {
        match &self.map {
            Some(z) => z * &self.factor,
            None => self.factor.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.map.as_ref().map_or(self.center.len(), DMatrix::nrows)
    }
}

/// `{ x : A x ≤ b }`, validated nonempty and bounded.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyhedralSet {
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl PolyhedralSet {
    /// Checks nonemptiness and boundedness with one min and one max LP per coordinate.
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let set = Self::new_unchecked(a, b)?;
        set.bounding_box()?;
        Ok(set)
    }

    pub(crate) fn new_unchecked(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        check_len("polyhedron rows", a.nrows(), b.len())?;
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("polyhedron has non-finite entries".into()));
        }
        Ok(Self { a, b })
    }

    /// The box as `[I; -I] x ≤ [max; -min]`.
    pub fn from_box(bx: &BoxSet) -> Self {
        let (lo, hi) = (bx.lower.to_vector(), bx.upper.to_vector());
        let d = lo.len();
        let a = DMatrix::from_fn(2 * d, d, |r, c| {
            if r == c {
                1.0
            } else if r == c + d {
                -1.0
            } else {
                0.0
            }
        });
        let b = DVector::from_iterator(2 * d, hi.iter().copied().chain(lo.iter().map(|v| -v)));
        Self { a, b }
    }

    /// Appends rows `A' x ≤ b'`.
    pub fn with_rows(&self, a: &DMatrix<f64>, b: &DVector<f64>) -> Result<Self> {
        check_len("extra polyhedron columns", self.dim(), a.ncols())?;
        let stacked_a = DMatrix::from_fn(self.a.nrows() + a.nrows(), self.dim(), |r, c| {
            if r < self.a.nrows() { self.a[(r, c)] } else { a[(r - self.a.nrows(), c)] }
        });
        let stacked_b = DVector::from_iterator(self.b.len() + b.len(), self.b.iter().chain(b.iter()).copied());
        Self::new(stacked_a, stacked_b)
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn num_rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    /// Per-coordinate `(min, max)` over the polyhedron.
    pub fn bounding_box(&self) -> Result<Vec<(f64, f64)>> {
        let d = self.dim();
        let mut out = Vec::with_capacity(d);
        for j in 0..d {
            let mut range = [0.0; 2];
            for (k, sign) in [1.0, -1.0].into_iter().enumerate() {
                let mut c = vec![0.0; d];
                c[j] = sign;
                let (status, value, _) = linear_over(&UncertaintySet::Polyhedral(self.clone()), &c)?;
                match status {
                    SolveStatus::Optimal => range[k] = sign * value,
                    SolveStatus::Infeasible => return Err(Error::EmptySet),
                    SolveStatus::Unbounded => return Err(Error::UnboundedSet(j)),
                    s => return Err(Error::Solver { status: s, detail: format!("bounding coordinate {j}") }),
                }
            }
            out.push((range[0], range[1]));
        }
        Ok(out)
    }
}

/// Second-order constraint `‖R x + o‖₂ ≤ radius` over stacked `(y, s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SocRows {
    pub radius: f64,
    pub rows: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl SocRows {
    pub fn norm_at(&self, x: &DVector<f64>) -> f64 {
        (&self.rows * x + &self.offset).norm()
    }
}

/// Constraint form of a [`PerturbationSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationBlock {
    /// `δ_min ≤ y - y_base ≤ δ_max` as `2T` rows; spread columns are zero.
    pub bounds: PolyhedralSet,
    /// Spreads held at the base values.
    pub spreads_fixed: Vec<f64>,
    /// `‖δ‖₂ ≤ √κ`, absent when `κ` is infinite.
    pub mean_square: Option<SocRows>,
    /// `‖first differences of δ‖₂ ≤ √ω`, absent when `ω` is infinite or `T < 2`.
    pub roughness: Option<SocRows>,
}

/// Yield-curve perturbations `y = y_base + δ` with bounds, a mean-square
/// budget `Σ δ² ≤ κ` and a roughness budget `Σ (δ_{t+1} - δ_t)² ≤ ω`.
/// Spreads stay at their base values. Infinite budgets are omitted.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSpec {
    pub base: MarketState,
    pub delta_min: Vec<f64>,
    pub delta_max: Vec<f64>,
    pub kappa: f64,
    pub omega: f64,
}

impl PerturbationSpec {
    pub fn new(base: MarketState, delta_min: Vec<f64>, delta_max: Vec<f64>, kappa: f64, omega: f64) -> Result<Self> {
        let periods = base.yields.len();
        check_len("perturbation lower bounds", periods, delta_min.len())?;
        check_len("perturbation upper bounds", periods, delta_max.len())?;
        if delta_min.iter().zip(&delta_max).any(|(lo, hi)| !(lo <= hi)) {
            return Err(Error::InvalidInput("perturbation bounds must satisfy min ≤ max".into()));
        }
        if !(kappa >= 0.0) || !(omega >= 0.0) {
            return Err(Error::InvalidInput("perturbation budgets must be nonnegative".into()));
        }
        Ok(Self { base, delta_min, delta_max, kappa, omega })
    }

    pub fn to_block(&self) -> PerturbationBlock {
        let periods = self.base.yields.len();
        let d = self.base.dim();
        let lower = MarketState::new(
            self.base.yields.iter().zip(&self.delta_min).map(|(y, lo)| y + lo).collect(),
            self.base.spreads.clone(),
        );
        let upper = MarketState::new(
            self.base.yields.iter().zip(&self.delta_max).map(|(y, hi)| y + hi).collect(),
            self.base.spreads.clone(),
        );
        // keep only the yield rows of the box: first T upper rows, then T lower rows
        let full = PolyhedralSet::from_box(&BoxSet { lower, upper });
        let keep: Vec<usize> = (0..periods).chain(d..d + periods).collect();
        let bounds = PolyhedralSet {
            a: full.a.select_rows(keep.iter()),
            b: DVector::from_iterator(keep.len(), keep.iter().map(|&r| full.b[r])),
        };
        let base = DVector::from_vec(self.base.to_vector());
        let selector = DMatrix::from_fn(periods, d, |r, c| if r == c { 1.0 } else { 0.0 });
        let mean_square = self.kappa.is_finite().then(|| SocRows {
            radius: self.kappa.sqrt(),
            offset: -(&selector * &base),
            rows: selector.clone(),
        });
        let roughness = (self.omega.is_finite() && periods >= 2).then(|| {
            let diff = DMatrix::from_fn(periods - 1, d, |r, c| {
                if c == r + 1 {
                    1.0
                } else if c == r {
                    -1.0
                } else {
                    0.0
                }
            });
            SocRows { radius: self.omega.sqrt(), offset: -(&diff * &base), rows: diff }
        });
        PerturbationBlock { bounds, spreads_fixed: self.base.spreads.clone(), mean_square, roughness }
    }
}

/// `{ Z f + v : f_min ≤ f ≤ f_max, ‖D⁻¹ v‖₂ ≤ 1 }`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorSet {
    loadings: DMatrix<f64>,
    factor_min: Vec<f64>,
    factor_max: Vec<f64>,
    idio_scale: Vec<f64>,
}

impl FactorSet {
    pub fn new(loadings: DMatrix<f64>, factor_min: Vec<f64>, factor_max: Vec<f64>, idio_scale: Vec<f64>) -> Result<Self> {
        check_len("factor lower bounds", loadings.ncols(), factor_min.len())?;
        check_len("factor upper bounds", loadings.ncols(), factor_max.len())?;
        check_len("idiosyncratic scales", loadings.nrows(), idio_scale.len())?;
        if factor_min.iter().zip(&factor_max).any(|(lo, hi)| !(lo <= hi)) {
            return Err(Error::InvalidInput("factor bounds must satisfy min ≤ max".into()));
        }
        if idio_scale.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::InvalidInput("idiosyncratic scales must be positive".into()));
        }
        Ok(Self { loadings, factor_min, factor_max, idio_scale })
    }

    pub fn loadings(&self) -> &DMatrix<f64> {
        &self.loadings
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum UncertaintySet {
    Box(BoxSet),
    Hull(ScenarioHull),
    Ellipsoid(EllipsoidSet),
    Polyhedral(PolyhedralSet),
    Perturbation(PerturbationSpec),
    Factor(FactorSet),
    /// Points lying in every member set.
    Intersection(Vec<UncertaintySet>),
}

/// Blocks added by [`UncertaintySet::emit`].
#[derive(Debug, Clone, Default)]
pub struct EmittedSet {
    /// `b - A x ≥ 0` blocks of polyhedral members, in member order.
    pub polyhedral: Vec<BlockId>,
    pub blocks: Vec<BlockId>,
}

impl UncertaintySet {
    /// Dimension `T + n` of the `(y, s)` vectors in the set.
    pub fn dim(&self) -> usize {
        match self {
            UncertaintySet::Box(b) => b.lower.dim(),
            UncertaintySet::Hull(h) => h.scenarios[0].dim(),
            UncertaintySet::Ellipsoid(e) => e.dim(),
            UncertaintySet::Polyhedral(p) => p.dim(),
            UncertaintySet::Perturbation(p) => p.base.dim(),
            UncertaintySet::Factor(f) => f.loadings.nrows(),
            UncertaintySet::Intersection(sets) => sets.first().map_or(0, UncertaintySet::dim),
        }
    }

    /// Adds constraints forcing `x ∈ U`; may introduce auxiliary variables.
    pub fn emit(&self, prog: &mut ConeProgram, x: &[VarId]) -> Result<EmittedSet> {
        check_len("uncertainty set dimension", self.dim(), x.len())?;
        let mut out = EmittedSet::default();
        let xv = |j: usize| AffineExpr::var(x[j]);
        match self {
            UncertaintySet::Box(b) => {
                let poly = PolyhedralSet::from_box(b);
                return UncertaintySet::Polyhedral(poly).emit(prog, x);
            }
            UncertaintySet::Polyhedral(p) => {
                let rows = (0..p.num_rows())
                    .map(|r| {
                        let coefs: Vec<f64> = p.a.row(r).iter().map(|v| -v).collect();
                        AffineExpr::dot(x, &coefs).plus(p.b[r])
                    })
                    .collect();
                let id = prog.add_nonneg(rows);
                out.polyhedral.push(id);
                out.blocks.push(id);
            }
            UncertaintySet::Hull(h) => {
                let weights = prog.add_vars(h.scenarios.len());
                out.blocks.push(prog.add_nonneg(weights.iter().map(|&w| AffineExpr::var(w)).collect()));
                let mut rows = vec![AffineExpr::sum(weights.iter().copied()).plus(-1.0)];
                let points: Vec<Vec<f64>> = h.scenarios.iter().map(MarketState::to_vector).collect();
                for j in 0..x.len() {
                    let coefs: Vec<f64> = points.iter().map(|p| -p[j]).collect();
                    rows.push(xv(j) + AffineExpr::dot(&weights, &coefs));
                }
                out.blocks.push(prog.add_zero(rows));
            }
            UncertaintySet::Ellipsoid(e) => {
                let center = e.embedded_center();
                let factor = e.embedded_factor();
                let w = prog.add_vars(e.rank());
                let rows = (0..x.len())
                    .map(|j| {
                        let coefs: Vec<f64> = factor.row(j).iter().map(|v| -v).collect();
                        (xv(j) + AffineExpr::dot(&w, &coefs)).plus(-center[j])
                    })
                    .collect();
                out.blocks.push(prog.add_zero(rows));
                if !w.is_empty() {
                    let id = prog.add_soc(
                        AffineExpr::constant(e.radius_sq.sqrt()),
                        w.iter().map(|&v| AffineExpr::var(v)).collect(),
                    );
                    out.blocks.push(id);
                }
            }
            UncertaintySet::Perturbation(spec) => {
                let block = spec.to_block();
                let inner = UncertaintySet::Polyhedral(block.bounds).emit(prog, x)?;
                out.polyhedral.extend(inner.polyhedral);
                out.blocks.extend(inner.blocks);
                let periods = spec.base.yields.len();
                let fixed: Vec<AffineExpr> =
                    block.spreads_fixed.iter().enumerate().map(|(i, s)| xv(periods + i).plus(-s)).collect();
                if !fixed.is_empty() {
                    out.blocks.push(prog.add_zero(fixed));
                }
                for soc in [block.mean_square, block.roughness].into_iter().flatten() {
                    out.blocks.push(emit_soc_rows(prog, x, &soc));
                }
            }
            UncertaintySet::Factor(f) => {
                let k = f.loadings.ncols();
                let d = f.loadings.nrows();
                let fv = prog.add_vars(k);
                let g = prog.add_vars(d);
                let rows = (0..d)
                    .map(|j| {
                        let coefs: Vec<f64> = f.loadings.row(j).iter().map(|v| -v).collect();
                        (xv(j) + AffineExpr::dot(&fv, &coefs)).with_term(g[j], -f.idio_scale[j])
                    })
                    .collect();
                out.blocks.push(prog.add_zero(rows));
                let bounds = (0..k)
                    .flat_map(|i| {
                        [
                            AffineExpr::var(fv[i]).plus(-f.factor_min[i]),
                            AffineExpr::term(fv[i], -1.0).plus(f.factor_max[i]),
                        ]
                    })
                    .collect::<Vec<_>>();
                if !bounds.is_empty() {
                    out.blocks.push(prog.add_nonneg(bounds));
                }
                out.blocks.push(prog.add_soc(AffineExpr::constant(1.0), g.iter().map(|&v| AffineExpr::var(v)).collect()));
            }
            UncertaintySet::Intersection(sets) => {
                for s in sets {
                    let inner = s.emit(prog, x)?;
                    out.polyhedral.extend(inner.polyhedral);
                    out.blocks.extend(inner.blocks);
                }
            }
        }
        Ok(out)
    }

    /// Whether `point` satisfies the set's constraints within `tol`.
    pub fn contains(&self, point: &MarketState, tol: f64) -> Result<bool> {
        check_len("point dimension", self.dim(), point.dim())?;
        let x = DVector::from_vec(point.to_vector());
        Ok(match self {
            UncertaintySet::Box(b) => {
                let (lo, hi) = (b.lower.to_vector(), b.upper.to_vector());
                x.iter().zip(lo.iter().zip(&hi)).all(|(v, (l, h))| *v >= l - tol && *v <= h + tol)
            }
            UncertaintySet::Polyhedral(p) => (&p.a * &x - &p.b).iter().all(|r| *r <= tol),
            UncertaintySet::Hull(h) => hull_distance(h, &x)? <= tol,
            UncertaintySet::Ellipsoid(e) => {
                let target = &x - e.embedded_center();
                let factor = e.embedded_factor();
                if factor.ncols() == 0 {
                    target.amax() <= tol
                } else {
                    let w = factor
                        .clone()
                        .svd(true, true)
                        .solve(&target, 1e-12)
                        .map_err(|e| Error::InvalidInput(e.to_string()))?;
                    let residual = (&factor * &w - &target).amax();
                    residual <= tol && w.norm() <= e.radius_sq.sqrt() + tol
                }
            }
            UncertaintySet::Perturbation(spec) => {
                let block = spec.to_block();
                (&block.bounds.a * &x - &block.bounds.b).iter().all(|r| *r <= tol)
                    && point.spreads.iter().zip(&block.spreads_fixed).all(|(s, s0)| (s - s0).abs() <= tol)
                    && [block.mean_square, block.roughness]
                        .iter()
                        .flatten()
                        .all(|soc| soc.norm_at(&x) <= soc.radius + tol)
            }
            UncertaintySet::Factor(f) => factor_distance(f, &x)? <= 1.0 + tol,
            UncertaintySet::Intersection(sets) => {
                for s in sets {
                    if !s.contains(point, tol)? {
                        return Ok(false);
                    }
                }
                true
            }
        })
    }

    /// The elementwise-largest point of the set, when it has one that is
    /// known in closed form (boxes).
    pub fn maximum_element(&self) -> Option<MarketState> {
        match self {
            UncertaintySet::Box(b) => Some(b.upper.clone()),
            _ => None,
        }
    }

    /// `count` points of the set: extreme points from random linear objectives,
    /// mixed by random convex weights.
    pub fn sample_points<R: Rng + ?Sized>(&self, count: usize, periods: usize, rng: &mut R) -> Result<Vec<MarketState>> {
        let d = self.dim();
        let to_state = |v: &[f64]| MarketState::from_vector(v, periods);
        match self {
            UncertaintySet::Box(b) => {
                let (lo, hi) = (b.lower.to_vector(), b.upper.to_vector());
                return Ok((0..count)
                    .map(|_| {
                        let v: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| l + (h - l) * rng.random::<f64>()).collect();
                        to_state(&v)
                    })
                    .collect());
            }
            UncertaintySet::Ellipsoid(e) => {
                let center = e.embedded_center();
                let factor = e.embedded_factor();
                let r = e.rank();
                return Ok((0..count)
                    .map(|_| {
                        let w = if r == 0 {
                            DVector::zeros(0)
                        } else {
                            let g = DVector::from_iterator(r, (0..r).map(|_| standard_normal(rng)));
                            let scale = e.radius_sq.sqrt() * rng.random::<f64>().powf(1.0 / r as f64);
                            g.normalize() * scale
                        };
                        let v = &center + &factor * w;
                        to_state(v.as_slice())
                    })
                    .collect());
            }
            _ => {}
        }
        let vertices: Vec<Vec<f64>> = match self {
            UncertaintySet::Hull(h) => h.scenarios.iter().map(MarketState::to_vector).collect(),
            _ => {
                let k = (2 * d).clamp(4, 24);
                let mut pts = Vec::with_capacity(k);
                for _ in 0..k {
                    let c: Vec<f64> = (0..d).map(|_| standard_normal(rng)).collect();
                    let (status, _, point) = linear_over(self, &c)?;
                    if status != SolveStatus::Optimal {
                        return Err(Error::Solver { status, detail: "sampling extreme points".into() });
                    }
                    pts.push(point);
                }
                pts
            }
        };
        Ok((0..count)
            .map(|_| {
                let weights: Vec<f64> = vertices.iter().map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
                let total: f64 = weights.iter().sum();
                let mut v = vec![0.0; d];
                for (w, p) in weights.iter().zip(&vertices) {
                    for (acc, pj) in v.iter_mut().zip(p) {
                        *acc += w / total * pj;
                    }
                }
                to_state(&v)
            })
            .collect())
    }
}

fn emit_soc_rows(prog: &mut ConeProgram, x: &[VarId], soc: &SocRows) -> BlockId {
    let rows = (0..soc.rows.nrows())
        .map(|r| AffineExpr::dot(x, soc.rows.row(r).iter().copied().collect::<Vec<_>>().as_slice()).plus(soc.offset[r]))
        .collect();
    prog.add_soc(AffineExpr::constant(soc.radius), rows)
}

/// Minimizes `cᵀx` over the set; returns status, optimal value and minimizer.
pub fn linear_over(set: &UncertaintySet, c: &[f64]) -> Result<(SolveStatus, f64, Vec<f64>)> {
    let mut prog = ConeProgram::new();
    let x = prog.add_vars(set.dim());
    prog.minimize(&AffineExpr::dot(&x, c));
    set.emit(&mut prog, &x)?;
    let res = solve(&prog, &SolverSettings::default())?;
    let point = res.vars(&x);
    Ok((res.status, res.objective, point))
}

/// Infinity-norm distance from `x` to the hull.
fn hull_distance(h: &ScenarioHull, x: &DVector<f64>) -> Result<f64> {
    let mut prog = ConeProgram::new();
    let t = prog.add_var();
    let weights = prog.add_vars(h.scenarios.len());
    prog.minimize(&AffineExpr::var(t));
    prog.add_nonneg(weights.iter().map(|&w| AffineExpr::var(w)).collect());
    prog.add_zero(vec![AffineExpr::sum(weights.iter().copied()).plus(-1.0)]);
    let points: Vec<Vec<f64>> = h.scenarios.iter().map(MarketState::to_vector).collect();
    let mut rows = Vec::with_capacity(2 * x.len());
    for j in 0..x.len() {
        let coefs: Vec<f64> = points.iter().map(|p| p[j]).collect();
        let gap = AffineExpr::dot(&weights, &coefs).plus(-x[j]);
        rows.push(AffineExpr::var(t) - gap.clone());
        rows.push(AffineExpr::var(t) + gap);
    }
    prog.add_nonneg(rows);
    let res = solve(&prog, &SolverSettings::default())?.require_optimal("hull membership")?;
    Ok(res.var(t))
}

/// Smallest `‖D⁻¹(x - Z f)‖₂` over the factor box.
fn factor_distance(f: &FactorSet, x: &DVector<f64>) -> Result<f64> {
    let mut prog = ConeProgram::new();
    let t = prog.add_var();
    let fv = prog.add_vars(f.loadings.ncols());
    prog.minimize(&AffineExpr::var(t));
    let rows = (0..f.loadings.nrows())
        .map(|j| {
            let coefs: Vec<f64> = f.loadings.row(j).iter().map(|v| -v / f.idio_scale[j]).collect();
            AffineExpr::dot(&fv, &coefs).plus(x[j] / f.idio_scale[j])
        })
        .collect();
    prog.add_soc(AffineExpr::var(t), rows);
    let bounds: Vec<AffineExpr> = (0..fv.len())
        .flat_map(|i| {
            [AffineExpr::var(fv[i]).plus(-f.factor_min[i]), AffineExpr::term(fv[i], -1.0).plus(f.factor_max[i])]
        })
        .collect();
    if !bounds.is_empty() {
        prog.add_nonneg(bounds);
    }
    let res = solve(&prog, &SolverSettings::default())?.require_optimal("factor membership")?;
    Ok(res.var(t))
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn state(y: &[f64], s: &[f64]) -> MarketState {
        MarketState::new(y.to_vec(), s.to_vec())
    }

    fn unit_box() -> BoxSet {
        BoxSet::new(state(&[0.0, 0.0], &[0.0]), state(&[0.02, 0.03], &[0.01])).unwrap()
    }

    #[test]
    fn box_validation_and_max_element() {
        assert!(BoxSet::new(state(&[0.1], &[]), state(&[0.0], &[])).is_err());
        let set = UncertaintySet::Box(unit_box());
        assert_eq!(set.maximum_element(), Some(state(&[0.02, 0.03], &[0.01])));
        assert!(set.contains(&state(&[0.01, 0.015], &[0.005]), 0.0).unwrap());
        assert!(!set.contains(&state(&[0.03, 0.015], &[0.005]), 1e-9).unwrap());
    }

    #[test]
    fn non_box_sets_have_no_max_element() {
        let e = EllipsoidSet::new(DVector::zeros(2), DMatrix::identity(2, 2), 1.0, None).unwrap();
        assert_eq!(UncertaintySet::Ellipsoid(e).maximum_element(), None);
        let hull = ScenarioHull::new(vec![state(&[0.01], &[0.0]), state(&[0.0], &[0.01])]).unwrap();
        assert_eq!(UncertaintySet::Hull(hull).maximum_element(), None);
    }

    #[test]
    fn ellipsoid_membership() {
        let e = EllipsoidSet::new(DVector::from_vec(vec![0.01, 0.02]), DMatrix::from_diagonal(&DVector::from_vec(vec![0.01, 0.002])), 4.0, None).unwrap();
        let set = UncertaintySet::Ellipsoid(e);
        assert!(set.contains(&state(&[0.01], &[0.02]), 1e-9).unwrap());
        // boundary along first axis is at 0.01 + 2·0.01
        assert!(set.contains(&state(&[0.03 - 1e-6], &[0.02]), 1e-7).unwrap());
        assert!(!set.contains(&state(&[0.03 + 1e-6], &[0.02]), 1e-7).unwrap());
    }

    #[test]
    fn degenerate_ellipsoid_membership() {
        // line segment through the origin along (1, 1)
        let e = EllipsoidSet::new(DVector::zeros(1), DMatrix::from_element(1, 1, 1.0), 1.0, Some(DMatrix::from_element(2, 1, 1.0))).unwrap();
        let set = UncertaintySet::Ellipsoid(e);
        assert!(set.contains(&state(&[0.5], &[0.5]), 1e-9).unwrap());
        assert!(!set.contains(&state(&[0.5], &[0.4]), 1e-9).unwrap());
        assert!(!set.contains(&state(&[1.1], &[1.1]), 1e-9).unwrap());
    }

    #[test]
    fn hull_membership() {
        let pts = vec![state(&[0.0], &[0.0]), state(&[0.02], &[0.0]), state(&[0.0], &[0.02])];
        let set = UncertaintySet::Hull(ScenarioHull::new(pts).unwrap());
        assert!(set.contains(&state(&[0.02 / 3.0], &[0.02 / 3.0]), 1e-7).unwrap());
        assert!(!set.contains(&state(&[0.015], &[0.015]), 1e-7).unwrap());
    }

    #[test]
    fn polyhedron_validation() {
        let bx = unit_box();
        let poly = PolyhedralSet::from_box(&bx);
        assert_eq!(poly.num_rows(), 6);
        let bb = poly.bounding_box().unwrap();
        assert!((bb[1].1 - 0.03).abs() < 1e-7);
        // drop the lower bounds: unbounded below
        let half = PolyhedralSet::new(poly.a().rows(0, 3).into_owned(), poly.b().rows(0, 3).into_owned());
        assert!(matches!(half, Err(Error::UnboundedSet(_))));
        // x ≤ -1 and -x ≤ 0
        let empty = PolyhedralSet::new(DMatrix::from_row_slice(2, 1, &[1.0, -1.0]), DVector::from_vec(vec![-1.0, 0.0]));
        assert!(matches!(empty, Err(Error::EmptySet)));
    }

    #[test]
    fn perturbation_block_shapes() {
        let base = state(&[0.01, 0.02, 0.03], &[0.005]);
        let spec = PerturbationSpec::new(base.clone(), vec![-0.01; 3], vec![0.01; 3], f64::INFINITY, f64::INFINITY).unwrap();
        let block = spec.to_block();
        assert_eq!(block.bounds.num_rows(), 6);
        assert!(block.mean_square.is_none() && block.roughness.is_none());
        let spec = PerturbationSpec::new(base, vec![-0.01; 3], vec![0.01; 3], 1e-4, 1e-5).unwrap();
        let block = spec.to_block();
        assert_eq!(block.mean_square.as_ref().unwrap().rows.nrows(), 3);
        assert_eq!(block.roughness.as_ref().unwrap().rows.nrows(), 2);
        assert!(PerturbationSpec::new(state(&[0.0], &[]), vec![0.1], vec![0.0], 0.0, 0.0).is_err());
    }

    #[test]
    fn zero_kappa_pins_base() {
        let base = state(&[0.01, 0.02], &[0.005]);
        let spec = PerturbationSpec::new(base.clone(), vec![-0.01; 2], vec![0.01; 2], 0.0, f64::INFINITY).unwrap();
        let set = UncertaintySet::Perturbation(spec);
        assert!(set.contains(&base, 1e-12).unwrap());
        assert!(!set.contains(&state(&[0.011, 0.02], &[0.005]), 1e-6).unwrap());
        let (status, value, point) = linear_over(&set, &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(status, SolveStatus::Optimal);
        assert!((value - 0.035).abs() < 1e-6, "{value}");
        assert!((point[0] - 0.01).abs() < 1e-6);
    }

    #[test]
    fn factor_membership() {
        let z = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        let f = FactorSet::new(z, vec![-0.01], vec![0.01], vec![0.001, 0.001]).unwrap();
        let set = UncertaintySet::Factor(f);
        assert!(set.contains(&state(&[0.01], &[0.0105]), 1e-7).unwrap());
        assert!(!set.contains(&state(&[0.01], &[0.013]), 1e-7).unwrap());
        assert!(FactorSet::new(DMatrix::zeros(1, 1), vec![0.0], vec![0.0], vec![0.0]).is_err());
    }

    #[test]
    fn samples_lie_in_set() {
        let mut rng = StdRng::seed_from_u64(7);
        let base = state(&[0.01, 0.02, 0.025], &[0.004]);
        let sets = vec![
            UncertaintySet::Box(BoxSet::around(&base, 0.01, 0.002).unwrap()),
            UncertaintySet::Perturbation(
                PerturbationSpec::new(base.clone(), vec![-0.01; 3], vec![0.02; 3], 2e-4, 5e-5).unwrap(),
            ),
            UncertaintySet::Ellipsoid(
                EllipsoidSet::new(DVector::from_vec(base.to_vector()), DMatrix::identity(4, 4) * 0.003, 2.0, None).unwrap(),
            ),
        ];
        for set in sets {
            for p in set.sample_points(20, 3, &mut rng).unwrap() {
                assert!(set.contains(&p, 1e-7).unwrap(), "{set:?} {p:?}");
            }
        }
    }
}
