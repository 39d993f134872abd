//! Seeded self-checks of the library's mathematical invariants on small
//! random instances. Used by the `verify` subcommand.

use rand::rngs::StdRng;
use rand::{Rng, RngExt, SeedableRng};

use crate::analysis::{worst_case_exact, worst_case_linearized};
use crate::construction::{
    maximize_dual, robust_construct_dual, verify_saddle_point, DualConvention, HoldingsSet, ObjectiveSpec,
};
use crate::error::Result;
use crate::instruments::{
    delta, log_portfolio_value, price_bonds, sensitivities, taylor_delta, CashFlowMatrix, Compounding,
    MarketState, Portfolio,
};
use crate::uncertainty::{BoxSet, EllipsoidSet, PolyhedralSet, UncertaintySet};

/// A random bond portfolio with a nominal market state.
#[derive(Debug, Clone)]
pub struct Instance {
    pub cf: CashFlowMatrix,
    pub m_nom: MarketState,
    pub port: Portfolio,
}

/// Bullet bonds with per-period coupons, rates of a few percent per period.
pub fn random_instance<R: Rng + ?Sized>(rng: &mut R, max_bonds: usize, max_periods: usize) -> Instance {
    let n = rng.random_range(1..=max_bonds.max(1));
    let periods = rng.random_range(2..=max_periods.max(2));
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let maturity = rng.random_range(1..=periods);
            let coupon = rng.random_range(0.0..3.0);
            (1..=periods)
                .map(|t| match t.cmp(&maturity) {
                    std::cmp::Ordering::Less => coupon,
                    std::cmp::Ordering::Equal => coupon + 100.0,
                    std::cmp::Ordering::Greater => 0.0,
                })
                .collect()
        })
        .collect();
    let cf = CashFlowMatrix::from_rows(&rows).expect("every row has a face payment");
    let yields = (0..periods).map(|_| rng.random_range(0.002..0.03)).collect();
    let spreads = (0..n).map(|_| rng.random_range(0.0..0.01)).collect();
    let port = Portfolio::new((0..n).map(|_| rng.random_range(0.1..2.0)).collect()).expect("positive holdings");
    Instance { cf, m_nom: MarketState::new(yields, spreads), port }
}

/// A box of random half-widths around the nominal state.
pub fn random_box<R: Rng + ?Sized>(rng: &mut R, m_nom: &MarketState) -> BoxSet {
    let widen = |v: &[f64], rng: &mut R, scale: f64| -> (Vec<f64>, Vec<f64>) {
        v.iter()
            .map(|x| (x - rng.random_range(0.0..scale), x + rng.random_range(0.0..scale)))
            .unzip()
    };
    let (ylo, yhi) = widen(&m_nom.yields, rng, 0.01);
    let (slo, shi) = widen(&m_nom.spreads, rng, 0.005);
    BoxSet::new(MarketState::new(ylo, slo), MarketState::new(yhi, shi)).expect("lower ≤ upper by construction")
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    /// Largest observed violation or error.
    pub worst: f64,
    pub tol: f64,
    pub cases: usize,
}

impl CheckOutcome {
    fn new(name: &'static str, worst: f64, tol: f64, cases: usize) -> Self {
        Self { name, passed: worst <= tol, worst, tol, cases }
    }
}

/// Runs every check with `instances` random instances each.
pub fn run_all(seed: u64, instances: usize) -> Result<Vec<CheckOutcome>> {
    let mut rng = StdRng::seed_from_u64(seed);
    Ok(vec![
        taylor_lower_bound(&mut rng, instances)?,
        linearized_below_exact(&mut rng, instances)?,
        box_shortcut(&mut rng, instances)?,
        gradient_matches_differences(&mut rng, instances)?,
        strong_duality(&mut rng, instances)?,
        saddle_certificate(&mut rng, instances.clamp(1, 5))?,
    ])
}

pub fn taylor_lower_bound<R: Rng + ?Sized>(rng: &mut R, instances: usize) -> Result<CheckOutcome> {
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let inst = random_instance(rng, 5, 12);
        let sens = sensitivities(&inst.cf, &inst.m_nom, &inst.port, Compounding::Continuous)?;
        let set = UncertaintySet::Box(random_box(rng, &inst.m_nom));
        for m in set.sample_points(20, inst.cf.num_periods(), rng)? {
            let d = delta(&inst.cf, &m, &inst.m_nom, &inst.port, Compounding::Continuous)?;
            worst = worst.max(taylor_delta(&sens, &m, &inst.m_nom)? - d);
        }
    }
    Ok(CheckOutcome::new("taylor-lower-bound", worst, 1e-9, instances))
}

pub fn linearized_below_exact<R: Rng + ?Sized>(rng: &mut R, instances: usize) -> Result<CheckOutcome> {
    let mut worst: f64 = 0.0;
    for k in 0..instances {
        let inst = random_instance(rng, 4, 8);
        let set = if k % 2 == 0 {
            UncertaintySet::Box(random_box(rng, &inst.m_nom))
        } else {
            let d = inst.m_nom.dim();
            let l = nalgebra::DMatrix::from_fn(d, d, |_, _| rng.random_range(-0.004..0.004));
            UncertaintySet::Ellipsoid(EllipsoidSet::new(
                nalgebra::DVector::from_vec(inst.m_nom.to_vector()),
                l,
                rng.random_range(0.5..4.0),
                None,
            )?)
        };
        let lin = worst_case_linearized(&inst.cf, &inst.m_nom, &inst.port, &set)?;
        let exact = worst_case_exact(&inst.cf, &inst.m_nom, &inst.port, &set, Compounding::Continuous)?;
        worst = worst.max(lin.delta_wc - exact.delta_wc);
    }
    Ok(CheckOutcome::new("linearized-below-exact", worst, 1e-8, instances))
}

pub fn box_shortcut<R: Rng + ?Sized>(rng: &mut R, instances: usize) -> Result<CheckOutcome> {
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let inst = random_instance(rng, 4, 8);
        let bx = random_box(rng, &inst.m_nom);
        let at_top = delta(&inst.cf, bx.upper(), &inst.m_nom, &inst.port, Compounding::Continuous)?;
        let exact = worst_case_exact(&inst.cf, &inst.m_nom, &inst.port, &UncertaintySet::Box(bx), Compounding::Continuous)?;
        worst = worst.max((exact.delta_wc - at_top).abs());
    }
    Ok(CheckOutcome::new("box-maximum-element", worst, 1e-6, instances))
}

pub fn gradient_matches_differences<R: Rng + ?Sized>(rng: &mut R, instances: usize) -> Result<CheckOutcome> {
    let step = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let inst = random_instance(rng, 4, 10);
        let sens = sensitivities(&inst.cf, &inst.m_nom, &inst.port, Compounding::Continuous)?;
        let analytic: Vec<f64> = sens.d_yld.iter().chain(&sens.d_spr).copied().collect();
        let base = inst.m_nom.to_vector();
        let periods = inst.cf.num_periods();
        let log_v = |x: &[f64]| {
            log_portfolio_value(&inst.cf, &MarketState::from_vector(x, periods), &inst.port, Compounding::Continuous)
        };
        for (j, g) in analytic.iter().enumerate() {
            let (mut up, mut down) = (base.clone(), base.clone());
            up[j] += step;
            down[j] -= step;
            let fd = (log_v(&up)? - log_v(&down)?) / (2.0 * step);
            // entries with no exposure are exactly zero on both sides
            let err = if g.abs() < 1e-12 { fd.abs() } else { (fd - g).abs() / g.abs() };
            worst = worst.max(err);
        }
    }
    Ok(CheckOutcome::new("gradient-finite-difference", worst, 1e-5, instances))
}

pub fn strong_duality<R: Rng + ?Sized>(rng: &mut R, instances: usize) -> Result<CheckOutcome> {
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let inst = random_instance(rng, 3, 6);
        let bx = random_box(rng, &inst.m_nom);
        let poly = PolyhedralSet::from_box(&bx);
        let prices = price_bonds(&inst.cf, &inst.m_nom, Compounding::Continuous)?;
        let (g, _) = maximize_dual(&inst.port, &poly, &inst.cf, &prices, DualConvention::Derived)?;
        let exact = worst_case_exact(&inst.cf, &inst.m_nom, &inst.port, &UncertaintySet::Box(bx), Compounding::Continuous)?;
        worst = worst.max((g - exact.delta_wc).abs());
    }
    Ok(CheckOutcome::new("strong-duality", worst, 1e-5, instances))
}

pub fn saddle_certificate<R: Rng + ?Sized>(rng: &mut R, instances: usize) -> Result<CheckOutcome> {
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let inst = random_instance(rng, 3, 6);
        let bx = random_box(rng, &inst.m_nom);
        let poly = PolyhedralSet::from_box(&bx);
        let hset = HoldingsSet::from_nominal(&inst.cf, &inst.m_nom, &inst.port)?;
        let obj = ObjectiveSpec::turnover(&inst.port, rng.random_range(0.5..5.0))?;
        let sol = robust_construct_dual(&inst.cf, &inst.m_nom, &obj, &hset, &poly)?;
        let report = verify_saddle_point(&sol, &inst.cf, &inst.m_nom, &obj, &hset, &UncertaintySet::Box(bx), 50, rng)?;
        worst = worst.max(report.max_violation());
    }
    Ok(CheckOutcome::new("saddle-certificate", worst, 1e-6, instances))
}
