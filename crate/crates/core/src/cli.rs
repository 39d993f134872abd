//! Command-line front end.
//!
//! Every subcommand prints a plain-text report, writes it to
//! `<out-dir>/<command>-report.txt`, and writes machine-readable
//! `key=value` lines to `<out-dir>/<command>-results.txt`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;

use crate::analysis::{worst_case_exact, worst_case_linearized, WorstCaseResult};
use crate::checks;
use crate::construction::{
    robust_construct_cutting_plane, robust_construct_dual, CuttingPlaneOptions, HoldingsSet, ObjectiveSpec,
    RobustSolution,
};
use crate::error::{Error, Result};
use crate::instruments::{price_bonds, Compounding, CompoundingConvention, MarketState, Portfolio};
use crate::io::{self, ResultsFile, Universe};
use crate::uncertainty::{ellipsoid_from_history, key_rate_map, BoxSet, HistoryPanel, PolyhedralSet, UncertaintySet};

/// Value of the nominal portfolio; holdings are then close to value weights
/// for bonds quoted near par.
pub const NOMINAL_BUDGET: f64 = 100.0;

const PERIODS_PER_YEAR: u32 = 2;

#[derive(Debug, Parser)]
#[command(name = "robustbond", version, about = "Worst-case analysis and robust construction of bond portfolios")]
struct Cli {
    /// Directory holding universe.csv, weights.csv and history.csv.
    #[arg(long, global = true, default_value = "data")]
    data_dir: PathBuf,
    /// Directory for report and results files.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Cutting-plane gap tolerance.
    #[arg(long, global = true, default_value_t = 1e-5)]
    tol: f64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Price every bond at the nominal market state.
    Price(MarketArgs),
    /// Worst-case change in value of the nominal portfolio.
    WorstCase {
        /// Confidence levels of the historical ellipsoid.
        #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.99])]
        alpha: Vec<f64>,
        #[arg(long, value_enum, default_value_t = AnalysisArg::Both)]
        method: AnalysisArg,
        #[command(flatten)]
        set: SetArgs,
        #[command(flatten)]
        market: MarketArgs,
    },
    /// Robust portfolios tracking the nominal one, for each lambda.
    Construct {
        #[arg(long, value_delimiter = ',', required = true)]
        lambda: Vec<f64>,
        #[arg(long, value_enum, default_value_t = ConstructArg::Auto)]
        method: ConstructArg,
        /// Confidence level of the historical ellipsoid.
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, default_value_t = 50)]
        max_iters: usize,
        #[command(flatten)]
        set: SetArgs,
        #[command(flatten)]
        market: MarketArgs,
    },
    /// Run the invariant self-checks on random instances.
    Verify {
        #[arg(long, default_value_t = 20)]
        instances: usize,
    },
}

#[derive(Debug, Clone, Args)]
struct MarketArgs {
    /// Use a flat annualized yield (percent) instead of the last history row.
    #[arg(long)]
    flat_yield_pct: Option<f64>,
    /// Annualized spread (percent) for every bond when using a flat yield.
    #[arg(long, default_value_t = 0.0)]
    flat_spread_pct: f64,
    /// Hold equal value weights when weights.csv is absent.
    #[arg(long)]
    equal_weights: bool,
}

#[derive(Debug, Clone, Args)]
struct SetArgs {
    #[arg(long = "set", value_enum, default_value_t = SetArg::Ellipsoid)]
    kind: SetArg,
    /// Half-width of the box set in annualized basis points.
    #[arg(long, default_value_t = 100.0)]
    box_bp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SetArg {
    Ellipsoid,
    Box,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AnalysisArg {
    Exact,
    Linearized,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ConstructArg {
    Auto,
    Dual,
    CuttingPlane,
}

/// Runs the CLI on `argv` (including the program name) and returns the
/// process exit code: 0 on success, 1 on failure, 2 on usage errors.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

struct Output {
    name: &'static str,
    report: String,
    results: ResultsFile,
    extra: Vec<(String, String)>,
}

fn run(cli: &Cli) -> Result<bool> {
    let (out, ok) = match &cli.command {
        Command::Price(market) => (price(cli, market)?, true),
        Command::WorstCase { alpha, method, set, market } => (worst_case(cli, alpha, *method, set, market)?, true),
        Command::Construct { lambda, method, alpha, max_iters, set, market } => {
            (construct(cli, lambda, *method, *alpha, *max_iters, set, market)?, true)
        }
        Command::Verify { instances } => verify(cli, *instances)?,
    };
    print!("{}", out.report);
    std::fs::create_dir_all(&cli.out_dir)?;
    std::fs::write(cli.out_dir.join(format!("{}-report.txt", out.name)), &out.report)?;
    out.results.write(&cli.out_dir.join(format!("{}-results.txt", out.name)))?;
    for (file, text) in &out.extra {
        std::fs::write(cli.out_dir.join(file), text)?;
    }
    Ok(ok)
}

/// Universe, nominal state and (when needed) history and holdings.
struct Context {
    universe: Universe,
    m_nom: MarketState,
    history: Option<HistoryPanel>,
    embedding: DMatrix<f64>,
}

fn require(path: &Path) -> Result<&Path> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::InvalidInput(format!("missing input file {}", path.display())))
    }
}

fn load_context(cli: &Cli, market: &MarketArgs, need_history: bool) -> Result<Context> {
    let universe = io::load_universe(require(&cli.data_dir.join("universe.csv"))?)?;
    let periods = universe.cash_flows.num_periods();
    let key_periods: Vec<usize> = io::key_periods(PERIODS_PER_YEAR).into_iter().map(|p| p.min(periods)).collect();
    let mut dedup = key_periods.clone();
    dedup.dedup();
    if dedup.len() != key_periods.len() {
        return Err(Error::InvalidInput(format!("universe horizon of {periods} periods is shorter than the key tenors")));
    }
    let embedding = key_rate_map(&key_periods, &universe.ratings(), io::Rating::ALL.len(), periods)?;
    let history_path = cli.data_dir.join("history.csv");
    let history = if need_history || market.flat_yield_pct.is_none() {
        Some(io::load_history(require(&history_path)?)?)
    } else {
        None
    };
    let m_nom = match market.flat_yield_pct {
        Some(y) => {
            let conv = CompoundingConvention::default();
            MarketState::flat(periods, universe.len(), conv.per_period(y / 100.0), conv.per_period(market.flat_spread_pct / 100.0))
        }
        None => {
            let panel = history.as_ref().expect("loaded above");
            io::state_from_key_rates(&panel.last(), &embedding, periods, PERIODS_PER_YEAR)
        }
    };
    Ok(Context { universe, m_nom, history, embedding })
}

fn nominal_holdings(cli: &Cli, market: &MarketArgs, ctx: &Context) -> Result<Portfolio> {
    let path = cli.data_dir.join("weights.csv");
    let weights = if path.exists() {
        io::load_weights(&path, &ctx.universe)?
    } else if market.equal_weights {
        vec![1.0 / ctx.universe.len() as f64; ctx.universe.len()]
    } else {
        return Err(Error::InvalidInput(format!("missing input file {} (or pass --equal-weights)", path.display())));
    };
    let prices = price_bonds(&ctx.universe.cash_flows, &ctx.m_nom, Compounding::Continuous)?;
    Portfolio::new(weights.iter().zip(&prices).map(|(w, p)| NOMINAL_BUDGET * w / p).collect())
}

fn build_set(ctx: &Context, set: &SetArgs, alpha: f64) -> Result<UncertaintySet> {
    match set.kind {
        SetArg::Ellipsoid => {
            let panel = ctx
                .history
                .as_ref()
                .ok_or_else(|| Error::InvalidInput("the ellipsoid set needs history.csv".into()))?;
            let e = ellipsoid_from_history(panel, alpha, Some(ctx.embedding.clone()), PERIODS_PER_YEAR)?;
            Ok(UncertaintySet::Ellipsoid(e))
        }
        SetArg::Box => {
            let half = CompoundingConvention::default().per_period(set.box_bp / 10_000.0);
            Ok(UncertaintySet::Box(BoxSet::around(&ctx.m_nom, half, half)?))
        }
    }
}

fn pct(per_period: f64) -> f64 {
    100.0 * CompoundingConvention::default().annualize(per_period)
}

fn alpha_tag(alpha: f64) -> String {
    format!("alpha{}", (alpha * 100.0).round() as i64)
}

fn price(cli: &Cli, market: &MarketArgs) -> Result<Output> {
    let ctx = load_context(cli, market, false)?;
    let prices = price_bonds(&ctx.universe.cash_flows, &ctx.m_nom, Compounding::Continuous)?;
    let mut report = String::new();
    let mut results = ResultsFile::new();
    let _ = writeln!(report, "{:<4} {:<26} {:<6} {:>9} {:>8} {:<11} {:>9}", "#", "bond", "rating", "maturity", "coupon", "frequency", "price");
    for (i, (b, p)) in ctx.universe.bonds.iter().zip(&prices).enumerate() {
        let years = b.periods_to_maturity as f64 / f64::from(PERIODS_PER_YEAR);
        let freq = match b.coupon_frequency {
            io::CouponFrequency::Annual => "annual",
            io::CouponFrequency::Semiannual => "semiannual",
        };
        let _ = writeln!(report, "{:<4} {:<26} {:<6} {:>9.2} {:>8.3} {:<11} {:>9.2}", i + 1, b.bond_id, b.rating, years, b.coupon_rate_annual_pct, freq, p);
        results.push_f64(format!("price.bond{:02}", i + 1), *p);
    }
    results.push("price.count", prices.len());
    Ok(Output { name: "price", report, results, extra: Vec::new() })
}

fn worst_case(cli: &Cli, alphas: &[f64], method: AnalysisArg, set_args: &SetArgs, market: &MarketArgs) -> Result<Output> {
    let ctx = load_context(cli, market, set_args.kind == SetArg::Ellipsoid)?;
    let h = nominal_holdings(cli, market, &ctx)?;
    let cf = &ctx.universe.cash_flows;
    let labels: Vec<(String, f64)> = match set_args.kind {
        SetArg::Ellipsoid => alphas.iter().map(|a| (alpha_tag(*a), *a)).collect(),
        SetArg::Box => vec![("box".to_string(), 0.0)],
    };
    let mut runs: Vec<(String, &'static str, WorstCaseResult)> = Vec::new();
    for (tag, alpha) in &labels {
        let set = build_set(&ctx, set_args, *alpha)?;
        if method != AnalysisArg::Linearized {
            runs.push((tag.clone(), "exact", worst_case_exact(cf, &ctx.m_nom, &h, &set, Compounding::Continuous)?));
        }
        if method != AnalysisArg::Exact {
            runs.push((tag.clone(), "linearized", worst_case_linearized(cf, &ctx.m_nom, &h, &set)?));
        }
    }

    let mut report = String::new();
    let mut results = ResultsFile::new();
    let _ = writeln!(report, "{:<10} {:<11} {:>12} {:>16}", "set", "method", "log change", "value change %");
    for (tag, name, r) in &runs {
        let _ = writeln!(report, "{:<10} {:<11} {:>12.6} {:>16.2}", tag, name, r.delta_wc, 100.0 * r.relative_change);
        results.push_f64(format!("wc.{name}.{tag}.delta"), r.delta_wc);
        results.push_f64(format!("wc.{name}.{tag}.relative_change"), r.relative_change);
    }

    // annualized nominal and worst curves, then spreads per rating
    let mut curves = String::new();
    let _ = write!(curves, "{:>6} {:>6} {:>9}", "period", "years", "nominal");
    for (tag, name, _) in &runs {
        let _ = write!(curves, " {:>22}", format!("{name}.{tag}"));
    }
    curves.push('\n');
    for t in 0..cf.num_periods() {
        let _ = write!(curves, "{:>6} {:>6.1} {:>9.4}", t + 1, (t + 1) as f64 / f64::from(PERIODS_PER_YEAR), pct(ctx.m_nom.yields[t]));
        for (_, _, r) in &runs {
            let _ = write!(curves, " {:>22.4}", pct(r.argmin_state.yields[t]));
        }
        curves.push('\n');
    }
    curves.push('\n');
    let _ = write!(curves, "{:>13} {:>9}", "rating", "nominal");
    for (tag, name, _) in &runs {
        let _ = write!(curves, " {:>22}", format!("{name}.{tag}"));
    }
    curves.push('\n');
    for rating in io::Rating::ALL {
        let Some(i) = ctx.universe.bonds.iter().position(|b| b.rating == rating) else { continue };
        let _ = write!(curves, "{:>13} {:>9.4}", rating.label(), pct(ctx.m_nom.spreads[i]));
        for (_, _, r) in &runs {
            let _ = write!(curves, " {:>22.4}", pct(r.argmin_state.spreads[i]));
        }
        curves.push('\n');
    }
    Ok(Output { name: "worst-case", report, results, extra: vec![("worst-case-curves.txt".into(), curves)] })
}

fn construct(
    cli: &Cli,
    lambdas: &[f64],
    method: ConstructArg,
    alpha: f64,
    max_iters: usize,
    set_args: &SetArgs,
    market: &MarketArgs,
) -> Result<Output> {
    let ctx = load_context(cli, market, set_args.kind == SetArg::Ellipsoid)?;
    let h_nom = nominal_holdings(cli, market, &ctx)?;
    let cf = &ctx.universe.cash_flows;
    let set = build_set(&ctx, set_args, alpha)?;
    let hset = HoldingsSet::from_nominal(cf, &ctx.m_nom, &h_nom)?;
    let opts = CuttingPlaneOptions { tol: cli.tol, max_iters };
    let poly = match &set {
        UncertaintySet::Box(b) => Some(PolyhedralSet::from_box(b)),
        _ => None,
    };
    let mut solutions: Vec<(f64, RobustSolution)> = Vec::new();
    for &lambda in lambdas {
        let obj = ObjectiveSpec::turnover(&h_nom, lambda)?;
        let sol = match (method, &poly) {
            (ConstructArg::Dual | ConstructArg::Auto, Some(p)) => robust_construct_dual(cf, &ctx.m_nom, &obj, &hset, p)?,
            (ConstructArg::Dual, None) => {
                return Err(Error::Unsupported("the dual method needs a polyhedral set; use --set box or --method cutting-plane".into()))
            }
            _ => robust_construct_cutting_plane(cf, &ctx.m_nom, &obj, &hset, &set, &opts)?,
        };
        solutions.push((lambda, sol));
    }

    let mut report = String::new();
    let mut results = ResultsFile::new();
    let _ = writeln!(report, "{:>8} {:>10} {:>16} {:>12} {:>6} {:>10}", "lambda", "turnover", "worst change %", "objective", "iters", "gap");
    for (lambda, sol) in &solutions {
        let _ = writeln!(
            report,
            "{:>8} {:>10.6} {:>16.2} {:>12.6} {:>6} {:>10.2e}",
            lambda,
            sol.nominal_term,
            100.0 * sol.worst_delta.exp_m1(),
            sol.objective_value,
            sol.iterations,
            sol.gap
        );
        let key = format!("construct.lambda{lambda}");
        results.push_f64(format!("{key}.turnover"), sol.nominal_term);
        results.push_f64(format!("{key}.worst_delta"), sol.worst_delta);
        results.push_f64(format!("{key}.objective"), sol.objective_value);
        results.push(format!("{key}.iterations"), sol.iterations);
        results.push(format!("{key}.converged"), sol.converged);
        for (i, h) in sol.h_star.holdings().iter().enumerate() {
            results.push_f64(format!("{key}.h.bond{:02}", i + 1), *h);
        }
    }

    // value weights per bond (rows) and lambda (columns)
    let prices = hset.prices();
    let mut weights = String::new();
    let _ = write!(weights, "{:<26} {:>9}", "bond", "nominal");
    for (lambda, _) in &solutions {
        let _ = write!(weights, " {:>9}", format!("l={lambda}"));
    }
    weights.push('\n');
    for (i, b) in ctx.universe.bonds.iter().enumerate() {
        let _ = write!(weights, "{:<26} {:>9.4}", b.bond_id, prices[i] * h_nom.holdings()[i] / hset.budget());
        for (_, sol) in &solutions {
            let _ = write!(weights, " {:>9.4}", prices[i] * sol.h_star.holdings()[i] / hset.budget());
        }
        weights.push('\n');
    }
    Ok(Output { name: "construct", report, results, extra: vec![("construct-weights.txt".into(), weights)] })
}

fn verify(cli: &Cli, instances: usize) -> Result<(Output, bool)> {
    let outcomes = checks::run_all(cli.seed, instances)?;
    let mut report = String::new();
    let mut results = ResultsFile::new();
    for o in &outcomes {
        let verdict = if o.passed { "PASS" } else { "FAIL" };
        let _ = writeln!(report, "{verdict} {:<28} worst {:.3e} (tol {:.0e}, {} cases)", o.name, o.worst, o.tol, o.cases);
        results.push(format!("verify.{}", o.name), if o.passed { "pass" } else { "fail" });
        results.push_f64(format!("verify.{}.worst", o.name), o.worst);
    }
    let ok = outcomes.iter().all(|o| o.passed);
    Ok((Output { name: "verify", report, results, extra: Vec::new() }, ok))
}
