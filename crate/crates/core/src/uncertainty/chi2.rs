use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{Error, Result};

/// Chi-square CDF with `dof` degrees of freedom.
pub fn chi2_cdf(x: f64, dof: u32) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        gamma_lr(f64::from(dof) / 2.0, x / 2.0)
    }
}

fn chi2_pdf(x: f64, dof: u32) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let k = f64::from(dof) / 2.0;
    ((k - 1.0) * x.ln() - x / 2.0 - k * 2f64.ln() - ln_gamma(k)).exp()
}

/// Inverse chi-square CDF: the `x` with `F(x; dof) = prob`.
///
/// Safeguarded Newton on the regularized incomplete gamma function, falling
/// back to bisection whenever a step leaves the bracket.
pub fn chi2_quantile(prob: f64, dof: u32) -> Result<f64> {
    if !(prob > 0.0 && prob < 1.0) {
        return Err(Error::InvalidInput(format!("chi-square quantile probability {prob} not in (0, 1)")));
    }
    if dof == 0 {
        return Err(Error::InvalidInput("chi-square degrees of freedom must be positive".into()));
    }
    let mut lo = 0.0;
    let mut hi = f64::from(dof).max(1.0);
    while chi2_cdf(hi, dof) < prob {
        lo = hi;
        hi *= 2.0;
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = chi2_cdf(x, dof) - prob;
        if f.abs() < 1e-15 {
            break;
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let d = chi2_pdf(x, dof);
        let newton = if d > 0.0 { x - f / d } else { f64::NAN };
        x = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo < 1e-14 * hi.max(1.0) {
            break;
        }
    }
    Ok(x)
}
