use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{chi2_quantile, EllipsoidSet};
use crate::error::{check_len, Error, Result};

/// Eigenvalues below this fraction of the largest one are treated as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Daily observations of annualized key rates and rating spreads, in percent.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryPanel {
    pub dates: Vec<String>,
    /// `N × m`, one row per date.
    pub observations: DMatrix<f64>,
}

impl HistoryPanel {
    pub fn new(dates: Vec<String>, observations: DMatrix<f64>) -> Result<Self> {
        check_len("history dates", observations.nrows(), dates.len())?;
        if observations.nrows() < 2 {
            return Err(Error::InvalidInput(format!("history needs at least 2 rows, got {}", observations.nrows())));
        }
        if let Some(pos) = observations.iter().position(|v| !v.is_finite()) {
            let row = pos % observations.nrows();
            return Err(Error::InvalidInput(format!("history row {} ({}) has a missing value", row, dates[row])));
        }
        Ok(Self { dates, observations })
    }

    pub fn num_obs(&self) -> usize {
        self.observations.nrows()
    }

    pub fn num_series(&self) -> usize {
        self.observations.ncols()
    }

    pub fn mean(&self) -> DVector<f64> {
        self.observations.row_mean().transpose()
    }

    /// Sample covariance with the `N - 1` denominator.
    pub fn covariance(&self) -> DMatrix<f64> {
        let n = self.num_obs() as f64;
        let mean = self.observations.row_mean();
        let mut centered = self.observations.clone();
        for mut row in centered.row_iter_mut() {
            row -= &mean;
        }
        centered.transpose() * centered / (n - 1.0)
    }

    pub fn last(&self) -> DVector<f64> {
        self.observations.row(self.num_obs() - 1).transpose()
    }
}

/// `(T + n) × (K + ratings)` embedding of key rates and rating spreads.
///
/// Yield rows interpolate linearly between neighbouring key periods and hold
/// the end values flat outside them; spread row `i` picks the column of bond
/// `i`'s rating.
pub fn key_rate_map(key_periods: &[usize], rating_of_bond: &[usize], num_ratings: usize, periods: usize) -> Result<DMatrix<f64>> {
    if key_periods.is_empty() {
        return Err(Error::InvalidInput("key rate map needs at least one key period".into()));
    }
    if key_periods[0] < 1 || key_periods.windows(2).any(|w| w[0] >= w[1]) || *key_periods.last().unwrap() > periods {
        return Err(Error::InvalidInput(format!("key periods must increase strictly within 1..={periods}")));
    }
    if let Some(i) = rating_of_bond.iter().position(|&r| r >= num_ratings) {
        return Err(Error::InvalidInput(format!("bond {i} has rating index {} of {num_ratings}", rating_of_bond[i])));
    }
    let k = key_periods.len();
    let n = rating_of_bond.len();
    let mut z = DMatrix::zeros(periods + n, k + num_ratings);
    for t in 1..=periods {
        let row = t - 1;
        match key_periods.iter().position(|&p| p >= t) {
            Some(0) => z[(row, 0)] = 1.0,
            None => z[(row, k - 1)] = 1.0,
            Some(j) if key_periods[j] == t => z[(row, j)] = 1.0,
            Some(j) => {
                let (lo, hi) = (key_periods[j - 1] as f64, key_periods[j] as f64);
                let w = (t as f64 - lo) / (hi - lo);
                z[(row, j - 1)] = 1.0 - w;
                z[(row, j)] = w;
            }
        }
    }
    for (i, &r) in rating_of_bond.iter().enumerate() {
        z[(periods + i, k + r)] = 1.0;
    }
    Ok(z)
}

/// Confidence ellipsoid of the history, embedded by `map` into `(y, s)`.
///
/// Mean and covariance are estimated in annualized percent and rescaled to
/// per-period fractions. The radius is the `alpha` quantile of a χ² with one
/// degree of freedom per series, so larger `alpha` gives a larger set.
pub fn ellipsoid_from_history(panel: &HistoryPanel, alpha: f64, map: Option<DMatrix<f64>>, periods_per_year: u32) -> Result<EllipsoidSet> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("confidence level {alpha} not in (0, 1)")));
    }
    if periods_per_year == 0 {
        return Err(Error::InvalidInput("periods per year must be positive".into()));
    }
    let m = panel.num_series();
    let scale = 1.0 / (100.0 * f64::from(periods_per_year));
    let eig = SymmetricEigen::new(panel.covariance());
    let lambda_max = eig.eigenvalues.max();
    let keep: Vec<usize> = (0..m)
        .filter(|&j| lambda_max > 0.0 && eig.eigenvalues[j] >= RANK_TOLERANCE * lambda_max)
        .collect();
    let factor = DMatrix::from_fn(m, keep.len(), |r, c| {
        let j = keep[c];
        eig.eigenvectors[(r, j)] * eig.eigenvalues[j].sqrt() * scale
    });
    let radius_sq = chi2_quantile(alpha, m as u32)?;
    EllipsoidSet::new(panel.mean() * scale, factor, radius_sq, map)
}
