//! CSV ingestion of the bond universe, portfolio weights and rate history,
//! plus the flat `key=value` results format.
//!
//! All files are UTF-8, comma separated, with one header row.

use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instruments::{CashFlowMatrix, MarketState};
use crate::uncertainty::HistoryPanel;

/// Key-rate tenors of the history file, in years.
pub const KEY_TENOR_YEARS: [f64; 9] = [0.5, 1.0, 2.0, 3.0, 5.0, 7.0, 10.0, 20.0, 30.0];

/// Yield columns followed by one spread column per rating.
pub const HISTORY_SERIES: usize = KEY_TENOR_YEARS.len() + Rating::ALL.len();

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Rating {
    #[serde(rename = "AAA")]
    Aaa,
    #[serde(rename = "AA")]
    Aa,
    #[serde(rename = "A")]
    A,
    #[serde(rename = "BBB")]
    Bbb,
}

impl Rating {
    pub const ALL: [Rating; 4] = [Rating::Aaa, Rating::Aa, Rating::A, Rating::Bbb];

    /// Column offset of this rating's spread among the rating columns.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Rating::Aaa => "AAA",
            Rating::Aa => "AA",
            Rating::A => "A",
            Rating::Bbb => "BBB",
        }
    }
}

impl fmt::Display for Rating {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Rating {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Rating::ALL
            .into_iter()
            .find(|r| r.label() == s.trim())
            .ok_or_else(|| Error::InvalidInput(format!("unknown rating '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CouponFrequency {
    Annual,
    Semiannual,
}

/// One row of the universe file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BondRecord {
    pub bond_id: String,
    pub rating: Rating,
    pub coupon_rate_annual_pct: f64,
    pub periods_to_maturity: usize,
    pub coupon_frequency: CouponFrequency,
    pub face_value: f64,
}

impl BondRecord {
    /// Semiannual-period cash flows over `periods` periods.
    ///
    /// Semiannual bonds pay half the annual coupon every period; annual bonds
    /// pay the full coupon every second period counting back from maturity.
    /// Face value is repaid with the last coupon.
    pub fn cash_flows(&self, periods: usize) -> Vec<f64> {
        let mut flows = vec![0.0; periods];
        let rate = self.coupon_rate_annual_pct / 100.0;
        let maturity = self.periods_to_maturity;
        let (coupon, step) = match self.coupon_frequency {
            CouponFrequency::Semiannual => (rate / 2.0 * self.face_value, 1),
            CouponFrequency::Annual => (rate * self.face_value, 2),
        };
        let mut t = maturity;
        while t >= 1 {
            flows[t - 1] += coupon;
            if t <= step {
                break;
            }
            t -= step;
        }
        flows[maturity - 1] += self.face_value;
        flows
    }
}

/// Bond metadata together with its cash-flow matrix.
#[derive(Debug, Clone)]
pub struct Universe {
    pub bonds: Vec<BondRecord>,
    pub cash_flows: CashFlowMatrix,
}

impl Universe {
    /// Builds cash flows over `horizon` periods, or up to the longest maturity.
    pub fn from_records(bonds: Vec<BondRecord>, horizon: Option<usize>) -> Result<Self> {
        if bonds.is_empty() {
            return Err(Error::InvalidInput("bond universe is empty".into()));
        }
        let longest = bonds.iter().map(|b| b.periods_to_maturity).max().unwrap_or(0);
        let periods = horizon.unwrap_or(longest);
        let mut seen = std::collections::HashSet::new();
        for (row, b) in bonds.iter().enumerate() {
            if !seen.insert(b.bond_id.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate bond id '{}' in row {}", b.bond_id, row + 1)));
            }
            if b.periods_to_maturity == 0 || b.periods_to_maturity > periods {
                return Err(Error::InvalidInput(format!(
                    "bond '{}' matures in period {}, outside 1..={periods}",
                    b.bond_id, b.periods_to_maturity
                )));
            }
            if !(b.coupon_rate_annual_pct >= 0.0) || !(b.face_value > 0.0) {
                return Err(Error::InvalidInput(format!("bond '{}' has a negative coupon or nonpositive face", b.bond_id)));
            }
        }
        let rows: Vec<Vec<f64>> = bonds.iter().map(|b| b.cash_flows(periods)).collect();
        Ok(Self { cash_flows: CashFlowMatrix::from_rows(&rows)?, bonds })
    }

    pub fn len(&self) -> usize {
        self.bonds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bonds.is_empty()
    }

    pub fn ratings(&self) -> Vec<usize> {
        self.bonds.iter().map(|b| b.rating.index()).collect()
    }

    pub fn position(&self, bond_id: &str) -> Option<usize> {
        self.bonds.iter().position(|b| b.bond_id == bond_id)
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Parse { path: path.display().to_string(), line: 0, msg: e.to_string() })
}

fn csv_error(path: &str, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse { path: path.to_string(), line, msg: e.to_string() }
}

fn read_records<T: for<'de> Deserialize<'de>, R: Read>(reader: R, label: &str) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    rdr.deserialize().map(|r| r.map_err(|e| csv_error(label, e))).collect()
}

pub fn read_universe<R: Read>(reader: R, label: &str, horizon: Option<usize>) -> Result<Universe> {
    Universe::from_records(read_records(reader, label)?, horizon)
}

/// Loads the universe; `T` is the longest maturity.
pub fn load_universe(path: &Path) -> Result<Universe> {
    read_universe(open(path)?, &path.display().to_string(), None)
}

pub fn write_universe<W: Write>(writer: W, bonds: &[BondRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for b in bonds {
        w.serialize(b).map_err(|e| csv_error("<universe output>", e))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct WeightRow {
    bond_id: String,
    weight: f64,
}

/// Reads `(bond_id, weight)` rows and returns weights in universe order,
/// normalized to sum to one. Bonds missing from the file get weight 0.
pub fn read_weights<R: Read>(reader: R, label: &str, universe: &Universe) -> Result<Vec<f64>> {
    let rows: Vec<WeightRow> = read_records(reader, label)?;
    let mut weights = vec![0.0; universe.len()];
    for (k, row) in rows.iter().enumerate() {
        let i = universe.position(&row.bond_id).ok_or_else(|| Error::Parse {
            path: label.to_string(),
            line: k + 2,
            msg: format!("unknown bond id '{}'", row.bond_id),
        })?;
        if !(row.weight >= 0.0) {
            return Err(Error::Parse { path: label.to_string(), line: k + 2, msg: "weights must be nonnegative".into() });
        }
        weights[i] += row.weight;
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidInput(format!("{label}: weights sum to zero")));
    }
    Ok(weights.into_iter().map(|w| w / total).collect())
}

pub fn load_weights(path: &Path, universe: &Universe) -> Result<Vec<f64>> {
    read_weights(open(path)?, &path.display().to_string(), universe)
}

/// Reads `date` plus [`HISTORY_SERIES`] numeric columns, dates strictly increasing.
pub fn read_history<R: Read>(reader: R, label: &str) -> Result<HistoryPanel> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let width = rdr.headers().map_err(|e| csv_error(label, e))?.len();
    if width != HISTORY_SERIES + 1 {
        return Err(Error::Parse {
            path: label.to_string(),
            line: 1,
            msg: format!("expected date plus {HISTORY_SERIES} columns, found {width} columns"),
        });
    }
    let mut dates: Vec<String> = Vec::new();
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(label, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let date = rec[0].to_string();
        if dates.last().is_some_and(|prev| *prev >= date) {
            return Err(Error::Parse { path: label.to_string(), line, msg: format!("date '{date}' is not after the previous row") });
        }
        for col in 1..=HISTORY_SERIES {
            let v: f64 = rec[col].parse().map_err(|_| Error::Parse {
                path: label.to_string(),
                line,
                msg: format!("column {} ('{}') is not a number", col + 1, &rec[col]),
            })?;
            values.push(v);
        }
        dates.push(date);
    }
    let n = dates.len();
    HistoryPanel::new(dates, DMatrix::from_row_slice(n, HISTORY_SERIES, &values))
}

pub fn load_history(path: &Path) -> Result<HistoryPanel> {
    read_history(open(path)?, &path.display().to_string())
}

/// Period index of each key tenor for `periods_per_year` periods a year.
pub fn key_periods(periods_per_year: u32) -> Vec<usize> {
    KEY_TENOR_YEARS.iter().map(|y| (y * f64::from(periods_per_year)).round() as usize).collect()
}

/// Maps one row of annualized percent key rates and spreads to a per-period
/// market state through the embedding `z`.
pub fn state_from_key_rates(row: &DVector<f64>, z: &DMatrix<f64>, periods: usize, periods_per_year: u32) -> MarketState {
    let scaled = row / (100.0 * f64::from(periods_per_year));
    let x = z * scaled;
    MarketState::from_vector(x.as_slice(), periods)
}

/// Ordered `key=value` lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultsFile {
    entries: Vec<(String, String)>,
}

impl ResultsFile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl fmt::Display) {
        self.entries.push((key.into(), value.to_string()));
    }

    /// Pushes a float with enough digits to round-trip.
    pub fn push_f64(&mut self, key: impl Into<String>, value: f64) {
        self.entries.push((key.into(), format!("{value:?}")));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut out = Self::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: "<results>".into(),
                line: i + 1,
                msg: "expected key=value".into(),
            })?;
            out.push(k, v);
        }
        Ok(out)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}
