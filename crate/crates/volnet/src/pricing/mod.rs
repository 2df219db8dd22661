//! Cross-sectional asset-pricing test battery: rolling betas, Fama-MacBeth
//! regressions with Newey-West and Shanken corrections, quintile portfolio
//! sorts with rolling five-factor alphas, and control-factor construction.

mod betas;
mod controls;
mod fmb;
mod hac;
mod sorts;

pub use betas::{full_sample_betas, rolling_betas, BetaEntry, BetaPanel};
pub use controls::{build_controls, ControlFactors, ControlInputs, SeriesInput};
pub use fmb::{fama_macbeth, shanken_multiplier, FmbResult};
pub use hac::newey_west;
pub use sorts::{predictive_sort, sort_on_beta, SortConfig, SortResult};

use chrono::NaiveDate;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

/// A dated matrix of factor return series, one named column per factor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FactorSet {
    pub names: Vec<String>,
    pub dates: Vec<NaiveDate>,
    /// T × K values, column order matching `names`.
    pub values: DMatrix<f64>,
}

impl FactorSet {
    pub fn new(names: Vec<String>, dates: Vec<NaiveDate>, values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() != dates.len() || values.ncols() != names.len() {
            return Err(Error::Alignment("factor set shape mismatch".into()));
        }
        Ok(FactorSet { names, dates, values })
    }

    /// Build from daily factor series, inner-joined on dates.
    pub fn from_series(series: &[&crate::factors::FactorSeries]) -> Result<Self> {
        if series.is_empty() {
            return Err(Error::parameter("series", "no factors supplied"));
        }
        let mut common: Vec<NaiveDate> = series[0].dates.clone();
        for s in &series[1..] {
            let set: std::collections::BTreeSet<NaiveDate> = s.dates.iter().copied().collect();
            common.retain(|d| set.contains(d));
        }
        let mut values = DMatrix::zeros(common.len(), series.len());
        for (j, s) in series.iter().enumerate() {
            let ix: BTreeMap<NaiveDate, usize> =
                s.dates.iter().enumerate().map(|(i, d)| (*d, i)).collect();
            for (r, d) in common.iter().enumerate() {
                values[(r, j)] = s.values[ix[d]];
            }
        }
        let names =
            series.iter().map(|s| format!("{}_{}", s.variant, s.band)).collect();
        FactorSet::new(names, common, values)
    }

    pub fn n_factors(&self) -> usize {
        self.names.len()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::parameter("factor", format!("no column named `{name}`")))
    }

    /// Values of the named columns at the given dates (error on any gap).
    pub fn rows_at(&self, names: &[String], dates: &[NaiveDate]) -> Result<DMatrix<f64>> {
        let cols: Vec<usize> =
            names.iter().map(|n| self.column_index(n)).collect::<Result<_>>()?;
        let ix: BTreeMap<NaiveDate, usize> =
            self.dates.iter().enumerate().map(|(i, d)| (*d, i)).collect();
        let mut out = DMatrix::zeros(dates.len(), cols.len());
        for (r, d) in dates.iter().enumerate() {
            let src = *ix
                .get(d)
                .ok_or_else(|| Error::Alignment(format!("factor set missing date {d}")))?;
            for (c, &col) in cols.iter().enumerate() {
                out[(r, c)] = self.values[(src, col)];
            }
        }
        Ok(out)
    }

    /// Restrict to a subset of columns, preserving the requested order.
    pub fn select(&self, names: &[String]) -> Result<FactorSet> {
        let values = self.rows_at(names, &self.dates)?;
        FactorSet::new(names.to_vec(), self.dates.clone(), values)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["date".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for (i, date) in self.dates.iter().enumerate() {
            let mut rec = vec![date.format("%Y-%m-%d").to_string()];
            for j in 0..self.n_factors() {
                rec.push(format!("{:.17e}", self.values[(i, j)]));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read a factor CSV: a `date` column followed by named numeric columns.
    pub fn read_csv(path: &Path) -> Result<FactorSet> {
        let mut r = csv::Reader::from_path(path)?;
        let headers = r.headers()?.clone();
        if headers.is_empty() || &headers[0] != "date" {
            return Err(Error::Parse { line: 1, msg: "expected leading `date` column".into() });
        }
        let names: Vec<String> = headers.iter().skip(1).map(String::from).collect();
        let mut dates = Vec::new();
        let mut rows: Vec<f64> = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let line = i + 2;
            let rec = rec?;
            let date = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d")
                .map_err(|e| Error::Parse { line, msg: format!("bad date: {e}") })?;
            dates.push(date);
            for field in rec.iter().skip(1) {
                rows.push(field.parse().map_err(|_| Error::Parse {
                    line,
                    msg: format!("non-numeric value `{field}`"),
                })?);
            }
        }
        let values = DMatrix::from_row_slice(dates.len(), names.len(), &rows);
        FactorSet::new(names, dates, values)
    }
}

/// Sample covariance matrix of the factor columns over the given dates.
pub(crate) fn factor_covariance(
    set: &FactorSet,
    names: &[String],
    dates: &[NaiveDate],
) -> Result<DMatrix<f64>> {
    let data = set.rows_at(names, dates)?;
    let t = data.nrows();
    if t < 3 {
        return Err(Error::parameter("dates", "too few observations for a covariance"));
    }
    let k = data.ncols();
    let means: Vec<f64> = (0..k).map(|j| data.column(j).sum() / t as f64).collect();
    let mut cov = DMatrix::zeros(k, k);
    for a in 0..k {
        for b in 0..k {
            cov[(a, b)] = (0..t)
                .map(|r| (data[(r, a)] - means[a]) * (data[(r, b)] - means[b]))
                .sum::<f64>()
                / (t as f64 - 1.0);
        }
    }
    Ok(cov)
}
