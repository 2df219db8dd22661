//! Rolling and full-sample time-series factor loadings.

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::collections::BTreeMap;

use super::{newey_west, FactorSet};
use crate::data::DailyPanel;
use crate::error::{Error, Result};

/// One regression result: intercept, loadings, and Newey-West standard
/// errors of the loadings (diagnostic).
#[derive(Debug, Clone)]
pub struct BetaEntry {
    pub intercept: f64,
    pub loadings: DVector<f64>,
    pub nw_se: DVector<f64>,
}

/// Rolling-regression loadings per (end date, asset).
#[derive(Debug, Clone)]
pub struct BetaPanel {
    pub asset_ids: Vec<String>,
    /// Window end dates (the joined return/factor calendar).
    pub dates: Vec<NaiveDate>,
    pub factor_names: Vec<String>,
    /// `entries[t][asset]`; `None` before the first full window, off the step
    /// grid, or where the window was rank-deficient. For full-sample betas
    /// this holds a single row that applies to every date.
    pub entries: Vec<Vec<Option<BetaEntry>>>,
    pub window: usize,
    pub static_betas: bool,
}

impl BetaPanel {
    /// Loadings applying at date index `t` (the single row for static betas).
    pub fn at(&self, t: usize, asset: usize) -> Option<&BetaEntry> {
        let row = if self.static_betas { 0 } else { t };
        self.entries.get(row)?.get(asset)?.as_ref()
    }

    pub fn n_assets(&self) -> usize {
        self.asset_ids.len()
    }

    pub fn factor_index(&self, name: &str) -> Result<usize> {
        self.factor_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::parameter("factor", format!("no loading named `{name}`")))
    }
}

fn join_calendar(returns: &DailyPanel, factors: &FactorSet) -> (Vec<NaiveDate>, Vec<usize>, Vec<usize>) {
    let f_ix: BTreeMap<NaiveDate, usize> =
        factors.dates.iter().enumerate().map(|(i, d)| (*d, i)).collect();
    let mut dates = Vec::new();
    let mut r_rows = Vec::new();
    let mut f_rows = Vec::new();
    for (ri, d) in returns.dates.iter().enumerate() {
        if let Some(&fi) = f_ix.get(d) {
            dates.push(*d);
            r_rows.push(ri);
            f_rows.push(fi);
        }
    }
    (dates, r_rows, f_rows)
}

/// OLS with intercept plus Newey-West coefficient standard errors.
/// Returns `None` when the design is rank-deficient (e.g. a constant factor
/// inside the window).
fn ols_window(y: &[f64], x: &DMatrix<f64>, nw_lags: usize) -> Option<BetaEntry> {
    let t = y.len();
    let k = x.ncols();
    let mut design = DMatrix::zeros(t, k + 1);
    for r in 0..t {
        design[(r, 0)] = 1.0;
        for c in 0..k {
            design[(r, c + 1)] = x[(r, c)];
        }
    }
    // Degenerate regressors make X'X numerically singular; catch them early
    // so the caller can flag the window.
    for c in 0..k {
        let col = x.column(c);
        let mean = col.sum() / t as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t as f64;
        if var < 1e-14 {
            return None;
        }
    }
    let xtx = design.transpose() * &design;
    let chol = nalgebra::Cholesky::new(xtx)?;
    let yv = DVector::from_column_slice(y);
    let coef = chol.solve(&(design.transpose() * &yv));
    let resid = &yv - &design * &coef;

    // HAC sandwich on the score series x_t·e_t.
    let scores = DMatrix::from_fn(t, k + 1, |r, c| design[(r, c)] * resid[r]);
    let mut se = DVector::zeros(k);
    let xtx_inv = chol.inverse();
    let lags = nw_lags.min(t.saturating_sub(2));
    let mut meat = DMatrix::zeros(k + 1, k + 1);
    for l in 0..=lags {
        let w = if l == 0 { 1.0 } else { 1.0 - l as f64 / (lags as f64 + 1.0) };
        let mut gamma = DMatrix::zeros(k + 1, k + 1);
        for r in l..t {
            let a = scores.row(r);
            let b = scores.row(r - l);
            gamma.ger(1.0, &a.transpose(), &b.transpose(), 1.0);
        }
        if l == 0 {
            meat += &gamma * w;
        } else {
            meat += (&gamma + gamma.transpose()) * w;
        }
    }
    let cov = &xtx_inv * meat * &xtx_inv;
    for c in 0..k {
        se[c] = cov[(c + 1, c + 1)].max(0.0).sqrt();
    }
    Some(BetaEntry {
        intercept: coef[0],
        loadings: DVector::from_fn(k, |i, _| coef[i + 1]),
        nw_se: se,
    })
}

/// Per-asset rolling time-series regressions of excess returns on the factor
/// columns. Entries appear at every `step`-th window end once `window`
/// observations are available; rank-deficient windows come back `None`.
pub fn rolling_betas(
    returns: &DailyPanel,
    factors: &FactorSet,
    window: usize,
    step: usize,
    nw_lags: usize,
) -> Result<BetaPanel> {
    if window < factors.n_factors() + 2 {
        return Err(Error::parameter("window", "must cover at least K + 2 observations"));
    }
    if step == 0 {
        return Err(Error::parameter("step", "must be at least 1"));
    }
    let (dates, r_rows, f_rows) = join_calendar(returns, factors);
    if dates.len() < window {
        return Err(Error::parameter("window", "longer than the joined sample"));
    }
    let n = returns.n_assets();
    let k = factors.n_factors();

    let x_full = DMatrix::from_fn(dates.len(), k, |r, c| factors.values[(f_rows[r], c)]);
    let y_full: Vec<Vec<Option<f64>>> =
        r_rows.iter().map(|&ri| returns.values[ri].clone()).collect();

    let entries: Vec<Vec<Option<BetaEntry>>> = (0..dates.len())
        .into_par_iter()
        .map(|t| {
            if t + 1 < window || (t + 1 - window) % step != 0 {
                return vec![None; n];
            }
            let lo = t + 1 - window;
            let x = x_full.view_range(lo..=t, 0..k).clone_owned();
            (0..n)
                .map(|a| {
                    let y: Option<Vec<f64>> =
                        (lo..=t).map(|r| y_full[r][a]).collect();
                    y.and_then(|y| ols_window(&y, &x, nw_lags))
                })
                .collect()
        })
        .collect();

    Ok(BetaPanel {
        asset_ids: returns.asset_ids.clone(),
        dates,
        factor_names: factors.names.clone(),
        entries,
        window,
        static_betas: false,
    })
}

/// One full-sample regression per asset; the resulting betas apply to every
/// date of the joined calendar.
pub fn full_sample_betas(
    returns: &DailyPanel,
    factors: &FactorSet,
    nw_lags: usize,
) -> Result<BetaPanel> {
    let (dates, r_rows, f_rows) = join_calendar(returns, factors);
    let t = dates.len();
    if t < factors.n_factors() + 2 {
        return Err(Error::parameter("returns", "sample shorter than K + 2"));
    }
    let n = returns.n_assets();
    let k = factors.n_factors();
    let x = DMatrix::from_fn(t, k, |r, c| factors.values[(f_rows[r], c)]);
    let row: Vec<Option<BetaEntry>> = (0..n)
        .map(|a| {
            let y: Option<Vec<f64>> = r_rows.iter().map(|&ri| returns.values[ri][a]).collect();
            y.and_then(|y| ols_window(&y, &x, nw_lags))
        })
        .collect();
    Ok(BetaPanel {
        asset_ids: returns.asset_ids.clone(),
        dates,
        factor_names: factors.names.clone(),
        entries: vec![row],
        window: t,
        static_betas: true,
    })
}

/// Mean Newey-West variance of a beta series (convenience diagnostic).
pub fn beta_series_variance(series: &[f64], lags: usize) -> Result<f64> {
    newey_west(series, lags)
}
