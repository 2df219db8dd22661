//! Construction of the control-factor battery.
//!
//! Conditional co-moments with the market over a trailing window:
//!
//! ```text
//! CSKEW_i = E[(R_i − μ_i)(MKT − μ_M)²] / ( sd(R_i) · var(MKT) )
//! CKURT_i = E[(R_i − μ_i)(MKT − μ_M)³] / ( sd(R_i) · var(MKT)^{3/2} )
//! ```
//!
//! Characteristic-based factors (CSKEW, CKURT, idiosyncratic vol/skew) are
//! long-short returns of daily-rebalanced top-minus-bottom quintile sorts on
//! the previous day's characteristic, equal-weighted. ILLIQ is the daily
//! cross-sectional mean of |return|/volume, VRP the gap between the VIX
//! (converted to a daily variance) and value-weighted market realized
//! variance, SKIND the daily percent change of the skewness index, and
//! idiosyncratic moments come from rolling five-factor residuals.

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;

use super::FactorSet;
use crate::data::DailyPanel;
use crate::error::{Error, Result};

/// A single named series (index levels, etc.).
#[derive(Debug, Clone)]
pub struct SeriesInput {
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
}

impl SeriesInput {
    fn index(&self) -> BTreeMap<NaiveDate, f64> {
        self.dates.iter().copied().zip(self.values.iter().copied()).collect()
    }
}

/// Inputs for [`build_controls`]. Optional pieces produce the corresponding
/// factor only when present.
pub struct ControlInputs<'a> {
    /// Daily excess returns per asset.
    pub returns: &'a DailyPanel,
    /// Five factors plus momentum: columns `mkt_rf smb hml rmw cma rf mom`.
    pub ff5: &'a FactorSet,
    pub volumes: Option<&'a DailyPanel>,
    /// Size metric used to weight market realized variance.
    pub market_caps: Option<&'a DailyPanel>,
    /// Daily realized volatility per asset (for the variance risk premium).
    pub realized_vol: Option<&'a DailyPanel>,
    /// VIX index level (annualized percent points).
    pub vix: Option<&'a SeriesInput>,
    /// Skewness index level.
    pub skew_index: Option<&'a SeriesInput>,
}

/// The assembled control battery: daily factor series plus the per-asset
/// characteristic panels behind the sorted factors.
#[derive(Debug, Clone)]
pub struct ControlFactors {
    pub set: FactorSet,
    pub cskew: DailyPanel,
    pub ckurt: DailyPanel,
    pub idio_vol: DailyPanel,
    pub idio_skew: DailyPanel,
}

/// Assemble the control battery over a trailing `window` (252 days in the
/// baseline configuration).
pub fn build_controls(inputs: &ControlInputs, window: usize) -> Result<ControlFactors> {
    let returns = inputs.returns;
    let t = returns.n_dates();
    let n = returns.n_assets();
    if window < 30 || t <= window {
        return Err(Error::parameter("window", "need window ≥ 30 and T > window"));
    }

    let ff5_names: Vec<String> =
        ["mkt_rf", "smb", "hml", "rmw", "cma"].iter().map(|s| s.to_string()).collect();
    let ff5_vals = inputs.ff5.rows_at(&ff5_names, &returns.dates)?;
    let mom = inputs
        .ff5
        .rows_at(&["mom".to_string()], &returns.dates)
        .map(|m| m.column(0).iter().copied().collect::<Vec<f64>>())?;
    let mkt: Vec<f64> = ff5_vals.column(0).iter().copied().collect();

    // Rolling conditional co-moments with the market.
    let mut cskew = vec![vec![None; n]; t];
    let mut ckurt = vec![vec![None; n]; t];
    for end in window - 1..t {
        let lo = end + 1 - window;
        let m_win = &mkt[lo..=end];
        let m_mean = m_win.iter().sum::<f64>() / window as f64;
        let m_var =
            m_win.iter().map(|v| (v - m_mean).powi(2)).sum::<f64>() / window as f64;
        if m_var <= 1e-300 {
            continue;
        }
        for a in 0..n {
            let r_win: Option<Vec<f64>> =
                (lo..=end).map(|i| returns.values[i][a]).collect();
            let Some(r_win) = r_win else { continue };
            let r_mean = r_win.iter().sum::<f64>() / window as f64;
            let r_sd = (r_win.iter().map(|v| (v - r_mean).powi(2)).sum::<f64>()
                / window as f64)
                .sqrt();
            if r_sd <= 1e-300 {
                continue;
            }
            let co3: f64 = r_win
                .iter()
                .zip(m_win)
                .map(|(r, m)| (r - r_mean) * (m - m_mean).powi(2))
                .sum::<f64>()
                / window as f64;
            let co4: f64 = r_win
                .iter()
                .zip(m_win)
                .map(|(r, m)| (r - r_mean) * (m - m_mean).powi(3))
                .sum::<f64>()
                / window as f64;
            cskew[end][a] = Some(co3 / (r_sd * m_var));
            ckurt[end][a] = Some(co4 / (r_sd * m_var.powf(1.5)));
        }
    }
    let cskew = DailyPanel::new(returns.asset_ids.clone(), returns.dates.clone(), cskew)?;
    let ckurt = DailyPanel::new(returns.asset_ids.clone(), returns.dates.clone(), ckurt)?;

    // Idiosyncratic moments from rolling five-factor residuals.
    let mut ivol = vec![vec![None; n]; t];
    let mut iskew = vec![vec![None; n]; t];
    for end in window - 1..t {
        let lo = end + 1 - window;
        let x = ff5_vals.view_range(lo..=end, 0..5).clone_owned();
        for a in 0..n {
            let y: Option<Vec<f64>> = (lo..=end).map(|i| returns.values[i][a]).collect();
            let Some(y) = y else { continue };
            if let Some(resid) = ols_residuals(&y, &x) {
                let mean = resid.iter().sum::<f64>() / resid.len() as f64;
                let m2 =
                    resid.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / resid.len() as f64;
                if m2 <= 1e-300 {
                    continue;
                }
                let m3 =
                    resid.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / resid.len() as f64;
                ivol[end][a] = Some(m2.sqrt());
                iskew[end][a] = Some(m3 / m2.powf(1.5));
            }
        }
    }
    let idio_vol = DailyPanel::new(returns.asset_ids.clone(), returns.dates.clone(), ivol)?;
    let idio_skew = DailyPanel::new(returns.asset_ids.clone(), returns.dates.clone(), iskew)?;

    // Assemble the daily factor columns.
    let mut names: Vec<String> = Vec::new();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut push = |name: &str, col: Vec<f64>| {
        names.push(name.to_string());
        cols.push(col);
    };
    for (i, name) in ["mkt", "smb", "hml", "rmw", "cma"].iter().enumerate() {
        push(name, ff5_vals.column(i).iter().copied().collect());
    }
    push("mom", mom);

    if let Some(vix) = inputs.vix {
        let ix = vix.index();
        push("dvix", difference_series(&returns.dates, &ix));
    }
    push("cskew", long_short_factor(&cskew, returns)?);
    push("ckurt", long_short_factor(&ckurt, returns)?);
    if let Some(volumes) = inputs.volumes {
        push("illiq", illiquidity_series(returns, volumes)?);
    }
    if let (Some(vix), Some(rv)) = (inputs.vix, inputs.realized_vol) {
        push("vrp", vrp_series(&vix.index(), rv, inputs.market_caps, &returns.dates)?);
    }
    if let Some(sk) = inputs.skew_index {
        let ix = sk.index();
        push("skind", percent_change_series(&returns.dates, &ix));
    }
    push("idiovol", long_short_factor(&idio_vol, returns)?);
    push("idioskew", long_short_factor(&idio_skew, returns)?);

    let mut values = DMatrix::from_element(t, names.len(), f64::NAN);
    for (j, col) in cols.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            values[(i, j)] = *v;
        }
    }
    let set = FactorSet::new(names, returns.dates.clone(), values)?;
    Ok(ControlFactors { set, cskew, ckurt, idio_vol, idio_skew })
}

fn ols_residuals(y: &[f64], x: &DMatrix<f64>) -> Option<Vec<f64>> {
    let t = y.len();
    let k = x.ncols();
    let mut design = DMatrix::zeros(t, k + 1);
    for r in 0..t {
        design[(r, 0)] = 1.0;
        for c in 0..k {
            design[(r, c + 1)] = x[(r, c)];
        }
    }
    let xtx = design.transpose() * &design;
    let chol = nalgebra::Cholesky::new(xtx)?;
    let yv = DVector::from_column_slice(y);
    let coef = chol.solve(&(design.transpose() * &yv));
    let resid = yv - design * coef;
    Some(resid.iter().copied().collect())
}

/// Daily top-minus-bottom quintile return on yesterday's characteristic,
/// equal-weighted with daily rebalancing. NaN before enough data exists.
fn long_short_factor(characteristic: &DailyPanel, returns: &DailyPanel) -> Result<Vec<f64>> {
    let t = returns.n_dates();
    let n = returns.n_assets();
    let mut out = vec![f64::NAN; t];
    for day in 1..t {
        let chars = &characteristic.values[day - 1];
        let rets = &returns.values[day];
        let mut with: Vec<usize> =
            (0..n).filter(|&a| chars[a].is_some() && rets[a].is_some()).collect();
        if with.len() < 5 {
            continue;
        }
        with.sort_by(|&a, &b| {
            chars[a]
                .unwrap()
                .partial_cmp(&chars[b].unwrap())
                .expect("no NaN characteristics")
                .then(a.cmp(&b))
        });
        let k = with.len();
        let cut = k / 5;
        let low = &with[..cut.max(1)];
        let high = &with[k - cut.max(1)..];
        let avg = |members: &[usize]| -> f64 {
            members.iter().map(|&a| rets[a].unwrap()).sum::<f64>() / members.len() as f64
        };
        out[day] = avg(high) - avg(low);
    }
    Ok(out)
}

fn difference_series(dates: &[NaiveDate], level: &BTreeMap<NaiveDate, f64>) -> Vec<f64> {
    let mut out = vec![f64::NAN; dates.len()];
    let mut prev: Option<f64> = None;
    for (i, d) in dates.iter().enumerate() {
        if let Some(&v) = level.get(d) {
            if let Some(p) = prev {
                out[i] = v - p;
            }
            prev = Some(v);
        }
    }
    out
}

fn percent_change_series(dates: &[NaiveDate], level: &BTreeMap<NaiveDate, f64>) -> Vec<f64> {
    let mut out = vec![f64::NAN; dates.len()];
    let mut prev: Option<f64> = None;
    for (i, d) in dates.iter().enumerate() {
        if let Some(&v) = level.get(d) {
            if let Some(p) = prev {
                if p.abs() > 1e-300 {
                    out[i] = 100.0 * (v / p - 1.0);
                }
            }
            prev = Some(v);
        }
    }
    out
}

/// Cross-sectional mean of |return|/volume; asset-days with missing volume
/// drop out of the mean.
fn illiquidity_series(returns: &DailyPanel, volumes: &DailyPanel) -> Result<Vec<f64>> {
    if returns.asset_ids != volumes.asset_ids {
        return Err(Error::Alignment("returns/volumes asset universes differ".into()));
    }
    let vol_ix: BTreeMap<NaiveDate, usize> =
        volumes.dates.iter().enumerate().map(|(i, d)| (*d, i)).collect();
    let mut out = vec![f64::NAN; returns.n_dates()];
    for (i, d) in returns.dates.iter().enumerate() {
        let Some(&vi) = vol_ix.get(d) else { continue };
        let mut sum = 0.0;
        let mut count = 0usize;
        for a in 0..returns.n_assets() {
            if let (Some(r), Some(v)) = (returns.values[i][a], volumes.values[vi][a]) {
                if v > 0.0 {
                    sum += r.abs() / v;
                    count += 1;
                }
            }
        }
        if count > 0 {
            out[i] = sum / count as f64;
        }
    }
    Ok(out)
}

/// VIX-implied daily variance minus (cap-weighted) market realized variance.
fn vrp_series(
    vix: &BTreeMap<NaiveDate, f64>,
    realized_vol: &DailyPanel,
    market_caps: Option<&DailyPanel>,
    dates: &[NaiveDate],
) -> Result<Vec<f64>> {
    let rv_ix: BTreeMap<NaiveDate, usize> =
        realized_vol.dates.iter().enumerate().map(|(i, d)| (*d, i)).collect();
    let cap_ix: Option<BTreeMap<NaiveDate, usize>> =
        market_caps.map(|c| c.dates.iter().enumerate().map(|(i, d)| (*d, i)).collect());
    let mut out = vec![f64::NAN; dates.len()];
    for (i, d) in dates.iter().enumerate() {
        let (Some(&v), Some(&ri)) = (vix.get(d), rv_ix.get(d)) else { continue };
        let n = realized_vol.n_assets();
        let mut num = 0.0;
        let mut den = 0.0;
        for a in 0..n {
            let Some(rv) = realized_vol.values[ri][a] else { continue };
            let w = match (&cap_ix, market_caps) {
                (Some(ix), Some(caps)) => ix
                    .get(d)
                    .and_then(|&ci| caps.values[ci][a])
                    .unwrap_or(0.0),
                _ => 1.0,
            };
            num += w * rv * rv;
            den += w;
        }
        if den > 0.0 {
            // VIX is annualized volatility in percent points.
            let implied_daily_var = (v / 100.0).powi(2) / 252.0;
            out[i] = implied_daily_var - num / den;
        }
    }
    Ok(out)
}
