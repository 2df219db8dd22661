//! Quintile portfolio sorts on factor loadings.

use chrono::NaiveDate;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::{newey_west, BetaPanel, FactorSet};
use crate::data::DailyPanel;
use crate::error::{Error, Result};
use crate::factors::{rebalance_periods, Rebalance, Weighting};

/// Settings for [`sort_on_beta`] and [`predictive_sort`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SortConfig {
    pub n_groups: usize,
    pub weighting: Weighting,
    pub rebalance: Rebalance,
    /// Window length (days) of the rolling alpha/beta regressions.
    pub alpha_window: usize,
    /// Step (days) between successive rolling regressions.
    pub alpha_step: usize,
    pub nw_lags: usize,
}

impl Default for SortConfig {
    fn default() -> Self {
        SortConfig {
            n_groups: 5,
            weighting: Weighting::Value,
            rebalance: Rebalance::Monthly,
            alpha_window: 252,
            alpha_step: 21,
            nw_lags: 24,
        }
    }
}

/// Per-quintile characteristics plus the high-minus-low hedge row.
#[derive(Debug, Clone)]
pub struct SortResult {
    pub n_groups: usize,
    /// Average annual return per group (252 × mean daily), low loading first.
    pub group_ann_return: Vec<f64>,
    /// Annualized rolling five-factor alpha per group (NaN without FF5 input).
    pub group_alpha_ann: Vec<f64>,
    /// Average rolling-regression loadings per group (rows: groups then the
    /// hedge) on the reporting factor set; empty without reporting factors.
    pub group_betas: DMatrix<f64>,
    pub report_factor_names: Vec<String>,
    pub hedge_ann_return: f64,
    pub hedge_alpha_ann: f64,
    /// t-ratio of the mean daily hedge return (Newey-West).
    pub t_hedge_return: f64,
    /// t-ratio of the mean rolling hedge alpha (Newey-West).
    pub t_hedge_alpha: f64,
    pub dates: Vec<NaiveDate>,
    /// T × n_groups daily group returns.
    pub group_daily: DMatrix<f64>,
    pub hedge_daily: Vec<f64>,
    /// Formation-date memberships: group index per asset (`None` when the
    /// asset had no beta at formation).
    pub formations: Vec<(NaiveDate, Vec<Option<usize>>)>,
}

/// Sort assets into loading quintiles at each rebalance date and track the
/// portfolios until the next formation. Formation at date r uses the betas
/// dated r (contemporaneous convention).
pub fn sort_on_beta(
    betas: &BetaPanel,
    factor: &str,
    returns: &DailyPanel,
    sizes: Option<&DailyPanel>,
    ff5: Option<&FactorSet>,
    report_factors: Option<&FactorSet>,
    cfg: &SortConfig,
) -> Result<SortResult> {
    run_sort(betas, factor, returns, sizes, ff5, report_factors, cfg, false)
}

/// [`sort_on_beta`] with formation lagged one day: day-t memberships come
/// from the betas of the latest date strictly before t, so formation uses no
/// information from the holding period.
pub fn predictive_sort(
    betas: &BetaPanel,
    factor: &str,
    returns: &DailyPanel,
    sizes: Option<&DailyPanel>,
    ff5: Option<&FactorSet>,
    report_factors: Option<&FactorSet>,
    cfg: &SortConfig,
) -> Result<SortResult> {
    run_sort(betas, factor, returns, sizes, ff5, report_factors, cfg, true)
}

#[allow(clippy::too_many_arguments)]
fn run_sort(
    betas: &BetaPanel,
    factor: &str,
    returns: &DailyPanel,
    sizes: Option<&DailyPanel>,
    ff5: Option<&FactorSet>,
    report_factors: Option<&FactorSet>,
    cfg: &SortConfig,
    predictive: bool,
) -> Result<SortResult> {
    if returns.asset_ids != betas.asset_ids {
        return Err(Error::Alignment("returns/betas asset universes differ".into()));
    }
    let g = cfg.n_groups;
    if g < 2 {
        return Err(Error::parameter("n_groups", "need at least 2 groups"));
    }
    let n = returns.n_assets();
    let beta_ix: BTreeMap<NaiveDate, usize> =
        betas.dates.iter().enumerate().map(|(i, d)| (*d, i)).collect();
    let size_ix: Option<BTreeMap<NaiveDate, usize>> = sizes
        .map(|s| s.dates.iter().enumerate().map(|(i, d)| (*d, i)).collect());
    let fx = betas.factor_index(factor)?;

    // Calendar: return dates that have a beta row (static betas cover all).
    let cal: Vec<(usize, NaiveDate)> = returns
        .dates
        .iter()
        .enumerate()
        .filter(|(_, d)| betas.static_betas || beta_ix.contains_key(d))
        .map(|(i, d)| (i, *d))
        .collect();
    if cal.is_empty() {
        return Err(Error::Alignment("no overlapping return/beta dates".into()));
    }
    let cal_dates: Vec<NaiveDate> = cal.iter().map(|(_, d)| *d).collect();
    let formation_positions = rebalance_periods(&cal_dates, cfg.rebalance);

    // Loading of asset a effective at calendar position pos (optionally
    // lagged one position for predictive formation).
    let loading_at = |pos: usize, a: usize| -> Option<f64> {
        let src_pos = if predictive {
            if pos == 0 {
                return None;
            }
            pos - 1
        } else {
            pos
        };
        let date = cal_dates[src_pos];
        let t = if betas.static_betas { 0 } else { beta_ix[&date] };
        betas.at(t, a).map(|e| e.loadings[fx])
    };

    let mut dates = Vec::new();
    let mut group_rows: Vec<Vec<f64>> = Vec::new();
    let mut formations = Vec::new();

    for (pi, &fpos) in formation_positions.iter().enumerate() {
        let next = formation_positions.get(pi + 1).copied().unwrap_or(cal.len());
        let loadings: Vec<Option<f64>> = (0..n).map(|a| loading_at(fpos, a)).collect();
        let with: Vec<usize> = (0..n).filter(|&a| loadings[a].is_some()).collect();
        if with.is_empty() {
            continue; // before the first estimable window
        }
        if with.len() < g {
            return Err(Error::parameter(
                "returns",
                format!("only {} assets with loadings at {}", with.len(), cal_dates[fpos]),
            ));
        }
        // Rank ascending, ties by asset order; equal-count groups.
        let mut order = with.clone();
        order.sort_by(|&a, &b| {
            loadings[a]
                .unwrap()
                .partial_cmp(&loadings[b].unwrap())
                .expect("no NaN loadings")
                .then(a.cmp(&b))
        });
        let mut membership: Vec<Option<usize>> = vec![None; n];
        for (rank, &a) in order.iter().enumerate() {
            membership[a] = Some((rank * g / order.len()).min(g - 1));
        }
        formations.push((cal_dates[fpos], membership.clone()));

        // Formation-date weights, held fixed over the period.
        let weights: Vec<f64> = match (cfg.weighting, &size_ix) {
            (Weighting::Value, Some(ix)) => {
                let si = *ix.get(&cal_dates[fpos]).ok_or_else(|| {
                    Error::Alignment(format!("size panel missing {}", cal_dates[fpos]))
                })?;
                (0..n)
                    .map(|a| sizes.unwrap().values[si][a].unwrap_or(0.0))
                    .collect()
            }
            (Weighting::Value, None) | (Weighting::Equal, _) => vec![1.0; n],
        };

        for pos in fpos..next {
            let (ri, date) = cal[pos];
            let mut sums = vec![0.0f64; g];
            let mut wsum = vec![0.0f64; g];
            let mut ok = true;
            for a in 0..n {
                if let Some(grp) = membership[a] {
                    match returns.values[ri][a] {
                        Some(r) => {
                            sums[grp] += weights[a] * r;
                            wsum[grp] += weights[a];
                        }
                        None => {
                            ok = false;
                            break;
                        }
                    }
                }
            }
            if !ok || wsum.iter().any(|w| *w <= 0.0) {
                continue;
            }
            dates.push(date);
            group_rows.push((0..g).map(|q| sums[q] / wsum[q]).collect());
        }
    }

    if dates.is_empty() {
        return Err(Error::Alignment("no portfolio days could be formed".into()));
    }
    let t_len = dates.len();
    let group_daily = DMatrix::from_fn(t_len, g, |r, c| group_rows[r][c]);
    let hedge_daily: Vec<f64> =
        (0..t_len).map(|r| group_daily[(r, g - 1)] - group_daily[(r, 0)]).collect();

    let ann = |series: &[f64]| 252.0 * series.iter().sum::<f64>() / series.len() as f64;
    let group_ann_return: Vec<f64> =
        (0..g).map(|q| ann(&group_daily.column(q).iter().copied().collect::<Vec<_>>())).collect();
    let hedge_ann_return = ann(&hedge_daily);
    let nw_lags = cfg.nw_lags.min(t_len.saturating_sub(2));
    let hedge_mean = hedge_daily.iter().sum::<f64>() / t_len as f64;
    let t_hedge_return = hedge_mean / newey_west(&hedge_daily, nw_lags)?.sqrt();

    // Rolling five-factor alphas.
    let mut group_alpha_ann = vec![f64::NAN; g];
    let mut hedge_alpha_ann = f64::NAN;
    let mut t_hedge_alpha = f64::NAN;
    if let Some(ff5) = ff5 {
        let x = ff5.rows_at(&ff5.names, &dates)?;
        let alpha_series = |series: &[f64]| -> Result<Vec<f64>> {
            rolling_intercepts(series, &x, cfg.alpha_window, cfg.alpha_step)
        };
        for q in 0..g {
            let col: Vec<f64> = group_daily.column(q).iter().copied().collect();
            let alphas = alpha_series(&col)?;
            if !alphas.is_empty() {
                group_alpha_ann[q] = 252.0 * alphas.iter().sum::<f64>() / alphas.len() as f64;
            }
        }
        let alphas = alpha_series(&hedge_daily)?;
        if alphas.len() > nw_lags + 1 {
            let mean = alphas.iter().sum::<f64>() / alphas.len() as f64;
            hedge_alpha_ann = 252.0 * mean;
            t_hedge_alpha =
                mean / newey_west(&alphas, nw_lags.min(alphas.len() - 2))?.sqrt();
        }
    }

    // Average rolling loadings on the reporting factor battery.
    let (group_betas, report_factor_names) = if let Some(rf) = report_factors {
        let x = rf.rows_at(&rf.names, &dates)?;
        let k = rf.names.len();
        let mut out = DMatrix::zeros(g + 1, k);
        for q in 0..=g {
            let series: Vec<f64> = if q < g {
                group_daily.column(q).iter().copied().collect()
            } else {
                hedge_daily.clone()
            };
            let coefs = rolling_loadings(&series, &x, cfg.alpha_window, cfg.alpha_step)?;
            for c in 0..k {
                out[(q, c)] = coefs[c];
            }
        }
        (out, rf.names.clone())
    } else {
        (DMatrix::zeros(0, 0), Vec::new())
    };

    Ok(SortResult {
        n_groups: g,
        group_ann_return,
        group_alpha_ann,
        group_betas,
        report_factor_names,
        hedge_ann_return,
        hedge_alpha_ann,
        t_hedge_return,
        t_hedge_alpha,
        dates,
        group_daily,
        hedge_daily,
        formations,
    })
}

/// Intercepts of rolling OLS regressions of `y` on `x` columns.
fn rolling_intercepts(
    y: &[f64],
    x: &DMatrix<f64>,
    window: usize,
    step: usize,
) -> Result<Vec<f64>> {
    rolling_ols(y, x, window, step).map(|coefs| coefs.into_iter().map(|c| c[0]).collect())
}

/// Window-averaged slope coefficients of rolling OLS regressions.
fn rolling_loadings(y: &[f64], x: &DMatrix<f64>, window: usize, step: usize) -> Result<Vec<f64>> {
    let k = x.ncols();
    let coefs = rolling_ols(y, x, window, step)?;
    if coefs.is_empty() {
        return Ok(vec![f64::NAN; k]);
    }
    Ok((0..k)
        .map(|c| coefs.iter().map(|v| v[c + 1]).sum::<f64>() / coefs.len() as f64)
        .collect())
}

fn rolling_ols(
    y: &[f64],
    x: &DMatrix<f64>,
    window: usize,
    step: usize,
) -> Result<Vec<Vec<f64>>> {
    let t = y.len();
    let k = x.ncols();
    if window < k + 2 {
        return Err(Error::parameter("alpha_window", "must cover at least K + 2 points"));
    }
    let mut out = Vec::new();
    if t < window {
        return Ok(out);
    }
    let mut start = 0usize;
    while start + window <= t {
        let end = start + window;
        let mut design = DMatrix::zeros(window, k + 1);
        for r in 0..window {
            design[(r, 0)] = 1.0;
            for c in 0..k {
                design[(r, c + 1)] = x[(start + r, c)];
            }
        }
        let yv = nalgebra::DVector::from_column_slice(&y[start..end]);
        let xtx = design.transpose() * &design;
        if let Some(chol) = nalgebra::Cholesky::new(xtx) {
            let coef = chol.solve(&(design.transpose() * &yv));
            out.push(coef.iter().copied().collect());
        }
        start += step;
    }
    Ok(out)
}
