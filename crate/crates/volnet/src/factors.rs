//! Directional network risk factors from size × net-connectedness sorts.
//!
//! Each day assets split into small/big halves by the day's size metric
//! (price level by default), then, conditional on size, into TO and FROM
//! portfolios holding the strongest shock transmitters (top of the day's
//! net-connectedness distribution) and receivers (bottom). The factor and its
//! alternative are
//!
//! ```text
//! NET(d)  = (FROM_small + TO_small)/2 − (FROM_big + TO_big)/2
//! NET'(d) = (TO_small − FROM_small) − (TO_big − FROM_big)
//! ```
//!
//! Group membership is rank-based with ties broken by asset order, so
//! degenerate inputs (all sizes equal) still partition deterministically.

use chrono::{Datelike, NaiveDate};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::data::DailyPanel;
use crate::error::{Error, Result};

/// Cell weighting inside a sorted portfolio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    /// Weight by the day's size metric.
    #[default]
    Value,
    Equal,
}

/// How often memberships are re-formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rebalance {
    #[default]
    Daily,
    Monthly,
}

/// Sort parameters for factor construction and double-sort grids.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SortSpec {
    /// Size split percentile (50 = median halves).
    pub size_split: f64,
    /// FROM leg takes assets below this net-connectedness percentile.
    pub conn_low: f64,
    /// TO leg takes assets above this percentile.
    pub conn_high: f64,
    pub weighting: Weighting,
    pub rebalance: Rebalance,
}

impl Default for SortSpec {
    fn default() -> Self {
        SortSpec {
            size_split: 50.0,
            conn_low: 30.0,
            conn_high: 70.0,
            weighting: Weighting::Value,
            rebalance: Rebalance::Daily,
        }
    }
}

impl SortSpec {
    fn validate(&self) -> Result<()> {
        if !(0.0 < self.conn_low && self.conn_low < self.conn_high && self.conn_high < 100.0) {
            return Err(Error::parameter("sort_spec", "need 0 < low < high < 100"));
        }
        if !(0.0 < self.size_split && self.size_split < 100.0) {
            return Err(Error::parameter("sort_spec", "size_split must lie in (0, 100)"));
        }
        Ok(())
    }
}

/// The four portfolio returns feeding one day of the factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorLegs {
    pub from_small: f64,
    pub to_small: f64,
    pub from_big: f64,
    pub to_big: f64,
}

/// Daily legs plus a record of skipped days.
#[derive(Debug, Clone)]
pub struct LegSeries {
    pub dates: Vec<NaiveDate>,
    pub legs: Vec<FactorLegs>,
    /// Days dropped because a leg portfolio came out empty, with the reason.
    pub skipped: Vec<(NaiveDate, String)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FactorVariant {
    Net,
    NetPrime,
    NetOrth,
}

impl std::fmt::Display for FactorVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FactorVariant::Net => write!(f, "NET"),
            FactorVariant::NetPrime => write!(f, "NET_PRIME"),
            FactorVariant::NetOrth => write!(f, "NET_ORTH"),
        }
    }
}

/// A daily factor-return series with the legs it was assembled from.
#[derive(Debug, Clone)]
pub struct FactorSeries {
    pub variant: FactorVariant,
    /// Band the net-connectedness input came from.
    pub band: String,
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
    /// Present for `Net`/`NetPrime`; the factor value is a pure function of
    /// the stored legs.
    pub legs: Option<Vec<FactorLegs>>,
}

impl FactorSeries {
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len().max(1) as f64
    }
}

/// Stable ascending order of `values` with ties broken by index.
fn ranked_indices(values: &[f64]) -> Vec<usize> {
    let mut ix: Vec<usize> = (0..values.len()).collect();
    ix.sort_by(|&a, &b| {
        values[a].partial_cmp(&values[b]).expect("no NaNs in sort values").then(a.cmp(&b))
    });
    ix
}

fn weighted_return(members: &[usize], rets: &[f64], sizes: &[f64], weighting: Weighting) -> Option<f64> {
    if members.is_empty() {
        return None;
    }
    match weighting {
        Weighting::Equal => {
            Some(members.iter().map(|&i| rets[i]).sum::<f64>() / members.len() as f64)
        }
        Weighting::Value => {
            let total: f64 = members.iter().map(|&i| sizes[i]).sum();
            if total <= 0.0 {
                return None;
            }
            Some(members.iter().map(|&i| rets[i] * sizes[i]).sum::<f64>() / total)
        }
    }
}

/// Intersect dates of three panels sharing one asset universe.
fn join_dates(
    returns: &DailyPanel,
    sizes: &DailyPanel,
    conn: &DailyPanel,
) -> Result<Vec<(NaiveDate, usize, usize, usize)>> {
    if returns.asset_ids != sizes.asset_ids || returns.asset_ids != conn.asset_ids {
        return Err(Error::Alignment("panels carry different asset universes".into()));
    }
    let s_ix: BTreeMap<NaiveDate, usize> =
        sizes.dates.iter().enumerate().map(|(i, d)| (*d, i)).collect();
    let c_ix: BTreeMap<NaiveDate, usize> =
        conn.dates.iter().enumerate().map(|(i, d)| (*d, i)).collect();
    Ok(returns
        .dates
        .iter()
        .enumerate()
        .filter_map(|(ri, d)| {
            let si = s_ix.get(d)?;
            let ci = c_ix.get(d)?;
            Some((*d, ri, *si, *ci))
        })
        .collect())
}

fn complete_row(panel: &DailyPanel, row: usize) -> Option<Vec<f64>> {
    panel.values[row].iter().copied().collect()
}

/// Build the daily TO/FROM legs per size group.
///
/// Per day: assets sort by size (rank cut at `size_split`), then within each
/// size group by net connectedness. The FROM leg holds the bottom
/// `conn_low`% and the TO leg the top `100 − conn_high`% of the group, with
/// nearest-rank counts.
pub fn factor_legs(
    returns: &DailyPanel,
    sizes: &DailyPanel,
    net_conn: &DailyPanel,
    spec: &SortSpec,
) -> Result<LegSeries> {
    spec.validate()?;
    let joined = join_dates(returns, sizes, net_conn)?;
    let mut dates = Vec::new();
    let mut legs = Vec::new();
    let mut skipped = Vec::new();

    for (date, ri, si, ci) in joined {
        let (Some(rets), Some(szs), Some(conns)) = (
            complete_row(returns, ri),
            complete_row(sizes, si),
            complete_row(net_conn, ci),
        ) else {
            skipped.push((date, "missing cells in input panels".into()));
            continue;
        };
        let n = rets.len();
        if n < 4 {
            skipped.push((date, "fewer than 4 assets".into()));
            continue;
        }

        let by_size = ranked_indices(&szs);
        let n_small = ((spec.size_split / 100.0) * n as f64).ceil() as usize;
        let (small, big) = by_size.split_at(n_small.clamp(1, n - 1));

        let mut day_legs = [0.0f64; 4];
        let mut ok = true;
        for (g, group) in [small, big].iter().enumerate() {
            let conn_vals: Vec<f64> = group.iter().map(|&i| conns[i]).collect();
            let order = ranked_indices(&conn_vals);
            let g_n = group.len();
            let k_from = ((spec.conn_low / 100.0) * g_n as f64).ceil() as usize;
            let k_to = g_n - ((spec.conn_high / 100.0) * g_n as f64).ceil() as usize;
            let from_members: Vec<usize> = order[..k_from.min(g_n)]
                .iter()
                .map(|&local| group[local])
                .collect();
            let to_members: Vec<usize> =
                order[g_n - k_to.min(g_n)..].iter().map(|&local| group[local]).collect();
            let from_ret = weighted_return(&from_members, &rets, &szs, spec.weighting);
            let to_ret = weighted_return(&to_members, &rets, &szs, spec.weighting);
            match (from_ret, to_ret) {
                (Some(f), Some(t)) => {
                    day_legs[2 * g] = f;
                    day_legs[2 * g + 1] = t;
                }
                _ => {
                    ok = false;
                    skipped.push((
                        date,
                        format!("empty {} leg", if g == 0 { "small" } else { "big" }),
                    ));
                    break;
                }
            }
        }
        if ok {
            dates.push(date);
            legs.push(FactorLegs {
                from_small: day_legs[0],
                to_small: day_legs[1],
                from_big: day_legs[2],
                to_big: day_legs[3],
            });
        }
    }
    Ok(LegSeries { dates, legs, skipped })
}

/// `NET(d) = (FROM_small + TO_small)/2 − (FROM_big + TO_big)/2`.
pub fn net_factor(legs: &LegSeries, band: impl Into<String>) -> FactorSeries {
    let values = legs
        .legs
        .iter()
        .map(|l| (l.from_small + l.to_small) / 2.0 - (l.from_big + l.to_big) / 2.0)
        .collect();
    FactorSeries {
        variant: FactorVariant::Net,
        band: band.into(),
        dates: legs.dates.clone(),
        values,
        legs: Some(legs.legs.clone()),
    }
}

/// `NET'(d) = (TO_small − FROM_small) − (TO_big − FROM_big)`.
pub fn net_factor_alt(legs: &LegSeries, band: impl Into<String>) -> FactorSeries {
    let values = legs
        .legs
        .iter()
        .map(|l| (l.to_small - l.from_small) - (l.to_big - l.from_big))
        .collect();
    FactorSeries {
        variant: FactorVariant::NetPrime,
        band: band.into(),
        dates: legs.dates.clone(),
        values,
        legs: Some(legs.legs.clone()),
    }
}

/// Residuals of the short-horizon factor regressed on the long-horizon one
/// (time-series regression with intercept, joined on dates).
pub fn orthogonalize(short: &FactorSeries, long: &FactorSeries) -> Result<FactorSeries> {
    let long_ix: BTreeMap<NaiveDate, usize> =
        long.dates.iter().enumerate().map(|(i, d)| (*d, i)).collect();
    let mut dates = Vec::new();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (i, d) in short.dates.iter().enumerate() {
        if let Some(&j) = long_ix.get(d) {
            dates.push(*d);
            y.push(short.values[i]);
            x.push(long.values[j]);
        }
    }
    let n = x.len() as f64;
    if x.len() < 3 {
        return Err(Error::parameter("factors", "fewer than 3 overlapping dates"));
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx <= 1e-300 {
        return Err(Error::numerical("orthogonalize", "long factor has zero variance"));
    }
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let values: Vec<f64> =
        x.iter().zip(&y).map(|(a, b)| (b - my) - slope * (a - mx)).collect();
    Ok(FactorSeries {
        variant: FactorVariant::NetOrth,
        band: short.band.clone(),
        dates,
        values,
        legs: None,
    })
}

/// Descriptive statistics of a factor series. Annualization follows the
/// 252-trading-day convention; kurtosis is non-excess. Skewness and kurtosis
/// come back `None` for a degenerate (zero-variance) series.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FactorStats {
    pub n_obs: usize,
    pub ann_mean: f64,
    pub ann_sd: f64,
    pub skewness: Option<f64>,
    pub kurtosis: Option<f64>,
}

pub fn factor_stats(f: &FactorSeries) -> Result<FactorStats> {
    let n = f.values.len();
    if n < 2 {
        return Err(Error::parameter("factor", "need at least 2 observations"));
    }
    let nf = n as f64;
    let mean = f.values.iter().sum::<f64>() / nf;
    let m2 = f.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf;
    let sd_sample =
        (f.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt();
    let (skewness, kurtosis) = if m2 <= 1e-300 {
        (None, None)
    } else {
        let m3 = f.values.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / nf;
        let m4 = f.values.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / nf;
        (Some(m3 / m2.powf(1.5)), Some(m4 / (m2 * m2)))
    };
    Ok(FactorStats {
        n_obs: n,
        ann_mean: 252.0 * mean,
        ann_sd: 252.0f64.sqrt() * sd_sample,
        skewness,
        kurtosis,
    })
}

/// Sample correlations (below and on the diagonal) and covariances (above)
/// across factor series, joined on common dates.
pub fn factor_cross_stats(series: &[&FactorSeries]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let k = series.len();
    if k == 0 {
        return Err(Error::parameter("series", "no factors"));
    }
    let mut common: Vec<NaiveDate> = series[0].dates.clone();
    for s in &series[1..] {
        let set: std::collections::BTreeSet<NaiveDate> = s.dates.iter().copied().collect();
        common.retain(|d| set.contains(d));
    }
    if common.len() < 3 {
        return Err(Error::parameter("series", "fewer than 3 overlapping dates"));
    }
    let mut data = DMatrix::zeros(common.len(), k);
    for (j, s) in series.iter().enumerate() {
        let ix: BTreeMap<NaiveDate, usize> =
            s.dates.iter().enumerate().map(|(i, d)| (*d, i)).collect();
        for (r, d) in common.iter().enumerate() {
            data[(r, j)] = s.values[ix[d]];
        }
    }
    let n = common.len() as f64;
    let means: Vec<f64> = (0..k).map(|j| data.column(j).sum() / n).collect();
    let mut cov = DMatrix::zeros(k, k);
    for a in 0..k {
        for b in 0..k {
            cov[(a, b)] = (0..common.len())
                .map(|r| (data[(r, a)] - means[a]) * (data[(r, b)] - means[b]))
                .sum::<f64>()
                / (n - 1.0);
        }
    }
    let corr = DMatrix::from_fn(k, k, |a, b| cov[(a, b)] / (cov[(a, a)] * cov[(b, b)]).sqrt());
    Ok((corr, cov))
}

/// Average-annual-return grid from a size × net-connectedness double sort.
#[derive(Debug, Clone)]
pub struct DoubleSortGrid {
    pub size_groups: usize,
    pub conn_groups: usize,
    /// Average annual return per cell (252 × mean daily), size rows ×
    /// connectedness columns, small/low first.
    pub avg_annual: DMatrix<f64>,
    /// Small-minus-big annualized return per connectedness column.
    pub small_minus_big: Vec<f64>,
    /// Daily cell returns (NaN where a cell was empty that day).
    pub daily: Vec<DMatrix<f64>>,
    pub dates: Vec<NaiveDate>,
    /// (date, size group, conn group) cells that had no members.
    pub empty_cells: Vec<(NaiveDate, usize, usize)>,
}

/// Per-day double sort of assets into `size_groups × conn_groups` cells.
///
/// Membership is rank-based (ties by asset order): size groups are
/// equal-count buckets (or the `size_split` cut when `size_groups == 2`),
/// connectedness buckets are formed within each size group.
pub fn double_sort(
    returns: &DailyPanel,
    sizes: &DailyPanel,
    net_conn: &DailyPanel,
    spec: &SortSpec,
    size_groups: usize,
    conn_groups: usize,
) -> Result<DoubleSortGrid> {
    spec.validate()?;
    if size_groups < 2 || conn_groups < 1 {
        return Err(Error::parameter("grid", "need ≥2 size groups and ≥1 conn groups"));
    }
    let joined = join_dates(returns, sizes, net_conn)?;
    if joined.is_empty() {
        return Err(Error::Alignment("no overlapping dates across inputs".into()));
    }

    let mut daily = Vec::new();
    let mut dates = Vec::new();
    let mut empty_cells = Vec::new();
    let mut sums = DMatrix::zeros(size_groups, conn_groups);
    let mut counts = DMatrix::<f64>::zeros(size_groups, conn_groups);

    for (date, ri, si, ci) in joined {
        let (Some(rets), Some(szs), Some(conns)) = (
            complete_row(returns, ri),
            complete_row(sizes, si),
            complete_row(net_conn, ci),
        ) else {
            continue;
        };
        let n = rets.len();
        if n < size_groups * conn_groups {
            continue;
        }

        // Size buckets by rank.
        let by_size = ranked_indices(&szs);
        let size_bucket_of = |rank: usize| -> usize {
            if size_groups == 2 {
                let n_small = ((spec.size_split / 100.0) * n as f64).ceil() as usize;
                usize::from(rank >= n_small.clamp(1, n - 1))
            } else {
                (rank * size_groups / n).min(size_groups - 1)
            }
        };
        let mut size_members: Vec<Vec<usize>> = vec![Vec::new(); size_groups];
        for (rank, &asset) in by_size.iter().enumerate() {
            size_members[size_bucket_of(rank)].push(asset);
        }

        let mut grid = DMatrix::from_element(size_groups, conn_groups, f64::NAN);
        for (s, group) in size_members.iter().enumerate() {
            let conn_vals: Vec<f64> = group.iter().map(|&i| conns[i]).collect();
            let order = ranked_indices(&conn_vals);
            let g_n = group.len();
            let mut cell_members: Vec<Vec<usize>> = vec![Vec::new(); conn_groups];
            for (rank, &local) in order.iter().enumerate() {
                let c = (rank * conn_groups / g_n).min(conn_groups - 1);
                cell_members[c].push(group[local]);
            }
            for (c, members) in cell_members.iter().enumerate() {
                match weighted_return(members, &rets, &szs, spec.weighting) {
                    Some(r) => {
                        grid[(s, c)] = r;
                        sums[(s, c)] += r;
                        counts[(s, c)] += 1.0;
                    }
                    None => empty_cells.push((date, s, c)),
                }
            }
        }
        daily.push(grid);
        dates.push(date);
    }

    let avg_annual = DMatrix::from_fn(size_groups, conn_groups, |s, c| {
        if counts[(s, c)] > 0.0 {
            252.0 * sums[(s, c)] / counts[(s, c)]
        } else {
            f64::NAN
        }
    });
    let small_minus_big = (0..conn_groups)
        .map(|c| avg_annual[(0, c)] - avg_annual[(size_groups - 1, c)])
        .collect();
    Ok(DoubleSortGrid {
        size_groups,
        conn_groups,
        avg_annual,
        small_minus_big,
        daily,
        dates,
        empty_cells,
    })
}

/// Group daily dates into rebalance periods (identity for daily).
pub fn rebalance_periods(dates: &[NaiveDate], rebalance: Rebalance) -> Vec<usize> {
    match rebalance {
        Rebalance::Daily => (0..dates.len()).collect(),
        Rebalance::Monthly => {
            let mut firsts = Vec::new();
            let mut last_month = None;
            for (i, d) in dates.iter().enumerate() {
                let key = (d.year(), d.month());
                if last_month != Some(key) {
                    firsts.push(i);
                    last_month = Some(key);
                }
            }
            firsts
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand_distr::Distribution;

    fn dates(n: usize) -> Vec<NaiveDate> {
        let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        (0..n as i64).map(|d| start + chrono::Duration::days(d)).collect()
    }

    fn panel(values: Vec<Vec<f64>>) -> DailyPanel {
        let n_assets = values[0].len();
        DailyPanel::new(
            (0..n_assets).map(|i| format!("A{i:02}")).collect(),
            dates(values.len()),
            values.into_iter().map(|r| r.into_iter().map(Some).collect()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn homogeneous_assets_all_cells_equal() {
        let n = 10;
        let rets = panel(vec![vec![0.01; n]; 3]);
        let sizes = panel(vec![vec![5.0; n]; 3]);
        let conns = panel(vec![(0..n).map(|i| i as f64).collect(); 3]);
        let grid =
            double_sort(&rets, &sizes, &conns, &SortSpec::default(), 2, 5).unwrap();
        for v in grid.avg_annual.iter() {
            assert_abs_diff_eq!(*v, 252.0 * 0.01, epsilon = 1e-12);
        }
        assert!(grid.empty_cells.is_empty());
    }

    #[test]
    fn hand_enumerated_six_asset_sort() {
        // 6 assets, 2 days. Sizes pick smalls = {A0,A1,A2}; conns within each
        // group order the members; equal weighting makes cells averageable by
        // hand.
        let rets = panel(vec![
            vec![0.01, 0.02, 0.03, 0.04, 0.05, 0.06],
            vec![0.06, 0.05, 0.04, 0.03, 0.02, 0.01],
        ]);
        let sizes = panel(vec![vec![1.0, 2.0, 3.0, 10.0, 20.0, 30.0]; 2]);
        let conns = panel(vec![
            vec![-1.0, 0.0, 1.0, -2.0, 0.0, 2.0],
            vec![1.0, 0.0, -1.0, 2.0, 0.0, -2.0],
        ]);
        let spec = SortSpec { weighting: Weighting::Equal, ..SortSpec::default() };
        let grid = double_sort(&rets, &sizes, &conns, &spec, 2, 3).unwrap();

        // Day 1: smalls {0,1,2} conn-ordered [0,1,2] → cells (0)(1)(2);
        //        bigs {3,4,5} conn-ordered [3,4,5] → cells (3)(4)(5).
        let d0 = &grid.daily[0];
        assert_abs_diff_eq!(d0[(0, 0)], 0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(d0[(0, 1)], 0.02, epsilon = 1e-15);
        assert_abs_diff_eq!(d0[(0, 2)], 0.03, epsilon = 1e-15);
        assert_abs_diff_eq!(d0[(1, 0)], 0.04, epsilon = 1e-15);
        assert_abs_diff_eq!(d0[(1, 2)], 0.06, epsilon = 1e-15);
        // Day 2 flips the conn ordering: cell (0,0) now holds A2.
        let d1 = &grid.daily[1];
        assert_abs_diff_eq!(d1[(0, 0)], 0.04, epsilon = 1e-15);
        assert_abs_diff_eq!(d1[(0, 2)], 0.06, epsilon = 1e-15);
        assert_abs_diff_eq!(d1[(1, 0)], 0.01, epsilon = 1e-15);
    }

    #[test]
    fn double_sort_matches_brute_force_oracle() {
        // Randomized panel checked against an independent per-day grouping.
        let mut rng = crate::rng::substream(31, &["factor-test"], &[]);
        let normal = rand_distr::Normal::new(0.0, 0.02).unwrap();
        let n = 12;
        let t = 15;
        let rets =
            panel((0..t).map(|_| (0..n).map(|_| normal.sample(&mut rng)).collect()).collect());
        let sizes = panel(
            (0..t)
                .map(|_| (0..n).map(|_| 1.0 + rand::RngExt::random::<f64>(&mut rng) * 9.0).collect())
                .collect(),
        );
        let conns =
            panel((0..t).map(|_| (0..n).map(|_| normal.sample(&mut rng)).collect()).collect());
        let spec = SortSpec::default();
        let grid = double_sort(&rets, &sizes, &conns, &spec, 2, 5).unwrap();

        for (day, gmat) in grid.daily.iter().enumerate() {
            let r: Vec<f64> = rets.values[day].iter().map(|v| v.unwrap()).collect();
            let s: Vec<f64> = sizes.values[day].iter().map(|v| v.unwrap()).collect();
            let c: Vec<f64> = conns.values[day].iter().map(|v| v.unwrap()).collect();
            // Brute force: sort asset indices by size then assign halves, then
            // sort each half by conn and chop into 5 rank buckets.
            let mut by_size: Vec<usize> = (0..n).collect();
            by_size.sort_by(|&a, &b| s[a].partial_cmp(&s[b]).unwrap().then(a.cmp(&b)));
            let halves = [&by_size[..6], &by_size[6..]];
            for (sg, half) in halves.iter().enumerate() {
                let mut ordered = half.to_vec();
                ordered.sort_by(|&a, &b| c[a].partial_cmp(&c[b]).unwrap().then(a.cmp(&b)));
                for cg in 0..5usize {
                    let members: Vec<usize> = ordered
                        .iter()
                        .enumerate()
                        .filter(|(rank, _)| rank * 5 / 6 == cg)
                        .map(|(_, &a)| a)
                        .collect();
                    let wsum: f64 = members.iter().map(|&a| s[a]).sum();
                    let expected: f64 =
                        members.iter().map(|&a| r[a] * s[a]).sum::<f64>() / wsum;
                    assert_abs_diff_eq!(gmat[(sg, cg)], expected, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn planted_size_premium_shows_in_small_minus_big() {
        // Big assets earn more by construction.
        let n = 10;
        let t = 30;
        let rets = panel(
            (0..t)
                .map(|_| (0..n).map(|i| if i >= n / 2 { 0.02 } else { -0.01 }).collect())
                .collect(),
        );
        let sizes = panel(vec![(0..n).map(|i| (i + 1) as f64).collect(); t]);
        let conns = panel(vec![(0..n).map(|i| (i % 3) as f64).collect(); t]);
        let grid =
            double_sort(&rets, &sizes, &conns, &SortSpec::default(), 2, 3).unwrap();
        assert!(grid.small_minus_big.iter().all(|v| *v < 0.0));
    }

    fn legs_from(values: &[(f64, f64, f64, f64)]) -> LegSeries {
        LegSeries {
            dates: dates(values.len()),
            legs: values
                .iter()
                .map(|&(fs, ts, fb, tb)| FactorLegs {
                    from_small: fs,
                    to_small: ts,
                    from_big: fb,
                    to_big: tb,
                })
                .collect(),
            skipped: Vec::new(),
        }
    }

    #[test]
    fn net_factor_arithmetic() {
        let legs = legs_from(&[(1.0, 1.0, 1.0, 1.0), (0.02, 0.04, 0.01, 0.03)]);
        let f = net_factor(&legs, "short");
        assert_abs_diff_eq!(f.values[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(f.values[1], 0.01, epsilon = 1e-15);

        // The stored legs reproduce the factor exactly.
        for (v, l) in f.values.iter().zip(f.legs.as_ref().unwrap()) {
            assert_eq!(*v, (l.from_small + l.to_small) / 2.0 - (l.from_big + l.to_big) / 2.0);
        }
    }

    #[test]
    fn net_prime_arithmetic() {
        let legs = legs_from(&[
            (1.0, 1.0, 1.0, 1.0),
            // from_s=2, to_s=4, from_b=1, to_b=3 → (4−2) − (3−1) = 0
            (2.0, 4.0, 1.0, 3.0),
            // from_s=1, to_s=4, from_b=2, to_b=3 → 3 − 1 = 2
            (1.0, 4.0, 2.0, 3.0),
        ]);
        let f = net_factor_alt(&legs, "long");
        assert_abs_diff_eq!(f.values[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(f.values[1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(f.values[2], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn planted_small_transmitter_underperformance_gives_negative_factor() {
        // Small, high-|net| assets lose money while everything else gains.
        let n = 10;
        let t = 40;
        let mut rows = Vec::new();
        for _ in 0..t {
            let row: Vec<f64> =
                (0..n).map(|i| if i < 2 || (2..5).contains(&i) { -0.02 } else { 0.01 }).collect();
            rows.push(row);
        }
        let rets = panel(rows);
        let sizes = panel(vec![(0..n).map(|i| (i + 1) as f64).collect(); t]);
        // Small assets 0..5 in size order; give the small group wide net
        // spread so its TO/FROM legs pick the planted losers.
        let conns = panel(vec![vec![-3.0, 3.0, -2.0, 2.0, 0.0, 0.0, -1.0, 1.0, -0.5, 0.5]; t]);
        let legs = factor_legs(&rets, &sizes, &conns, &SortSpec::default()).unwrap();
        let f = net_factor(&legs, "short");
        assert!(f.mean() < 0.0, "mean factor {}", f.mean());
    }

    #[test]
    fn orthogonalize_identical_series_gives_zero_residuals() {
        let legs = legs_from(&[(0.02, 0.04, 0.01, 0.03), (0.0, 0.02, 0.01, 0.01), (0.05, 0.01, 0.02, 0.0)]);
        let f = net_factor(&legs, "short");
        let resid = orthogonalize(&f, &f).unwrap();
        for v in &resid.values {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn orthogonalize_keeps_demeaned_series_when_already_orthogonal() {
        // x and y constructed exactly orthogonal after demeaning.
        let x = vec![1.0, -1.0, 1.0, -1.0];
        let y = vec![1.0, 1.0, -1.0, -1.0];
        let mk = |vals: &[f64], variant| FactorSeries {
            variant,
            band: "short".into(),
            dates: dates(vals.len()),
            values: vals.to_vec(),
            legs: None,
        };
        let short = mk(&y, FactorVariant::Net);
        let long = mk(&x, FactorVariant::Net);
        let out = orthogonalize(&short, &long).unwrap();
        for (o, orig) in out.values.iter().zip(&y) {
            assert_abs_diff_eq!(*o, *orig, epsilon = 1e-14); // already mean zero
        }
    }

    #[test]
    fn orthogonalized_factor_uncorrelated_with_long() {
        let mut rng = crate::rng::substream(7, &["factor-orth"], &[]);
        let normal = rand_distr::Normal::new(0.0, 0.01).unwrap();
        let t = 200;
        let long_vals: Vec<f64> = (0..t).map(|_| normal.sample(&mut rng)).collect();
        let short_vals: Vec<f64> =
            long_vals.iter().map(|v| 0.8 * v + 0.3 * normal.sample(&mut rng)).collect();
        let mk = |vals: Vec<f64>| FactorSeries {
            variant: FactorVariant::Net,
            band: "x".into(),
            dates: dates(t),
            values: vals,
            legs: None,
        };
        let out = orthogonalize(&mk(short_vals), &mk(long_vals.clone())).unwrap();
        let mx = long_vals.iter().sum::<f64>() / t as f64;
        let mo = out.values.iter().sum::<f64>() / t as f64;
        let cov: f64 = out
            .values
            .iter()
            .zip(&long_vals)
            .map(|(o, l)| (o - mo) * (l - mx))
            .sum::<f64>();
        let denom = (out.values.iter().map(|o| (o - mo).powi(2)).sum::<f64>()
            * long_vals.iter().map(|l| (l - mx).powi(2)).sum::<f64>())
        .sqrt();
        assert!((cov / denom).abs() < 1e-12, "corr {}", cov / denom);
        assert!(orthogonalize(&out, &mk(vec![1.0; t])).is_err(), "zero-variance long");
    }

    #[test]
    fn factor_stats_examples() {
        let constant = FactorSeries {
            variant: FactorVariant::Net,
            band: "x".into(),
            dates: dates(10),
            values: vec![0.5; 10],
            legs: None,
        };
        let s = factor_stats(&constant).unwrap();
        assert_eq!(s.ann_sd, 0.0);
        assert!(s.skewness.is_none() && s.kurtosis.is_none());

        let mut rng = crate::rng::substream(8, &["factor-stats"], &[]);
        let normal = rand_distr::Normal::new(0.0, 1.0).unwrap();
        let sim = FactorSeries {
            variant: FactorVariant::Net,
            band: "x".into(),
            dates: dates(20_000),
            values: (0..20_000).map(|_| normal.sample(&mut rng)).collect(),
            legs: None,
        };
        let s = factor_stats(&sim).unwrap();
        assert_abs_diff_eq!(s.ann_sd, 252.0f64.sqrt(), epsilon = 0.25);
        assert_abs_diff_eq!(s.kurtosis.unwrap(), 3.0, epsilon = 0.2);
    }

    #[test]
    fn equal_sizes_collapse_value_and_equal_weighting() {
        let n = 8;
        let t = 5;
        let mut rng = crate::rng::substream(17, &["factor-weights"], &[]);
        let normal = rand_distr::Normal::new(0.0, 0.02).unwrap();
        let rets =
            panel((0..t).map(|_| (0..n).map(|_| normal.sample(&mut rng)).collect()).collect());
        let sizes = panel(vec![vec![3.0; n]; t]);
        let conns =
            panel((0..t).map(|_| (0..n).map(|_| normal.sample(&mut rng)).collect()).collect());
        let value = factor_legs(&rets, &sizes, &conns, &SortSpec::default()).unwrap();
        let equal = factor_legs(
            &rets,
            &sizes,
            &conns,
            &SortSpec { weighting: Weighting::Equal, ..SortSpec::default() },
        )
        .unwrap();
        for (a, b) in value.legs.iter().zip(&equal.legs) {
            assert_abs_diff_eq!(a.from_small, b.from_small, epsilon = 1e-12);
            assert_abs_diff_eq!(a.to_big, b.to_big, epsilon = 1e-12);
        }
    }

    #[test]
    fn rebalance_periods_monthly_picks_month_starts() {
        let ds = dates(70);
        let firsts = rebalance_periods(&ds, Rebalance::Monthly);
        assert_eq!(firsts.len(), 3); // Jan, Feb, Mar of 2020
        assert_eq!(ds[firsts[0]].month(), 1);
        assert_eq!(ds[firsts[1]].month(), 2);
        assert_eq!(ds[firsts[2]].month(), 3);
        assert_eq!(rebalance_periods(&ds, Rebalance::Daily).len(), 70);
    }
}
