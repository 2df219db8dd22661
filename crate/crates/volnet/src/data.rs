//! Intraday price ingestion and daily panel construction.
//!
//! Raw tick files are snapped onto a regular intraday grid (5-minute spacing
//! by default), converted to log prices, and reduced to daily return and
//! realized-volatility panels:
//!
//! ```text
//! R_t  = Σ_{i=1..D} (p_{t,i} - p_{t,i-1})            (telescopes to close - open)
//! RV_t = sqrt( Σ_{i=1..D} (p_{t,i} - p_{t,i-1})² )
//! ```
//!
//! where `D` is the number of intraday intervals per day. Cells with more
//! than a configurable fraction of missing grid points are flagged and can be
//! dropped by [`align_panel`] to produce the balanced panel the estimator
//! needs.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column map and grid settings for [`ingest_intraday`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestConfig {
    pub date_column: String,
    pub time_column: String,
    pub asset_column: String,
    pub price_column: String,
    /// Intraday grid spacing in minutes.
    pub grid_minutes: u32,
    /// Convert raw prices to natural logs (realized-volatility convention).
    pub take_logs: bool,
    /// Maximum fraction of missing grid points per (day, asset) before the
    /// cell is flagged for exclusion.
    pub max_missing: f64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            date_column: "date".into(),
            time_column: "time".into(),
            asset_column: "asset".into(),
            price_column: "price".into(),
            grid_minutes: 5,
            take_logs: true,
            max_missing: 0.2,
        }
    }
}

/// Intraday (log-)price levels on a regular grid, one row per (day, asset).
#[derive(Debug, Clone)]
pub struct PricePanel {
    pub asset_ids: Vec<String>,
    pub days: Vec<NaiveDate>,
    /// `prices[t][a]` holds the D+1 grid levels, or `None` for excluded cells.
    prices: Vec<Vec<Option<Vec<f64>>>>,
    /// Number of intraday intervals D (grid length is D+1).
    pub intraday_intervals: usize,
    pub log_prices: bool,
}

impl PricePanel {
    /// Build a panel from pre-gridded rows. Every present cell must have the
    /// same grid length; dates must be strictly increasing and asset ids unique.
    pub fn from_grid(
        asset_ids: Vec<String>,
        days: Vec<NaiveDate>,
        prices: Vec<Vec<Option<Vec<f64>>>>,
        log_prices: bool,
    ) -> Result<Self> {
        let unique: BTreeSet<&String> = asset_ids.iter().collect();
        if unique.len() != asset_ids.len() {
            return Err(Error::Alignment("duplicate asset ids".into()));
        }
        if days.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Alignment("dates not strictly increasing".into()));
        }
        if prices.len() != days.len() || prices.iter().any(|row| row.len() != asset_ids.len()) {
            return Err(Error::Alignment("price grid shape mismatch".into()));
        }
        let mut grid_len = None;
        for row in &prices {
            for cell in row.iter().flatten() {
                match grid_len {
                    None => grid_len = Some(cell.len()),
                    Some(n) if n != cell.len() => {
                        return Err(Error::Alignment(format!(
                            "intraday grid length mismatch: {} vs {}",
                            n,
                            cell.len()
                        )))
                    }
                    _ => {}
                }
            }
        }
        let grid_len = grid_len.ok_or_else(|| Error::Alignment("empty price panel".into()))?;
        if grid_len < 2 {
            return Err(Error::Alignment("intraday grid needs at least 2 points".into()));
        }
        Ok(Self { asset_ids, days, prices, intraday_intervals: grid_len - 1, log_prices })
    }

    pub fn n_assets(&self) -> usize {
        self.asset_ids.len()
    }

    pub fn n_days(&self) -> usize {
        self.days.len()
    }

    pub fn cell(&self, day: usize, asset: usize) -> Option<&[f64]> {
        self.prices[day][asset].as_deref()
    }

    /// Daily close levels in raw price units (inverts the log transform),
    /// used downstream as the size metric for portfolio sorts.
    pub fn close_levels(&self) -> DailyPanel {
        let values = self
            .prices
            .iter()
            .map(|row| {
                row.iter()
                    .map(|cell| {
                        cell.as_ref().map(|g| {
                            let close = *g.last().expect("grid non-empty");
                            if self.log_prices {
                                close.exp()
                            } else {
                                close
                            }
                        })
                    })
                    .collect()
            })
            .collect();
        DailyPanel { asset_ids: self.asset_ids.clone(), dates: self.days.clone(), values }
    }
}

/// A daily (date × asset) panel of scalar observations with optional gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyPanel {
    pub asset_ids: Vec<String>,
    pub dates: Vec<NaiveDate>,
    /// `values[t][a]`, `None` marking a missing cell.
    pub values: Vec<Vec<Option<f64>>>,
}

impl DailyPanel {
    pub fn new(
        asset_ids: Vec<String>,
        dates: Vec<NaiveDate>,
        values: Vec<Vec<Option<f64>>>,
    ) -> Result<Self> {
        if values.len() != dates.len() || values.iter().any(|r| r.len() != asset_ids.len()) {
            return Err(Error::Alignment("panel shape mismatch".into()));
        }
        Ok(Self { asset_ids, dates, values })
    }

    pub fn n_assets(&self) -> usize {
        self.asset_ids.len()
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn is_balanced(&self) -> bool {
        self.values.iter().all(|row| row.iter().all(Option::is_some))
    }

    /// Dense T×N matrix view; errors if any cell is missing.
    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        let (t, n) = (self.n_dates(), self.n_assets());
        let mut m = DMatrix::zeros(t, n);
        for (i, row) in self.values.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                m[(i, j)] = v.ok_or_else(|| {
                    Error::Alignment(format!(
                        "missing cell ({}, {}); align the panel first",
                        self.dates[i], self.asset_ids[j]
                    ))
                })?;
            }
        }
        Ok(m)
    }

    /// Write as CSV with an ISO `date` column followed by one column per asset.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["date".to_string()];
        header.extend(self.asset_ids.iter().cloned());
        w.write_record(&header)?;
        for (i, date) in self.dates.iter().enumerate() {
            let mut rec = vec![date.format("%Y-%m-%d").to_string()];
            for v in &self.values[i] {
                rec.push(match v {
                    Some(x) => format!("{x:.17e}"),
                    None => String::new(),
                });
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read a panel written by [`DailyPanel::write_csv`].
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let headers = r.headers()?.clone();
        if headers.is_empty() || &headers[0] != "date" {
            return Err(Error::Parse { line: 1, msg: "expected leading `date` column".into() });
        }
        let asset_ids: Vec<String> = headers.iter().skip(1).map(String::from).collect();
        let mut dates = Vec::new();
        let mut values = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let line = i + 2;
            let rec = rec?;
            let date = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d")
                .map_err(|e| Error::Parse { line, msg: format!("bad date `{}`: {e}", &rec[0]) })?;
            let mut row = Vec::with_capacity(asset_ids.len());
            for field in rec.iter().skip(1) {
                if field.is_empty() {
                    row.push(None);
                } else {
                    let v: f64 = field.parse().map_err(|_| Error::Parse {
                        line,
                        msg: format!("non-numeric value `{field}`"),
                    })?;
                    row.push(Some(v));
                }
            }
            dates.push(date);
            values.push(row);
        }
        Self::new(asset_ids, dates, values)
    }
}

/// Daily returns aligned with the source [`PricePanel`].
pub type ReturnPanel = DailyPanel;
/// Daily realized volatilities aligned with the source [`PricePanel`].
pub type VolatilityPanel = DailyPanel;

/// How [`align_panel`] restores balance when cells are missing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlignPolicy {
    /// Drop every asset that has at least one missing date.
    DropAsset,
    /// Drop every date that has at least one missing asset.
    DropDate,
    /// Error unless the panel is already balanced.
    RequireFull,
}

/// Record of what [`align_panel`] kept and dropped.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PanelAlignment {
    pub kept_assets: Vec<String>,
    pub kept_dates: Vec<NaiveDate>,
    /// Cells of the input panel that were missing, as (date, asset) pairs.
    pub missing_cells: Vec<(NaiveDate, String)>,
}

/// Parse an intraday tick file onto a regular grid.
///
/// Expected columns (names configurable): date `YYYY-MM-DD`, time `HH:MM` or
/// `HH:MM:SS`, asset id, strictly positive price. Timestamps snap to the
/// nearest grid point of the session implied by the file's earliest and
/// latest snapped times; when several ticks hit one grid point the last one
/// in file order wins. Cells missing more than `max_missing` of their grid
/// points are excluded; smaller gaps are filled by carrying the last
/// observation forward (leading gaps take the first observation).
pub fn ingest_intraday(path: &Path, cfg: &IngestConfig) -> Result<PricePanel> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            line: 1,
            msg: format!("missing column `{name}`"),
        })
    };
    let (c_date, c_time, c_asset, c_price) = (
        col(&cfg.date_column)?,
        col(&cfg.time_column)?,
        col(&cfg.asset_column)?,
        col(&cfg.price_column)?,
    );
    if cfg.grid_minutes == 0 {
        return Err(Error::parameter("grid_minutes", "must be positive"));
    }

    struct Tick {
        day: NaiveDate,
        secs: u32,
        asset: String,
        price: f64,
    }
    let mut ticks = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2; // header is line 1
        let rec = rec?;
        let day = NaiveDate::parse_from_str(&rec[c_date], "%Y-%m-%d")
            .map_err(|e| Error::Parse { line, msg: format!("bad date `{}`: {e}", &rec[c_date]) })?;
        let secs = parse_time_secs(&rec[c_time])
            .ok_or_else(|| Error::Parse { line, msg: format!("bad time `{}`", &rec[c_time]) })?;
        let price: f64 = rec[c_price].parse().map_err(|_| Error::Parse {
            line,
            msg: format!("non-numeric price `{}`", &rec[c_price]),
        })?;
        if !(price.is_finite() && price > 0.0) {
            return Err(Error::Parse { line, msg: format!("non-positive price `{price}`") });
        }
        ticks.push(Tick { day, secs, asset: rec[c_asset].to_string(), price });
    }
    if ticks.is_empty() {
        return Err(Error::Parse { line: 1, msg: "file contains no data rows".into() });
    }

    // Session bounds from the whole file, snapped to the grid.
    let step = cfg.grid_minutes * 60;
    let snap = |secs: u32| -> i64 { ((secs as f64) / (step as f64)).round() as i64 };
    let open_slot = ticks.iter().map(|t| snap(t.secs)).min().expect("nonempty");
    let close_slot = ticks.iter().map(|t| snap(t.secs)).max().expect("nonempty");
    let grid_len = (close_slot - open_slot + 1) as usize;
    if grid_len < 2 {
        return Err(Error::Alignment(
            "intraday session collapses to a single grid point; use a finer grid".into(),
        ));
    }

    let days: Vec<NaiveDate> = ticks.iter().map(|t| t.day).collect::<BTreeSet<_>>().into_iter().collect();
    let assets: Vec<String> =
        ticks.iter().map(|t| t.asset.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let day_ix: BTreeMap<NaiveDate, usize> = days.iter().enumerate().map(|(i, d)| (*d, i)).collect();
    let asset_ix: BTreeMap<&str, usize> =
        assets.iter().enumerate().map(|(i, a)| (a.as_str(), i)).collect();

    // Last tick per grid slot wins (file order).
    let mut cells: Vec<Vec<Vec<Option<f64>>>> =
        vec![vec![vec![None; grid_len]; assets.len()]; days.len()];
    for t in &ticks {
        let slot = (snap(t.secs) - open_slot) as usize;
        cells[day_ix[&t.day]][asset_ix[t.asset.as_str()]][slot] = Some(t.price);
    }

    let mut prices: Vec<Vec<Option<Vec<f64>>>> = Vec::with_capacity(days.len());
    for day_cells in cells {
        let mut row = Vec::with_capacity(assets.len());
        for grid in day_cells {
            let missing = grid.iter().filter(|v| v.is_none()).count();
            if missing as f64 > cfg.max_missing * grid_len as f64 {
                row.push(None);
                continue;
            }
            // Forward fill, then back-fill the leading gap.
            let mut filled = Vec::with_capacity(grid_len);
            let mut last = None;
            for v in &grid {
                if v.is_some() {
                    last = *v;
                }
                filled.push(last);
            }
            let first = grid.iter().flatten().next().copied();
            let filled: Vec<f64> = filled
                .into_iter()
                .map(|v| v.or(first).expect("cell has at least one tick"))
                .map(|p| if cfg.take_logs { p.ln() } else { p })
                .collect();
            row.push(Some(filled));
        }
        prices.push(row);
    }

    PricePanel::from_grid(assets, days, prices, cfg.take_logs)
}

fn parse_time_secs(s: &str) -> Option<u32> {
    let mut parts = s.split(':');
    let h: u32 = parts.next()?.parse().ok()?;
    let m: u32 = parts.next()?.parse().ok()?;
    let sec: u32 = match parts.next() {
        Some(p) => p.parse().ok()?,
        None => 0,
    };
    if h > 23 || m > 59 || sec > 59 || parts.next().is_some() {
        return None;
    }
    Some(h * 3600 + m * 60 + sec)
}

/// Daily returns: the telescoping sum of intraday log-price differences.
pub fn daily_returns(panel: &PricePanel) -> ReturnPanel {
    reduce_intraday(panel, |grid| grid.windows(2).map(|w| w[1] - w[0]).sum())
}

/// Daily realized volatility: the root of summed squared intraday differences.
pub fn realized_volatility(panel: &PricePanel) -> VolatilityPanel {
    reduce_intraday(panel, |grid| {
        grid.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>().sqrt()
    })
}

fn reduce_intraday(panel: &PricePanel, f: impl Fn(&[f64]) -> f64) -> DailyPanel {
    let values = (0..panel.n_days())
        .map(|t| (0..panel.n_assets()).map(|a| panel.cell(t, a).map(&f)).collect())
        .collect();
    DailyPanel { asset_ids: panel.asset_ids.clone(), dates: panel.days.clone(), values }
}

/// Restore balance under the given policy and report what was dropped.
pub fn align_panel(panel: &DailyPanel, policy: AlignPolicy) -> Result<(DailyPanel, PanelAlignment)> {
    let missing_cells: Vec<(NaiveDate, String)> = panel
        .values
        .iter()
        .enumerate()
        .flat_map(|(t, row)| {
            row.iter().enumerate().filter(|(_, v)| v.is_none()).map(move |(a, _)| (t, a))
        })
        .map(|(t, a)| (panel.dates[t], panel.asset_ids[a].clone()))
        .collect();

    let (keep_asset, keep_date): (Vec<bool>, Vec<bool>) = match policy {
        AlignPolicy::RequireFull => {
            if !missing_cells.is_empty() {
                return Err(Error::Alignment(format!(
                    "panel has {} missing cells under require-full policy",
                    missing_cells.len()
                )));
            }
            (vec![true; panel.n_assets()], vec![true; panel.n_dates()])
        }
        AlignPolicy::DropAsset => {
            let keep: Vec<bool> = (0..panel.n_assets())
                .map(|a| panel.values.iter().all(|row| row[a].is_some()))
                .collect();
            (keep, vec![true; panel.n_dates()])
        }
        AlignPolicy::DropDate => {
            let keep: Vec<bool> =
                panel.values.iter().map(|row| row.iter().all(Option::is_some)).collect();
            (vec![true; panel.n_assets()], keep)
        }
    };

    let kept_assets: Vec<String> = panel
        .asset_ids
        .iter()
        .zip(&keep_asset)
        .filter(|(_, k)| **k)
        .map(|(a, _)| a.clone())
        .collect();
    let kept_dates: Vec<NaiveDate> =
        panel.dates.iter().zip(&keep_date).filter(|(_, k)| **k).map(|(d, _)| *d).collect();
    if kept_assets.is_empty() || kept_dates.is_empty() {
        return Err(Error::Alignment("no balanced panel under policy".into()));
    }
    let values: Vec<Vec<Option<f64>>> = panel
        .values
        .iter()
        .zip(&keep_date)
        .filter(|(_, k)| **k)
        .map(|(row, _)| {
            row.iter().zip(&keep_asset).filter(|(_, k)| **k).map(|(v, _)| *v).collect()
        })
        .collect();
    let out = DailyPanel { asset_ids: kept_assets.clone(), dates: kept_dates.clone(), values };
    debug_assert!(out.is_balanced());
    Ok((out, PanelAlignment { kept_assets, kept_dates, missing_cells }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::RngExt;
    use std::io::Write;

    fn date(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn grid_panel(cells: Vec<Vec<Option<Vec<f64>>>>) -> PricePanel {
        let n_assets = cells[0].len();
        let assets = (0..n_assets).map(|i| format!("A{i}")).collect();
        let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let days = (0..cells.len() as i64)
            .map(|d| start + chrono::Duration::days(d))
            .collect();
        PricePanel::from_grid(assets, days, cells, true).unwrap()
    }

    fn write_csv(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn ingest_clean_two_by_two() {
        let f = write_csv(
            "date,time,asset,price\n\
             2020-01-02,09:30,AAA,10.0\n\
             2020-01-02,09:35,AAA,10.1\n\
             2020-01-02,09:40,AAA,10.2\n\
             2020-01-02,09:30,BBB,20.0\n\
             2020-01-02,09:35,BBB,20.1\n\
             2020-01-02,09:40,BBB,20.2\n\
             2020-01-03,09:30,AAA,10.3\n\
             2020-01-03,09:35,AAA,10.4\n\
             2020-01-03,09:40,AAA,10.5\n\
             2020-01-03,09:30,BBB,20.3\n\
             2020-01-03,09:35,BBB,20.4\n\
             2020-01-03,09:40,BBB,20.5\n",
        );
        let p = ingest_intraday(f.path(), &IngestConfig::default()).unwrap();
        assert_eq!(p.intraday_intervals, 2);
        assert_eq!(p.n_days(), 2);
        assert_eq!(p.asset_ids, vec!["AAA", "BBB"]);
        assert_abs_diff_eq!(p.cell(0, 0).unwrap()[0], 10.0f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn ingest_reports_bad_row() {
        let f = write_csv(
            "date,time,asset,price\n\
             2020-01-02,09:30,AAA,10.0\n\
             2020-01-02,09:35,AAA,oops\n",
        );
        let err = ingest_intraday(f.path(), &IngestConfig::default()).unwrap_err();
        match err {
            Error::Parse { line, msg } => {
                assert_eq!(line, 3);
                assert!(msg.contains("oops"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn ingest_duplicate_grid_hit_keeps_last() {
        let f = write_csv(
            "date,time,asset,price\n\
             2020-01-02,09:30,AAA,10.0\n\
             2020-01-02,09:35,AAA,11.0\n\
             2020-01-02,09:36,AAA,12.0\n\
             2020-01-02,09:40,AAA,13.0\n",
        );
        let p = ingest_intraday(f.path(), &IngestConfig::default()).unwrap();
        // 09:36 snaps onto the 09:35 slot and overwrites it.
        assert_eq!(p.intraday_intervals, 2);
        assert_abs_diff_eq!(p.cell(0, 0).unwrap()[1], 12.0f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn ingest_excludes_sparse_cell() {
        // BBB has 1 of 7 grid points on day one: flagged out.
        let mut rows = String::from("date,time,asset,price\n");
        for i in 0..7u32 {
            let mins = 30 + 5 * i;
            rows.push_str(&format!("2020-01-02,{:02}:{:02},AAA,10.0\n", 9 + mins / 60, mins % 60));
        }
        rows.push_str("2020-01-02,09:30,BBB,20.0\n");
        let f = write_csv(&rows);
        let p = ingest_intraday(f.path(), &IngestConfig::default()).unwrap();
        assert!(p.cell(0, 0).is_some());
        assert!(p.cell(0, 1).is_none());
    }

    #[test]
    fn returns_constant_path_is_zero() {
        let p = grid_panel(vec![vec![Some(vec![1.5, 1.5, 1.5])]]);
        let r = daily_returns(&p);
        assert_eq!(r.values[0][0], Some(0.0));
    }

    #[test]
    fn returns_telescope() {
        let p = grid_panel(vec![vec![Some(vec![0.0, 0.01, 0.03])]]);
        let r = daily_returns(&p);
        assert_abs_diff_eq!(r.values[0][0].unwrap(), 0.03, epsilon = 1e-15);

        let mut rng = crate::rng::substream(1, &["data-test"], &[]);
        let path: Vec<f64> = (0..5).map(|_| rng.random::<f64>()).collect();
        let p = grid_panel(vec![vec![Some(path.clone())]]);
        let r = daily_returns(&p);
        assert_abs_diff_eq!(
            r.values[0][0].unwrap(),
            path[4] - path[0],
            epsilon = 1e-12
        );
    }

    #[test]
    fn rv_examples() {
        let p = grid_panel(vec![vec![Some(vec![2.0, 2.0, 2.0])]]);
        assert_eq!(realized_volatility(&p).values[0][0], Some(0.0));

        let p = grid_panel(vec![vec![Some(vec![1.0, 1.01, 1.0])]]);
        assert_abs_diff_eq!(
            realized_volatility(&p).values[0][0].unwrap(),
            2.0f64.sqrt() * 0.01,
            epsilon = 1e-15
        );
    }

    #[test]
    fn rv_squared_unbiased_for_brownian_day() {
        // One asset, many days of a random walk with known step variance:
        // the mean of rv² estimates D·σ².
        let sigma = 0.01;
        let d = 20;
        let n_days = 4000;
        let mut rng = crate::rng::substream(2, &["data-test-brownian"], &[]);
        let normal = rand_distr::Normal::new(0.0, sigma).unwrap();
        let mut cells = Vec::new();
        for _ in 0..n_days {
            let mut path = vec![0.0];
            for _ in 0..d {
                let step: f64 = rand_distr::Distribution::sample(&normal, &mut rng);
                path.push(path.last().unwrap() + step);
            }
            cells.push(vec![Some(path)]);
        }
        let p = grid_panel(cells);
        let rv = realized_volatility(&p);
        let mean_rv2: f64 =
            rv.values.iter().map(|r| r[0].unwrap().powi(2)).sum::<f64>() / n_days as f64;
        let truth = d as f64 * sigma * sigma;
        // se of the mean of rv² is sqrt(2/D)·truth/sqrt(n).
        let se = (2.0 / d as f64).sqrt() * truth / (n_days as f64).sqrt();
        assert!((mean_rv2 - truth).abs() < 3.0 * se, "{mean_rv2} vs {truth}");
    }

    #[test]
    fn rv_invariant_to_level_shift() {
        let path = vec![0.0, 0.02, -0.01, 0.03];
        let shifted: Vec<f64> = path.iter().map(|p| p + 5.0).collect();
        let a = realized_volatility(&grid_panel(vec![vec![Some(path)]]));
        let b = realized_volatility(&grid_panel(vec![vec![Some(shifted)]]));
        assert_abs_diff_eq!(
            a.values[0][0].unwrap(),
            b.values[0][0].unwrap(),
            epsilon = 1e-12
        );
    }

    fn panel_3x3_with_gaps() -> DailyPanel {
        // Missing: (day0, A1) and (day2, A2).
        DailyPanel::new(
            vec!["A0".into(), "A1".into(), "A2".into()],
            vec![date("2020-01-01"), date("2020-01-02"), date("2020-01-03")],
            vec![
                vec![Some(1.0), None, Some(3.0)],
                vec![Some(4.0), Some(5.0), Some(6.0)],
                vec![Some(7.0), Some(8.0), None],
            ],
        )
        .unwrap()
    }

    #[test]
    fn align_full_panel_is_identity() {
        let p = DailyPanel::new(
            vec!["A".into()],
            vec![date("2020-01-01")],
            vec![vec![Some(1.0)]],
        )
        .unwrap();
        let (out, rep) = align_panel(&p, AlignPolicy::RequireFull).unwrap();
        assert_eq!(out, p);
        assert!(rep.missing_cells.is_empty());
    }

    #[test]
    fn align_drop_asset() {
        let p = panel_3x3_with_gaps();
        let (out, rep) = align_panel(&p, AlignPolicy::DropAsset).unwrap();
        assert_eq!(out.asset_ids, vec!["A0"]);
        assert_eq!(out.n_dates(), 3);
        assert_eq!(rep.missing_cells.len(), 2);
    }

    #[test]
    fn align_drop_date_enumerated() {
        let p = panel_3x3_with_gaps();
        let (out, _) = align_panel(&p, AlignPolicy::DropDate).unwrap();
        // Days 0 and 2 each have a gap; only day 1 survives.
        assert_eq!(out.dates, vec![date("2020-01-02")]);
        assert_eq!(out.values, vec![vec![Some(4.0), Some(5.0), Some(6.0)]]);
    }

    #[test]
    fn align_is_idempotent() {
        let p = panel_3x3_with_gaps();
        for policy in [AlignPolicy::DropAsset, AlignPolicy::DropDate] {
            let (once, _) = align_panel(&p, policy).unwrap();
            let (twice, rep) = align_panel(&once, policy).unwrap();
            assert_eq!(once, twice);
            assert!(rep.missing_cells.is_empty());
        }
    }

    #[test]
    fn align_empty_result_errors() {
        let p = DailyPanel::new(
            vec!["A".into(), "B".into()],
            vec![date("2020-01-01"), date("2020-01-02")],
            vec![vec![Some(1.0), None], vec![None, Some(2.0)]],
        )
        .unwrap();
        assert!(align_panel(&p, AlignPolicy::DropAsset).is_err());
        assert!(align_panel(&p, AlignPolicy::RequireFull).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let p = panel_3x3_with_gaps();
        let f = tempfile::NamedTempFile::new().unwrap();
        p.write_csv(f.path()).unwrap();
        let q = DailyPanel::read_csv(f.path()).unwrap();
        assert_eq!(p, q);
    }
}
