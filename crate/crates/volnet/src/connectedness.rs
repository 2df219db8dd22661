//! Total and directional network connectedness from normalized adjacency
//! matrices, with posterior quantile summaries.
//!
//! For a draw's normalized band matrix θ̃(u,d) and aggregate θ̃(u,∞):
//!
//! ```text
//! C(u,d)      = 100 · Σ_{j≠k} θ̃(u,d)[j,k] / Σ_{j,k} θ̃(u,∞)[j,k]
//! FROM_j(u,d) = 100 · Σ_{k≠j} θ̃(u,d)[j,k] / Σ_{j,k} θ̃(u,∞)[j,k]
//! TO_j(u,d)   = 100 · Σ_{k≠j} θ̃(u,d)[k,j] / Σ_{j,k} θ̃(u,∞)[j,k]
//! NET_j       = TO_j − FROM_j
//! ```
//!
//! The shared full-matrix normalizer (which equals N for a normalized
//! aggregate) makes Σ_j FROM_j = Σ_j TO_j = C and Σ_j NET_j = 0.
//! Posterior uncertainty is reported as the median and 16th/84th percentiles
//! across draws, with linear interpolation between order statistics.

use chrono::NaiveDate;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::FrequencyBand;

/// Total connectedness of one draw, in percent.
pub fn total_connectedness(
    theta_tilde_band: &DMatrix<f64>,
    theta_tilde_aggregate: &DMatrix<f64>,
) -> Result<f64> {
    check_dims(theta_tilde_band, theta_tilde_aggregate)?;
    let n = theta_tilde_band.nrows();
    let mut off = 0.0;
    for j in 0..n {
        for k in 0..n {
            if j != k {
                off += theta_tilde_band[(j, k)];
            }
        }
    }
    Ok(100.0 * off / theta_tilde_aggregate.sum())
}

/// FROM connectedness of asset `j`: how much of its variance comes from
/// shocks elsewhere (row off-diagonals).
pub fn from_connectedness(
    theta_tilde_band: &DMatrix<f64>,
    theta_tilde_aggregate: &DMatrix<f64>,
    j: usize,
) -> Result<f64> {
    check_dims(theta_tilde_band, theta_tilde_aggregate)?;
    let n = theta_tilde_band.nrows();
    if j >= n {
        return Err(Error::parameter("j", format!("index {j} out of range for N={n}")));
    }
    let row_off: f64 =
        (0..n).filter(|&k| k != j).map(|k| theta_tilde_band[(j, k)]).sum();
    Ok(100.0 * row_off / theta_tilde_aggregate.sum())
}

/// TO connectedness of asset `j`: how much it transmits to the others
/// (column off-diagonals, same full-matrix normalizer as FROM).
pub fn to_connectedness(
    theta_tilde_band: &DMatrix<f64>,
    theta_tilde_aggregate: &DMatrix<f64>,
    j: usize,
) -> Result<f64> {
    check_dims(theta_tilde_band, theta_tilde_aggregate)?;
    let n = theta_tilde_band.nrows();
    if j >= n {
        return Err(Error::parameter("j", format!("index {j} out of range for N={n}")));
    }
    let col_off: f64 =
        (0..n).filter(|&k| k != j).map(|k| theta_tilde_band[(k, j)]).sum();
    Ok(100.0 * col_off / theta_tilde_aggregate.sum())
}

/// Net directional connectedness: transmission minus reception.
pub fn net_directional(to: f64, from: f64) -> f64 {
    to - from
}

fn check_dims(band: &DMatrix<f64>, aggregate: &DMatrix<f64>) -> Result<()> {
    if band.nrows() != band.ncols()
        || band.nrows() != aggregate.nrows()
        || band.ncols() != aggregate.ncols()
    {
        return Err(Error::parameter("theta", "band/aggregate dimension mismatch"));
    }
    Ok(())
}

/// All measures of one draw at one (time point, band).
#[derive(Debug, Clone)]
pub struct DrawMeasures {
    pub total: f64,
    pub from: Vec<f64>,
    pub to: Vec<f64>,
    pub net: Vec<f64>,
}

/// Compute total/TO/FROM/net for one draw in a single pass.
pub fn measures_for_draw(
    theta_tilde_band: &DMatrix<f64>,
    theta_tilde_aggregate: &DMatrix<f64>,
) -> Result<DrawMeasures> {
    check_dims(theta_tilde_band, theta_tilde_aggregate)?;
    let n = theta_tilde_band.nrows();
    let denom = theta_tilde_aggregate.sum();
    let mut from = vec![0.0; n];
    let mut to = vec![0.0; n];
    for j in 0..n {
        for k in 0..n {
            if j != k {
                from[j] += theta_tilde_band[(j, k)];
                to[k] += theta_tilde_band[(j, k)];
            }
        }
    }
    let total = 100.0 * from.iter().sum::<f64>() / denom;
    for v in from.iter_mut().chain(to.iter_mut()) {
        *v *= 100.0 / denom;
    }
    let net = to.iter().zip(&from).map(|(t, f)| t - f).collect();
    Ok(DrawMeasures { total, from, to, net })
}

/// Median and 16th/84th percentiles across posterior draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub p16: f64,
    pub median: f64,
    pub p84: f64,
}

/// Linear-interpolation quantile of a sample (between order statistics).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    debug_assert!(!values.is_empty() && (0.0..=1.0).contains(&q));
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("no NaNs in draws"));
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Summarize one scalar across draws.
pub fn summarize_draws(values: &[f64]) -> Result<Quantiles> {
    if values.len() < 2 {
        return Err(Error::parameter("draws", "need at least 2 draws to summarize"));
    }
    Ok(Quantiles {
        p16: quantile(values, 0.16),
        median: quantile(values, 0.50),
        p84: quantile(values, 0.84),
    })
}

/// One summarized (time point, band) entry.
#[derive(Debug, Clone)]
pub struct SummaryPoint {
    pub total: Quantiles,
    pub from: Vec<Quantiles>,
    pub to: Vec<Quantiles>,
    pub net: Vec<Quantiles>,
}

/// Summarize per-draw measures at one (time point, band).
pub fn summarize_measures(per_draw: &[DrawMeasures]) -> Result<SummaryPoint> {
    if per_draw.len() < 2 {
        return Err(Error::parameter("draws", "need at least 2 draws to summarize"));
    }
    let n = per_draw[0].from.len();
    let collect = |f: &dyn Fn(&DrawMeasures) -> f64| -> Vec<f64> {
        per_draw.iter().map(f).collect()
    };
    let total = summarize_draws(&collect(&|m| m.total))?;
    let mut from = Vec::with_capacity(n);
    let mut to = Vec::with_capacity(n);
    let mut net = Vec::with_capacity(n);
    for j in 0..n {
        from.push(summarize_draws(&collect(&|m| m.from[j]))?);
        to.push(summarize_draws(&collect(&|m| m.to[j]))?);
        net.push(summarize_draws(&collect(&|m| m.net[j]))?);
    }
    Ok(SummaryPoint { total, from, to, net })
}

/// Connectedness series for one band over the estimation grid.
#[derive(Debug, Clone)]
pub struct BandSeries {
    pub band: FrequencyBand,
    /// One entry per time point, aligned with [`ConnectednessSeries::dates`].
    pub points: Vec<SummaryPoint>,
}

/// Full set of summarized measures over time × band × asset.
#[derive(Debug, Clone)]
pub struct ConnectednessSeries {
    pub asset_ids: Vec<String>,
    pub time_indices: Vec<usize>,
    pub dates: Vec<Option<NaiveDate>>,
    pub bands: Vec<BandSeries>,
}

impl ConnectednessSeries {
    /// Per-asset posterior-median net connectedness of one band as a daily
    /// panel (input to the factor double sorts). Errors when dates are absent.
    pub fn median_net_panel(&self, band_index: usize) -> Result<crate::data::DailyPanel> {
        let band = self
            .bands
            .get(band_index)
            .ok_or_else(|| Error::parameter("band_index", "out of range"))?;
        let dates: Option<Vec<NaiveDate>> = self.dates.iter().copied().collect();
        let dates =
            dates.ok_or_else(|| Error::Alignment("series has no calendar dates".into()))?;
        let values = band
            .points
            .iter()
            .map(|p| p.net.iter().map(|q| Some(q.median)).collect())
            .collect();
        crate::data::DailyPanel::new(self.asset_ids.clone(), dates, values)
    }
}
