//! Horizon-specific variance-decomposition adjacency matrices.
//!
//! A coefficient draw is first truncated to VMA form,
//! `Ψ(u,0) = I`, `Ψ(u,h) = Σ_{ℓ≤min(h,p)} Φ_ℓ(u)·Ψ(u,h−ℓ)`, then turned into
//! a generalized forecast-error variance decomposition. Two routes exist and
//! must agree:
//!
//! ```text
//! time domain:  θ(u,∞)[j,k] = σ_kk⁻¹ Σ_h ([Ψ(u,h)Σ]_{j,k})²
//!                             ─────────────────────────────
//!                             Σ_h [Ψ(u,h)ΣΨ'(u,h)]_{j,j}
//!
//! band (a,b]:   θ(u,d)[j,k] = σ_kk⁻¹ ∫_d |[Ψ(e^{−iω})Σ]_{j,k}|² dω
//!                             ───────────────────────────────────
//!                             ∫_{−π}^{π} [Ψ(e^{−iω})ΣΨ(e^{iω})']_{j,j} dω
//! ```
//!
//! Frequencies live on a uniform midpoint grid over `(0, π]` with negative
//! frequencies folded in analytically (the VMA spectrum is symmetric). The
//! midpoint grid makes the folded rule an equally spaced quadrature on the
//! full circle, which integrates trigonometric polynomials of degree < 2·n_freq
//! exactly — so the full-band integral reproduces the time-domain sum to
//! rounding error, and bands over a partition add up exactly.

use nalgebra::DMatrix;
use num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::qbll::CoefficientDraw;

/// Truncated moving-average representation of one coefficient draw.
#[derive(Debug, Clone)]
pub struct VmaCoefficients {
    /// `psi[h]` for `h = 0..=horizon`; `psi[0]` is the identity.
    pub psi: Vec<DMatrix<f64>>,
    /// Rescaled time u carried over from the draw.
    pub u: f64,
}

impl VmaCoefficients {
    pub fn horizon(&self) -> usize {
        self.psi.len() - 1
    }

    pub fn n_assets(&self) -> usize {
        self.psi[0].nrows()
    }
}

/// Label attached to a frequency band.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandLabel {
    Short,
    Long,
    Aggregate,
    Custom(String),
}

impl std::fmt::Display for BandLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BandLabel::Short => write!(f, "short"),
            BandLabel::Long => write!(f, "long"),
            BandLabel::Aggregate => write!(f, "aggregate"),
            BandLabel::Custom(s) => write!(f, "{s}"),
        }
    }
}

/// Half-open band of angular frequencies `(low, high]` on `(0, π]`.
///
/// Negative frequencies are handled by conjugate symmetry, so a band carries
/// the spectral content of `(low, high] ∪ [−high, −low)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyBand {
    pub low: f64,
    pub high: f64,
    pub label: BandLabel,
}

impl FrequencyBand {
    pub fn new(low: f64, high: f64, label: BandLabel) -> Result<Self> {
        if !(low >= 0.0 && low < high && high <= PI + 1e-12) {
            return Err(Error::parameter(
                "band",
                format!("need 0 ≤ low < high ≤ π, got ({low}, {high}]"),
            ));
        }
        Ok(FrequencyBand { low, high: high.min(PI), label })
    }

    /// The full positive half-line `(0, π]`.
    pub fn aggregate() -> Self {
        FrequencyBand { low: 0.0, high: PI, label: BandLabel::Aggregate }
    }

    /// 1-day to 1-week horizons for daily data (5-trading-day week).
    pub fn short_term() -> Self {
        FrequencyBand { low: 2.0 * PI / 5.0, high: PI, label: BandLabel::Short }
    }

    /// Beyond one week for daily data.
    pub fn long_term() -> Self {
        FrequencyBand { low: 0.0, high: 2.0 * PI / 5.0, label: BandLabel::Long }
    }

    pub fn with_label(mut self, label: BandLabel) -> Self {
        self.label = label;
        self
    }

    pub fn contains(&self, omega: f64) -> bool {
        omega > self.low && omega <= self.high
    }

    /// Width of the band on the positive half-line.
    pub fn width(&self) -> f64 {
        self.high - self.low
    }
}

/// Map a horizon in days, `period_low < period ≤ period_high`, to the band
/// `(2π/period_high, min(2π/period_low, π)]`. Pass `f64::INFINITY` for an
/// unbounded upper horizon; the short end clamps at the Nyquist frequency π.
pub fn band_from_days(period_low_days: f64, period_high_days: f64) -> Result<FrequencyBand> {
    if !(period_low_days >= 1.0) {
        return Err(Error::parameter("period_low_days", "must be at least 1 day"));
    }
    if !(period_high_days > period_low_days) {
        return Err(Error::parameter(
            "period_high_days",
            format!("must exceed period_low_days = {period_low_days}"),
        ));
    }
    let low = if period_high_days.is_infinite() { 0.0 } else { 2.0 * PI / period_high_days };
    let high = (2.0 * PI / period_low_days).min(PI);
    FrequencyBand::new(
        low,
        high,
        BandLabel::Custom(format!("{period_low_days}-{period_high_days}d")),
    )
}

/// One draw's directed adjacency matrix at a band: unnormalized θ(u,d) and,
/// after [`normalize_adjacency`], the row-normalized θ̃(u,d).
#[derive(Debug, Clone)]
pub struct AdjacencyTensor {
    pub theta: DMatrix<f64>,
    pub theta_tilde: Option<DMatrix<f64>>,
    pub band: FrequencyBand,
    pub u: f64,
    pub draw_id: usize,
}

impl AdjacencyTensor {
    /// The normalized matrix; errors if [`normalize_adjacency`] has not run.
    pub fn normalized(&self) -> Result<&DMatrix<f64>> {
        self.theta_tilde
            .as_ref()
            .ok_or_else(|| Error::numerical("adjacency", "tensor not yet normalized"))
    }
}

/// Iterate the companion recursion at frozen rescaled time.
pub fn var_to_vma(draw: &CoefficientDraw, horizon: usize) -> Result<VmaCoefficients> {
    if horizon < 1 {
        return Err(Error::parameter("horizon", "must be at least 1"));
    }
    let n = draw.n_assets();
    let p = draw.lags();
    let mut psi: Vec<DMatrix<f64>> = Vec::with_capacity(horizon + 1);
    psi.push(DMatrix::identity(n, n));
    for h in 1..=horizon {
        let mut m = DMatrix::zeros(n, n);
        for l in 1..=p.min(h) {
            m += &draw.phi[l - 1] * &psi[h - l];
        }
        psi.push(m);
    }
    Ok(VmaCoefficients { psi, u: draw.u })
}

/// Zero the off-diagonal covariance entries, keeping only own variances, so
/// the decomposition reflects causal propagation rather than contemporaneous
/// correlation.
pub fn diagonalize_sigma(draw: &CoefficientDraw) -> Result<CoefficientDraw> {
    let n = draw.n_assets();
    let mut sigma = DMatrix::zeros(n, n);
    for i in 0..n {
        let v = draw.sigma[(i, i)];
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::numerical(
                "diagonalize_sigma",
                format!("non-positive variance {v} on diagonal entry {i}"),
            ));
        }
        sigma[(i, i)] = v;
    }
    Ok(CoefficientDraw { sigma, ..draw.clone() })
}

fn diagonal_of(sigma: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = sigma.nrows();
    if sigma.ncols() != n {
        return Err(Error::parameter("sigma", "must be square"));
    }
    let scale = (0..n).map(|i| sigma[(i, i)].abs()).fold(0.0f64, f64::max);
    for i in 0..n {
        for j in 0..n {
            if i != j && sigma[(i, j)].abs() > 1e-12 * scale.max(1e-300) {
                return Err(Error::parameter(
                    "sigma",
                    "must be diagonal; apply diagonalize_sigma first",
                ));
            }
        }
    }
    (0..n)
        .map(|i| {
            let v = sigma[(i, i)];
            if v.is_finite() && v > 0.0 {
                Ok(v)
            } else {
                Err(Error::numerical("gfevd", format!("non-positive variance for variable {i}")))
            }
        })
        .collect()
}

/// Aggregate (time-domain) GFEVD over the truncated horizon. This is the
/// oracle the full-band frequency route must reproduce.
pub fn gfevd_time_domain(vma: &VmaCoefficients, sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = vma.n_assets();
    let diag = diagonal_of(sigma)?;
    let mut num = DMatrix::zeros(n, n);
    let mut den = vec![0.0f64; n];
    for psi in &vma.psi {
        for j in 0..n {
            for k in 0..n {
                let contrib = diag[k] * psi[(j, k)] * psi[(j, k)];
                num[(j, k)] += contrib;
                den[j] += contrib;
            }
        }
    }
    let mut theta = DMatrix::zeros(n, n);
    for j in 0..n {
        if den[j] <= 0.0 {
            return Err(Error::numerical(
                "gfevd_time_domain",
                format!("degenerate variance for row {j}"),
            ));
        }
        for k in 0..n {
            theta[(j, k)] = num[(j, k)] / den[j];
        }
    }
    Ok(theta)
}

/// Band-limited GFEVD for a single band. When several bands of one draw are
/// needed, [`band_gfevd_batch`] shares the transfer-function pass.
pub fn band_gfevd(
    vma: &VmaCoefficients,
    sigma: &DMatrix<f64>,
    band: &FrequencyBand,
    n_freq: usize,
) -> Result<AdjacencyTensor> {
    let mut out = band_gfevd_batch(vma, sigma, std::slice::from_ref(band), n_freq)?;
    Ok(out.pop().expect("one band in, one tensor out"))
}

thread_local! {
    static FFT_PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Band-limited GFEVD for every band in `bands`, sharing one pass over the
/// frequency grid. Bands may overlap (e.g. a partition plus the aggregate).
pub fn band_gfevd_batch(
    vma: &VmaCoefficients,
    sigma: &DMatrix<f64>,
    bands: &[FrequencyBand],
    n_freq: usize,
) -> Result<Vec<AdjacencyTensor>> {
    if n_freq < 64 {
        return Err(Error::parameter("n_freq", "grid needs at least 64 points"));
    }
    let n = vma.n_assets();
    let diag = diagonal_of(sigma)?;
    let h_len = vma.psi.len();
    let m = 2 * n_freq;
    let delta = PI / n_freq as f64;

    // Bin i (0-based) sits at ω = (2i+1)π/M; each half-open band covers a
    // contiguous bin range [lo, hi).
    let bin_range = |band: &FrequencyBand| -> (usize, usize) {
        let first_above = |a: f64| -> usize {
            // Smallest i with (2i+1)π/M > a.
            let i = ((a * m as f64 / PI) - 1.0) / 2.0;
            if i < 0.0 {
                0
            } else {
                (i.floor() as usize + 1).min(n_freq)
            }
        };
        (first_above(band.low), first_above(band.high))
    };
    let ranges: Vec<(usize, usize)> = bands.iter().map(&bin_range).collect();

    // |T(ω_i)[j,k]|² accumulated as prefix sums over bins, per (j,k).
    let use_fft = h_len <= m;
    let fft: Option<Arc<dyn rustfft::Fft<f64>>> = if use_fft {
        Some(FFT_PLANNER.with(|p| p.borrow_mut().plan_fft_forward(m)))
    } else {
        None
    };
    let mut buf = vec![Complex::new(0.0, 0.0); m];
    let mut scratch = fft
        .as_ref()
        .map(|f| vec![Complex::new(0.0, 0.0); f.get_inplace_scratch_len()])
        .unwrap_or_default();
    // Half-bin twist so the DFT lands on the midpoint grid.
    let twist: Vec<Complex<f64>> =
        (0..h_len.min(m)).map(|h| Complex::from_polar(1.0, -(h as f64) * PI / m as f64)).collect();

    let mut num: Vec<DMatrix<f64>> = vec![DMatrix::zeros(n, n); bands.len()];
    let mut den = vec![0.0f64; n];
    let mut cum = vec![0.0f64; n_freq + 1];

    for j in 0..n {
        for k in 0..n {
            if let Some(fft) = &fft {
                for h in 0..m {
                    buf[h] = if h < h_len {
                        twist[h] * vma.psi[h][(j, k)]
                    } else {
                        Complex::new(0.0, 0.0)
                    };
                }
                fft.process_with_scratch(&mut buf, &mut scratch);
                cum[0] = 0.0;
                for i in 0..n_freq {
                    cum[i + 1] = cum[i] + buf[i].norm_sqr();
                }
            } else {
                // Truncation horizon exceeds the FFT length: direct evaluation.
                cum[0] = 0.0;
                for i in 0..n_freq {
                    let omega = (2 * i + 1) as f64 * PI / m as f64;
                    let z = Complex::from_polar(1.0, -omega);
                    let mut acc = Complex::new(0.0, 0.0);
                    for psi in vma.psi.iter().rev() {
                        acc = acc * z + psi[(j, k)];
                    }
                    cum[i + 1] = cum[i] + acc.norm_sqr();
                }
            }
            let total = cum[n_freq];
            den[j] += 2.0 * delta * diag[k] * total;
            for (b, &(lo, hi)) in ranges.iter().enumerate() {
                if hi > lo {
                    num[b][(j, k)] = 2.0 * delta * diag[k] * (cum[hi] - cum[lo]);
                }
            }
        }
    }

    bands
        .iter()
        .zip(num)
        .map(|(band, num_b)| {
            let mut theta = DMatrix::zeros(n, n);
            for j in 0..n {
                if den[j] <= 0.0 {
                    return Err(Error::numerical(
                        "band_gfevd",
                        format!("degenerate variance for row {j}"),
                    ));
                }
                for k in 0..n {
                    theta[(j, k)] = num_b[(j, k)] / den[j];
                }
            }
            Ok(AdjacencyTensor {
                theta,
                theta_tilde: None,
                band: band.clone(),
                u: vma.u,
                draw_id: 0,
            })
        })
        .collect()
}

/// Row-normalize a band tensor by the aggregate row sums:
/// `θ̃(u,d)[j,k] = θ(u,d)[j,k] / Σ_k θ(u,∞)[j,k]`.
pub fn normalize_adjacency(
    band_tensor: &AdjacencyTensor,
    aggregate: &AdjacencyTensor,
) -> Result<AdjacencyTensor> {
    let n = band_tensor.theta.nrows();
    if aggregate.theta.nrows() != n || aggregate.theta.ncols() != band_tensor.theta.ncols() {
        return Err(Error::parameter("aggregate", "dimension mismatch with band tensor"));
    }
    let mut tilde = band_tensor.theta.clone();
    for j in 0..n {
        let row_sum: f64 = aggregate.theta.row(j).iter().sum();
        if row_sum <= 0.0 {
            return Err(Error::numerical(
                "normalize_adjacency",
                format!("zero aggregate row sum for row {j}"),
            ));
        }
        for k in 0..n {
            tilde[(j, k)] /= row_sum;
        }
    }
    Ok(AdjacencyTensor { theta_tilde: Some(tilde), ..band_tensor.clone() })
}

#[cfg(test)]
pub(crate) fn random_stable_draw(n: usize, p: usize, radius: f64, seed: u64) -> CoefficientDraw {
    use rand::RngExt;
    use rand_distr::Distribution;
    let mut rng = crate::rng::substream(seed, &["spectral-test"], &[]);
    let normal = rand_distr::Normal::new(0.0, 1.0).unwrap();
    let mut phi: Vec<DMatrix<f64>> =
        (0..p).map(|_| DMatrix::from_fn(n, n, |_, _| normal.sample(&mut rng) * 0.4)).collect();
    let rho = crate::qbll::spectral_radius(&crate::qbll::companion_of(&phi));
    // Uniform rescale of the companion eigenvalues: Φ_ℓ ← Φ_ℓ·(r/ρ)^ℓ.
    for (l, m) in phi.iter_mut().enumerate() {
        *m *= (radius / rho).powi(l as i32 + 1);
    }
    let mut sigma = DMatrix::zeros(n, n);
    for i in 0..n {
        sigma[(i, i)] = 0.5 + rng.random::<f64>();
    }
    CoefficientDraw {
        phi,
        intercept: nalgebra::DVector::zeros(n),
        sigma,
        draw_id: 0,
        u: 0.5,
        stable: radius < 1.0,
    }
}
