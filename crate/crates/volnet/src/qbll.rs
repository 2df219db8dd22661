//! Kernel-weighted quasi-Bayesian local-likelihood estimation of a locally
//! stationary TVP-VAR.
//!
//! At each target time index `k` the likelihood is reweighted with Gaussian
//! kernel weights
//!
//! ```text
//! w_kt = (1/√2π) · exp(−((k−t)/bandwidth)²/2)
//! ```
//!
//! and combined with a Minnesota Normal-Wishart prior, which keeps the
//! quasi-posterior analytic. With `A` the stacked regressor matrix, `Y` the
//! stacked dependent block and `D_k = diag(ϱ_k,p+1..ϱ_kT)`:
//!
//! ```text
//! Ξ̃_k = Ξ_0 + A'D_kA
//! B̃_k = Ξ̃_k⁻¹ (A'D_kY + Ξ_0 B_0)
//! α̃_k = α_0 + Σ_t ϱ_kt
//! Γ̃_k = Γ_0 + Y'D_kY + B_0'Ξ_0B_0 − B̃_k'Ξ̃_kB̃_k
//! ```
//!
//! Draws take the error precision from `W(α̃_k, Γ̃_k⁻¹)` and invert it to a
//! covariance, then the coefficient matrix from the conjugate matrix normal.
//! Every (time point, draw) pair has its own derived random substream, so a
//! path estimated in parallel is bit-identical to a serial run.

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngExt};
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::substream;

const INV_SQRT_2PI: f64 = 0.3989422804014327;

/// Gaussian kernel weights centered on one target time index.
#[derive(Debug, Clone)]
pub struct KernelWeights {
    /// Target time index `k`, 1-based.
    pub target: usize,
    /// Sample length `T`.
    pub len: usize,
    pub bandwidth: f64,
    /// Raw kernel weights `w_kt`, indexed 0-based by `t-1`.
    pub w: Vec<f64>,
    /// Normalized weights `ϱ_kt` entering the local likelihood. The
    /// normalizing constant is chosen so that `ϱ_kt = w_kt` (see
    /// [`WeightNormalization::Raw`]), keeping the effective local sample size
    /// proportional to the bandwidth.
    pub rho: Vec<f64>,
    /// Convergence-rate constant `ζ_Tk = (Σ_t w_kt)⁻²`. Exposed for
    /// diagnostics; it does not enter the posterior.
    pub zeta: f64,
}

/// How raw kernel weights map to the likelihood weights `ϱ_kt`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightNormalization {
    /// `ϱ_kt = w_kt` (default): the sum of weights acts as an effective local
    /// sample size of order `bandwidth`.
    #[default]
    Raw,
    /// `ϱ_kt = w_kt / Σ_t w_kt`: weights sum to one.
    UnitSum,
}

/// Evaluate the Gaussian kernel weights for target index `k` (1-based).
pub fn kernel_weights(k: usize, t_len: usize, bandwidth: f64) -> Result<KernelWeights> {
    kernel_weights_with(k, t_len, bandwidth, WeightNormalization::Raw)
}

/// [`kernel_weights`] with an explicit weight-normalization convention.
pub fn kernel_weights_with(
    k: usize,
    t_len: usize,
    bandwidth: f64,
    normalization: WeightNormalization,
) -> Result<KernelWeights> {
    if !(bandwidth > 0.0) {
        return Err(Error::parameter("bandwidth", format!("must be positive, got {bandwidth}")));
    }
    if k == 0 || k > t_len {
        return Err(Error::parameter("k", format!("must lie in 1..={t_len}, got {k}")));
    }
    let w: Vec<f64> = (1..=t_len)
        .map(|t| {
            let z = (k as f64 - t as f64) / bandwidth;
            INV_SQRT_2PI * (-0.5 * z * z).exp()
        })
        .collect();
    let sum: f64 = w.iter().sum();
    let rho = match normalization {
        WeightNormalization::Raw => w.clone(),
        WeightNormalization::UnitSum => w.iter().map(|v| v / sum).collect(),
    };
    Ok(KernelWeights { target: k, len: t_len, bandwidth, w, rho, zeta: sum.powi(-2) })
}

impl KernelWeights {
    /// Uniform unit weights (`ϱ_kt = 1` for all t). With a diffuse prior the
    /// local posterior mean then reduces to the OLS estimate of a stationary
    /// VAR.
    pub fn uniform(k: usize, t_len: usize) -> Self {
        KernelWeights {
            target: k,
            len: t_len,
            bandwidth: f64::INFINITY,
            w: vec![1.0; t_len],
            rho: vec![1.0; t_len],
            zeta: (t_len as f64).powi(-2),
        }
    }
}

/// Normal-Wishart prior for one local regression.
#[derive(Debug, Clone)]
pub struct PriorSpec {
    /// Prior coefficient means, `m × N` with `m = 1 + N·p` (intercept first,
    /// then lag 1 of every variable, lag 2, ...). Column `i` is equation `i`.
    pub phi0: DMatrix<f64>,
    /// Prior precision-shaping matrix `Ξ_0` (`m × m`, positive definite).
    pub xi0: DMatrix<f64>,
    /// Wishart degrees of freedom `α_0`.
    pub alpha0: f64,
    /// Wishart scale `Γ_0` (`N × N`, positive definite).
    pub gamma0: DMatrix<f64>,
    pub lags: usize,
}

impl PriorSpec {
    /// Near-diffuse prior: zero coefficient means, `Ξ_0 = ε·I`, minimal
    /// Wishart degrees, identity scale. Useful as the vanishing-prior limit.
    pub fn diffuse(n_assets: usize, lags: usize, epsilon: f64) -> Self {
        let m = 1 + n_assets * lags;
        PriorSpec {
            phi0: DMatrix::zeros(m, n_assets),
            xi0: DMatrix::identity(m, m) * epsilon,
            alpha0: n_assets as f64 + 2.0,
            gamma0: DMatrix::identity(n_assets, n_assets) * epsilon,
            lags,
        }
    }

    fn validate(&self, n_assets: usize) -> Result<()> {
        let m = 1 + n_assets * self.lags;
        if self.phi0.nrows() != m || self.phi0.ncols() != n_assets {
            return Err(Error::parameter("prior", "phi0 dimensions do not match N, p"));
        }
        if self.xi0.nrows() != m || self.gamma0.nrows() != n_assets {
            return Err(Error::parameter("prior", "Xi0/Gamma0 dimensions do not match N, p"));
        }
        if self.alpha0 <= n_assets as f64 - 1.0 {
            return Err(Error::parameter("prior", "alpha0 must exceed N - 1"));
        }
        Ok(())
    }
}

/// Settings shared by [`minnesota_prior`] and [`estimate_path`].
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct QbllConfig {
    pub lags: usize,
    /// Overall Minnesota tightness λ.
    pub shrinkage: f64,
    /// Prior mean of each variable's first own lag.
    pub own_lag_mean: f64,
    /// Lag-decay exponent in the Minnesota scaling (prior sd ∝ 1/ℓ^(decay/2)·λ).
    pub lag_decay: f64,
    /// Relative looseness of the intercept prior.
    pub intercept_scale: f64,
    /// Kernel bandwidth; `None` selects `⌊√T⌋`.
    pub bandwidth: Option<f64>,
    pub weight_normalization: WeightNormalization,
    pub n_draws: usize,
    /// Keep explosive draws (flagged) or redraw them.
    pub rejection: RejectionMode,
}

impl Default for QbllConfig {
    fn default() -> Self {
        QbllConfig {
            lags: 2,
            shrinkage: 0.05,
            own_lag_mean: 0.1,
            lag_decay: 2.0,
            intercept_scale: 100.0,
            bandwidth: None,
            weight_normalization: WeightNormalization::Raw,
            n_draws: 500,
            rejection: RejectionMode::KeepFlagged,
        }
    }
}

impl QbllConfig {
    pub fn bandwidth_for(&self, t_len: usize) -> f64 {
        self.bandwidth.unwrap_or_else(|| (t_len as f64).sqrt().floor())
    }
}

/// What to do with posterior draws whose companion spectral radius is ≥ 1.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectionMode {
    /// Keep the draw, with `stable = false`; finite-horizon truncation
    /// downstream tolerates mild explosiveness.
    KeepFlagged,
    /// Redraw up to the given number of attempts, then keep the last flagged.
    Reject { max_tries: u32 },
}

/// Minnesota Normal-Wishart prior built from univariate AR(p) residual
/// variances of the panel columns.
///
/// The first own lag of each variable centers on `own_lag_mean`, everything
/// else on zero. `Ξ_0` carries the Minnesota scaling with overall tightness
/// `shrinkage`; the Wishart parameters follow `α_0 = N + 2`,
/// `Γ_0 = (α_0 − N − 1)·diag(s_i²)`.
pub fn minnesota_prior(
    n_assets: usize,
    lags: usize,
    cfg: &QbllConfig,
    data: &DMatrix<f64>,
) -> Result<PriorSpec> {
    if !(cfg.shrinkage > 0.0) {
        return Err(Error::parameter("shrinkage", "must be positive"));
    }
    if data.ncols() != n_assets {
        return Err(Error::parameter("data", "column count does not match n_assets"));
    }
    let s2 = ar_residual_variances(data, lags)?;
    prior_from_residual_variances(n_assets, lags, cfg, &s2)
}

/// The Minnesota prior given known residual variances (the deterministic part
/// of [`minnesota_prior`]).
pub fn prior_from_residual_variances(
    n_assets: usize,
    lags: usize,
    cfg: &QbllConfig,
    s2: &[f64],
) -> Result<PriorSpec> {
    if s2.len() != n_assets {
        return Err(Error::parameter("s2", "length does not match n_assets"));
    }
    for (i, v) in s2.iter().enumerate() {
        if !(v.is_finite() && *v > 0.0) {
            return Err(Error::numerical(
                "minnesota_prior",
                format!("non-finite residual variance for asset {i}"),
            ));
        }
    }
    let m = 1 + n_assets * lags;
    let lambda2 = cfg.shrinkage * cfg.shrinkage;

    let mut phi0 = DMatrix::zeros(m, n_assets);
    for i in 0..n_assets {
        phi0[(1 + i, i)] = cfg.own_lag_mean;
    }

    // Ξ_0 is diagonal: prior variance of the coefficient on lag ℓ of variable
    // j (in any equation i) is λ²·s_i²/(ℓ^decay·s_j²), with s_i² supplied by
    // the Wishart factor.
    let mut xi0 = DMatrix::zeros(m, m);
    xi0[(0, 0)] = 1.0 / (lambda2 * cfg.intercept_scale * cfg.intercept_scale);
    for lag in 1..=lags {
        let decay = (lag as f64).powf(cfg.lag_decay);
        for j in 0..n_assets {
            let row = 1 + (lag - 1) * n_assets + j;
            xi0[(row, row)] = decay * s2[j] / lambda2;
        }
    }

    let alpha0 = n_assets as f64 + 2.0;
    let gamma0 = DMatrix::from_fn(n_assets, n_assets, |i, j| {
        if i == j {
            (alpha0 - n_assets as f64 - 1.0) * s2[i]
        } else {
            0.0
        }
    });

    Ok(PriorSpec { phi0, xi0, alpha0, gamma0, lags })
}

/// Univariate AR(p) OLS residual variance per column.
fn ar_residual_variances(data: &DMatrix<f64>, lags: usize) -> Result<Vec<f64>> {
    let t = data.nrows();
    if t <= 2 * lags + 2 {
        return Err(Error::parameter("data", "panel too short to fit AR residual variances"));
    }
    let rows = t - lags;
    let mut out = Vec::with_capacity(data.ncols());
    for i in 0..data.ncols() {
        let mut x = DMatrix::zeros(rows, lags + 1);
        let mut y = DVector::zeros(rows);
        for r in 0..rows {
            x[(r, 0)] = 1.0;
            for l in 1..=lags {
                x[(r, l)] = data[(lags + r - l, i)];
            }
            y[r] = data[(lags + r, i)];
        }
        let xtx = x.transpose() * &x;
        let xty = x.transpose() * &y;
        let beta = nalgebra::Cholesky::new(xtx)
            .ok_or_else(|| {
                Error::numerical("minnesota_prior", format!("singular AR design for asset {i}"))
            })?
            .solve(&xty);
        let resid = y - x * beta;
        let dof = rows.saturating_sub(lags + 1).max(1) as f64;
        let s2 = resid.norm_squared() / dof;
        if !(s2.is_finite() && s2 > 0.0) {
            return Err(Error::numerical(
                "minnesota_prior",
                format!("non-finite residual variance for asset {i}"),
            ));
        }
        out.push(s2);
    }
    Ok(out)
}

/// Quasi-posterior parameters at one target time index.
#[derive(Debug, Clone)]
pub struct LocalPosterior {
    /// Posterior coefficient means, `m × N` (same layout as [`PriorSpec::phi0`]).
    pub phi_tilde: DMatrix<f64>,
    /// Posterior precision shape `Ξ̃` (`m × m`).
    pub xi_tilde: DMatrix<f64>,
    pub alpha_tilde: f64,
    /// Posterior Wishart scale `Γ̃` (`N × N`).
    pub gamma_tilde: DMatrix<f64>,
    pub n_assets: usize,
    pub lags: usize,
    /// Target index `k`, 1-based.
    pub time_index: usize,
    /// Rescaled time `u = k/T`.
    pub u: f64,
}

/// Stacked lagged design shared across target indices.
struct RegressorStack {
    /// `(T−p) × m` regressors, row `r` holding `(1, x'_{p+r-1}, …, x'_{r})`.
    a: DMatrix<f64>,
    /// `(T−p) × N` dependent block.
    y: DMatrix<f64>,
    lags: usize,
}

fn stack_regressors(data: &DMatrix<f64>, lags: usize) -> Result<RegressorStack> {
    let (t, n) = (data.nrows(), data.ncols());
    if t <= lags {
        return Err(Error::parameter("data", "fewer rows than lags"));
    }
    let rows = t - lags;
    let m = 1 + n * lags;
    let mut a = DMatrix::zeros(rows, m);
    let mut y = DMatrix::zeros(rows, n);
    for r in 0..rows {
        a[(r, 0)] = 1.0;
        for l in 1..=lags {
            for j in 0..n {
                a[(r, 1 + (l - 1) * n + j)] = data[(lags + r - l, j)];
            }
        }
        for j in 0..n {
            y[(r, j)] = data[(lags + r, j)];
        }
    }
    Ok(RegressorStack { a, y, lags })
}

/// Compute the quasi-posterior at target index `k` (1-based).
pub fn local_posterior(
    data: &DMatrix<f64>,
    k: usize,
    prior: &PriorSpec,
    weights: &KernelWeights,
    lags: usize,
) -> Result<LocalPosterior> {
    let stack = stack_regressors(data, lags)?;
    local_posterior_from_stack(&stack, data.nrows(), k, prior, weights)
}

fn local_posterior_from_stack(
    stack: &RegressorStack,
    t_len: usize,
    k: usize,
    prior: &PriorSpec,
    weights: &KernelWeights,
) -> Result<LocalPosterior> {
    let n = stack.y.ncols();
    let p = stack.lags;
    let m = stack.a.ncols();
    prior.validate(n)?;
    if weights.len != t_len {
        return Err(Error::parameter("weights", "length does not match panel"));
    }
    if t_len - p < n * p + 1 {
        return Err(Error::parameter("data", "T - p effective observations below N·p + 1"));
    }
    if k == 0 || k > t_len {
        return Err(Error::parameter("k", format!("must lie in 1..={t_len}")));
    }

    // D_k over the lag-trimmed rows t = p+1..T (1-based).
    let rho = &weights.rho[p..t_len];
    let rows = stack.a.nrows();
    debug_assert_eq!(rho.len(), rows);

    // A'D A, A'D Y, Y'D Y in one pass over weighted rows.
    let mut ada = DMatrix::zeros(m, m);
    let mut ady = DMatrix::zeros(m, n);
    let mut ydy = DMatrix::zeros(n, n);
    for r in 0..rows {
        let w = rho[r];
        if w == 0.0 {
            continue;
        }
        let ar = stack.a.row(r);
        let yr = stack.y.row(r);
        ada.syger(w, &ar.transpose(), &ar.transpose(), 1.0);
        ady.ger(w, &ar.transpose(), &yr.transpose(), 1.0);
        ydy.syger(w, &yr.transpose(), &yr.transpose(), 1.0);
    }
    fill_upper_from_lower(&mut ada);
    fill_upper_from_lower(&mut ydy);

    let xi_tilde = symmetrize(&(&prior.xi0 + &ada));
    let chol = nalgebra::Cholesky::new(xi_tilde.clone()).ok_or_else(|| {
        Error::numerical(
            "local_posterior",
            format!(
                "posterior precision not positive definite at k={k} (cond ≈ {:.3e})",
                condition_estimate(&xi_tilde)
            ),
        )
    })?;
    let rhs = &ady + &prior.xi0 * &prior.phi0;
    let phi_tilde = chol.solve(&rhs);

    let alpha_tilde = prior.alpha0 + rho.iter().sum::<f64>();
    let gamma_tilde = symmetrize(
        &(&prior.gamma0 + ydy + prior.phi0.transpose() * &prior.xi0 * &prior.phi0
            - phi_tilde.transpose() * &xi_tilde * &phi_tilde),
    );

    Ok(LocalPosterior {
        phi_tilde,
        xi_tilde,
        alpha_tilde,
        gamma_tilde,
        n_assets: n,
        lags: p,
        time_index: k,
        u: k as f64 / t_len as f64,
    })
}

fn fill_upper_from_lower(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            m[(i, j)] = m[(j, i)];
        }
    }
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn condition_estimate(m: &DMatrix<f64>) -> f64 {
    let eig = m.clone().symmetric_eigenvalues();
    let max = eig.iter().cloned().fold(f64::MIN, f64::max);
    let min = eig.iter().cloned().fold(f64::MAX, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// One draw from the quasi-posterior: lag matrices, intercept, and error
/// covariance, with a companion-stability flag.
#[derive(Debug, Clone)]
pub struct CoefficientDraw {
    /// `phi[ℓ-1]` is the `N × N` lag-ℓ matrix; rows are equations.
    pub phi: Vec<DMatrix<f64>>,
    pub intercept: DVector<f64>,
    /// Error covariance Σ(u) (the inverted Wishart precision draw).
    pub sigma: DMatrix<f64>,
    pub draw_id: usize,
    /// Rescaled time u = k/T.
    pub u: f64,
    /// Companion spectral radius < 1.
    pub stable: bool,
}

impl CoefficientDraw {
    pub fn n_assets(&self) -> usize {
        self.intercept.len()
    }

    pub fn lags(&self) -> usize {
        self.phi.len()
    }

    /// Companion-form matrix `[[Φ₁ … Φ_p],[I 0]]` of size `Np × Np`.
    pub fn companion(&self) -> DMatrix<f64> {
        companion_of(&self.phi)
    }
}

pub(crate) fn companion_of(phi: &[DMatrix<f64>]) -> DMatrix<f64> {
    let p = phi.len();
    let n = phi[0].nrows();
    let mut c = DMatrix::zeros(n * p, n * p);
    for (l, block) in phi.iter().enumerate() {
        c.view_mut((0, l * n), (n, n)).copy_from(block);
    }
    for i in 0..n * (p - 1) {
        c[(n + i, i)] = 1.0;
    }
    c
}

pub(crate) fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Draw `n_draws` coefficient/covariance pairs from the posterior.
///
/// Deterministic given `seed`: draw `d` at time index `k` always uses the
/// substream `(seed, "qbll-draw", k, d)`.
pub fn draw_posterior(
    post: &LocalPosterior,
    n_draws: usize,
    seed: u64,
) -> Result<Vec<CoefficientDraw>> {
    draw_posterior_with(post, n_draws, seed, RejectionMode::KeepFlagged)
}

/// [`draw_posterior`] with an explicit stability-rejection mode.
pub fn draw_posterior_with(
    post: &LocalPosterior,
    n_draws: usize,
    seed: u64,
    rejection: RejectionMode,
) -> Result<Vec<CoefficientDraw>> {
    if n_draws == 0 {
        return Err(Error::parameter("n_draws", "must be at least 1"));
    }
    let n = post.n_assets;
    let m = post.phi_tilde.nrows();

    let chol_gamma = nalgebra::Cholesky::new(post.gamma_tilde.clone()).ok_or_else(|| {
        Error::numerical("draw_posterior", "Cholesky failed on Γ̃ (not positive definite)")
    })?;
    // F with F·F' = Γ̃⁻¹.
    let f_scale = chol_gamma
        .l()
        .transpose()
        .solve_upper_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::numerical("draw_posterior", "Γ̃ factor not invertible"))?;
    let chol_xi = nalgebra::Cholesky::new(post.xi_tilde.clone())
        .ok_or_else(|| Error::numerical("draw_posterior", "Cholesky failed on Ξ̃"))?;
    // U with U·U' = Ξ̃⁻¹.
    let u_row = chol_xi
        .l()
        .transpose()
        .solve_upper_triangular(&DMatrix::identity(m, m))
        .ok_or_else(|| Error::numerical("draw_posterior", "Ξ̃ factor not invertible"))?;

    let max_tries = match rejection {
        RejectionMode::KeepFlagged => 1,
        RejectionMode::Reject { max_tries } => max_tries.max(1),
    };

    let mut draws = Vec::with_capacity(n_draws);
    for d in 0..n_draws {
        let mut candidate = None;
        for attempt in 0..max_tries {
            let mut rng = substream(
                seed,
                &["qbll-draw"],
                &[post.time_index as u64, d as u64, attempt as u64],
            );
            let draw = sample_one(post, &f_scale, &u_row, d, &mut rng)?;
            let stable = draw.stable;
            candidate = Some(draw);
            if stable {
                break;
            }
        }
        draws.push(candidate.expect("at least one attempt"));
    }
    Ok(draws)
}

fn sample_one(
    post: &LocalPosterior,
    f_scale: &DMatrix<f64>,
    u_row: &DMatrix<f64>,
    draw_id: usize,
    rng: &mut impl Rng,
) -> Result<CoefficientDraw> {
    let n = post.n_assets;
    let m = post.phi_tilde.nrows();

    // Wishart precision via the Bartlett decomposition, then invert.
    let mut bartlett = DMatrix::zeros(n, n);
    for i in 0..n {
        let chi = ChiSquared::new(post.alpha_tilde - i as f64).map_err(|e| {
            Error::numerical("draw_posterior", format!("chi-squared dof invalid: {e}"))
        })?;
        bartlett[(i, i)] = chi.sample(rng).max(f64::MIN_POSITIVE).sqrt();
        for j in 0..i {
            bartlett[(i, j)] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    let half = f_scale * bartlett;
    let precision = symmetrize(&(&half * half.transpose()));
    let sigma = nalgebra::Cholesky::new(precision)
        .ok_or_else(|| Error::numerical("draw_posterior", "Wishart draw not positive definite"))?
        .inverse();
    let sigma = symmetrize(&sigma);

    // Matrix-normal coefficient draw: B = B̃ + U·Z·V' with U·U' = Ξ̃⁻¹ and
    // V·V' = Σ.
    let v_col = nalgebra::Cholesky::new(sigma.clone())
        .ok_or_else(|| Error::numerical("draw_posterior", "Σ draw not positive definite"))?
        .l();
    let z = DMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let b = &post.phi_tilde + u_row * z * v_col.transpose();

    let intercept = DVector::from_fn(n, |i, _| b[(0, i)]);
    let mut phi = Vec::with_capacity(post.lags);
    for l in 0..post.lags {
        phi.push(DMatrix::from_fn(n, n, |i, j| b[(1 + l * n + j, i)]));
    }
    let stable = spectral_radius(&companion_of(&phi)) < 1.0;
    Ok(CoefficientDraw { phi, intercept, sigma, draw_id, u: post.u, stable })
}

/// The posterior and its draws at one time point of an estimation path.
#[derive(Debug, Clone)]
pub struct FieldPoint {
    /// Target index `k`, 1-based into the panel.
    pub time_index: usize,
    /// Calendar date of the target index, when the panel carries dates.
    pub date: Option<NaiveDate>,
    pub posterior: LocalPosterior,
    pub draws: Vec<CoefficientDraw>,
}

/// Local posteriors and draws over a grid of time points.
#[derive(Debug, Clone)]
pub struct PosteriorField {
    pub points: Vec<FieldPoint>,
    pub n_assets: usize,
    pub lags: usize,
}

/// Estimate the posterior and draws at each requested time index.
///
/// Each time point is estimated independently; the per-(k, draw) random
/// substreams make the result identical whether the grid is processed
/// serially or in parallel.
pub fn estimate_path(
    data: &DMatrix<f64>,
    dates: Option<&[NaiveDate]>,
    cfg: &QbllConfig,
    time_grid: &[usize],
    seed: u64,
) -> Result<PosteriorField> {
    let t_len = data.nrows();
    let n = data.ncols();
    let p = cfg.lags;
    if let Some(dates) = dates {
        if dates.len() != t_len {
            return Err(Error::parameter("dates", "length does not match panel"));
        }
    }
    for &k in time_grid {
        if k <= p || k > t_len {
            return Err(Error::parameter("time_grid", format!("index {k} outside {}..={t_len}", p + 1)));
        }
    }
    let bandwidth = cfg.bandwidth_for(t_len);
    let prior = minnesota_prior(n, p, cfg, data)?;
    let stack = stack_regressors(data, p)?;

    let points: Result<Vec<FieldPoint>> = time_grid
        .par_iter()
        .map(|&k| {
            let weights = kernel_weights_with(k, t_len, bandwidth, cfg.weight_normalization)?;
            let posterior = local_posterior_from_stack(&stack, t_len, k, &prior, &weights)
                .map_err(|e| match e {
                    Error::Numerical { context, msg } => {
                        Error::numerical(context, format!("k={k}: {msg}"))
                    }
                    other => other,
                })?;
            let draws = draw_posterior_with(&posterior, cfg.n_draws, seed, cfg.rejection)?;
            Ok(FieldPoint { time_index: k, date: dates.map(|d| d[k - 1]), posterior, draws })
        })
        .collect();

    Ok(PosteriorField { points: points?, n_assets: n, lags: p })
}
