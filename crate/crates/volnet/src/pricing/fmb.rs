//! Two-pass Fama-MacBeth cross-sectional regressions.

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};

use super::{factor_covariance, newey_west, BetaPanel, FactorSet};
use crate::data::DailyPanel;
use crate::error::{Error, Result};

/// Errors-in-variables multiplier `1 + λ'Σ_f⁻¹λ` applied to the variance of
/// the estimated prices of risk.
pub fn shanken_multiplier(lambda: &DVector<f64>, factor_cov: &DMatrix<f64>) -> Result<f64> {
    if factor_cov.nrows() != lambda.len() || factor_cov.ncols() != lambda.len() {
        return Err(Error::parameter("factor_cov", "dimension mismatch with lambda"));
    }
    let chol = nalgebra::Cholesky::new(factor_cov.clone())
        .ok_or_else(|| Error::numerical("shanken_multiplier", "factor covariance not PD"))?;
    let solved = chol.solve(lambda);
    Ok(1.0 + lambda.dot(&solved))
}

/// Prices of risk from per-date cross-sectional regressions.
#[derive(Debug, Clone)]
pub struct FmbResult {
    pub factor_names: Vec<String>,
    /// Mean cross-sectional slope per factor (daily return units).
    pub lambda: DVector<f64>,
    pub intercept: f64,
    /// Newey-West standard errors of the time-series means.
    pub se_nw: DVector<f64>,
    pub se_nw_intercept: f64,
    pub t_unadjusted: DVector<f64>,
    /// t-ratios after inflating the variance by the Shanken multiplier.
    pub t_shanken: DVector<f64>,
    pub t_shanken_intercept: f64,
    /// The variance multiplier `1 + λ'Σ_f⁻¹λ` itself.
    pub shanken_multiplier: f64,
    /// Per-date slopes; column 0 is the intercept (NaN when indeterminate).
    pub lambda_series: DMatrix<f64>,
    pub dates_used: Vec<NaiveDate>,
    pub skipped_dates: Vec<(NaiveDate, String)>,
    /// Set when the cross-sectional design was collinear with the intercept
    /// and the second pass ran without one.
    pub intercept_indeterminate: bool,
    pub nw_lags: usize,
}

/// Run the second pass: per date, regress returns on betas cross-sectionally;
/// average the slopes over time; attach Newey-West and Shanken-adjusted
/// inference. `factors` supplies the factor covariance for the adjustment.
pub fn fama_macbeth(
    returns: &DailyPanel,
    betas: &BetaPanel,
    factors: &FactorSet,
    nw_lags: usize,
) -> Result<FmbResult> {
    if returns.asset_ids != betas.asset_ids {
        return Err(Error::Alignment("returns/betas asset universes differ".into()));
    }
    let k = betas.factor_names.len();
    let n = returns.n_assets();
    let beta_date_ix: std::collections::BTreeMap<NaiveDate, usize> =
        betas.dates.iter().enumerate().map(|(i, d)| (*d, i)).collect();

    let mut dates_used = Vec::new();
    let mut skipped = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut intercept_indeterminate = false;

    for (ri, date) in returns.dates.iter().enumerate() {
        let bt = if betas.static_betas {
            0
        } else {
            match beta_date_ix.get(date) {
                Some(&t) => t,
                None => continue,
            }
        };
        let mut xs: Vec<&super::BetaEntry> = Vec::new();
        let mut ys = Vec::new();
        for a in 0..n {
            if let (Some(entry), Some(ret)) = (
                if betas.static_betas { betas.at(0, a) } else { betas.at(bt, a) },
                returns.values[ri][a],
            ) {
                xs.push(entry);
                ys.push(ret);
            }
        }
        if xs.len() < k + 2 {
            skipped.push((*date, format!("only {} assets with betas", xs.len())));
            continue;
        }
        match cross_section(&ys, &xs, k) {
            CrossSection::WithIntercept(coefs) => {
                rows.push(coefs);
                dates_used.push(*date);
            }
            CrossSection::NoIntercept(coefs) => {
                intercept_indeterminate = true;
                let mut padded = vec![f64::NAN];
                padded.extend(coefs);
                rows.push(padded);
                dates_used.push(*date);
            }
            CrossSection::Singular => {
                skipped.push((*date, "singular cross-sectional design".into()));
            }
        }
    }

    let t_eff = rows.len();
    if t_eff < nw_lags + 2 {
        return Err(Error::parameter(
            "returns",
            format!("only {t_eff} usable cross-sections for {nw_lags} NW lags"),
        ));
    }
    let lambda_series = DMatrix::from_fn(t_eff, k + 1, |r, c| rows[r][c]);

    let col_mean = |c: usize| -> f64 {
        lambda_series.column(c).iter().sum::<f64>() / t_eff as f64
    };
    let lambda = DVector::from_fn(k, |j, _| col_mean(j + 1));
    let intercept = col_mean(0);

    let col_se = |c: usize| -> Result<f64> {
        let series: Vec<f64> = lambda_series.column(c).iter().copied().collect();
        if series.iter().any(|v| v.is_nan()) {
            return Ok(f64::NAN);
        }
        Ok(newey_west(&series, nw_lags)?.sqrt())
    };
    let se_nw = DVector::from_iterator(
        k,
        (0..k).map(|j| col_se(j + 1)).collect::<Result<Vec<_>>>()?,
    );
    let se_nw_intercept = col_se(0)?;

    let sigma_f = factor_covariance(factors, &betas.factor_names, &dates_used)?;
    let mult = shanken_multiplier(&lambda, &sigma_f)?;
    let adj = mult.sqrt();

    let t_unadjusted = DVector::from_fn(k, |j, _| lambda[j] / se_nw[j]);
    let t_shanken = DVector::from_fn(k, |j, _| lambda[j] / (se_nw[j] * adj));
    let t_shanken_intercept = intercept / (se_nw_intercept * adj);

    Ok(FmbResult {
        factor_names: betas.factor_names.clone(),
        lambda,
        intercept,
        se_nw,
        se_nw_intercept,
        t_unadjusted,
        t_shanken,
        t_shanken_intercept,
        shanken_multiplier: mult,
        lambda_series,
        dates_used,
        skipped_dates: skipped,
        intercept_indeterminate,
        nw_lags,
    })
}

enum CrossSection {
    WithIntercept(Vec<f64>),
    NoIntercept(Vec<f64>),
    Singular,
}

fn cross_section(ys: &[f64], xs: &[&super::BetaEntry], k: usize) -> CrossSection {
    let n = ys.len();
    let mut design = DMatrix::zeros(n, k + 1);
    for (r, entry) in xs.iter().enumerate() {
        design[(r, 0)] = 1.0;
        for c in 0..k {
            design[(r, c + 1)] = entry.loadings[c];
        }
    }
    let y = DVector::from_column_slice(ys);
    let xtx = design.transpose() * &design;
    // Guard against numerically near-singular designs that Cholesky accepts.
    if let Some(chol) = nalgebra::Cholesky::new(xtx.clone()) {
        let min_diag = (0..k + 1).map(|i| chol.l()[(i, i)]).fold(f64::MAX, f64::min);
        let max_diag = (0..k + 1).map(|i| chol.l()[(i, i)]).fold(f64::MIN, f64::max);
        if min_diag > 1e-10 * max_diag {
            let coef = chol.solve(&(design.transpose() * &y));
            return CrossSection::WithIntercept(coef.iter().copied().collect());
        }
    }
    // Retry without the intercept column.
    let slim = design.columns(1, k).clone_owned();
    let xtx = slim.transpose() * &slim;
    match nalgebra::Cholesky::new(xtx) {
        Some(chol) => {
            let coef = chol.solve(&(slim.transpose() * &y));
            CrossSection::NoIntercept(coef.iter().copied().collect())
        }
        None => CrossSection::Singular,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pricing::{full_sample_betas, BetaEntry};
    use approx::assert_abs_diff_eq;
    use rand_distr::Distribution;

    fn dates(n: usize) -> Vec<NaiveDate> {
        let start = NaiveDate::from_ymd_opt(2015, 1, 1).unwrap();
        (0..n as i64).map(|d| start + chrono::Duration::days(d)).collect()
    }

    fn static_panel(loadings: Vec<Vec<f64>>, names: Vec<&str>, ds: Vec<NaiveDate>) -> BetaPanel {
        let n = loadings.len();
        let k = names.len();
        BetaPanel {
            asset_ids: (0..n).map(|i| format!("A{i}")).collect(),
            dates: ds,
            factor_names: names.into_iter().map(String::from).collect(),
            entries: vec![loadings
                .into_iter()
                .map(|l| {
                    Some(BetaEntry {
                        intercept: 0.0,
                        loadings: DVector::from_vec(l),
                        nw_se: DVector::zeros(k),
                    })
                })
                .collect()],
            window: 0,
            static_betas: true,
        }
    }

    #[test]
    fn shanken_multiplier_examples() {
        let zero = DVector::from_vec(vec![0.0, 0.0]);
        let eye = DMatrix::identity(2, 2);
        assert_abs_diff_eq!(shanken_multiplier(&zero, &eye).unwrap(), 1.0);

        let lam = DVector::from_vec(vec![0.3]);
        let cov = DMatrix::from_element(1, 1, 0.09);
        assert_abs_diff_eq!(shanken_multiplier(&lam, &cov).unwrap(), 2.0, epsilon = 1e-12);

        let lam = DVector::from_vec(vec![0.1, 0.0]);
        let cov = DMatrix::from_partial_diagonal(2, 2, &[0.04, 1.0]);
        assert_abs_diff_eq!(shanken_multiplier(&lam, &cov).unwrap(), 1.25, epsilon = 1e-12);

        assert!(shanken_multiplier(&lam, &DMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn unit_betas_collapse_to_mean_return_with_flag() {
        let t = 30;
        let n = 8;
        let ds = dates(t);
        let mut rng = crate::rng::substream(11, &["fmb-unit"], &[]);
        let normal = rand_distr::Normal::new(0.0, 0.01).unwrap();
        let values: Vec<Vec<Option<f64>>> = (0..t)
            .map(|_| (0..n).map(|_| Some(normal.sample(&mut rng))).collect())
            .collect();
        let returns = DailyPanel::new(
            (0..n).map(|i| format!("A{i}")).collect(),
            ds.clone(),
            values.clone(),
        )
        .unwrap();
        let betas = static_panel(vec![vec![1.0]; n], vec!["net"], ds.clone());
        let factors = FactorSet::new(
            vec!["net".into()],
            ds.clone(),
            DMatrix::from_fn(t, 1, |i, _| 0.001 * (i as f64).sin()),
        )
        .unwrap();
        let res = fama_macbeth(&returns, &betas, &factors, 2).unwrap();
        assert!(res.intercept_indeterminate);
        for (r, row) in values.iter().enumerate() {
            let mean: f64 = row.iter().map(|v| v.unwrap()).sum::<f64>() / n as f64;
            assert_abs_diff_eq!(res.lambda_series[(r, 1)], mean, epsilon = 1e-12);
            assert!(res.lambda_series[(r, 0)].is_nan());
        }
    }

    #[test]
    fn recovers_planted_price_of_risk() {
        // One-factor economy: r_it = β_i f_t + e_it with E[f] = λ.
        let t = 1500;
        let n = 40;
        let lambda_true = -0.04;
        let mut rng = crate::rng::substream(12, &["fmb-planted"], &[]);
        let normal = rand_distr::Normal::new(0.0, 1.0).unwrap();
        let ds = dates(t);
        let betas_true: Vec<f64> =
            (0..n).map(|_| 0.5 + rand::RngExt::random::<f64>(&mut rng)).collect();
        let f: Vec<f64> =
            (0..t).map(|_| lambda_true + 0.02 * normal.sample(&mut rng)).collect();
        let values: Vec<Vec<Option<f64>>> = (0..t)
            .map(|i| {
                (0..n)
                    .map(|a| Some(betas_true[a] * f[i] + 0.01 * normal.sample(&mut rng)))
                    .collect()
            })
            .collect();
        let returns =
            DailyPanel::new((0..n).map(|i| format!("A{i}")).collect(), ds.clone(), values)
                .unwrap();
        let factors = FactorSet::new(
            vec!["net".into()],
            ds.clone(),
            DMatrix::from_fn(t, 1, |i, _| f[i]),
        )
        .unwrap();
        let betas = full_sample_betas(&returns, &factors, 12).unwrap();
        let res = fama_macbeth(&returns, &betas, &factors, 12).unwrap();
        let adj_se = res.se_nw[0] * res.shanken_multiplier.sqrt();
        assert!(
            (res.lambda[0] - lambda_true).abs() < 2.0 * adj_se,
            "lambda {} vs {} (se {})",
            res.lambda[0],
            lambda_true,
            adj_se
        );
        assert!(res.shanken_multiplier >= 1.0);
        assert!(res.t_shanken[0].abs() <= res.t_unadjusted[0].abs());
    }

    #[test]
    fn lag_zero_se_equals_classic_se() {
        let t = 400;
        let n = 12;
        let ds = dates(t);
        let mut rng = crate::rng::substream(13, &["fmb-se"], &[]);
        let normal = rand_distr::Normal::new(0.0, 1.0).unwrap();
        let betas_true: Vec<f64> = (0..n).map(|i| 0.2 + 0.1 * i as f64).collect();
        let values: Vec<Vec<Option<f64>>> = (0..t)
            .map(|_| {
                (0..n)
                    .map(|a| Some(0.01 * betas_true[a] + 0.02 * normal.sample(&mut rng)))
                    .collect()
            })
            .collect();
        let returns =
            DailyPanel::new((0..n).map(|i| format!("A{i}")).collect(), ds.clone(), values)
                .unwrap();
        let betas = static_panel(
            betas_true.iter().map(|b| vec![*b]).collect(),
            vec!["net"],
            ds.clone(),
        );
        let factors = FactorSet::new(
            vec!["net".into()],
            ds.clone(),
            DMatrix::from_fn(t, 1, |i, _| 0.01 + 1e-4 * (i as f64).cos()),
        )
        .unwrap();
        let res = fama_macbeth(&returns, &betas, &factors, 0).unwrap();
        // Classic standard error of the mean with the 1/T variance convention.
        let series: Vec<f64> = res.lambda_series.column(1).iter().copied().collect();
        let mean = series.iter().sum::<f64>() / series.len() as f64;
        let var = series.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
            / series.len() as f64;
        let classic = (var / series.len() as f64).sqrt();
        assert_abs_diff_eq!(res.se_nw[0], classic, epsilon = 1e-12);
    }
}
