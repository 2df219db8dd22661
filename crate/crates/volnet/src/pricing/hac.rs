//! Newey-West long-run variance of a sample mean.

use crate::error::{Error, Result};

/// Bartlett-kernel HAC variance of the sample mean of `series`:
///
/// ```text
/// var(x̄) = [ γ̂₀ + 2 Σ_{l=1..L} (1 − l/(L+1)) γ̂_l ] / T
/// γ̂_l    = (1/T) Σ_{t=l+1..T} (x_t − x̄)(x_{t−l} − x̄)
/// ```
///
/// At `lags = 0` this reduces to the (1/T-denominator) sample variance over T.
pub fn newey_west(series: &[f64], lags: usize) -> Result<f64> {
    let t = series.len();
    if t < 2 {
        return Err(Error::parameter("series", "need at least 2 observations"));
    }
    if lags >= t {
        return Err(Error::parameter("lags", format!("must be below length {t}")));
    }
    let tf = t as f64;
    let mean = series.iter().sum::<f64>() / tf;
    let gamma = |l: usize| -> f64 {
        (l..t).map(|i| (series[i] - mean) * (series[i - l] - mean)).sum::<f64>() / tf
    };
    let mut lrv = gamma(0);
    for l in 1..=lags {
        let w = 1.0 - l as f64 / (lags as f64 + 1.0);
        lrv += 2.0 * w * gamma(l);
    }
    // Truncated kernels can turn slightly negative in pathological samples.
    Ok(lrv.max(0.0) / tf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand_distr::Distribution;

    #[test]
    fn lag_zero_is_sample_variance_over_t() {
        let x = [1.0, 2.0, 4.0, 8.0, 3.0];
        let mean = x.iter().sum::<f64>() / 5.0;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 5.0;
        assert_abs_diff_eq!(newey_west(&x, 0).unwrap(), var / 5.0, epsilon = 1e-15);
    }

    #[test]
    fn ar1_long_run_variance_ratio() {
        // AR(1) with φ = 0.5: long-run variance is (1+φ)/(1−φ) = 3 times the
        // i.i.d. value.
        let phi = 0.5;
        let t = 200_000;
        let mut rng = crate::rng::substream(3, &["hac-ar1"], &[]);
        let normal = rand_distr::Normal::new(0.0, 1.0).unwrap();
        let mut x = vec![0.0f64; t];
        for i in 1..t {
            x[i] = phi * x[i - 1] + normal.sample(&mut rng);
        }
        let ratio = newey_west(&x, 60).unwrap() / newey_west(&x, 0).unwrap();
        assert!((ratio - 3.0).abs() < 0.3, "ratio {ratio}");
    }

    #[test]
    fn white_noise_insensitive_to_lags() {
        let t = 3000;
        let mut rng = crate::rng::substream(4, &["hac-wn"], &[]);
        let normal = rand_distr::Normal::new(0.0, 1.0).unwrap();
        let x: Vec<f64> = (0..t).map(|_| normal.sample(&mut rng)).collect();
        let v0 = newey_west(&x, 0).unwrap();
        let v12 = newey_west(&x, 12).unwrap();
        assert!((v12 / v0 - 1.0).abs() < 0.15, "v12/v0 = {}", v12 / v0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(newey_west(&[1.0], 0).is_err());
        assert!(newey_west(&[1.0, 2.0], 2).is_err());
    }
}
