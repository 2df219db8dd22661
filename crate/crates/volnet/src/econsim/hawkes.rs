//! Mutually exciting jump intensities with exponential decay.
//!
//! Node `j`'s intensity jumps by `b[j][k]` when node `k` fires and decays
//! back toward its baseline at speed `α_j`:
//!
//! ```text
//! dℓ_j = α_j (ℓ_{j,∞} − ℓ_j) dt + Σ_k b[j][k] dN_k
//! ```
//!
//! Stationarity requires the branching matrix `G[j][k] = b[j][k]/α_j` to have
//! spectral radius below one, in which case the stationary mean intensities
//! solve `(I − G) ℓ = ℓ_∞`. Simulation uses Ogata thinning, which is exact
//! for exponential kernels.

use nalgebra::{DMatrix, DVector};
use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::substream;

/// Baselines, decays and the excitation matrix of one Hawkes network.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HawkesParams {
    /// Baseline intensities ℓ_{j,∞} ≥ 0.
    pub baseline: Vec<f64>,
    /// Decay speeds α_j > 0.
    pub decay: Vec<f64>,
    /// `excitation[j][k]` = jump of ℓ_j when node k fires (≥ 0).
    pub excitation: Vec<Vec<f64>>,
}

impl HawkesParams {
    pub fn n_nodes(&self) -> usize {
        self.baseline.len()
    }

    /// Branching matrix with entries `b[j][k]/α_j` (the integrated kernel).
    pub fn branching_matrix(&self) -> DMatrix<f64> {
        let n = self.n_nodes();
        DMatrix::from_fn(n, n, |j, k| self.excitation[j][k] / self.decay[j])
    }
}

pub(crate) fn validate_subcritical(params: &HawkesParams) -> Result<()> {
    let n = params.n_nodes();
    if params.decay.len() != n
        || params.excitation.len() != n
        || params.excitation.iter().any(|row| row.len() != n)
    {
        return Err(Error::parameter("hawkes", "parameter shapes disagree"));
    }
    if params.baseline.iter().any(|b| *b < 0.0)
        || params.decay.iter().any(|a| *a <= 0.0)
        || params.excitation.iter().flatten().any(|b| *b < 0.0)
    {
        return Err(Error::parameter("hawkes", "negative baseline/decay/excitation"));
    }
    let radius = crate::qbll::spectral_radius(&params.branching_matrix());
    if radius >= 1.0 {
        return Err(Error::parameter(
            "hawkes",
            format!("branching spectral radius {radius:.4} ≥ 1: not stationary"),
        ));
    }
    Ok(())
}

/// Stationary mean intensities: the solution of `(I − G) ℓ = ℓ_∞`.
pub fn stationary_intensity(params: &HawkesParams) -> Result<DVector<f64>> {
    validate_subcritical(params)?;
    let n = params.n_nodes();
    let system = DMatrix::identity(n, n) - params.branching_matrix();
    let baseline = DVector::from_column_slice(&params.baseline);
    system
        .lu()
        .solve(&baseline)
        .ok_or_else(|| Error::numerical("stationary_intensity", "singular I - G"))
}

/// Simulate jump times per node over `[0, horizon)` by Ogata thinning.
///
/// Intensities start at their stationary means. Between events the decay is
/// applied in closed form, so the algorithm is exact up to floating point.
pub fn simulate_hawkes(params: &HawkesParams, horizon: f64, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut rng = substream(seed, &["hawkes"], &[]);
    simulate_hawkes_with(params, horizon, &mut rng)
}

pub(crate) fn simulate_hawkes_with(
    params: &HawkesParams,
    horizon: f64,
    rng: &mut impl rand::Rng,
) -> Result<Vec<Vec<f64>>> {
    if !(horizon > 0.0) {
        return Err(Error::parameter("horizon", "must be positive"));
    }
    let n = params.n_nodes();
    let stationary = stationary_intensity(params)?;
    let mut intensity: Vec<f64> = stationary.iter().copied().collect();
    let mut events: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut t = 0.0f64;

    loop {
        // Intensities only decay between events (they start at or above the
        // baselines), so the current total bounds the future total.
        let bound: f64 = intensity.iter().sum();
        if bound <= 0.0 {
            break;
        }
        let wait = -rng.random::<f64>().max(f64::MIN_POSITIVE).ln() / bound;
        let candidate = t + wait;
        if candidate >= horizon {
            break;
        }
        // Exact decay to the candidate time.
        for j in 0..n {
            intensity[j] = params.baseline[j]
                + (intensity[j] - params.baseline[j]) * (-params.decay[j] * wait).exp();
        }
        t = candidate;
        let current: f64 = intensity.iter().sum();
        if rng.random::<f64>() * bound <= current {
            // Accept: attribute the event proportionally to intensities.
            let mut pick = rng.random::<f64>() * current;
            let mut node = n - 1;
            for j in 0..n {
                if pick < intensity[j] {
                    node = j;
                    break;
                }
                pick -= intensity[j];
            }
            events[node].push(t);
            for j in 0..n {
                intensity[j] += params.excitation[j][node];
            }
        }
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn three_node() -> HawkesParams {
        HawkesParams {
            baseline: vec![0.6, 0.4, 0.8],
            decay: vec![2.0, 1.5, 2.5],
            excitation: vec![
                vec![0.5, 0.2, 0.1],
                vec![0.1, 0.4, 0.2],
                vec![0.2, 0.1, 0.6],
            ],
        }
    }

    #[test]
    fn no_excitation_returns_baseline() {
        let p = HawkesParams {
            baseline: vec![1.0, 2.0],
            decay: vec![1.0, 1.0],
            excitation: vec![vec![0.0; 2]; 2],
        };
        let l = stationary_intensity(&p).unwrap();
        assert_abs_diff_eq!(l[0], 1.0);
        assert_abs_diff_eq!(l[1], 2.0);
    }

    #[test]
    fn scalar_geometric_series() {
        // b/α = 0.5, ℓ_∞ = 1 → ℓ = 1/(1−0.5) = 2.
        let p = HawkesParams {
            baseline: vec![1.0],
            decay: vec![2.0],
            excitation: vec![vec![1.0]],
        };
        assert_abs_diff_eq!(stationary_intensity(&p).unwrap()[0], 2.0, epsilon = 1e-14);
    }

    #[test]
    fn matches_fixed_point_iteration() {
        let p = three_node();
        let direct = stationary_intensity(&p).unwrap();
        // Oracle: iterate ℓ ← ℓ_∞ + G ℓ to convergence.
        let g = p.branching_matrix();
        let baseline = DVector::from_column_slice(&p.baseline);
        let mut l = baseline.clone();
        for _ in 0..10_000 {
            l = &baseline + &g * &l;
        }
        assert!((direct - l).amax() < 1e-12);
    }

    #[test]
    fn supercritical_network_rejected() {
        let p = HawkesParams {
            baseline: vec![1.0],
            decay: vec![1.0],
            excitation: vec![vec![1.5]],
        };
        assert!(stationary_intensity(&p).is_err());
    }

    #[test]
    fn poisson_reduction_event_count() {
        let p = HawkesParams {
            baseline: vec![0.7, 1.3],
            decay: vec![1.0, 1.0],
            excitation: vec![vec![0.0; 2]; 2],
        };
        let horizon = 5000.0;
        let events = simulate_hawkes(&p, horizon, 11).unwrap();
        for (j, lam) in [0.7, 1.3].iter().enumerate() {
            let rate = events[j].len() as f64 / horizon;
            let se = (lam / horizon).sqrt();
            assert!((rate - lam).abs() < 3.0 * se, "node {j}: rate {rate} vs {lam}");
        }
    }

    #[test]
    fn ergodic_mean_matches_stationary_intensity() {
        let p = three_node();
        let horizon = 10_000.0;
        let target = stationary_intensity(&p).unwrap();
        let events = simulate_hawkes(&p, horizon, 7).unwrap();
        for j in 0..3 {
            let rate = events[j].len() as f64 / horizon;
            // Batch-means standard error over 100 chunks absorbs clustering.
            let chunks = 100usize;
            let len = horizon / chunks as f64;
            let mut counts = vec![0.0f64; chunks];
            for &t in &events[j] {
                counts[((t / len) as usize).min(chunks - 1)] += 1.0;
            }
            let rates: Vec<f64> = counts.iter().map(|c| c / len).collect();
            let mean = rates.iter().sum::<f64>() / chunks as f64;
            let var = rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>()
                / (chunks as f64 - 1.0);
            let se = (var / chunks as f64).sqrt();
            assert!(
                (rate - target[j]).abs() < 3.0 * se,
                "node {j}: rate {rate} vs stationary {} (se {se})",
                target[j]
            );
        }
    }

    #[test]
    fn faster_decay_pulls_intensity_toward_baseline() {
        let mut p = three_node();
        let base = stationary_intensity(&p).unwrap();
        for a in p.decay.iter_mut() {
            *a *= 2.0;
        }
        let faster = stationary_intensity(&p).unwrap();
        for j in 0..3 {
            assert!(faster[j] < base[j]);
            assert!(faster[j] > p.baseline[j]);
        }

        // The simulated mean rate drops accordingly.
        let slow = simulate_hawkes(&three_node(), 4000.0, 3).unwrap();
        let fast = simulate_hawkes(&p, 4000.0, 3).unwrap();
        let total = |ev: &Vec<Vec<f64>>| ev.iter().map(Vec::len).sum::<usize>();
        assert!(total(&fast) < total(&slow));
    }
}
