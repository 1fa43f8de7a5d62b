//! Risk-sensitive action selection and the adaptive CVaR threshold rule.

use crate::nn::{Mat, Real};
use crate::sensing::Observation;
use rand::Rng;

/// CVaR distortion of a quantile level: `f(tau; phi) = phi * tau`.
/// `phi = 1` is risk-neutral; smaller values concentrate on the lower tail.
pub fn cvar_distort<T: Real>(tau: T, phi: T) -> T {
    phi * tau
}

/// Index of the largest value, ties broken toward the lowest index.
pub fn argmax_lowest<T: PartialOrd>(values: &[T]) -> usize {
    let mut best = 0;
    for i in 1..values.len() {
        if values[i] > values[best] {
            best = i;
        }
    }
    best
}

/// Column means of a quantile matrix: the sample-mean value per action.
pub fn mean_per_action<T: Real>(z: &Mat<T>) -> Vec<T> {
    let scale = T::one() / T::from_f64(z.rows as f64);
    let mut means = vec![T::zero(); z.cols];
    for r in 0..z.rows {
        for (m, &v) in means.iter_mut().zip(z.row(r)) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m *= scale);
    means
}

/// Risk-sensitive policy: draw `k` quantile levels uniformly, distort them
/// by the CVaR threshold `phi`, evaluate quantile values through the given
/// model closure, and pick the action with the highest sample mean. Ties go
/// to the lowest action index.
///
/// The closure receives the distorted levels and must return a
/// `k x actions` matrix of quantile values.
pub fn select_action_iqn<T, F, R>(quantiles: F, phi: f64, k: usize, rng: &mut R) -> usize
where
    T: Real,
    F: FnOnce(&[T]) -> Mat<T>,
    R: Rng,
{
    assert!(k >= 1, "at least one quantile sample is required");
    assert!(phi > 0.0 && phi <= 1.0, "phi must lie in (0, 1]");
    let taus: Vec<T> = (0..k)
        .map(|_| cvar_distort(T::from_f64(rng.gen::<f64>()), T::from_f64(phi)))
        .collect();
    let z = quantiles(&taus);
    assert_eq!(z.rows, k, "quantile matrix must have one row per sample");
    argmax_lowest(&mean_per_action(&z))
}

/// Adaptive CVaR threshold: the closer the nearest detected obstacle, the
/// more risk-sensitive the policy. With no detection inside the LiDAR range
/// the policy is greedy (`phi = 1`).
pub fn adaptive_phi(obs: &Observation, max_range: f64) -> f64 {
    let min = obs.min_range();
    if min >= max_range {
        1.0
    } else {
        (min / max_range).clamp(f64::MIN_POSITIVE, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vec2::Vec2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn distortion_is_a_plain_product() {
        assert_eq!(cvar_distort(0.8f64, 0.5), 0.4);
        assert_eq!(cvar_distort(0.3f64, 1.0), 0.3);
        // Distorted levels never exceed phi.
        assert_eq!(cvar_distort(1.0f64, 0.25), 0.25);
    }

    /// Two-action stub: action A is a constant 0.5; action B is -1 below the
    /// median and +2.2 above it, so its mean is 0.6 but its lower tail is -1.
    fn stub(taus: &[f64]) -> Mat<f64> {
        let mut z = Mat::zeros(taus.len(), 2);
        for (r, &tau) in taus.iter().enumerate() {
            z.row_mut(r)[0] = 0.5;
            z.row_mut(r)[1] = if tau < 0.5 { -1.0 } else { 2.2 };
        }
        z
    }

    #[test]
    fn risk_neutral_prefers_the_higher_mean() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        // Large K keeps the sample mean close to the exact 0.6 vs 0.5 gap.
        let a = select_action_iqn(stub, 1.0, 10_000, &mut rng);
        assert_eq!(a, 1);
    }

    #[test]
    fn low_phi_retreats_to_the_safe_action() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        // At phi = 0.5 every distorted level lands in B's -1 branch.
        let a = select_action_iqn(stub, 0.5, 32, &mut rng);
        assert_eq!(a, 0);
    }

    #[test]
    fn constant_quantiles_select_the_argmax_for_every_phi_and_k() {
        // Tau-independent quantiles: the distortion cannot change the
        // ordering, so the selection must be the plain argmax always.
        let constant = |taus: &[f64]| {
            let mut z = Mat::zeros(taus.len(), 3);
            for r in 0..taus.len() {
                z.row_mut(r).copy_from_slice(&[0.1, 0.9, 0.3]);
            }
            z
        };
        let mut rng = ChaCha20Rng::seed_from_u64(77);
        for phi in [0.05, 0.25, 0.5, 0.75, 1.0] {
            for k in [1, 2, 8, 64] {
                assert_eq!(select_action_iqn(constant, phi, k, &mut rng), 1);
            }
        }
    }

    #[test]
    fn ties_break_to_the_lowest_action() {
        let flat = |taus: &[f64]| {
            let mut z = Mat::zeros(taus.len(), 3);
            z.data.iter_mut().for_each(|v| *v = 1.0);
            z
        };
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        assert_eq!(select_action_iqn(flat, 1.0, 8, &mut rng), 0);
    }

    fn obs_with_ranges(ranges: Vec<f64>) -> Observation {
        Observation {
            velocity: Vec2::ZERO,
            goal: Vec2::ZERO,
            ranges,
        }
    }

    #[test]
    fn adaptive_phi_tracks_nearest_reflection() {
        let obs = obs_with_ranges(vec![10.0, 5.0, 8.0]);
        assert_eq!(adaptive_phi(&obs, 10.0), 0.5);
    }

    #[test]
    fn adaptive_phi_is_greedy_without_detections() {
        let obs = obs_with_ranges(vec![10.0, 10.0]);
        assert_eq!(adaptive_phi(&obs, 10.0), 1.0);
    }

    #[test]
    fn adaptive_phi_is_continuous_at_the_range_boundary() {
        let just_inside = obs_with_ranges(vec![10.0 - 1e-9]);
        assert!((adaptive_phi(&just_inside, 10.0) - 1.0).abs() < 1e-9);
        let at_limit = obs_with_ranges(vec![10.0]);
        assert_eq!(adaptive_phi(&at_limit, 10.0), 1.0);
    }
}
