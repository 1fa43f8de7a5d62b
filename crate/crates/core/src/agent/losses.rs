//! TD losses with exact analytic gradients.
//!
//! The quantile levels consumed by the IQN loss are drawn outside and passed
//! in, so a loss evaluation is a deterministic function of (models, batch,
//! samples) and can be checked against finite differences.

use super::policy::{argmax_lowest, cvar_distort, mean_per_action};
use super::Transition;
use crate::nn::{Mat, MlpModel, ModelGrads, Real};
use rand::Rng;

/// Quantile Huber loss `rho_tau^kappa(u)`: the pinball weight
/// `|tau - 1{u<0}|` applied to a Huber-smoothed error `L_kappa(u) / kappa`.
pub fn quantile_huber<T: Real>(u: T, tau: T, kappa: T) -> T {
    assert!(kappa > T::zero(), "kappa must be positive");
    let weight = if u < T::zero() { T::one() - tau } else { tau };
    let half = T::from_f64(0.5);
    let huber = if u.abs() <= kappa {
        half * u * u
    } else {
        kappa * (u.abs() - half * kappa)
    };
    weight.abs() * huber / kappa
}

/// Derivative of `quantile_huber` with respect to `u`.
fn quantile_huber_grad<T: Real>(u: T, tau: T, kappa: T) -> T {
    let weight = if u < T::zero() { T::one() - tau } else { tau };
    let slope = if u.abs() <= kappa {
        u
    } else {
        kappa * u.signum()
    };
    weight.abs() * slope / kappa
}

/// Per-transition quantile levels for one IQN loss evaluation: `tau` for the
/// online prediction (N), `tau_prime` for the bootstrap target (N'), and
/// `tau_action` for the next-action policy (K, distorted by the policy's
/// CVaR threshold before use).
#[derive(Debug, Clone, PartialEq)]
pub struct IqnLossSamples {
    pub tau: Vec<Vec<f64>>,
    pub tau_prime: Vec<Vec<f64>>,
    pub tau_action: Vec<Vec<f64>>,
}

impl IqnLossSamples {
    pub fn draw<R: Rng>(rng: &mut R, batch: usize, n: usize, n_prime: usize, k: usize) -> Self {
        let mut draw_set = |count: usize| -> Vec<Vec<f64>> {
            (0..batch)
                .map(|_| (0..count).map(|_| rng.gen::<f64>()).collect())
                .collect()
        };
        IqnLossSamples {
            tau: draw_set(n),
            tau_prime: draw_set(n_prime),
            tau_action: draw_set(k),
        }
    }
}

fn to_real<T: Real>(v: &[f32]) -> Vec<T> {
    v.iter().map(|&x| T::from_f64(x as f64)).collect()
}

/// Distributional TD loss over a batch (mean of the per-transition
/// `1/N' * sum_i sum_j rho_{tau_i}(delta_ij)`), with gradients for the
/// online model.
///
/// The bootstrap action is chosen by the sampled distorted-expectation
/// policy on the online model at `phi_target`; target quantiles come from
/// the target model. Terminal transitions regress every quantile onto the
/// bare reward.
pub fn iqn_loss<T: Real>(
    online: &MlpModel<T>,
    target: &MlpModel<T>,
    batch: &[&Transition],
    samples: &IqnLossSamples,
    gamma: f64,
    phi_target: f64,
    kappa: f64,
) -> (f64, ModelGrads<T>) {
    assert!(!batch.is_empty(), "batch must be non-empty");
    assert_eq!(samples.tau.len(), batch.len());
    assert_eq!(samples.tau_prime.len(), batch.len());
    assert_eq!(samples.tau_action.len(), batch.len());

    let mut grads = ModelGrads::zeros_like(online);
    let gamma_t = T::from_f64(gamma);
    let kappa_t = T::from_f64(kappa);
    let batch_scale = T::from_f64(1.0 / batch.len() as f64);
    let mut total = T::zero();

    for (b, tr) in batch.iter().enumerate() {
        let obs = to_real::<T>(&tr.obs);
        let taus: Vec<T> = samples.tau[b].iter().map(|&t| T::from_f64(t)).collect();
        let tape = online.forward_iqn(&obs, &taus);
        let action = tr.action as usize;
        let r = T::from_f64(tr.reward as f64);

        let targets: Vec<T> = if tr.terminal {
            vec![r; samples.tau_prime[b].len()]
        } else {
            let next = to_real::<T>(&tr.next_obs);
            let action_taus: Vec<T> = samples.tau_action[b]
                .iter()
                .map(|&t| cvar_distort(T::from_f64(t), T::from_f64(phi_target)))
                .collect();
            let z_policy = online.quantile_values(&next, &action_taus);
            let next_action = argmax_lowest(&mean_per_action(&z_policy));
            let tau_prime: Vec<T> = samples.tau_prime[b]
                .iter()
                .map(|&t| T::from_f64(t))
                .collect();
            let z_target = target.quantile_values(&next, &tau_prime);
            (0..tau_prime.len())
                .map(|j| r + gamma_t * z_target.row(j)[next_action])
                .collect()
        };

        let inv_n_prime = T::one() / T::from_f64(targets.len() as f64);
        let mut d_z = Mat::zeros(taus.len(), online.topology.actions);
        let mut pair_sum = T::zero();
        for (i, &tau_i) in taus.iter().enumerate() {
            let z_i = tape.z.row(i)[action];
            let mut d_acc = T::zero();
            for &y in &targets {
                let u = y - z_i;
                pair_sum += quantile_huber(u, tau_i, kappa_t);
                // d(loss)/d(z_i) through u = y - z_i.
                d_acc -= quantile_huber_grad(u, tau_i, kappa_t);
            }
            d_z.row_mut(i)[action] = d_acc * inv_n_prime * batch_scale;
        }
        total += pair_sum * inv_n_prime;
        online.backward_iqn(&tape, &d_z, &mut grads);
    }

    ((total * batch_scale).to_f64(), grads)
}

/// Mean squared TD error over a batch with gradients for the online model.
/// Terminal transitions drop the bootstrap term.
pub fn dqn_loss<T: Real>(
    online: &MlpModel<T>,
    target: &MlpModel<T>,
    batch: &[&Transition],
    gamma: f64,
) -> (f64, ModelGrads<T>) {
    assert!(!batch.is_empty(), "batch must be non-empty");
    let mut grads = ModelGrads::zeros_like(online);
    let gamma_t = T::from_f64(gamma);
    let batch_scale = T::from_f64(1.0 / batch.len() as f64);
    let two = T::from_f64(2.0);
    let mut total = T::zero();

    for tr in batch {
        let obs = to_real::<T>(&tr.obs);
        let tape = online.forward_dqn(&obs);
        let action = tr.action as usize;
        let r = T::from_f64(tr.reward as f64);
        let y = if tr.terminal {
            r
        } else {
            let next = to_real::<T>(&tr.next_obs);
            let q_next = target.q_values(&next);
            let max_next = q_next
                .iter()
                .copied()
                .fold(T::neg_infinity(), T::max);
            r + gamma_t * max_next
        };
        let err = tape.q[action] - y;
        total += err * err;
        let mut d_q = vec![T::zero(); online.topology.actions];
        d_q[action] = two * err * batch_scale;
        online.backward_dqn(&tape, &d_q, &mut grads);
    }

    ((total * batch_scale).to_f64(), grads)
}
