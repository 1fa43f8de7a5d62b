//! Finite-difference verification of the analytic gradients, in f64.
//!
//! Instances are regenerated until every ReLU pre-activation, Huber kink,
//! and action-selection margin sits safely away from its non-smooth point,
//! so central differences with h = 1e-4 measure the true derivative.

use marinenav::agent::{dqn_loss, iqn_loss, IqnLossSamples, Transition};
use marinenav::nn::{Mat, MlpModel, ModelGrads, ModelKind, Topology};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

const H: f64 = 1e-4;
const REL_TOL: f64 = 1e-4;
/// Distance every non-smooth point must keep from the evaluation point.
const SMOOTH_MARGIN: f64 = 1e-3;

fn micro_topology() -> Topology {
    Topology {
        velocity_in: 2,
        goal_in: 2,
        lidar_in: 5,
        velocity_hidden: 3,
        goal_hidden: 3,
        lidar_hidden: 4,
        state_dim: 6,
        hidden_dim: 5,
        actions: 3,
        cosine_features: 6,
    }
}

fn random_features(rng: &mut ChaCha20Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn far_from_kinks(values: &[f64]) -> bool {
    values.iter().all(|v| v.abs() > SMOOTH_MARGIN)
}

fn state_pre_activations(model: &MlpModel<f64>, features: &[f64], taus: &[f64]) -> Vec<f64> {
    match model.kind {
        ModelKind::Dqn => {
            let tape = model.forward_dqn(features);
            let mut pre = tape.state.vel_pre.clone();
            pre.extend(&tape.state.goal_pre);
            pre.extend(&tape.state.lidar_pre);
            pre.extend(&tape.state.fusion_pre);
            pre.extend(&tape.hidden_pre);
            pre
        }
        ModelKind::Iqn => {
            let tape = model.forward_iqn(features, taus);
            let mut pre = tape.state.vel_pre.clone();
            pre.extend(&tape.state.goal_pre);
            pre.extend(&tape.state.lidar_pre);
            pre.extend(&tape.state.fusion_pre);
            pre.extend(&tape.embed_pre.data);
            pre.extend(&tape.hidden_pre.data);
            pre
        }
    }
}

/// Central finite differences of `loss` over every parameter, compared to
/// `analytic` with the stated relative tolerance.
fn check_against_fd(
    model: &MlpModel<f64>,
    analytic: &ModelGrads<f64>,
    loss: impl Fn(&MlpModel<f64>) -> f64,
    context: &str,
) {
    let layer_count = model.layers().len();
    for li in 0..layer_count {
        for target_bias in [false, true] {
            let len = if target_bias {
                model.layers()[li].bias.len()
            } else {
                model.layers()[li].weights.len()
            };
            for pi in 0..len {
                let mut plus = model.clone();
                let mut minus = model.clone();
                if target_bias {
                    plus.layers_mut()[li].bias[pi] += H;
                    minus.layers_mut()[li].bias[pi] -= H;
                } else {
                    plus.layers_mut()[li].weights[pi] += H;
                    minus.layers_mut()[li].weights[pi] -= H;
                }
                let numeric = (loss(&plus) - loss(&minus)) / (2.0 * H);
                let a = if target_bias {
                    analytic.layers()[li].bias[pi]
                } else {
                    analytic.layers()[li].weights[pi]
                };
                let scale = a.abs().max(numeric.abs()).max(1e-6);
                assert!(
                    (a - numeric).abs() / scale < REL_TOL,
                    "{context}: layer {li} {} {pi}: analytic {a} vs numeric {numeric}",
                    if target_bias { "bias" } else { "weight" }
                );
            }
        }
    }
}

#[test]
fn dqn_forward_gradients_match_finite_differences() {
    let topology = micro_topology();
    let mut rng = ChaCha20Rng::seed_from_u64(100);
    for instance in 0..10 {
        let (model, features, probe) = loop {
            let seed = rng.gen::<u64>();
            let model = MlpModel::<f64>::new(ModelKind::Dqn, topology, seed);
            let features = random_features(&mut rng, topology.input_len());
            if far_from_kinks(&state_pre_activations(&model, &features, &[])) {
                let probe: Vec<f64> = (0..topology.actions)
                    .map(|_| rng.gen_range(-1.0..1.0))
                    .collect();
                break (model, features, probe);
            }
        };
        // Scalar functional of the outputs: sum_i c_i * q_i.
        let tape = model.forward_dqn(&features);
        let mut grads = ModelGrads::zeros_like(&model);
        model.backward_dqn(&tape, &probe, &mut grads);
        check_against_fd(
            &model,
            &grads,
            |m| {
                m.q_values(&features)
                    .iter()
                    .zip(&probe)
                    .map(|(q, c)| q * c)
                    .sum()
            },
            &format!("dqn forward instance {instance}"),
        );
    }
}

#[test]
fn iqn_forward_gradients_match_finite_differences() {
    let topology = micro_topology();
    let mut rng = ChaCha20Rng::seed_from_u64(200);
    for instance in 0..10 {
        let (model, features, taus, probe) = loop {
            let seed = rng.gen::<u64>();
            let model = MlpModel::<f64>::new(ModelKind::Iqn, topology, seed);
            let features = random_features(&mut rng, topology.input_len());
            let taus: Vec<f64> = (0..3).map(|_| rng.gen::<f64>()).collect();
            if far_from_kinks(&state_pre_activations(&model, &features, &taus)) {
                let mut probe = Mat::zeros(taus.len(), topology.actions);
                probe.data.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
                break (model, features, taus, probe);
            }
        };
        let tape = model.forward_iqn(&features, &taus);
        let mut grads = ModelGrads::zeros_like(&model);
        model.backward_iqn(&tape, &probe, &mut grads);
        check_against_fd(
            &model,
            &grads,
            |m| {
                m.quantile_values(&features, &taus)
                    .data
                    .iter()
                    .zip(&probe.data)
                    .map(|(z, c)| z * c)
                    .sum()
            },
            &format!("iqn forward instance {instance}"),
        );
    }
}

fn random_transition(rng: &mut ChaCha20Rng, input_len: usize, actions: usize) -> Transition {
    Transition {
        obs: (0..input_len)
            .map(|_| rng.gen_range(-1.0f32..1.0))
            .collect::<Vec<_>>()
            .into_boxed_slice(),
        action: rng.gen_range(0..actions) as u8,
        reward: rng.gen_range(-2.0f32..2.0),
        next_obs: (0..input_len)
            .map(|_| rng.gen_range(-1.0f32..1.0))
            .collect::<Vec<_>>()
            .into_boxed_slice(),
        terminal: rng.gen_bool(0.25),
    }
}

/// All smoothness margins for one IQN loss instance: ReLU kinks for the
/// perturbed (online) passes, Huber kinks of every TD error, and the
/// next-action selection gap.
fn iqn_instance_is_smooth(
    online: &MlpModel<f64>,
    target: &MlpModel<f64>,
    batch: &[&Transition],
    samples: &IqnLossSamples,
    gamma: f64,
    kappa: f64,
) -> bool {
    for (b, tr) in batch.iter().enumerate() {
        let obs: Vec<f64> = tr.obs.iter().map(|&v| v as f64).collect();
        let next: Vec<f64> = tr.next_obs.iter().map(|&v| v as f64).collect();
        if !far_from_kinks(&state_pre_activations(online, &obs, &samples.tau[b])) {
            return false;
        }
        if !far_from_kinks(&state_pre_activations(online, &next, &samples.tau_action[b])) {
            return false;
        }
        let z = online.forward_iqn(&obs, &samples.tau[b]).z;
        let targets: Vec<f64> = if tr.terminal {
            vec![tr.reward as f64; samples.tau_prime[b].len()]
        } else {
            let zk = online.quantile_values(&next, &samples.tau_action[b]);
            let mut means = vec![0.0; zk.cols];
            for r in 0..zk.rows {
                for (m, v) in means.iter_mut().zip(zk.row(r)) {
                    *m += v / zk.rows as f64;
                }
            }
            let mut sorted = means.clone();
            sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
            if sorted.len() > 1 && (sorted[0] - sorted[1]).abs() < 10.0 * SMOOTH_MARGIN {
                return false;
            }
            let best = means
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            let zt = target.quantile_values(
                &next,
                &samples.tau_prime[b],
            );
            (0..zt.rows)
                .map(|j| tr.reward as f64 + gamma * zt.row(j)[best])
                .collect()
        };
        for (i, _) in samples.tau[b].iter().enumerate() {
            let z_i = z.row(i)[tr.action as usize];
            for y in &targets {
                let u = y - z_i;
                if u.abs() < SMOOTH_MARGIN || (u.abs() - kappa).abs() < SMOOTH_MARGIN {
                    return false;
                }
            }
        }
    }
    true
}

#[test]
fn iqn_loss_gradients_match_finite_differences() {
    let topology = micro_topology();
    let gamma = 0.99;
    let kappa = 1.0;
    let mut rng = ChaCha20Rng::seed_from_u64(300);
    for instance in 0..10 {
        let (online, target, batch, samples) = loop {
            let online = MlpModel::<f64>::new(ModelKind::Iqn, topology, rng.gen());
            let target = MlpModel::<f64>::new(ModelKind::Iqn, topology, rng.gen());
            let batch: Vec<Transition> = (0..2)
                .map(|_| random_transition(&mut rng, topology.input_len(), topology.actions))
                .collect();
            let refs: Vec<&Transition> = batch.iter().collect();
            let samples = IqnLossSamples::draw(&mut rng, batch.len(), 2, 2, 3);
            if iqn_instance_is_smooth(&online, &target, &refs, &samples, gamma, kappa) {
                break (online, target, batch, samples);
            }
        };
        let refs: Vec<&Transition> = batch.iter().collect();
        let (_, grads) = iqn_loss(&online, &target, &refs, &samples, gamma, 1.0, kappa);
        check_against_fd(
            &online,
            &grads,
            |m| iqn_loss(m, &target, &refs, &samples, gamma, 1.0, kappa).0,
            &format!("iqn loss instance {instance}"),
        );
    }
}

#[test]
fn dqn_loss_gradients_match_finite_differences() {
    let topology = micro_topology();
    let gamma = 0.99;
    let mut rng = ChaCha20Rng::seed_from_u64(400);
    for instance in 0..10 {
        let (online, target, batch) = loop {
            let online = MlpModel::<f64>::new(ModelKind::Dqn, topology, rng.gen());
            let target = MlpModel::<f64>::new(ModelKind::Dqn, topology, rng.gen());
            let batch: Vec<Transition> = (0..3)
                .map(|_| random_transition(&mut rng, topology.input_len(), topology.actions))
                .collect();
            let smooth = batch.iter().all(|tr| {
                let obs: Vec<f64> = tr.obs.iter().map(|&v| v as f64).collect();
                far_from_kinks(&state_pre_activations(&online, &obs, &[]))
            });
            if smooth {
                break (online, target, batch);
            }
        };
        let refs: Vec<&Transition> = batch.iter().collect();
        let (_, grads) = dqn_loss(&online, &target, &refs, gamma);
        check_against_fd(
            &online,
            &grads,
            |m| dqn_loss(m, &target, &refs, gamma).0,
            &format!("dqn loss instance {instance}"),
        );
    }
}
