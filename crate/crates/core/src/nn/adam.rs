//! Bias-corrected Adam updates over a model's parameter list.

use super::{MlpModel, ModelGrads, Real};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment accumulators matching a model's layers.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub params: AdamParams,
    pub step: u64,
    moments: Vec<LayerMoments<T>>,
}

#[derive(Debug, Clone)]
struct LayerMoments<T> {
    m_w: Vec<T>,
    v_w: Vec<T>,
    m_b: Vec<T>,
    v_b: Vec<T>,
}

impl<T: Real> AdamState<T> {
    pub fn new(model: &MlpModel<T>, params: AdamParams) -> Self {
        let moments = model
            .layers()
            .iter()
            .map(|l| LayerMoments {
                m_w: vec![T::zero(); l.weights.len()],
                v_w: vec![T::zero(); l.weights.len()],
                m_b: vec![T::zero(); l.bias.len()],
                v_b: vec![T::zero(); l.bias.len()],
            })
            .collect();
        AdamState {
            params,
            step: 0,
            moments,
        }
    }
}

/// Apply one Adam update in place. Gradient shapes must match the model the
/// state was built for.
pub fn adam_step<T: Real>(model: &mut MlpModel<T>, grads: &ModelGrads<T>, state: &mut AdamState<T>) {
    state.step += 1;
    let t = state.step as i32;
    let p = state.params;
    let lr = T::from_f64(p.learning_rate);
    let b1 = T::from_f64(p.beta1);
    let b2 = T::from_f64(p.beta2);
    let eps = T::from_f64(p.epsilon);
    let bias1 = T::one() - T::from_f64(p.beta1.powi(t));
    let bias2 = T::one() - T::from_f64(p.beta2.powi(t));

    let update = |theta: &mut [T], g: &[T], m: &mut [T], v: &mut [T]| {
        debug_assert_eq!(theta.len(), g.len());
        for i in 0..theta.len() {
            m[i] = b1 * m[i] + (T::one() - b1) * g[i];
            v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            theta[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    };

    let grad_layers = grads.layers();
    for ((layer, g), mom) in model
        .layers_mut()
        .into_iter()
        .zip(grad_layers)
        .zip(state.moments.iter_mut())
    {
        update(&mut layer.weights, &g.weights, &mut mom.m_w, &mut mom.v_w);
        update(&mut layer.bias, &g.bias, &mut mom.m_b, &mut mom.v_b);
    }
}
