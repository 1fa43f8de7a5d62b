//! The two network topologies: per-source observation encoders fused into a
//! state feature, a Q head for DQN, and a cosine-embedded quantile branch
//! merged by element-wise product for IQN.

use super::{cosine_embed, Activation, Linear, Mat, Real};
use crate::seed::{derive_rng, Stream};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Dqn,
    Iqn,
}

impl ModelKind {
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Dqn => "dqn",
            ModelKind::Iqn => "iqn",
        }
    }

    pub fn from_label(s: &str) -> Option<ModelKind> {
        match s {
            "dqn" => Some(ModelKind::Dqn),
            "iqn" => Some(ModelKind::Iqn),
            _ => None,
        }
    }
}

/// Layer widths. The observation encoders are fixed by the sensor layout;
/// the rest are architecture defaults small enough to train on a CPU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub velocity_in: usize,
    pub goal_in: usize,
    pub lidar_in: usize,
    pub velocity_hidden: usize,
    pub goal_hidden: usize,
    pub lidar_hidden: usize,
    pub state_dim: usize,
    pub hidden_dim: usize,
    pub actions: usize,
    pub cosine_features: usize,
}

impl Topology {
    /// Standard sizes for the given beam count.
    pub fn standard(lidar_beams: usize) -> Topology {
        Topology {
            velocity_in: 2,
            goal_in: 2,
            lidar_in: lidar_beams,
            velocity_hidden: 32,
            goal_hidden: 32,
            lidar_hidden: 96,
            state_dim: 128,
            hidden_dim: 128,
            actions: 9,
            cosine_features: 64,
        }
    }

    pub fn input_len(&self) -> usize {
        self.velocity_in + self.goal_in + self.lidar_in
    }

    pub fn encoder_out(&self) -> usize {
        self.velocity_hidden + self.goal_hidden + self.lidar_hidden
    }
}

/// Dense model with per-source encoders. DQN and IQN share the state
/// pathway; IQN adds the quantile embedding branch.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel<T> {
    pub kind: ModelKind,
    pub topology: Topology,
    pub velocity_encoder: Linear<T>,
    pub goal_encoder: Linear<T>,
    pub lidar_encoder: Linear<T>,
    pub fusion: Linear<T>,
    /// Cosine-feature projection, IQN only.
    pub quantile_embed: Option<Linear<T>>,
    pub hidden: Linear<T>,
    pub output: Linear<T>,
}

/// Cached activations of the shared state pathway.
#[derive(Debug, Clone, Default)]
pub struct StateTape<T> {
    pub input: Vec<T>,
    pub vel_pre: Vec<T>,
    pub vel_out: Vec<T>,
    pub goal_pre: Vec<T>,
    pub goal_out: Vec<T>,
    pub lidar_pre: Vec<T>,
    pub lidar_out: Vec<T>,
    pub concat: Vec<T>,
    pub fusion_pre: Vec<T>,
    /// Post-activation state feature.
    pub state: Vec<T>,
}

/// Forward cache of a DQN pass.
#[derive(Debug, Clone)]
pub struct DqnTape<T> {
    pub state: StateTape<T>,
    pub hidden_pre: Vec<T>,
    pub hidden_out: Vec<T>,
    pub out_pre: Vec<T>,
    /// Per-action values.
    pub q: Vec<T>,
}

/// Forward cache of an IQN pass over a set of quantile levels.
#[derive(Debug, Clone)]
pub struct IqnTape<T> {
    pub state: StateTape<T>,
    /// Quantile levels the network was evaluated at (after any distortion).
    pub taus: Vec<T>,
    pub cos_features: Mat<T>,
    pub embed_pre: Mat<T>,
    pub embed_out: Mat<T>,
    pub merged: Mat<T>,
    pub hidden_pre: Mat<T>,
    pub hidden_out: Mat<T>,
    pub out_pre: Mat<T>,
    /// Quantile values, `taus.len() x actions`.
    pub z: Mat<T>,
}

/// Parameter gradients, same shapes as the model's layers.
#[derive(Debug, Clone)]
pub struct LayerGrads<T> {
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> LayerGrads<T> {
    fn zeros_like(layer: &Linear<T>) -> Self {
        LayerGrads {
            weights: vec![T::zero(); layer.weights.len()],
            bias: vec![T::zero(); layer.bias.len()],
        }
    }

    fn zero(&mut self) {
        self.weights.iter_mut().for_each(|g| *g = T::zero());
        self.bias.iter_mut().for_each(|g| *g = T::zero());
    }
}

#[derive(Debug, Clone)]
pub struct ModelGrads<T> {
    pub velocity: LayerGrads<T>,
    pub goal: LayerGrads<T>,
    pub lidar: LayerGrads<T>,
    pub fusion: LayerGrads<T>,
    pub quantile_embed: Option<LayerGrads<T>>,
    pub hidden: LayerGrads<T>,
    pub output: LayerGrads<T>,
}

impl<T: Real> ModelGrads<T> {
    pub fn zeros_like(model: &MlpModel<T>) -> Self {
        ModelGrads {
            velocity: LayerGrads::zeros_like(&model.velocity_encoder),
            goal: LayerGrads::zeros_like(&model.goal_encoder),
            lidar: LayerGrads::zeros_like(&model.lidar_encoder),
            fusion: LayerGrads::zeros_like(&model.fusion),
            quantile_embed: model.quantile_embed.as_ref().map(LayerGrads::zeros_like),
            hidden: LayerGrads::zeros_like(&model.hidden),
            output: LayerGrads::zeros_like(&model.output),
        }
    }

    pub fn zero(&mut self) {
        self.velocity.zero();
        self.goal.zero();
        self.lidar.zero();
        self.fusion.zero();
        if let Some(q) = self.quantile_embed.as_mut() {
            q.zero();
        }
        self.hidden.zero();
        self.output.zero();
    }

    pub fn layers(&self) -> Vec<&LayerGrads<T>> {
        let mut v = vec![&self.velocity, &self.goal, &self.lidar, &self.fusion];
        if let Some(q) = self.quantile_embed.as_ref() {
            v.push(q);
        }
        v.push(&self.hidden);
        v.push(&self.output);
        v
    }

    /// Largest absolute gradient entry; useful for sanity checks.
    pub fn max_abs(&self) -> T {
        self.layers()
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias))
            .fold(T::zero(), |m, &g| m.max(g.abs()))
    }
}

impl<T: Real> MlpModel<T> {
    /// Fresh model with seeded He-uniform weights and zero biases.
    pub fn new(kind: ModelKind, topology: Topology, seed: u64) -> Self {
        let mut rng = derive_rng(seed, Stream::Init, 0);
        let t = &topology;
        let velocity_encoder =
            Linear::init(t.velocity_in, t.velocity_hidden, Activation::Relu, &mut rng);
        let goal_encoder = Linear::init(t.goal_in, t.goal_hidden, Activation::Relu, &mut rng);
        let lidar_encoder = Linear::init(t.lidar_in, t.lidar_hidden, Activation::Relu, &mut rng);
        let fusion = Linear::init(t.encoder_out(), t.state_dim, Activation::Relu, &mut rng);
        let quantile_embed = match kind {
            ModelKind::Iqn => Some(Linear::init(
                t.cosine_features,
                t.state_dim,
                Activation::Relu,
                &mut rng,
            )),
            ModelKind::Dqn => None,
        };
        let hidden = Linear::init(t.state_dim, t.hidden_dim, Activation::Relu, &mut rng);
        let output = Linear::init(t.hidden_dim, t.actions, Activation::Identity, &mut rng);
        MlpModel {
            kind,
            topology,
            velocity_encoder,
            goal_encoder,
            lidar_encoder,
            fusion,
            quantile_embed,
            hidden,
            output,
        }
    }

    pub fn layers(&self) -> Vec<&Linear<T>> {
        let mut v = vec![
            &self.velocity_encoder,
            &self.goal_encoder,
            &self.lidar_encoder,
            &self.fusion,
        ];
        if let Some(q) = self.quantile_embed.as_ref() {
            v.push(q);
        }
        v.push(&self.hidden);
        v.push(&self.output);
        v
    }

    pub fn layers_mut(&mut self) -> Vec<&mut Linear<T>> {
        let mut v = vec![
            &mut self.velocity_encoder,
            &mut self.goal_encoder,
            &mut self.lidar_encoder,
            &mut self.fusion,
        ];
        if let Some(q) = self.quantile_embed.as_mut() {
            v.push(q);
        }
        v.push(&mut self.hidden);
        v.push(&mut self.output);
        v
    }

    /// Layer names in `layers()` order, used by the checkpoint format.
    pub fn layer_names(&self) -> Vec<&'static str> {
        let mut v = vec!["velocity_encoder", "goal_encoder", "lidar_encoder", "fusion"];
        if self.quantile_embed.is_some() {
            v.push("quantile_embed");
        }
        v.push("hidden");
        v.push("output");
        v
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|l| l.param_count()).sum()
    }

    fn state_features(&self, features: &[T]) -> StateTape<T> {
        let t = &self.topology;
        assert_eq!(
            features.len(),
            t.input_len(),
            "feature vector length does not match the model topology"
        );
        let mut tape = StateTape {
            input: features.to_vec(),
            ..StateTape::default()
        };
        let (vel, rest) = features.split_at(t.velocity_in);
        let (goal, lidar) = rest.split_at(t.goal_in);
        self.velocity_encoder
            .forward(vel, &mut tape.vel_pre, &mut tape.vel_out);
        self.goal_encoder
            .forward(goal, &mut tape.goal_pre, &mut tape.goal_out);
        self.lidar_encoder
            .forward(lidar, &mut tape.lidar_pre, &mut tape.lidar_out);
        tape.concat.extend_from_slice(&tape.vel_out);
        tape.concat.extend_from_slice(&tape.goal_out);
        tape.concat.extend_from_slice(&tape.lidar_out);
        let concat = std::mem::take(&mut tape.concat);
        self.fusion
            .forward(&concat, &mut tape.fusion_pre, &mut tape.state);
        tape.concat = concat;
        tape
    }

    fn backward_state(&self, tape: &StateTape<T>, d_state: &[T], grads: &mut ModelGrads<T>) {
        let t = &self.topology;
        let mut d_concat = vec![T::zero(); t.encoder_out()];
        self.fusion.backward(
            &tape.concat,
            &tape.fusion_pre,
            d_state,
            &mut grads.fusion.weights,
            &mut grads.fusion.bias,
            &mut d_concat,
        );
        let (d_vel, rest) = d_concat.split_at(t.velocity_hidden);
        let (d_goal, d_lidar) = rest.split_at(t.goal_hidden);
        let (vel_in, rest_in) = tape.input.split_at(t.velocity_in);
        let (goal_in, lidar_in) = rest_in.split_at(t.goal_in);
        // Input gradients are not needed; the scratch buffer absorbs them.
        let mut scratch = vec![T::zero(); t.lidar_in.max(t.velocity_in).max(t.goal_in)];
        self.velocity_encoder.backward(
            vel_in,
            &tape.vel_pre,
            d_vel,
            &mut grads.velocity.weights,
            &mut grads.velocity.bias,
            &mut scratch[..t.velocity_in],
        );
        scratch.iter_mut().for_each(|g| *g = T::zero());
        self.goal_encoder.backward(
            goal_in,
            &tape.goal_pre,
            d_goal,
            &mut grads.goal.weights,
            &mut grads.goal.bias,
            &mut scratch[..t.goal_in],
        );
        scratch.iter_mut().for_each(|g| *g = T::zero());
        self.lidar_encoder.backward(
            lidar_in,
            &tape.lidar_pre,
            d_lidar,
            &mut grads.lidar.weights,
            &mut grads.lidar.bias,
            &mut scratch[..t.lidar_in],
        );
    }

    /// DQN forward pass with cached activations.
    pub fn forward_dqn(&self, features: &[T]) -> DqnTape<T> {
        assert_eq!(self.kind, ModelKind::Dqn, "forward_dqn on an IQN model");
        let state = self.state_features(features);
        let mut hidden_pre = Vec::new();
        let mut hidden_out = Vec::new();
        self.hidden.forward(&state.state, &mut hidden_pre, &mut hidden_out);
        let mut out_pre = Vec::new();
        let mut q = Vec::new();
        self.output.forward(&hidden_out, &mut out_pre, &mut q);
        DqnTape {
            state,
            hidden_pre,
            hidden_out,
            out_pre,
            q,
        }
    }

    /// Per-action values for a DQN model.
    pub fn q_values(&self, features: &[T]) -> Vec<T> {
        self.forward_dqn(features).q
    }

    /// IQN forward pass at the given quantile levels (already distorted by
    /// the policy's risk measure where applicable), with cached activations.
    pub fn forward_iqn(&self, features: &[T], taus: &[T]) -> IqnTape<T> {
        let embed = self
            .quantile_embed
            .as_ref()
            .expect("forward_iqn on a DQN model");
        assert!(!taus.is_empty(), "at least one quantile level is required");
        debug_assert!(taus
            .iter()
            .all(|t| *t >= T::zero() && *t <= T::one()));
        let t = self.topology;
        let state = self.state_features(features);
        let n = taus.len();
        let mut tape = IqnTape {
            state,
            taus: taus.to_vec(),
            cos_features: Mat::zeros(n, t.cosine_features),
            embed_pre: Mat::zeros(n, t.state_dim),
            embed_out: Mat::zeros(n, t.state_dim),
            merged: Mat::zeros(n, t.state_dim),
            hidden_pre: Mat::zeros(n, t.hidden_dim),
            hidden_out: Mat::zeros(n, t.hidden_dim),
            out_pre: Mat::zeros(n, t.actions),
            z: Mat::zeros(n, t.actions),
        };
        for (r, &tau) in taus.iter().enumerate() {
            let cos = cosine_embed(tau, T::one(), t.cosine_features);
            tape.cos_features.row_mut(r).copy_from_slice(&cos);
            forward_into(
                embed,
                &cos,
                tape.embed_pre.row_mut(r),
                tape.embed_out.row_mut(r),
            );
            for i in 0..t.state_dim {
                tape.merged.row_mut(r)[i] = tape.state.state[i] * tape.embed_out.row(r)[i];
            }
            let merged = tape.merged.row(r).to_vec();
            forward_into(
                &self.hidden,
                &merged,
                tape.hidden_pre.row_mut(r),
                tape.hidden_out.row_mut(r),
            );
            let hidden_out = tape.hidden_out.row(r).to_vec();
            forward_into(
                &self.output,
                &hidden_out,
                tape.out_pre.row_mut(r),
                tape.z.row_mut(r),
            );
        }
        tape
    }

    /// Quantile values, `taus.len() x actions`.
    pub fn quantile_values(&self, features: &[T], taus: &[T]) -> Mat<T> {
        self.forward_iqn(features, taus).z
    }

    /// Unified forward: DQN models return a `1 x actions` matrix and take no
    /// quantile levels; IQN models return `taus.len() x actions`.
    pub fn forward(&self, features: &[T], taus: Option<&[T]>) -> Mat<T> {
        match self.kind {
            ModelKind::Dqn => {
                assert!(taus.is_none(), "DQN forward takes no quantile levels");
                let q = self.q_values(features);
                Mat {
                    rows: 1,
                    cols: q.len(),
                    data: q,
                }
            }
            ModelKind::Iqn => {
                let taus = taus.expect("IQN forward requires quantile levels");
                self.quantile_values(features, taus)
            }
        }
    }

    /// Reverse pass for DQN: `d_q` is the loss gradient at the per-action
    /// outputs. Parameter gradients accumulate into `grads`.
    pub fn backward_dqn(&self, tape: &DqnTape<T>, d_q: &[T], grads: &mut ModelGrads<T>) {
        let t = &self.topology;
        let mut d_hidden_out = vec![T::zero(); t.hidden_dim];
        self.output.backward(
            &tape.hidden_out,
            &tape.out_pre,
            d_q,
            &mut grads.output.weights,
            &mut grads.output.bias,
            &mut d_hidden_out,
        );
        let mut d_state = vec![T::zero(); t.state_dim];
        self.hidden.backward(
            &tape.state.state,
            &tape.hidden_pre,
            &d_hidden_out,
            &mut grads.hidden.weights,
            &mut grads.hidden.bias,
            &mut d_state,
        );
        self.backward_state(&tape.state, &d_state, grads);
    }

    /// Reverse pass for IQN: `d_z` is the loss gradient at the quantile
    /// outputs, one row per quantile level. Routes gradients through the
    /// element-wise product into both the quantile branch and the state
    /// pathway.
    pub fn backward_iqn(&self, tape: &IqnTape<T>, d_z: &Mat<T>, grads: &mut ModelGrads<T>) {
        let t = &self.topology;
        assert_eq!(d_z.rows, tape.taus.len());
        assert_eq!(d_z.cols, t.actions);
        let embed = self.quantile_embed.as_ref().expect("IQN model");
        let embed_grads = grads.quantile_embed.as_mut().expect("IQN grads");
        let mut d_state_total = vec![T::zero(); t.state_dim];
        let mut d_hidden_out = vec![T::zero(); t.hidden_dim];
        let mut d_merged = vec![T::zero(); t.state_dim];
        let mut d_embed_out = vec![T::zero(); t.state_dim];
        let mut scratch = vec![T::zero(); t.cosine_features];
        for r in 0..d_z.rows {
            d_hidden_out.iter_mut().for_each(|g| *g = T::zero());
            self.output.backward(
                tape.hidden_out.row(r),
                tape.out_pre.row(r),
                d_z.row(r),
                &mut grads.output.weights,
                &mut grads.output.bias,
                &mut d_hidden_out,
            );
            d_merged.iter_mut().for_each(|g| *g = T::zero());
            self.hidden.backward(
                tape.merged.row(r),
                tape.hidden_pre.row(r),
                &d_hidden_out,
                &mut grads.hidden.weights,
                &mut grads.hidden.bias,
                &mut d_merged,
            );
            // Product rule through the element-wise merge.
            let state = &tape.state.state;
            let embed_out = tape.embed_out.row(r);
            for i in 0..t.state_dim {
                d_embed_out[i] = d_merged[i] * state[i];
                d_state_total[i] += d_merged[i] * embed_out[i];
            }
            scratch.iter_mut().for_each(|g| *g = T::zero());
            embed.backward(
                tape.cos_features.row(r),
                tape.embed_pre.row(r),
                &d_embed_out,
                &mut embed_grads.weights,
                &mut embed_grads.bias,
                &mut scratch,
            );
        }
        self.backward_state(&tape.state, &d_state_total, grads);
    }
}

fn forward_into<T: Real>(layer: &Linear<T>, x: &[T], pre: &mut [T], out: &mut [T]) {
    debug_assert_eq!(x.len(), layer.in_dim);
    for (o, (row, &b)) in layer
        .weights
        .chunks_exact(layer.in_dim)
        .zip(&layer.bias)
        .enumerate()
    {
        let z = super::dot(row, x) + b;
        pre[o] = z;
        out[o] = layer.activation.apply(z);
    }
}
