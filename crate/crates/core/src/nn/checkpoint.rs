//! Checkpoint document: metadata plus per-layer row-major weight and bias
//! arrays in decimal, as JSON. Decimal round-trips are bit-exact for f32, so
//! a reloaded checkpoint reproduces the original forward pass exactly.

use super::{Activation, MlpModel, ModelKind, Topology};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerDump {
    pub name: String,
    /// Output dimension (weight rows).
    pub rows: usize,
    /// Input dimension (weight columns).
    pub cols: usize,
    pub activation: Activation,
    /// Row-major weights, `rows * cols` entries.
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    /// Agent kind: "iqn" or "dqn".
    pub agent: String,
    /// Master seed of the training run.
    pub seed: u64,
    /// Environment steps completed when the checkpoint was written.
    pub step: u64,
    pub topology: Topology,
    pub layers: Vec<LayerDump>,
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unknown agent kind {0:?}")]
    UnknownAgent(String),
    #[error("layer {name}: expected {expected} weights, found {found}")]
    LayerShape {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("layer set does not match the {0} topology")]
    LayerSet(&'static str),
    #[error("non-finite parameter in layer {0}")]
    NonFinite(String),
}

impl Checkpoint {
    pub fn from_model(model: &MlpModel<f32>, seed: u64, step: u64) -> Checkpoint {
        let layers = model
            .layers()
            .iter()
            .zip(model.layer_names())
            .map(|(l, name)| LayerDump {
                name: name.to_string(),
                rows: l.out_dim,
                cols: l.in_dim,
                activation: l.activation,
                weights: l.weights.clone(),
                bias: l.bias.clone(),
            })
            .collect();
        Checkpoint {
            agent: model.kind.label().to_string(),
            seed,
            step,
            topology: model.topology,
            layers,
        }
    }

    pub fn to_model(&self) -> Result<MlpModel<f32>, CheckpointError> {
        let kind = ModelKind::from_label(&self.agent)
            .ok_or_else(|| CheckpointError::UnknownAgent(self.agent.clone()))?;
        let mut model = MlpModel::<f32>::new(kind, self.topology, 0);
        let names = model.layer_names();
        if names.len() != self.layers.len()
            || names
                .iter()
                .zip(&self.layers)
                .any(|(n, dump)| *n != dump.name)
        {
            return Err(CheckpointError::LayerSet(kind.label()));
        }
        for (layer, dump) in model.layers_mut().into_iter().zip(&self.layers) {
            let expected = layer.in_dim * layer.out_dim;
            if dump.weights.len() != expected || dump.bias.len() != layer.out_dim {
                return Err(CheckpointError::LayerShape {
                    name: dump.name.clone(),
                    expected,
                    found: dump.weights.len(),
                });
            }
            if dump.weights.iter().chain(&dump.bias).any(|v| !v.is_finite()) {
                return Err(CheckpointError::NonFinite(dump.name.clone()));
            }
            layer.weights.copy_from_slice(&dump.weights);
            layer.bias.copy_from_slice(&dump.bias);
            layer.activation = dump.activation;
        }
        Ok(model)
    }

    pub fn kind(&self) -> Option<ModelKind> {
        ModelKind::from_label(&self.agent)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Checkpoint, CheckpointError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Checkpoint, CheckpointError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_forward_bits() {
        let topology = Topology::standard(7);
        let model = MlpModel::<f32>::new(ModelKind::Iqn, topology, 99);
        let features: Vec<f32> = (0..topology.input_len())
            .map(|i| (i as f32) * 0.01 - 0.3)
            .collect();
        let taus = [0.1f32, 0.6, 0.9];
        let before = model.quantile_values(&features, &taus);

        let text = Checkpoint::from_model(&model, 99, 1234).to_json();
        let restored = Checkpoint::from_json(&text).unwrap().to_model().unwrap();
        let after = restored.quantile_values(&features, &taus);
        assert_eq!(before.data, after.data);
    }

    #[test]
    fn mismatched_layer_set_is_rejected() {
        let model = MlpModel::<f32>::new(ModelKind::Dqn, Topology::standard(5), 1);
        let mut ckpt = Checkpoint::from_model(&model, 1, 0);
        ckpt.agent = "iqn".to_string();
        assert!(matches!(
            ckpt.to_model(),
            Err(CheckpointError::LayerSet(_))
        ));
    }

    #[test]
    fn non_finite_weights_are_rejected() {
        let model = MlpModel::<f32>::new(ModelKind::Dqn, Topology::standard(5), 1);
        let mut ckpt = Checkpoint::from_model(&model, 1, 0);
        ckpt.layers[0].weights[0] = f32::NAN;
        assert!(matches!(ckpt.to_model(), Err(CheckpointError::NonFinite(_))));
    }
}
