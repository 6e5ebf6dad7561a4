//! JSON checkpoints. Floats are written with 17 significant digits so every
//! `f64` survives a round trip bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use thiserror::Error;

use super::{Activation, LayerSpec, Network, NnError};
use crate::tensor::Matrix;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported checkpoint format_version {0}")]
    Version(u32),
    #[error(transparent)]
    Network(#[from] NnError),
}

#[derive(Serialize)]
struct LayerOut {
    rows: usize,
    cols: usize,
    weights: Vec<Box<RawValue>>,
    bias: Vec<Box<RawValue>>,
    act: Activation,
}

#[derive(Serialize)]
struct CheckpointOut {
    layers: Vec<LayerOut>,
    format_version: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerIn {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
    act: Activation,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointIn {
    layers: Vec<LayerIn>,
    format_version: u32,
}

fn raw_float(v: f64) -> Box<RawValue> {
    RawValue::from_string(format!("{v:.16e}")).expect("scientific notation is valid JSON")
}

impl Network {
    pub fn to_checkpoint_json(&self) -> String {
        let layers = (0..self.layers.len())
            .map(|l| {
                let spec = self.layer_spec(l);
                LayerOut {
                    rows: spec.weights.rows,
                    cols: spec.weights.cols,
                    weights: spec.weights.data.iter().copied().map(raw_float).collect(),
                    bias: spec.bias.iter().copied().map(raw_float).collect(),
                    act: spec.act,
                }
            })
            .collect();
        let doc = CheckpointOut { layers, format_version: CHECKPOINT_FORMAT_VERSION };
        serde_json::to_string_pretty(&doc).expect("checkpoint serializes")
    }

    pub fn from_checkpoint_json(text: &str) -> Result<Network, CheckpointError> {
        let doc: CheckpointIn = serde_json::from_str(text)?;
        if doc.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(CheckpointError::Version(doc.format_version));
        }
        let specs = doc
            .layers
            .into_iter()
            .map(|l| {
                let weights =
                    Matrix::from_vec(l.rows, l.cols, l.weights).map_err(|e| NnError::ShapeMismatch(e.to_string()))?;
                Ok(LayerSpec { weights, bias: l.bias, act: l.act })
            })
            .collect::<Result<Vec<_>, NnError>>()?;
        Ok(Network::from_layers(specs)?)
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_checkpoint_json())?;
        Ok(())
    }

    pub fn load_checkpoint(path: &Path) -> Result<Network, CheckpointError> {
        Network::from_checkpoint_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = Rng::new(11);
        let mut net = Network::mlp(&[3, 7, 5, 2], &mut rng).unwrap();
        net.params_mut()[0] = -0.0;
        net.params_mut()[1] = 1e-300;
        net.params_mut()[2] = 0.1 + 0.2;
        let text = net.to_checkpoint_json();
        let back = Network::from_checkpoint_json(&text).unwrap();
        assert_eq!(back.layers(), net.layers());
        for (a, b) in back.params().iter().zip(net.params()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn layout_matches_documented_schema() {
        let mut rng = Rng::new(1);
        let net = Network::mlp(&[2, 3, 2], &mut rng).unwrap();
        let v: serde_json::Value = serde_json::from_str(&net.to_checkpoint_json()).unwrap();
        assert_eq!(v["format_version"], 1);
        assert_eq!(v["layers"][0]["rows"], 3);
        assert_eq!(v["layers"][0]["cols"], 2);
        assert_eq!(v["layers"][0]["act"], "relu");
        assert_eq!(v["layers"][1]["act"], "softmax");
        assert_eq!(v["layers"][0]["weights"].as_array().unwrap().len(), 6);
    }

    #[test]
    fn rejects_unknown_version_and_keys() {
        let bad = r#"{"layers": [], "format_version": 2}"#;
        assert!(matches!(Network::from_checkpoint_json(bad), Err(CheckpointError::Version(2))));
        let extra = r#"{"layers": [], "format_version": 1, "oops": 0}"#;
        assert!(matches!(Network::from_checkpoint_json(extra), Err(CheckpointError::Json(_))));
    }
}
