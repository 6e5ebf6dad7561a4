//! A small fully-connected network with hand-written backpropagation, an SGD
//! optimizer that can produce tentative (pre-projection) updates, and the
//! channel-group view used by the pruners.
//!
//! Parameters live in one flat buffer. Layer `l` stores its `out x in` weight
//! matrix row-major, followed by its `out` biases.

mod checkpoint;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{l2_norm, Matrix, Rng, Vec64};

pub use checkpoint::{CheckpointError, CHECKPOINT_FORMAT_VERSION};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("label {label} out of range for {classes} classes")]
    BadLabel { label: usize, classes: usize },
    #[error("group {0} does not match this network")]
    BadGroup(usize),
    #[error("unsupported architecture: {0}")]
    Architecture(String),
    #[error("non-finite parameter at index {0}")]
    NonFinite(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
    Softmax,
}

impl Activation {
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
            Activation::Softmax => unreachable!("softmax is output-only"),
        }
    }
}

/// Placement of one layer inside the flat parameter buffer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerShape {
    pub rows: usize,
    pub cols: usize,
    pub act: Activation,
    pub w_offset: usize,
    pub b_offset: usize,
}

impl LayerShape {
    pub fn weight_index(&self, row: usize, col: usize) -> usize {
        self.w_offset + row * self.cols + col
    }

    pub fn bias_index(&self, row: usize) -> usize {
        self.b_offset + row
    }
}

/// Owned description of one layer, used to build networks explicitly.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub act: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<LayerShape>,
    params: Vec<f64>,
}

/// Gradient of the loss with respect to every parameter, in the network's
/// flat layout.
#[derive(Debug, Clone, PartialEq)]
pub struct GradSnapshot {
    pub values: Vec<f64>,
    pub batch_id: u64,
}

/// One prunable channel: its row and bias in its own layer, then the
/// matching input column of the next layer.
///
/// `coords[..own_len]` (row and bias) partition the hidden layers' rows and
/// biases across groups. The trailing column entries overlap with the next
/// layer's groups when that layer is hidden too.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupIndex {
    pub group_id: usize,
    pub layer_id: usize,
    pub channel_id: usize,
    pub coords: Vec<usize>,
    pub own_len: usize,
}

impl GroupIndex {
    pub fn own_coords(&self) -> &[usize] {
        &self.coords[..self.own_len]
    }

    /// Incoming column of the next layer.
    pub fn column_coords(&self) -> &[usize] {
        &self.coords[self.own_len..]
    }
}

impl Network {
    /// He-initialised MLP: ReLU hidden layers and a softmax output.
    pub fn mlp(widths: &[usize], rng: &mut Rng) -> Result<Network, NnError> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(NnError::Architecture(format!("invalid widths {widths:?}")));
        }
        let depth = widths.len() - 1;
        let specs = (0..depth)
            .map(|l| {
                let (fan_in, fan_out) = (widths[l], widths[l + 1]);
                let std = (2.0 / fan_in as f64).sqrt();
                LayerSpec {
                    weights: Matrix::from_vec(fan_out, fan_in, rng.normal(fan_out * fan_in, 0.0, std).into_inner())
                        .expect("sized above"),
                    bias: vec![0.0; fan_out],
                    act: if l + 1 == depth { Activation::Softmax } else { Activation::Relu },
                }
            })
            .collect();
        Network::from_layers(specs)
    }

    pub fn from_layers(specs: Vec<LayerSpec>) -> Result<Network, NnError> {
        if specs.is_empty() {
            return Err(NnError::Architecture("no layers".into()));
        }
        let mut layers = Vec::with_capacity(specs.len());
        let mut params = Vec::new();
        for (l, spec) in specs.iter().enumerate() {
            let (rows, cols) = (spec.weights.rows, spec.weights.cols);
            if spec.bias.len() != rows {
                return Err(NnError::ShapeMismatch(format!("layer {l}: {} biases for {rows} rows", spec.bias.len())));
            }
            if let Some(prev) = layers.last().map(|p: &LayerShape| p.rows) {
                if prev != cols {
                    return Err(NnError::ShapeMismatch(format!("layer {l}: in {cols} does not chain to out {prev}")));
                }
            }
            if spec.act == Activation::Softmax && l + 1 != specs.len() {
                return Err(NnError::Architecture(format!("softmax on hidden layer {l}")));
            }
            let w_offset = params.len();
            params.extend_from_slice(&spec.weights.data);
            let b_offset = params.len();
            params.extend_from_slice(&spec.bias);
            layers.push(LayerShape { rows, cols, act: spec.act, w_offset, b_offset });
        }
        if let Some(i) = params.iter().position(|v| !v.is_finite()) {
            return Err(NnError::NonFinite(i));
        }
        Ok(Network { layers, params })
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Replaces the whole parameter buffer.
    pub fn set_params(&mut self, params: Vec<f64>) -> Result<(), NnError> {
        if params.len() != self.params.len() {
            return Err(NnError::ShapeMismatch(format!("{} params for {}", params.len(), self.params.len())));
        }
        if let Some(i) = params.iter().position(|v| !v.is_finite()) {
            return Err(NnError::NonFinite(i));
        }
        self.params = params;
        Ok(())
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].cols
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].rows
    }

    /// Layer widths, input first.
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_dim()).chain(self.layers.iter().map(|l| l.rows)).collect()
    }

    pub fn weights(&self, layer: usize) -> Matrix {
        let s = &self.layers[layer];
        Matrix::from_vec(s.rows, s.cols, self.params[s.w_offset..s.w_offset + s.rows * s.cols].to_vec())
            .expect("layer slice is sized")
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        let s = &self.layers[layer];
        &self.params[s.b_offset..s.b_offset + s.rows]
    }

    pub fn layer_spec(&self, layer: usize) -> LayerSpec {
        LayerSpec { weights: self.weights(layer), bias: self.bias(layer).to_vec(), act: self.layers[layer].act }
    }

    /// Pre-activations and activations of every layer; `acts[0]` is the input.
    fn trace(&self, batch: &Matrix) -> Result<(Vec<Matrix>, Vec<Matrix>), NnError> {
        if batch.cols != self.input_dim() {
            return Err(NnError::ShapeMismatch(format!(
                "batch has {} features, network expects {}",
                batch.cols,
                self.input_dim()
            )));
        }
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(batch.clone());
        for s in &self.layers {
            let input = acts.last().expect("input pushed");
            let w = &self.params[s.w_offset..s.w_offset + s.rows * s.cols];
            let b = &self.params[s.b_offset..s.b_offset + s.rows];
            let mut z = Matrix::zeros(batch.rows, s.rows);
            for n in 0..batch.rows {
                let x = input.row(n);
                let out = z.row_mut(n);
                for (o, zo) in out.iter_mut().enumerate() {
                    let wr = &w[o * s.cols..(o + 1) * s.cols];
                    *zo = b[o] + wr.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
                }
            }
            let mut a = z.clone();
            match s.act {
                Activation::Relu => a.data.iter_mut().for_each(|v| *v = v.max(0.0)),
                Activation::Identity => {}
                Activation::Softmax => {
                    for n in 0..a.rows {
                        softmax_in_place(a.row_mut(n));
                    }
                }
            }
            pre.push(z);
            acts.push(a);
        }
        Ok((pre, acts))
    }

    pub fn forward(&self, batch: &Matrix) -> Result<Matrix, NnError> {
        let (_, mut acts) = self.trace(batch)?;
        Ok(acts.pop().expect("at least one layer"))
    }

    pub fn predict(&self, batch: &Matrix) -> Result<Vec<usize>, NnError> {
        let out = self.forward(batch)?;
        Ok((0..out.rows).map(|n| argmax(out.row(n))).collect())
    }

    /// Mean cross-entropy of the softmax output.
    pub fn loss(&self, batch: &Matrix, labels: &[usize]) -> Result<f64, NnError> {
        self.check_labels(batch, labels)?;
        let (pre, _) = self.trace(batch)?;
        let logits = pre.last().expect("at least one layer");
        Ok(mean_cross_entropy(logits, labels))
    }

    fn check_labels(&self, batch: &Matrix, labels: &[usize]) -> Result<(), NnError> {
        if self.layers.last().map(|l| l.act) != Some(Activation::Softmax) {
            return Err(NnError::Architecture("cross-entropy needs a softmax output layer".into()));
        }
        if labels.len() != batch.rows {
            return Err(NnError::ShapeMismatch(format!("{} labels for {} samples", labels.len(), batch.rows)));
        }
        if batch.rows == 0 {
            return Err(NnError::ShapeMismatch("empty batch".into()));
        }
        let classes = self.output_dim();
        match labels.iter().find(|&&y| y >= classes) {
            Some(&label) => Err(NnError::BadLabel { label, classes }),
            None => Ok(()),
        }
    }

    /// Loss and exact gradients for mean-reduced softmax cross-entropy.
    pub fn backward(&self, batch: &Matrix, labels: &[usize]) -> Result<(f64, GradSnapshot), NnError> {
        self.check_labels(batch, labels)?;
        let (pre, acts) = self.trace(batch)?;
        let batch_size = batch.rows as f64;
        let loss = mean_cross_entropy(pre.last().expect("at least one layer"), labels);

        let mut grads = vec![0.0; self.params.len()];
        let mut delta = acts.last().expect("output").clone();
        for (n, &y) in labels.iter().enumerate() {
            let row = delta.row_mut(n);
            row[y] -= 1.0;
            row.iter_mut().for_each(|v| *v /= batch_size);
        }

        for l in (0..self.layers.len()).rev() {
            let s = self.layers[l];
            let input = &acts[l];
            for n in 0..batch.rows {
                let d = delta.row(n);
                let x = input.row(n);
                for (o, &dv) in d.iter().enumerate() {
                    if dv == 0.0 {
                        continue;
                    }
                    let gw = &mut grads[s.w_offset + o * s.cols..s.w_offset + (o + 1) * s.cols];
                    gw.iter_mut().zip(x).for_each(|(g, xi)| *g += dv * xi);
                    grads[s.b_offset + o] += dv;
                }
            }
            if l == 0 {
                break;
            }
            let prev_act = self.layers[l - 1].act;
            let w = &self.params[s.w_offset..s.w_offset + s.rows * s.cols];
            let mut next = Matrix::zeros(batch.rows, s.cols);
            for n in 0..batch.rows {
                let d = delta.row(n);
                let z = pre[l - 1].row(n);
                let out = next.row_mut(n);
                for (o, &dv) in d.iter().enumerate() {
                    let wr = &w[o * s.cols..(o + 1) * s.cols];
                    out.iter_mut().zip(wr).for_each(|(acc, wi)| *acc += dv * wi);
                }
                out.iter_mut().zip(z).for_each(|(acc, &zi)| *acc *= prev_act.derivative(zi));
            }
            delta = next;
        }
        Ok((loss, GradSnapshot { values: grads, batch_id: 0 }))
    }

    pub fn read_group(&self, g: &GroupIndex) -> Result<Vec64, NnError> {
        self.check_group(g)?;
        Ok(Vec64::new(g.coords.iter().map(|&c| self.params[c]).collect()).expect("params are finite"))
    }

    pub fn write_group(&mut self, g: &GroupIndex, values: &Vec64) -> Result<(), NnError> {
        self.check_group(g)?;
        if values.len() != g.coords.len() {
            return Err(NnError::BadGroup(g.group_id));
        }
        for (&c, &v) in g.coords.iter().zip(values.iter()) {
            self.params[c] = v;
        }
        Ok(())
    }

    pub fn group_norm(&self, g: &GroupIndex) -> f64 {
        l2_norm(&g.coords.iter().map(|&c| self.params[c]).collect::<Vec<_>>())
    }

    fn check_group(&self, g: &GroupIndex) -> Result<(), NnError> {
        let ok = g.layer_id + 1 < self.layers.len()
            && g.channel_id < self.layers[g.layer_id].rows
            && !g.coords.is_empty()
            && g.coords.iter().all(|&c| c < self.params.len());
        if ok {
            Ok(())
        } else {
            Err(NnError::BadGroup(g.group_id))
        }
    }
}

/// One group per hidden output channel, numbered layer by layer. The output
/// layer is never grouped.
pub fn group_view(net: &Network) -> Vec<GroupIndex> {
    let layers = net.layers();
    let mut groups = Vec::new();
    for l in 0..layers.len().saturating_sub(1) {
        let (s, next) = (layers[l], layers[l + 1]);
        for ch in 0..s.rows {
            let mut coords: Vec<usize> = (0..s.cols).map(|c| s.weight_index(ch, c)).collect();
            coords.push(s.bias_index(ch));
            let own_len = coords.len();
            coords.extend((0..next.rows).map(|r| next.weight_index(r, ch)));
            groups.push(GroupIndex { group_id: groups.len(), layer_id: l, channel_id: ch, coords, own_len });
        }
    }
    groups
}

/// Tentative SGD step with coupled L2 penalty: `x - lr * (grad + l2 * x)`.
pub fn sgd_pre_update(x: &Vec64, grad: &Vec64, lr: f64, l2_coeff: f64) -> Vec64 {
    assert_eq!(x.len(), grad.len(), "weights and gradient must align");
    Vec64::new(x.iter().zip(grad.iter()).map(|(&w, &g)| w - lr * (g + l2_coeff * w)).collect())
        .expect("finite inputs give finite update")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdConfig {
    pub lr: f64,
    #[serde(default)]
    pub momentum: f64,
    #[serde(default)]
    pub l2: f64,
}

/// Tentative parameters from one optimizer step, before any projection.
#[derive(Debug, Clone)]
pub struct PreUpdate {
    /// The full optimizer update.
    pub tilde: Vec<f64>,
    /// The same update with this step's L2 penalty term removed.
    pub penalty_free: Vec<f64>,
}

/// SGD with optional heavy-ball momentum and coupled L2 penalty.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub config: SgdConfig,
    velocity: Vec<f64>,
}

impl Sgd {
    pub fn new(config: SgdConfig, num_params: usize) -> Self {
        Sgd { config, velocity: vec![0.0; num_params] }
    }

    pub fn lr(&self) -> f64 {
        self.config.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    /// Advances the momentum buffers and returns the tentative parameters.
    /// Coordinates flagged in `frozen` stay at zero and keep no momentum.
    pub fn pre_update(&mut self, params: &[f64], grads: &[f64], frozen: &[bool]) -> PreUpdate {
        let SgdConfig { lr, momentum, l2 } = self.config;
        let mut tilde = vec![0.0; params.len()];
        let mut penalty_free = vec![0.0; params.len()];
        for i in 0..params.len() {
            if frozen[i] {
                self.velocity[i] = 0.0;
                continue;
            }
            let x = params[i];
            let carried = momentum * self.velocity[i] + grads[i];
            let v = carried + l2 * x;
            self.velocity[i] = v;
            tilde[i] = x - lr * v;
            penalty_free[i] = x - lr * carried;
        }
        PreUpdate { tilde, penalty_free }
    }
}

pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    row.iter_mut().for_each(|v| *v /= sum);
}

fn mean_cross_entropy(logits: &Matrix, labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for (n, &y) in labels.iter().enumerate() {
        let row = logits.row(n);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - row[y];
    }
    total / labels.len() as f64
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
