//! Gated feature-selection network, projection network, and readout.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{kaiming_init, ops, Matrix, NodeId, Tape};

/// Per-feature importance scores and the closing threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateParams {
    /// `1 x D` importance vector.
    pub w: Matrix,
    pub eps: f64,
}

impl GateParams {
    pub fn constant(dim: usize, init: f64, eps: f64) -> Self {
        Self {
            w: Matrix::filled(1, dim, init),
            eps,
        }
    }

    pub fn dim(&self) -> usize {
        self.w.cols()
    }

    pub fn is_open(&self, j: usize) -> bool {
        self.w.as_slice()[j] > self.eps
    }

    pub fn active_count(&self) -> usize {
        self.w.as_slice().iter().filter(|&&v| v > self.eps).count()
    }

    /// Open features by descending importance, ties by ascending index.
    pub fn select_features(&self) -> Selection {
        let w = self.w.as_slice();
        let mut indices: Vec<usize> = (0..w.len()).filter(|&j| w[j] > self.eps).collect();
        indices.sort_by(|&a, &b| w[b].total_cmp(&w[a]).then(a.cmp(&b)));
        let scores = indices.iter().map(|&j| w[j]).collect();
        Selection { indices, scores }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub indices: Vec<usize>,
    pub scores: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    /// `out x in`
    pub weight: Matrix,
    /// `1 x out`
    pub bias: Matrix,
}

/// Fully connected stack with leaky-ReLU between layers and a linear output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<Linear>,
    pub slope: f64,
}

impl MlpParams {
    /// Kaiming-normal weights and zero biases for `sizes = [in, h1, ..., out]`.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], slope: f64, rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::config(format!("invalid layer sizes {sizes:?}")));
        }
        let layers = sizes
            .windows(2)
            .map(|pair| Linear {
                weight: kaiming_init(pair[1], pair[0], rng),
                bias: Matrix::zeros(1, pair[1]),
            })
            .collect();
        Ok(Self { layers, slope })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").weight.rows()
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_dim()];
        sizes.extend(self.layers.iter().map(|l| l.weight.rows()));
        sizes
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_dim() {
            return Err(Error::dim(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                x.cols()
            )));
        }
        let last = self.layers.len() - 1;
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            h = ops::linear(&h, &layer.weight, &layer.bias);
            if i < last {
                h = ops::leaky_relu(&h, self.slope);
            }
        }
        Ok(h)
    }

    fn bind(&self, tape: &mut Tape, nodes: &mut Vec<NodeId>) {
        for l in &self.layers {
            nodes.push(tape.param(l.weight.clone()));
            nodes.push(tape.param(l.bias.clone()));
        }
    }

    fn forward_tape(&self, tape: &mut Tape, x: NodeId, nodes: &[NodeId]) -> Result<NodeId> {
        let last = self.layers.len() - 1;
        let mut h = x;
        for i in 0..self.layers.len() {
            h = tape.linear(h, nodes[2 * i], nodes[2 * i + 1])?;
            if i < last {
                h = tape.leaky_relu(h, self.slope);
            }
        }
        Ok(h)
    }

    fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Matrix> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
    }

    fn tensors(&self) -> impl Iterator<Item = &Matrix> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias])
    }
}

/// Layer widths after the input; the input width comes from the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Architecture {
    pub backbone: Vec<usize>,
    pub projector: Vec<usize>,
    /// Hidden widths of the reconstruction head used by the loss ablation.
    pub decoder_hidden: Vec<usize>,
    pub leaky_slope: f64,
    pub gate_init: f64,
    pub gate_eps: f64,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            backbone: vec![500, 300, 80],
            projector: vec![500, 2],
            decoder_hidden: vec![500],
            leaky_slope: 0.1,
            gate_init: 0.2,
            gate_eps: 0.1,
        }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.backbone.is_empty() || self.projector.is_empty() {
            return Err(Error::config("architecture.backbone and architecture.projector need at least one layer"));
        }
        if self.backbone.iter().chain(&self.projector).chain(&self.decoder_hidden).any(|&s| s == 0) {
            return Err(Error::config("architecture layer widths must be >= 1"));
        }
        if !(self.gate_eps >= 0.0) {
            return Err(Error::config(format!("architecture.gate_eps must be >= 0, got {}", self.gate_eps)));
        }
        if !(self.gate_init.is_finite()) {
            return Err(Error::config("architecture.gate_init must be finite"));
        }
        if !(self.leaky_slope >= 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::config(format!(
                "architecture.leaky_slope must lie in [0, 1), got {}",
                self.leaky_slope
            )));
        }
        Ok(())
    }
}

/// All trainable state: gate `w`, backbone `phi`, projector `theta`, and the
/// optional reconstruction head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UdrnModel {
    pub gate: GateParams,
    pub backbone: MlpParams,
    pub projector: MlpParams,
    pub decoder: Option<MlpParams>,
}

#[derive(Clone, Debug)]
pub struct ModelOutputs {
    pub zh: Matrix,
    pub zl: Matrix,
}

/// Tape handles for the model's parameters, in [`UdrnModel::tensors_mut`] order.
#[derive(Clone, Debug)]
pub struct BoundModel {
    pub gate: NodeId,
    backbone: Vec<NodeId>,
    projector: Vec<NodeId>,
    decoder: Vec<NodeId>,
}

impl BoundModel {
    pub fn all(&self) -> Vec<NodeId> {
        let mut v = vec![self.gate];
        v.extend(&self.backbone);
        v.extend(&self.projector);
        v.extend(&self.decoder);
        v
    }

    pub fn backbone(&self) -> &[NodeId] {
        &self.backbone
    }

    pub fn projector(&self) -> &[NodeId] {
        &self.projector
    }

    pub fn decoder(&self) -> &[NodeId] {
        &self.decoder
    }
}

impl UdrnModel {
    pub fn init<R: Rng + ?Sized>(dim: usize, arch: &Architecture, with_decoder: bool, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let mut fs = vec![dim];
        fs.extend(&arch.backbone);
        let hidden = *fs.last().expect("non-empty");
        let mut fp = vec![hidden];
        fp.extend(&arch.projector);
        let backbone = MlpParams::init(&fs, arch.leaky_slope, rng)?;
        let projector = MlpParams::init(&fp, arch.leaky_slope, rng)?;
        let decoder = if with_decoder {
            let mut dec = vec![hidden];
            dec.extend(&arch.decoder_hidden);
            dec.push(dim);
            Some(MlpParams::init(&dec, arch.leaky_slope, rng)?)
        } else {
            None
        };
        Ok(Self {
            gate: GateParams::constant(dim, arch.gate_init, arch.gate_eps),
            backbone,
            projector,
            decoder,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.gate.dim()
    }

    pub fn param_count(&self) -> usize {
        self.gate.w.len()
            + self.backbone.param_count()
            + self.projector.param_count()
            + self.decoder.as_ref().map_or(0, MlpParams::param_count)
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v = vec![&mut self.gate.w];
        v.extend(self.backbone.tensors_mut());
        v.extend(self.projector.tensors_mut());
        if let Some(d) = self.decoder.as_mut() {
            v.extend(d.tensors_mut());
        }
        v
    }

    pub fn tensors(&self) -> Vec<&Matrix> {
        let mut v = vec![&self.gate.w];
        v.extend(self.backbone.tensors());
        v.extend(self.projector.tensors());
        if let Some(d) = self.decoder.as_ref() {
            v.extend(d.tensors());
        }
        v
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.tensors().iter().map(|m| m.shape()).collect()
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundModel {
        let gate = tape.param(self.gate.w.clone());
        let (mut backbone, mut projector, mut decoder) = (Vec::new(), Vec::new(), Vec::new());
        self.backbone.bind(tape, &mut backbone);
        self.projector.bind(tape, &mut projector);
        if let Some(d) = &self.decoder {
            d.bind(tape, &mut decoder);
        }
        BoundModel {
            gate,
            backbone,
            projector,
            decoder,
        }
    }

    /// `Zh = m_phi(gate(X))` on the tape.
    pub fn fs_forward_tape(&self, tape: &mut Tape, bound: &BoundModel, x: NodeId) -> Result<NodeId> {
        let gated = tape.gate(x, bound.gate, self.gate.eps)?;
        self.backbone.forward_tape(tape, gated, &bound.backbone)
    }

    /// `Zl = f_theta(Zh)` on the tape.
    pub fn fp_forward_tape(&self, tape: &mut Tape, bound: &BoundModel, zh: NodeId) -> Result<NodeId> {
        self.projector.forward_tape(tape, zh, &bound.projector)
    }

    pub fn decode_tape(&self, tape: &mut Tape, bound: &BoundModel, zh: NodeId) -> Result<NodeId> {
        let dec = self
            .decoder
            .as_ref()
            .ok_or_else(|| Error::contract("model has no reconstruction head"))?;
        dec.forward_tape(tape, zh, &bound.decoder)
    }

    pub fn forward(&self, x: &Matrix) -> Result<ModelOutputs> {
        let zh = fs_forward(x, &self.gate, &self.backbone)?;
        let zl = fp_forward(&zh, &self.projector)?;
        Ok(ModelOutputs { zh, zl })
    }
}

pub fn gate_forward(x: &Matrix, gate: &GateParams) -> Result<Matrix> {
    if x.cols() != gate.dim() {
        return Err(Error::dim(format!(
            "gate has {} features, input has {}",
            gate.dim(),
            x.cols()
        )));
    }
    Ok(ops::gate(x, gate.w.as_slice(), gate.eps))
}

pub fn fs_forward(x: &Matrix, gate: &GateParams, backbone: &MlpParams) -> Result<Matrix> {
    backbone.forward(&gate_forward(x, gate)?)
}

pub fn fp_forward(zh: &Matrix, projector: &MlpParams) -> Result<Matrix> {
    projector.forward(zh)
}

pub fn select_features(gate: &GateParams) -> Selection {
    gate.select_features()
}
