//! Small CNN engine for the unimodal, early-fusion and intermediate-fusion
//! topologies.
//!
//! Tensors are `(channels, height, width)` in row-major order. A 1-D signal
//! of length `L` is `(1, L, 1)`; conv1d and maxpool1d act along the height
//! axis. Convolutions are cross-correlations with valid padding and stride
//! 1; pooling uses stride equal to the pool size and drops remainders.

mod engine;
mod persist;
mod train;

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream};

pub use persist::{load_model, model_bytes, model_from_bytes, save_model, MODEL_MAGIC};
pub use train::{
    backward, loss, train, Gradients, NetData, Optimizer, TrainConfig, PROBABILITY_FLOOR,
};

pub type Shape = [usize; 3];

/// Stream used for dropout masks outside of training epochs.
const DROPOUT_STREAM: u64 = 1 << 33;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Softmax,
    None,
}

fn relu() -> Activation {
    Activation::Relu
}
fn three() -> usize {
    3
}
fn three_by_three() -> [usize; 2] {
    [3, 3]
}
fn two() -> usize {
    2
}
fn two_by_two() -> [usize; 2] {
    [2, 2]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum LayerSpec {
    Conv1d {
        filters: usize,
        #[serde(default = "three")]
        kernel: usize,
        #[serde(default = "relu")]
        activation: Activation,
    },
    Conv2d {
        filters: usize,
        #[serde(default = "three_by_three")]
        kernel: [usize; 2],
        #[serde(default = "relu")]
        activation: Activation,
    },
    Maxpool1d {
        #[serde(default = "two")]
        pool: usize,
    },
    Maxpool2d {
        #[serde(default = "two_by_two")]
        pool: [usize; 2],
    },
    Flatten,
    Concat,
    Dense {
        units: usize,
        #[serde(default = "relu")]
        activation: Activation,
        #[serde(default)]
        l2: f64,
        /// Expected flattened input size, checked at build time.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        in_features: Option<usize>,
    },
    Dropout {
        rate: f64,
    },
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv1d { .. } => "conv1d",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Maxpool1d { .. } => "maxpool1d",
            LayerSpec::Maxpool2d { .. } => "maxpool2d",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Concat => "concat",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Dropout { .. } => "dropout",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Topology {
    UnimodalBio,
    UnimodalLandmarks,
    EarlyFusion,
    IntermediateFusion,
}

impl Topology {
    pub const ALL: [Topology; 4] = [
        Topology::UnimodalBio,
        Topology::UnimodalLandmarks,
        Topology::EarlyFusion,
        Topology::IntermediateFusion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Topology::UnimodalBio => "unimodal-bio",
            Topology::UnimodalLandmarks => "unimodal-landmarks",
            Topology::EarlyFusion => "early-fusion",
            Topology::IntermediateFusion => "intermediate-fusion",
        }
    }

    pub fn uses_bio(self) -> bool {
        self != Topology::UnimodalLandmarks
    }

    pub fn uses_landmarks(self) -> bool {
        self != Topology::UnimodalBio
    }
}

impl std::fmt::Display for Topology {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Topology::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown topology {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputSource {
    Bio,
    Landmarks,
    /// Bio row followed by the landmark row.
    Both,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchSpec {
    pub input: InputSource,
    pub shape: Shape,
    pub layers: Vec<LayerSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub topology: Topology,
    pub post_fusion_conv: bool,
    pub branches: Vec<BranchSpec>,
    /// Layers after the branches; starts with `concat` when there are
    /// several branches.
    pub trunk: Vec<LayerSpec>,
    pub head: Vec<LayerSpec>,
}

/// Conv filter counts for the standard topologies.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterConfig {
    pub unimodal_bio: usize,
    pub unimodal_landmarks: usize,
    pub early_fusion: usize,
    pub intermediate_bio: usize,
    pub intermediate_landmarks: usize,
    pub post_fusion: usize,
}

impl Default for FilterConfig {
    /// Reference counts: 5,063 / 2,695 / 4,967 / 82,099 parameters with
    /// 20 bio and 7×7 landmark inputs.
    fn default() -> Self {
        FilterConfig {
            unimodal_bio: 33,
            unimodal_landmarks: 34,
            early_fusion: 9,
            intermediate_bio: 10,
            intermediate_landmarks: 26,
            post_fusion: 53,
        }
    }
}

/// Dense 16 relu, dropout 0.2, dense 8 relu (L2 0.01), dropout 0.2,
/// dense 3 softmax.
pub fn standard_head() -> Vec<LayerSpec> {
    vec![
        LayerSpec::Dense {
            units: 16,
            activation: Activation::Relu,
            l2: 0.0,
            in_features: None,
        },
        LayerSpec::Dropout { rate: 0.2 },
        LayerSpec::Dense {
            units: 8,
            activation: Activation::Relu,
            l2: 0.01,
            in_features: None,
        },
        LayerSpec::Dropout { rate: 0.2 },
        LayerSpec::Dense {
            units: 3,
            activation: Activation::Softmax,
            l2: 0.0,
            in_features: None,
        },
    ]
}

fn conv1d_block(filters: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Conv1d {
            filters,
            kernel: 3,
            activation: Activation::Relu,
        },
        LayerSpec::Maxpool1d { pool: 2 },
        LayerSpec::Flatten,
    ]
}

fn conv2d_block(filters: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Conv2d {
            filters,
            kernel: [3, 3],
            activation: Activation::Relu,
        },
        LayerSpec::Maxpool2d { pool: [2, 2] },
        LayerSpec::Flatten,
    ]
}

/// Side of the square landmark grid for `dim` inputs.
fn landmark_side(dim: usize) -> Result<usize> {
    let side = (dim as f64).sqrt().round() as usize;
    if side * side != dim {
        return Err(Error::SpecValidation {
            layer: "input(landmarks)".into(),
            reason: format!("{dim} landmark inputs cannot be reshaped to a square grid"),
        });
    }
    Ok(side)
}

impl NetworkSpec {
    /// One of the four standard networks for `bio_dim` bio inputs and
    /// `landmark_dim` (a perfect square) landmark inputs.
    pub fn standard(
        topology: Topology,
        filters: &FilterConfig,
        post_fusion_conv: bool,
        bio_dim: usize,
        landmark_dim: usize,
    ) -> Result<NetworkSpec> {
        let bio = |f| BranchSpec {
            input: InputSource::Bio,
            shape: [1, bio_dim, 1],
            layers: conv1d_block(f),
        };
        let land = |f| -> Result<BranchSpec> {
            let side = landmark_side(landmark_dim)?;
            Ok(BranchSpec {
                input: InputSource::Landmarks,
                shape: [1, side, side],
                layers: conv2d_block(f),
            })
        };
        let (branches, trunk) = match topology {
            Topology::UnimodalBio => (vec![bio(filters.unimodal_bio)], vec![]),
            Topology::UnimodalLandmarks => (vec![land(filters.unimodal_landmarks)?], vec![]),
            Topology::EarlyFusion => (
                vec![BranchSpec {
                    input: InputSource::Both,
                    shape: [1, bio_dim + landmark_dim, 1],
                    layers: conv1d_block(filters.early_fusion),
                }],
                vec![],
            ),
            Topology::IntermediateFusion => {
                let mut trunk = vec![LayerSpec::Concat];
                if post_fusion_conv {
                    trunk.extend(conv1d_block(filters.post_fusion));
                }
                (
                    vec![bio(filters.intermediate_bio), land(filters.intermediate_landmarks)?],
                    trunk,
                )
            }
        };
        Ok(NetworkSpec {
            topology,
            post_fusion_conv: post_fusion_conv && topology == Topology::IntermediateFusion,
            branches,
            trunk,
            head: standard_head(),
        })
    }
}

/// Compiled layer with resolved shapes and parameter offsets.
#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Op {
    Conv {
        filters: usize,
        kernel: [usize; 2],
        activation: Activation,
        input: Shape,
        output: Shape,
        offset: usize,
    },
    Pool {
        pool: [usize; 2],
        input: Shape,
        output: Shape,
    },
    Identity,
    Dense {
        units: usize,
        inputs: usize,
        activation: Activation,
        l2: f64,
        offset: usize,
    },
    Dropout {
        rate: f64,
        size: usize,
    },
}

impl Op {
    fn param_count(&self) -> usize {
        match *self {
            Op::Conv {
                filters,
                kernel,
                input,
                ..
            } => filters * input[0] * kernel[0] * kernel[1] + filters,
            Op::Dense { units, inputs, .. } => units * inputs + units,
            _ => 0,
        }
    }

    /// Glorot fan-in and fan-out.
    fn fans(&self) -> Option<(usize, usize)> {
        match *self {
            Op::Conv {
                filters,
                kernel,
                input,
                ..
            } => {
                let area = kernel[0] * kernel[1];
                Some((input[0] * area, filters * area))
            }
            Op::Dense { units, inputs, .. } => Some((inputs, units)),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct CompiledBranch {
    pub input: InputSource,
    pub shape: Shape,
    pub ops: Vec<Op>,
    pub out_size: usize,
    pub out_shape: Shape,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Plan {
    pub branches: Vec<CompiledBranch>,
    /// Trunk followed by head.
    pub trunk: Vec<Op>,
    pub n_params: usize,
}

impl Plan {
    pub fn ops(&self) -> impl Iterator<Item = &Op> {
        self.branches
            .iter()
            .flat_map(|b| b.ops.iter())
            .chain(self.trunk.iter())
    }
}

fn invalid(layer: &str, reason: impl Into<String>) -> Error {
    Error::SpecValidation {
        layer: layer.to_string(),
        reason: reason.into(),
    }
}

fn conv_op(name: &str, shape: Shape, offset: &mut usize, filters: usize, kernel: [usize; 2], activation: Activation) -> Result<(Op, Shape)> {
    let [_, h, w] = shape;
    if filters == 0 || kernel[0] == 0 || kernel[1] == 0 {
        return Err(invalid(name, "filters and kernel sizes must be positive"));
    }
    if h < kernel[0] || w < kernel[1] {
        return Err(invalid(
            name,
            format!("kernel {}x{} larger than input {h}x{w}", kernel[0], kernel[1]),
        ));
    }
    if activation == Activation::Softmax {
        return Err(invalid(name, "softmax is only allowed on the output layer"));
    }
    let output = [filters, h - kernel[0] + 1, w - kernel[1] + 1];
    let op = Op::Conv {
        filters,
        kernel,
        activation,
        input: shape,
        output,
        offset: *offset,
    };
    *offset += op.param_count();
    Ok((op, output))
}

fn compile_layer(layer: &LayerSpec, name: &str, shape: Shape, offset: &mut usize, last: bool) -> Result<(Op, Shape)> {
    let [c, h, w] = shape;
    let pool = |pool: [usize; 2]| -> Result<(Op, Shape)> {
        if pool[0] == 0 || pool[1] == 0 {
            return Err(invalid(name, "pool sizes must be positive"));
        }
        let output = [c, h / pool[0], w / pool[1]];
        if output[1] == 0 || output[2] == 0 {
            return Err(invalid(
                name,
                format!("pool {}x{} empties a {h}x{w} input", pool[0], pool[1]),
            ));
        }
        Ok((Op::Pool { pool, input: shape, output }, output))
    };
    match layer {
        LayerSpec::Conv1d {
            filters,
            kernel,
            activation,
        } => {
            if w != 1 {
                return Err(invalid(name, format!("conv1d needs width-1 input, got {c}x{h}x{w}")));
            }
            conv_op(name, shape, offset, *filters, [*kernel, 1], *activation)
        }
        LayerSpec::Conv2d {
            filters,
            kernel,
            activation,
        } => conv_op(name, shape, offset, *filters, *kernel, *activation),
        LayerSpec::Maxpool1d { pool: p } => {
            if w != 1 {
                return Err(invalid(name, format!("maxpool1d needs width-1 input, got {c}x{h}x{w}")));
            }
            pool([*p, 1])
        }
        LayerSpec::Maxpool2d { pool: p } => pool(*p),
        LayerSpec::Flatten => Ok((Op::Identity, [1, c * h * w, 1])),
        LayerSpec::Concat => Err(invalid(name, "concat may only open the trunk of a multi-branch network")),
        LayerSpec::Dense {
            units,
            activation,
            l2,
            in_features,
        } => {
            if c != 1 || w != 1 {
                return Err(invalid(name, format!("dense needs flattened input, got {c}x{h}x{w}")));
            }
            if let Some(expected) = in_features {
                if *expected != h {
                    return Err(invalid(
                        name,
                        format!("expects {expected} input features, previous layer yields {h}"),
                    ));
                }
            }
            if *units == 0 {
                return Err(invalid(name, "units must be positive"));
            }
            if !(*l2 >= 0.0) || !l2.is_finite() {
                return Err(invalid(name, format!("l2 coefficient {l2} must be >= 0")));
            }
            if *activation == Activation::Softmax && !last {
                return Err(invalid(name, "softmax is only allowed on the output layer"));
            }
            let op = Op::Dense {
                units: *units,
                inputs: h,
                activation: *activation,
                l2: *l2,
                offset: *offset,
            };
            *offset += op.param_count();
            Ok((op, [1, *units, 1]))
        }
        LayerSpec::Dropout { rate } => {
            if !(0.0..1.0).contains(rate) {
                return Err(invalid(name, format!("dropout rate {rate} outside [0, 1)")));
            }
            Ok((Op::Dropout { rate: *rate, size: c * h * w }, shape))
        }
    }
}

pub(crate) fn compile(spec: &NetworkSpec) -> Result<Plan> {
    if spec.branches.is_empty() {
        return Err(invalid("branches", "at least one branch is required"));
    }
    let mut offset = 0;
    let mut branches = Vec::new();
    for (b, branch) in spec.branches.iter().enumerate() {
        let size: usize = branch.shape.iter().product();
        if size == 0 {
            return Err(invalid(&format!("branches[{b}]"), "empty input shape"));
        }
        let mut shape = branch.shape;
        let mut ops = Vec::new();
        for (l, layer) in branch.layers.iter().enumerate() {
            let name = format!("branches[{b}].layers[{l}] ({})", layer.kind());
            let (op, next) = compile_layer(layer, &name, shape, &mut offset, false)?;
            ops.push(op);
            shape = next;
        }
        branches.push(CompiledBranch {
            input: branch.input,
            shape: branch.shape,
            ops,
            out_size: shape.iter().product(),
            out_shape: shape,
        });
    }
    let multi = spec.branches.len() > 1;
    let mut shape = if multi {
        [1, branches.iter().map(|b| b.out_size).sum(), 1]
    } else {
        branches[0].out_shape
    };
    let mut trunk = Vec::new();
    let mut rest: &[LayerSpec] = &spec.trunk;
    if multi {
        match rest.first() {
            Some(LayerSpec::Concat) => {
                trunk.push(Op::Identity);
                rest = &rest[1..];
            }
            _ => return Err(invalid("trunk[0]", "a multi-branch network must start its trunk with concat")),
        }
    }
    let first_trunk = spec.trunk.len() - rest.len();
    let layers: Vec<(String, &LayerSpec)> = rest
        .iter()
        .enumerate()
        .map(|(i, l)| (format!("trunk[{}] ({})", i + first_trunk, l.kind()), l))
        .chain(
            spec.head
                .iter()
                .enumerate()
                .map(|(i, l)| (format!("head[{i}] ({})", l.kind()), l)),
        )
        .collect();
    let total = layers.len();
    for (i, (name, layer)) in layers.into_iter().enumerate() {
        let (op, next) = compile_layer(layer, &name, shape, &mut offset, i + 1 == total)?;
        trunk.push(op);
        shape = next;
    }
    match spec.head.last() {
        Some(LayerSpec::Dense {
            units: 3,
            activation: Activation::Softmax,
            ..
        }) => {}
        _ => {
            return Err(invalid(
                &format!("head[{}]", spec.head.len().saturating_sub(1)),
                "the output layer must be dense 3 with softmax",
            ))
        }
    }
    Ok(Plan {
        branches,
        trunk,
        n_params: offset,
    })
}

/// Number of weights and biases in a network.
pub fn count_params(spec: &NetworkSpec) -> Result<usize> {
    Ok(compile(spec)?.n_params)
}

/// Network spec, its parameters and the per-epoch training loss.
#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub spec: NetworkSpec,
    pub seed: u64,
    pub params: Vec<f64>,
    pub history: Vec<f64>,
    pub(crate) plan: Plan,
}

impl PartialEq for TrainedModel {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
            && self.seed == other.seed
            && self.history == other.history
            && self.params.len() == other.params.len()
            && self
                .params
                .iter()
                .zip(&other.params)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Glorot-uniform weights from `RngStream(seed, layer_index)`, zero biases.
/// Layer indices count every layer, branches first, then trunk and head.
pub fn build(spec: &NetworkSpec, seed: u64) -> Result<TrainedModel> {
    let plan = compile(spec)?;
    let mut params = vec![0.0; plan.n_params];
    for (index, op) in plan.ops().enumerate() {
        let (Some((fan_in, fan_out)), Some(offset)) = (op.fans(), engine::weight_offset(op)) else {
            continue;
        };
        let weights = op.param_count() - engine::bias_count(op);
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let mut rng = RngStream::new(seed, index as u64);
        for w in &mut params[offset..offset + weights] {
            *w = rng.uniform(-limit, limit);
        }
    }
    Ok(TrainedModel {
        spec: spec.clone(),
        seed,
        params,
        history: Vec::new(),
        plan,
    })
}

impl TrainedModel {
    pub fn n_params(&self) -> usize {
        self.plan.n_params
    }

    /// Weight and bias index ranges of each conv or dense layer, in layer
    /// order.
    pub fn param_blocks(&self) -> Vec<(Range<usize>, Range<usize>)> {
        self.plan
            .ops()
            .filter_map(|op| {
                let offset = engine::weight_offset(op)?;
                let weights = op.param_count() - engine::bias_count(op);
                let end = offset + op.param_count();
                Some((offset..offset + weights, offset + weights..end))
            })
            .collect()
    }

    pub(crate) fn from_parts(spec: NetworkSpec, seed: u64, params: Vec<f64>, history: Vec<f64>) -> Result<Self> {
        let plan = compile(&spec)?;
        if params.len() != plan.n_params {
            return Err(Error::Format(format!(
                "model has {} parameters, spec needs {}",
                params.len(),
                plan.n_params
            )));
        }
        Ok(TrainedModel {
            spec,
            seed,
            params,
            history,
            plan,
        })
    }

    /// Checks that rows of these widths fit the network inputs.
    pub fn check_inputs(&self, bio_len: usize, landmark_len: usize) -> Result<()> {
        for (b, branch) in self.plan.branches.iter().enumerate() {
            let want: usize = branch.shape.iter().product();
            let got = match branch.input {
                InputSource::Bio => bio_len,
                InputSource::Landmarks => landmark_len,
                InputSource::Both => bio_len + landmark_len,
            };
            if want != got {
                return Err(Error::InvalidInput(format!(
                    "branch {b} ({:?}) expects {want} inputs, got {got}",
                    branch.input
                )));
            }
        }
        Ok(())
    }
}

/// Class probabilities for one sample. With `training`, dropout masks come
/// from `RngStream(model.seed, 2^33)`.
pub fn forward(model: &TrainedModel, bio_row: &[f64], landmark_row: &[f64], training: bool) -> Result<Vec<f64>> {
    model.check_inputs(bio_row.len(), landmark_row.len())?;
    if bio_row.iter().chain(landmark_row).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("forward: non-finite input".into()));
    }
    let masks = if training {
        let mut rng = RngStream::new(model.seed, DROPOUT_STREAM);
        Some(engine::draw_masks(&model.plan, &mut rng))
    } else {
        None
    };
    Ok(engine::forward_sample(&model.plan, &model.params, bio_row, landmark_row, masks.as_deref(), None))
}

/// Argmax with ties toward the smaller class.
pub fn argmax(p: &[f64]) -> u8 {
    let mut best = 0;
    for k in 1..p.len() {
        if p[k] > p[best] {
            best = k;
        }
    }
    best as u8
}

/// Labels for every row, dropout off.
pub fn predict(model: &TrainedModel, bio: &Matrix, landmarks: &Matrix) -> Result<Vec<u8>> {
    Ok(predict_proba(model, bio, landmarks)?.iter().map(|p| argmax(p)).collect())
}

pub fn predict_proba(model: &TrainedModel, bio: &Matrix, landmarks: &Matrix) -> Result<Vec<Vec<f64>>> {
    use rayon::prelude::*;
    let n = bio.rows().max(landmarks.rows());
    if (model.spec.topology.uses_bio() && bio.rows() != n)
        || (model.spec.topology.uses_landmarks() && landmarks.rows() != n)
    {
        return Err(Error::InvalidInput("bio and landmark row counts differ".into()));
    }
    model.check_inputs(bio.cols(), landmarks.cols())?;
    if !bio.is_finite() || !landmarks.is_finite() {
        return Err(Error::InvalidInput("predict: non-finite input".into()));
    }
    let row = |m: &'_ Matrix, i: usize| -> Vec<f64> {
        if m.rows() == 0 {
            Vec::new()
        } else {
            m.row(i).to_vec()
        }
    };
    Ok((0..n)
        .into_par_iter()
        .map(|i| engine::forward_sample(&model.plan, &model.params, &row(bio, i), &row(landmarks, i), None, None))
        .collect())
}
