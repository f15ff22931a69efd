use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::engine::{backward_sample, draw_masks, forward_sample, Cache};
use super::{Op, TrainedModel};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream};

/// Floor on the true-class probability inside the log.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
/// Samples per parallel work unit; partial sums are added in order so the
/// result does not depend on the thread count.
const CHUNK: usize = 8;
const DROPOUT_STREAM_BASE: u64 = 1 << 32;

/// Row-aligned network inputs and labels. A modality the network does not
/// read may have zero columns.
#[derive(Clone, Debug, PartialEq)]
pub struct NetData {
    pub bio: Matrix,
    pub landmarks: Matrix,
    pub labels: Vec<u8>,
}

impl NetData {
    pub fn new(bio: Matrix, landmarks: Matrix, labels: Vec<u8>) -> Result<NetData> {
        let n = labels.len();
        if bio.rows() != n || landmarks.rows() != n {
            return Err(Error::InvalidInput(format!(
                "{} labels but {} bio rows and {} landmark rows",
                n,
                bio.rows(),
                landmarks.rows()
            )));
        }
        if let Some(i) = labels.iter().position(|&l| l > 2) {
            return Err(Error::InvalidInput(format!("label {} at row {i}", labels[i])));
        }
        if !bio.is_finite() || !landmarks.is_finite() {
            return Err(Error::InvalidInput("network inputs must be finite".into()));
        }
        Ok(NetData { bio, landmarks, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    #[default]
    Adam,
    Sgd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: Optimizer::Adam,
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 100,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "learning_rate {} must be > 0",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Loss and its gradient with respect to every parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub loss: f64,
    pub values: Vec<f64>,
}

fn l2_term(model: &TrainedModel) -> f64 {
    model
        .plan
        .ops()
        .map(|op| match *op {
            Op::Dense {
                units,
                inputs,
                l2,
                offset,
                ..
            } if l2 > 0.0 => l2 * model.params[offset..offset + units * inputs].iter().map(|w| w * w).sum::<f64>(),
            _ => 0.0,
        })
        .sum()
}

fn add_l2_gradient(model: &TrainedModel, grad: &mut [f64]) {
    for op in model.plan.ops() {
        if let Op::Dense {
            units,
            inputs,
            l2,
            offset,
            ..
        } = *op
        {
            if l2 > 0.0 {
                for k in offset..offset + units * inputs {
                    grad[k] += 2.0 * l2 * model.params[k];
                }
            }
        }
    }
}

/// Summed cross-entropy and summed gradient over `rows`.
fn batch_sums(model: &TrainedModel, data: &NetData, rows: &[usize], masks: Option<&[Vec<Vec<f64>>]>) -> (f64, Vec<f64>) {
    let n_params = model.plan.n_params;
    let partial: Vec<(f64, Vec<f64>)> = rows
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(chunk, chunk_rows)| {
            let mut grad = vec![0.0; n_params];
            let mut ce = 0.0;
            let mut cache = Cache::default();
            for (k, &i) in chunk_rows.iter().enumerate() {
                let mask = masks.map(|m| m[chunk * CHUNK + k].as_slice());
                let p = forward_sample(
                    &model.plan,
                    &model.params,
                    data.bio.row(i),
                    data.landmarks.row(i),
                    mask,
                    Some(&mut cache),
                );
                let y = data.labels[i] as usize;
                ce -= p[y].max(PROBABILITY_FLOOR).ln();
                let mut dlogits = p;
                dlogits[y] -= 1.0;
                backward_sample(&model.plan, &model.params, &cache, mask, &dlogits, &mut grad);
            }
            (ce, grad)
        })
        .collect();
    let mut ce = 0.0;
    let mut grad = vec![0.0; n_params];
    for (c, g) in partial {
        ce += c;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    (ce, grad)
}

fn batch_gradient(model: &TrainedModel, data: &NetData, rows: &[usize], masks: Option<&[Vec<Vec<f64>>]>) -> Gradients {
    let (ce, mut values) = batch_sums(model, data, rows, masks);
    let scale = 1.0 / rows.len() as f64;
    values.iter_mut().for_each(|g| *g *= scale);
    add_l2_gradient(model, &mut values);
    Gradients {
        loss: ce * scale + l2_term(model),
        values,
    }
}

fn check(model: &TrainedModel, data: &NetData) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyDataset("no training rows".into()));
    }
    model.check_inputs(data.bio.cols(), data.landmarks.cols())
}

/// Mean cross-entropy plus the L2 penalty, dropout off.
pub fn loss(model: &TrainedModel, data: &NetData) -> Result<f64> {
    Ok(backward(model, data)?.loss)
}

/// Exact gradient of [`loss`] over all rows, dropout off.
pub fn backward(model: &TrainedModel, data: &NetData) -> Result<Gradients> {
    check(model, data)?;
    let rows: Vec<usize> = (0..data.len()).collect();
    Ok(batch_gradient(model, data, &rows, None))
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
        }
    }
}

/// Mini-batch training. Epoch `e` shuffles with `RngStream(seed, e)` and
/// draws dropout masks from `RngStream(seed, 2^32 + e)`.
pub fn train(model: &TrainedModel, data: &NetData, cfg: &TrainConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    check(model, data)?;
    let mut out = model.clone();
    let n = data.len();
    let mut adam = Adam {
        m: vec![0.0; out.plan.n_params],
        v: vec![0.0; out.plan.n_params],
        t: 0,
    };
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        RngStream::new(cfg.seed, epoch as u64).shuffle(&mut order);
        let mut dropout_rng = RngStream::new(cfg.seed, DROPOUT_STREAM_BASE + epoch as u64);
        let mut total = 0.0;
        for (batch, rows) in order.chunks(cfg.batch_size).enumerate() {
            let masks: Vec<Vec<Vec<f64>>> = rows.iter().map(|_| draw_masks(&out.plan, &mut dropout_rng)).collect();
            let g = batch_gradient(&out, data, rows, Some(&masks));
            if !g.loss.is_finite() || g.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { epoch, batch });
            }
            match cfg.optimizer {
                Optimizer::Adam => adam.step(&mut out.params, &g.values, cfg.learning_rate),
                Optimizer::Sgd => {
                    for (p, v) in out.params.iter_mut().zip(&g.values) {
                        *p -= cfg.learning_rate * v;
                    }
                }
            }
            total += g.loss * rows.len() as f64;
        }
        out.history.push(total / n as f64);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::{
        build, predict, Activation, BranchSpec, FilterConfig, InputSource, LayerSpec, NetworkSpec, Topology,
    };

    fn toy(n: usize, seed: u64, bio_dim: usize, lm_dim: usize) -> NetData {
        let mut rng = RngStream::new(seed, 0);
        let labels: Vec<u8> = (0..n).map(|i| (i % 3) as u8).collect();
        let mut bio = Matrix::zeros(n, bio_dim);
        let mut lm = Matrix::zeros(n, lm_dim);
        for i in 0..n {
            let l = labels[i] as f64;
            for c in 0..bio_dim {
                bio[(i, c)] = rng.gaussian(0.0, 0.3) + if c % 3 == labels[i] as usize { 1.5 } else { 0.0 };
            }
            for c in 0..lm_dim {
                lm[(i, c)] = rng.gaussian(l * 0.5, 0.3);
            }
        }
        NetData::new(bio, lm, labels).unwrap()
    }

    fn tiny_intermediate() -> NetworkSpec {
        let filters = FilterConfig {
            intermediate_bio: 2,
            intermediate_landmarks: 2,
            post_fusion: 2,
            ..FilterConfig::default()
        };
        NetworkSpec::standard(Topology::IntermediateFusion, &filters, true, 8, 16).unwrap()
    }

    fn finite_difference_check(spec: &NetworkSpec, data: &NetData, seed: u64) {
        let mut model = build(spec, seed).unwrap();
        // Non-zero biases exercise every bias gradient.
        let mut rng = RngStream::new(seed, 99);
        for p in model.params.iter_mut().filter(|p| **p == 0.0) {
            *p = rng.uniform(-0.1, 0.1);
        }
        let g = backward(&model, data).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for k in 0..model.params.len() {
            let orig = model.params[k];
            model.params[k] = orig + h;
            let up = loss(&model, data).unwrap();
            model.params[k] = orig - h;
            let down = loss(&model, data).unwrap();
            model.params[k] = orig;
            let fd = (up - down) / (2.0 * h);
            let err = (fd - g.values[k]).abs() / fd.abs().max(g.values[k].abs()).max(1e-6);
            worst = worst.max(err);
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn gradients_match_finite_differences() {
        finite_difference_check(&tiny_intermediate(), &toy(6, 1, 8, 16), 3);
    }

    #[test]
    fn early_fusion_gradients_match() {
        let filters = FilterConfig {
            early_fusion: 3,
            ..FilterConfig::default()
        };
        let spec = NetworkSpec::standard(Topology::EarlyFusion, &filters, false, 5, 9).unwrap();
        finite_difference_check(&spec, &toy(5, 2, 5, 9), 4);
    }

    #[test]
    fn uniform_predictor_loss_is_ln3() {
        let mut model = build(&tiny_intermediate(), 1).unwrap();
        model.params.iter_mut().for_each(|p| *p = 0.0);
        let l = loss(&model, &toy(9, 1, 8, 16)).unwrap();
        assert!((l - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn l2_adds_coefficient_times_count() {
        let spec = NetworkSpec {
            topology: Topology::UnimodalBio,
            post_fusion_conv: false,
            branches: vec![BranchSpec {
                input: InputSource::Bio,
                shape: [1, 4, 1],
                layers: vec![],
            }],
            trunk: vec![],
            head: vec![
                LayerSpec::Dense {
                    units: 5,
                    activation: Activation::Relu,
                    l2: 0.01,
                    in_features: None,
                },
                LayerSpec::Dense {
                    units: 3,
                    activation: Activation::Softmax,
                    l2: 0.0,
                    in_features: None,
                },
            ],
        };
        let mut model = build(&spec, 1).unwrap();
        model.params.iter_mut().for_each(|p| *p = 0.0);
        let data = NetData::new(Matrix::zeros(3, 4), Matrix::zeros(3, 0), vec![0, 1, 2]).unwrap();
        let base = loss(&model, &data).unwrap();
        model.params[..20].iter_mut().for_each(|p| *p = 1.0);
        // Hidden layer weights 1 with zero input leave the output uniform.
        let with_l2 = loss(&model, &data).unwrap();
        assert!((with_l2 - base - 0.01 * 20.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_gradient_is_p_minus_onehot() {
        let spec = NetworkSpec {
            topology: Topology::UnimodalBio,
            post_fusion_conv: false,
            branches: vec![BranchSpec {
                input: InputSource::Bio,
                shape: [1, 2, 1],
                layers: vec![],
            }],
            trunk: vec![],
            head: vec![LayerSpec::Dense {
                units: 3,
                activation: Activation::Softmax,
                l2: 0.0,
                in_features: None,
            }],
        };
        let model = build(&spec, 5).unwrap();
        let data = NetData::new(Matrix::from_rows(&[vec![0.0, 0.0]]).unwrap(), Matrix::zeros(1, 0), vec![1]).unwrap();
        let g = backward(&model, &data).unwrap();
        // Bias gradients equal the logit gradient when the input is zero.
        assert!((g.values[6] - 1.0 / 3.0).abs() < 1e-12);
        assert!((g.values[7] + 2.0 / 3.0).abs() < 1e-12);
        assert!((g.values[8] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_epochs_leaves_parameters() {
        let model = build(&tiny_intermediate(), 1).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let out = train(&model, &toy(9, 1, 8, 16), &cfg).unwrap();
        assert_eq!(out.params, model.params);
        assert!(out.history.is_empty());
    }

    #[test]
    fn training_is_deterministic_and_learns() {
        let data = toy(90, 7, 8, 16);
        let model = build(&tiny_intermediate(), 1).unwrap();
        let cfg = TrainConfig {
            epochs: 30,
            batch_size: 16,
            learning_rate: 5e-3,
            ..TrainConfig::default()
        };
        let a = train(&model, &data, &cfg).unwrap();
        let b = train(&model, &data, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.history.len(), 30);
        assert!(a.history[29] < a.history[0], "{:?}", a.history);
        let pred = predict(&a, &data.bio, &data.landmarks).unwrap();
        let acc = pred.iter().zip(&data.labels).filter(|(p, l)| p == l).count() as f64 / 90.0;
        assert!(acc > 0.8, "{acc}");
    }

    #[test]
    fn gradient_covers_every_parameter() {
        let model = build(&tiny_intermediate(), 1).unwrap();
        let g = backward(&model, &toy(6, 1, 8, 16)).unwrap();
        assert_eq!(g.values.len(), model.n_params());
        assert!(g.values.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn divergence_reported() {
        let mut model = build(&tiny_intermediate(), 1).unwrap();
        model.params[0] = f64::MAX;
        model.params[1] = f64::MAX;
        let err = train(&model, &toy(9, 1, 8, 16), &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Divergence { epoch: 0, .. }), "{err}");
    }
}
