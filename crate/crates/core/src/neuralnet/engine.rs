//! Per-sample forward and reverse passes over a compiled [`Plan`].

use super::{Activation, InputSource, Op, Plan};
use crate::numerics::RngStream;

pub(crate) fn weight_offset(op: &Op) -> Option<usize> {
    match *op {
        Op::Conv { offset, .. } | Op::Dense { offset, .. } => Some(offset),
        _ => None,
    }
}

pub(crate) fn bias_count(op: &Op) -> usize {
    match *op {
        Op::Conv { filters, .. } => filters,
        Op::Dense { units, .. } => units,
        _ => 0,
    }
}

/// Inverted-dropout multipliers (0 or `1/(1 − rate)`), one vector per
/// dropout layer in plan order.
pub(crate) fn draw_masks(plan: &Plan, rng: &mut RngStream) -> Vec<Vec<f64>> {
    plan.ops()
        .filter_map(|op| match *op {
            Op::Dropout { rate, size } => {
                let keep = 1.0 / (1.0 - rate);
                Some(
                    (0..size)
                        .map(|_| if rng.unit() < rate { 0.0 } else { keep })
                        .collect(),
                )
            }
            _ => None,
        })
        .collect()
}

/// Activations recorded during a forward pass, indexed like `plan.ops()`.
#[derive(Default)]
pub(crate) struct Cache {
    inputs: Vec<Vec<f64>>,
    outputs: Vec<Vec<f64>>,
    argmax: Vec<Vec<usize>>,
}

/// Dot product with four fixed accumulators (deterministic, vectorizable).
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Visits the contiguous runs pairing output positions with the input
/// positions seen by kernel tap `(a, b)` on channel `c`: calls
/// `visit(output_start, input_start, len)`. With a width-1 kernel the whole
/// output plane is one run.
fn for_each_tap_run(
    kw: usize,
    [h, w]: [usize; 2],
    [oh, ow]: [usize; 2],
    c: usize,
    a: usize,
    b: usize,
    mut visit: impl FnMut(usize, usize, usize),
) {
    if kw == 1 {
        visit(0, (c * h + a) * w, oh * ow);
    } else {
        for i in 0..oh {
            visit(i * ow, (c * h + i + a) * w + b, ow);
        }
    }
}

fn activate(v: &mut [f64], activation: Activation) {
    match activation {
        Activation::Relu => v.iter_mut().for_each(|x| *x = x.max(0.0)),
        Activation::None => {}
        Activation::Softmax => {
            let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for x in v.iter_mut() {
                *x = (*x - m).exp();
                sum += *x;
            }
            v.iter_mut().for_each(|x| *x /= sum);
        }
    }
}

fn apply(op: &Op, params: &[f64], x: &[f64], mask: Option<&[f64]>, argmax: &mut Vec<usize>) -> Vec<f64> {
    match *op {
        Op::Conv {
            filters,
            kernel: [kh, kw],
            activation,
            input: [c_in, h, w],
            output: [_, oh, ow],
            offset,
        } => {
            let weights = &params[offset..offset + filters * c_in * kh * kw];
            let bias = &params[offset + weights.len()..offset + weights.len() + filters];
            let plane = oh * ow;
            let mut out = vec![0.0; filters * plane];
            for (f, out_f) in out.chunks_exact_mut(plane).enumerate() {
                out_f.fill(bias[f]);
                for c in 0..c_in {
                    for a in 0..kh {
                        for b in 0..kw {
                            let wv = weights[((f * c_in + c) * kh + a) * kw + b];
                            for_each_tap_run(kw, [h, w], [oh, ow], c, a, b, |o, xi, len| {
                                axpy(wv, &x[xi..xi + len], &mut out_f[o..o + len]);
                            });
                        }
                    }
                }
            }
            activate(&mut out, activation);
            out
        }
        Op::Pool {
            pool: [ph, pw],
            input: [c, h, w],
            output: [_, oh, ow],
        } => {
            argmax.clear();
            let mut out = Vec::with_capacity(c * oh * ow);
            for ch in 0..c {
                for i in 0..oh {
                    for j in 0..ow {
                        let mut best = (ch * h + i * ph) * w + j * pw;
                        for a in 0..ph {
                            for b in 0..pw {
                                let idx = (ch * h + i * ph + a) * w + j * pw + b;
                                if x[idx] > x[best] {
                                    best = idx;
                                }
                            }
                        }
                        argmax.push(best);
                        out.push(x[best]);
                    }
                }
            }
            out
        }
        Op::Identity => x.to_vec(),
        Op::Dense {
            units,
            inputs,
            activation,
            offset,
            ..
        } => {
            let weights = &params[offset..offset + units * inputs];
            let bias = &params[offset + units * inputs..offset + units * inputs + units];
            let mut out: Vec<f64> = (0..units)
                .map(|u| {
                    bias[u] + dot(&weights[u * inputs..(u + 1) * inputs], x)
                })
                .collect();
            activate(&mut out, activation);
            out
        }
        Op::Dropout { .. } => match mask {
            Some(m) => x.iter().zip(m).map(|(v, k)| v * k).collect(),
            None => x.to_vec(),
        },
    }
}

fn branch_input(source: InputSource, bio: &[f64], landmarks: &[f64]) -> Vec<f64> {
    match source {
        InputSource::Bio => bio.to_vec(),
        InputSource::Landmarks => landmarks.to_vec(),
        InputSource::Both => bio.iter().chain(landmarks).copied().collect(),
    }
}

/// Class probabilities. `masks` switches dropout on; `cache` records what
/// [`backward_sample`] needs.
pub(crate) fn forward_sample(
    plan: &Plan,
    params: &[f64],
    bio: &[f64],
    landmarks: &[f64],
    masks: Option<&[Vec<f64>]>,
    mut cache: Option<&mut Cache>,
) -> Vec<f64> {
    if let Some(c) = cache.as_deref_mut() {
        c.inputs.clear();
        c.outputs.clear();
        c.argmax.clear();
    }
    let mut dropout = 0;
    let mut scratch = Vec::new();
    let mut step = |op: &Op, x: Vec<f64>, cache: &mut Option<&mut Cache>| -> Vec<f64> {
        let mask = match op {
            Op::Dropout { .. } => {
                dropout += 1;
                masks.map(|m| m[dropout - 1].as_slice())
            }
            _ => None,
        };
        let y = apply(op, params, &x, mask, &mut scratch);
        if let Some(c) = cache.as_deref_mut() {
            c.inputs.push(x);
            c.outputs.push(y.clone());
            c.argmax.push(std::mem::take(&mut scratch));
        }
        y
    };
    let mut joined = Vec::new();
    for branch in &plan.branches {
        let mut x = branch_input(branch.input, bio, landmarks);
        for op in &branch.ops {
            x = step(op, x, &mut cache);
        }
        joined.extend(x);
    }
    let mut x = joined;
    for op in &plan.trunk {
        x = step(op, x, &mut cache);
    }
    x
}

/// Reverse pass through one op. `dy` is the gradient at the op's output,
/// except for a softmax op where it is the gradient at the logits.
#[allow(clippy::too_many_arguments)]
fn reverse(
    op: &Op,
    params: &[f64],
    x: &[f64],
    y: &[f64],
    argmax: &[usize],
    mask: Option<&[f64]>,
    dy: &[f64],
    grads: &mut [f64],
    need_dx: bool,
) -> Vec<f64> {
    let pre = |activation: Activation| -> Vec<f64> {
        match activation {
            Activation::Relu => dy
                .iter()
                .zip(y)
                .map(|(g, &v)| if v > 0.0 { *g } else { 0.0 })
                .collect(),
            Activation::None | Activation::Softmax => dy.to_vec(),
        }
    };
    match *op {
        Op::Conv {
            filters,
            kernel: [kh, kw],
            activation,
            input: [c_in, h, w],
            output: [_, oh, ow],
            offset,
        } => {
            let dz = pre(activation);
            let nw = filters * c_in * kh * kw;
            let mut dx = if need_dx { vec![0.0; x.len()] } else { Vec::new() };
            let (gw, gb) = grads[offset..offset + nw + filters].split_at_mut(nw);
            let weights = &params[offset..offset + nw];
            let plane = oh * ow;
            for (f, dz_f) in dz.chunks_exact(plane).enumerate() {
                gb[f] += dz_f.iter().sum::<f64>();
                for c in 0..c_in {
                    for a in 0..kh {
                        for b in 0..kw {
                            let k = ((f * c_in + c) * kh + a) * kw + b;
                            let wv = weights[k];
                            let mut acc = 0.0;
                            for_each_tap_run(kw, [h, w], [oh, ow], c, a, b, |o, xi, len| {
                                acc += dot(&dz_f[o..o + len], &x[xi..xi + len]);
                                if need_dx {
                                    axpy(wv, &dz_f[o..o + len], &mut dx[xi..xi + len]);
                                }
                            });
                            gw[k] += acc;
                        }
                    }
                }
            }
            dx
        }
        Op::Pool { .. } => {
            let mut dx = vec![0.0; x.len()];
            for (g, &i) in dy.iter().zip(argmax) {
                dx[i] += g;
            }
            dx
        }
        Op::Identity => dy.to_vec(),
        Op::Dense {
            units,
            inputs,
            activation,
            offset,
            ..
        } => {
            let dz = pre(activation);
            let nw = units * inputs;
            let mut dx = if need_dx { vec![0.0; inputs] } else { Vec::new() };
            let (gw, gb) = grads[offset..offset + nw + units].split_at_mut(nw);
            let weights = &params[offset..offset + nw];
            for u in 0..units {
                let g = dz[u];
                if g == 0.0 {
                    continue;
                }
                gb[u] += g;
                let row = u * inputs..(u + 1) * inputs;
                for (gw, xk) in gw[row.clone()].iter_mut().zip(x) {
                    *gw += g * xk;
                }
                if need_dx {
                    for (d, wk) in dx.iter_mut().zip(&weights[row]) {
                        *d += g * wk;
                    }
                }
            }
            dx
        }
        Op::Dropout { .. } => match mask {
            Some(m) => dy.iter().zip(m).map(|(g, k)| g * k).collect(),
            None => dy.to_vec(),
        },
    }
}

/// Accumulates parameter gradients for one sample into `grads`, given the
/// gradient at the output logits.
pub(crate) fn backward_sample(
    plan: &Plan,
    params: &[f64],
    cache: &Cache,
    masks: Option<&[Vec<f64>]>,
    dlogits: &[f64],
    grads: &mut [f64],
) {
    let ops: Vec<&Op> = plan.ops().collect();
    let mut dropout_index: Vec<Option<usize>> = Vec::with_capacity(ops.len());
    let mut d = 0;
    for op in &ops {
        if matches!(op, Op::Dropout { .. }) {
            dropout_index.push(Some(d));
            d += 1;
        } else {
            dropout_index.push(None);
        }
    }
    let mask_of = |k: usize| dropout_index[k].and_then(|d| masks.map(|m| m[d].as_slice()));
    let branch_ops: usize = plan.branches.iter().map(|b| b.ops.len()).sum();

    let mut dy = dlogits.to_vec();
    for (t, op) in plan.trunk.iter().enumerate().rev() {
        let k = branch_ops + t;
        dy = reverse(
            op,
            params,
            &cache.inputs[k],
            &cache.outputs[k],
            &cache.argmax[k],
            mask_of(k),
            &dy,
            grads,
            true,
        );
    }
    let mut start = branch_ops;
    let mut end = dy.len();
    for branch in plan.branches.iter().rev() {
        start -= branch.ops.len();
        let mut g = dy[end - branch.out_size..end].to_vec();
        end -= branch.out_size;
        for (i, op) in branch.ops.iter().enumerate().rev() {
            let k = start + i;
            g = reverse(
                op,
                params,
                &cache.inputs[k],
                &cache.outputs[k],
                &cache.argmax[k],
                mask_of(k),
                &g,
                grads,
                i > 0,
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::{compile, BranchSpec, LayerSpec, NetworkSpec, Topology};

    fn conv_only() -> Plan {
        let spec = NetworkSpec {
            topology: Topology::UnimodalBio,
            post_fusion_conv: false,
            branches: vec![BranchSpec {
                input: InputSource::Bio,
                shape: [1, 5, 1],
                layers: vec![LayerSpec::Conv1d {
                    filters: 1,
                    kernel: 3,
                    activation: Activation::None,
                }],
            }],
            trunk: vec![LayerSpec::Flatten],
            head: vec![LayerSpec::Dense {
                units: 3,
                activation: Activation::Softmax,
                l2: 0.0,
                in_features: Some(3),
            }],
        };
        compile(&spec).unwrap()
    }

    #[test]
    fn hand_convolution() {
        let plan = conv_only();
        let mut params = vec![0.0; plan.n_params];
        params[..3].copy_from_slice(&[1.0, 0.0, -1.0]);
        let mut cache = Cache::default();
        forward_sample(&plan, &params, &[3.0, 1.0, 4.0, 1.0, 5.0], &[], None, Some(&mut cache));
        // 3·1 + 1·0 + 4·(−1), 1·1 + 4·0 + 1·(−1), 4·1 + 1·0 + 5·(−1)
        assert_eq!(cache.outputs[0], vec![-1.0, 0.0, -1.0]);
    }

    #[test]
    fn pool_ties_take_first() {
        let op = Op::Pool {
            pool: [2, 1],
            input: [1, 4, 1],
            output: [1, 2, 1],
        };
        let mut argmax = Vec::new();
        let y = apply(&op, &[], &[2.0, 2.0, 1.0, 3.0], None, &mut argmax);
        assert_eq!(y, vec![2.0, 3.0]);
        assert_eq!(argmax, vec![0, 3]);
    }

    #[test]
    fn inverted_dropout_keeps_expectation() {
        let op = Op::Dropout { rate: 0.2, size: 1 };
        let plan = Plan {
            branches: vec![],
            trunk: vec![op],
            n_params: 0,
        };
        let mut rng = RngStream::new(7, 0);
        let trials = 100_000;
        let mean: f64 = (0..trials)
            .map(|_| draw_masks(&plan, &mut rng)[0][0] * 0.8)
            .sum::<f64>()
            / trials as f64;
        assert!((mean - 0.8).abs() < 0.008, "{mean}");
    }
}
