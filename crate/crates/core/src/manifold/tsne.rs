use rayon::prelude::*;

use super::{Diagnostics, EmbeddingResult};
use crate::error::{Error, Result};
use crate::numerics::{duplicate_representatives, pairwise_distances, Matrix, RngStream};

/// Lower bound applied to joint probabilities and to `q_ij` inside logs.
pub const P_FLOOR: f64 = 1e-12;

const PERPLEXITY_STEPS: usize = 50;
const PERPLEXITY_TOL: f64 = 1e-5;
const LEARNING_RATE: f64 = 200.0;
const EXAGGERATION: f64 = 12.0;
const EXAGGERATION_ITERS: usize = 250;
const INIT_STD: f64 = 1e-4;

/// Row-conditional Gaussian neighbor distributions.
#[derive(Clone, Debug)]
pub struct Conditional {
    /// Row `i` holds `p_{j|i}`; zero diagonal, rows sum to 1.
    pub p: Matrix,
    pub betas: Vec<f64>,
    /// Shannon entropy of each row in bits.
    pub entropies: Vec<f64>,
}

fn row_distribution(d2: &[f64], i: usize, beta: f64, probs: &mut [f64]) -> f64 {
    let shift = d2
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &v)| v)
        .fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    let mut weighted = 0.0;
    for (j, (p, &v)) in probs.iter_mut().zip(d2).enumerate() {
        if j == i {
            *p = 0.0;
            continue;
        }
        let e = (-beta * (v - shift)).exp();
        *p = e;
        sum += e;
        weighted += e * (v - shift);
    }
    for p in probs.iter_mut() {
        *p /= sum;
    }
    (sum.ln() + beta * weighted / sum) / std::f64::consts::LN_2
}

/// Finds, per row, the Gaussian precision whose conditional distribution has
/// the requested perplexity (bisection in β, at most 50 steps, entropy
/// matched to 1e-5 bits).
pub fn conditional_probabilities(sq_distances: &Matrix, perplexity: f64) -> Result<Conditional> {
    let n = sq_distances.rows();
    if !(perplexity > 0.0) || perplexity >= (n as f64 - 1.0) / 3.0 {
        return Err(Error::InvalidArgument(format!(
            "perplexity {perplexity} infeasible for {n} points (needs < (n-1)/3)"
        )));
    }
    let target = perplexity.log2();
    let rows: Vec<(Vec<f64>, f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let d2 = sq_distances.row(i);
            let mean: f64 = d2.iter().sum::<f64>() / (n - 1) as f64;
            let mut beta = if mean > 0.0 { 1.0 / mean } else { 1.0 };
            let (mut lo, mut hi) = (0.0, f64::INFINITY);
            let mut probs = vec![0.0; n];
            let mut h = row_distribution(d2, i, beta, &mut probs);
            for _ in 0..PERPLEXITY_STEPS {
                let diff = h - target;
                if diff.abs() < PERPLEXITY_TOL {
                    break;
                }
                if diff > 0.0 {
                    lo = beta;
                    beta = if hi.is_finite() { 0.5 * (beta + hi) } else { beta * 2.0 };
                } else {
                    hi = beta;
                    beta = 0.5 * (beta + lo);
                }
                h = row_distribution(d2, i, beta, &mut probs);
            }
            (probs, beta, h)
        })
        .collect();
    let mut p = Vec::with_capacity(n * n);
    let mut betas = Vec::with_capacity(n);
    let mut entropies = Vec::with_capacity(n);
    for (row, beta, h) in rows {
        p.extend(row);
        betas.push(beta);
        entropies.push(h);
    }
    Ok(Conditional {
        p: Matrix::from_raw(n, n, p),
        betas,
        entropies,
    })
}

/// `p_ij = (p_{j|i} + p_{i|j}) / 2n`, floored at [`P_FLOOR`] off the
/// diagonal and renormalized to sum to one.
pub fn joint_probabilities(cond: &Conditional) -> Matrix {
    let n = cond.p.rows();
    let denom = 2.0 * n as f64;
    let mut p = Matrix::zeros(n, n);
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let v = ((cond.p[(i, j)] + cond.p[(j, i)]) / denom).max(P_FLOOR);
            p[(i, j)] = v;
            p[(j, i)] = v;
            total += 2.0 * v;
        }
    }
    for v in p.as_mut_slice() {
        *v /= total;
    }
    p
}

/// Student-t kernel `(1 + ‖y_i − y_j‖²)⁻¹` with zero diagonal, and its sum.
fn student_kernel(y: &Matrix) -> (Matrix, f64) {
    let n = y.rows();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let yi = y.row(i);
            (0..n)
                .map(|j| {
                    if i == j {
                        0.0
                    } else {
                        let d2: f64 = yi.iter().zip(y.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                        1.0 / (1.0 + d2)
                    }
                })
                .collect()
        })
        .collect();
    let kernel = Matrix::from_raw(n, n, rows.into_iter().flatten().collect());
    let z = kernel.as_slice().iter().sum();
    (kernel, z)
}

/// `KL(P‖Q)` with `q_ij` floored at [`P_FLOOR`].
pub fn kl_divergence(p: &Matrix, y: &Matrix) -> f64 {
    let (kernel, z) = student_kernel(y);
    let n = y.rows();
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            let pij = p[(i, j)];
            if i != j && pij > 0.0 {
                let q = (kernel[(i, j)] / z).max(P_FLOOR);
                kl += pij * (pij / q).ln();
            }
        }
    }
    kl
}

/// `∂KL/∂y_i = 4 Σ_j (p_ij − q_ij)(y_i − y_j)(1 + ‖y_i − y_j‖²)⁻¹`.
pub fn kl_gradient(p: &Matrix, y: &Matrix) -> Matrix {
    let (kernel, z) = student_kernel(y);
    gradient_with_kernel(p, y, &kernel, z, 1.0)
}

fn gradient_with_kernel(p: &Matrix, y: &Matrix, kernel: &Matrix, z: f64, exaggeration: f64) -> Matrix {
    let (n, d) = y.shape();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let yi = y.row(i);
            let mut g = vec![0.0; d];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let k = kernel[(i, j)];
                let q = (k / z).max(P_FLOOR);
                let coef = 4.0 * (exaggeration * p[(i, j)] - q) * k;
                for ((gc, a), b) in g.iter_mut().zip(yi).zip(y.row(j)) {
                    *gc += coef * (a - b);
                }
            }
            g
        })
        .collect();
    Matrix::from_raw(n, d, rows.into_iter().flatten().collect())
}

/// KL before the first update and after the last.
#[derive(Clone, Debug, PartialEq)]
pub struct TsneTrace {
    pub kl_initial: f64,
    pub kl_final: f64,
    pub entropies: Vec<f64>,
}

/// Exact t-SNE with early exaggeration and momentum gradient descent.
pub fn fit_tsne(
    x: &Matrix,
    d: usize,
    perplexity: f64,
    seed: u64,
    max_iter: usize,
) -> Result<EmbeddingResult> {
    fit_tsne_traced(x, d, perplexity, seed, max_iter).map(|(r, _)| r)
}

pub fn fit_tsne_traced(
    x: &Matrix,
    d: usize,
    perplexity: f64,
    seed: u64,
    max_iter: usize,
) -> Result<(EmbeddingResult, TsneTrace)> {
    let n = x.rows();
    let sq = pairwise_distances(x)?.squared().to_matrix();
    let cond = conditional_probabilities(&sq, perplexity)?;
    let p = joint_probabilities(&cond);

    let mut rng = RngStream::new(seed, 0);
    let mut y = Matrix::zeros(n, d);
    for v in y.as_mut_slice() {
        *v = rng.gaussian(0.0, INIT_STD);
    }
    for (i, r) in duplicate_representatives(x).into_iter().enumerate() {
        if r != i {
            let src = y.row(r).to_vec();
            y.row_mut(i).copy_from_slice(&src);
        }
    }

    let kl_initial = kl_divergence(&p, &y);
    let mut update = Matrix::zeros(n, d);
    for iter in 0..max_iter {
        let (exaggeration, momentum) = if iter < EXAGGERATION_ITERS {
            (EXAGGERATION, 0.5)
        } else {
            (1.0, 0.8)
        };
        let (kernel, z) = student_kernel(&y);
        let grad = gradient_with_kernel(&p, &y, &kernel, z, exaggeration);
        for ((u, g), v) in update
            .as_mut_slice()
            .iter_mut()
            .zip(grad.as_slice())
            .zip(y.as_mut_slice())
        {
            *u = momentum * *u - LEARNING_RATE * g;
            *v += *u;
        }
        let (centered, _) = y.center_columns();
        y = centered;
    }
    if !y.is_finite() {
        return Err(Error::NumericalFailure("t-SNE produced non-finite coordinates".into()));
    }
    let kl_final = kl_divergence(&p, &y);
    Ok((
        EmbeddingResult {
            coords: y,
            diagnostics: Diagnostics {
                kl_divergence: Some(kl_final),
                iterations: max_iter,
                ..Diagnostics::default()
            },
        },
        TsneTrace {
            kl_initial,
            kl_final,
            entropies: cond.entropies,
        },
    ))
}
