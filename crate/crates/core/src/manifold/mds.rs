use rayon::prelude::*;

use super::{Diagnostics, EmbeddingResult};
use crate::error::{Error, Result};
use crate::numerics::{pairwise_distances, DistanceMatrix, Matrix, RngStream};

/// Embedded distances below this are treated as coincident points.
const DELTA_GUARD: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct SmacofOutcome {
    pub coords: Matrix,
    pub stress: f64,
    /// Index of the restart that won.
    pub best_restart: usize,
    pub iterations: usize,
    /// Per restart: stress of the initial layout, then after every update.
    pub histories: Vec<Vec<f64>>,
}

/// Raw stress `Σ_{i<j} (D_ij − δ_ij)²` of the layout `y`.
pub fn stress(target: &DistanceMatrix, y: &Matrix) -> f64 {
    let n = y.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let r = target[(i, j)] - euclid(y.row(i), y.row(j));
            s += r * r;
        }
    }
    s
}

#[inline]
fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Guttman transform `X⁺ = (1/n)·B(X)·X`.
fn guttman(target: &DistanceMatrix, y: &Matrix) -> Matrix {
    let (n, d) = y.shape();
    let nf = n as f64;
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let yi = y.row(i);
            let mut out = vec![0.0; d];
            let mut diag = 0.0;
            for j in 0..n {
                if j == i {
                    continue;
                }
                let delta = euclid(yi, y.row(j));
                if delta < DELTA_GUARD {
                    continue;
                }
                let ratio = target[(i, j)] / delta;
                diag += ratio;
                for (o, yj) in out.iter_mut().zip(y.row(j)) {
                    *o -= ratio * yj;
                }
            }
            for (o, v) in out.iter_mut().zip(yi) {
                *o = (*o + diag * v) / nf;
            }
            out
        })
        .collect();
    Matrix::from_raw(n, d, rows.into_iter().flatten().collect())
}

/// Rows that exactly duplicate an earlier row (zero target distance and an
/// identical distance profile) point at that row.
fn target_representatives(target: &DistanceMatrix) -> Vec<usize> {
    let n = target.len();
    (0..n)
        .map(|i| {
            (0..i)
                .find(|&j| target[(i, j)] == 0.0 && target.row(i) == target.row(j))
                .unwrap_or(i)
        })
        .collect()
}

fn run_restart(
    target: &DistanceMatrix,
    reps: &[usize],
    d: usize,
    max_iter: usize,
    tol: f64,
    seed: u64,
    restart: usize,
) -> (Matrix, f64, usize, Vec<f64>) {
    let n = target.len();
    let mut rng = RngStream::new(seed, restart as u64);
    let mut y = Matrix::zeros(n, d);
    for i in 0..n {
        for c in 0..d {
            y[(i, c)] = rng.uniform(-1.0, 1.0);
        }
    }
    for i in 0..n {
        if reps[i] != i {
            let src = y.row(reps[i]).to_vec();
            y.row_mut(i).copy_from_slice(&src);
        }
    }
    let mut current = stress(target, &y);
    let mut history = vec![current];
    let mut iterations = 0;
    while iterations < max_iter && current > 0.0 {
        let next = guttman(target, &y);
        let s = stress(target, &next);
        iterations += 1;
        history.push(s);
        y = next;
        let decrease = (current - s) / current.max(1e-12);
        current = s;
        if decrease < tol {
            break;
        }
    }
    (y, current, iterations, history)
}

/// SMACOF over a target distance matrix with `n_init` seeded restarts;
/// the lowest final stress wins, ties going to the earlier restart.
pub fn smacof(
    target: &DistanceMatrix,
    d: usize,
    n_init: usize,
    max_iter: usize,
    tol: f64,
    seed: u64,
) -> Result<SmacofOutcome> {
    let n = target.len();
    if n < 3 {
        return Err(Error::InvalidInput(format!("SMACOF needs n >= 3, got {n}")));
    }
    if d == 0 || n_init == 0 {
        return Err(Error::InvalidArgument(
            "SMACOF needs d >= 1 and n_init >= 1".into(),
        ));
    }
    let reps = target_representatives(target);
    let runs: Vec<_> = (0..n_init)
        .into_par_iter()
        .map(|r| run_restart(target, &reps, d, max_iter, tol, seed, r))
        .collect();
    let mut best = 0;
    for (r, run) in runs.iter().enumerate() {
        if run.1 < runs[best].1 {
            best = r;
        }
    }
    let mut histories = Vec::with_capacity(n_init);
    let mut winner = None;
    for (r, (y, s, it, h)) in runs.into_iter().enumerate() {
        if r == best {
            winner = Some((y, s, it));
        }
        histories.push(h);
    }
    let (coords, stress, iterations) = winner.expect("n_init >= 1");
    Ok(SmacofOutcome {
        coords,
        stress,
        best_restart: best,
        iterations,
        histories,
    })
}

/// Metric MDS of the Euclidean distances between rows of `x`.
pub fn fit_mds_smacof(
    x: &Matrix,
    d: usize,
    n_init: usize,
    max_iter: usize,
    tol: f64,
    seed: u64,
) -> Result<EmbeddingResult> {
    let target = pairwise_distances(x)?;
    let out = smacof(&target, d, n_init, max_iter, tol, seed)?;
    Ok(EmbeddingResult {
        coords: out.coords,
        diagnostics: Diagnostics {
            stress: Some(out.stress),
            iterations: out.iterations,
            ..Diagnostics::default()
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equilateral_triangle_is_exact() {
        let h = 3f64.sqrt() / 2.0;
        let x = Matrix::from_rows(&[vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0], vec![0.5, h, 0.0]])
            .unwrap();
        let r = fit_mds_smacof(&x, 2, 4, 300, 1e-6, 42).unwrap();
        assert!(r.diagnostics.stress.unwrap() < 1e-8);
    }

    #[test]
    fn stress_never_increases() {
        let mut rng = RngStream::new(1, 9);
        let x = Matrix::from_raw(30, 5, (0..150).map(|_| rng.uniform(0.0, 1.0)).collect());
        let t = pairwise_distances(&x).unwrap();
        let out = smacof(&t, 2, 4, 300, 1e-6, 7).unwrap();
        for h in &out.histories {
            assert!(h.windows(2).all(|w| w[1] <= w[0]));
        }
        let best = out.histories.iter().map(|h| *h.last().unwrap());
        assert!(best.into_iter().all(|s| s >= out.stress));
    }

    #[test]
    fn duplicate_rows_share_coordinates() {
        let mut rng = RngStream::new(3, 0);
        let mut rows: Vec<Vec<f64>> = (0..12).map(|_| (0..4).map(|_| rng.unit()).collect()).collect();
        rows.push(rows[4].clone());
        let x = Matrix::from_rows(&rows).unwrap();
        let r = fit_mds_smacof(&x, 2, 2, 300, 1e-6, 42).unwrap();
        assert_eq!(r.coords.row(4), r.coords.row(12));
    }

    #[test]
    fn rejects_tiny_input() {
        let t = DistanceMatrix::from_upper(2, |_, _| 1.0);
        assert!(smacof(&t, 1, 1, 10, 1e-6, 0).is_err());
    }
}
