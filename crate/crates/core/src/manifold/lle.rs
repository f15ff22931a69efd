use super::{dedup_rows, expand_rows, Diagnostics, EmbeddingResult};
use crate::error::{Error, Result};
use crate::numerics::{cholesky_solve, knn, pairwise_distances, symmetric_eig, Matrix};

/// Sparse reconstruction weights: row `i` lists `(neighbor, weight)`.
pub type LleWeights = Vec<Vec<(usize, f64)>>;

/// Barycentric weights reconstructing each row from its `k` nearest
/// neighbors. The local Gram matrix is regularized by `reg · trace(G)`.
pub fn lle_weights(x: &Matrix, k: usize, reg: f64) -> Result<LleWeights> {
    let graph = knn(&pairwise_distances(x)?, k)?;
    let cols = x.cols();
    (0..x.rows())
        .map(|i| {
            let nbrs = graph.neighbors(i);
            let z: Vec<Vec<f64>> = nbrs
                .iter()
                .map(|&(j, _)| (0..cols).map(|c| x[(j, c)] - x[(i, c)]).collect())
                .collect();
            let mut gram = Matrix::zeros(k, k);
            for a in 0..k {
                for b in a..k {
                    let v: f64 = z[a].iter().zip(&z[b]).map(|(p, q)| p * q).sum();
                    gram[(a, b)] = v;
                    gram[(b, a)] = v;
                }
            }
            let trace: f64 = (0..k).map(|a| gram[(a, a)]).sum();
            let ridge = if trace > 0.0 { reg * trace } else { reg };
            for a in 0..k {
                gram[(a, a)] += ridge;
            }
            let w = cholesky_solve(&gram, &vec![1.0; k]).map_err(|_| {
                Error::NumericalFailure(format!("singular regularized Gram matrix at row {i}"))
            })?;
            let total: f64 = w.iter().sum();
            if !total.is_finite() || total == 0.0 {
                return Err(Error::NumericalFailure(format!(
                    "degenerate LLE weights at row {i}"
                )));
            }
            Ok(nbrs
                .iter()
                .zip(w)
                .map(|(&(j, _), wj)| (j, wj / total))
                .collect())
        })
        .collect()
}

/// `M = (I − W)ᵀ(I − W)`.
pub fn lle_cost_matrix(weights: &LleWeights) -> Matrix {
    let n = weights.len();
    let mut m = Matrix::identity(n);
    for (i, row) in weights.iter().enumerate() {
        for &(j, w) in row {
            m[(i, j)] -= w;
            m[(j, i)] -= w;
        }
        for &(a, wa) in row {
            for &(b, wb) in row {
                m[(a, b)] += wa * wb;
            }
        }
    }
    m
}

/// Standard LLE: bottom non-constant eigenvectors of `M`, scaled by `√n`.
///
/// Bit-identical rows are merged before fitting and share coordinates.
pub fn fit_lle(x: &Matrix, d: usize, k: usize, reg: f64) -> Result<EmbeddingResult> {
    let (unique, map) = dedup_rows(x);
    let n = unique.rows();
    if k >= n || d + 1 > n {
        return Err(Error::InvalidArgument(format!(
            "LLE needs k < n and d < n; got k={k}, d={d}, {n} distinct rows"
        )));
    }
    let weights = lle_weights(&unique, k, reg)?;
    let m = lle_cost_matrix(&weights);
    let eig = symmetric_eig(&m)?;
    let ascending: Vec<usize> = eig.ascending().collect();
    let scale = (n as f64).sqrt();
    let mut coords = Matrix::zeros(n, d);
    for (c, &idx) in ascending[1..=d].iter().enumerate() {
        for i in 0..n {
            coords[(i, c)] = eig.eigenvectors[(i, idx)] * scale;
        }
    }
    let spectrum = ascending[..=d].iter().map(|&i| eig.eigenvalues[i]).collect();
    Ok(EmbeddingResult {
        coords: expand_rows(&coords, &map),
        diagnostics: Diagnostics {
            spectrum: Some(spectrum),
            iterations: eig.sweeps,
            ..Diagnostics::default()
        },
    })
}
