use super::{dedup_rows, expand_rows, Diagnostics, EmbeddingResult};
use crate::error::{Error, Result};
use crate::numerics::{
    first_disconnected_pair, knn, pairwise_distances, symmetric_eig, Matrix, NeighborGraph,
};

/// `L = I − D^(−1/2)·A·D^(−1/2)` for the binary affinity of `graph`.
/// Returns the Laplacian and the node degrees.
pub fn normalized_laplacian(graph: &NeighborGraph) -> Result<(Matrix, Vec<f64>)> {
    let n = graph.len();
    let degrees: Vec<f64> = (0..n).map(|i| graph.neighbors(i).len() as f64).collect();
    if let Some(i) = degrees.iter().position(|&d| d == 0.0) {
        return Err(Error::DisconnectedGraph {
            from: i,
            to: if i == 0 { 1.min(n - 1) } else { 0 },
        });
    }
    let inv_sqrt: Vec<f64> = degrees.iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut l = Matrix::identity(n);
    for i in 0..n {
        for &(j, _) in graph.neighbors(i) {
            l[(i, j)] -= inv_sqrt[i] * inv_sqrt[j];
        }
    }
    Ok((l, degrees))
}

/// Laplacian eigenmaps on the union-symmetrized binary k-NN graph.
///
/// Bit-identical rows are merged before fitting and share coordinates.
pub fn fit_spectral(x: &Matrix, d: usize, k: usize) -> Result<EmbeddingResult> {
    let (unique, map) = dedup_rows(x);
    let n = unique.rows();
    if k >= n || d + 1 > n {
        return Err(Error::InvalidArgument(format!(
            "spectral embedding needs k < n and d < n; got k={k}, d={d}, {n} distinct rows"
        )));
    }
    let graph = knn(&pairwise_distances(&unique)?, k)?.symmetrize();
    if let Some((from, to)) = first_disconnected_pair(&graph) {
        return Err(Error::DisconnectedGraph { from, to });
    }
    let (laplacian, degrees) = normalized_laplacian(&graph)?;
    let eig = symmetric_eig(&laplacian)?;
    let ascending: Vec<usize> = eig.ascending().collect();
    let mut coords = Matrix::zeros(n, d);
    for (c, &idx) in ascending[1..=d].iter().enumerate() {
        for i in 0..n {
            coords[(i, c)] = eig.eigenvectors[(i, idx)] / degrees[i].sqrt();
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;

    fn random(n: usize, c: usize, seed: u64) -> Matrix {
        let mut r = RngStream::new(seed, 0);
        Matrix::from_raw(n, c, (0..n * c).map(|_| r.uniform(-1.0, 1.0)).collect())
    }

    #[test]
    fn null_space_and_bounds() {
        let x = random(40, 3, 5);
        let g = knn(&pairwise_distances(&x).unwrap(), 5).unwrap().symmetrize();
        let (l, deg) = normalized_laplacian(&g).unwrap();
        let eig = symmetric_eig(&l).unwrap();
        let last = eig.eigenvalues.len() - 1;
        assert!(eig.eigenvalues[last].abs() < 1e-8);
        assert!(eig
            .eigenvalues
            .iter()
            .all(|&v| (-1e-10..=2.0 + 1e-10).contains(&v)));
        // Null vector is proportional to D^(1/2)·1.
        let v = eig.vector(last);
        let norm: f64 = deg.iter().sum::<f64>().sqrt();
        for (vi, di) in v.iter().zip(&deg) {
            assert!((vi - di.sqrt() / norm).abs() < 1e-8);
        }
    }

    #[test]
    fn path_graph_orders_monotonically() {
        let x = Matrix::from_rows(&[
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![2.5, 0.0],
            vec![4.5, 0.0],
        ])
        .unwrap();
        let r = fit_spectral(&x, 1, 1).unwrap();
        let c = r.coords.column(0);
        let inc = c.windows(2).all(|w| w[0] < w[1]);
        let dec = c.windows(2).all(|w| w[0] > w[1]);
        assert!(inc || dec, "{c:?}");
    }

    #[test]
    fn disconnected_clusters_error() {
        let mut rows = Vec::new();
        for i in 0..5 {
            rows.push(vec![i as f64 * 0.01, 0.0]);
            rows.push(vec![100.0 + i as f64 * 0.01, 0.0]);
        }
        let x = Matrix::from_rows(&rows).unwrap();
        assert!(matches!(
            fit_spectral(&x, 1, 2),
            Err(Error::DisconnectedGraph { .. })
        ));
    }
}
