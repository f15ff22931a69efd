use super::{Diagnostics, EmbeddingResult};
use crate::error::Result;
use crate::numerics::{
    all_pairs_shortest, double_center, knn, pairwise_distances, symmetric_eig, Matrix,
};

/// Classical MDS on graph geodesics of the symmetrized k-NN graph.
/// Negative eigenvalues are clamped to zero.
pub fn fit_isomap(x: &Matrix, d: usize, k: usize) -> Result<EmbeddingResult> {
    let graph = knn(&pairwise_distances(x)?, k)?.symmetrize();
    let geodesic = all_pairs_shortest(&graph)?;
    let b = double_center(&geodesic.squared());
    let eig = symmetric_eig(&b)?;
    let n = x.rows();
    let mut coords = Matrix::zeros(n, d);
    for c in 0..d {
        let scale = eig.eigenvalues[c].max(0.0).sqrt();
        for i in 0..n {
            coords[(i, c)] = eig.eigenvectors[(i, c)] * scale;
        }
    }
    Ok(EmbeddingResult {
        coords,
        diagnostics: Diagnostics {
            spectrum: Some(eig.eigenvalues),
            iterations: eig.sweeps,
            ..Diagnostics::default()
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;

    #[test]
    fn complete_graph_preserves_planar_distances() {
        // 2-D points lifted into 3-D: with k = n-1 geodesics are Euclidean.
        let mut rng = RngStream::new(8, 0);
        let rows: Vec<Vec<f64>> = (0..15)
            .map(|_| vec![rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), 0.0])
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let r = fit_isomap(&x, 2, 14).unwrap();
        let a = pairwise_distances(&x).unwrap();
        let b = pairwise_distances(&r.coords).unwrap();
        for i in 0..15 {
            for j in 0..15 {
                assert!((a[(i, j)] - b[(i, j)]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn coordinates_always_finite() {
        let mut rng = RngStream::new(2, 0);
        let x = Matrix::from_raw(40, 6, (0..240).map(|_| rng.unit()).collect());
        let r = fit_isomap(&x, 5, 6).unwrap();
        assert!(r.coords.is_finite());
    }
}
