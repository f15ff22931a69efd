use super::{Diagnostics, EmbeddingResult};
use crate::error::{Error, Result};
use crate::numerics::{symmetric_eig, Matrix};

/// Fitted principal axes. Also used on its own to project held-out rows
/// (experimental train-only mode).
#[derive(Clone, Debug)]
pub struct PcaProjection {
    pub means: Vec<f64>,
    /// `cols × d`, unit columns.
    pub components: Matrix,
    /// Covariance eigenvalues, descending, `min(n, cols)` of them.
    pub eigenvalues: Vec<f64>,
}

impl PcaProjection {
    /// Principal axes from the covariance `XᶜᵀXᶜ/(n−1)`. When the matrix is
    /// wider than tall, the same axes come from the `n × n` Gram matrix.
    pub fn fit(x: &Matrix, d: usize) -> Result<Self> {
        let (n, cols) = x.shape();
        if n < 2 {
            return Err(Error::InvalidInput("PCA needs at least 2 rows".into()));
        }
        if d == 0 || d > cols {
            return Err(Error::InvalidArgument(format!(
                "PCA n_components = {d} must be in 1..={cols}"
            )));
        }
        let (xc, means) = x.center_columns();
        let denom = (n - 1) as f64;
        let mut components = Matrix::zeros(cols, d);
        let eigenvalues;
        if cols <= n {
            let cov = xc.transpose().matmul(&xc)?.scale(1.0 / denom);
            let eig = symmetric_eig(&cov)?;
            for k in 0..d {
                for r in 0..cols {
                    components[(r, k)] = eig.eigenvectors[(r, k)];
                }
            }
            eigenvalues = eig.eigenvalues;
        } else {
            let gram = xc.matmul(&xc.transpose())?.scale(1.0 / denom);
            let eig = symmetric_eig(&gram)?;
            let top = eig.eigenvalues[0].abs().max(f64::MIN_POSITIVE);
            for k in 0..d.min(n) {
                let lambda = eig.eigenvalues[k];
                if lambda <= 1e-13 * top {
                    continue;
                }
                let sigma = (lambda * denom).sqrt();
                let mut v = vec![0.0; cols];
                for i in 0..n {
                    let u = eig.eigenvectors[(i, k)];
                    for (vj, xv) in v.iter_mut().zip(xc.row(i)) {
                        *vj += xv * u;
                    }
                }
                let mut pivot = 0;
                for (j, vj) in v.iter().enumerate() {
                    if vj.abs() > v[pivot].abs() {
                        pivot = j;
                    }
                }
                let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
                for (j, vj) in v.iter().enumerate() {
                    components[(j, k)] = sign * vj / sigma;
                }
            }
            eigenvalues = eig.eigenvalues;
        }
        Ok(PcaProjection {
            means,
            components,
            eigenvalues,
        })
    }

    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.means.len() {
            return Err(Error::InvalidArgument(format!(
                "PCA fitted on {} columns, got {}",
                self.means.len(),
                x.cols()
            )));
        }
        let mut xc = x.clone();
        for i in 0..xc.rows() {
            for (v, m) in xc.row_mut(i).iter_mut().zip(&self.means) {
                *v -= m;
            }
        }
        xc.matmul(&self.components)
    }
}

/// Projects the centered data onto the top `d` principal axes.
pub fn fit_pca(x: &Matrix, d: usize) -> Result<EmbeddingResult> {
    let projection = PcaProjection::fit(x, d)?;
    let coords = projection.transform(x)?;
    Ok(EmbeddingResult {
        coords,
        diagnostics: Diagnostics {
            spectrum: Some(projection.eigenvalues),
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
    fn rank_one_line() {
        let rows: Vec<Vec<f64>> = (0..6).map(|t| vec![t as f64, t as f64]).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let p = PcaProjection::fit(&x, 2).unwrap();
        assert!(p.eigenvalues[0] > 0.0);
        assert!(p.eigenvalues[1].abs() < 1e-10);
        let h = 1.0 / 2f64.sqrt();
        assert!((p.components[(0, 0)] - h).abs() < 1e-12);
        assert!((p.components[(1, 0)] - h).abs() < 1e-12);
    }

    #[test]
    fn coordinate_variance_matches_eigenvalues() {
        let x = random(30, 6, 3);
        let r = fit_pca(&x, 3).unwrap();
        let spectrum = r.diagnostics.spectrum.unwrap();
        for k in 0..3 {
            let col = r.coords.column(k);
            let mean = col.iter().sum::<f64>() / 30.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 29.0;
            assert!((var - spectrum[k]).abs() < 1e-9, "{var} vs {}", spectrum[k]);
        }
    }

    #[test]
    fn full_rank_reconstructs_centered_input() {
        let x = random(12, 4, 9);
        let p = PcaProjection::fit(&x, 4).unwrap();
        let coords = p.transform(&x).unwrap();
        let back = coords.matmul(&p.components.transpose()).unwrap();
        let (xc, _) = x.center_columns();
        for (a, b) in back.as_slice().iter().zip(xc.as_slice()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn wide_matrix_matches_tall_route() {
        // 8 rows x 20 columns goes through the Gram route; compare the
        // projected variances against the covariance eigenvalues.
        let x = random(8, 20, 4);
        let r = fit_pca(&x, 3).unwrap();
        let spectrum = r.diagnostics.spectrum.unwrap();
        for k in 0..3 {
            let col = r.coords.column(k);
            let var = col.iter().map(|v| v * v).sum::<f64>() / 7.0;
            assert!((var - spectrum[k]).abs() < 1e-9);
        }
        let cov = {
            let (xc, _) = x.center_columns();
            xc.transpose().matmul(&xc).unwrap().scale(1.0 / 7.0)
        };
        let tall = symmetric_eig(&cov).unwrap();
        let wide = PcaProjection::fit(&x, 3).unwrap();
        for k in 0..3 {
            assert!((tall.eigenvalues[k] - spectrum[k]).abs() < 1e-9);
            for j in 0..20 {
                assert!((tall.eigenvectors[(j, k)] - wide.components[(j, k)]).abs() < 1e-9);
            }
        }
    }
}
