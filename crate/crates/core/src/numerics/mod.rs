//! Dense linear algebra and graph primitives shared by the reduction methods.
//!
//! Everything here is a pure function of its inputs and runs in 64-bit floats.

mod distance;
mod eig;
mod graph;
mod matrix;
mod rng;

pub use distance::{double_center, pairwise_distances, DistanceMatrix};
pub use eig::{symmetric_eig, SymEigResult};
pub use graph::{all_pairs_shortest, first_disconnected_pair, knn, NeighborGraph};
pub use matrix::Matrix;
pub use rng::RngStream;

/// For each row, the index of the first row with bit-identical contents.
/// Unique rows map to themselves.
pub fn duplicate_representatives(x: &Matrix) -> Vec<usize> {
    use std::collections::HashMap;
    let mut first: HashMap<Vec<u64>, usize> = HashMap::with_capacity(x.rows());
    (0..x.rows())
        .map(|i| {
            let key: Vec<u64> = x.row(i).iter().map(|v| (v + 0.0).to_bits()).collect();
            *first.entry(key).or_insert(i)
        })
        .collect()
}

/// Solves `a * x = b` for symmetric positive definite `a` by Cholesky
/// factorization.
pub fn cholesky_solve(a: &Matrix, b: &[f64]) -> crate::Result<Vec<f64>> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[(i, j)];
            for k in 0..j {
                sum -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if !(sum > 0.0) || !sum.is_finite() {
                    return Err(crate::Error::NumericalFailure(format!(
                        "matrix not positive definite at pivot {i}"
                    )));
                }
                l[(i, i)] = sum.sqrt();
            } else {
                l[(i, j)] = sum / l[(j, j)];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[(i, k)] * y[k]).sum();
        y[i] = (b[i] - s) / l[(i, i)];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[(k, i)] * x[k]).sum();
        x[i] = (y[i] - s) / l[(i, i)];
    }
    Ok(x)
}

/// Pearson correlation coefficient; 0 when either side has no variance.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len()) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}
