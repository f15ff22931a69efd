use std::ops::Index;

use super::Matrix;
use crate::error::{Error, Result};

/// Symmetric matrix of nonnegative pairwise distances with zero diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    /// Wraps a square matrix, checking symmetry, diagonal and sign.
    pub fn from_matrix(m: &Matrix) -> Result<Self> {
        let n = m.rows();
        if m.cols() != n {
            return Err(Error::InvalidInput("distance matrix must be square".into()));
        }
        for i in 0..n {
            if m[(i, i)] != 0.0 {
                return Err(Error::InvalidInput(format!("nonzero diagonal at {i}")));
            }
            for j in 0..n {
                let v = m[(i, j)];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "distance ({i}, {j}) = {v} is not a finite nonnegative value"
                    )));
                }
                if v != m[(j, i)] {
                    return Err(Error::InvalidInput(format!("asymmetric at ({i}, {j})")));
                }
            }
        }
        Ok(DistanceMatrix {
            n,
            d: m.as_slice().to_vec(),
        })
    }

    /// Builds from a strict upper-triangle callback; mirrors for symmetry.
    pub(crate) fn from_upper(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = f(i, j);
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        DistanceMatrix { n, d }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.d[i * self.n..(i + 1) * self.n]
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_raw(self.n, self.n, self.d.clone())
    }

    /// Elementwise square.
    pub fn squared(&self) -> DistanceMatrix {
        DistanceMatrix {
            n: self.n,
            d: self.d.iter().map(|v| v * v).collect(),
        }
    }

    pub fn scale(&self, c: f64) -> DistanceMatrix {
        DistanceMatrix {
            n: self.n,
            d: self.d.iter().map(|v| v * c).collect(),
        }
    }
}

impl Index<(usize, usize)> for DistanceMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.d[i * self.n + j]
    }
}

/// Euclidean distances between all row pairs of `x`.
pub fn pairwise_distances(x: &Matrix) -> Result<DistanceMatrix> {
    if !x.is_finite() {
        return Err(Error::InvalidInput(
            "pairwise_distances: non-finite input".into(),
        ));
    }
    if x.rows() < 2 {
        return Err(Error::InvalidInput(
            "pairwise_distances needs at least 2 rows".into(),
        ));
    }
    Ok(DistanceMatrix::from_upper(x.rows(), |i, j| {
        x.row(i)
            .iter()
            .zip(x.row(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }))
}

/// `B = -1/2 * J * sq * J` with `J = I - 11ᵀ/n`.
pub fn double_center(sq: &DistanceMatrix) -> Matrix {
    let n = sq.len();
    let nf = n as f64;
    let row_means: Vec<f64> = (0..n).map(|i| sq.row(i).iter().sum::<f64>() / nf).collect();
    let grand = row_means.iter().sum::<f64>() / nf;
    let mut b = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            // sq is symmetric, so column means equal row means.
            let v = -0.5 * (sq[(i, j)] - row_means[i] - row_means[j] + grand);
            b[(i, j)] = v;
            b[(j, i)] = v;
        }
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_four_five() {
        let x = Matrix::from_rows(&[vec![0.0, 0.0], vec![3.0, 4.0]]).unwrap();
        let d = pairwise_distances(&x).unwrap();
        assert_eq!(d[(0, 1)], 5.0);
        assert_eq!(d[(1, 0)], 5.0);
        assert_eq!(d[(0, 0)], 0.0);
    }

    #[test]
    fn identical_rows_are_zero_apart() {
        let x = Matrix::from_rows(&[vec![1.5, -2.0], vec![1.5, -2.0]]).unwrap();
        assert_eq!(pairwise_distances(&x).unwrap()[(0, 1)], 0.0);
    }

    #[test]
    fn rejects_single_row() {
        let x = Matrix::from_rows(&[vec![1.0]]).unwrap();
        assert!(pairwise_distances(&x).is_err());
    }

    #[test]
    fn two_point_double_center() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let b = double_center(&pairwise_distances(&x).unwrap().squared());
        let expect = [0.25, -0.25, -0.25, 0.25];
        for (v, e) in b.as_slice().iter().zip(expect) {
            assert!((v - e).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_distances_center_to_zero() {
        let sq = DistanceMatrix::from_upper(4, |_, _| 0.0);
        assert!(double_center(&sq).as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn from_matrix_rejects_asymmetry() {
        let m = Matrix::from_rows(&[vec![0.0, 1.0], vec![2.0, 0.0]]).unwrap();
        assert!(DistanceMatrix::from_matrix(&m).is_err());
    }
}
