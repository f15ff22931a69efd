use super::Matrix;
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;

/// Full symmetric eigendecomposition, sorted by descending eigenvalue.
#[derive(Clone, Debug)]
pub struct SymEigResult {
    pub eigenvalues: Vec<f64>,
    /// Column `k` is the unit eigenvector for `eigenvalues[k]`.
    pub eigenvectors: Matrix,
    pub sweeps: usize,
}

impl SymEigResult {
    pub fn vector(&self, k: usize) -> Vec<f64> {
        self.eigenvectors.column(k)
    }

    /// Indices ordered by ascending eigenvalue.
    pub fn ascending(&self) -> impl Iterator<Item = usize> {
        (0..self.eigenvalues.len()).rev()
    }
}

/// Cyclic Jacobi rotations on a symmetric matrix.
///
/// Each eigenvector is signed so its largest-magnitude entry is positive
/// (first such entry on exact magnitude ties).
pub fn symmetric_eig(a: &Matrix) -> Result<SymEigResult> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::InvalidInput(format!(
            "symmetric_eig needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if !a.is_finite() {
        return Err(Error::InvalidInput("symmetric_eig: non-finite entry".into()));
    }
    let scale = a.max_abs().max(1.0);
    for i in 0..n {
        for j in i + 1..n {
            if (a[(i, j)] - a[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::InvalidInput(format!(
                    "symmetric_eig: matrix not symmetric at ({i}, {j})"
                )));
            }
        }
    }

    // Work on the exactly-symmetrized copy; eigenvectors are stored as rows.
    let mut w = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            w[(i, j)] = 0.5 * (a[(i, j)] + a[(j, i)]);
        }
    }
    let mut vt = Matrix::identity(n);
    let frob2: f64 = w.as_slice().iter().map(|v| v * v).sum();

    let mut sweeps = 0;
    let mut converged = n < 2;
    let mut row_p = vec![0.0; n];
    let mut row_q = vec![0.0; n];
    while !converged {
        let off: f64 = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| w[(i, j)] * w[(i, j)])
            .sum();
        if off == 0.0 || off <= (f64::EPSILON * f64::EPSILON) * 1e-4 * frob2 {
            converged = true;
            break;
        }
        if sweeps == MAX_SWEEPS {
            break;
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = w[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = w[(p, p)];
                let aqq = w[(q, q)];
                let g = 100.0 * apq.abs();
                if sweeps > 4 && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                    w[(p, q)] = 0.0;
                    w[(q, p)] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                row_p.copy_from_slice(w.row(p));
                row_q.copy_from_slice(w.row(q));
                for k in 0..n {
                    let xp = row_p[k];
                    let xq = row_q[k];
                    row_p[k] = c * xp - s * xq;
                    row_q[k] = s * xp + c * xq;
                }
                row_p[p] = app - t * apq;
                row_q[q] = aqq + t * apq;
                row_p[q] = 0.0;
                row_q[p] = 0.0;
                w.row_mut(p).copy_from_slice(&row_p);
                w.row_mut(q).copy_from_slice(&row_q);
                for k in 0..n {
                    w[(k, p)] = row_p[k];
                    w[(k, q)] = row_q[k];
                }

                let (vp, vq) = two_rows_mut(&mut vt, p, q);
                for (xp, xq) in vp.iter_mut().zip(vq.iter_mut()) {
                    let a0 = *xp;
                    let b0 = *xq;
                    *xp = c * a0 - s * b0;
                    *xq = s * a0 + c * b0;
                }
            }
        }
    }
    if !converged {
        return Err(Error::NumericalFailure(format!(
            "Jacobi eigensolver did not converge in {MAX_SWEEPS} sweeps"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| w[(j, j)].total_cmp(&w[(i, i)]).then(i.cmp(&j)));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| w[(i, i)]).collect();
    let mut eigenvectors = Matrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        let v = vt.row(src);
        let mut pivot = 0;
        for (k, x) in v.iter().enumerate() {
            if x.abs() > v[pivot].abs() {
                pivot = k;
            }
        }
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for (k, x) in v.iter().enumerate() {
            eigenvectors[(k, col)] = sign * x;
        }
    }
    Ok(SymEigResult {
        eigenvalues,
        eigenvectors,
        sweeps,
    })
}

fn two_rows_mut(m: &mut Matrix, p: usize, q: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(p < q);
    let cols = m.cols();
    let (head, tail) = m.as_mut_slice().split_at_mut(q * cols);
    (&mut head[p * cols..(p + 1) * cols], &mut tail[..cols])
}
