//! Small deterministic dense linear algebra: cyclic Jacobi eigensolver for
//! symmetric matrices, Cholesky factorization, and a Lanczos iteration for
//! the top eigenpairs of large sparse symmetric matrices.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order with matching eigenvector columns.
/// Deterministic: fixed sweep order, stable sort, sign fixed by the first
/// entry of noticeable magnitude.
pub fn eigh(a: &Array2<f64>, max_sweeps: usize) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "matrix must be square");
    let mut m = a.clone();
    let mut v: Array2<f64> = Array2::eye(n);

    let norm: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    let tol = 1e-14 * norm;

    let mut converged = false;
    for _ in 0..max_sweeps {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m[[p, q]] * m[[p, q]];
            }
        }
        if off.sqrt() <= tol {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = m[[p, p]];
                let aqq = m[[q, q]];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        // one final check; Jacobi converges quadratically so this is rare
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m[[p, q]] * m[[p, q]];
            }
        }
        if off.sqrt() > tol * 100.0 {
            return Err(Error::EigenNoConvergence {
                iterations: max_sweeps,
            });
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        m[[j, j]]
            .partial_cmp(&m[[i, i]])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let values: Vec<f64> = order.iter().map(|&k| m[[k, k]]).collect();
    let mut vectors = Array2::zeros((n, n));
    for (col, &k) in order.iter().enumerate() {
        let mut column: Vec<f64> = (0..n).map(|r| v[[r, k]]).collect();
        fix_sign(&mut column);
        for (r, &val) in column.iter().enumerate() {
            vectors[[r, col]] = val;
        }
    }
    Ok((values, vectors))
}

/// Flip a vector so its first entry of magnitude above 1e-12 is positive.
pub fn fix_sign(v: &mut [f64]) {
    for &x in v.iter() {
        if x.abs() > 1e-12 {
            if x < 0.0 {
                for y in v.iter_mut() {
                    *y = -*y;
                }
            }
            return;
        }
    }
}

/// Cholesky factor L (lower) of a symmetric positive-definite matrix.
pub fn cholesky(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    let mut l: Array2<f64> = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[[i, j]];
            for k in 0..j {
                sum -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(Error::SingularSystem(format!(
                        "matrix not positive definite at pivot {i}"
                    )));
                }
                l[[i, j]] = sum.sqrt();
            } else {
                l[[i, j]] = sum / l[[j, j]];
            }
        }
    }
    Ok(l)
}

/// Solve L y = b then L^T x = y for a Cholesky factor L.
pub fn cholesky_solve(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut y = Array1::zeros(n);
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[[i, k]] * y[k];
        }
        y[i] = sum / l[[i, i]];
    }
    let mut x = Array1::zeros(n);
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in (i + 1)..n {
            sum -= l[[k, i]] * x[k];
        }
        x[i] = sum / l[[i, i]];
    }
    x
}

/// Forward-substitute L X = B column-wise, returning L^{-1} B.
pub fn solve_lower_triangular(l: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let n = l.nrows();
    let m = b.ncols();
    let mut x = Array2::zeros((n, m));
    for c in 0..m {
        for i in 0..n {
            let mut sum = b[[i, c]];
            for k in 0..i {
                sum -= l[[i, k]] * x[[k, c]];
            }
            x[[i, c]] = sum / l[[i, i]];
        }
    }
    x
}

/// Back-substitute L^T X = B, returning L^{-T} B.
pub fn solve_upper_from_lower(l: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let n = l.nrows();
    let m = b.ncols();
    let mut x = Array2::zeros((n, m));
    for c in 0..m {
        for i in (0..n).rev() {
            let mut sum = b[[i, c]];
            for k in (i + 1)..n {
                sum -= l[[k, i]] * x[[k, c]];
            }
            x[[i, c]] = sum / l[[i, i]];
        }
    }
    x
}

/// Top-`want` eigenpairs of a sparse symmetric operator by Lanczos with full
/// reorthogonalization and a fixed deterministic start vector.
pub fn lanczos_top<F>(
    n: usize,
    matvec: F,
    want: usize,
    max_steps: usize,
) -> Result<(Vec<f64>, Array2<f64>)>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let m = max_steps.min(n);
    if want > n {
        return Err(Error::InvalidParam(format!(
            "requested {want} eigenpairs of a {n}-dim operator"
        )));
    }
    // deterministic, structure-free start vector
    let mut q: Vec<f64> = (0..n).map(|i| 1.0 + ((i % 7) as f64) * 0.25).collect();
    normalize(&mut q);

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut alphas: Vec<f64> = Vec::with_capacity(m);
    let mut betas: Vec<f64> = Vec::with_capacity(m);

    let mut prev: Option<Vec<f64>> = None;
    let mut beta_prev = 0.0f64;
    for _ in 0..m {
        basis.push(q.clone());
        let mut w = matvec(&q);
        if let Some(p) = &prev {
            for (wi, pi) in w.iter_mut().zip(p) {
                *wi -= beta_prev * pi;
            }
        }
        let alpha: f64 = w.iter().zip(&q).map(|(a, b)| a * b).sum();
        for (wi, qi) in w.iter_mut().zip(&q) {
            *wi -= alpha * qi;
        }
        // full reorthogonalization keeps the basis numerically orthonormal
        for b in &basis {
            let proj: f64 = w.iter().zip(b).map(|(a, c)| a * c).sum();
            for (wi, bi) in w.iter_mut().zip(b) {
                *wi -= proj * bi;
            }
        }
        alphas.push(alpha);
        let beta: f64 = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if beta < 1e-12 {
            break;
        }
        betas.push(beta);
        for wi in w.iter_mut() {
            *wi /= beta;
        }
        prev = Some(std::mem::replace(&mut q, w));
        beta_prev = beta;
    }

    let k = alphas.len();
    let mut tri = Array2::zeros((k, k));
    for i in 0..k {
        tri[[i, i]] = alphas[i];
        if i + 1 < k {
            tri[[i, i + 1]] = betas[i];
            tri[[i + 1, i]] = betas[i];
        }
    }
    let (tvals, tvecs) = eigh(&tri, 100)?;
    let take = want.min(k);
    let mut vectors = Array2::zeros((n, take));
    for c in 0..take {
        let mut col = vec![0.0; n];
        for (s, b) in basis.iter().enumerate() {
            let coeff = tvecs[[s, c]];
            for (ci, bi) in col.iter_mut().zip(b) {
                *ci += coeff * bi;
            }
        }
        normalize(&mut col);
        fix_sign(&mut col);
        for (r, &val) in col.iter().enumerate() {
            vectors[[r, c]] = val;
        }
    }
    Ok((tvals[..take].to_vec(), vectors))
}

fn normalize(v: &mut [f64]) {
    let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}
