//! Epsilon-SVR with an RBF kernel, trained by sequential minimal
//! optimization.
//!
//! The dual is solved in the doubled variable set z = (alpha, alpha*) with
//! signs s = (+1, -1): minimize 1/2 z^T Q z + p^T z subject to s^T z = 0 and
//! 0 <= z <= C, where Q_tu = s_t s_u K_tu and p_t = epsilon - s_t y_t.
//! Working pairs are chosen by maximal violation with a second-order gain
//! rule; every update is the exact two-variable minimizer clipped to the
//! box, so the dual objective never increases. Ties break on the lowest
//! index, making training deterministic for a fixed input order.

use ndarray::Array2;

use crate::error::{Error, Result};

/// SVR hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SvrParams {
    /// Box constraint (cost).
    pub c: f64,
    /// RBF width: k(x, z) = exp(-gamma ||x - z||^2).
    pub gamma: f64,
    /// Epsilon-insensitive tube half-width.
    pub epsilon: f64,
    /// KKT violation tolerance for termination.
    pub tol: f64,
    /// Iteration cap; hitting it is recorded, not an error.
    pub max_iter: usize,
}

impl Default for SvrParams {
    fn default() -> Self {
        SvrParams {
            c: 4.0,
            gamma: (-3.5f64).exp2(),
            epsilon: 0.1,
            tol: 1e-3,
            max_iter: 200_000,
        }
    }
}

impl SvrParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("c", self.c),
            ("gamma", self.gamma),
            ("epsilon", self.epsilon),
            ("tol", self.tol),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParam(format!(
                    "svr {name} must be finite and > 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Trained support-vector regressor.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SvrModel {
    /// Support vectors (rows).
    pub support: Vec<Vec<f64>>,
    /// Dual coefficients beta_k = alpha_k - alpha*_k for each support vector.
    pub coeffs: Vec<f64>,
    pub bias: f64,
    pub gamma: f64,
    /// SMO iterations run.
    pub iterations: usize,
    /// Whether the KKT gap dropped below tol before the cap.
    pub converged: bool,
    /// Final KKT violation m - M.
    pub kkt_violation: f64,
    /// Final dual objective (maximization convention).
    pub dual_objective: f64,
}

#[inline]
pub fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let mut d2 = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        d2 += d * d;
    }
    (-gamma * d2).exp()
}

/// Train epsilon-SVR; deterministic given the data order.
pub fn svr_train(x: &Array2<f64>, y: &[f64], params: &SvrParams) -> Result<SvrModel> {
    let trace = svr_train_traced(x, y, params, false)?;
    Ok(trace.0)
}

/// Training entry that can also record the dual-objective trajectory.
pub fn svr_train_traced(
    x: &Array2<f64>,
    y: &[f64],
    params: &SvrParams,
    record_objective: bool,
) -> Result<(SvrModel, Vec<f64>)> {
    params.validate()?;
    let n = x.nrows();
    if n < 2 {
        return Err(Error::InvalidParam(format!(
            "svr needs at least 2 samples, got {n}"
        )));
    }
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: y.len(),
        });
    }
    for (i, row) in x.rows().into_iter().enumerate() {
        if row.iter().any(|v| !v.is_finite()) || !y[i].is_finite() {
            return Err(Error::InvalidParam(format!("sample {i} is not finite")));
        }
    }
    // all-identical rows cannot express conflicting targets
    let first = x.row(0);
    let identical = (1..n).all(|i| x.row(i) == first);
    if identical {
        let (lo, hi) = y
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| {
                (l.min(v), h.max(v))
            });
        if hi - lo > 2.0 * params.epsilon {
            return Err(Error::InvalidParam(format!(
                "kernel matrix is degenerate: identical inputs demand targets {lo}..{hi} \
                 wider than the 2*epsilon tube"
            )));
        }
    }

    // precomputed kernel over samples
    let mut kmat = vec![0.0f64; n * n];
    for i in 0..n {
        kmat[i * n + i] = 1.0;
        for j in (i + 1)..n {
            let v = rbf(
                x.row(i).as_slice().unwrap(),
                x.row(j).as_slice().unwrap(),
                params.gamma,
            );
            kmat[i * n + j] = v;
            kmat[j * n + i] = v;
        }
    }
    let k = |a: usize, b: usize| kmat[(a % n) * n + (b % n)];

    let m2 = 2 * n;
    let sign = |t: usize| if t < n { 1.0 } else { -1.0 };
    let mut z = vec![0.0f64; m2];
    // gradient of the minimized objective at z = 0
    let mut grad: Vec<f64> = (0..m2)
        .map(|t| params.epsilon - sign(t) * y[t % n])
        .collect();

    let c = params.c;
    let tau = 1e-12;
    let mut iterations = 0usize;
    let mut converged = false;
    let mut violation = f64::INFINITY;
    let mut objective_trace = Vec::new();

    let dual_obj = |z: &[f64], grad: &[f64]| -> f64 {
        // f(z) = 1/2 z^T Q z + p^T z; grad = Qz + p, so
        // f = 1/2 z^T (grad + p). Report the maximization convention -f.
        let mut f = 0.0;
        for t in 0..m2 {
            let p_t = params.epsilon - sign(t) * y[t % n];
            f += 0.5 * z[t] * (grad[t] + p_t);
        }
        -f
    };

    while iterations < params.max_iter {
        // v_t = -s_t G_t; KKT gap is max over I_up minus min over I_low
        let mut i_best: Option<(usize, f64)> = None;
        for t in 0..m2 {
            let s = sign(t);
            let in_up = (s > 0.0 && z[t] < c) || (s < 0.0 && z[t] > 0.0);
            if !in_up {
                continue;
            }
            let v = -s * grad[t];
            if i_best.map_or(true, |(_, best)| v > best) {
                i_best = Some((t, v));
            }
        }
        let (i, v_i) = match i_best {
            Some(p) => p,
            None => break, // every variable pinned
        };

        let mut m_low = f64::INFINITY;
        let mut j_best: Option<(usize, f64)> = None; // (index, gain)
        for t in 0..m2 {
            let s = sign(t);
            let in_low = (s > 0.0 && z[t] > 0.0) || (s < 0.0 && z[t] < c);
            if !in_low {
                continue;
            }
            let v = -s * grad[t];
            m_low = m_low.min(v);
            if v < v_i {
                let delta = v_i - v;
                let mut a = k(i, i) + k(t, t) - 2.0 * k(i, t);
                if a <= 0.0 {
                    a = tau;
                }
                let gain = delta * delta / a;
                if j_best.map_or(true, |(_, best)| gain > best) {
                    j_best = Some((t, gain));
                }
            }
        }
        violation = v_i - m_low;
        if violation <= params.tol {
            converged = true;
            break;
        }
        let j = match j_best {
            Some((t, _)) => t,
            None => break,
        };

        // exact two-variable step along d_i = s_i, d_j = -s_j
        let s_i = sign(i);
        let s_j = sign(j);
        let v_j = -s_j * grad[j];
        let mut a = k(i, i) + k(j, j) - 2.0 * k(i, j);
        if a <= 0.0 {
            a = tau;
        }
        let mut delta = (v_i - v_j) / a;
        let room_i = if s_i > 0.0 { c - z[i] } else { z[i] };
        let room_j = if s_j > 0.0 { z[j] } else { c - z[j] };
        delta = delta.min(room_i).min(room_j);
        if delta <= 0.0 {
            break; // numerically pinned; the gap is already reported
        }
        z[i] += s_i * delta;
        z[j] -= s_j * delta;
        for t in 0..m2 {
            grad[t] += sign(t) * delta * (k(t, i) - k(t, j));
        }
        iterations += 1;
        if record_objective && iterations % 16 == 0 {
            objective_trace.push(dual_obj(&z, &grad));
        }
    }

    // recompute the exact gap for reporting when the loop exited early
    let (mut m_up, mut m_low) = (f64::NEG_INFINITY, f64::INFINITY);
    for t in 0..m2 {
        let s = sign(t);
        let v = -s * grad[t];
        if (s > 0.0 && z[t] < c) || (s < 0.0 && z[t] > 0.0) {
            m_up = m_up.max(v);
        }
        if (s > 0.0 && z[t] > 0.0) || (s < 0.0 && z[t] < c) {
            m_low = m_low.min(v);
        }
    }
    if m_up.is_finite() && m_low.is_finite() {
        violation = m_up - m_low;
        if violation <= params.tol {
            converged = true;
        }
    }
    let bias = match (m_up.is_finite(), m_low.is_finite()) {
        (true, true) => 0.5 * (m_up + m_low),
        (true, false) => m_up,
        (false, true) => m_low,
        (false, false) => 0.0,
    };

    let objective = dual_obj(&z, &grad);
    let mut support = Vec::new();
    let mut coeffs = Vec::new();
    for kx in 0..n {
        let beta = z[kx] - z[kx + n];
        if beta.abs() > 1e-12 {
            support.push(x.row(kx).iter().copied().collect());
            coeffs.push(beta);
        }
    }
    Ok((
        SvrModel {
            support,
            coeffs,
            bias,
            gamma: params.gamma,
            iterations,
            converged,
            kkt_violation: violation,
            dual_objective: objective,
        },
        objective_trace,
    ))
}

/// Kernel-expansion prediction.
pub fn svr_predict(model: &SvrModel, x: &[f64]) -> f64 {
    let mut f = model.bias;
    for (sv, beta) in model.support.iter().zip(&model.coeffs) {
        f += beta * rbf(sv, x, model.gamma);
    }
    f
}
