//! Small feedforward regressor: two tanh hidden layers, identity output,
//! full-batch gradient descent with momentum on squared error.

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// MLP training configuration.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MlpParams {
    /// Hidden layer widths.
    pub hidden: [usize; 2],
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams {
            hidden: [40, 40],
            learning_rate: 0.02,
            momentum: 0.9,
            epochs: 2000,
            seed: 0,
        }
    }
}

/// Dense layer weights: `w[o][i]` plus per-output bias.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Layer {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl Layer {
    fn zeros_like(&self) -> Layer {
        Layer {
            w: self.w.iter().map(|r| vec![0.0; r.len()]).collect(),
            b: vec![0.0; self.b.len()],
        }
    }
}

/// Feedforward network; tanh on hidden layers, identity on the output.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

impl Mlp {
    /// Xavier-style seeded initialization.
    pub fn init(input_dim: usize, params: &MlpParams) -> Mlp {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let dims = [
            input_dim,
            params.hidden[0],
            params.hidden[1],
            1usize,
        ];
        let layers = (0..3)
            .map(|l| {
                let (fan_in, fan_out) = (dims[l], dims[l + 1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Layer {
                    w: (0..fan_out)
                        .map(|_| (0..fan_in).map(|_| rng.random_range(-bound..bound)).collect())
                        .collect(),
                    b: vec![0.0; fan_out],
                }
            })
            .collect();
        Mlp { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w[0].len()
    }

    fn forward_all(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts: Vec<Vec<f64>> = vec![x.to_vec()];
        for (l, layer) in self.layers.iter().enumerate() {
            let prev = acts.last().unwrap();
            let last = l == self.layers.len() - 1;
            let out: Vec<f64> = layer
                .w
                .iter()
                .zip(&layer.b)
                .map(|(row, b)| {
                    let z: f64 = row.iter().zip(prev).map(|(w, a)| w * a).sum::<f64>() + b;
                    if last {
                        z
                    } else {
                        z.tanh()
                    }
                })
                .collect();
            acts.push(out);
        }
        acts
    }
}

/// Predict one value.
pub fn mlp_predict(mlp: &Mlp, x: &[f64]) -> f64 {
    mlp.forward_all(x).last().unwrap()[0]
}

/// Mean squared error over a dataset.
pub fn mlp_loss(mlp: &Mlp, x: &Array2<f64>, y: &[f64]) -> f64 {
    let n = x.nrows();
    (0..n)
        .map(|i| {
            let p = mlp_predict(mlp, x.row(i).as_slice().unwrap());
            (p - y[i]) * (p - y[i])
        })
        .sum::<f64>()
        / n as f64
}

/// Analytic full-batch gradient of the mean squared error.
pub fn mlp_gradient(mlp: &Mlp, x: &Array2<f64>, y: &[f64]) -> Vec<Layer> {
    let n = x.nrows();
    let mut grads: Vec<Layer> = mlp.layers.iter().map(|l| l.zeros_like()).collect();
    for i in 0..n {
        let acts = mlp.forward_all(x.row(i).as_slice().unwrap());
        let pred = acts.last().unwrap()[0];
        // d(mse)/d(pred)
        let mut delta = vec![2.0 * (pred - y[i]) / n as f64];
        for l in (0..mlp.layers.len()).rev() {
            let input = &acts[l];
            let output = &acts[l + 1];
            let last = l == mlp.layers.len() - 1;
            // delta currently holds dL/dz for layer l, where z is pre-activation
            // for the output layer; hidden layers still need the tanh factor
            let dz: Vec<f64> = if last {
                delta.clone()
            } else {
                delta
                    .iter()
                    .zip(output)
                    .map(|(d, a)| d * (1.0 - a * a))
                    .collect()
            };
            for (o, d) in dz.iter().enumerate() {
                grads[l].b[o] += d;
                for (iidx, a) in input.iter().enumerate() {
                    grads[l].w[o][iidx] += d * a;
                }
            }
            if l > 0 {
                let mut next = vec![0.0; input.len()];
                for (o, d) in dz.iter().enumerate() {
                    for (iidx, nv) in next.iter_mut().enumerate() {
                        *nv += d * mlp.layers[l].w[o][iidx];
                    }
                }
                delta = next;
            }
        }
    }
    grads
}

/// Train by gradient descent with momentum. Deterministic under the seed.
pub fn mlp_train(x: &Array2<f64>, y: &[f64], params: &MlpParams) -> Result<Mlp> {
    let n = x.nrows();
    if n == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: y.len(),
        });
    }
    let mut mlp = Mlp::init(x.ncols(), params);
    let mut velocity: Vec<Layer> = mlp.layers.iter().map(|l| l.zeros_like()).collect();
    for epoch in 0..params.epochs {
        let grads = mlp_gradient(&mlp, x, y);
        let mut finite = true;
        for (l, (layer, grad)) in mlp.layers.iter_mut().zip(&grads).enumerate() {
            let vel = &mut velocity[l];
            for o in 0..layer.b.len() {
                vel.b[o] = params.momentum * vel.b[o] - params.learning_rate * grad.b[o];
                layer.b[o] += vel.b[o];
                finite &= layer.b[o].is_finite();
                for i in 0..layer.w[o].len() {
                    vel.w[o][i] =
                        params.momentum * vel.w[o][i] - params.learning_rate * grad.w[o][i];
                    layer.w[o][i] += vel.w[o][i];
                    finite &= layer.w[o][i].is_finite();
                }
            }
        }
        if !finite {
            return Err(Error::MlpDiverged { epoch });
        }
    }
    let final_loss = mlp_loss(&mlp, x, y);
    if !final_loss.is_finite() {
        return Err(Error::MlpDiverged {
            epoch: params.epochs,
        });
    }
    Ok(mlp)
}
