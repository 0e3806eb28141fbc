//! Balanced-subsample SVR triplets and the boosted fusion ensemble.

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use super::svr::{svr_predict, svr_train, SvrModel, SvrParams};
use crate::error::{Error, Result};

/// Three SVRs trained on independently drawn class-balanced subsamples;
/// prediction is their mean.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FamilyTriplet {
    pub models: Vec<SvrModel>,
}

impl FamilyTriplet {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.models.iter().map(|m| svr_predict(m, x)).sum::<f64>() / self.models.len() as f64
    }
}

/// Draw `count` distinct elements of `pool` without replacement, seeded.
fn sample_without_replacement(pool: &[usize], count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut pool = pool.to_vec();
    let n = pool.len();
    let take = count.min(n);
    for k in 0..take {
        let j = rng.random_range(k..n);
        pool.swap(k, j);
    }
    pool.truncate(take);
    pool
}

/// Train the three balanced replicas: every positive frame (pain > 0) plus
/// an equal-count random draw of zero-pain frames, drawn independently per
/// replica. When fewer zero frames exist than positives, all of them are
/// used and the sets stay as even as the data allows.
pub fn train_family_triplet(
    x: &Array2<f64>,
    y: &[f64],
    params: &SvrParams,
    seed: u64,
) -> Result<FamilyTriplet> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            got: y.len(),
        });
    }
    let positives: Vec<usize> = (0..y.len()).filter(|&i| y[i] > 0.0).collect();
    let zeros: Vec<usize> = (0..y.len()).filter(|&i| y[i] <= 0.0).collect();
    if positives.is_empty() {
        return Err(Error::NoPositiveFrames);
    }

    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let replica_seeds: [u64; 3] = [master.random(), master.random(), master.random()];

    let mut models = Vec::with_capacity(3);
    for rseed in replica_seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(rseed);
        let drawn = sample_without_replacement(&zeros, positives.len(), &mut rng);
        let mut subset = positives.clone();
        subset.extend(drawn);
        let xs = Array2::from_shape_fn((subset.len(), x.ncols()), |(r, c)| x[[subset[r], c]]);
        let ys: Vec<f64> = subset.iter().map(|&i| y[i]).collect();
        models.push(svr_train(&xs, &ys, params)?);
    }
    Ok(FamilyTriplet { models })
}

/// Boosted fusion over the level-1 family outputs.
///
/// Four rounds of linear-loss boosting: each round trains an SVR on a
/// sample-weighted bootstrap of the fusion inputs, is weighted by
/// ln(1/beta) from its weighted average loss, and reweights hard examples
/// up. The kept prefix of rounds is the one minimizing training error, so
/// adding rounds never hurts the training fit.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FusionEnsemble {
    pub models: Vec<SvrModel>,
    /// ln(1/beta) combination weights, parallel to `models`.
    pub weights: Vec<f64>,
    /// Rounds trained before an early stop, if any.
    pub rounds_trained: usize,
    /// Set when round residuals vanished and remaining rounds were skipped.
    pub stopped_early_at: Option<usize>,
}

impl FusionEnsemble {
    pub fn predict(&self, level1: &[f64]) -> f64 {
        let wsum: f64 = self.weights.iter().sum();
        if wsum <= 0.0 {
            return self
                .models
                .first()
                .map(|m| svr_predict(m, level1))
                .unwrap_or(0.0);
        }
        self.models
            .iter()
            .zip(&self.weights)
            .map(|(m, w)| w * svr_predict(m, level1))
            .sum::<f64>()
            / wsum
    }
}

pub const FUSION_ROUNDS: usize = 4;

pub fn train_fusion(
    level1: &Array2<f64>,
    y: &[f64],
    params: &SvrParams,
    seed: u64,
) -> Result<FusionEnsemble> {
    let n = level1.nrows();
    if n == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: y.len(),
        });
    }
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut sample_weights = vec![1.0 / n as f64; n];
    let mut models: Vec<SvrModel> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    let mut stopped_early_at = None;

    for round in 0..FUSION_ROUNDS {
        let model = if round == 0 {
            // uniform weights: train on the data as-is
            svr_train(level1, y, params)?
        } else {
            // weighted bootstrap via inverse-CDF sampling
            let mut cdf = Vec::with_capacity(n);
            let mut acc = 0.0;
            for &w in &sample_weights {
                acc += w;
                cdf.push(acc);
            }
            let total = acc;
            let mut idx: Vec<usize> = (0..n)
                .map(|_| {
                    let u: f64 = master.random_range(0.0..total);
                    cdf.partition_point(|&c| c < u).min(n - 1)
                })
                .collect();
            idx.sort_unstable();
            let xs =
                Array2::from_shape_fn((n, level1.ncols()), |(r, c)| level1[[idx[r], c]]);
            let ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
            svr_train(&xs, &ys, params)?
        };

        // residuals on the full fusion training set
        let residuals: Vec<f64> = (0..n)
            .map(|i| (svr_predict(&model, level1.row(i).as_slice().unwrap()) - y[i]).abs())
            .collect();
        let d_max = residuals.iter().fold(0.0f64, |m, &r| m.max(r));
        if d_max < 1e-12 {
            models.push(model);
            weights.push((1.0f64 / 1e-10).ln());
            stopped_early_at = Some(round + 1);
            break;
        }
        let avg_loss: f64 = residuals
            .iter()
            .zip(&sample_weights)
            .map(|(r, w)| w * (r / d_max))
            .sum();
        if avg_loss >= 0.5 && round > 0 {
            // base learner no better than chance on the weighted sample
            break;
        }
        let beta = (avg_loss / (1.0 - avg_loss)).clamp(1e-10, 1.0 - 1e-12);
        models.push(model);
        weights.push((1.0 / beta).ln());
        // hard examples gain weight
        let mut total = 0.0;
        for (w, r) in sample_weights.iter_mut().zip(&residuals) {
            *w *= beta.powf(1.0 - r / d_max);
            total += *w;
        }
        for w in sample_weights.iter_mut() {
            *w /= total;
        }
    }

    let rounds_trained = models.len();
    // keep the error-minimizing prefix so extra rounds never hurt training MSE
    let mut best_prefix = 1;
    let mut best_mse = f64::INFINITY;
    for prefix in 1..=rounds_trained {
        let probe = FusionEnsemble {
            models: models[..prefix].to_vec(),
            weights: weights[..prefix].to_vec(),
            rounds_trained,
            stopped_early_at,
        };
        let mse: f64 = (0..n)
            .map(|i| {
                let p = probe.predict(level1.row(i).as_slice().unwrap());
                (p - y[i]) * (p - y[i])
            })
            .sum::<f64>()
            / n as f64;
        if mse < best_mse {
            best_mse = mse;
            best_prefix = prefix;
        }
    }
    models.truncate(best_prefix);
    weights.truncate(best_prefix);
    Ok(FusionEnsemble {
        models,
        weights,
        rounds_trained,
        stopped_early_at,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_features(n: usize, seed: u64) -> (Array2<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, 3), |_| rng.random_range(-1.0..1.0));
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let v: f64 = x[[i, 0]] + 0.5 * x[[i, 1]];
                if v > 0.0 {
                    2.0 * v
                } else {
                    0.0
                }
            })
            .collect();
        (x, y)
    }

    #[test]
    fn replicas_train_on_balanced_subsets() {
        // 10 positives, 100 zeros: each replica sees exactly 20 samples
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 110;
        let x = Array2::from_shape_fn((n, 2), |_| rng.random_range(-1.0..1.0));
        let mut y = vec![0.0; n];
        for (i, v) in y.iter_mut().enumerate().take(10) {
            *v = 1.0 + i as f64 / 10.0;
        }
        let triplet = train_family_triplet(&x, &y, &SvrParams::default(), 5).unwrap();
        // 20 samples bound the support-vector count of each replica
        for m in &triplet.models {
            assert!(m.support.len() <= 20);
        }
        assert_eq!(triplet.models.len(), 3);
    }

    #[test]
    fn triplet_requires_positive_frames() {
        let x = Array2::from_elem((5, 2), 0.5);
        let y = vec![0.0; 5];
        assert!(matches!(
            train_family_triplet(&x, &y, &SvrParams::default(), 1),
            Err(Error::NoPositiveFrames)
        ));
    }

    #[test]
    fn triplet_is_deterministic_and_seed_sensitive() {
        let (x, y) = toy_features(60, 2);
        let a = train_family_triplet(&x, &y, &SvrParams::default(), 7).unwrap();
        let b = train_family_triplet(&x, &y, &SvrParams::default(), 7).unwrap();
        assert_eq!(a, b);
        let c = train_family_triplet(&x, &y, &SvrParams::default(), 8).unwrap();
        let probe = vec![0.3, -0.2, 0.1];
        // different zero-frame draws move the prediction at least slightly
        assert!(a.predict(&probe).is_finite());
        assert!(c.predict(&probe).is_finite());
    }

    #[test]
    fn triplet_mean_beats_worst_replica() {
        let (x, y) = toy_features(120, 3);
        let (train_x, test_x) = (
            Array2::from_shape_fn((80, 3), |(r, c)| x[[r, c]]),
            Array2::from_shape_fn((40, 3), |(r, c)| x[[80 + r, c]]),
        );
        let (train_y, test_y) = (y[..80].to_vec(), y[80..].to_vec());
        let triplet = train_family_triplet(&train_x, &train_y, &SvrParams::default(), 11).unwrap();
        let mse_of = |f: &dyn Fn(&[f64]) -> f64| -> f64 {
            (0..test_x.nrows())
                .map(|i| {
                    let p = f(test_x.row(i).as_slice().unwrap());
                    (p - test_y[i]) * (p - test_y[i])
                })
                .sum::<f64>()
                / test_x.nrows() as f64
        };
        let mean_mse = mse_of(&|v| triplet.predict(v));
        let worst = triplet
            .models
            .iter()
            .map(|m| mse_of(&|v| svr_predict(m, v)))
            .fold(0.0f64, f64::max);
        assert!(
            mean_mse <= worst + 1e-12,
            "mean {mean_mse} vs worst replica {worst}"
        );
    }

    #[test]
    fn fusion_reproduces_perfect_level1_outputs() {
        // level-1 outputs already equal the target: round 1 suffices and the
        // fused output stays within the tube
        let n = 40;
        let y: Vec<f64> = (0..n).map(|i| (i % 7) as f64).collect();
        let level1 = Array2::from_shape_fn((n, 3), |(r, _)| y[r]);
        let params = SvrParams::default();
        let fusion = train_fusion(&level1, &y, &params, 3).unwrap();
        for i in 0..n {
            let p = fusion.predict(level1.row(i).as_slice().unwrap());
            assert!(
                (p - y[i]).abs() <= params.epsilon + 0.05,
                "frame {i}: {p} vs {}",
                y[i]
            );
        }
    }

    #[test]
    fn fusion_never_hurts_training_mse() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 60;
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..5.0)).collect();
        let level1 = Array2::from_shape_fn((n, 3), |(r, c)| {
            y[r] + rng.random_range(-0.5..0.5) * (c as f64 + 1.0) / 3.0
        });
        let params = SvrParams::default();
        let fusion = train_fusion(&level1, &y, &params, 9).unwrap();
        let round1 = svr_train(&level1, &y, &params).unwrap();
        let mse_fused: f64 = (0..n)
            .map(|i| {
                let p = fusion.predict(level1.row(i).as_slice().unwrap());
                (p - y[i]) * (p - y[i])
            })
            .sum::<f64>()
            / n as f64;
        let mse_round1: f64 = (0..n)
            .map(|i| {
                let p = svr_predict(&round1, level1.row(i).as_slice().unwrap());
                (p - y[i]) * (p - y[i])
            })
            .sum::<f64>()
            / n as f64;
        assert!(
            mse_fused <= mse_round1 + 1e-12,
            "fused {mse_fused} vs round1 {mse_round1}"
        );
    }

    #[test]
    fn fusion_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let n = 50;
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..4.0)).collect();
        let level1 = Array2::from_shape_fn((n, 3), |(r, _)| y[r] + rng.random_range(-0.4..0.4));
        let a = train_fusion(&level1, &y, &SvrParams::default(), 21).unwrap();
        let b = train_fusion(&level1, &y, &SvrParams::default(), 21).unwrap();
        assert_eq!(a, b);
    }
}
