//! Temporal post-processing of per-frame pain estimates.
//!
//! Three filters: a median filter followed by a sliding linear regression,
//! a learned filter over raw vicinity values, and a learned filter over
//! strict-ordering moment features (the estimate plus variances over nested
//! centered windows). Learned filters train only on sequences that carry
//! ground truth, which under the evaluation protocol are the training
//! persons.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::learn::{
    mlp_predict, mlp_train, svr_predict, svr_train, FeatureScaler, Mlp, MlpParams, SvrModel,
    SvrParams,
};

/// Filtering method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterMethod {
    MedianLr,
    VicinityMlp,
    StrictOrdering,
}

/// Regressor backing a learned filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterRegressor {
    Mlp,
    Svr,
}

/// Statistic used by the strict-ordering features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderingStat {
    Variance,
    StdDev,
}

/// Filter configuration.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FilterConfig {
    pub method: FilterMethod,
    /// Window width, odd and >= 3.
    pub w: usize,
    /// Regressor for the learned methods.
    pub regressor: FilterRegressor,
    pub ordering_stat: OrderingStat,
    pub seed: u64,
}

impl FilterConfig {
    pub fn median_lr() -> Self {
        FilterConfig {
            method: FilterMethod::MedianLr,
            w: 21,
            regressor: FilterRegressor::Mlp,
            ordering_stat: OrderingStat::Variance,
            seed: 0,
        }
    }

    pub fn vicinity_mlp() -> Self {
        FilterConfig {
            method: FilterMethod::VicinityMlp,
            w: 21,
            regressor: FilterRegressor::Mlp,
            ordering_stat: OrderingStat::Variance,
            seed: 0,
        }
    }

    pub fn strict_ordering(regressor: FilterRegressor) -> Self {
        FilterConfig {
            method: FilterMethod::StrictOrdering,
            w: 61,
            regressor,
            ordering_stat: OrderingStat::Variance,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.w < 3 || self.w % 2 == 0 {
            return Err(Error::InvalidParam(format!(
                "filter window must be odd and >= 3, got {}",
                self.w
            )));
        }
        Ok(())
    }
}

fn median_of(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Median filter then ordinary least squares over the same (edge-truncated)
/// window of medians, evaluated at the center frame.
pub fn filter_median_lr(z: &[f64], w: usize) -> Result<Vec<f64>> {
    if w < 3 || w % 2 == 0 {
        return Err(Error::InvalidParam(format!(
            "window must be odd and >= 3, got {w}"
        )));
    }
    let n = z.len();
    if n == 0 {
        return Ok(vec![]);
    }
    let h = w / 2;
    let window = |i: usize| -> (usize, usize) {
        let lo = i.saturating_sub(h);
        let hi = (i + h + 1).min(n);
        (lo, hi)
    };
    let medians: Vec<f64> = (0..n)
        .map(|i| {
            let (lo, hi) = window(i);
            let mut vals = z[lo..hi].to_vec();
            median_of(&mut vals)
        })
        .collect();
    // least-squares line through (t, median_t) over each window
    let out = (0..n)
        .map(|i| {
            let (lo, hi) = window(i);
            let m = (hi - lo) as f64;
            let mut st = 0.0;
            let mut sy = 0.0;
            for (t, &v) in medians[lo..hi].iter().enumerate() {
                st += (lo + t) as f64;
                sy += v;
            }
            let mt = st / m;
            let my = sy / m;
            let mut stt = 0.0;
            let mut sty = 0.0;
            for (t, &v) in medians[lo..hi].iter().enumerate() {
                let dt = (lo + t) as f64 - mt;
                stt += dt * dt;
                sty += dt * (v - my);
            }
            if stt > 0.0 {
                my + sty / stt * (i as f64 - mt)
            } else {
                my
            }
        })
        .collect();
    Ok(out)
}

/// Centered window of raw estimates with edge replication; length `w`.
pub fn build_vicinity_features(z: &[f64], w: usize) -> Result<Vec<Vec<f64>>> {
    if w < 3 || w % 2 == 0 {
        return Err(Error::InvalidParam(format!(
            "window must be odd and >= 3, got {w}"
        )));
    }
    let n = z.len() as isize;
    if n == 0 {
        return Ok(vec![]);
    }
    let h = (w / 2) as isize;
    Ok((0..n)
        .map(|i| {
            (-h..=h)
                .map(|o| z[(i + o).clamp(0, n - 1) as usize])
                .collect()
        })
        .collect())
}

/// Strict-ordering features: [z_i, sigma over window 3, 5, ..., w] with
/// edge-replicated windows. `sigma` is the population variance, or the
/// standard deviation under [`OrderingStat::StdDev`].
pub fn build_strict_ordering_features(
    z: &[f64],
    w: usize,
    stat: OrderingStat,
) -> Result<Vec<Vec<f64>>> {
    if w % 2 == 0 || w < 3 {
        return Err(Error::InvalidParam(format!(
            "window must be odd and >= 3, got {w}"
        )));
    }
    let n = z.len() as isize;
    if n == 0 {
        return Ok(vec![]);
    }
    Ok((0..n)
        .map(|i| {
            let mut f = Vec::with_capacity(1 + (w - 1) / 2);
            f.push(z[i as usize]);
            let mut width = 3usize;
            while width <= w {
                let h = (width / 2) as isize;
                let vals: Vec<f64> = (-h..=h)
                    .map(|o| z[(i + o).clamp(0, n - 1) as usize])
                    .collect();
                let m = vals.iter().sum::<f64>() / vals.len() as f64;
                let var =
                    vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / vals.len() as f64;
                f.push(match stat {
                    OrderingStat::Variance => var,
                    OrderingStat::StdDev => var.sqrt(),
                });
                width += 2;
            }
            f
        })
        .collect())
}

enum FilterModel {
    Mlp(Mlp),
    Svr(SvrModel),
}

/// A trained learned filter, applicable to any estimate sequence.
pub struct TemporalFilter {
    config: FilterConfig,
    scaler: FeatureScaler,
    target_scale: f64,
    model: FilterModel,
}

impl TemporalFilter {
    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    /// Filter one sequence of per-frame estimates.
    pub fn apply(&self, z: &[f64]) -> Result<Vec<f64>> {
        let feats = match self.config.method {
            FilterMethod::MedianLr => {
                return filter_median_lr(z, self.config.w);
            }
            FilterMethod::VicinityMlp => build_vicinity_features(z, self.config.w)?,
            FilterMethod::StrictOrdering => {
                build_strict_ordering_features(z, self.config.w, self.config.ordering_stat)?
            }
        };
        Ok(feats
            .iter()
            .map(|f| {
                let s = self.scaler.transform(f);
                let raw = match &self.model {
                    FilterModel::Mlp(m) => mlp_predict(m, &s),
                    FilterModel::Svr(m) => svr_predict(m, &s),
                };
                raw * self.target_scale
            })
            .collect())
    }
}

/// Train a learned filter from (estimate, truth) sequence pairs.
///
/// The median-LR method needs no training; calling this with it returns a
/// pass-through filter object for interface uniformity.
pub fn train_temporal_filter(
    train: &[(Vec<f64>, Vec<f64>)],
    config: &FilterConfig,
) -> Result<TemporalFilter> {
    config.validate()?;
    if config.method == FilterMethod::MedianLr {
        return Ok(TemporalFilter {
            config: *config,
            scaler: FeatureScaler {
                mean: vec![],
                std: vec![],
            },
            target_scale: 1.0,
            model: FilterModel::Svr(SvrModel {
                support: vec![],
                coeffs: vec![],
                bias: 0.0,
                gamma: 1.0,
                iterations: 0,
                converged: true,
                kkt_violation: 0.0,
                dual_objective: 0.0,
            }),
        });
    }
    if train.is_empty() || train.iter().all(|(z, _)| z.is_empty()) {
        return Err(Error::EmptyTrainingSet);
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut targets: Vec<f64> = Vec::new();
    for (z, truth) in train {
        if z.len() != truth.len() {
            return Err(Error::DimensionMismatch {
                expected: z.len(),
                got: truth.len(),
            });
        }
        let feats = match config.method {
            FilterMethod::VicinityMlp => build_vicinity_features(z, config.w)?,
            FilterMethod::StrictOrdering => {
                build_strict_ordering_features(z, config.w, config.ordering_stat)?
            }
            FilterMethod::MedianLr => unreachable!(),
        };
        rows.extend(feats);
        targets.extend_from_slice(truth);
    }
    let d = rows[0].len();
    let x = Array2::from_shape_fn((rows.len(), d), |(i, j)| rows[i][j]);
    let scaler = FeatureScaler::fit(&x);
    let xs = scaler.transform_rows(&x);
    // scale targets near unit range for tanh-friendly training
    let target_scale = targets
        .iter()
        .fold(1.0f64, |m, v| m.max(v.abs()))
        .max(1e-9);
    let ys: Vec<f64> = targets.iter().map(|v| v / target_scale).collect();

    let model = match config.regressor {
        FilterRegressor::Mlp => {
            let params = MlpParams {
                seed: config.seed,
                ..MlpParams::default()
            };
            FilterModel::Mlp(mlp_train(&xs, &ys, &params)?)
        }
        FilterRegressor::Svr => {
            // narrow tube and larger cost: the filter must resolve spike
            // amplitudes that are small on the unit-scaled target axis
            let params = SvrParams {
                c: 10.0,
                epsilon: 0.005,
                ..SvrParams::default()
            };
            FilterModel::Svr(svr_train(&xs, &ys, &params)?)
        }
    };
    Ok(TemporalFilter {
        config: *config,
        scaler,
        target_scale,
        model,
    })
}

/// One-call form: train on labeled sequences, filter the test estimates.
pub fn filter_learned(
    train: &[(Vec<f64>, Vec<f64>)],
    test_z: &[f64],
    config: &FilterConfig,
) -> Result<Vec<f64>> {
    let filter = train_temporal_filter(train, config)?;
    filter.apply(test_z)
}
