//! Regression machinery: the SVR solver, balanced triplets per feature
//! family, boosted fusion, the temporal MLP, and the two-level pain model.

mod ensemble;
mod mlp;
mod svr;

pub use ensemble::{train_family_triplet, train_fusion, FamilyTriplet, FusionEnsemble};
pub use mlp::{mlp_gradient, mlp_loss, mlp_predict, mlp_train, Layer, Mlp, MlpParams};
pub use svr::{rbf, svr_predict, svr_train, svr_train_traced, SvrModel, SvrParams};

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embed::{project, ProjectionBasis};
use crate::error::{Error, Result};

/// Per-dimension standardization fitted on training data.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FeatureScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureScaler {
    pub fn fit(x: &Array2<f64>) -> FeatureScaler {
        let n = x.nrows().max(1) as f64;
        let d = x.ncols();
        let mut mean = vec![0.0; d];
        for row in x.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= n;
        }
        let mut std = vec![0.0; d];
        for row in x.rows() {
            for ((s, v), m) in std.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        for s in std.iter_mut() {
            *s = (*s / n).sqrt();
            if *s < 1e-9 {
                *s = 1.0; // constant dimension: leave it centered only
            }
        }
        FeatureScaler { mean, std }
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn transform_rows(&self, x: &Array2<f64>) -> Array2<f64> {
        Array2::from_shape_fn(x.dim(), |(i, j)| (x[[i, j]] - self.mean[j]) / self.std[j])
    }
}

/// One feature family's level-1 model: scaler plus balanced triplet.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FamilyModel {
    pub scaler: FeatureScaler,
    pub triplet: FamilyTriplet,
}

impl FamilyModel {
    fn train(x: &Array2<f64>, y: &[f64], params: &SvrParams, seed: u64) -> Result<FamilyModel> {
        let scaler = FeatureScaler::fit(x);
        let xs = scaler.transform_rows(x);
        let triplet = train_family_triplet(&xs, y, params, seed)?;
        Ok(FamilyModel { scaler, triplet })
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.triplet.predict(&self.scaler.transform(x))
    }
}

/// One frame's features: the two descriptor halves and the normalized
/// landmark coordinates, plus identity and the optional label.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FrameFeatures {
    pub subject: String,
    pub sequence: String,
    pub frame: u32,
    pub pain: Option<f64>,
    pub hess: Vec<f64>,
    pub grad: Vec<f64>,
    pub pts: Vec<f64>,
}

/// How frames were grouped for the internal stacking split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StackingSplit {
    /// By person, the normal case.
    Person,
    /// By sequence, when only one training person exists.
    Sequence,
    /// Contiguous frame halves, when a single sequence is all there is.
    FrameBlock,
}

/// Which fold produced each frame's stacked level-1 outputs.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StackingAudit {
    pub split: StackingSplit,
    /// group key -> internal fold (0 or 1); keys are subjects under the
    /// person split, subject/sequence under the sequence split.
    pub fold_of_group: BTreeMap<String, u8>,
}

impl StackingAudit {
    pub fn fold_of_subject(&self, subject: &str) -> Option<u8> {
        match self.split {
            StackingSplit::Person => self.fold_of_group.get(subject).copied(),
            _ => None,
        }
    }

    pub fn involves_subject(&self, subject: &str) -> bool {
        match self.split {
            StackingSplit::Person => self.fold_of_group.contains_key(subject),
            StackingSplit::Sequence => self
                .fold_of_group
                .keys()
                .any(|k| k.starts_with(&format!("{subject}/"))),
            StackingSplit::FrameBlock => false,
        }
    }
}

/// The trained two-level pain regressor with everything inference needs.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PainModel {
    pub version: u32,
    pub basis_hess: ProjectionBasis,
    pub basis_grad: ProjectionBasis,
    /// L2-normalize descriptor halves before projection.
    pub unit_norm: bool,
    pub hess: FamilyModel,
    pub grad: FamilyModel,
    pub pts: FamilyModel,
    pub fusion: FusionEnsemble,
    pub svr: SvrParams,
    pub seed: u64,
    pub audit: StackingAudit,
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

fn unit_norm(v: &[f64]) -> Vec<f64> {
    let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 1e-12 {
        v.iter().map(|x| x / n).collect()
    } else {
        v.to_vec()
    }
}

fn project_family(
    basis: &ProjectionBasis,
    raw: &[f64],
    normalize: bool,
) -> Result<Vec<f64>> {
    if normalize {
        project(basis, &unit_norm(raw))
    } else {
        project(basis, raw)
    }
}

/// Projected per-family design matrices for a set of frames.
struct Designs {
    hess: Array2<f64>,
    grad: Array2<f64>,
    pts: Array2<f64>,
    y: Vec<f64>,
    subjects: Vec<String>,
}

fn build_designs(
    frames: &[FrameFeatures],
    basis_hess: &ProjectionBasis,
    basis_grad: &ProjectionBasis,
    normalize: bool,
) -> Result<Designs> {
    if frames.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let n = frames.len();
    let pts_dim = frames[0].pts.len();
    let mut hess = Array2::zeros((n, basis_hess.t));
    let mut grad = Array2::zeros((n, basis_grad.t));
    let mut pts = Array2::zeros((n, pts_dim));
    let mut y = Vec::with_capacity(n);
    let mut subjects = Vec::with_capacity(n);
    for (i, f) in frames.iter().enumerate() {
        let zh = project_family(basis_hess, &f.hess, normalize)?;
        let zg = project_family(basis_grad, &f.grad, normalize)?;
        if f.pts.len() != pts_dim {
            return Err(Error::DimensionMismatch {
                expected: pts_dim,
                got: f.pts.len(),
            });
        }
        for (j, v) in zh.iter().enumerate() {
            hess[[i, j]] = *v;
        }
        for (j, v) in zg.iter().enumerate() {
            grad[[i, j]] = *v;
        }
        for (j, v) in f.pts.iter().enumerate() {
            pts[[i, j]] = *v;
        }
        y.push(f.pain.ok_or_else(|| {
            Error::InvalidParam(format!(
                "training frame {}/{}/{} has no pain annotation",
                f.subject, f.sequence, f.frame
            ))
        })?);
        subjects.push(f.subject.clone());
    }
    Ok(Designs {
        hess,
        grad,
        pts,
        y,
        subjects,
    })
}

fn rows_subset(x: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn((idx.len(), x.ncols()), |(r, c)| x[[idx[r], c]])
}

/// Train the full two-level model.
///
/// Level-1 outputs used to fit the fusion come from an internal 2-fold
/// person split: frames of one fold are scored by triplets trained on the
/// other fold only, which keeps the stacking inputs out-of-sample. The
/// final level-1 triplets are then retrained on all training persons.
pub fn train_pain_model(
    frames: &[FrameFeatures],
    basis_hess: ProjectionBasis,
    basis_grad: ProjectionBasis,
    svr: &SvrParams,
    unit_norm_descriptors: bool,
    seed: u64,
) -> Result<PainModel> {
    let designs = build_designs(frames, &basis_hess, &basis_grad, unit_norm_descriptors)?;
    let n = frames.len();

    // group frames for the internal split: by person when possible, else by
    // sequence, else contiguous frame halves
    let mut persons: Vec<String> = designs.subjects.clone();
    persons.sort();
    persons.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (split, frame_fold): (StackingSplit, Vec<u8>);
    let mut fold_of_group = BTreeMap::new();
    if persons.len() >= 2 {
        let mut shuffled = persons.clone();
        for k in 0..shuffled.len() {
            let j = rng.random_range(k..shuffled.len());
            shuffled.swap(k, j);
        }
        for (k, p) in shuffled.iter().enumerate() {
            fold_of_group.insert(p.clone(), (k % 2) as u8);
        }
        split = StackingSplit::Person;
        frame_fold = (0..n)
            .map(|i| fold_of_group[&designs.subjects[i]])
            .collect();
    } else {
        let mut groups: Vec<String> = frames
            .iter()
            .map(|f| format!("{}/{}", f.subject, f.sequence))
            .collect();
        groups.sort();
        groups.dedup();
        if groups.len() >= 2 {
            let mut shuffled = groups.clone();
            for k in 0..shuffled.len() {
                let j = rng.random_range(k..shuffled.len());
                shuffled.swap(k, j);
            }
            for (k, g) in shuffled.iter().enumerate() {
                fold_of_group.insert(g.clone(), (k % 2) as u8);
            }
            split = StackingSplit::Sequence;
            frame_fold = frames
                .iter()
                .map(|f| fold_of_group[&format!("{}/{}", f.subject, f.sequence)])
                .collect();
        } else {
            split = StackingSplit::FrameBlock;
            frame_fold = (0..n).map(|i| (i >= n / 2) as u8).collect();
        }
    }

    let fold_indices = |fold: u8| -> Vec<usize> {
        (0..n).filter(|&i| frame_fold[i] == fold).collect()
    };
    let seeds: [u64; 12] = std::array::from_fn(|_| rng.random());

    // cross-fitted level-1 outputs
    let mut level1 = Array2::zeros((n, 3));
    for fold in 0..2u8 {
        let train_idx = fold_indices(1 - fold);
        let apply_idx = fold_indices(fold);
        if train_idx.is_empty() || apply_idx.is_empty() {
            return Err(Error::InvalidParam(
                "internal stacking fold is empty; more frames are needed".into(),
            ));
        }
        let ytr: Vec<f64> = train_idx.iter().map(|&i| designs.y[i]).collect();
        for (fam, x, scol) in [
            (0usize, &designs.hess, 0usize),
            (1, &designs.grad, 1),
            (2, &designs.pts, 2),
        ] {
            let model = FamilyModel::train(
                &rows_subset(x, &train_idx),
                &ytr,
                svr,
                seeds[fold as usize * 3 + fam],
            )?;
            for &i in &apply_idx {
                let row: Vec<f64> = x.row(i).iter().copied().collect();
                level1[[i, scol]] = model.predict(&row);
            }
        }
    }

    // final level-1 models on all persons
    let hess = FamilyModel::train(&designs.hess, &designs.y, svr, seeds[6])?;
    let grad = FamilyModel::train(&designs.grad, &designs.y, svr, seeds[7])?;
    let pts = FamilyModel::train(&designs.pts, &designs.y, svr, seeds[8])?;

    let fusion = train_fusion(&level1, &designs.y, svr, seeds[9])?;

    Ok(PainModel {
        version: MODEL_FORMAT_VERSION,
        basis_hess,
        basis_grad,
        unit_norm: unit_norm_descriptors,
        hess,
        grad,
        pts,
        fusion,
        svr: *svr,
        seed,
        audit: StackingAudit {
            split,
            fold_of_group,
        },
    })
}

/// A prediction with both the raw regression output and the score clamped
/// to the reporting range.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PainPrediction {
    pub raw: f64,
    pub clamped: f64,
}

/// Score one frame. Family blocks must arrive in their native layout; any
/// dimension swap is rejected.
pub fn predict_pain(
    model: &PainModel,
    hess: &[f64],
    grad: &[f64],
    pts: &[f64],
) -> Result<PainPrediction> {
    if hess.len() != model.basis_hess.d {
        return Err(Error::DimensionMismatch {
            expected: model.basis_hess.d,
            got: hess.len(),
        });
    }
    if grad.len() != model.basis_grad.d {
        return Err(Error::DimensionMismatch {
            expected: model.basis_grad.d,
            got: grad.len(),
        });
    }
    if pts.len() != model.pts.scaler.mean.len() {
        return Err(Error::DimensionMismatch {
            expected: model.pts.scaler.mean.len(),
            got: pts.len(),
        });
    }
    let zh = project_family(&model.basis_hess, hess, model.unit_norm)?;
    let zg = project_family(&model.basis_grad, grad, model.unit_norm)?;
    let level1 = [
        model.hess.predict(&zh),
        model.grad.predict(&zg),
        model.pts.predict(pts),
    ];
    let raw = model.fusion.predict(&level1);
    Ok(PainPrediction {
        raw,
        clamped: raw.clamp(0.0, 15.0),
    })
}

pub fn predict_pain_features(model: &PainModel, f: &FrameFeatures) -> Result<PainPrediction> {
    predict_pain(model, &f.hess, &f.grad, &f.pts)
}

impl PainModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self).map_err(|e| Error::ModelFormat {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: PainModel = serde_json::from_str(&text).map_err(|e| Error::ModelFormat {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        if model.version != MODEL_FORMAT_VERSION {
            return Err(Error::ModelFormat {
                path: path.to_path_buf(),
                detail: format!(
                    "model format version {} not supported (expected {})",
                    model.version, MODEL_FORMAT_VERSION
                ),
            });
        }
        Ok(model)
    }
}
