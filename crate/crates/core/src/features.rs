//! Frame-to-feature extraction and the descriptor export format.
//!
//! One CSV row per frame: `subject,sequence,frame,pain,hess[0..159],
//! grad[0..79]`, pain left empty when unannotated. Landmark coordinate
//! features travel in a companion file with columns
//! `subject,sequence,frame,pts[0..43]`.

use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;

use crate::data::{normalize_face, Frame, NormalizeConfig, RoiSpec, Sequence, PAIN_ACTION_UNITS};
use crate::error::{Error, Result};
use crate::hot::{describe_face, HotParams, GRAD_DIM, HESS_DIM};
use crate::learn::FrameFeatures;
use crate::scalespace::ScaleParams;

/// Whether a frame shows at least one pain-related action unit.
pub fn pain_au_flag(frame: &Frame) -> bool {
    if let Some(au) = &frame.au {
        return PAIN_ACTION_UNITS
            .iter()
            .any(|id| au.get(id).map_or(false, |&v| v > 0.0));
    }
    frame.pain.map_or(false, |p| p > 0.0)
}

/// Normalize one frame and compute its descriptor and landmark features.
pub fn compute_features(
    frame: &Frame,
    norm: &NormalizeConfig,
    roi: &RoiSpec,
    scale: &ScaleParams,
    hot: &HotParams,
) -> Result<FrameFeatures> {
    let normalized = normalize_face(frame, norm)?;
    let descriptor = describe_face(&normalized, roi, scale, hot)?;
    Ok(FrameFeatures {
        subject: frame.subject_id.clone(),
        sequence: frame.sequence_id.clone(),
        frame: frame.frame_index,
        pain: frame.pain,
        hess: descriptor.hess,
        grad: descriptor.grad,
        pts: normalized.landmarks.flattened(),
    })
}

/// Extract features for every frame of every sequence, in order.
/// Frames are processed in parallel; output order is input order.
pub fn extract_features(
    sequences: &[Sequence],
    norm: &NormalizeConfig,
    roi: &RoiSpec,
    scale: &ScaleParams,
    hot: &HotParams,
) -> Result<Vec<FrameFeatures>> {
    let frames: Vec<&Frame> = sequences.iter().flat_map(|s| s.frames()).collect();
    frames
        .par_iter()
        .map(|f| compute_features(f, norm, roi, scale, hot))
        .collect()
}

/// Descriptor half selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DescriptorFamily {
    Hess,
    Grad,
}

/// Stack one descriptor half of every row into an n x d matrix.
pub fn descriptor_matrix(rows: &[FrameFeatures], family: DescriptorFamily) -> Array2<f64> {
    let n = rows.len();
    let d = match family {
        DescriptorFamily::Hess => rows.first().map_or(0, |f| f.hess.len()),
        DescriptorFamily::Grad => rows.first().map_or(0, |f| f.grad.len()),
    };
    Array2::from_shape_fn((n, d), |(i, j)| match family {
        DescriptorFamily::Hess => rows[i].hess[j],
        DescriptorFamily::Grad => rows[i].grad[j],
    })
}

/// AU flags aligned with [`extract_features`] output.
pub fn extract_flags(sequences: &[Sequence]) -> Vec<bool> {
    sequences
        .iter()
        .flat_map(|s| s.frames())
        .map(pain_au_flag)
        .collect()
}

/// Write descriptor rows in the documented CSV layout.
pub fn save_features_csv(path: &Path, features: &[FrameFeatures]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec![
        "subject".to_string(),
        "sequence".to_string(),
        "frame".to_string(),
        "pain".to_string(),
    ];
    header.extend((0..HESS_DIM).map(|i| format!("hess{i}")));
    header.extend((0..GRAD_DIM).map(|i| format!("grad{i}")));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for f in features {
        let mut rec = vec![
            f.subject.clone(),
            f.sequence.clone(),
            f.frame.to_string(),
            f.pain.map(|p| format!("{p}")).unwrap_or_default(),
        ];
        rec.extend(f.hess.iter().map(|v| format!("{v}")));
        rec.extend(f.grad.iter().map(|v| format!("{v}")));
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Companion landmark-coordinate file.
pub fn save_pts_csv(path: &Path, features: &[FrameFeatures]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let dim = features.first().map_or(44, |f| f.pts.len());
    let mut header = vec![
        "subject".to_string(),
        "sequence".to_string(),
        "frame".to_string(),
    ];
    header.extend((0..dim).map(|i| format!("pts{i}")));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for f in features {
        let mut rec = vec![f.subject.clone(), f.sequence.clone(), f.frame.to_string()];
        rec.extend(f.pts.iter().map(|v| format!("{v}")));
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Read descriptor rows; `pts` columns come back empty unless merged from
/// the companion file afterwards.
pub fn load_features_csv(path: &Path) -> Result<Vec<FrameFeatures>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let want = 4 + HESS_DIM + GRAD_DIM;
        if rec.len() != want {
            return Err(Error::Manifest {
                path: path.to_path_buf(),
                detail: format!("row {i}: expected {want} columns, found {}", rec.len()),
            });
        }
        let parse = |s: &str, col: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Manifest {
                path: path.to_path_buf(),
                detail: format!("row {i}: bad {col} value '{s}'"),
            })
        };
        let pain = if rec[3].is_empty() {
            None
        } else {
            Some(parse(&rec[3], "pain")?)
        };
        let mut hess = Vec::with_capacity(HESS_DIM);
        for k in 0..HESS_DIM {
            hess.push(parse(&rec[4 + k], "hess")?);
        }
        let mut grad = Vec::with_capacity(GRAD_DIM);
        for k in 0..GRAD_DIM {
            grad.push(parse(&rec[4 + HESS_DIM + k], "grad")?);
        }
        out.push(FrameFeatures {
            subject: rec[0].to_string(),
            sequence: rec[1].to_string(),
            frame: rec[2].parse().map_err(|_| Error::Manifest {
                path: path.to_path_buf(),
                detail: format!("row {i}: bad frame index '{}'", &rec[2]),
            })?,
            pain,
            hess,
            grad,
            pts: vec![],
        });
    }
    Ok(out)
}

/// Merge landmark columns from the companion file into feature rows by
/// (subject, sequence, frame) identity.
pub fn merge_pts_csv(path: &Path, features: &mut [FrameFeatures]) -> Result<()> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut map = std::collections::BTreeMap::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if rec.len() < 4 {
            return Err(Error::Manifest {
                path: path.to_path_buf(),
                detail: format!("row {i}: too few columns"),
            });
        }
        let key = (rec[0].to_string(), rec[1].to_string(), rec[2].to_string());
        let pts: Result<Vec<f64>> = (3..rec.len())
            .map(|k| {
                rec[k].parse().map_err(|_| Error::Manifest {
                    path: path.to_path_buf(),
                    detail: format!("row {i}: bad pts value '{}'", &rec[k]),
                })
            })
            .collect();
        map.insert(key, pts?);
    }
    for f in features.iter_mut() {
        let key = (f.subject.clone(), f.sequence.clone(), f.frame.to_string());
        if let Some(pts) = map.get(&key) {
            f.pts = pts.clone();
        } else {
            return Err(Error::Manifest {
                path: path.to_path_buf(),
                detail: format!(
                    "no landmark row for frame {}/{}/{}",
                    f.subject, f.sequence, f.frame
                ),
            });
        }
    }
    Ok(())
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Manifest {
        path: path.to_path_buf(),
        detail: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_dataset;

    #[test]
    fn features_have_documented_dimensions() {
        let data = synth_dataset(5, 2, 6).unwrap();
        let feats = extract_features(
            &data,
            &NormalizeConfig::default(),
            &RoiSpec::default(),
            &ScaleParams::default(),
            &HotParams::default(),
        )
        .unwrap();
        assert_eq!(feats.len(), 12);
        for f in &feats {
            assert_eq!(f.hess.len(), 160);
            assert_eq!(f.grad.len(), 80);
            assert_eq!(f.pts.len(), 44);
            assert!(f.pain.is_some());
        }
        // identical frames give bitwise-identical descriptors
        let again = extract_features(
            &data,
            &NormalizeConfig::default(),
            &RoiSpec::default(),
            &ScaleParams::default(),
            &HotParams::default(),
        )
        .unwrap();
        assert_eq!(feats, again);
    }

    #[test]
    fn csv_round_trip() {
        let data = synth_dataset(6, 2, 4).unwrap();
        let feats = extract_features(
            &data,
            &NormalizeConfig::default(),
            &RoiSpec::default(),
            &ScaleParams::default(),
            &HotParams::default(),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let fpath = dir.path().join("features.csv");
        let ppath = dir.path().join("pts.csv");
        save_features_csv(&fpath, &feats).unwrap();
        save_pts_csv(&ppath, &feats).unwrap();
        let mut loaded = load_features_csv(&fpath).unwrap();
        merge_pts_csv(&ppath, &mut loaded).unwrap();
        assert_eq!(feats, loaded);
    }

    #[test]
    fn au_flag_tracks_pain_action_units() {
        let data = synth_dataset(7, 2, 30).unwrap();
        let frames: Vec<_> = data.iter().flat_map(|s| s.frames()).collect();
        for f in frames {
            let flag = pain_au_flag(f);
            assert_eq!(flag, f.pain.unwrap() > 0.0);
        }
    }
}
