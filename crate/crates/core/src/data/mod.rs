//! Dataset model: frames, landmarks, sequences, manifest I/O, geometric face
//! normalization, region extraction and the synthetic face generator.

mod manifest;
mod normalize;
mod roi;
mod synth;

pub use manifest::{load_manifest, save_dataset, save_manifest};
pub use normalize::{normalize_face, resample_similarity, NormalizeConfig, Similarity};
pub use roi::{extract_rois, RoiPatch, RoiRegion, RoiSpec};
pub use synth::{synth_dataset, SynthConfig};

use std::collections::BTreeMap;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Number of landmarks per face.
pub const N_LANDMARKS: usize = 22;

/// Action units contributing to the pain score.
pub const PAIN_ACTION_UNITS: [u8; 6] = [4, 6, 7, 9, 10, 43];

/// AU-id to intensity map. Graded units use 0..=5, unit 43 (eyes closed) is
/// binary.
pub type AuMap = BTreeMap<u8, f64>;

/// Ordered facial landmarks in pixel coordinates.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Landmarks {
    points: Vec<[f64; 2]>,
}

impl Landmarks {
    pub fn new(points: Vec<[f64; 2]>) -> Result<Self> {
        if points.len() != N_LANDMARKS {
            return Err(Error::LandmarkCount {
                context: "landmark set".into(),
                found: points.len(),
            });
        }
        for (k, p) in points.iter().enumerate() {
            if !p[0].is_finite() || !p[1].is_finite() {
                return Err(Error::InvalidParam(format!(
                    "landmark {k} is not finite: ({}, {})",
                    p[0], p[1]
                )));
            }
        }
        Ok(Landmarks { points })
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn point(&self, idx: usize) -> [f64; 2] {
        self.points[idx]
    }

    /// Centroid of a subset of landmarks.
    pub fn centroid(&self, indices: &[usize]) -> [f64; 2] {
        let mut cx = 0.0;
        let mut cy = 0.0;
        for &k in indices {
            cx += self.points[k][0];
            cy += self.points[k][1];
        }
        let n = indices.len() as f64;
        [cx / n, cy / n]
    }

    /// The 44 coordinates flattened x0, y0, x1, y1, ...
    pub fn flattened(&self) -> Vec<f64> {
        self.points.iter().flat_map(|p| [p[0], p[1]]).collect()
    }

    pub fn map(&self, f: impl Fn([f64; 2]) -> [f64; 2]) -> Landmarks {
        Landmarks {
            points: self.points.iter().map(|p| f(*p)).collect(),
        }
    }
}

/// One annotated grayscale frame.
#[derive(Debug, Clone)]
pub struct Frame {
    /// Intensity values 0..=255 as reals, row-major (axis 0 = y).
    pub image: Array2<f64>,
    pub landmarks: Landmarks,
    /// Per-AU intensities when annotated; may be partial.
    pub au: Option<AuMap>,
    /// Pain score when annotated. Stored exactly as given, never clamped;
    /// note the score formula admits a maximum of 16 although the scale is
    /// usually described as 16 discrete levels 0..=15.
    pub pain: Option<f64>,
    pub subject_id: String,
    pub sequence_id: String,
    pub frame_index: u32,
}

impl Frame {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        image: Array2<f64>,
        landmarks: Landmarks,
        au: Option<AuMap>,
        pain: Option<f64>,
        subject_id: impl Into<String>,
        sequence_id: impl Into<String>,
        frame_index: u32,
    ) -> Result<Self> {
        let subject_id = subject_id.into();
        let sequence_id = sequence_id.into();
        let context = format!("subject {subject_id}, sequence {sequence_id}, frame {frame_index}");
        if image.is_empty() {
            return Err(Error::InvalidParam(format!("{context}: empty image")));
        }
        if let Some(au) = &au {
            validate_au(au, &context)?;
            if let Some(p) = pain {
                if au_complete(au) {
                    let derived = crate::eval::prkachin_solomon(au)?;
                    if (derived - p).abs() > 1e-9 {
                        return Err(Error::PainAuMismatch {
                            context,
                            stored: p,
                            derived,
                        });
                    }
                }
            }
        }
        Ok(Frame {
            image,
            landmarks,
            au,
            pain,
            subject_id,
            sequence_id,
            frame_index,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.image.dim()
    }
}

fn au_complete(au: &AuMap) -> bool {
    PAIN_ACTION_UNITS.iter().all(|id| au.contains_key(id))
}

fn validate_au(au: &AuMap, context: &str) -> Result<()> {
    for (&id, &v) in au {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::InvalidParam(format!(
                "{context}: AU{id} intensity {v} out of range"
            )));
        }
        if id == 43 {
            if v != 0.0 && v != 1.0 {
                return Err(Error::InvalidParam(format!(
                    "{context}: AU43 must be 0 or 1, got {v}"
                )));
            }
        } else if v > 5.0 {
            return Err(Error::InvalidParam(format!(
                "{context}: AU{id} intensity {v} above 5"
            )));
        }
    }
    Ok(())
}

/// Ordered frames of one recording of one subject.
#[derive(Debug, Clone)]
pub struct Sequence {
    frames: Vec<Frame>,
}

impl Sequence {
    pub fn new(frames: Vec<Frame>) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::InvalidParam("sequence has no frames".into()))?;
        let subject = first.subject_id.clone();
        let sequence = first.sequence_id.clone();
        let mut prev = None::<u32>;
        for f in &frames {
            if f.subject_id != subject || f.sequence_id != sequence {
                return Err(Error::InvalidParam(format!(
                    "sequence {subject}/{sequence} mixes frames of {}/{}",
                    f.subject_id, f.sequence_id
                )));
            }
            if let Some(p) = prev {
                if f.frame_index <= p {
                    return Err(Error::NonMonotoneFrames {
                        context: format!("subject {subject}, sequence {sequence}"),
                        prev: p as i64,
                        next: f.frame_index as i64,
                    });
                }
            }
            prev = Some(f.frame_index);
        }
        Ok(Sequence { frames })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn subject_id(&self) -> &str {
        &self.frames[0].subject_id
    }

    pub fn sequence_id(&self) -> &str {
        &self.frames[0].sequence_id
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        false // a Sequence is non-empty by construction
    }

    pub fn into_frames(self) -> Vec<Frame> {
        self.frames
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_image() -> Array2<f64> {
        Array2::zeros((4, 4))
    }

    fn landmarks() -> Landmarks {
        Landmarks::new((0..N_LANDMARKS).map(|k| [k as f64, 1.0]).collect()).unwrap()
    }

    #[test]
    fn landmark_count_enforced() {
        let r = Landmarks::new(vec![[0.0, 0.0]; 21]);
        assert!(matches!(r, Err(Error::LandmarkCount { found: 21, .. })));
    }

    #[test]
    fn pain_must_match_complete_au() {
        let mut au = AuMap::new();
        for id in PAIN_ACTION_UNITS {
            au.insert(id, 0.0);
        }
        au.insert(4, 3.0);
        au.insert(6, 2.0);
        au.insert(7, 4.0);
        au.insert(10, 1.0);
        au.insert(43, 1.0);
        // pspi = 3 + max(2,4) + max(0,1) + 1 = 9
        assert!(Frame::new(
            tiny_image(),
            landmarks(),
            Some(au.clone()),
            Some(9.0),
            "s",
            "q",
            0
        )
        .is_ok());
        let r = Frame::new(tiny_image(), landmarks(), Some(au), Some(8.0), "s", "q", 0);
        assert!(matches!(r, Err(Error::PainAuMismatch { .. })));
    }

    #[test]
    fn partial_au_skips_consistency_check() {
        let mut au = AuMap::new();
        au.insert(4, 2.0);
        assert!(
            Frame::new(tiny_image(), landmarks(), Some(au), Some(99.0), "s", "q", 0).is_ok()
        );
    }

    #[test]
    fn sequence_requires_strictly_increasing_indices() {
        let mk = |idx| {
            Frame::new(tiny_image(), landmarks(), None, None, "s", "q", idx).unwrap()
        };
        assert!(Sequence::new(vec![mk(0), mk(1), mk(2)]).is_ok());
        assert!(matches!(
            Sequence::new(vec![mk(0), mk(2), mk(2)]),
            Err(Error::NonMonotoneFrames { .. })
        ));
        assert!(Sequence::new(vec![]).is_err());
    }
}
