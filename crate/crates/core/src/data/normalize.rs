//! Geometric face normalization.
//!
//! Every face is resampled under the unique similarity transform that makes
//! the eye line horizontal, the inter-ocular distance a fixed 50 pixels and
//! the eye midpoint land on a configured canvas anchor.

use ndarray::Array2;

use super::Frame;
use crate::error::{Error, Result};

/// Canvas geometry and the landmark indices of the two eye centers.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NormalizeConfig {
    pub left_eye_idx: usize,
    pub right_eye_idx: usize,
    pub canvas_width: usize,
    pub canvas_height: usize,
    /// Where the eye midpoint lands on the canvas.
    pub anchor: [f64; 2],
    /// Target inter-ocular distance in pixels.
    pub iod: f64,
}

impl Default for NormalizeConfig {
    fn default() -> Self {
        // 128x128 with the eye line at y = 48 leaves margin for brow and chin
        NormalizeConfig {
            left_eye_idx: 0,
            right_eye_idx: 1,
            canvas_width: 128,
            canvas_height: 128,
            anchor: [64.0, 48.0],
            iod: 50.0,
        }
    }
}

impl NormalizeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.canvas_width == 0 || self.canvas_height == 0 {
            return Err(Error::DegenerateGeometry(
                "normalized canvas has zero area".into(),
            ));
        }
        if self.left_eye_idx == self.right_eye_idx
            || self.left_eye_idx >= super::N_LANDMARKS
            || self.right_eye_idx >= super::N_LANDMARKS
        {
            return Err(Error::InvalidParam(format!(
                "eye landmark indices {} and {} must be distinct and < {}",
                self.left_eye_idx,
                self.right_eye_idx,
                super::N_LANDMARKS
            )));
        }
        if !(self.iod > 0.0) {
            return Err(Error::InvalidParam(format!(
                "inter-ocular distance must be > 0, got {}",
                self.iod
            )));
        }
        Ok(())
    }
}

/// Orientation-preserving similarity transform p -> s R p + t.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    /// Combined scale-rotation matrix entries: [s cos, -s sin, s sin, s cos].
    pub a: f64,
    pub b: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Similarity {
    /// Transform mapping `src0 -> dst0` and `src1 -> dst1`.
    pub fn from_point_pairs(
        src0: [f64; 2],
        src1: [f64; 2],
        dst0: [f64; 2],
        dst1: [f64; 2],
    ) -> Result<Self> {
        let dsx = src1[0] - src0[0];
        let dsy = src1[1] - src0[1];
        let len2 = dsx * dsx + dsy * dsy;
        if len2 < 1e-20 {
            return Err(Error::DegenerateGeometry(
                "source points coincide".into(),
            ));
        }
        let ddx = dst1[0] - dst0[0];
        let ddy = dst1[1] - dst0[1];
        // complex division (dd / ds) gives the scale-rotation
        let a = (ddx * dsx + ddy * dsy) / len2;
        let b = (ddy * dsx - ddx * dsy) / len2;
        let tx = dst0[0] - (a * src0[0] - b * src0[1]);
        let ty = dst0[1] - (b * src0[0] + a * src0[1]);
        Ok(Similarity { a, b, tx, ty })
    }

    /// Rotation by `angle_deg` about `center` with uniform `scale`.
    pub fn rotation_about(center: [f64; 2], angle_deg: f64, scale: f64) -> Self {
        let (s, c) = angle_deg.to_radians().sin_cos();
        let a = scale * c;
        let b = scale * s;
        Similarity {
            a,
            b,
            tx: center[0] - (a * center[0] - b * center[1]),
            ty: center[1] - (b * center[0] + a * center[1]),
        }
    }

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        [
            self.a * p[0] - self.b * p[1] + self.tx,
            self.b * p[0] + self.a * p[1] + self.ty,
        ]
    }

    pub fn inverse(&self) -> Similarity {
        let d = self.a * self.a + self.b * self.b;
        let ia = self.a / d;
        let ib = -self.b / d;
        Similarity {
            a: ia,
            b: ib,
            tx: -(ia * self.tx - ib * self.ty),
            ty: -(ib * self.tx + ia * self.ty),
        }
    }
}

/// Bilinear sample with edge replication.
#[inline]
fn sample_bilinear(image: &Array2<f64>, x: f64, y: f64) -> f64 {
    let (h, w) = image.dim();
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let top = image[[y0, x0]] * (1.0 - fx) + image[[y0, x1]] * fx;
    let bot = image[[y1, x0]] * (1.0 - fx) + image[[y1, x1]] * fx;
    top * (1.0 - fy) + bot * fy
}

/// Resample `image` onto a `height x width` canvas under the forward map
/// `fwd` (source -> canvas). Out-of-frame reads replicate the nearest edge.
pub fn resample_similarity(
    image: &Array2<f64>,
    fwd: &Similarity,
    width: usize,
    height: usize,
) -> Array2<f64> {
    let inv = fwd.inverse();
    Array2::from_shape_fn((height, width), |(y, x)| {
        let p = inv.apply([x as f64, y as f64]);
        sample_bilinear(image, p[0], p[1])
    })
}

/// Normalize a frame: eye line horizontal, inter-ocular distance `cfg.iod`,
/// eye midpoint at `cfg.anchor`. Landmarks are mapped by the same transform.
pub fn normalize_face(frame: &Frame, cfg: &NormalizeConfig) -> Result<Frame> {
    cfg.validate()?;
    let left = frame.landmarks.point(cfg.left_eye_idx);
    let right = frame.landmarks.point(cfg.right_eye_idx);
    let half = cfg.iod / 2.0;
    let fwd = Similarity::from_point_pairs(
        left,
        right,
        [cfg.anchor[0] - half, cfg.anchor[1]],
        [cfg.anchor[0] + half, cfg.anchor[1]],
    )
    .map_err(|_| {
        Error::DegenerateGeometry(format!(
            "eye centers coincide in subject {}, sequence {}, frame {}",
            frame.subject_id, frame.sequence_id, frame.frame_index
        ))
    })?;

    let image = resample_similarity(&frame.image, &fwd, cfg.canvas_width, cfg.canvas_height);
    let landmarks = frame.landmarks.map(|p| fwd.apply(p));
    Ok(Frame {
        image,
        landmarks,
        au: frame.au.clone(),
        pain: frame.pain,
        subject_id: frame.subject_id.clone(),
        sequence_id: frame.sequence_id.clone(),
        frame_index: frame.frame_index,
    })
}
