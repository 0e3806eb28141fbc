//! The five pain-relevant regions of interest on the normalized face.
//!
//! Each region is a rectangle anchored at a landmark centroid, offset and
//! sized in fractions of the inter-ocular distance so one specification fits
//! every normalized face.

use ndarray::Array2;

use super::Frame;
use crate::error::{Error, Result};

/// One rectangular region relative to its anchor landmarks.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RoiRegion {
    pub name: String,
    /// Landmark indices whose centroid anchors the rectangle.
    pub anchor: Vec<usize>,
    /// Center offset from the anchor in IOD fractions (x right, y down).
    pub offset: [f64; 2],
    /// Rectangle width and height in IOD fractions.
    pub size: [f64; 2],
}

/// The five regions plus the eye landmark indices the IOD is measured from.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RoiSpec {
    pub left_eye_idx: usize,
    pub right_eye_idx: usize,
    pub regions: Vec<RoiRegion>,
}

impl Default for RoiSpec {
    /// Default geometry for the synthetic landmark layout: eye centers at 0/1,
    /// mouth outline at 13..=20.
    fn default() -> Self {
        let mouth: Vec<usize> = (13..=20).collect();
        RoiSpec {
            left_eye_idx: 0,
            right_eye_idx: 1,
            regions: vec![
                RoiRegion {
                    name: "left_eye_brow".into(),
                    anchor: vec![0],
                    offset: [0.0, -0.15],
                    size: [0.9, 0.7],
                },
                RoiRegion {
                    name: "right_eye_brow".into(),
                    anchor: vec![1],
                    offset: [0.0, -0.15],
                    size: [0.9, 0.7],
                },
                RoiRegion {
                    name: "glabella".into(),
                    anchor: vec![0, 1],
                    offset: [0.0, -0.35],
                    size: [0.8, 0.5],
                },
                RoiRegion {
                    name: "nose_nasolabial".into(),
                    anchor: vec![0, 1],
                    offset: [0.0, 0.55],
                    size: [0.8, 0.6],
                },
                RoiRegion {
                    name: "mouth".into(),
                    anchor: mouth,
                    offset: [0.0, 0.0],
                    size: [1.2, 0.7],
                },
            ],
        }
    }
}

impl RoiSpec {
    pub fn validate(&self) -> Result<()> {
        if self.regions.len() != crate::hot::N_REGIONS {
            return Err(Error::InvalidParam(format!(
                "expected {} regions, got {}",
                crate::hot::N_REGIONS,
                self.regions.len()
            )));
        }
        for r in &self.regions {
            if r.anchor.is_empty() {
                return Err(Error::InvalidParam(format!(
                    "region '{}' has no anchor landmarks",
                    r.name
                )));
            }
            for &k in &r.anchor {
                if k >= super::N_LANDMARKS {
                    return Err(Error::InvalidParam(format!(
                        "region '{}' anchors landmark {k} out of range",
                        r.name
                    )));
                }
            }
            if !(r.size[0] > 0.0 && r.size[1] > 0.0) {
                return Err(Error::DegenerateGeometry(format!(
                    "region '{}' has non-positive size {:?}",
                    r.name, r.size
                )));
            }
        }
        Ok(())
    }
}

/// One extracted region.
#[derive(Debug, Clone)]
pub struct RoiPatch {
    pub name: String,
    pub pixels: Array2<f64>,
    /// Pixel rectangle (x0, y0, x1, y1), end-exclusive, after clamping.
    pub rect: (usize, usize, usize, usize),
    /// Whether the ideal rectangle had to be clamped to the image bounds.
    pub clamped: bool,
}

impl RoiPatch {
    pub fn center(&self) -> [f64; 2] {
        [
            (self.rect.0 + self.rect.2) as f64 / 2.0,
            (self.rect.1 + self.rect.3) as f64 / 2.0,
        ]
    }
}

/// Cut the five regions out of a normalized frame, in spec order.
pub fn extract_rois(frame: &Frame, spec: &RoiSpec) -> Result<Vec<RoiPatch>> {
    spec.validate()?;
    let (h, w) = frame.dims();
    let le = frame.landmarks.point(spec.left_eye_idx);
    let re = frame.landmarks.point(spec.right_eye_idx);
    let iod = ((re[0] - le[0]).powi(2) + (re[1] - le[1]).powi(2)).sqrt();
    if iod < 1e-9 {
        return Err(Error::DegenerateGeometry("zero inter-ocular distance".into()));
    }

    let mut patches = Vec::with_capacity(spec.regions.len());
    for region in &spec.regions {
        let c = frame.landmarks.centroid(&region.anchor);
        let cx = c[0] + region.offset[0] * iod;
        let cy = c[1] + region.offset[1] * iod;
        let half_w = region.size[0] * iod / 2.0;
        let half_h = region.size[1] * iod / 2.0;

        let ix0 = (cx - half_w).round() as isize;
        let ix1 = (cx + half_w).round() as isize;
        let iy0 = (cy - half_h).round() as isize;
        let iy1 = (cy + half_h).round() as isize;
        if ix1 <= 0 || iy1 <= 0 || ix0 >= w as isize || iy0 >= h as isize {
            return Err(Error::RoiOutsideImage {
                region: region.name.clone(),
                width: w,
                height: h,
            });
        }
        let clamped = ix0 < 0 || iy0 < 0 || ix1 > w as isize || iy1 > h as isize;
        let x0 = ix0.max(0) as usize;
        let y0 = iy0.max(0) as usize;
        let x1 = (ix1 as usize).min(w);
        let y1 = (iy1 as usize).min(h);
        if x1 <= x0 || y1 <= y0 {
            return Err(Error::DegenerateGeometry(format!(
                "region '{}' collapses to zero area",
                region.name
            )));
        }
        let pixels = frame
            .image
            .slice(ndarray::s![y0..y1, x0..x1])
            .to_owned();
        patches.push(RoiPatch {
            name: region.name.clone(),
            pixels,
            rect: (x0, y0, x1, y1),
            clamped,
        });
    }
    Ok(patches)
}
