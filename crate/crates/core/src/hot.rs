//! Histograms of Topographical features.
//!
//! Six normalized 8-bin histograms per region: four over Hessian eigen-data
//! (hard and soft curvature-orientation voting, a range histogram of the
//! larger eigenvalue and one of the eigenvalue spread) and two over the
//! gradient (gated orientation voting and a magnitude range histogram).
//! Concatenated over the five face regions they form the 240-dimensional
//! descriptor, split into a 160-value Hessian part and an 80-value gradient
//! part.

use crate::data::{extract_rois, Frame, RoiSpec};
use crate::error::{Error, Result};
use crate::scalespace::{scale_derivatives, ScaleParams, TopoField};

pub const N_BINS: usize = 8;
pub const N_REGIONS: usize = 5;
pub const HESS_HISTS: usize = 4;
pub const GRAD_HISTS: usize = 2;
pub const HESS_DIM: usize = N_REGIONS * HESS_HISTS * N_BINS;
pub const GRAD_DIM: usize = N_REGIONS * GRAD_HISTS * N_BINS;

/// Histogram thresholds and value ranges.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HotParams {
    /// Bins per histogram.
    pub n_bins: usize,
    /// Curvature gate for hard orientation voting.
    pub t_lambda: f64,
    /// Gradient-magnitude gate for orientation voting.
    pub t_grad: f64,
    /// Upper end of the lambda2 range histogram.
    pub m_lambda2: f64,
    /// Upper end of the eigenvalue-spread range histogram.
    pub m_lambda12: f64,
    /// Upper end of the gradient-magnitude range histogram.
    pub m_gradmag: f64,
}

impl Default for HotParams {
    fn default() -> Self {
        HotParams {
            n_bins: N_BINS,
            t_lambda: 0.1,
            t_grad: 5.0,
            m_lambda2: 30.0,
            m_lambda12: 50.0,
            m_gradmag: 100.0,
        }
    }
}

impl HotParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_bins < 2 {
            return Err(Error::InvalidParam(format!(
                "n_bins must be >= 2, got {}",
                self.n_bins
            )));
        }
        for (name, v) in [
            ("t_lambda", self.t_lambda),
            ("t_grad", self.t_grad),
            ("m_lambda2", self.m_lambda2),
            ("m_lambda12", self.m_lambda12),
            ("m_gradmag", self.m_gradmag),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParam(format!(
                    "{name} must be finite and > 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// The 240-dimensional face descriptor, region-major, histogram-minor.
///
/// `hess` holds H1..H4 per region (5 x 4 x 8 = 160 values), `grad` holds
/// G1..G2 per region (5 x 2 x 8 = 80 values).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HoTDescriptor {
    pub hess: Vec<f64>,
    pub grad: Vec<f64>,
}

impl HoTDescriptor {
    /// L1 distance over the concatenated descriptor.
    pub fn l1_distance(&self, other: &HoTDescriptor) -> f64 {
        self.hess
            .iter()
            .zip(&other.hess)
            .chain(self.grad.iter().zip(&other.grad))
            .map(|(a, b)| (a - b).abs())
            .sum()
    }
}

/// Orientation bin of an angle in degrees, half-open 45-degree bins on [0, 360).
#[inline]
fn orientation_bin(theta_deg: f64, n_bins: usize) -> usize {
    let width = 360.0 / n_bins as f64;
    let b = (theta_deg / width).floor() as isize;
    (b.rem_euclid(n_bins as isize)) as usize
}

/// Range bin over [0, max) with half-open bins; values >= max clamp into the
/// last bin. Caller filters negatives when the histogram ignores them.
#[inline]
fn range_bin(value: f64, max: f64, n_bins: usize) -> usize {
    let width = max / n_bins as f64;
    let b = (value / width).floor() as usize;
    b.min(n_bins - 1)
}

fn normalize(mut hist: Vec<f64>, total: f64) -> Vec<f64> {
    if total > 1e-12 {
        for v in &mut hist {
            *v /= total;
        }
    } else {
        for v in &mut hist {
            *v = 0.0;
        }
    }
    hist
}

/// Hard voting of curvature orientation: pixels with lambda2 above the gate
/// add one vote to their theta bin.
pub fn hist_hard_orientation(field: &TopoField, params: &HotParams) -> Vec<f64> {
    let mut hist = vec![0.0; params.n_bins];
    let mut total = 0.0;
    for ((l2, theta), _) in field
        .lambda2
        .iter()
        .zip(field.theta_lambda.iter())
        .zip(field.lambda1.iter())
    {
        if *l2 > params.t_lambda {
            hist[orientation_bin(*theta, params.n_bins)] += 1.0;
            total += 1.0;
        }
    }
    normalize(hist, total)
}

/// Soft voting of ridge orientation: every pixel adds its eigenvalue spread
/// to its theta bin.
pub fn hist_soft_orientation(field: &TopoField, params: &HotParams) -> Vec<f64> {
    let mut hist = vec![0.0; params.n_bins];
    let mut total = 0.0;
    for ((l1, l2), theta) in field
        .lambda1
        .iter()
        .zip(field.lambda2.iter())
        .zip(field.theta_lambda.iter())
    {
        let spread = l2 - l1;
        hist[orientation_bin(*theta, params.n_bins)] += spread;
        total += spread;
    }
    normalize(hist, total)
}

/// Range histogram of lambda2 over [0, m_lambda2); negatives are ignored,
/// values past the top clamp into the last bin.
pub fn hist_lambda2(field: &TopoField, params: &HotParams) -> Vec<f64> {
    let mut hist = vec![0.0; params.n_bins];
    let mut total = 0.0;
    for l2 in field.lambda2.iter() {
        if *l2 < 0.0 {
            continue;
        }
        hist[range_bin(*l2, params.m_lambda2, params.n_bins)] += 1.0;
        total += 1.0;
    }
    normalize(hist, total)
}

/// Range histogram of the eigenvalue spread lambda2 - lambda1 over
/// [0, m_lambda12), clamp at top.
pub fn hist_lambda_diff(field: &TopoField, params: &HotParams) -> Vec<f64> {
    let mut hist = vec![0.0; params.n_bins];
    let mut total = 0.0;
    for (l1, l2) in field.lambda1.iter().zip(field.lambda2.iter()) {
        let spread = l2 - l1;
        hist[range_bin(spread, params.m_lambda12, params.n_bins)] += 1.0;
        total += 1.0;
    }
    normalize(hist, total)
}

/// Gradient orientation voting gated on magnitude.
pub fn hist_grad_orientation(field: &TopoField, params: &HotParams) -> Vec<f64> {
    let mut hist = vec![0.0; params.n_bins];
    let mut total = 0.0;
    for (mag, ori) in field.grad_mag.iter().zip(field.grad_ori.iter()) {
        if *mag > params.t_grad {
            hist[orientation_bin(*ori, params.n_bins)] += 1.0;
            total += 1.0;
        }
    }
    normalize(hist, total)
}

/// Range histogram of gradient magnitude over [0, m_gradmag); every pixel
/// counts, top values clamp.
pub fn hist_grad_magnitude(field: &TopoField, params: &HotParams) -> Vec<f64> {
    let mut hist = vec![0.0; params.n_bins];
    let mut total = 0.0;
    for mag in field.grad_mag.iter() {
        hist[range_bin(*mag, params.m_gradmag, params.n_bins)] += 1.0;
        total += 1.0;
    }
    normalize(hist, total)
}

/// All six histograms of one field, in layout order.
pub fn region_histograms(field: &TopoField, params: &HotParams) -> (Vec<f64>, Vec<f64>) {
    let mut hess = Vec::with_capacity(HESS_HISTS * params.n_bins);
    hess.extend(hist_hard_orientation(field, params));
    hess.extend(hist_soft_orientation(field, params));
    hess.extend(hist_lambda2(field, params));
    hess.extend(hist_lambda_diff(field, params));
    let mut grad = Vec::with_capacity(GRAD_HISTS * params.n_bins);
    grad.extend(hist_grad_orientation(field, params));
    grad.extend(hist_grad_magnitude(field, params));
    (hess, grad)
}

/// Describe a normalized face: per region, compute the topographical field
/// and its six histograms, then concatenate region-major.
pub fn describe_face(
    frame: &Frame,
    roi: &RoiSpec,
    scale: &ScaleParams,
    params: &HotParams,
) -> Result<HoTDescriptor> {
    params.validate()?;
    let patches = extract_rois(frame, roi)?;
    let mut hess = Vec::with_capacity(N_REGIONS * HESS_HISTS * params.n_bins);
    let mut grad = Vec::with_capacity(N_REGIONS * GRAD_HISTS * params.n_bins);
    for patch in &patches {
        let field = scale_derivatives(&patch.pixels, scale)?;
        let (h, g) = region_histograms(&field, params);
        hess.extend(h);
        grad.extend(g);
    }
    Ok(HoTDescriptor { hess, grad })
}
