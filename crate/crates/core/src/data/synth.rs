//! Synthetic face-sequence generator.
//!
//! Renders parametric faces: Gaussian-blob eyes, ridge brows, glabella
//! wrinkles, nasolabial folds and a lip line, all drawn as dark structures
//! on a lighter face. Curvature amplitudes scale monotonically with a latent
//! pain value following a smooth onset-apex-offset profile; short blink
//! events close the eyes and raise the stored score through the eyes-closed
//! action unit. Subjects differ by seeded geometry jitter, frames by small
//! head-pose jitter, so the normalization stage has real work to do.

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use super::{AuMap, Frame, Landmarks, Sequence, Similarity};
use crate::error::{Error, Result};

/// Blink duration in frames. Real blinks stay under fifteen frames; eight
/// keeps the spike well inside the learned-filter windows.
pub const BLINK_FRAMES: usize = 8;

/// Generator tunables.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SynthConfig {
    /// Square canvas side in pixels.
    pub canvas: usize,
    /// Background intensity.
    pub background: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            canvas: 140,
            background: 205.0,
        }
    }
}

/// Per-subject face geometry and expressiveness, jittered once per subject.
struct SubjectGeometry {
    cx: f64,
    eye_y: f64,
    /// Half the inter-ocular distance.
    ehd: f64,
    nose_dy: f64,
    mouth_dy: f64,
    brow_dy: f64,
    /// Per-AU expressiveness multipliers.
    w4: f64,
    w6: f64,
    w7: f64,
    w9: f64,
    w10: f64,
}

impl SubjectGeometry {
    fn sample(rng: &mut ChaCha8Rng, canvas: f64) -> Self {
        let c = canvas / 2.0;
        SubjectGeometry {
            cx: c + rng.random_range(-3.0..3.0),
            eye_y: 0.41 * canvas + rng.random_range(-3.0..3.0),
            ehd: 0.185 * canvas + rng.random_range(-1.5..1.5),
            nose_dy: 1.15 + rng.random_range(-0.05..0.05),
            mouth_dy: 1.90 + rng.random_range(-0.08..0.08),
            brow_dy: 0.45 + rng.random_range(-0.04..0.04),
            w4: rng.random_range(0.85..1.15),
            w6: rng.random_range(0.85..1.15),
            w7: rng.random_range(0.85..1.15),
            w9: rng.random_range(0.85..1.15),
            w10: rng.random_range(0.85..1.15),
        }
    }
}

/// Smooth onset-apex-offset profile in [0, 1] over `n` frames.
fn pain_profile(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let nf = n as f64;
    let apex = rng.random_range(0.55..1.0);
    let onset = nf * rng.random_range(0.12..0.25);
    let rise = (nf * rng.random_range(0.12..0.2)).max(1.0);
    let offset_start = nf * rng.random_range(0.55..0.7);
    let fall = (nf * rng.random_range(0.15..0.25)).max(1.0);
    let ramp = |u: f64| -> f64 {
        // raised cosine from 0 to 1 on [0, 1]
        let u = u.clamp(0.0, 1.0);
        0.5 - 0.5 * (std::f64::consts::PI * u).cos()
    };
    (0..n)
        .map(|t| {
            let t = t as f64;
            let up = ramp((t - onset) / rise);
            let down = 1.0 - ramp((t - offset_start) / fall);
            apex * up.min(down).max(0.0)
        })
        .collect()
}

/// Frames at which a blink is active.
fn blink_mask(rng: &mut ChaCha8Rng, n: usize) -> Vec<bool> {
    let mut mask = vec![false; n];
    if n < BLINK_FRAMES + 2 {
        return mask;
    }
    let expected = (n / 40).max(1);
    let count = rng.random_range(expected..=expected + 2);
    for _ in 0..count {
        let start = rng.random_range(0..n - BLINK_FRAMES);
        for m in mask.iter_mut().skip(start).take(BLINK_FRAMES) {
            *m = true;
        }
    }
    mask
}

fn add_blob(img: &mut Array2<f64>, cx: f64, cy: f64, sx: f64, sy: f64, amp: f64) {
    let (h, w) = img.dim();
    let rx = (4.0 * sx).ceil() as isize;
    let ry = (4.0 * sy).ceil() as isize;
    let x0 = ((cx as isize) - rx).max(0) as usize;
    let x1 = (((cx as isize) + rx + 1).max(0) as usize).min(w);
    let y0 = ((cy as isize) - ry).max(0) as usize;
    let y1 = (((cy as isize) + ry + 1).max(0) as usize).min(h);
    for y in y0..y1 {
        for x in x0..x1 {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            img[[y, x]] -= amp * (-(dx * dx / (2.0 * sx * sx) + dy * dy / (2.0 * sy * sy))).exp();
        }
    }
}

/// Dark ridge along the segment p0-p1 with Gaussian cross-profile.
fn add_ridge(img: &mut Array2<f64>, p0: [f64; 2], p1: [f64; 2], width: f64, amp: f64) {
    if amp <= 0.0 {
        return;
    }
    let (h, w) = img.dim();
    let margin = (4.0 * width).ceil();
    let x0 = ((p0[0].min(p1[0]) - margin).floor().max(0.0)) as usize;
    let x1 = ((p0[0].max(p1[0]) + margin).ceil() as usize + 1).min(w);
    let y0 = ((p0[1].min(p1[1]) - margin).floor().max(0.0)) as usize;
    let y1 = ((p0[1].max(p1[1]) + margin).ceil() as usize + 1).min(h);
    let ex = p1[0] - p0[0];
    let ey = p1[1] - p0[1];
    let len2 = (ex * ex + ey * ey).max(1e-12);
    for y in y0..y1 {
        for x in x0..x1 {
            let dx = x as f64 - p0[0];
            let dy = y as f64 - p0[1];
            let t = ((dx * ex + dy * ey) / len2).clamp(0.0, 1.0);
            let qx = dx - t * ex;
            let qy = dy - t * ey;
            let d2 = qx * qx + qy * qy;
            img[[y, x]] -= amp * (-d2 / (2.0 * width * width)).exp();
        }
    }
}

struct FaceDrawing {
    landmarks: Vec<[f64; 2]>,
    image: Array2<f64>,
}

/// Render one face with the given AU intensities under a head-pose transform.
fn render_face(
    geo: &SubjectGeometry,
    au: &AuMap,
    pose: &Similarity,
    cfg: &SynthConfig,
) -> FaceDrawing {
    let n = cfg.canvas;
    let mut img = Array2::from_elem((n, n), cfg.background);
    let e = geo.ehd;
    let cx = geo.cx;
    let ey = geo.eye_y;
    let au4 = au[&4] / 5.0;
    let au67 = au[&6].max(au[&7]) / 5.0;
    let au910 = au[&9].max(au[&10]) / 5.0;
    let blink = au[&43] > 0.5;
    let pain_level = (au4 + au67 + au910) / 3.0;

    let p = |x: f64, y: f64| pose.apply([x, y]);
    let scale = (pose.a * pose.a + pose.b * pose.b).sqrt();

    // broad face vignette gives the skin a gentle gradient
    let center = p(cx, ey + 0.9 * e);
    add_blob(&mut img, center[0], center[1], 2.4 * e * scale, 3.0 * e * scale, -28.0);

    let mut lm: Vec<[f64; 2]> = Vec::with_capacity(super::N_LANDMARKS);

    // 0, 1: eyes
    for side in [-1.0f64, 1.0] {
        let ecx = cx + side * e;
        lm.push(p(ecx, ey));
        if blink {
            let a = p(ecx - 0.28 * e, ey);
            let b = p(ecx + 0.28 * e, ey);
            add_ridge(&mut img, a, b, 1.2 * scale, 78.0);
        } else {
            let q = p(ecx, ey);
            let sx = 0.17 * e * scale;
            let sy = sx * (0.80 - 0.42 * au67);
            add_blob(&mut img, q[0], q[1], sx, sy, 115.0);
        }
        // lid-tightening fold below the eye
        if au67 > 0.0 {
            let a = p(ecx - 0.22 * e, ey + 0.30 * e);
            let b = p(ecx + 0.22 * e, ey + 0.30 * e);
            add_ridge(&mut img, a, b, 1.3 * scale, 42.0 * au67);
        }
    }

    // 2..=9: brows, four points each, lowered and deepened by AU4
    let brow_y = ey - geo.brow_dy * e + 0.12 * e * au4;
    let brow_amp = 48.0 * (1.0 + 0.85 * au4);
    for side in [-1.0f64, 1.0] {
        let ecx = cx + side * e;
        let inner = ecx - side * 0.45 * e;
        let outer = ecx + side * 0.45 * e;
        let a = p(inner, brow_y + 0.05 * e);
        let b = p(outer, brow_y - 0.05 * e);
        add_ridge(&mut img, a, b, 1.9 * scale, brow_amp);
        for k in 0..4 {
            let t = k as f64 / 3.0;
            lm.push(p(
                inner + (outer - inner) * t,
                brow_y + 0.05 * e - 0.10 * e * t,
            ));
        }
    }

    // glabella wrinkles appear with brow lowering
    if au4 > 0.0 {
        for side in [-1.0f64, 1.0] {
            let gx = cx + side * 0.14 * e;
            let a = p(gx, ey - 0.62 * e);
            let b = p(gx, ey - 0.18 * e);
            add_ridge(&mut img, a, b, 1.4 * scale, 52.0 * au4);
        }
    }

    // 10..=12: nose tip and wings
    let nose_y = ey + geo.nose_dy * e;
    lm.push(p(cx, nose_y - 0.15 * e));
    for side in [-1.0f64, 1.0] {
        let q = p(cx + side * 0.24 * e, nose_y);
        add_blob(&mut img, q[0], q[1], 0.09 * e * scale, 0.07 * e * scale, 58.0);
        lm.push(p(cx + side * 0.24 * e, nose_y));
    }
    // nose wrinkle rises with AU9
    if au[&9] > 0.0 {
        let a = p(cx - 0.18 * e, nose_y - 0.55 * e);
        let b = p(cx + 0.18 * e, nose_y - 0.55 * e);
        add_ridge(&mut img, a, b, 1.4 * scale, 40.0 * au[&9] / 5.0);
    }
    // nasolabial folds deepen with AU9/AU10
    if au910 > 0.0 {
        let mouth_y = ey + geo.mouth_dy * e;
        for side in [-1.0f64, 1.0] {
            let a = p(cx + side * 0.26 * e, nose_y + 0.05 * e);
            let b = p(cx + side * 0.58 * e, mouth_y - 0.18 * e);
            add_ridge(&mut img, a, b, 1.7 * scale, 55.0 * au910);
        }
    }

    // 13..=20: mouth outline around the lip line
    let mouth_y = ey + geo.mouth_dy * e;
    let half_mouth = (0.52 + 0.10 * pain_level) * e;
    let lift = 0.06 * e;
    let left = [cx - half_mouth, mouth_y];
    let right = [cx + half_mouth, mouth_y];
    add_ridge(&mut img, p(left[0], left[1]), p(right[0], right[1]), 1.6 * scale, 62.0);
    // parted lips add a second, lower edge as pain rises
    if pain_level > 0.0 {
        let drop = (0.10 + 0.10 * pain_level) * e;
        add_ridge(
            &mut img,
            p(cx - 0.8 * half_mouth, mouth_y + drop),
            p(cx + 0.8 * half_mouth, mouth_y + drop),
            1.5 * scale,
            48.0 * pain_level,
        );
    }
    let mouth_pts = [
        [cx - half_mouth, mouth_y],
        [cx - 0.5 * half_mouth, mouth_y - lift],
        [cx, mouth_y - lift],
        [cx + 0.5 * half_mouth, mouth_y - lift],
        [cx + half_mouth, mouth_y],
        [cx + 0.5 * half_mouth, mouth_y + lift],
        [cx, mouth_y + lift],
        [cx - 0.5 * half_mouth, mouth_y + lift],
    ];
    for q in mouth_pts {
        lm.push(p(q[0], q[1]));
    }

    // 21: chin
    lm.push(p(cx, mouth_y + 0.75 * e));

    // quantize to the 8-bit grid so saved and in-memory datasets agree
    img.mapv_inplace(|v| v.round().clamp(0.0, 255.0));
    FaceDrawing {
        landmarks: lm,
        image: img,
    }
}

fn au_from_latent(geo: &SubjectGeometry, s: f64, blink: bool) -> AuMap {
    let clamp5 = |v: f64| v.clamp(0.0, 5.0);
    let mut au = AuMap::new();
    au.insert(4, clamp5(4.2 * s * geo.w4));
    au.insert(6, clamp5(4.3 * s * geo.w6));
    au.insert(7, clamp5(3.4 * s * geo.w7));
    au.insert(9, clamp5(4.3 * s * geo.w9));
    au.insert(10, clamp5(3.2 * s * geo.w10));
    au.insert(43, if blink { 1.0 } else { 0.0 });
    au
}

/// Generate a deterministic synthetic dataset: one sequence per subject.
pub fn synth_dataset(
    seed: u64,
    n_subjects: usize,
    frames_per_seq: usize,
) -> Result<Vec<Sequence>> {
    synth_dataset_with(seed, n_subjects, frames_per_seq, &SynthConfig::default())
}

pub fn synth_dataset_with(
    seed: u64,
    n_subjects: usize,
    frames_per_seq: usize,
    cfg: &SynthConfig,
) -> Result<Vec<Sequence>> {
    if n_subjects < 2 {
        return Err(Error::InvalidParam(format!(
            "need at least 2 subjects, got {n_subjects}"
        )));
    }
    if frames_per_seq < 3 {
        return Err(Error::InvalidParam(format!(
            "need at least 3 frames per sequence, got {frames_per_seq}"
        )));
    }
    if cfg.canvas < 64 {
        return Err(Error::InvalidParam(format!(
            "canvas {} too small for a face",
            cfg.canvas
        )));
    }

    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let subject_seeds: Vec<u64> = (0..n_subjects).map(|_| master.random()).collect();

    let mut sequences = Vec::with_capacity(n_subjects);
    for (k, &sseed) in subject_seeds.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(sseed);
        let geo = SubjectGeometry::sample(&mut rng, cfg.canvas as f64);
        let profile = pain_profile(&mut rng, frames_per_seq);
        let blinks = blink_mask(&mut rng, frames_per_seq);
        let subject = format!("s{k:02}");
        let sequence = "q0".to_string();

        let mut frames = Vec::with_capacity(frames_per_seq);
        for t in 0..frames_per_seq {
            let angle = rng.random_range(-4.0..4.0);
            let scale = 1.0 + rng.random_range(-0.03..0.03);
            let shift = [rng.random_range(-2.5..2.5), rng.random_range(-2.5..2.5)];
            let mut pose =
                Similarity::rotation_about([geo.cx, geo.eye_y + 0.5 * geo.ehd], angle, scale);
            pose.tx += shift[0];
            pose.ty += shift[1];

            let au = au_from_latent(&geo, profile[t], blinks[t]);
            let pain = crate::eval::prkachin_solomon(&au)?;
            let drawing = render_face(&geo, &au, &pose, cfg);
            let frame = Frame::new(
                drawing.image,
                Landmarks::new(drawing.landmarks)?,
                Some(au),
                Some(pain),
                subject.clone(),
                sequence.clone(),
                t as u32,
            )?;
            frames.push(frame);
        }
        sequences.push(Sequence::new(frames)?);
    }
    Ok(sequences)
}
