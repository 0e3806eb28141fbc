//! Cross-module integration checks: the synthetic generator feeding the
//! normalization, descriptor and filtering stages.

use topo_pain_core::data::{
    load_manifest, normalize_face, resample_similarity, save_dataset, synth_dataset,
    NormalizeConfig, RoiSpec, Similarity,
};
use topo_pain_core::hot::{describe_face, HotParams};
use topo_pain_core::learn::FrameFeatures;
use topo_pain_core::scalespace::ScaleParams;
use topo_pain_core::temporal::{
    filter_median_lr, train_temporal_filter, FilterConfig, FilterRegressor,
};
use topo_pain_core::Frame;

fn descriptor(frame: &Frame) -> topo_pain_core::HoTDescriptor {
    let norm = normalize_face(frame, &NormalizeConfig::default()).unwrap();
    describe_face(
        &norm,
        &RoiSpec::default(),
        &ScaleParams::default(),
        &HotParams::default(),
    )
    .unwrap()
}

/// Rotating a face before normalization must not change the normalized
/// image noticeably: both paths use the same resampler.
#[test]
fn normalization_undoes_a_ten_degree_rotation() {
    let data = synth_dataset(21, 2, 5).unwrap();
    let frame = &data[0].frames()[2];
    let (h, w) = frame.dims();
    let center = [w as f64 / 2.0, h as f64 / 2.0];
    let rot = Similarity::rotation_about(center, 10.0, 1.0);
    let rotated_image = resample_similarity(&frame.image, &rot, w, h);
    let rotated = Frame::new(
        rotated_image,
        frame.landmarks.map(|p| rot.apply(p)),
        frame.au.clone(),
        frame.pain,
        frame.subject_id.clone(),
        frame.sequence_id.clone(),
        frame.frame_index,
    )
    .unwrap();

    let cfg = NormalizeConfig::default();
    let base = normalize_face(frame, &cfg).unwrap();
    let via_rotation = normalize_face(&rotated, &cfg).unwrap();

    // compare inside the face box around the canonical eye anchor
    let (x0, x1, y0, y1) = (24usize, 104usize, 24usize, 112usize);
    let mut sum = 0.0;
    let mut count = 0.0;
    for y in y0..y1 {
        for x in x0..x1 {
            sum += (base.image[[y, x]] - via_rotation.image[[y, x]]).abs();
            count += 1.0;
        }
    }
    let mad = sum / count;
    assert!(mad < 2.0, "mean absolute difference {mad} intensity levels");
}

/// Apex-pain frames must be far from rest frames in descriptor space,
/// clearly beyond the pose-jitter baseline between two rest frames.
#[test]
fn pain_moves_descriptors_beyond_jitter_baseline() {
    let data = synth_dataset(33, 4, 80).unwrap();
    for seq in &data {
        let frames = seq.frames();
        let pains: Vec<f64> = frames.iter().map(|f| f.pain.unwrap()).collect();

        // two distinct rest frames and the apex frame
        let rest: Vec<usize> = (0..frames.len()).filter(|&i| pains[i] == 0.0).collect();
        assert!(rest.len() >= 2, "not enough rest frames");
        let apex = (0..frames.len())
            .max_by(|&a, &b| pains[a].partial_cmp(&pains[b]).unwrap())
            .unwrap();
        assert!(pains[apex] > 3.0);

        let d_rest0 = descriptor(&frames[rest[0]]);
        let d_rest1 = descriptor(&frames[*rest.last().unwrap()]);
        let d_apex = descriptor(&frames[apex]);

        let baseline = d_rest0.l1_distance(&d_rest1);
        let pain_dist = d_rest0.l1_distance(&d_apex);
        assert!(
            pain_dist > baseline,
            "{}: pain distance {pain_dist} not above baseline {baseline}",
            seq.subject_id()
        );
        assert!(
            pain_dist >= 3.0 * baseline,
            "{}: pain distance {pain_dist} under 3x baseline {baseline}",
            seq.subject_id()
        );
    }
}

/// Dataset save/load is the identity on the data model.
#[test]
fn dataset_round_trips_through_disk() {
    let data = synth_dataset(5, 2, 6).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = save_dataset(dir.path(), &data).unwrap();
    let loaded = load_manifest(&manifest).unwrap();
    assert_eq!(data.len(), loaded.len());
    for (a, b) in data.iter().zip(&loaded) {
        assert_eq!(a.subject_id(), b.subject_id());
        assert_eq!(a.len(), b.len());
        for (fa, fb) in a.frames().iter().zip(b.frames()) {
            assert_eq!(fa.image, fb.image, "pixels must round-trip exactly");
            assert_eq!(fa.landmarks, fb.landmarks);
            assert_eq!(fa.pain, fb.pain);
            assert_eq!(fa.au, fb.au);
            assert_eq!(fa.frame_index, fb.frame_index);
        }
    }
}

/// Build (estimate, clean-truth) traces from generated sequences: the
/// estimate is the stored score (with blink spikes), the truth is the same
/// trace with the eyes-closed contribution removed.
fn blink_traces(seed: u64, subjects: usize, frames: usize) -> Vec<(Vec<f64>, Vec<f64>, Vec<bool>)> {
    let data = synth_dataset(seed, subjects, frames).unwrap();
    data.iter()
        .map(|seq| {
            let mut est = Vec::new();
            let mut truth = Vec::new();
            let mut spike = Vec::new();
            for f in seq.frames() {
                let au = f.au.as_ref().unwrap();
                let with_blink = f.pain.unwrap();
                let blink = au[&43] > 0.5;
                est.push(with_blink);
                truth.push(with_blink - au[&43]);
                spike.push(blink);
            }
            (est, truth, spike)
        })
        .collect()
}

/// Learned strict-ordering filtering must cut blink-frame error at least in
/// half relative to the unfiltered estimates.
#[test]
fn strict_ordering_svr_suppresses_blink_spikes() {
    let train: Vec<(Vec<f64>, Vec<f64>)> = blink_traces(61, 6, 120)
        .into_iter()
        .map(|(e, t, _)| (e, t))
        .collect();
    let config = FilterConfig {
        seed: 13,
        ..FilterConfig::strict_ordering(FilterRegressor::Svr)
    };
    let filter = train_temporal_filter(&train, &config).unwrap();

    let test = blink_traces(62, 3, 120);
    let mut err_unfiltered = 0.0;
    let mut err_filtered = 0.0;
    let mut count = 0.0;
    for (est, truth, spikes) in &test {
        let filtered = filter.apply(est).unwrap();
        for i in 0..est.len() {
            if spikes[i] {
                err_unfiltered += (est[i] - truth[i]).abs();
                err_filtered += (filtered[i] - truth[i]).abs();
                count += 1.0;
            }
        }
    }
    assert!(count > 0.0, "test data produced no blink frames");
    let reduction = 1.0 - err_filtered / err_unfiltered;
    assert!(
        reduction >= 0.5,
        "blink error reduced only {:.1}% ({} -> {})",
        100.0 * reduction,
        err_unfiltered / count,
        err_filtered / count
    );
}

/// The plain median filter also helps on blink frames in aggregate; its
/// half-window exceeds the blink duration so isolated spikes flatten out
/// (overlapping blinks can still defeat a single window).
#[test]
fn median_lr_flattens_blinks() {
    let mut raw_err = 0.0;
    let mut filt_err = 0.0;
    for (est, truth, spikes) in blink_traces(63, 4, 120) {
        let filtered = filter_median_lr(&est, 21).unwrap();
        for i in 0..est.len() {
            if spikes[i] {
                raw_err += (est[i] - truth[i]).abs();
                filt_err += (filtered[i] - truth[i]).abs();
            }
        }
    }
    assert!(
        filt_err < raw_err,
        "median filter did not reduce blink error: {filt_err} vs {raw_err}"
    );
}

/// Extracted feature rows keep the subject/sequence identity needed by the
/// protocol audits.
#[test]
fn features_carry_identity() {
    use topo_pain_core::features::extract_features;
    let data = synth_dataset(9, 2, 4).unwrap();
    let feats: Vec<FrameFeatures> = extract_features(
        &data,
        &NormalizeConfig::default(),
        &RoiSpec::default(),
        &ScaleParams::default(),
        &HotParams::default(),
    )
    .unwrap();
    assert_eq!(feats[0].subject, "s00");
    assert_eq!(feats.last().unwrap().subject, "s01");
    assert!(feats.iter().all(|f| f.sequence == "q0"));
}

/// After normalization every frame's eye landmarks sit on one horizontal
/// line exactly 50 pixels apart.
#[test]
fn normalized_eye_contract_holds_for_every_frame() {
    let cfg = NormalizeConfig::default();
    for seq in synth_dataset(77, 3, 40).unwrap() {
        for frame in seq.frames() {
            let out = normalize_face(frame, &cfg).unwrap();
            let l = out.landmarks.point(cfg.left_eye_idx);
            let r = out.landmarks.point(cfg.right_eye_idx);
            assert!((l[1] - r[1]).abs() < 1e-6, "eye line tilted");
            let d = ((r[0] - l[0]).powi(2) + (r[1] - l[1]).powi(2)).sqrt();
            assert!((d - cfg.iod).abs() < 1e-6, "iod {d}");
        }
    }
}
