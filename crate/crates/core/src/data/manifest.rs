//! Manifest I/O: one JSON document per dataset, images referenced by
//! relative path as 8-bit grayscale PNG or PGM files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::{AuMap, Frame, Landmarks, Sequence, N_LANDMARKS};
use crate::error::{Error, Result};

#[derive(serde::Serialize, serde::Deserialize)]
struct ManifestDoc {
    sequences: Vec<SequenceDoc>,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct SequenceDoc {
    subject: String,
    sequence: String,
    frames: Vec<FrameDoc>,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct FrameDoc {
    image: String,
    landmarks: LandmarkDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    index: Option<u32>,
    pain: Option<f64>,
    au: Option<BTreeMap<String, f64>>,
}

/// Landmarks either inline as 22 [x, y] pairs or as a path to a 22-line
/// `x y` text file.
#[derive(serde::Serialize, serde::Deserialize)]
#[serde(untagged)]
enum LandmarkDoc {
    Points(Vec<[f64; 2]>),
    File(String),
}

/// Load a dataset manifest and every image and landmark file it references.
pub fn load_manifest(path: &Path) -> Result<Vec<Sequence>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: ManifestDoc = serde_json::from_str(&text)
        .map_err(|e| Error::manifest(path, format!("json parse failed: {e}")))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));

    let mut sequences = Vec::with_capacity(doc.sequences.len());
    for (si, sd) in doc.sequences.iter().enumerate() {
        let mut frames = Vec::with_capacity(sd.frames.len());
        for (fi, fd) in sd.frames.iter().enumerate() {
            let pos = format!(
                "sequence {si} ({}/{}), frame record {fi}",
                sd.subject, sd.sequence
            );
            let image = load_gray_image(&base.join(&fd.image))?;
            let points = match &fd.landmarks {
                LandmarkDoc::Points(p) => p.clone(),
                LandmarkDoc::File(rel) => load_landmark_file(&base.join(rel))?,
            };
            if points.len() != N_LANDMARKS {
                return Err(Error::LandmarkCount {
                    context: format!("{}: {pos}", path.display()),
                    found: points.len(),
                });
            }
            let landmarks = Landmarks::new(points)
                .map_err(|e| Error::manifest(path, format!("{pos}: {e}")))?;
            let au = fd.au.as_ref().map(|m| parse_au(m, path, &pos)).transpose()?;
            let index = fd.index.unwrap_or(fi as u32);
            let frame = Frame::new(
                image,
                landmarks,
                au,
                fd.pain,
                sd.subject.clone(),
                sd.sequence.clone(),
                index,
            )
            .map_err(|e| Error::manifest(path, format!("{pos}: {e}")))?;
            frames.push(frame);
        }
        let seq = Sequence::new(frames)
            .map_err(|e| Error::manifest(path, format!("sequence {si}: {e}")))?;
        sequences.push(seq);
    }
    Ok(sequences)
}

fn parse_au(m: &BTreeMap<String, f64>, path: &Path, pos: &str) -> Result<AuMap> {
    let mut au = AuMap::new();
    for (k, v) in m {
        let id: u8 = k.parse().map_err(|_| {
            Error::manifest(path, format!("{pos}: AU key '{k}' is not a number"))
        })?;
        au.insert(id, *v);
    }
    Ok(au)
}

/// Read an 8-bit grayscale PNG or PGM into a float array.
pub fn load_gray_image(path: &Path) -> Result<Array2<f64>> {
    let reader = image::ImageReader::open(path).map_err(|e| Error::io(path, e))?;
    let img = reader.decode().map_err(|e| Error::ImageDecode {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    let gray = match img {
        image::DynamicImage::ImageLuma8(g) => g,
        other => {
            return Err(Error::ImageDecode {
                path: path.to_path_buf(),
                detail: format!(
                    "expected 8-bit grayscale, found {:?}",
                    other.color()
                ),
            })
        }
    };
    let (w, h) = gray.dimensions();
    Ok(Array2::from_shape_fn((h as usize, w as usize), |(y, x)| {
        gray.get_pixel(x as u32, y as u32)[0] as f64
    }))
}

/// Write a float image (values 0..=255) as 8-bit grayscale PNG.
pub fn save_gray_image(path: &Path, image: &Array2<f64>) -> Result<()> {
    let (h, w) = image.dim();
    let mut buf = image::GrayImage::new(w as u32, h as u32);
    for ((y, x), v) in image.indexed_iter() {
        buf.put_pixel(x as u32, y as u32, image::Luma([v.round().clamp(0.0, 255.0) as u8]));
    }
    buf.save(path).map_err(|e| Error::ImageDecode {
        path: path.to_path_buf(),
        detail: format!("encode failed: {e}"),
    })
}

fn load_landmark_file(path: &Path) -> Result<Vec<[f64; 2]>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut pts = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let x: f64 = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::manifest(path, format!("line {}: bad x", ln + 1)))?;
        let y: f64 = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::manifest(path, format!("line {}: bad y", ln + 1)))?;
        pts.push([x, y]);
    }
    Ok(pts)
}

/// Serialize sequences back to a manifest document. Image files must already
/// exist at the recorded relative locations; this writes only the JSON.
pub fn save_manifest(
    path: &Path,
    sequences: &[Sequence],
    image_path: impl Fn(&Frame) -> String,
) -> Result<()> {
    let doc = ManifestDoc {
        sequences: sequences
            .iter()
            .map(|s| SequenceDoc {
                subject: s.subject_id().to_string(),
                sequence: s.sequence_id().to_string(),
                frames: s
                    .frames()
                    .iter()
                    .map(|f| FrameDoc {
                        image: image_path(f),
                        landmarks: LandmarkDoc::Points(f.landmarks.points().to_vec()),
                        index: Some(f.frame_index),
                        pain: f.pain,
                        au: f.au.as_ref().map(|m| {
                            m.iter().map(|(k, v)| (k.to_string(), *v)).collect()
                        }),
                    })
                    .collect(),
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&doc)
        .map_err(|e| Error::manifest(path, format!("serialize failed: {e}")))?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

/// Write a whole dataset: PNG images under `dir/images/` plus
/// `dir/manifest.json`. Returns the manifest path.
pub fn save_dataset(dir: &Path, sequences: &[Sequence]) -> Result<PathBuf> {
    let images = dir.join("images");
    std::fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    for seq in sequences {
        for f in seq.frames() {
            let rel = frame_image_name(f);
            save_gray_image(&dir.join(&rel), &f.image)?;
        }
    }
    let manifest = dir.join("manifest.json");
    save_manifest(&manifest, sequences, |f| frame_image_name(f))?;
    Ok(manifest)
}

fn frame_image_name(f: &Frame) -> String {
    format!(
        "images/{}_{}_{:04}.png",
        f.subject_id, f.sequence_id, f.frame_index
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_image_is_reported_with_path() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = dir.path().join("manifest.json");
        std::fs::write(
            &manifest,
            r#"{"sequences":[{"subject":"a","sequence":"b","frames":[
                {"image":"nope.png","landmarks":[[0,0]],"pain":null,"au":null}
            ]}]}"#,
        )
        .unwrap();
        let err = load_manifest(&manifest).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("nope.png"), "{msg}");
    }

    #[test]
    fn wrong_landmark_count_names_the_frame() {
        let dir = tempfile::tempdir().unwrap();
        let img = Array2::from_elem((8, 8), 100.0);
        save_gray_image(&dir.path().join("f.png"), &img).unwrap();
        let manifest = dir.path().join("manifest.json");
        let pts: Vec<String> = (0..21).map(|k| format!("[{k}, 1]")).collect();
        std::fs::write(
            &manifest,
            format!(
                r#"{{"sequences":[{{"subject":"a","sequence":"b","frames":[
                    {{"image":"f.png","landmarks":[{}],"pain":null,"au":null}}
                ]}}]}}"#,
                pts.join(",")
            ),
        )
        .unwrap();
        let err = load_manifest(&manifest).unwrap_err();
        match err {
            Error::LandmarkCount { context, found } => {
                assert_eq!(found, 21);
                assert!(context.contains("frame record 0"), "{context}");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn binary_pgm_files_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.pgm");
        // 3x2 binary PGM, maxval 255
        let mut bytes = b"P5\n3 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 128, 255, 10, 20, 30]);
        std::fs::write(&path, bytes).unwrap();
        let img = load_gray_image(&path).unwrap();
        assert_eq!(img.dim(), (2, 3));
        assert_eq!(img[[0, 1]], 128.0);
        assert_eq!(img[[1, 2]], 30.0);
    }

    #[test]
    fn malformed_json_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = dir.path().join("manifest.json");
        std::fs::write(&manifest, "{not json").unwrap();
        assert!(matches!(
            load_manifest(&manifest),
            Err(Error::Manifest { .. })
        ));
    }

    #[test]
    fn landmark_text_files_are_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let img = Array2::from_elem((8, 8), 42.0);
        save_gray_image(&dir.path().join("f.png"), &img).unwrap();
        let lm: String = (0..22).map(|k| format!("{k}.5 {k}.0\n")).collect();
        std::fs::write(dir.path().join("f.txt"), lm).unwrap();
        let manifest = dir.path().join("manifest.json");
        std::fs::write(
            &manifest,
            r#"{"sequences":[{"subject":"a","sequence":"b","frames":[
                {"image":"f.png","landmarks":"f.txt","pain":2.5,"au":null}
            ]}]}"#,
        )
        .unwrap();
        let seqs = load_manifest(&manifest).unwrap();
        assert_eq!(seqs.len(), 1);
        assert_eq!(seqs[0].frames()[0].landmarks.point(1), [1.5, 1.0]);
        assert_eq!(seqs[0].frames()[0].pain, Some(2.5));
    }
}
