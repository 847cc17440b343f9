use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, RgbImage};
use serde::{Deserialize, Serialize};

use super::{ImageRecord, SegmentationMap, Stage};
use crate::error::{Error, Result};
use crate::preprocess::resize_pixels;
use crate::scalar::Scalar;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Corpus manifest: one entry per record, paths relative to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub records: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub image: String,
    pub seg: Option<String>,
    #[serde(default)]
    pub building_classes: Vec<u8>,
    pub stage: Stage,
    #[serde(default)]
    pub truth: BTreeMap<String, usize>,
}

#[derive(Debug, Clone)]
pub struct IngestOutcome<T> {
    pub records: Vec<ImageRecord<T>>,
    /// Ids dropped for having no building pixels.
    pub dropped: Vec<String>,
}

fn to_u8<T: Scalar>(v: T) -> u8 {
    (v.to_f64_lossy().clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn write_png_rgb<T: Scalar>(path: &Path, height: usize, width: usize, pixels: &[T]) -> Result<()> {
    let buf: Vec<u8> = pixels.iter().map(|&v| to_u8(v)).collect();
    let img = RgbImage::from_raw(width as u32, height as u32, buf)
        .ok_or_else(|| Error::ShapeMismatch(format!("{} values for a {height}x{width} RGB image", pixels.len())))?;
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// Reads any decodable image as RGB in `[0, 1]`: `(height, width, pixels)`.
pub fn read_png_rgb<T: Scalar>(path: &Path) -> std::result::Result<(usize, usize, Vec<T>), String> {
    let img = image::open(path).map_err(|e| e.to_string())?.to_rgb8();
    let (w, h) = img.dimensions();
    let px = img
        .into_raw()
        .into_iter()
        .map(|b| T::from_f64_lossy(b as f64 / 255.0))
        .collect();
    Ok((h as usize, w as usize, px))
}

fn read_labels(path: &Path) -> std::result::Result<(usize, usize, Vec<u8>), String> {
    let img = image::open(path).map_err(|e| e.to_string())?.to_luma8();
    let (w, h) = img.dimensions();
    Ok((h as usize, w as usize, img.into_raw()))
}

fn write_labels(path: &Path, seg: &SegmentationMap) -> Result<()> {
    let img = GrayImage::from_raw(seg.width as u32, seg.height as u32, seg.labels.clone())
        .ok_or_else(|| Error::ShapeMismatch("segmentation buffer".into()))?;
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

fn resize_labels_nearest(labels: &[u8], h: usize, w: usize, nh: usize, nw: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(nh * nw);
    for y in 0..nh {
        let sy = ((y as f64 + 0.5) * h as f64 / nh as f64).floor() as usize;
        for x in 0..nw {
            let sx = ((x as f64 + 0.5) * w as f64 / nw as f64).floor() as usize;
            out.push(labels[sy.min(h - 1) * w + sx.min(w - 1)]);
        }
    }
    out
}

/// Pairs every PNG in `image_dir` with the same-named file in `seg_dir`,
/// resizes both to `size` and drops images without building pixels.
pub fn ingest<T: Scalar>(
    image_dir: &Path,
    seg_dir: &Path,
    building_classes: &BTreeSet<u8>,
    size: (usize, usize),
) -> Result<IngestOutcome<T>> {
    if building_classes.is_empty() {
        return Err(Error::config("building_classes", "must not be empty"));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(image_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .map(|e| e.eq_ignore_ascii_case("png"))
                    .unwrap_or(false)
        })
        .collect();
    files.sort();

    let mut records = Vec::new();
    let mut dropped = Vec::new();
    for path in files {
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let seg_path = seg_dir.join(path.file_name().expect("file has a name"));
        if !seg_path.is_file() {
            return Err(Error::MissingSegmentation(id));
        }
        let (h, w, pixels) = read_png_rgb::<T>(&path)
            .map_err(|reason| Error::UnreadableImage { id: id.clone(), reason })?;
        let (sh, sw, labels) = read_labels(&seg_path)
            .map_err(|reason| Error::UnreadableImage { id: id.clone(), reason })?;
        if (sh, sw) != (h, w) {
            return Err(Error::ShapeMismatch(format!(
                "`{id}`: image {h}x{w}, segmentation {sh}x{sw}"
            )));
        }
        let (nh, nw) = size;
        let pixels = if (h, w) == size {
            pixels
        } else {
            resize_pixels(&pixels, h, w, nh, nw)
        };
        let labels = if (h, w) == size {
            labels
        } else {
            resize_labels_nearest(&labels, h, w, nh, nw)
        };
        let seg = SegmentationMap::new(nh, nw, labels, building_classes.clone())?;
        if seg.building_count() == 0 {
            dropped.push(id);
            continue;
        }
        records.push(ImageRecord::new(id, nh, nw, pixels).with_seg(seg));
    }
    if records.is_empty() {
        return Err(Error::EmptyCorpus {
            dropped: dropped.len(),
        });
    }
    Ok(IngestOutcome { records, dropped })
}

/// Writes records as PNGs under `dir` plus `dir/manifest.json`.
pub fn save_corpus<T: Scalar>(records: &[ImageRecord<T>], dir: &Path) -> Result<Manifest> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(records.len());
    for r in records {
        let image = format!("images/{}.png", r.id);
        write_png_rgb(&dir.join(&image), r.height, r.width, &r.pixels)?;
        let seg = match &r.seg {
            Some(seg) => {
                let rel = format!("seg/{}.png", r.id);
                write_labels(&dir.join(&rel), seg)?;
                Some(rel)
            }
            None => None,
        };
        entries.push(ManifestEntry {
            id: r.id.clone(),
            image,
            seg,
            building_classes: r
                .seg
                .as_ref()
                .map(|s| s.building_classes.iter().copied().collect())
                .unwrap_or_default(),
            stage: r.stage,
            truth: r.truth.clone(),
        });
    }
    let manifest = Manifest {
        format_version: 1,
        records: entries,
    };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Loads every record of a manifest; paths resolve relative to its directory.
pub fn load_corpus<T: Scalar>(manifest_path: &Path) -> Result<Vec<ImageRecord<T>>> {
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(manifest_path)?)?;
    let root = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut records = Vec::with_capacity(manifest.records.len());
    for e in manifest.records {
        let (h, w, pixels) = read_png_rgb::<T>(&root.join(&e.image))
            .map_err(|reason| Error::UnreadableImage { id: e.id.clone(), reason })?;
        let seg = match &e.seg {
            Some(rel) => {
                let (sh, sw, labels) = read_labels(&root.join(rel))
                    .map_err(|reason| Error::UnreadableImage { id: e.id.clone(), reason })?;
                if (sh, sw) != (h, w) {
                    return Err(Error::ShapeMismatch(format!("segmentation of `{}`", e.id)));
                }
                Some(SegmentationMap::new(
                    h,
                    w,
                    labels,
                    e.building_classes.iter().copied().collect(),
                )?)
            }
            None => None,
        };
        let rec = ImageRecord {
            id: e.id,
            height: h,
            width: w,
            pixels,
            seg,
            stage: e.stage,
            truth: e.truth,
        };
        rec.validate()?;
        records.push(rec);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, Factor, SynthSpec, BUILDING_CLASS, SKY_CLASS};

    fn write_pair(dir: &Path, name: &str, h: u32, w: u32, building: bool) {
        let img = RgbImage::from_fn(w, h, |x, y| image::Rgb([(x * 10) as u8, (y * 20) as u8, 200]));
        img.save(dir.join("img").join(name)).unwrap();
        let seg = GrayImage::from_fn(w, h, |x, _| {
            image::Luma([if building && x < 4 { BUILDING_CLASS } else { SKY_CLASS }])
        });
        seg.save(dir.join("seg").join(name)).unwrap();
    }

    fn dirs() -> tempfile::TempDir {
        let t = tempfile::tempdir().unwrap();
        fs::create_dir_all(t.path().join("img")).unwrap();
        fs::create_dir_all(t.path().join("seg")).unwrap();
        t
    }

    #[test]
    fn ingest_drops_images_without_buildings() {
        let t = dirs();
        for name in ["a.png", "b.png", "c.png"] {
            write_pair(t.path(), name, 4, 8, true);
        }
        write_pair(t.path(), "sky.png", 4, 8, false);
        let out = ingest::<f32>(
            &t.path().join("img"),
            &t.path().join("seg"),
            &[BUILDING_CLASS].into(),
            (4, 8),
        )
        .unwrap();
        assert_eq!(out.records.len(), 3);
        assert_eq!(out.dropped, vec!["sky".to_string()]);
        assert!(out.records.iter().all(|r| r.stage == Stage::Original));
    }

    #[test]
    fn ingest_of_empty_dir_is_an_error() {
        let t = dirs();
        let err = ingest::<f32>(
            &t.path().join("img"),
            &t.path().join("seg"),
            &[BUILDING_CLASS].into(),
            (32, 64),
        )
        .unwrap_err();
        assert!(matches!(err, Error::EmptyCorpus { .. }));
    }

    #[test]
    fn ingest_resizes_to_declared_size() {
        let t = dirs();
        write_pair(t.path(), "big.png", 64, 128, true);
        let out = ingest::<f32>(
            &t.path().join("img"),
            &t.path().join("seg"),
            &[BUILDING_CLASS].into(),
            (32, 64),
        )
        .unwrap();
        let r = &out.records[0];
        assert_eq!((r.height, r.width), (32, 64));
        r.validate().unwrap();
    }

    #[test]
    fn missing_segmentation_is_reported() {
        let t = dirs();
        write_pair(t.path(), "a.png", 4, 8, true);
        fs::remove_file(t.path().join("seg/a.png")).unwrap();
        let err = ingest::<f32>(
            &t.path().join("img"),
            &t.path().join("seg"),
            &[BUILDING_CLASS].into(),
            (4, 8),
        )
        .unwrap_err();
        assert!(matches!(err, Error::MissingSegmentation(id) if id == "a"));
    }

    #[test]
    fn unreadable_image_is_reported() {
        let t = dirs();
        fs::write(t.path().join("img/bad.png"), b"not a png").unwrap();
        fs::write(t.path().join("seg/bad.png"), b"not a png").unwrap();
        let err = ingest::<f32>(
            &t.path().join("img"),
            &t.path().join("seg"),
            &[BUILDING_CLASS].into(),
            (4, 8),
        )
        .unwrap_err();
        assert!(matches!(err, Error::UnreadableImage { .. }));
    }

    #[test]
    fn corpus_survives_a_disk_round_trip_up_to_quantization() {
        let t = tempfile::tempdir().unwrap();
        let recs =
            generate_synthetic::<f32>(&SynthSpec::new(5, &[(Factor::GrayScale, 4)], 2)).unwrap();
        save_corpus(&recs, t.path()).unwrap();
        let back = load_corpus::<f32>(&t.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(back.len(), 5);
        for (a, b) in recs.iter().zip(&back) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.seg, b.seg);
            assert_eq!(a.truth, b.truth);
            for (x, y) in a.pixels.iter().zip(&b.pixels) {
                assert!((x - y).abs() <= 0.5 / 255.0 + 1e-6);
            }
        }
    }
}
