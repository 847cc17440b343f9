//! Image records, segmentation maps, the synthetic street-scene corpus and
//! on-disk corpus ingestion.

pub mod io;
pub mod synth;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use io::{
    ingest, load_corpus, read_png_rgb, save_corpus, write_png_rgb, IngestOutcome, Manifest,
    ManifestEntry, MANIFEST_FILE,
};
pub use synth::{generate_synthetic, Factor, FactorSpec, SynthSpec};

/// Cityscapes label id for "road".
pub const ROAD_CLASS: u8 = 7;
/// Cityscapes label id for "building"; the suggested `building_classes` default.
pub const BUILDING_CLASS: u8 = 11;
/// Cityscapes label id for "sky".
pub const SKY_CLASS: u8 = 23;

/// Per-pixel class ids for one image plus the ids that count as architecture.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentationMap {
    pub height: usize,
    pub width: usize,
    pub labels: Vec<u8>,
    pub building_classes: BTreeSet<u8>,
}

impl SegmentationMap {
    pub fn new(
        height: usize,
        width: usize,
        labels: Vec<u8>,
        building_classes: BTreeSet<u8>,
    ) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::SizeMismatch {
                expected: height * width,
                got: labels.len(),
            });
        }
        if building_classes.is_empty() {
            return Err(Error::config("building_classes", "must not be empty"));
        }
        Ok(Self {
            height,
            width,
            labels,
            building_classes,
        })
    }

    #[inline]
    pub fn is_building(&self, idx: usize) -> bool {
        self.building_classes.contains(&self.labels[idx])
    }

    pub fn building_mask(&self) -> Vec<bool> {
        (0..self.labels.len()).map(|i| self.is_building(i)).collect()
    }

    pub fn building_count(&self) -> usize {
        (0..self.labels.len()).filter(|&i| self.is_building(i)).count()
    }
}

/// Pipeline stage of an image: original, masked, interpolated or raster-fairy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "O")]
    Original,
    #[serde(rename = "M")]
    Masked,
    #[serde(rename = "I")]
    Interpolated,
    #[serde(rename = "R")]
    RasterFairy,
}

impl Stage {
    pub fn tag(self) -> &'static str {
        match self {
            Stage::Original => "O",
            Stage::Masked => "M",
            Stage::Interpolated => "I",
            Stage::RasterFairy => "R",
        }
    }
}

/// One RGB image (row-major `H×W×3`, channels in `[0, 1]`) with its
/// segmentation and optional ground-truth factor labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord<T> {
    pub id: String,
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<T>,
    pub seg: Option<SegmentationMap>,
    pub stage: Stage,
    pub truth: BTreeMap<String, usize>,
}

impl<T: Scalar> ImageRecord<T> {
    pub fn new(id: impl Into<String>, height: usize, width: usize, pixels: Vec<T>) -> Self {
        Self {
            id: id.into(),
            height,
            width,
            pixels,
            seg: None,
            stage: Stage::Original,
            truth: BTreeMap::new(),
        }
    }

    pub fn with_seg(mut self, seg: SegmentationMap) -> Self {
        self.seg = Some(seg);
        self
    }

    pub fn pixel(&self, y: usize, x: usize) -> [T; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn size(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// Segmentation map, required by every preprocessing stage.
    pub fn seg(&self) -> Result<&SegmentationMap> {
        self.seg
            .as_ref()
            .ok_or_else(|| Error::MissingSegmentation(self.id.clone()))
    }

    /// Checks every type invariant.
    pub fn validate(&self) -> Result<()> {
        if self.pixels.len() != self.height * self.width * 3 {
            return Err(Error::SizeMismatch {
                expected: self.height * self.width * 3,
                got: self.pixels.len(),
            });
        }
        if self
            .pixels
            .iter()
            .any(|&v| !v.is_finite() || v < T::zero() || v > T::one())
        {
            return Err(Error::NonFiniteInput);
        }
        match (&self.seg, self.stage) {
            (None, Stage::Original) => {}
            (None, _) => return Err(Error::MissingSegmentation(self.id.clone())),
            (Some(seg), _) => {
                if (seg.height, seg.width) != (self.height, self.width) {
                    return Err(Error::ShapeMismatch(format!(
                        "segmentation {}x{} vs image {}x{} for `{}`",
                        seg.height, seg.width, self.height, self.width, self.id
                    )));
                }
                if seg.building_classes.is_empty() {
                    return Err(Error::config("building_classes", "must not be empty"));
                }
            }
        }
        Ok(())
    }

    /// Lossy conversion between scalar types.
    pub fn cast<U: Scalar>(&self) -> ImageRecord<U> {
        ImageRecord {
            id: self.id.clone(),
            height: self.height,
            width: self.width,
            pixels: self
                .pixels
                .iter()
                .map(|v| U::from_f64_lossy(v.to_f64_lossy()))
                .collect(),
            seg: self.seg.clone(),
            stage: self.stage,
            truth: self.truth.clone(),
        }
    }
}

/// Ground-truth labels of one factor, in record order.
pub fn truth_labels<T>(records: &[ImageRecord<T>], factor: &str) -> Option<Vec<usize>> {
    records.iter().map(|r| r.truth.get(factor).copied()).collect()
}
