//! Procedural street scenes with known latent factors.
//!
//! Each image is sky over a road band with one or two building blocks.
//! Listed factors are stratified exactly; unlisted ones stay at a neutral
//! default. Building geometry always carries continuous jitter so no two
//! images are identical.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ImageRecord, SegmentationMap, Stage, BUILDING_CLASS, ROAD_CLASS, SKY_CLASS};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Factor {
    /// Horizontal placement: left, right, center, bilateral.
    Perspective,
    /// Building base hue.
    ColorSystem,
    /// Building brightness multiplier.
    GrayScale,
}

impl Factor {
    pub fn name(self) -> &'static str {
        match self {
            Factor::Perspective => "perspective",
            Factor::ColorSystem => "color_system",
            Factor::GrayScale => "gray_scale",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorSpec {
    #[serde(rename = "name")]
    pub factor: Factor,
    pub cardinality: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_images: usize,
    pub factors: Vec<FactorSpec>,
    #[serde(default = "default_image_size")]
    pub image_size: (usize, usize),
    pub seed: u64,
}

fn default_image_size() -> (usize, usize) {
    (32, 64)
}

impl SynthSpec {
    pub fn new(n_images: usize, factors: &[(Factor, usize)], seed: u64) -> Self {
        Self {
            n_images,
            factors: factors
                .iter()
                .map(|&(factor, cardinality)| FactorSpec {
                    factor,
                    cardinality,
                })
                .collect(),
            image_size: default_image_size(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_images == 0 {
            return Err(Error::InvalidSpec("n_images must be at least 1".into()));
        }
        if self.factors.is_empty() {
            return Err(Error::InvalidSpec("factor list is empty".into()));
        }
        let (h, w) = self.image_size;
        if h < 8 || w < 8 {
            return Err(Error::InvalidSpec(format!(
                "image size {h}x{w} is below the 8x8 minimum"
            )));
        }
        let mut seen = BTreeSet::new();
        for f in &self.factors {
            if !seen.insert(f.factor) {
                return Err(Error::InvalidSpec(format!(
                    "factor `{}` listed twice",
                    f.factor.name()
                )));
            }
            if f.cardinality < 2 {
                return Err(Error::InvalidSpec(format!(
                    "factor `{}` has cardinality {} (< 2)",
                    f.factor.name(),
                    f.cardinality
                )));
            }
            if f.factor == Factor::Perspective && f.cardinality > 4 {
                return Err(Error::InvalidSpec(
                    "perspective has at most 4 layouts".into(),
                ));
            }
        }
        Ok(())
    }
}

const PERSPECTIVE_LEFT: usize = 0;
const PERSPECTIVE_RIGHT: usize = 1;
const PERSPECTIVE_CENTER: usize = 2;
const PERSPECTIVE_BILATERAL: usize = 3;

/// Generates `spec.n_images` stage-O records; a pure function of `spec`.
pub fn generate_synthetic<T: Scalar>(spec: &SynthSpec) -> Result<Vec<ImageRecord<T>>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    // Stratified labels: exact equal counts (up to remainder), shuffled per factor.
    let assignments: Vec<(Factor, Vec<usize>)> = spec
        .factors
        .iter()
        .map(|f| {
            let mut labels: Vec<usize> = (0..spec.n_images).map(|i| i % f.cardinality).collect();
            labels.shuffle(&mut rng);
            (f.factor, labels)
        })
        .collect();

    let records = (0..spec.n_images)
        .map(|i| {
            let mut levels = BTreeMap::new();
            for (factor, labels) in &assignments {
                levels.insert(*factor, labels[i]);
            }
            let mut img_rng = ChaCha8Rng::seed_from_u64(spec.seed);
            img_rng.set_stream(i as u64 + 1);
            render(i, spec, &levels, &mut img_rng)
        })
        .collect();
    Ok(records)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let c = v * s;
    let x = c * (1.0 - ((h6 % 2.0) - 1.0).abs());
    let (r, g, b) = match h6 as usize {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

fn cardinality(spec: &SynthSpec, factor: Factor) -> usize {
    spec.factors
        .iter()
        .find(|f| f.factor == factor)
        .map(|f| f.cardinality)
        .unwrap_or(1)
}

fn render<T: Scalar>(
    index: usize,
    spec: &SynthSpec,
    levels: &BTreeMap<Factor, usize>,
    rng: &mut ChaCha8Rng,
) -> ImageRecord<T> {
    let (h, w) = spec.image_size;
    let road_h = ((h as f64 * 0.2).round() as usize).max(1);
    let horizon = h - road_h;

    let perspective = levels
        .get(&Factor::Perspective)
        .copied()
        .unwrap_or(PERSPECTIVE_CENTER);
    let base = match levels.get(&Factor::ColorSystem) {
        Some(&j) => hsv_to_rgb(j as f64 / cardinality(spec, Factor::ColorSystem) as f64, 0.65, 0.9),
        None => [0.75, 0.70, 0.62],
    };
    let brightness = match levels.get(&Factor::GrayScale) {
        Some(&j) => 0.3 + 0.7 * j as f64 / (cardinality(spec, Factor::GrayScale) - 1) as f64,
        None => 1.0,
    };

    // Horizontal extents as fractions of the width.
    let spans: Vec<(f64, f64)> = match perspective {
        PERSPECTIVE_LEFT => vec![(0.0, rng.gen_range(0.35..0.5))],
        PERSPECTIVE_RIGHT => vec![(1.0 - rng.gen_range(0.35..0.5), 1.0)],
        PERSPECTIVE_BILATERAL => vec![
            (0.0, rng.gen_range(0.2..0.32)),
            (1.0 - rng.gen_range(0.2..0.32), 1.0),
        ],
        _ => {
            let cx = rng.gen_range(0.35..0.65);
            let half = rng.gen_range(0.125..0.225);
            vec![(cx - half, cx + half)]
        }
    };
    let top = ((h as f64 * rng.gen_range(0.1..0.45)).round() as usize).min(horizon - 1);

    let mut labels = vec![SKY_CLASS; h * w];
    labels[horizon * w..].iter_mut().for_each(|l| *l = ROAD_CLASS);
    let mut pixels = vec![T::zero(); h * w * 3];
    for y in 0..h {
        for x in 0..w {
            let rgb = if y >= horizon {
                [0.33, 0.33, 0.35]
            } else {
                let t = y as f64 / horizon as f64;
                [0.55 + 0.2 * t, 0.72 + 0.12 * t, 0.92]
            };
            let i = (y * w + x) * 3;
            for c in 0..3 {
                pixels[i + c] = T::from_f64_lossy(rgb[c]);
            }
        }
    }
    for &(f0, f1) in &spans {
        let x0 = ((f0 * w as f64).floor() as usize).min(w - 1);
        let x1 = ((f1 * w as f64).round() as usize).clamp(x0 + 1, w);
        for y in top..horizon {
            for x in x0..x1 {
                labels[y * w + x] = BUILDING_CLASS;
                let window = (y - top) % 4 >= 1 && (y - top) % 4 <= 2 && (x - x0) % 4 >= 1 && (x - x0) % 4 <= 2;
                let shade = if window { 0.7 } else { 1.0 };
                let i = (y * w + x) * 3;
                for c in 0..3 {
                    let v = base[c] * brightness * shade + rng.gen_range(-0.05..0.05);
                    pixels[i + c] = T::from_f64_lossy(v.clamp(0.0, 1.0));
                }
            }
        }
    }

    let truth = spec
        .factors
        .iter()
        .map(|f| (f.factor.name().to_string(), levels[&f.factor]))
        .collect();
    let seg = SegmentationMap {
        height: h,
        width: w,
        labels,
        building_classes: [BUILDING_CLASS].into(),
    };
    ImageRecord {
        id: format!("synth_{index:06}"),
        height: h,
        width: w,
        pixels,
        seg: Some(seg),
        stage: Stage::Original,
        truth,
    }
}
