//! Image transformations clustered on: masking (stage M), mean-color
//! interpolation (stage I) and raster-fairy regularization (stage R), plus
//! bilinear resizing. Everything here is deterministic.

mod assign;

use serde::{Deserialize, Serialize};

use crate::dataset::{ImageRecord, SegmentationMap, Stage};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use assign::{
    assign_to_grid, assignment_cost, factorize_even, rank_order_assignment, solve_rectangular,
    Assignment, GridSpec, DEFAULT_SIZE_CAP,
};

/// Which transformation to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Mask,
    Interp,
    Rf,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mask" => Ok(Mode::Mask),
            "interp" => Ok(Mode::Interp),
            "rf" => Ok(Mode::Rf),
            other => Err(Error::config(
                "mode",
                format!("`{other}` is not one of mask|interp|rf"),
            )),
        }
    }
}

impl Mode {
    pub fn stage(self) -> Stage {
        match self {
            Mode::Mask => Stage::Masked,
            Mode::Interp => Stage::Interpolated,
            Mode::Rf => Stage::RasterFairy,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Mask => "mask",
            Mode::Interp => "interp",
            Mode::Rf => "rf",
        }
    }
}

/// Applies `mode` with the default raster-fairy size cap, keeping the record's size.
pub fn apply<T: Scalar>(rec: &ImageRecord<T>, mode: Mode) -> Result<ImageRecord<T>> {
    match mode {
        Mode::Mask => mask(rec),
        Mode::Interp => interpolate(rec),
        Mode::Rf => raster_fairy(rec, DEFAULT_SIZE_CAP, rec.size()),
    }
}

fn building_seg<'a, T: Scalar>(rec: &'a ImageRecord<T>) -> Result<&'a SegmentationMap> {
    let seg = rec.seg()?;
    if (seg.height, seg.width) != rec.size() {
        return Err(Error::ShapeMismatch(format!(
            "segmentation of `{}` does not match its image",
            rec.id
        )));
    }
    if seg.building_count() == 0 {
        return Err(Error::NoBuildingPixels(rec.id.clone()));
    }
    Ok(seg)
}

/// Zeroes every non-building pixel.
pub fn mask<T: Scalar>(rec: &ImageRecord<T>) -> Result<ImageRecord<T>> {
    let seg = building_seg(rec)?;
    let mut out = rec.clone();
    for (i, px) in out.pixels.chunks_exact_mut(3).enumerate() {
        if !seg.is_building(i) {
            px.iter_mut().for_each(|v| *v = T::zero());
        }
    }
    out.stage = Stage::Masked;
    Ok(out)
}

/// Per-channel mean over building pixels, accumulated in `f64`.
pub fn building_mean<T: Scalar>(rec: &ImageRecord<T>) -> Result<[T; 3]> {
    let seg = building_seg(rec)?;
    let mut sum = [0.0f64; 3];
    let mut count = 0usize;
    for (i, px) in rec.pixels.chunks_exact(3).enumerate() {
        if seg.is_building(i) {
            for c in 0..3 {
                sum[c] += px[c].to_f64_lossy();
            }
            count += 1;
        }
    }
    Ok(sum.map(|s| T::from_f64_lossy(s / count as f64)))
}

/// Replaces every non-building pixel with the building mean color.
pub fn interpolate<T: Scalar>(rec: &ImageRecord<T>) -> Result<ImageRecord<T>> {
    let mean = building_mean(rec)?;
    let seg = building_seg(rec)?;
    let mut out = rec.clone();
    for (i, px) in out.pixels.chunks_exact_mut(3).enumerate() {
        if !seg.is_building(i) {
            px.copy_from_slice(&mean);
        }
    }
    out.stage = Stage::Interpolated;
    Ok(out)
}

/// Building pixels rearranged on a near-even grid, before resizing.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterGrid<T> {
    pub grid: GridSpec,
    pub assignment: Assignment,
    /// Row-major `rows × columns × 3`; pad cells hold the building mean.
    pub pixels: Vec<T>,
    /// `true` for cells that received a building pixel.
    pub occupied: Vec<bool>,
}

/// Lays the building pixels out on a `factorize_even` grid.
///
/// Pixel coordinates are normalized to the building bounding box, so a
/// building that already is a full rectangle maps onto the grid unchanged.
pub fn raster_grid<T: Scalar>(rec: &ImageRecord<T>, size_cap: usize) -> Result<RasterGrid<T>> {
    let seg = building_seg(rec)?;
    let mean = building_mean(rec)?;
    let w = rec.width;
    let building: Vec<usize> = (0..rec.height * w).filter(|&i| seg.is_building(i)).collect();
    let (mut r0, mut r1, mut c0, mut c1) = (usize::MAX, 0, usize::MAX, 0);
    for &i in &building {
        let (r, c) = (i / w, i % w);
        r0 = r0.min(r);
        r1 = r1.max(r);
        c0 = c0.min(c);
        c1 = c1.max(c);
    }
    let (bh, bw) = ((r1 - r0 + 1) as f64, (c1 - c0 + 1) as f64);
    let points: Vec<(f64, f64)> = building
        .iter()
        .map(|&i| {
            (
                ((i / w - r0) as f64 + 0.5) / bh,
                ((i % w - c0) as f64 + 0.5) / bw,
            )
        })
        .collect();
    let grid = factorize_even(points.len());
    let assignment = assign_to_grid(&points, &grid, size_cap)?;
    let mut pixels = Vec::with_capacity(grid.cells() * 3);
    for _ in 0..grid.cells() {
        pixels.extend_from_slice(&mean);
    }
    let mut occupied = vec![false; grid.cells()];
    for (&src, &cell) in building.iter().zip(&assignment.mapping) {
        pixels[cell * 3..cell * 3 + 3].copy_from_slice(&rec.pixels[src * 3..src * 3 + 3]);
        occupied[cell] = true;
    }
    Ok(RasterGrid {
        grid,
        assignment,
        pixels,
        occupied,
    })
}

/// Raster-fairy regularization resized to `size`. The output's segmentation
/// marks every pixel as building, since every grid cell now holds building color.
pub fn raster_fairy<T: Scalar>(
    rec: &ImageRecord<T>,
    size_cap: usize,
    size: (usize, usize),
) -> Result<ImageRecord<T>> {
    let rg = raster_grid(rec, size_cap)?;
    let (h, w) = size;
    let pixels = resize_pixels(&rg.pixels, rg.grid.rows, rg.grid.columns, h, w);
    let classes = rec.seg()?.building_classes.clone();
    let label = *classes.iter().next().expect("non-empty building classes");
    let seg = SegmentationMap::new(h, w, vec![label; h * w], classes)?;
    Ok(ImageRecord {
        id: rec.id.clone(),
        height: h,
        width: w,
        pixels,
        seg: Some(seg),
        stage: Stage::RasterFairy,
        truth: rec.truth.clone(),
    })
}

/// Bilinear resize of an `h×w×3` buffer with half-pixel centers.
pub fn resize_pixels<T: Scalar>(src: &[T], h: usize, w: usize, nh: usize, nw: usize) -> Vec<T> {
    assert_eq!(src.len(), h * w * 3);
    if (h, w) == (nh, nw) {
        return src.to_vec();
    }
    let axis = |dst: usize, n_src: usize, n_dst: usize| -> (usize, usize, f64) {
        let s = ((dst as f64 + 0.5) * n_src as f64 / n_dst as f64 - 0.5).clamp(0.0, (n_src - 1) as f64);
        let lo = s.floor() as usize;
        let hi = (lo + 1).min(n_src - 1);
        (lo, hi, s - lo as f64)
    };
    let mut out = Vec::with_capacity(nh * nw * 3);
    for y in 0..nh {
        let (y0, y1, fy) = axis(y, h, nh);
        for x in 0..nw {
            let (x0, x1, fx) = axis(x, w, nw);
            for c in 0..3 {
                let at = |yy: usize, xx: usize| src[(yy * w + xx) * 3 + c].to_f64_lossy();
                let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
                let bottom = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
                let v = (top * (1.0 - fy) + bottom * fy).clamp(0.0, 1.0);
                out.push(T::from_f64_lossy(v));
            }
        }
    }
    out
}

/// Bilinear resize of a record; the segmentation follows by nearest neighbor.
pub fn resize_uniform<T: Scalar>(rec: &ImageRecord<T>, size: (usize, usize)) -> ImageRecord<T> {
    if rec.size() == size {
        return rec.clone();
    }
    let (nh, nw) = size;
    let mut out = rec.clone();
    out.pixels = resize_pixels(&rec.pixels, rec.height, rec.width, nh, nw);
    out.height = nh;
    out.width = nw;
    out.seg = rec.seg.as_ref().map(|s| {
        let mut labels = Vec::with_capacity(nh * nw);
        for y in 0..nh {
            let sy = (((y as f64 + 0.5) * s.height as f64 / nh as f64) as usize).min(s.height - 1);
            for x in 0..nw {
                let sx = (((x as f64 + 0.5) * s.width as f64 / nw as f64) as usize).min(s.width - 1);
                labels.push(s.labels[sy * s.width + sx]);
            }
        }
        SegmentationMap {
            height: nh,
            width: nw,
            labels,
            building_classes: s.building_classes.clone(),
        }
    });
    out
}
