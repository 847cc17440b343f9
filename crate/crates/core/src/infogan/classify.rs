use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::checkpoint::GanCheckpoint;
use super::latent::{codes_to_tensor, LatentCode};
use super::train::{item_to_pixels, records_to_tensor};
use crate::dataset::write_png_rgb;
use crate::dataset::ImageRecord;
use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::scalar::{argmax, softmax, Scalar};

const CLASSIFY_BATCH: usize = 100;

/// Q's reading of one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment<T> {
    pub image_id: String,
    pub category: usize,
    pub posterior: Vec<T>,
    pub con_estimate: Vec<T>,
}

impl<T: Scalar> ClusterAssignment<T> {
    /// Posterior of the assigned category.
    pub fn confidence(&self) -> T {
        self.posterior[self.category]
    }
}

/// Scores images with Q: posterior `softmax(q_logits)`, category its argmax.
pub fn classify<T: Scalar>(
    images: &[ImageRecord<T>],
    ckpt: &GanCheckpoint<T>,
) -> Result<Vec<ClusterAssignment<T>>> {
    let size = ckpt.config.image_size;
    for r in images {
        if r.size() != size || r.pixels.len() != r.height * r.width * 3 {
            return Err(Error::ShapeMismatch(format!(
                "`{}` is {}x{}, checkpoint expects {}x{}",
                r.id, r.height, r.width, size.0, size.1
            )));
        }
    }
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(CLASSIFY_BATCH) {
        let refs: Vec<&ImageRecord<T>> = chunk.iter().collect();
        let x = records_to_tensor(&refs);
        let q = ckpt.disc_q.forward(&x)?;
        for (i, r) in chunk.iter().enumerate() {
            let posterior = softmax(q.q_logits.item(i));
            let con_estimate = if q.q_con_mean.is_empty() {
                Vec::new()
            } else {
                q.q_con_mean.item(i).to_vec()
            };
            out.push(ClusterAssignment {
                image_id: r.id.clone(),
                category: argmax(&posterior),
                posterior,
                con_estimate,
            });
        }
    }
    Ok(out)
}

/// Generator samples in network range, running-statistics mode.
pub fn generate<T: Scalar>(ckpt: &GanCheckpoint<T>, codes: &[LatentCode<T>]) -> Result<Tensor<T>> {
    let z = codes_to_tensor(codes, &ckpt.latent)?;
    ckpt.generator.forward_eval(&z)
}

/// Tiles generator outputs: row `r` fixes category `r` and one noise draw,
/// column `j` sweeps `c_con[con_dim]` linearly over `[-1, 1]`; other
/// continuous dims stay at 0. Returns the `(height, width, pixels)` written.
pub fn sample_grid<T: Scalar>(
    ckpt: &GanCheckpoint<T>,
    rows: usize,
    cols: usize,
    con_dim: usize,
    seed: u64,
    out_path: &Path,
) -> Result<(usize, usize, Vec<T>)> {
    let spec = ckpt.latent;
    if rows == 0 || cols == 0 || rows > spec.k_dis {
        return Err(Error::InvalidGridShape(format!(
            "{rows}x{cols} grid for k_dis = {}",
            spec.k_dis
        )));
    }
    if con_dim >= spec.n_con && !(spec.n_con == 0 && cols == 1) {
        return Err(Error::InvalidGridShape(format!(
            "con_dim {con_dim} with n_con = {}",
            spec.n_con
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut codes = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let z: Vec<T> = (0..spec.n_noise)
            .map(|_| {
                let v: f64 = StandardNormal.sample(&mut rng);
                T::from_f64_lossy(v)
            })
            .collect();
        for j in 0..cols {
            let mut c = vec![T::zero(); spec.n_con];
            if spec.n_con > 0 {
                c[con_dim] = T::from_f64_lossy(if cols == 1 {
                    -1.0
                } else {
                    -1.0 + 2.0 * j as f64 / (cols - 1) as f64
                });
            }
            codes.push(LatentCode::new(&spec, r, c, z.clone()));
        }
    }
    let imgs = generate(ckpt, &codes)?;
    let (h, w) = ckpt.config.image_size;
    let (gh, gw) = (rows * h, cols * w);
    let mut px = vec![T::zero(); gh * gw * 3];
    for r in 0..rows {
        for j in 0..cols {
            let tile = item_to_pixels(imgs.item(r * cols + j), h, w);
            for y in 0..h {
                let dst = ((r * h + y) * gw + j * w) * 3;
                px[dst..dst + w * 3].copy_from_slice(&tile[y * w * 3..(y + 1) * w * 3]);
            }
        }
    }
    write_png_rgb(out_path, gh, gw, &px)?;
    Ok((gh, gw, px))
}
