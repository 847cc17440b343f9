use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::scalar::Scalar;

/// Sizes of the generator input `z = (c_dis, c_con, z_rnd)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatentSpec {
    /// Categorical code cardinality.
    pub k_dis: usize,
    /// Continuous code dimensions.
    pub n_con: usize,
    /// Incompressible noise dimensions.
    pub n_noise: usize,
}

impl Default for LatentSpec {
    fn default() -> Self {
        Self {
            k_dis: 25,
            n_con: 2,
            n_noise: 70,
        }
    }
}

impl LatentSpec {
    pub fn new(k_dis: usize, n_con: usize, n_noise: usize) -> Result<Self> {
        let s = Self {
            k_dis,
            n_con,
            n_noise,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_dis < 2 {
            return Err(Error::config("k_dis", "must be at least 2"));
        }
        if self.n_noise < 1 {
            return Err(Error::config("n_noise", "must be at least 1"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.k_dis + self.n_con + self.n_noise
    }
}

/// One generator input.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode<T> {
    /// One-hot, length `k_dis`.
    pub c_dis: Vec<T>,
    /// In `[-1, 1]`, length `n_con`.
    pub c_con: Vec<T>,
    pub z_rnd: Vec<T>,
}

impl<T: Scalar> LatentCode<T> {
    pub fn new(spec: &LatentSpec, category: usize, c_con: Vec<T>, z_rnd: Vec<T>) -> Self {
        assert!(category < spec.k_dis);
        assert_eq!(c_con.len(), spec.n_con);
        assert_eq!(z_rnd.len(), spec.n_noise);
        let mut c_dis = vec![T::zero(); spec.k_dis];
        c_dis[category] = T::one();
        Self {
            c_dis,
            c_con,
            z_rnd,
        }
    }

    /// Index of the hot entry.
    pub fn category(&self) -> usize {
        crate::scalar::argmax(&self.c_dis)
    }

    pub fn is_valid(&self) -> bool {
        let ones = self.c_dis.iter().filter(|&&v| v == T::one()).count();
        let zeros = self.c_dis.iter().filter(|&&v| v == T::zero()).count();
        ones == 1
            && ones + zeros == self.c_dis.len()
            && self.c_con.iter().all(|&v| v >= -T::one() && v <= T::one())
            && self.z_rnd.iter().all(|v| v.is_finite())
    }
}

/// Draws `n` codes: uniform category, `Uniform(-1, 1)` continuous code,
/// standard-normal noise, in that order per sample.
pub fn sample_latent<T: Scalar, R: Rng + ?Sized>(
    n: usize,
    spec: &LatentSpec,
    rng: &mut R,
) -> Vec<LatentCode<T>> {
    (0..n)
        .map(|_| {
            let category = rng.gen_range(0..spec.k_dis);
            let c_con = (0..spec.n_con)
                .map(|_| T::from_f64_lossy(rng.gen_range(-1.0..=1.0)))
                .collect();
            let z_rnd = (0..spec.n_noise)
                .map(|_| {
                    let v: f64 = StandardNormal.sample(rng);
                    T::from_f64_lossy(v)
                })
                .collect();
            LatentCode::new(spec, category, c_con, z_rnd)
        })
        .collect()
}

/// Concatenates codes into the `[n, dim]` generator input.
pub fn codes_to_tensor<T: Scalar>(codes: &[LatentCode<T>], spec: &LatentSpec) -> Result<Tensor<T>> {
    let dim = spec.dim();
    let mut data = Vec::with_capacity(codes.len() * dim);
    for c in codes {
        if c.c_dis.len() != spec.k_dis || c.c_con.len() != spec.n_con || c.z_rnd.len() != spec.n_noise {
            return Err(Error::ShapeMismatch(format!(
                "latent code ({}, {}, {}) vs spec ({}, {}, {})",
                c.c_dis.len(),
                c.c_con.len(),
                c.z_rnd.len(),
                spec.k_dis,
                spec.n_con,
                spec.n_noise
            )));
        }
        data.extend_from_slice(&c.c_dis);
        data.extend_from_slice(&c.c_con);
        data.extend_from_slice(&c.z_rnd);
    }
    Ok(Tensor::from_vec(&[codes.len(), dim], data))
}
