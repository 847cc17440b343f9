//! K-means on flattened images: k-means++ seeding and Lloyd iterations.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::ImageRecord;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult<T> {
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<T>>,
    /// Sum of squared distances to the assigned centroid.
    pub inertia: T,
    pub iterations: usize,
}

fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Nearest centroid per point (ties to the lowest index) and the total cost.
fn assign<T: Scalar>(vectors: &[Vec<T>], centroids: &[Vec<T>]) -> (Vec<usize>, Vec<T>, T) {
    let mut labels = Vec::with_capacity(vectors.len());
    let mut dists = Vec::with_capacity(vectors.len());
    let mut inertia = T::zero();
    for v in vectors {
        let mut best = (0, sq_dist(v, &centroids[0]));
        for (j, c) in centroids.iter().enumerate().skip(1) {
            let d = sq_dist(v, c);
            if d < best.1 {
                best = (j, d);
            }
        }
        labels.push(best.0);
        dists.push(best.1);
        inertia += best.1;
    }
    (labels, dists, inertia)
}

fn kmeans_pp<T: Scalar, R: Rng>(vectors: &[Vec<T>], k: usize, rng: &mut R) -> Vec<Vec<T>> {
    let n = vectors.len();
    let mut centroids = vec![vectors[rng.gen_range(0..n)].clone()];
    let mut d2: Vec<f64> = vectors
        .iter()
        .map(|v| sq_dist(v, &centroids[0]).to_f64_lossy())
        .collect();
    while centroids.len() < k {
        let next = match WeightedIndex::new(&d2) {
            Ok(w) => w.sample(rng),
            // Every point coincides with a chosen centroid.
            Err(_) => rng.gen_range(0..n),
        };
        centroids.push(vectors[next].clone());
        let c = centroids.last().unwrap();
        for (d, v) in d2.iter_mut().zip(vectors) {
            *d = d.min(sq_dist(v, c).to_f64_lossy());
        }
    }
    centroids
}

/// Lloyd's algorithm from a k-means++ start. Stops when no centroid moves
/// by `tol` or more, or after `max_iter` updates. A cluster left empty by
/// an update is reseeded at the point farthest from its centroid. The
/// returned labels are always the nearest-centroid assignment for the
/// returned centroids.
pub fn kmeans<T: Scalar>(
    vectors: &[Vec<T>],
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<KMeansResult<T>> {
    let n = vectors.len();
    if k < 2 || n < k {
        return Err(Error::TooFewSamples {
            have: n,
            need: k.max(2),
        });
    }
    let d = vectors[0].len();
    if vectors.iter().any(|v| v.len() != d) {
        return Err(Error::MixedSizes("vectors differ in dimension".into()));
    }
    if vectors.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_pp(vectors, k, &mut rng);
    let (mut labels, mut dists, mut inertia) = assign(vectors, &centroids);
    let mut iterations = 0;
    while iterations < max_iter {
        let mut sums = vec![vec![T::zero(); d]; k];
        let mut counts = vec![0usize; k];
        for (v, &l) in vectors.iter().zip(&labels) {
            counts[l] += 1;
            for (s, &x) in sums[l].iter_mut().zip(v) {
                *s += x;
            }
        }
        let mut taken = vec![false; n];
        for j in 0..k {
            if counts[j] == 0 {
                let far = (0..n)
                    .filter(|&i| !taken[i])
                    .fold(None, |best: Option<usize>, i| match best {
                        Some(b) if dists[b] >= dists[i] => Some(b),
                        _ => Some(i),
                    })
                    .expect("n >= k");
                taken[far] = true;
                sums[j] = vectors[far].clone();
                counts[j] = 1;
            }
        }
        let mut shift = 0.0f64;
        for j in 0..k {
            let inv = T::one() / T::from_usize_lossy(counts[j]);
            sums[j].iter_mut().for_each(|s| *s *= inv);
            shift = shift.max(sq_dist(&sums[j], &centroids[j]).to_f64_lossy().sqrt());
        }
        centroids = sums;
        let (l, ds, next) = assign(vectors, &centroids);
        let slack = 1e-9 * inertia.to_f64_lossy().abs() + 1e-12;
        assert!(
            next.to_f64_lossy() <= inertia.to_f64_lossy() + slack,
            "Lloyd step increased inertia: {inertia} -> {next}"
        );
        labels = l;
        dists = ds;
        inertia = next;
        iterations += 1;
        if shift < tol {
            break;
        }
    }
    Ok(KMeansResult {
        labels,
        centroids,
        inertia,
        iterations,
    })
}

/// Row `i` is record `i`'s pixels in row-major RGB order.
pub fn flatten_images<T: Scalar>(records: &[ImageRecord<T>]) -> Result<Vec<Vec<T>>> {
    let first = records.first().ok_or(Error::EmptyInput)?;
    let size = first.size();
    records
        .iter()
        .map(|r| {
            if r.size() != size || r.pixels.len() != r.height * r.width * 3 {
                Err(Error::MixedSizes(format!(
                    "`{}` is {}x{}, expected {}x{}",
                    r.id, r.height, r.width, size.0, size.1
                )))
            } else {
                Ok(r.pixels.clone())
            }
        })
        .collect()
}
