//! Held-out accuracy of a small supervised CNN trained on cluster labels.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::ImageRecord;
use crate::error::{Error, Result};
use crate::infogan::train::records_to_tensor;
use crate::nn::{Activation, Adam, AdamConfig, Conv2d, ConvCache, ConvGeom, Linear, Parameterized, Param, Tensor};
use crate::scalar::{argmax, log_sum_exp, softmax, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    /// Channels of the three stride-2 convolutions.
    pub widths: [usize; 3],
    /// Fraction of each class held out for validation.
    pub val_fraction: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch: 32,
            lr: 1e-3,
            widths: [16, 32, 64],
            val_fraction: 0.25,
        }
    }
}

/// Three stride-2 convolutions with ReLU and a linear head.
#[derive(Debug, Clone)]
pub struct SmallCnn<T> {
    pub convs: Vec<Conv2d<T>>,
    pub head: Linear<T>,
}

struct CnnCache<T> {
    convs: Vec<ConvCache<T>>,
    acts: Vec<Tensor<T>>,
}

impl<T: Scalar> SmallCnn<T> {
    pub fn new<R: rand::Rng + ?Sized>(
        image_size: (usize, usize),
        widths: [usize; 3],
        classes: usize,
        rng: &mut R,
    ) -> Self {
        let mut convs = Vec::new();
        let mut cin = 3;
        for (i, &w) in widths.iter().enumerate() {
            let std = (2.0 / (cin * 16) as f64).sqrt();
            convs.push(Conv2d::new(&format!("cls.conv{i}"), cin, w, ConvGeom::DOWN2, std, rng));
            cin = w;
        }
        let feat = cin * (image_size.0 / 8) * (image_size.1 / 8);
        let head = Linear::new("cls.head", feat, classes, (1.0 / feat as f64).sqrt(), rng);
        Self { convs, head }
    }

    fn forward(&self, x: &Tensor<T>) -> (Tensor<T>, CnnCache<T>) {
        let mut h = x.clone();
        let mut convs = Vec::new();
        let mut acts = Vec::new();
        for c in &self.convs {
            let (mut y, cache) = c.forward(&h);
            Activation::Relu.apply(&mut y);
            convs.push(cache);
            acts.push(y.clone());
            h = y;
        }
        let n = h.batch();
        let feats = h.reshaped(&[n, self.head.in_features]);
        let logits = self.head.forward(&feats);
        acts.push(feats);
        (logits, CnnCache { convs, acts })
    }

    fn backward(&mut self, cache: &CnnCache<T>, d_logits: &Tensor<T>) {
        let feats = cache.acts.last().unwrap();
        let mut d = self
            .head
            .backward(feats, d_logits, true, true)
            .unwrap()
            .reshaped(&cache.acts[self.convs.len() - 1].shape);
        for i in (0..self.convs.len()).rev() {
            Activation::Relu.backward(&cache.acts[i], &mut d);
            match self.convs[i].backward(&cache.convs[i], &d, true, i > 0) {
                Some(dx) => d = dx,
                None => break,
            }
        }
    }

    pub fn predict(&self, x: &Tensor<T>) -> Vec<usize> {
        let (logits, _) = self.forward(x);
        (0..x.batch()).map(|i| argmax(logits.item(i))).collect()
    }
}

impl<T: Scalar> Parameterized<T> for SmallCnn<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut v: Vec<&Param<T>> = self.convs.iter().flat_map(|c| c.params()).collect();
        v.extend(self.head.params());
        v
    }
    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v: Vec<&mut Param<T>> = self.convs.iter_mut().flat_map(|c| c.params_mut()).collect();
        v.extend(self.head.params_mut());
        v
    }
}

/// Seeded per-class shuffle; the first `round(val_fraction · n_c)` of each
/// class go to validation. Returns `(train, val)` indices.
pub fn stratified_split(
    labels: &[usize],
    val_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (class, mut idx) in by_class {
        idx.shuffle(&mut rng);
        let n_val = (idx.len() as f64 * val_fraction).round() as usize;
        if n_val >= idx.len() {
            return Err(Error::DegenerateSplit(format!(
                "class {class} has {} member(s), none left for training",
                idx.len()
            )));
        }
        val.extend_from_slice(&idx[..n_val]);
        train.extend_from_slice(&idx[n_val..]);
    }
    Ok((train, val))
}

/// Trains a [`SmallCnn`] on a stratified 3:1 split of `(records, labels)`
/// and returns top-1 accuracy on the held-out part.
pub fn effect_validation<T: Scalar>(
    records: &[ImageRecord<T>],
    labels: &[usize],
    cfg: &ClassifierConfig,
    seed: u64,
) -> Result<f64> {
    if records.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: records.len(),
            right: labels.len(),
        });
    }
    if records.len() < 8 {
        return Err(Error::TooFewSamples {
            have: records.len(),
            need: 8,
        });
    }
    let size = records[0].size();
    if records.iter().any(|r| r.size() != size) {
        return Err(Error::MixedSizes("effect validation needs one image size".into()));
    }
    if size.0 % 8 != 0 || size.1 % 8 != 0 {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} is not divisible by 8",
            size.0, size.1
        )));
    }
    let classes: Vec<usize> = labels
        .iter()
        .copied()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let dense: Vec<usize> = labels
        .iter()
        .map(|l| classes.binary_search(l).unwrap())
        .collect();
    let (mut train, val) = stratified_split(&dense, cfg.val_fraction, seed)?;
    let in_train = train
        .iter()
        .map(|&i| dense[i])
        .collect::<std::collections::BTreeSet<_>>()
        .len();
    if in_train < 2 {
        return Err(Error::DegenerateSplit(format!(
            "{in_train} class(es) in the training split"
        )));
    }
    if val.is_empty() {
        return Err(Error::DegenerateSplit("empty validation split".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut net = SmallCnn::<T>::new(size, cfg.widths, classes.len(), &mut rng);
    let mut opt = Adam::new(AdamConfig::new(cfg.lr, 0.9, 0.999));
    let k = classes.len();
    for _ in 0..cfg.epochs {
        train.shuffle(&mut rng);
        for chunk in train.chunks(cfg.batch) {
            let refs: Vec<&ImageRecord<T>> = chunk.iter().map(|&i| &records[i]).collect();
            let x = records_to_tensor(&refs);
            let (logits, cache) = net.forward(&x);
            let n = T::from_usize_lossy(chunk.len());
            let mut d = Tensor::zeros(&[chunk.len(), k]);
            let mut loss = T::zero();
            for (b, &i) in chunk.iter().enumerate() {
                let row = logits.item(b);
                loss += log_sum_exp(row) - row[dense[i]];
                let p = softmax(row);
                for j in 0..k {
                    let t = if j == dense[i] { T::one() } else { T::zero() };
                    d.data[b * k + j] = (p[j] - t) / n;
                }
            }
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss("effect-validation classifier".into()));
            }
            net.zero_grad();
            net.backward(&cache, &d);
            opt.update(&mut net.params_mut());
        }
    }
    let mut correct = 0usize;
    for chunk in val.chunks(100) {
        let refs: Vec<&ImageRecord<T>> = chunk.iter().map(|&i| &records[i]).collect();
        let pred = net.predict(&records_to_tensor(&refs));
        correct += pred
            .iter()
            .zip(chunk)
            .filter(|(&p, &i)| p == dense[i])
            .count();
    }
    Ok(correct as f64 / val.len() as f64)
}
