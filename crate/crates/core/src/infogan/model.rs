//! Up-convolutional generator and the discriminator/recognizer pair that
//! shares one convolutional trunk.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::latent::LatentSpec;
use crate::error::{Error, Result};
use crate::nn::{
    Activation, BatchNorm, BatchNormCache, Conv2d, ConvCache, ConvGeom, ConvTranspose2d, Linear,
    Param, Parameterized, Tensor,
};
use crate::scalar::Scalar;

const INIT_STD: f64 = 0.02;

/// Network geometry: `depth` stride-2 stages, channel width doubling from `width`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    pub width: usize,
    pub depth: usize,
    pub image_size: (usize, usize),
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            width: 64,
            depth: 4,
            image_size: (32, 64),
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        let (h, w) = self.image_size;
        let f = 1usize << self.depth;
        if self.depth == 0 || self.width == 0 {
            return Err(Error::config("width/depth", "must be positive"));
        }
        if h % f != 0 || w % f != 0 || h < f || w < f {
            return Err(Error::config(
                "image_size",
                format!("{h}x{w} is not divisible by 2^depth = {f}"),
            ));
        }
        Ok(())
    }

    pub fn base_size(&self) -> (usize, usize) {
        (self.image_size.0 >> self.depth, self.image_size.1 >> self.depth)
    }

    /// Channels after trunk stage `i` (and before generator stage `depth-1-i`).
    pub fn channels(&self, i: usize) -> usize {
        self.width << i
    }

    pub fn feature_len(&self) -> usize {
        let (bh, bw) = self.base_size();
        self.channels(self.depth - 1) * bh * bw
    }
}

/// `z → linear → BN → ReLU → [deconv → BN → ReLU]* → deconv → tanh`.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator<T> {
    pub net: NetConfig,
    pub z_dim: usize,
    pub project: Linear<T>,
    pub project_bn: BatchNorm<T>,
    pub deconvs: Vec<ConvTranspose2d<T>>,
    /// One per deconv except the last.
    pub bns: Vec<BatchNorm<T>>,
}

/// Intermediate activations of a training-mode generator pass.
#[derive(Debug, Clone)]
pub struct GeneratorCache<T> {
    z: Tensor<T>,
    project_bn: BatchNormCache<T>,
    /// Input to each deconv (post-activation).
    stage_inputs: Vec<Tensor<T>>,
    bn_caches: Vec<BatchNormCache<T>>,
    output: Tensor<T>,
}

impl<T: Scalar> GeneratorCache<T> {
    /// Which hidden ReLU units were active.
    pub fn activation_pattern(&self) -> Vec<bool> {
        self.stage_inputs
            .iter()
            .flat_map(|t| t.data.iter().map(|&v| v > T::zero()))
            .collect()
    }
}

impl<T: Scalar> Generator<T> {
    pub fn new<R: Rng + ?Sized>(net: NetConfig, latent: &LatentSpec, rng: &mut R) -> Result<Self> {
        net.validate()?;
        latent.validate()?;
        let top = net.channels(net.depth - 1);
        let (bh, bw) = net.base_size();
        let project =
            Linear::new("g.project", latent.dim(), top * bh * bw, INIT_STD, rng).without_bias();
        let project_bn = BatchNorm::new("g.project_bn", top, rng);
        let mut deconvs = Vec::new();
        let mut bns = Vec::new();
        for stage in 0..net.depth {
            let cin = net.channels(net.depth - 1 - stage);
            let last = stage + 1 == net.depth;
            let cout = if last {
                3
            } else {
                net.channels(net.depth - 2 - stage)
            };
            let deconv = ConvTranspose2d::new(
                &format!("g.deconv{stage}"),
                cin,
                cout,
                ConvGeom::DOWN2,
                INIT_STD,
                rng,
            );
            // BN supplies the shift.
            deconvs.push(if last { deconv } else { deconv.without_bias() });
            if !last {
                bns.push(BatchNorm::new(&format!("g.bn{stage}"), cout, rng));
            }
        }
        Ok(Self {
            net,
            z_dim: latent.dim(),
            project,
            project_bn,
            deconvs,
            bns,
        })
    }

    fn check_input(&self, z: &Tensor<T>) -> Result<()> {
        if z.shape.len() != 2 || z.shape[1] != self.z_dim {
            return Err(Error::ShapeMismatch(format!(
                "generator expects [n, {}], got {:?}",
                self.z_dim, z.shape
            )));
        }
        Ok(())
    }

    fn projected_shape(&self, n: usize) -> [usize; 4] {
        let (bh, bw) = self.net.base_size();
        [n, self.net.channels(self.net.depth - 1), bh, bw]
    }

    /// Batch-statistics pass; updates BN running averages.
    pub fn forward_train(&mut self, z: &Tensor<T>) -> Result<(Tensor<T>, GeneratorCache<T>)> {
        self.check_input(z)?;
        let n = z.batch();
        let h = self.project.forward(z).reshaped(&self.projected_shape(n));
        let (mut h, project_bn) = self.project_bn.forward_train(&h);
        Activation::Relu.apply(&mut h);
        let mut stage_inputs = Vec::with_capacity(self.deconvs.len());
        let mut bn_caches = Vec::with_capacity(self.bns.len());
        for stage in 0..self.deconvs.len() {
            let mut y = self.deconvs[stage].forward(&h);
            stage_inputs.push(h);
            if stage < self.bns.len() {
                let (mut b, cache) = self.bns[stage].forward_train(&y);
                bn_caches.push(cache);
                Activation::Relu.apply(&mut b);
                h = b;
            } else {
                Activation::Tanh.apply(&mut y);
                h = y;
            }
        }
        Ok((
            h.clone(),
            GeneratorCache {
                z: z.clone(),
                project_bn,
                stage_inputs,
                bn_caches,
                output: h,
            },
        ))
    }

    /// Running-statistics pass; pure.
    pub fn forward_eval(&self, z: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(z)?;
        let n = z.batch();
        let h = self.project.forward(z).reshaped(&self.projected_shape(n));
        let mut h = self.project_bn.forward_eval(&h);
        Activation::Relu.apply(&mut h);
        for stage in 0..self.deconvs.len() {
            let y = self.deconvs[stage].forward(&h);
            h = if stage < self.bns.len() {
                let mut b = self.bns[stage].forward_eval(&y);
                Activation::Relu.apply(&mut b);
                b
            } else {
                let mut y = y;
                Activation::Tanh.apply(&mut y);
                y
            };
        }
        Ok(h)
    }

    /// Accumulates parameter gradients from `d_images`.
    pub fn backward(&mut self, cache: &GeneratorCache<T>, d_images: &Tensor<T>) {
        let mut d = d_images.clone();
        Activation::Tanh.backward(&cache.output, &mut d);
        for stage in (0..self.deconvs.len()).rev() {
            let input = &cache.stage_inputs[stage];
            let mut dx = self.deconvs[stage]
                .backward(input, &d, true, true)
                .expect("input gradient requested");
            // `input` is the ReLU output of the previous block.
            Activation::Relu.backward(input, &mut dx);
            d = if stage == 0 {
                self.project_bn.backward(&cache.project_bn, &dx)
            } else {
                self.bns[stage - 1].backward(&cache.bn_caches[stage - 1], &dx)
            };
        }
        let n = d.batch();
        let d = d.reshaped(&[n, self.project.out_features]);
        self.project.backward(&cache.z, &d, true, false);
    }

    pub fn buffers(&self) -> Vec<&Param<T>> {
        let mut v = self.project_bn.buffers();
        for bn in &self.bns {
            v.extend(bn.buffers());
        }
        v
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.project_bn.buffers_mut();
        for bn in &mut self.bns {
            v.extend(bn.buffers_mut());
        }
        v
    }
}

impl<T: Scalar> Parameterized<T> for Generator<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut v = self.project.params();
        v.extend(self.project_bn.params());
        for (i, d) in self.deconvs.iter().enumerate() {
            v.extend(d.params());
            if let Some(bn) = self.bns.get(i) {
                v.extend(bn.params());
            }
        }
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.project.params_mut();
        v.extend(self.project_bn.params_mut());
        let mut bns = self.bns.iter_mut();
        for d in self.deconvs.iter_mut() {
            v.extend(d.params_mut());
            if let Some(bn) = bns.next() {
                v.extend(bn.params_mut());
            }
        }
        v
    }
}

/// Stride-2 convolutions with leaky ReLU; shared by D and Q.
#[derive(Debug, Clone, PartialEq)]
pub struct Trunk<T> {
    pub convs: Vec<Conv2d<T>>,
    /// Batch norm after every conv but the first.
    pub norms: Vec<BatchNorm<T>>,
    pub leak: f64,
}

#[derive(Debug, Clone)]
pub struct TrunkCache<T> {
    convs: Vec<ConvCache<T>>,
    norms: Vec<BatchNormCache<T>>,
    /// Post-activation output of each stage.
    acts: Vec<Tensor<T>>,
}

impl<T: Scalar> Trunk<T> {
    fn new<R: Rng + ?Sized>(net: &NetConfig, leak: f64, rng: &mut R) -> Self {
        let mut convs = Vec::with_capacity(net.depth);
        let mut norms = Vec::with_capacity(net.depth - 1);
        for i in 0..net.depth {
            let cin = if i == 0 { 3 } else { net.channels(i - 1) };
            let conv = Conv2d::new(
                &format!("trunk.conv{i}"),
                cin,
                net.channels(i),
                ConvGeom::DOWN2,
                INIT_STD,
                rng,
            );
            if i == 0 {
                convs.push(conv);
            } else {
                convs.push(conv.without_bias());
                norms.push(BatchNorm::new(&format!("trunk.bn{i}"), net.channels(i), rng));
            }
        }
        Self { convs, norms, leak }
    }

    /// Batch statistics; updates the running averages.
    fn forward_train(&mut self, x: &Tensor<T>) -> (Tensor<T>, TrunkCache<T>) {
        let act = Activation::LeakyRelu(self.leak);
        let depth = self.convs.len();
        let mut cache = TrunkCache {
            convs: Vec::with_capacity(depth),
            norms: Vec::with_capacity(depth - 1),
            acts: Vec::with_capacity(depth),
        };
        let mut h = x.clone();
        for i in 0..depth {
            let (mut y, c) = self.convs[i].forward(&h);
            cache.convs.push(c);
            if i > 0 {
                let (yn, nc) = self.norms[i - 1].forward_train(&y);
                y = yn;
                cache.norms.push(nc);
            }
            act.apply(&mut y);
            cache.acts.push(y.clone());
            h = y;
        }
        (h, cache)
    }

    /// Running statistics.
    fn forward_eval(&self, x: &Tensor<T>) -> Tensor<T> {
        let act = Activation::LeakyRelu(self.leak);
        let mut h = x.clone();
        for (i, conv) in self.convs.iter().enumerate() {
            let (mut y, _) = conv.forward(&h);
            if i > 0 {
                y = self.norms[i - 1].forward_eval(&y);
            }
            act.apply(&mut y);
            h = y;
        }
        h
    }

    fn backward(
        &mut self,
        cache: &TrunkCache<T>,
        d_features: &Tensor<T>,
        grad_params: bool,
        grad_input: bool,
    ) -> Option<Tensor<T>> {
        let act = Activation::LeakyRelu(self.leak);
        let mut d = d_features.clone();
        for i in (0..self.convs.len()).rev() {
            act.backward(&cache.acts[i], &mut d);
            if i > 0 {
                d = self.norms[i - 1].backward_with(&cache.norms[i - 1], &d, grad_params);
            }
            let need_dx = i > 0 || grad_input;
            match self.convs[i].backward(&cache.convs[i], &d, grad_params, need_dx) {
                Some(dx) => d = dx,
                None => return None,
            }
        }
        Some(d)
    }

    pub fn buffers(&self) -> Vec<&Param<T>> {
        self.norms.iter().flat_map(|n| n.buffers()).collect()
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Param<T>> {
        self.norms.iter_mut().flat_map(|n| n.buffers_mut()).collect()
    }
}

impl<T: Scalar> Parameterized<T> for Trunk<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut v: Vec<&Param<T>> = self.convs.iter().flat_map(|c| c.params()).collect();
        v.extend(self.norms.iter().flat_map(|n| n.params()));
        v
    }
    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v: Vec<&mut Param<T>> =
            self.convs.iter_mut().flat_map(|c| c.params_mut()).collect();
        v.extend(self.norms.iter_mut().flat_map(|n| n.params_mut()));
        v
    }
}

/// Discriminator D and recognizer Q over one shared trunk.
///
/// `d_params` is trunk + D head and `q_params` is trunk + Q head: the trunk
/// tensors are the same storage in both views.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorQ<T> {
    pub net: NetConfig,
    pub latent: LatentSpec,
    pub trunk: Trunk<T>,
    pub d_head: Linear<T>,
    /// Outputs `k_dis` categorical logits then `n_con` continuous means.
    pub q_head: Linear<T>,
}

/// Outputs of the three heads for a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscQOutput<T> {
    /// `[n]`
    pub real_logit: Vec<T>,
    /// `[n, k_dis]`
    pub q_logits: Tensor<T>,
    /// `[n, n_con]`
    pub q_con_mean: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct DiscQCache<T> {
    trunk: TrunkCache<T>,
    features: Tensor<T>,
}

impl<T: Scalar> DiscQCache<T> {
    /// Sign of every trunk LeakyReLU input.
    pub fn activation_pattern(&self) -> Vec<bool> {
        self.trunk
            .acts
            .iter()
            .flat_map(|t| t.data.iter().map(|&v| v > T::zero()))
            .collect()
    }
}

impl<T: Scalar> DiscriminatorQ<T> {
    pub fn new<R: Rng + ?Sized>(
        net: NetConfig,
        latent: &LatentSpec,
        leak: f64,
        rng: &mut R,
    ) -> Result<Self> {
        net.validate()?;
        latent.validate()?;
        let trunk = Trunk::new(&net, leak, rng);
        let f = net.feature_len();
        Ok(Self {
            net,
            latent: *latent,
            trunk,
            d_head: Linear::new("d_head", f, 1, INIT_STD, rng),
            q_head: Linear::new("q_head", f, latent.k_dis + latent.n_con, INIT_STD, rng),
        })
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let (h, w) = self.net.image_size;
        if x.shape.len() != 4 || x.shape[1..] != [3, h, w] {
            return Err(Error::ShapeMismatch(format!(
                "discriminator expects [n, 3, {h}, {w}], got {:?}",
                x.shape
            )));
        }
        Ok(())
    }

    /// Training-mode pass: trunk norms use batch statistics.
    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<(DiscQOutput<T>, DiscQCache<T>)> {
        self.check_input(x)?;
        let (h, trunk) = self.trunk.forward_train(x);
        let features = h.reshaped(&[x.batch(), self.net.feature_len()]);
        Ok((self.heads(&features), DiscQCache { trunk, features }))
    }

    /// Inference pass with the running statistics.
    pub fn forward(&self, x: &Tensor<T>) -> Result<DiscQOutput<T>> {
        self.check_input(x)?;
        let h = self.trunk.forward_eval(x);
        Ok(self.heads(&h.reshaped(&[x.batch(), self.net.feature_len()])))
    }

    fn heads(&self, features: &Tensor<T>) -> DiscQOutput<T> {
        let n = features.batch();
        let real_logit = self.d_head.forward(features).data;
        let q = self.q_head.forward(features);
        let (k, c) = (self.latent.k_dis, self.latent.n_con);
        let mut q_logits = Tensor::zeros(&[n, k]);
        let mut q_con_mean = Tensor::zeros(&[n, c]);
        for i in 0..n {
            let row = q.item(i);
            q_logits.data[i * k..(i + 1) * k].copy_from_slice(&row[..k]);
            q_con_mean.data[i * c..(i + 1) * c].copy_from_slice(&row[k..]);
        }
        DiscQOutput {
            real_logit,
            q_logits,
            q_con_mean,
        }
    }

    /// Backward for the adversarial objective only: gradients for trunk and
    /// D head from `d_logit`.
    pub fn backward_adversarial(&mut self, cache: &DiscQCache<T>, d_logit: &[T]) {
        let n = cache.features.batch();
        let dl = Tensor::from_vec(&[n, 1], d_logit.to_vec());
        let df = self
            .d_head
            .backward(&cache.features, &dl, true, true)
            .expect("feature gradient");
        let df = self.unflatten(df);
        self.trunk.backward(&cache.trunk, &df, true, false);
    }

    /// Backward for the generator/recognizer step: Q head gradients of the
    /// information term `d_q`, nothing for the trunk or D head. Returns the
    /// input gradient of the combined objective.
    pub fn backward_generator_q(
        &mut self,
        cache: &DiscQCache<T>,
        d_logit: &[T],
        d_q: &Tensor<T>,
    ) -> Tensor<T> {
        let n = cache.features.batch();
        let dl = Tensor::from_vec(&[n, 1], d_logit.to_vec());
        let mut df = self
            .d_head
            .backward(&cache.features, &dl, false, true)
            .expect("feature gradient");
        let df_info = self
            .q_head
            .backward(&cache.features, d_q, true, true)
            .expect("feature gradient");
        df.add_assign(&df_info);
        let df = self.unflatten(df);
        self.trunk
            .backward(&cache.trunk, &df, false, true)
            .expect("input gradient")
    }

    fn unflatten(&self, d: Tensor<T>) -> Tensor<T> {
        let n = d.batch();
        let (bh, bw) = self.net.base_size();
        d.reshaped(&[n, self.net.channels(self.net.depth - 1), bh, bw])
    }

    /// Trunk followed by the D head.
    pub fn d_params(&self) -> Vec<&Param<T>> {
        let mut v = self.trunk.params();
        v.extend(self.d_head.params());
        v
    }

    pub fn d_params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.trunk.params_mut();
        v.extend(self.d_head.params_mut());
        v
    }

    /// Trunk followed by the Q head.
    pub fn q_params(&self) -> Vec<&Param<T>> {
        let mut v = self.trunk.params();
        v.extend(self.q_head.params());
        v
    }

    pub fn q_params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.trunk.params_mut();
        v.extend(self.q_head.params_mut());
        v
    }
}

impl<T: Scalar> Parameterized<T> for DiscriminatorQ<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut v = self.trunk.params();
        v.extend(self.d_head.params());
        v.extend(self.q_head.params());
        v
    }
    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.trunk.params_mut();
        v.extend(self.d_head.params_mut());
        v.extend(self.q_head.params_mut());
        v
    }
}
