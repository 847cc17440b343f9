//! Layers with explicit forward/backward passes.
//!
//! Each `forward` returns the output plus whatever the matching `backward`
//! needs. `backward` accumulates into the layer's parameter gradients and
//! returns the input gradient when asked for it.

use rand::Rng;

use super::param::{Param, Parameterized};
use super::tensor::Tensor;
use crate::scalar::Scalar;

/// Square-kernel convolution geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    /// 4×4 kernel, stride 2, padding 1: halves (or doubles, transposed) each side.
    pub const DOWN2: ConvGeom = ConvGeom {
        kernel: 4,
        stride: 2,
        pad: 1,
    };

    pub fn out_size(&self, size: usize) -> usize {
        (size + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn transposed_out_size(&self, size: usize) -> usize {
        (size - 1) * self.stride + self.kernel - 2 * self.pad
    }
}

/// Unfolds one `(c, h, w)` item into rows of a `(c·k·k, ld)` patch matrix,
/// writing `oh·ow` columns starting at column `offset`.
#[allow(clippy::too_many_arguments)]
pub fn im2col<T: Scalar>(
    x: &[T],
    c: usize,
    h: usize,
    w: usize,
    g: ConvGeom,
    oh: usize,
    ow: usize,
    col: &mut [T],
    ld: usize,
    offset: usize,
) {
    let k = g.kernel;
    for ci in 0..c {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                let r = (ci * k + ki) * k + kj;
                let row = &mut col[r * ld + offset..r * ld + offset + oh * ow];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    let dst = &mut row[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= h as isize {
                        dst.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        *d = if ix < 0 || ix >= w as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters-and-adds patch columns back onto `(c, h, w)`.
#[allow(clippy::too_many_arguments)]
pub fn col2im<T: Scalar>(
    col: &[T],
    c: usize,
    h: usize,
    w: usize,
    g: ConvGeom,
    oh: usize,
    ow: usize,
    x: &mut [T],
    ld: usize,
    offset: usize,
) {
    let k = g.kernel;
    for ci in 0..c {
        let plane = &mut x[ci * h * w..(ci + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                let r = (ci * k + ki) * k + kj;
                let row = &col[r * ld + offset..r * ld + offset + oh * ow];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    for ox in 0..ow {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && ix < w as isize {
                            dst[ix as usize] += row[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// `[n, c, s]` batch → `(c, n·s)` matrix.
fn to_channel_major<T: Scalar>(x: &[T], n: usize, c: usize, s: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for i in 0..n {
        for ch in 0..c {
            out[ch * n * s + i * s..ch * n * s + (i + 1) * s]
                .copy_from_slice(&x[(i * c + ch) * s..(i * c + ch + 1) * s]);
        }
    }
    out
}

/// `(c, n·s)` matrix → `[n, c, s]` batch.
fn from_channel_major<T: Scalar>(m: &[T], n: usize, c: usize, s: usize, out: &mut [T]) {
    for i in 0..n {
        for ch in 0..c {
            out[(i * c + ch) * s..(i * c + ch + 1) * s]
                .copy_from_slice(&m[ch * n * s + i * s..ch * n * s + (i + 1) * s]);
        }
    }
}

fn add_channel_bias<T: Scalar>(y: &mut [T], bias: &[T], spatial: usize) {
    let c = bias.len();
    for (j, chunk) in y.chunks_exact_mut(spatial).enumerate() {
        let b = bias[j % c];
        chunk.iter_mut().for_each(|v| *v += b);
    }
}

fn accumulate_channel_bias_grad<T: Scalar>(db: &mut [T], dy: &[T], spatial: usize) {
    let c = db.len();
    for (j, chunk) in dy.chunks_exact(spatial).enumerate() {
        db[j % c] += chunk.iter().copied().sum();
    }
}

/// Strided 2-D convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub geom: ConvGeom,
    /// `(out, in·k·k)`
    pub weight: Param<T>,
    /// Absent when a normalization layer follows.
    pub bias: Option<Param<T>>,
}

/// Saved patch matrix of a [`Conv2d`] forward pass.
#[derive(Debug, Clone)]
pub struct ConvCache<T> {
    in_shape: Vec<usize>,
    /// `(in·k·k, n·oh·ow)`
    cols: Vec<T>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        geom: ConvGeom,
        init_std: f64,
        rng: &mut R,
    ) -> Self {
        let kk = geom.kernel * geom.kernel;
        Self {
            in_channels,
            out_channels,
            geom,
            weight: Param::normal(
                format!("{name}.weight"),
                &[out_channels, in_channels * kk],
                0.0,
                init_std,
                rng,
            ),
            bias: Some(Param::zeros(format!("{name}.bias"), &[out_channels])),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> (Tensor<T>, ConvCache<T>) {
        let (n, c, h, w) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
        assert_eq!(c, self.in_channels, "conv input channels");
        let (oh, ow) = (self.geom.out_size(h), self.geom.out_size(w));
        let kdim = c * self.geom.kernel * self.geom.kernel;
        let p = oh * ow;
        let ld = n * p;
        let mut cols = vec![T::zero(); kdim * ld];
        for i in 0..n {
            im2col(x.item(i), c, h, w, self.geom, oh, ow, &mut cols, ld, i * p);
        }
        let out = self.out_channels;
        let mut ym = vec![T::zero(); out * ld];
        T::gemm(
            out,
            kdim,
            ld,
            T::one(),
            &self.weight.value,
            kdim as isize,
            1,
            &cols,
            ld as isize,
            1,
            T::zero(),
            &mut ym,
            ld as isize,
            1,
        );
        let mut y = Tensor::zeros(&[n, out, oh, ow]);
        from_channel_major(&ym, n, out, p, &mut y.data);
        if let Some(b) = &self.bias {
            add_channel_bias(&mut y.data, &b.value, p);
        }
        (
            y,
            ConvCache {
                in_shape: x.shape.clone(),
                cols,
            },
        )
    }

    /// Accumulates parameter gradients when `grad_params`; returns `dx` when `grad_input`.
    pub fn backward(
        &mut self,
        cache: &ConvCache<T>,
        dy: &Tensor<T>,
        grad_params: bool,
        grad_input: bool,
    ) -> Option<Tensor<T>> {
        let (n, c, h, w) = (
            cache.in_shape[0],
            cache.in_shape[1],
            cache.in_shape[2],
            cache.in_shape[3],
        );
        let (oh, ow) = (dy.shape[2], dy.shape[3]);
        let kdim = c * self.geom.kernel * self.geom.kernel;
        let p = oh * ow;
        let ld = n * p;
        let out = self.out_channels;
        let dym = to_channel_major(&dy.data, n, out, p);
        if grad_params {
            T::gemm(
                out,
                ld,
                kdim,
                T::one(),
                &dym,
                ld as isize,
                1,
                &cache.cols,
                1,
                ld as isize,
                T::one(),
                &mut self.weight.grad,
                kdim as isize,
                1,
            );
            if let Some(b) = &mut self.bias {
                accumulate_channel_bias_grad(&mut b.grad, &dy.data, p);
            }
        }
        if !grad_input {
            return None;
        }
        let mut dcol = vec![T::zero(); kdim * ld];
        T::gemm(
            kdim,
            out,
            ld,
            T::one(),
            &self.weight.value,
            1,
            kdim as isize,
            &dym,
            ld as isize,
            1,
            T::zero(),
            &mut dcol,
            ld as isize,
            1,
        );
        let mut dx = Tensor::zeros(&cache.in_shape);
        let len = c * h * w;
        for i in 0..n {
            col2im(
                &dcol,
                c,
                h,
                w,
                self.geom,
                oh,
                ow,
                &mut dx.data[i * len..(i + 1) * len],
                ld,
                i * p,
            );
        }
        Some(dx)
    }
}

impl<T> Conv2d<T> {
    pub fn without_bias(mut self) -> Self {
        self.bias = None;
        self
    }
}

impl<T: Scalar> Parameterized<T> for Conv2d<T> {
    fn params(&self) -> Vec<&Param<T>> {
        std::iter::once(&self.weight).chain(&self.bias).collect()
    }
    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        std::iter::once(&mut self.weight).chain(&mut self.bias).collect()
    }
}

/// Transposed ("up") convolution, the adjoint of [`Conv2d`] in its spatial map.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvTranspose2d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub geom: ConvGeom,
    /// `(in, out·k·k)`
    pub weight: Param<T>,
    /// Absent when a normalization layer follows.
    pub bias: Option<Param<T>>,
}

impl<T: Scalar> ConvTranspose2d<T> {
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        geom: ConvGeom,
        init_std: f64,
        rng: &mut R,
    ) -> Self {
        let kk = geom.kernel * geom.kernel;
        Self {
            in_channels,
            out_channels,
            geom,
            weight: Param::normal(
                format!("{name}.weight"),
                &[in_channels, out_channels * kk],
                0.0,
                init_std,
                rng,
            ),
            bias: Some(Param::zeros(format!("{name}.bias"), &[out_channels])),
        }
    }

    /// The backward pass needs only the input, so there is no separate cache.
    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        let (n, c, h, w) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
        assert_eq!(c, self.in_channels, "deconv input channels");
        let (oh, ow) = (
            self.geom.transposed_out_size(h),
            self.geom.transposed_out_size(w),
        );
        let kt = self.out_channels * self.geom.kernel * self.geom.kernel;
        let hw = h * w;
        let ld = n * hw;
        let xm = to_channel_major(&x.data, n, c, hw);
        let mut col = vec![T::zero(); kt * ld];
        T::gemm(
            kt,
            c,
            ld,
            T::one(),
            &self.weight.value,
            1,
            kt as isize,
            &xm,
            ld as isize,
            1,
            T::zero(),
            &mut col,
            ld as isize,
            1,
        );
        let mut y = Tensor::zeros(&[n, self.out_channels, oh, ow]);
        let ylen = self.out_channels * oh * ow;
        for i in 0..n {
            let ys = &mut y.data[i * ylen..(i + 1) * ylen];
            col2im(&col, self.out_channels, oh, ow, self.geom, h, w, ys, ld, i * hw);
        }
        if let Some(b) = &self.bias {
            add_channel_bias(&mut y.data, &b.value, oh * ow);
        }
        y
    }

    pub fn backward(
        &mut self,
        x: &Tensor<T>,
        dy: &Tensor<T>,
        grad_params: bool,
        grad_input: bool,
    ) -> Option<Tensor<T>> {
        let (n, c, h, w) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
        let (oh, ow) = (dy.shape[2], dy.shape[3]);
        let kt = self.out_channels * self.geom.kernel * self.geom.kernel;
        let hw = h * w;
        let ld = n * hw;
        let mut dcol = vec![T::zero(); kt * ld];
        for i in 0..n {
            im2col(dy.item(i), self.out_channels, oh, ow, self.geom, h, w, &mut dcol, ld, i * hw);
        }
        if grad_params {
            let xm = to_channel_major(&x.data, n, c, hw);
            T::gemm(
                c,
                ld,
                kt,
                T::one(),
                &xm,
                ld as isize,
                1,
                &dcol,
                1,
                ld as isize,
                T::one(),
                &mut self.weight.grad,
                kt as isize,
                1,
            );
            if let Some(b) = &mut self.bias {
                accumulate_channel_bias_grad(&mut b.grad, &dy.data, oh * ow);
            }
        }
        if !grad_input {
            return None;
        }
        let mut dxm = vec![T::zero(); c * ld];
        T::gemm(
            c,
            kt,
            ld,
            T::one(),
            &self.weight.value,
            kt as isize,
            1,
            &dcol,
            ld as isize,
            1,
            T::zero(),
            &mut dxm,
            ld as isize,
            1,
        );
        let mut dx = Tensor::zeros(&x.shape);
        from_channel_major(&dxm, n, c, hw, &mut dx.data);
        Some(dx)
    }
}

impl<T> ConvTranspose2d<T> {
    pub fn without_bias(mut self) -> Self {
        self.bias = None;
        self
    }
}

impl<T: Scalar> Parameterized<T> for ConvTranspose2d<T> {
    fn params(&self) -> Vec<&Param<T>> {
        std::iter::once(&self.weight).chain(&self.bias).collect()
    }
    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        std::iter::once(&mut self.weight).chain(&mut self.bias).collect()
    }
}

/// Fully connected layer, `y = x·Wᵀ + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub in_features: usize,
    pub out_features: usize,
    /// `(out, in)`
    pub weight: Param<T>,
    /// Absent when a normalization layer follows.
    pub bias: Option<Param<T>>,
}

impl<T: Scalar> Linear<T> {
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        in_features: usize,
        out_features: usize,
        init_std: f64,
        rng: &mut R,
    ) -> Self {
        Self {
            in_features,
            out_features,
            weight: Param::normal(
                format!("{name}.weight"),
                &[out_features, in_features],
                0.0,
                init_std,
                rng,
            ),
            bias: Some(Param::zeros(format!("{name}.bias"), &[out_features])),
        }
    }

    /// Accepts any `[n, ...]` input whose trailing dims flatten to `in_features`.
    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        let n = x.batch();
        assert_eq!(x.item_len(), self.in_features, "linear input features");
        let mut y = Tensor::zeros(&[n, self.out_features]);
        if let Some(b) = &self.bias {
            for i in 0..n {
                y.data[i * self.out_features..(i + 1) * self.out_features].copy_from_slice(&b.value);
            }
        }
        T::gemm(
            n,
            self.in_features,
            self.out_features,
            T::one(),
            &x.data,
            self.in_features as isize,
            1,
            &self.weight.value,
            1,
            self.in_features as isize,
            T::one(),
            &mut y.data,
            self.out_features as isize,
            1,
        );
        y
    }

    pub fn backward(
        &mut self,
        x: &Tensor<T>,
        dy: &Tensor<T>,
        grad_params: bool,
        grad_input: bool,
    ) -> Option<Tensor<T>> {
        let n = x.batch();
        let (fi, fo) = (self.in_features, self.out_features);
        if grad_params {
            T::gemm(
                fo,
                n,
                fi,
                T::one(),
                &dy.data,
                1,
                fo as isize,
                &x.data,
                fi as isize,
                1,
                T::one(),
                &mut self.weight.grad,
                fi as isize,
                1,
            );
            if let Some(b) = &mut self.bias {
                for i in 0..n {
                    for (g, &d) in b.grad.iter_mut().zip(dy.item(i)) {
                        *g += d;
                    }
                }
            }
        }
        grad_input.then(|| {
            let mut dx = Tensor::zeros(&x.shape);
            T::gemm(
                n,
                fo,
                fi,
                T::one(),
                &dy.data,
                fo as isize,
                1,
                &self.weight.value,
                fi as isize,
                1,
                T::zero(),
                &mut dx.data,
                fi as isize,
                1,
            );
            dx
        })
    }
}

impl<T> Linear<T> {
    pub fn without_bias(mut self) -> Self {
        self.bias = None;
        self
    }
}

impl<T: Scalar> Parameterized<T> for Linear<T> {
    fn params(&self) -> Vec<&Param<T>> {
        std::iter::once(&self.weight).chain(&self.bias).collect()
    }
    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        std::iter::once(&mut self.weight).chain(&mut self.bias).collect()
    }
}

/// Per-channel batch normalization over `[n, c, ...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<T> {
    pub channels: usize,
    pub gamma: Param<T>,
    pub beta: Param<T>,
    /// Running statistics; stored as params for checkpointing, never trained.
    pub running_mean: Param<T>,
    pub running_var: Param<T>,
    pub momentum: T,
    pub eps: T,
}

#[derive(Debug, Clone)]
pub struct BatchNormCache<T> {
    xhat: Vec<T>,
    inv_std: Vec<T>,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new<R: Rng + ?Sized>(name: &str, channels: usize, rng: &mut R) -> Self {
        Self {
            channels,
            gamma: Param::normal(format!("{name}.gamma"), &[channels], 1.0, 0.02, rng),
            beta: Param::zeros(format!("{name}.beta"), &[channels]),
            running_mean: Param::zeros(format!("{name}.running_mean"), &[channels]),
            running_var: Param::filled(format!("{name}.running_var"), &[channels], T::one()),
            momentum: T::from_f64_lossy(0.1),
            eps: T::from_f64_lossy(1e-5),
        }
    }

    fn spatial(&self, x: &Tensor<T>) -> usize {
        assert_eq!(x.shape[1], self.channels, "batchnorm channels");
        x.shape[2..].iter().product()
    }

    /// Normalizes with batch statistics and updates the running averages.
    pub fn forward_train(&mut self, x: &Tensor<T>) -> (Tensor<T>, BatchNormCache<T>) {
        let n = x.batch();
        let s = self.spatial(x);
        let c = self.channels;
        let count = T::from_usize_lossy(n * s);
        let mut y = Tensor::zeros(&x.shape);
        let mut xhat = vec![T::zero(); x.len()];
        let mut inv_std = vec![T::zero(); c];
        for ch in 0..c {
            let idx = |i: usize| (i * c + ch) * s;
            let mut mean = T::zero();
            for i in 0..n {
                mean += x.data[idx(i)..idx(i) + s].iter().copied().sum();
            }
            mean = mean / count;
            let mut var = T::zero();
            for i in 0..n {
                for &v in &x.data[idx(i)..idx(i) + s] {
                    var += (v - mean) * (v - mean);
                }
            }
            var = var / count;
            let istd = T::one() / (var + self.eps).sqrt();
            inv_std[ch] = istd;
            let (g, b) = (self.gamma.value[ch], self.beta.value[ch]);
            for i in 0..n {
                for j in idx(i)..idx(i) + s {
                    let xh = (x.data[j] - mean) * istd;
                    xhat[j] = xh;
                    y.data[j] = g * xh + b;
                }
            }
            let m = self.momentum;
            let unbiased = if n * s > 1 {
                var * count / (count - T::one())
            } else {
                var
            };
            self.running_mean.value[ch] = (T::one() - m) * self.running_mean.value[ch] + m * mean;
            self.running_var.value[ch] = (T::one() - m) * self.running_var.value[ch] + m * unbiased;
        }
        (y, BatchNormCache { xhat, inv_std })
    }

    /// Normalizes with the running statistics.
    pub fn forward_eval(&self, x: &Tensor<T>) -> Tensor<T> {
        let s = self.spatial(x);
        let c = self.channels;
        let mut y = x.clone();
        for (j, v) in y.data.iter_mut().enumerate() {
            let ch = (j / s) % c;
            let istd = T::one() / (self.running_var.value[ch] + self.eps).sqrt();
            *v = self.gamma.value[ch] * (*v - self.running_mean.value[ch]) * istd
                + self.beta.value[ch];
        }
        y
    }

    pub fn backward(&mut self, cache: &BatchNormCache<T>, dy: &Tensor<T>) -> Tensor<T> {
        self.backward_with(cache, dy, true)
    }

    /// As [`BatchNorm::backward`]; `grad_params = false` leaves gamma and beta
    /// gradients untouched.
    pub fn backward_with(
        &mut self,
        cache: &BatchNormCache<T>,
        dy: &Tensor<T>,
        grad_params: bool,
    ) -> Tensor<T> {
        let n = dy.batch();
        let s = self.spatial(dy);
        let c = self.channels;
        let count = T::from_usize_lossy(n * s);
        let mut dx = Tensor::zeros(&dy.shape);
        for ch in 0..c {
            let idx = |i: usize| (i * c + ch) * s;
            let g = self.gamma.value[ch];
            let mut sum_dy = T::zero();
            let mut sum_dy_xhat = T::zero();
            for i in 0..n {
                for j in idx(i)..idx(i) + s {
                    sum_dy += dy.data[j];
                    sum_dy_xhat += dy.data[j] * cache.xhat[j];
                }
            }
            if grad_params {
                self.gamma.grad[ch] += sum_dy_xhat;
                self.beta.grad[ch] += sum_dy;
            }
            let scale = g * cache.inv_std[ch] / count;
            for i in 0..n {
                for j in idx(i)..idx(i) + s {
                    dx.data[j] =
                        scale * (count * dy.data[j] - sum_dy - cache.xhat[j] * sum_dy_xhat);
                }
            }
        }
        dx
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.running_mean, &mut self.running_var]
    }

    pub fn buffers(&self) -> Vec<&Param<T>> {
        vec![&self.running_mean, &self.running_var]
    }
}

impl<T: Scalar> Parameterized<T> for BatchNorm<T> {
    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.gamma, &self.beta]
    }
    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.gamma, &mut self.beta]
    }
}

/// In-place activations. Backward passes use the activation's output, which
/// determines the local slope for every function here.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
    Tanh,
}

impl Activation {
    pub fn apply<T: Scalar>(self, x: &mut Tensor<T>) {
        match self {
            Activation::Relu => x.data.iter_mut().for_each(|v| *v = v.max(T::zero())),
            Activation::LeakyRelu(leak) => {
                let leak = T::from_f64_lossy(leak);
                x.data.iter_mut().for_each(|v| {
                    if *v < T::zero() {
                        *v = *v * leak
                    }
                })
            }
            Activation::Tanh => x.data.iter_mut().for_each(|v| *v = v.tanh()),
        }
    }

    /// Turns `dy` into `dx` in place given the forward output `y`.
    pub fn backward<T: Scalar>(self, y: &Tensor<T>, dy: &mut Tensor<T>) {
        match self {
            Activation::Relu => dy.data.iter_mut().zip(&y.data).for_each(|(d, &o)| {
                if o <= T::zero() {
                    *d = T::zero()
                }
            }),
            Activation::LeakyRelu(leak) => {
                let leak = T::from_f64_lossy(leak);
                dy.data.iter_mut().zip(&y.data).for_each(|(d, &o)| {
                    if o < T::zero() {
                        *d = *d * leak
                    }
                })
            }
            Activation::Tanh => dy
                .data
                .iter_mut()
                .zip(&y.data)
                .for_each(|(d, &o)| *d = *d * (T::one() - o * o)),
        }
    }
}
