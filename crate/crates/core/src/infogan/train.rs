use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::GanCheckpoint;
use super::latent::{codes_to_tensor, sample_latent, LatentSpec};
use super::loss::{loss_discriminator, loss_generator_q};
use super::model::{DiscriminatorQ, Generator, NetConfig};
use super::sample_grid;
use crate::dataset::ImageRecord;
use crate::error::{Error, Result};
use crate::nn::{Adam, AdamConfig, Parameterized, Tensor};
use crate::scalar::Scalar;

pub const LOSS_LOG_FILE: &str = "loss_log.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.ickp";

fn default_width() -> usize {
    64
}
fn default_depth() -> usize {
    4
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda: f64,
    pub lr_d: f64,
    pub lr_gq: f64,
    pub batch: usize,
    pub epochs: usize,
    pub leak: f64,
    pub seed: u64,
    pub image_size: (usize, usize),
    pub beta1: f64,
    pub beta2: f64,
    /// Trunk width of the first stage; doubles per stage.
    pub width: usize,
    pub depth: usize,
    /// Emit a sample grid every this many epochs; 0 disables.
    pub sample_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            lr_d: 2e-4,
            lr_gq: 2e-3,
            batch: 100,
            epochs: 200,
            leak: 0.1,
            seed: 0,
            image_size: (32, 64),
            beta1: 0.5,
            beta2: 0.999,
            width: default_width(),
            depth: default_depth(),
            sample_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [("lr_d", self.lr_d), ("lr_gq", self.lr_gq)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(field, format!("must be > 0, got {v}")));
            }
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config("lambda", "must be finite and >= 0"));
        }
        if self.batch < 2 {
            return Err(Error::config("batch", "must be at least 2"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("beta1/beta2", "must lie in [0, 1)"));
        }
        if !(self.leak >= 0.0 && self.leak < 1.0) {
            return Err(Error::config("leak", "must lie in [0, 1)"));
        }
        self.net().validate()
    }

    pub fn net(&self) -> NetConfig {
        NetConfig {
            width: self.width,
            depth: self.depth,
            image_size: self.image_size,
        }
    }
}

/// Mean losses over one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub d_loss: f64,
    pub g_adv: f64,
    pub q_cat: f64,
    pub q_con: f64,
}

/// Network input `[n, 3, H, W]` in `[-1, 1]` from `[0, 1]` HWC records.
pub fn records_to_tensor<T: Scalar>(records: &[&ImageRecord<T>]) -> Tensor<T> {
    let (h, w) = records[0].size();
    let hw = h * w;
    let two = T::from_f64_lossy(2.0);
    let mut t = Tensor::zeros(&[records.len(), 3, h, w]);
    for (i, r) in records.iter().enumerate() {
        let dst = &mut t.data[i * 3 * hw..(i + 1) * 3 * hw];
        for p in 0..hw {
            for c in 0..3 {
                dst[c * hw + p] = r.pixels[p * 3 + c] * two - T::one();
            }
        }
    }
    t
}

/// Inverse of [`records_to_tensor`] for one item: `[3, H, W]` in `[-1, 1]`
/// to HWC in `[0, 1]`.
pub fn item_to_pixels<T: Scalar>(item: &[T], h: usize, w: usize) -> Vec<T> {
    let hw = h * w;
    let half = T::from_f64_lossy(0.5);
    let mut px = vec![T::zero(); hw * 3];
    for p in 0..hw {
        for c in 0..3 {
            px[p * 3 + c] = ((item[c * hw + p] + T::one()) * half).max(T::zero()).min(T::one());
        }
    }
    px
}

impl<T: Scalar> GanCheckpoint<T> {
    /// Freshly initialized networks and optimizers; everything derives from `config.seed`.
    pub fn init(config: TrainConfig, latent: LatentSpec) -> Result<Self> {
        config.validate()?;
        latent.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let generator = Generator::new(config.net(), &latent, &mut rng)?;
        let disc_q = DiscriminatorQ::new(config.net(), &latent, config.leak, &mut rng)?;
        Ok(Self {
            config,
            latent,
            epoch: 0,
            generator,
            disc_q,
            opt_d: Adam::new(AdamConfig::new(config.lr_d, config.beta1, config.beta2)),
            opt_gq: Adam::new(AdamConfig::new(config.lr_gq, config.beta1, config.beta2)),
            rng,
        })
    }


    /// One D step followed by one joint G+Q step on `real` (network range).
    pub fn train_step(&mut self, real: &Tensor<T>) -> Result<EpochLog> {
        let n = real.batch();
        let lambda = T::from_f64_lossy(self.config.lambda);
        let codes = sample_latent::<T, _>(n, &self.latent, &mut self.rng);
        let z = codes_to_tensor(&codes, &self.latent)?;
        let (fake, g_cache) = self.generator.forward_train(&z)?;

        self.disc_q.zero_grad();
        let (out_real, cache_real) = self.disc_q.forward_train(real)?;
        let (out_fake, cache_fake) = self.disc_q.forward_train(&fake)?;
        let d = loss_discriminator(&out_real.real_logit, &out_fake.real_logit)?;
        self.disc_q.backward_adversarial(&cache_real, &d.d_real);
        self.disc_q.backward_adversarial(&cache_fake, &d.d_fake);
        self.opt_d.update(&mut self.disc_q.d_params_mut());

        self.disc_q.zero_grad();
        self.generator.zero_grad();
        let (out, cache) = self.disc_q.forward_train(&fake)?;
        let gq = loss_generator_q(
            &out.real_logit,
            &out.q_logits,
            &out.q_con_mean,
            &codes,
            lambda,
        )?;
        let d_fake = self.disc_q.backward_generator_q(&cache, &gq.d_logit, &gq.d_q);
        self.generator.backward(&g_cache, &d_fake);
        // The shared trunk moves only with D.
        let mut params = self.generator.params_mut();
        params.extend(self.disc_q.q_head.params_mut());
        self.opt_gq.update(&mut params);

        Ok(EpochLog {
            epoch: self.epoch,
            d_loss: d.value.to_f64_lossy(),
            g_adv: gq.parts.adv.to_f64_lossy(),
            q_cat: gq.parts.cat.to_f64_lossy(),
            q_con: gq.parts.con.to_f64_lossy(),
        })
    }

    /// One pass over `corpus` in a fresh shuffled order. A trailing batch
    /// smaller than two images is skipped.
    pub fn train_epoch(&mut self, corpus: &[ImageRecord<T>]) -> Result<EpochLog> {
        let mut order: Vec<usize> = (0..corpus.len()).collect();
        order.shuffle(&mut self.rng);
        let mut sum = [0.0f64; 4];
        let mut batches = 0usize;
        for (b, chunk) in order.chunks(self.config.batch).enumerate() {
            if chunk.len() < 2 {
                continue;
            }
            let refs: Vec<&ImageRecord<T>> = chunk.iter().map(|&i| &corpus[i]).collect();
            let real = records_to_tensor(&refs);
            let log = self.train_step(&real).map_err(|e| match e {
                Error::NonFiniteLoss(m) => {
                    Error::NonFiniteLoss(format!("epoch {} batch {b}: {m}", self.epoch + 1))
                }
                other => other,
            })?;
            sum[0] += log.d_loss;
            sum[1] += log.g_adv;
            sum[2] += log.q_cat;
            sum[3] += log.q_con;
            batches += 1;
        }
        self.epoch += 1;
        let nb = batches.max(1) as f64;
        Ok(EpochLog {
            epoch: self.epoch,
            d_loss: sum[0] / nb,
            g_adv: sum[1] / nb,
            q_cat: sum[2] / nb,
            q_con: sum[3] / nb,
        })
    }
}

fn check_corpus<T: Scalar>(corpus: &[ImageRecord<T>], cfg: &TrainConfig) -> Result<()> {
    if corpus.len() < cfg.batch {
        return Err(Error::CorpusTooSmall {
            have: corpus.len(),
            need: cfg.batch,
        });
    }
    for r in corpus {
        if r.size() != cfg.image_size {
            return Err(Error::ShapeMismatch(format!(
                "`{}` is {}x{}, training expects {}x{}",
                r.id, r.height, r.width, cfg.image_size.0, cfg.image_size.1
            )));
        }
        if r.pixels.len() != r.height * r.width * 3 {
            return Err(Error::SizeMismatch {
                expected: r.height * r.width * 3,
                got: r.pixels.len(),
            });
        }
    }
    Ok(())
}

/// Trains from scratch, writing the loss log, periodic sample grids and the
/// final checkpoint under `out_dir`.
pub fn train<T: Scalar>(
    corpus: &[ImageRecord<T>],
    cfg: &TrainConfig,
    spec: &LatentSpec,
    out_dir: &Path,
) -> Result<GanCheckpoint<T>> {
    train_with(corpus, cfg, spec, out_dir, |_| {})
}

/// [`train`] with a per-epoch callback.
pub fn train_with<T: Scalar, F: FnMut(&EpochLog)>(
    corpus: &[ImageRecord<T>],
    cfg: &TrainConfig,
    spec: &LatentSpec,
    out_dir: &Path,
    mut on_epoch: F,
) -> Result<GanCheckpoint<T>> {
    cfg.validate()?;
    check_corpus(corpus, cfg)?;
    let mut ckpt = GanCheckpoint::init(*cfg, *spec)?;
    fs::create_dir_all(out_dir)?;
    let mut log = fs::File::create(out_dir.join(LOSS_LOG_FILE))?;
    writeln!(log, "epoch,d_loss,g_adv,q_cat,q_con")?;
    for _ in 0..cfg.epochs {
        let e = ckpt.train_epoch(corpus)?;
        writeln!(
            log,
            "{},{:.6},{:.6},{:.6},{:.6}",
            e.epoch, e.d_loss, e.g_adv, e.q_cat, e.q_con
        )?;
        log.flush()?;
        if cfg.sample_every > 0 && e.epoch % cfg.sample_every == 0 {
            let rows = spec.k_dis.min(10);
            let path = out_dir.join("samples").join(format!("epoch_{:04}.png", e.epoch));
            let cols = if spec.n_con > 0 { 10 } else { 1 };
            sample_grid(&ckpt, rows, cols, 0, cfg.seed, &path)?;
        }
        on_epoch(&e);
    }
    ckpt.save(&out_dir.join(CHECKPOINT_FILE))?;
    Ok(ckpt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synth::{generate_synthetic, Factor, SynthSpec};

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            batch: 4,
            epochs: 2,
            width: 4,
            depth: 2,
            image_size: (8, 16),
            ..TrainConfig::default()
        }
    }

    fn tiny_corpus() -> Vec<ImageRecord<f32>> {
        let mut s = SynthSpec::new(10, &[(Factor::ColorSystem, 2)], 1);
        s.image_size = (8, 16);
        generate_synthetic(&s).unwrap()
    }

    #[test]
    fn tensor_round_trip() {
        let c = tiny_corpus();
        let t = records_to_tensor(&[&c[0], &c[1]]);
        assert_eq!(t.shape, vec![2, 3, 8, 16]);
        assert!(t.data.iter().all(|&v| (-1.0..=1.0).contains(&v)));
        let back = item_to_pixels(t.item(1), 8, 16);
        for (a, b) in back.iter().zip(&c[1].pixels) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_epochs_gives_initial_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..tiny_cfg()
        };
        let spec = LatentSpec::new(2, 1, 3).unwrap();
        let ck = train(&tiny_corpus(), &cfg, &spec, dir.path()).unwrap();
        assert_eq!(ck.epoch, 0);
        let init = GanCheckpoint::<f32>::init(cfg, spec).unwrap();
        assert_eq!(ck.generator, init.generator);
        assert!(dir.path().join(CHECKPOINT_FILE).exists());
        let log = fs::read_to_string(dir.path().join(LOSS_LOG_FILE)).unwrap();
        assert_eq!(log.lines().count(), 1);
    }

    #[test]
    fn log_has_one_row_per_epoch_and_params_move() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig {
            sample_every: 1,
            ..tiny_cfg()
        };
        let spec = LatentSpec::new(2, 1, 3).unwrap();
        let ck = train(&tiny_corpus(), &cfg, &spec, dir.path()).unwrap();
        assert_eq!(ck.epoch, 2);
        let log = fs::read_to_string(dir.path().join(LOSS_LOG_FILE)).unwrap();
        assert_eq!(log.lines().count(), 3);
        assert!(log.starts_with("epoch,d_loss,g_adv,q_cat,q_con\n"));
        assert!(dir.path().join("samples/epoch_0002.png").exists());
        let init = GanCheckpoint::<f32>::init(cfg, spec).unwrap();
        assert_ne!(ck.disc_q.trunk, init.disc_q.trunk);
        assert_ne!(ck.generator, init.generator);
        assert_eq!(ck.disc_q.d_params().len(), init.disc_q.d_params().len());
    }

    #[test]
    fn corpus_smaller_than_batch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig {
            batch: 20,
            ..tiny_cfg()
        };
        let spec = LatentSpec::new(2, 1, 3).unwrap();
        let err = train(&tiny_corpus(), &cfg, &spec, dir.path()).unwrap_err();
        assert!(matches!(err, Error::CorpusTooSmall { have: 10, need: 20 }));
    }

    #[test]
    fn config_validation_names_field() {
        let bad = TrainConfig {
            lr_d: 0.0,
            ..TrainConfig::default()
        };
        match bad.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "lr_d"),
            other => panic!("{other:?}"),
        }
        assert!(TrainConfig {
            batch: 1,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }
}
