//! Central-difference checks of the analytic gradients used by training.
//!
//! D's loss is checked for trunk and D head, the joint G+Q loss for G and
//! the Q head.
//!
//! A draw whose `±step` evaluations switch any ReLU or LeakyReLU unit is
//! rejected and redrawn; the count is reported.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::checkpoint::GanCheckpoint;
use super::latent::{codes_to_tensor, LatentCode, LatentSpec};
use super::model::{DiscQOutput, DiscriminatorQ};
use super::loss::{loss_discriminator, loss_generator_q};
use super::train::TrainConfig;
use crate::error::Result;
use crate::nn::{Param, Parameterized, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    Generator,
    Trunk,
    DHead,
    QHead,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradEntry {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradEntry {
    pub fn rel_err(&self) -> f64 {
        let scale = self.analytic.abs().max(self.numeric.abs());
        if scale == 0.0 {
            0.0
        } else {
            (self.analytic - self.numeric).abs() / scale
        }
    }
}

/// Images 4×8, trunk width 8, two stages, `k_dis = 3`, `n_con = 1`, `n_noise = 4`.
///
/// Weights and biases are redrawn at unit-gain scale. With the training
/// initializer pre-activations are so small that a `1e-3` step routinely
/// crosses a ReLU kink, which no finite difference survives.
pub fn miniature_checkpoint(seed: u64) -> Result<GanCheckpoint<f64>> {
    let cfg = TrainConfig {
        batch: 4,
        epochs: 0,
        width: 8,
        depth: 2,
        image_size: (4, 8),
        seed,
        ..TrainConfig::default()
    };
    let mut ck = GanCheckpoint::init(cfg, LatentSpec::new(3, 1, 4)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let mut params = ck.generator.params_mut();
    params.extend(ck.disc_q.params_mut());
    for p in params {
        let std = if p.name.ends_with(".bias") {
            0.1
        } else if p.name.ends_with(".weight") {
            let fan = if p.name.contains("deconv") {
                p.shape[0] * 4
            } else {
                p.shape[1]
            };
            1.0 / (fan as f64).sqrt()
        } else {
            continue;
        };
        for v in p.value.iter_mut() {
            let d: f64 = StandardNormal.sample(&mut rng);
            *v = d * std;
        }
    }
    Ok(ck)
}

fn group_params(ck: &mut GanCheckpoint<f64>, g: Group) -> Vec<&mut Param<f64>> {
    match g {
        Group::Generator => ck.generator.params_mut(),
        Group::Trunk => ck.disc_q.trunk.params_mut(),
        Group::DHead => ck.disc_q.d_head.params_mut(),
        Group::QHead => ck.disc_q.q_head.params_mut(),
    }
}

fn pick<R: Rng + ?Sized>(
    ck: &mut GanCheckpoint<f64>,
    groups: &[Group],
    rng: &mut R,
) -> (Group, usize, usize) {
    let mut all = Vec::new();
    for &g in groups {
        for (i, p) in group_params(ck, g).iter().enumerate() {
            all.push((g, i, p.len()));
        }
    }
    let &(g, i, len) = all.choose(rng).expect("parameters");
    (g, i, rng.gen_range(0..len))
}

/// Loss value and the on/off pattern of every piecewise-linear unit.
type Probe = (f64, Vec<bool>);

/// `None` when the two evaluations sit on different sides of a kink.
fn central_difference<F>(
    ck: &mut GanCheckpoint<f64>,
    (g, i, e): (Group, usize, usize),
    step: f64,
    mut loss: F,
) -> Result<Option<f64>>
where
    F: FnMut(&GanCheckpoint<f64>) -> Result<Probe>,
{
    let orig = group_params(ck, g)[i].value[e];
    group_params(ck, g)[i].value[e] = orig + step;
    let (plus, at_plus) = loss(ck)?;
    group_params(ck, g)[i].value[e] = orig - step;
    let (minus, at_minus) = loss(ck)?;
    group_params(ck, g)[i].value[e] = orig;
    Ok((at_plus == at_minus).then(|| (plus - minus) / (2.0 * step)))
}

/// Entries compared plus the number of draws rejected for straddling a kink.
#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub entries: Vec<GradEntry>,
    pub kinks: usize,
}

impl GradReport {
    pub fn max_rel_err(&self) -> f64 {
        self.entries.iter().map(GradEntry::rel_err).fold(0.0, f64::max)
    }
}

fn probe_entries<R, F>(
    ck: &mut GanCheckpoint<f64>,
    groups: &[Group],
    count: usize,
    step: f64,
    rng: &mut R,
    mut loss: F,
) -> Result<GradReport>
where
    R: Rng + ?Sized,
    F: FnMut(&GanCheckpoint<f64>) -> Result<Probe>,
{
    let mut report = GradReport {
        entries: Vec::with_capacity(count),
        kinks: 0,
    };
    // Bounded so a pathological point cannot spin forever.
    while report.entries.len() < count && report.kinks < 10 * count {
        let target = pick(ck, groups, rng);
        let (g, i, e) = target;
        let (name, analytic) = {
            let p = &group_params(ck, g)[i];
            (p.name.clone(), p.grad[e])
        };
        match central_difference(ck, target, step, &mut loss)? {
            Some(numeric) => report.entries.push(GradEntry {
                param: name,
                index: e,
                analytic,
                numeric,
            }),
            None => report.kinks += 1,
        }
    }
    Ok(report)
}

fn fake_images(ck: &GanCheckpoint<f64>, z: &Tensor<f64>) -> Result<(Tensor<f64>, Vec<bool>)> {
    // Batch statistics; running averages of the clone are discarded.
    let (x, cache) = ck.generator.clone().forward_train(z)?;
    Ok((x, cache.activation_pattern()))
}

/// Training-mode discriminator outputs, as the losses see them during training.
fn disc_outputs(ck: &GanCheckpoint<f64>, x: &Tensor<f64>) -> Result<(DiscQOutput<f64>, Vec<bool>)> {
    let (o, cache) = ck.disc_q.clone().forward_train(x)?;
    Ok((o, cache.activation_pattern()))
}

fn copy_grads(dst: &mut DiscriminatorQ<f64>, src: &DiscriminatorQ<f64>) {
    for (d, s) in dst.params_mut().into_iter().zip(src.params()) {
        d.grad.clone_from(&s.grad);
    }
}

fn d_loss(ck: &GanCheckpoint<f64>, real: &Tensor<f64>, fake: &Tensor<f64>) -> Result<Probe> {
    let (r, mut pattern) = disc_outputs(ck, real)?;
    let (f, pf) = disc_outputs(ck, fake)?;
    pattern.extend(pf);
    Ok((loss_discriminator(&r.real_logit, &f.real_logit)?.value, pattern))
}

/// Checks `count` random entries of trunk and D head for the D loss with
/// generator samples held fixed.
pub fn check_discriminator<R: Rng + ?Sized>(
    ck: &mut GanCheckpoint<f64>,
    real: &Tensor<f64>,
    codes: &[LatentCode<f64>],
    count: usize,
    step: f64,
    rng: &mut R,
) -> Result<GradReport> {
    let z = codes_to_tensor(codes, &ck.latent)?;
    let (fake, _) = fake_images(ck, &z)?;
    let mut dq = ck.disc_q.clone();
    dq.zero_grad();
    let (r, cr) = dq.forward_train(real)?;
    let (f, cf) = dq.forward_train(&fake)?;
    let d = loss_discriminator(&r.real_logit, &f.real_logit)?;
    dq.backward_adversarial(&cr, &d.d_real);
    dq.backward_adversarial(&cf, &d.d_fake);
    copy_grads(&mut ck.disc_q, &dq);

    probe_entries(ck, &[Group::Trunk, Group::DHead], count, step, rng, |c| {
        d_loss(c, real, &fake)
    })
}

fn gq_loss(ck: &GanCheckpoint<f64>, codes: &[LatentCode<f64>], z: &Tensor<f64>) -> Result<Probe> {
    let (fake, mut pattern) = fake_images(ck, z)?;
    let (o, pd) = disc_outputs(ck, &fake)?;
    pattern.extend(pd);
    let l = loss_generator_q(&o.real_logit, &o.q_logits, &o.q_con_mean, codes, ck.config.lambda)?;
    Ok((l.total, pattern))
}

/// Checks `count` random entries of G and the Q head for the joint step.
pub fn check_generator_q<R: Rng + ?Sized>(
    ck: &mut GanCheckpoint<f64>,
    codes: &[LatentCode<f64>],
    count: usize,
    step: f64,
    rng: &mut R,
) -> Result<GradReport> {
    let z = codes_to_tensor(codes, &ck.latent)?;
    let mut g = ck.generator.clone();
    let mut dq = ck.disc_q.clone();
    g.zero_grad();
    dq.zero_grad();
    let (fake, g_cache) = g.forward_train(&z)?;
    let (o, cache) = dq.forward_train(&fake)?;
    let l = loss_generator_q(
        &o.real_logit,
        &o.q_logits,
        &o.q_con_mean,
        codes,
        ck.config.lambda,
    )?;
    let dx = dq.backward_generator_q(&cache, &l.d_logit, &l.d_q);
    g.backward(&g_cache, &dx);
    copy_grads(&mut ck.disc_q, &dq);
    for (dst, src) in ck.generator.params_mut().into_iter().zip(g.params()) {
        dst.grad.clone_from(&src.grad);
    }

    probe_entries(ck, &[Group::Generator, Group::QHead], count, step, rng, |c| {
        gq_loss(c, codes, &z)
    })
}
