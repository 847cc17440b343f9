use super::latent::LatentCode;
use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::scalar::{softmax, softplus, sigmoid, Scalar};

/// Parts of the generator/recognizer objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GqParts<T> {
    pub adv: T,
    pub cat: T,
    pub con: T,
}

/// Loss value with gradients w.r.t. the logits that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscLoss<T> {
    pub value: T,
    pub d_real: Vec<T>,
    pub d_fake: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GqLoss<T> {
    pub total: T,
    pub parts: GqParts<T>,
    /// d total / d fake logit.
    pub d_logit: Vec<T>,
    /// `[n, k_dis + n_con]`: d total / d (q_logits ++ q_con_mean).
    pub d_q: Tensor<T>,
}

fn check_finite<T: Scalar>(what: &str, v: &[T]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteLoss(format!("{what} contains non-finite values")))
    }
}

fn finite_value<T: Scalar>(what: &str, v: T) -> Result<T> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteLoss(format!("{what} = {v}")))
    }
}

/// BCE of D: `mean softplus(-real) + mean softplus(fake)`.
pub fn loss_discriminator<T: Scalar>(real_logits: &[T], fake_logits: &[T]) -> Result<DiscLoss<T>> {
    check_finite("real logits", real_logits)?;
    check_finite("fake logits", fake_logits)?;
    if real_logits.is_empty() || fake_logits.is_empty() {
        return Err(Error::EmptyInput);
    }
    let nr = T::from_usize_lossy(real_logits.len());
    let nf = T::from_usize_lossy(fake_logits.len());
    let real: T = real_logits.iter().map(|&l| softplus(-l)).sum::<T>() / nr;
    let fake: T = fake_logits.iter().map(|&l| softplus(l)).sum::<T>() / nf;
    let d_real = real_logits
        .iter()
        .map(|&l| (sigmoid(l) - T::one()) / nr)
        .collect();
    let d_fake = fake_logits.iter().map(|&l| sigmoid(l) / nf).collect();
    Ok(DiscLoss {
        value: finite_value("discriminator loss", real + fake)?,
        d_real,
        d_fake,
    })
}

/// `adv + λ·(cat + con)` with `adv` the non-saturating generator BCE, `cat`
/// the cross-entropy of Q's categorical head and `con` half the squared
/// error of its continuous head.
pub fn loss_generator_q<T: Scalar>(
    fake_logits: &[T],
    q_logits: &Tensor<T>,
    q_con_mean: &Tensor<T>,
    target: &[LatentCode<T>],
    lambda: T,
) -> Result<GqLoss<T>> {
    let n = fake_logits.len();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if q_logits.batch() != n || q_con_mean.batch() != n || target.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "batch sizes: logits {n}, q_logits {}, q_con {}, codes {}",
            q_logits.batch(),
            q_con_mean.batch(),
            target.len()
        )));
    }
    let k = q_logits.item_len();
    let c = if q_con_mean.is_empty() { 0 } else { q_con_mean.item_len() };
    if target[0].c_dis.len() != k || target[0].c_con.len() != c {
        return Err(Error::ShapeMismatch(format!(
            "Q heads ({k}, {c}) vs code ({}, {})",
            target[0].c_dis.len(),
            target[0].c_con.len()
        )));
    }
    check_finite("fake logits", fake_logits)?;
    check_finite("q logits", &q_logits.data)?;
    check_finite("q continuous means", &q_con_mean.data)?;

    let nt = T::from_usize_lossy(n);
    let half = T::from_f64_lossy(0.5);
    let mut adv = T::zero();
    let mut cat = T::zero();
    let mut con = T::zero();
    let mut d_logit = Vec::with_capacity(n);
    let mut d_q = Tensor::zeros(&[n, k + c]);
    for i in 0..n {
        let l = fake_logits[i];
        adv += softplus(-l);
        d_logit.push((sigmoid(l) - T::one()) / nt);

        let logits = q_logits.item(i);
        let code = &target[i];
        let p = softmax(logits);
        let row = &mut d_q.data[i * (k + c)..(i + 1) * (k + c)];
        let lse = crate::scalar::log_sum_exp(logits);
        for j in 0..k {
            cat += code.c_dis[j] * (lse - logits[j]);
            row[j] = lambda * (p[j] - code.c_dis[j]) / nt;
        }
        if c > 0 {
            for (j, (&mu, &t)) in q_con_mean.item(i).iter().zip(&code.c_con).enumerate() {
                let e = mu - t;
                con += half * e * e;
                row[k + j] = lambda * e / nt;
            }
        }
    }
    let parts = GqParts {
        adv: adv / nt,
        cat: cat / nt,
        con: con / nt,
    };
    let total = parts.adv + lambda * (parts.cat + parts.con);
    Ok(GqLoss {
        total: finite_value("generator/Q loss", total)?,
        parts,
        d_logit,
        d_q,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::infogan::latent::LatentSpec;

    #[test]
    fn discriminator_loss_examples() {
        let l = loss_discriminator(&[0.0f64], &[0.0]).unwrap();
        assert!((l.value - 2.0 * 2f64.ln()).abs() < 1e-12);
        let l3 = 3f64.ln();
        let l = loss_discriminator(&[l3], &[l3]).unwrap();
        assert!((l.value - (-(0.75f64).ln() - (0.25f64).ln())).abs() < 1e-12);
        let l = loss_discriminator(&[60.0f64], &[-60.0]).unwrap();
        assert!(l.value >= 0.0 && l.value < 1e-20);
        assert!(matches!(
            loss_discriminator(&[f64::NAN], &[0.0]),
            Err(Error::NonFiniteLoss(_))
        ));
    }

    #[test]
    fn generator_q_loss_examples() {
        let spec = LatentSpec::new(2, 1, 1).unwrap();
        let code = LatentCode::new(&spec, 1, vec![0.3f64], vec![0.0]);
        let q = Tensor::from_vec(&[1, 2], vec![0.0, 0.0]);
        let con = Tensor::from_vec(&[1, 1], vec![0.3]);
        // adv ≈ 0 with a very confident fake logit.
        let l = loss_generator_q(&[50.0], &q, &con, &[code.clone()], 1.0).unwrap();
        assert!((l.total - 2f64.ln()).abs() < 1e-12);

        let q = Tensor::from_vec(&[1, 2], vec![-40.0, 40.0]);
        let l = loss_generator_q(&[0.0], &q, &con, &[code.clone()], 1.0).unwrap();
        assert!(l.parts.cat < 1e-30);
        assert_eq!(l.parts.con, 0.0);

        let l0 = loss_generator_q(&[0.7], &q, &con, &[code], 0.0).unwrap();
        assert_eq!(l0.total, l0.parts.adv);
    }

    #[test]
    fn gradients_match_finite_differences_on_logits() {
        let spec = LatentSpec::new(3, 2, 1).unwrap();
        let codes = vec![
            LatentCode::new(&spec, 2, vec![0.1f64, -0.4], vec![0.0]),
            LatentCode::new(&spec, 0, vec![0.9, 0.2], vec![0.0]),
        ];
        let fake = vec![0.3, -1.2];
        let q = Tensor::from_vec(&[2, 3], vec![0.2, -0.3, 0.5, 1.1, 0.0, -0.7]);
        let con = Tensor::from_vec(&[2, 2], vec![0.0, 0.3, -0.2, 0.5]);
        let lam = 0.7;
        let base = loss_generator_q(&fake, &q, &con, &codes, lam).unwrap();
        let h = 1e-6;
        for i in 0..2 {
            let mut p = fake.clone();
            p[i] += h;
            let mut m = fake.clone();
            m[i] -= h;
            let fd = (loss_generator_q(&p, &q, &con, &codes, lam).unwrap().total
                - loss_generator_q(&m, &q, &con, &codes, lam).unwrap().total)
                / (2.0 * h);
            assert!((fd - base.d_logit[i]).abs() < 1e-8);
            for j in 0..3 {
                let mut qp = q.clone();
                qp.data[i * 3 + j] += h;
                let mut qm = q.clone();
                qm.data[i * 3 + j] -= h;
                let fd = (loss_generator_q(&fake, &qp, &con, &codes, lam).unwrap().total
                    - loss_generator_q(&fake, &qm, &con, &codes, lam).unwrap().total)
                    / (2.0 * h);
                assert!((fd - base.d_q.data[i * 5 + j]).abs() < 1e-8);
            }
            for j in 0..2 {
                let mut cp = con.clone();
                cp.data[i * 2 + j] += h;
                let mut cm = con.clone();
                cm.data[i * 2 + j] -= h;
                let fd = (loss_generator_q(&fake, &q, &cp, &codes, lam).unwrap().total
                    - loss_generator_q(&fake, &q, &cm, &codes, lam).unwrap().total)
                    / (2.0 * h);
                assert!((fd - base.d_q.data[i * 5 + 3 + j]).abs() < 1e-8);
            }
        }
        let d = loss_discriminator(&[0.4, -0.1], &fake).unwrap();
        let fd = (loss_discriminator(&[0.4 + h, -0.1], &fake).unwrap().value
            - loss_discriminator(&[0.4 - h, -0.1], &fake).unwrap().value)
            / (2.0 * h);
        assert!((fd - d.d_real[0]).abs() < 1e-8);
    }
}
