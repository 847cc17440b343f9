use serde::{Deserialize, Serialize};

use super::param::Param;
use crate::scalar::Scalar;

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, beta1: f64, beta2: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
        }
    }
}

/// Adam over a fixed, ordered parameter list. Moment buffers are matched to
/// parameters by position, so callers must always pass the same list.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub first: Vec<Vec<T>>,
    pub second: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    /// Applies one update from each parameter's accumulated `grad`.
    pub fn update(&mut self, params: &mut [&mut Param<T>]) {
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
            self.second = self.first.clone();
        }
        assert_eq!(self.first.len(), params.len(), "optimizer parameter list changed");
        self.step += 1;
        let c = &self.config;
        let b1 = T::from_f64_lossy(c.beta1);
        let b2 = T::from_f64_lossy(c.beta2);
        let one = T::one();
        let bc1 = one - b1.powi(self.step as i32);
        let bc2 = one - b2.powi(self.step as i32);
        let step_size = T::from_f64_lossy(c.lr) / bc1;
        let eps = T::from_f64_lossy(c.eps);
        for ((p, m), v) in params
            .iter_mut()
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            for (((w, &g), mi), vi) in p
                .value
                .iter_mut()
                .zip(&p.grad)
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = b1 * *mi + (one - b1) * g;
                *vi = b2 * *vi + (one - b2) * g * g;
                *w -= step_size * *mi / ((*vi / bc2).sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Param::<f64>::zeros("w", &[2]);
        p.grad = vec![3.0, -0.5];
        let mut opt = Adam::new(AdamConfig::new(0.01, 0.5, 0.999));
        opt.update(&mut [&mut p]);
        assert!((p.value[0] + 0.01).abs() < 1e-8);
        assert!((p.value[1] - 0.01).abs() < 1e-8);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = Param::<f64>::filled("w", &[1], 5.0);
        let mut opt = Adam::new(AdamConfig::new(0.1, 0.9, 0.999));
        for _ in 0..500 {
            p.grad[0] = 2.0 * (p.value[0] - 1.5);
            opt.update(&mut [&mut p]);
        }
        assert!((p.value[0] - 1.5).abs() < 1e-2);
    }
}
