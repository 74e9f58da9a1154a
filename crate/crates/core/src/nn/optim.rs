use serde::{Deserialize, Serialize};

use super::layers::Param;
use super::tensor::Tensor4;
use crate::error::{Error, Result};

/// Mean squared error over every element and its gradient
/// `2(pred − target)/N`.
pub fn mse_loss(pred: &Tensor4, target: &Tensor4) -> Result<(f64, Tensor4)> {
    if pred.shape != target.shape {
        return Err(Error::Dimension(format!(
            "prediction {:?} vs target {:?}",
            pred.shape, target.shape
        )));
    }
    let n = pred.len() as f64;
    let mut grad = Tensor4::zeros(pred.shape);
    let mut sum = 0.0;
    for ((g, p), t) in grad.data.iter_mut().zip(&pred.data).zip(&target.data) {
        let d = p - t;
        sum += d * d;
        *g = 2.0 * d / n;
    }
    Ok((sum / n, grad))
}

/// `base · decay^epoch`.
pub fn lr_schedule(epoch: usize, base_lr: f64, decay: f64) -> f64 {
    base_lr * decay.powi(epoch as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for every parameter array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &[&Param]) -> Self {
        Self {
            config,
            step: 0,
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }

    /// One bias-corrected update of every parameter from its `grad`.
    pub fn step(&mut self, params: &mut [&mut Param], lr: f64) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(Error::Dimension(format!(
                "optimizer tracks {} arrays, got {}",
                self.m.len(),
                params.len()
            )));
        }
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.value.len() {
                let g = p.grad[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p.value[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_values() {
        let t = Tensor4::from_fn([2, 1, 3, 3], |[n, _, h, w]| (n + h * w) as f64);
        let (l, g) = mse_loss(&t, &t).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.data.iter().all(|&v| v == 0.0));
        let mut p = t.clone();
        p.data.iter_mut().for_each(|v| *v += 1.0);
        assert_eq!(mse_loss(&p, &t).unwrap().0, 1.0);
        assert!(mse_loss(&p, &Tensor4::zeros([1, 1, 3, 3])).is_err());
    }

    #[test]
    fn schedule_values() {
        assert_eq!(lr_schedule(0, 1e-4, 0.95), 1e-4);
        assert!((lr_schedule(1, 1e-4, 0.95) - 9.5e-5).abs() < 1e-18);
        assert!((lr_schedule(14, 1e-4, 0.95) - 4.877e-5).abs() < 1e-8);
    }
}
