use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::{lr_schedule, mse_loss, Adam, AdamConfig};
use super::tensor::Tensor4;
use super::unet::UNet;
use crate::error::{Error, Result};
use crate::metrics;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub lr_decay_per_epoch: f64,
    pub early_stop_patience: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            lr_decay_per_epoch: 0.95,
            early_stop_patience: 20,
            batch_size: 16,
            max_epochs: 200,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::config("lr", "must be positive"));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::config(name, format!("{b} not in (0, 1)")));
            }
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::config("adam_eps", "must be positive"));
        }
        if !(self.lr_decay_per_epoch > 0.0 && self.lr_decay_per_epoch <= 1.0) {
            return Err(Error::config("lr_decay_per_epoch", "must be in (0, 1]"));
        }
        if self.early_stop_patience == 0 {
            return Err(Error::config("early_stop_patience", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }
}

/// Network-ready inputs `(N, C_in, S, S)` and targets `(N, C_out, S, S)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainData {
    pub x_train: Tensor4,
    pub y_train: Tensor4,
    pub x_val: Tensor4,
    pub y_val: Tensor4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_mse: f64,
    pub val_mae: f64,
    /// NaN when the images are smaller than the SSIM window.
    pub val_ssim: f64,
    pub lr: f64,
}

impl EpochRecord {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,val_loss,val_mse,val_mae,val_ssim,lr";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:e},{:e},{:e},{:e},{:e},{:e}",
            self.epoch, self.train_loss, self.val_loss, self.val_mse, self.val_mae, self.val_ssim, self.lr
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub net: UNet,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Inference over `x` in chunks of `batch` samples.
pub fn predict(net: &UNet, x: &Tensor4, batch: usize) -> Result<Tensor4> {
    let s = net.config.input_size;
    let mut out = Tensor4::zeros([x.n(), net.config.out_channels, s, s]);
    let idx: Vec<usize> = (0..x.n()).collect();
    for chunk in idx.chunks(batch.max(1)) {
        let y = net.infer(&x.gather(chunk))?;
        for (i, &n) in chunk.iter().enumerate() {
            out.sample_mut(n).copy_from_slice(y.sample(i));
        }
    }
    Ok(out)
}

struct ValScores {
    mse: f64,
    mae: f64,
    ssim: f64,
}

fn score(pred: &Tensor4, target: &Tensor4) -> Result<ValScores> {
    let (h, w) = (pred.h(), pred.w());
    let (mut mse, mut mae, mut ssim) = (0.0, 0.0, 0.0);
    let mut planes = 0;
    for n in 0..pred.n() {
        for c in 0..pred.c() {
            let p = ndarray::ArrayView2::from_shape((h, w), pred.channel(n, c)).expect("plane");
            let t = ndarray::ArrayView2::from_shape((h, w), target.channel(n, c)).expect("plane");
            mse += metrics::mse(p, t)?;
            mae += metrics::mae(p, t)?;
            ssim += if h >= metrics::SSIM_WINDOW && w >= metrics::SSIM_WINDOW {
                metrics::ssim(p, t, 1.0)?
            } else {
                f64::NAN
            };
            planes += 1;
        }
    }
    let k = planes as f64;
    Ok(ValScores {
        mse: mse / k,
        mae: mae / k,
        ssim: ssim / k,
    })
}

/// Mini-batch Adam with per-epoch decay. Stops once neither validation loss
/// nor validation MAE has improved for `early_stop_patience` epochs.
pub fn train(mut net: UNet, data: &TrainData, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let n = data.x_train.n();
    if n == 0 || data.x_val.n() == 0 {
        return Err(Error::Training("empty training or validation set".into()));
    }
    if data.y_train.n() != n || data.y_val.n() != data.x_val.n() {
        return Err(Error::Dimension("inputs and targets differ in sample count".into()));
    }
    let mut adam = Adam::new(config.adam(), &net.params());
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::new();
    let mut best = (net.clone(), f64::INFINITY, 0usize);
    let mut best_mae = f64::INFINITY;
    let mut stale = 0;
    let mut stopped_early = false;
    for epoch in 0..config.max_epochs {
        let lr = lr_schedule(epoch, config.lr, config.lr_decay_per_epoch);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(epoch as u64 + 1));
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let x = data.x_train.gather(chunk);
            let y = data.y_train.gather(chunk);
            net.zero_grad();
            let pred = net.forward(&x)?;
            let (loss, grad) = mse_loss(&pred, &y)?;
            if !loss.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite loss {loss} at epoch {epoch}"
                )));
            }
            net.backward(&grad)?;
            adam.step(&mut net.params_mut(), lr)?;
            loss_sum += loss * chunk.len() as f64;
        }
        let pred = predict(&net, &data.x_val, config.batch_size)?;
        let (val_loss, _) = mse_loss(&pred, &data.y_val)?;
        let s = score(&pred, &data.y_val)?;
        let rec = EpochRecord {
            epoch,
            train_loss: loss_sum / n as f64,
            val_loss,
            val_mse: s.mse,
            val_mae: s.mae,
            val_ssim: s.ssim,
            lr,
        };
        log::info!(
            "epoch {epoch}: train {:.3e} val {:.3e} mae {:.3e} ssim {:.3}",
            rec.train_loss,
            rec.val_loss,
            rec.val_mae,
            rec.val_ssim
        );
        history.push(rec);
        if !val_loss.is_finite() {
            return Err(Error::Training(format!("non-finite validation loss at epoch {epoch}")));
        }
        let mut improved = false;
        if val_loss < best.1 {
            best = (net.clone(), val_loss, epoch);
            improved = true;
        }
        if s.mae < best_mae {
            best_mae = s.mae;
            improved = true;
        }
        stale = if improved { 0 } else { stale + 1 };
        if stale >= config.early_stop_patience {
            stopped_early = true;
            break;
        }
    }
    Ok(TrainOutcome {
        net: best.0,
        history,
        best_epoch: best.2,
        stopped_early,
    })
}
