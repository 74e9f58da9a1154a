//! Training runs, inversion, evaluation and the noise / compressed-sensing /
//! cross-dataset experiments.

use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::checkpoint::save_checkpoint;
use super::dataset::{load_samples, DatasetManifest, Sample, Split};
use super::io::{write_json, write_text};
use super::noise::{add_noise, NoiseSpec};
use super::preprocess::{decode_prediction, normalize_model, stack_inputs, stack_targets};
use super::svg;
use crate::cs::{self, CsConfig, MaskSpec};
use crate::error::{Error, Result};
use crate::metrics::{self, MetricReport};
use crate::nn::{predict, train, EpochRecord, TrainConfig, TrainData, TrainOutcome, UNet, UNetConfig};
use crate::physics::{Channel, RmtResponse};

const PREDICT_BATCH: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainRunConfig {
    pub dataset: PathBuf,
    pub out: PathBuf,
    pub unet: UNetConfig,
    pub train: TrainConfig,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::from("data"),
            out: PathBuf::from("run"),
            unet: UNetConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

pub fn train_data(train_set: &[Sample], val_set: &[Sample], size: usize) -> Result<TrainData> {
    let xs = |s: &[Sample]| stack_inputs(&s.iter().map(|x| &x.response).collect::<Vec<_>>(), size);
    let ys = |s: &[Sample]| stack_targets(&s.iter().map(|x| x.model.core()).collect::<Vec<_>>(), size);
    Ok(TrainData {
        x_train: xs(train_set)?,
        y_train: ys(train_set)?,
        x_val: xs(val_set)?,
        y_val: ys(val_set)?,
    })
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from(EpochRecord::CSV_HEADER);
    s.push('\n');
    for r in history {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

/// Trains on the dataset's train split with early stopping on its
/// validation split; writes the checkpoint and `history.csv` to `out`.
pub fn run_training(cfg: &TrainRunConfig) -> Result<TrainOutcome> {
    let manifest = DatasetManifest::load(&cfg.dataset)?;
    let tr = load_samples(&cfg.dataset, &manifest, Split::Train)?;
    let va = load_samples(&cfg.dataset, &manifest, Split::Validation)?;
    let data = train_data(&tr, &va, cfg.unet.input_size)?;
    let net = UNet::new(cfg.unet.clone(), cfg.train.seed)?;
    let out = train(net, &data, &cfg.train)?;
    let best = &out.history[out.best_epoch];
    let metrics = serde_json::json!({
        "val_loss": best.val_loss,
        "val_mse": best.val_mse,
        "val_mae": best.val_mae,
        "val_ssim": if best.val_ssim.is_finite() { Some(best.val_ssim) } else { None },
        "epochs_run": out.history.len(),
        "stopped_early": out.stopped_early,
        "dataset": manifest.kind.name(),
    });
    save_checkpoint(&cfg.out, &out.net, Some(&cfg.train), out.best_epoch, metrics)?;
    write_text(&cfg.out.join("history.csv"), &history_csv(&out.history))?;
    Ok(out)
}

/// Core log10 resistivity for each response. Masked responses are refused.
pub fn invert_responses(net: &UNet, responses: &[&RmtResponse], core_shape: (usize, usize)) -> Result<Vec<Array2<f64>>> {
    let s = net.config.input_size;
    let x = stack_inputs(responses, s)?;
    let y = predict(net, &x, PREDICT_BATCH)?;
    (0..y.n()).map(|n| decode_prediction(y.sample(n), s, core_shape)).collect()
}

/// Scores in normalised model space, `(log10 ρ − 1) / 3`, on the core grid.
pub fn score_models(label: &str, predicted: &[Array2<f64>], truth: &[ArrayView2<f64>]) -> Result<MetricReport> {
    if predicted.len() != truth.len() {
        return Err(Error::Dimension("prediction and truth counts differ".into()));
    }
    let p: Vec<Array2<f64>> = predicted.iter().map(|a| normalize_model(a.view())).collect();
    let t: Vec<Array2<f64>> = truth.iter().map(|a| normalize_model(*a)).collect();
    MetricReport::from_pairs(label, p.iter().map(|a| a.view()).zip(t.iter().map(|a| a.view())), 1.0)
}

pub fn evaluate(net: &UNet, samples: &[Sample], label: &str) -> Result<MetricReport> {
    if samples.is_empty() {
        return Err(Error::Domain("empty split".into()));
    }
    let shape = samples[0].model.core_log10.dim();
    let preds = invert_responses(net, &samples.iter().map(|s| &s.response).collect::<Vec<_>>(), shape)?;
    score_models(label, &preds, &samples.iter().map(|s| s.model.core()).collect::<Vec<_>>())
}

pub fn model_svg(core_log10: ArrayView2<f64>, title: &str) -> String {
    svg::heatmap(core_log10, 1.0, 4.0, title)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRow {
    pub level: f64,
    pub mse: f64,
    pub mae: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseReport {
    pub n_samples: usize,
    pub seed: u64,
    pub rows: Vec<NoiseRow>,
    /// Mean SSIM never rises as the noise level grows.
    pub ssim_non_increasing: bool,
}

/// A noise-free row followed by one row per level. Sample `i` uses noise
/// seed `seed + id`, the same at every level.
pub fn run_noise_experiment(net: &UNet, samples: &[Sample], levels: &[f64], seed: u64) -> Result<NoiseReport> {
    let mut all = vec![0.0];
    all.extend_from_slice(levels);
    let mut rows = Vec::new();
    for &level in &all {
        let noisy: Vec<RmtResponse> = samples
            .iter()
            .map(|s| {
                add_noise(
                    &s.response,
                    &NoiseSpec {
                        level,
                        seed: seed.wrapping_add(s.entry.id as u64),
                    },
                )
            })
            .collect::<Result<_>>()?;
        let shape = samples[0].model.core_log10.dim();
        let preds = invert_responses(net, &noisy.iter().collect::<Vec<_>>(), shape)?;
        let r = score_models("noise", &preds, &samples.iter().map(|s| s.model.core()).collect::<Vec<_>>())?;
        rows.push(NoiseRow {
            level,
            mse: r.mse,
            mae: r.mae,
            ssim: r.ssim,
        });
    }
    let ssim_non_increasing = rows.windows(2).all(|w| w[1].ssim <= w[0].ssim);
    Ok(NoiseReport {
        n_samples: samples.len(),
        seed,
        rows,
        ssim_non_increasing,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsSampleRow {
    pub id: usize,
    pub n_masked: usize,
    /// SSIM between the inversions of original and reconstructed data.
    pub inversion_ssim: f64,
    /// Median |relative error| over masked apparent-resistivity entries.
    pub median_abs_rel_error: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsReport {
    pub fraction: f64,
    pub seed: u64,
    pub rows: Vec<CsSampleRow>,
    /// Signed relative errors of masked ρ_a entries, all samples.
    pub histogram: cs::Histogram,
    pub n_ssim_at_least_0_9: usize,
}

/// Masks each sample (seed `seed + id`), reconstructs it, and compares the
/// inversions of original and reconstructed data. Figures for the first
/// sample go to `figures` when given.
pub fn run_cs_experiment(
    net: &UNet,
    samples: &[Sample],
    fraction: f64,
    seed: u64,
    config: &CsConfig,
    figures: Option<&Path>,
) -> Result<CsReport> {
    if samples.is_empty() {
        return Err(Error::Domain("no samples".into()));
    }
    let shape = samples[0].model.core_log10.dim();
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for (k, s) in samples.iter().enumerate() {
        let spec = MaskSpec {
            fraction_masked: fraction,
            seed: seed.wrapping_add(s.entry.id as u64),
            independent_per_channel: true,
        };
        let masked = cs::mask_response(&s.response, &spec)?;
        let (recon, status) = cs::reconstruct(&masked, config)?;
        let inv = invert_responses(net, &[&s.response, &recon], shape)?;
        let ssim = metrics::ssim(
            normalize_model(inv[0].view()).view(),
            normalize_model(inv[1].view()).view(),
            1.0,
        )?;
        let mut sample_err = Vec::new();
        for ch in [Channel::RhoTe, Channel::RhoTm] {
            let e = cs::relative_error(recon.channel(ch), s.response.channel(ch))?;
            if let Some(m) = masked.channel_mask(ch) {
                sample_err.extend(e.iter().zip(m.iter()).filter(|(_, &b)| b).map(|(v, _)| *v));
            }
        }
        let abs: Vec<f64> = sample_err.iter().map(|v| v.abs()).collect();
        rows.push(CsSampleRow {
            id: s.entry.id,
            n_masked: masked.n_masked(),
            inversion_ssim: ssim,
            median_abs_rel_error: if abs.is_empty() { 0.0 } else { cs::median(&abs) },
            converged: status.iter().all(|c| c.converged),
        });
        errors.extend(sample_err);
        if k == 0 {
            if let Some(dir) = figures {
                cs_figures(dir, s, &masked, &recon, &inv)?;
            }
        }
    }
    let histogram = if errors.is_empty() {
        cs::Histogram {
            edges: vec![0.0, 0.0],
            counts: vec![0],
            median: 0.0,
        }
    } else {
        cs::histogram(&errors, 50)?
    };
    if let Some(dir) = figures {
        write_text(
            &dir.join("relative_error_histogram.svg"),
            &svg::histogram_svg(&histogram.edges, &histogram.counts, "relative error, masked apparent resistivity"),
        )?;
    }
    let n_ssim_at_least_0_9 = rows.iter().filter(|r| r.inversion_ssim >= 0.9).count();
    Ok(CsReport {
        fraction,
        seed,
        rows,
        histogram,
        n_ssim_at_least_0_9,
    })
}

fn cs_figures(dir: &Path, s: &Sample, masked: &RmtResponse, recon: &RmtResponse, inv: &[Array2<f64>]) -> Result<()> {
    for ch in Channel::ALL {
        let (f, lo, hi): (fn(f64) -> f64, f64, f64) = if ch.is_resistivity() {
            (f64::log10, 0.5, 4.5)
        } else {
            (|v| v, 0.0, 90.0)
        };
        let orig = s.response.channel(ch).mapv(f);
        let mut m = orig.clone();
        if let Some(mask) = masked.channel_mask(ch) {
            m.zip_mut_with(&mask, |v, &b| {
                if b {
                    *v = f64::NAN;
                }
            });
        }
        let rec = recon.channel(ch).mapv(f);
        for (tag, a) in [("original", orig), ("masked", m), ("reconstructed", rec)] {
            write_text(
                &dir.join(format!("{}_{tag}.svg", ch.name())),
                &svg::heatmap(a.view(), lo, hi, &format!("{} {tag}", ch.name())),
            )?;
        }
    }
    write_text(&dir.join("inversion_original.svg"), &model_svg(inv[0].view(), "inversion, original data"))?;
    write_text(
        &dir.join("inversion_reconstructed.svg"),
        &model_svg(inv[1].view(), "inversion, reconstructed data"),
    )?;
    write_text(&dir.join("true_model.svg"), &model_svg(s.model.core(), "true model"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossRow {
    pub train: String,
    pub test: String,
    pub mse: f64,
    pub mae: f64,
    pub ssim: f64,
}

/// Every (network, test set) pairing.
pub fn run_crosstest(nets: &[(&str, &UNet)], tests: &[(&str, &[Sample])]) -> Result<Vec<CrossRow>> {
    let mut rows = Vec::new();
    for (train_name, net) in nets {
        for (test_name, samples) in tests {
            let r = evaluate(net, samples, test_name)?;
            rows.push(CrossRow {
                train: train_name.to_string(),
                test: test_name.to_string(),
                mse: r.mse,
                mae: r.mae,
                ssim: r.ssim,
            });
        }
    }
    Ok(rows)
}

pub fn rows_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut out = String::new();
    for (i, r) in rows.iter().enumerate() {
        let v = serde_json::to_value(r).map_err(|e| Error::Format(e.to_string()))?;
        let obj = v.as_object().ok_or_else(|| Error::Format("row is not an object".into()))?;
        if i == 0 {
            out.push_str(&obj.keys().cloned().collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        let cells: Vec<String> = obj
            .values()
            .map(|v| match v {
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            })
            .collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    Ok(out)
}

pub fn write_report<T: Serialize>(dir: &Path, name: &str, report: &T) -> Result<()> {
    write_json(&dir.join(format!("{name}.json")), report)
}
