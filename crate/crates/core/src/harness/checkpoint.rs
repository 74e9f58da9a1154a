//! Network parameters as one raw f64 file per array plus `checkpoint.json`.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::io::{read_f64, read_json, write_f64, write_json, DTYPE};
use crate::error::{Error, Result};
use crate::nn::{TrainConfig, UNet, UNetConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub kind: String,
    pub dtype: String,
    pub unet: UNetConfig,
    pub train: Option<TrainConfig>,
    pub epoch: usize,
    pub metrics: serde_json::Value,
    pub arrays: Vec<ArrayEntry>,
}

impl CheckpointManifest {
    pub const FILE: &'static str = "checkpoint.json";
}

fn bn_prefix(gamma_name: &str) -> &str {
    gamma_name.strip_suffix(".gamma").unwrap_or(gamma_name)
}

/// Named arrays in a fixed order: parameters, then batch-norm running
/// statistics.
fn named_arrays(net: &UNet) -> Vec<(String, Vec<usize>, Vec<f64>)> {
    let mut v: Vec<_> = net
        .params()
        .into_iter()
        .map(|p| (p.name.clone(), p.shape.clone(), p.value.clone()))
        .collect();
    for bn in net.batchnorms() {
        let pre = bn_prefix(&bn.gamma.name);
        v.push((format!("{pre}.running_mean"), vec![bn.channels()], bn.running_mean.clone()));
        v.push((format!("{pre}.running_var"), vec![bn.channels()], bn.running_var.clone()));
    }
    v
}

pub fn save_checkpoint(
    dir: &Path,
    net: &UNet,
    train: Option<&TrainConfig>,
    epoch: usize,
    metrics: serde_json::Value,
) -> Result<CheckpointManifest> {
    let mut arrays = Vec::new();
    for (name, shape, values) in named_arrays(net) {
        let file = format!("arrays/{name}.bin");
        write_f64(&dir.join(&file), &values)?;
        arrays.push(ArrayEntry { name, shape, file });
    }
    let m = CheckpointManifest {
        kind: "unet-checkpoint".into(),
        dtype: DTYPE.into(),
        unet: net.config.clone(),
        train: train.cloned(),
        epoch,
        metrics,
        arrays,
    };
    write_json(&dir.join(CheckpointManifest::FILE), &m)?;
    Ok(m)
}

pub fn load_checkpoint(dir: &Path) -> Result<(UNet, CheckpointManifest)> {
    let m: CheckpointManifest = read_json(&dir.join(CheckpointManifest::FILE))?;
    if m.kind != "unet-checkpoint" || m.dtype != DTYPE {
        return Err(Error::Format(format!("{}: not a checkpoint", dir.display())));
    }
    let mut net = UNet::new(m.unet.clone(), 0)?;
    let mut stored: HashMap<&str, &ArrayEntry> = m.arrays.iter().map(|a| (a.name.as_str(), a)).collect();
    let mut take = |name: &str, shape: &[usize]| -> Result<Vec<f64>> {
        let a = stored
            .remove(name)
            .ok_or_else(|| Error::Format(format!("checkpoint lacks array {name}")))?;
        if a.shape != shape {
            return Err(Error::Format(format!(
                "{name}: shape {:?}, network expects {:?}",
                a.shape, shape
            )));
        }
        read_f64(&dir.join(&a.file), shape.iter().product())
    };
    for p in net.params_mut() {
        p.value = take(&p.name, &p.shape.clone())?;
    }
    for bn in net.batchnorms_mut() {
        let pre = bn_prefix(&bn.gamma.name).to_string();
        let c = bn.channels();
        bn.running_mean = take(&format!("{pre}.running_mean"), &[c])?;
        bn.running_var = take(&format!("{pre}.running_var"), &[c])?;
        if bn.running_var.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Format(format!("{pre}: running variance must be positive")));
        }
    }
    if let Some(extra) = stored.keys().next() {
        return Err(Error::Format(format!("checkpoint has unexpected array {extra}")));
    }
    Ok((net, m))
}
