use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::io::{load_response, read_json, save_response, write_json, ModelFile};
use crate::blocky::{sample_blocky, BlockySpec};
use crate::error::{Error, Result};
use crate::grf::{sample_grf_model, GrfBounds};
use crate::mesh::{build_mesh, default_stations, Mesh, MeshConfig};
use crate::physics::{forward_response, FrequencySet, RmtResponse};

pub const TEST_FRACTION: f64 = 0.10;
pub const TRAIN_FRACTION: f64 = 0.765;
pub const VALIDATION_FRACTION: f64 = 0.135;

/// Offset between retry seeds of one sample.
const RETRY_STRIDE: u64 = 1 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Grf,
    Blocky,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Grf => "grf",
            DatasetKind::Blocky => "blocky",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" | "val" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            _ => Err(Error::config("split", format!("unknown split {s:?}"))),
        }
    }
}

/// Test gets `round(0.1 n)`, train `round(0.765 n)`, validation the rest,
/// over a permutation seeded by `seed`.
pub fn split_assignment(n: usize, seed: u64) -> Vec<Split> {
    let n_test = (TEST_FRACTION * n as f64).round() as usize;
    let n_train = ((TRAIN_FRACTION * n as f64).round() as usize).min(n - n_test);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![Split::Validation; n];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = if rank < n_test {
            Split::Test
        } else if rank < n_test + n_train {
            Split::Train
        } else {
            Split::Validation
        };
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub kind: DatasetKind,
    pub n: usize,
    pub base_seed: u64,
    pub mesh: MeshConfig,
    pub frequencies: FrequencySet,
    pub station_x_m: Vec<f64>,
    pub grf: GrfBounds,
    pub blocky: BlockySpec,
    pub max_retries: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            kind: DatasetKind::Grf,
            n: 1024,
            base_seed: 0,
            mesh: MeshConfig::default(),
            frequencies: FrequencySet::default(),
            station_x_m: default_stations(),
            grf: GrfBounds::default(),
            blocky: BlockySpec::default(),
            max_retries: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub id: usize,
    /// Seed that produced the stored sample (differs from `base_seed + id`
    /// only after a retry).
    pub seed: u64,
    pub split: Split,
    pub model: String,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub kind: DatasetKind,
    pub n: usize,
    pub base_seed: u64,
    pub split_seed: u64,
    pub fractions: [f64; 3],
    pub counts: SplitCounts,
    pub config: GenConfig,
    pub samples: Vec<SampleEntry>,
}

impl DatasetManifest {
    pub const FILE: &'static str = "manifest.json";

    pub fn load(dir: &Path) -> Result<Self> {
        read_json(&dir.join(Self::FILE))
    }

    pub fn entries(&self, split: Split) -> impl Iterator<Item = &SampleEntry> {
        self.samples.iter().filter(move |s| s.split == split)
    }
}

/// Model and response for one seed.
pub fn generate_sample(
    config: &GenConfig,
    mesh: &Mesh,
    seed: u64,
) -> Result<(ModelFile, RmtResponse)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (model, file) = match config.kind {
        DatasetKind::Grf => {
            let g = sample_grf_model(&config.grf, mesh, &mut rng)?;
            let spec = serde_json::to_value(&g.spec).map_err(|e| Error::Format(e.to_string()))?;
            let file = ModelFile::new(g.model.core(mesh).to_owned(), g.background_log10, "grf", spec, Some(seed), mesh);
            (g.model, file)
        }
        DatasetKind::Blocky => {
            let b = sample_blocky(&config.blocky, mesh, &mut rng)?;
            let spec = serde_json::json!({
                "geometry_type": b.geometry_type,
                "anomalies": b.anomalies,
            });
            let file = ModelFile::new(b.model.core(mesh).to_owned(), b.background_log10, "blocky", spec, Some(seed), mesh);
            (b.model, file)
        }
    };
    let response = forward_response(&model, mesh, &config.frequencies, &config.station_x_m)?;
    Ok((file, response))
}

fn generate_with_retries(config: &GenConfig, mesh: &Mesh, id: usize) -> Result<(u64, ModelFile, RmtResponse)> {
    let base = config.base_seed.wrapping_add(id as u64);
    let mut last = None;
    for attempt in 0..=config.max_retries {
        let seed = base.wrapping_add(attempt as u64 * RETRY_STRIDE);
        match generate_sample(config, mesh, seed) {
            Ok((m, r)) => return Ok((seed, m, r)),
            Err(e) => {
                log::warn!("sample {id}: seed {seed} failed ({e}); retrying");
                last = Some(e);
            }
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Writes `manifest.json`, `models/NNNNNN.{bin,json}` and
/// `responses/NNNNNN.{bin,json}` under `out_dir`.
pub fn gen_dataset(config: &GenConfig, out_dir: &Path) -> Result<DatasetManifest> {
    if config.n < 10 {
        return Err(Error::config("n", format!("need at least 10 samples, got {}", config.n)));
    }
    let mesh = build_mesh(&config.mesh)?;
    let splits = split_assignment(config.n, config.base_seed);
    let samples = (0..config.n)
        .into_par_iter()
        .map(|id| -> Result<SampleEntry> {
            let (seed, model, response) = generate_with_retries(config, &mesh, id)?;
            let model_rel = format!("models/{id:06}.bin");
            let response_rel = format!("responses/{id:06}.bin");
            model.save(&out_dir.join(&model_rel))?;
            save_response(&out_dir.join(&response_rel), &response)?;
            Ok(SampleEntry {
                id,
                seed,
                split: splits[id],
                model: model_rel,
                response: response_rel,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let count = |s| splits.iter().filter(|&&x| x == s).count();
    let manifest = DatasetManifest {
        kind: config.kind,
        n: config.n,
        base_seed: config.base_seed,
        split_seed: config.base_seed,
        fractions: [TEST_FRACTION, TRAIN_FRACTION, VALIDATION_FRACTION],
        counts: SplitCounts {
            train: count(Split::Train),
            validation: count(Split::Validation),
            test: count(Split::Test),
        },
        config: config.clone(),
        samples,
    };
    write_json(&out_dir.join(DatasetManifest::FILE), &manifest)?;
    Ok(manifest)
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub entry: SampleEntry,
    pub model: ModelFile,
    pub response: RmtResponse,
}

pub fn load_samples(dir: &Path, manifest: &DatasetManifest, split: Split) -> Result<Vec<Sample>> {
    manifest
        .entries(split)
        .map(|e| {
            Ok(Sample {
                entry: e.clone(),
                model: ModelFile::load(&dir.join(&e.model))?,
                response: load_response(&dir.join(&e.response))?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn split_counts() {
        let s = split_assignment(1000, 7);
        let c = |x| s.iter().filter(|&&v| v == x).count();
        assert_eq!((c(Split::Test), c(Split::Train), c(Split::Validation)), (100, 765, 135));
        assert_eq!(s, split_assignment(1000, 7));
        assert_ne!(s, split_assignment(1000, 8));
        assert!((TEST_FRACTION + TRAIN_FRACTION + VALIDATION_FRACTION - 1.0).abs() < 1e-9);
    }

    #[test]
    fn splits_are_disjoint_and_exhaustive() {
        let s = split_assignment(1024, 1);
        let ids = |x| s.iter().enumerate().filter(|(_, &v)| v == x).map(|(i, _)| i).collect::<HashSet<_>>();
        let (a, b, c) = (ids(Split::Train), ids(Split::Validation), ids(Split::Test));
        assert!(a.is_disjoint(&b) && a.is_disjoint(&c) && b.is_disjoint(&c));
        assert_eq!(a.len() + b.len() + c.len(), 1024);
    }
}
