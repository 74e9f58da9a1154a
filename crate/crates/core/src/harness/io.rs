//! Raw little-endian f64 arrays with JSON sidecars. `name.bin` holds the
//! values row-major, `name.json` describes them.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3, ArrayView2};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{embed_core, Mesh, MeshConfig, ResistivityModel};
use crate::physics::{Channel, RmtResponse};

pub const DTYPE: &str = "f64le";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// `dir/name.json` next to `dir/name.bin`.
pub fn sidecar_path(bin: &Path) -> PathBuf {
    bin.with_extension("json")
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

pub fn write_f64(path: &Path, values: &[f64]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            create_dir(parent)?;
        }
    }
    let mut buf = Vec::with_capacity(values.len() * 8);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf).map_err(io_err(path))
}

pub fn read_f64(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.len() != expected * 8 {
        return Err(Error::Format(format!(
            "{}: {} bytes, expected {} values",
            path.display(),
            bytes.len(),
            expected
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            create_dir(parent)?;
        }
    }
    let mut s = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    s.push('\n');
    fs::write(path, s).map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let s = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&s).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            create_dir(parent)?;
        }
    }
    fs::write(path, text).map_err(io_err(path))
}

/// Sidecar of a model file: core log10 resistivity, (layer, column).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub kind: String,
    pub dtype: String,
    pub shape: [usize; 2],
    pub background_log10: f64,
    /// Generator name: `grf`, `blocky`, `checkerboard`, `uniform`, `inverted`.
    pub generator: String,
    /// Generator parameters as drawn.
    pub spec: serde_json::Value,
    pub seed: Option<u64>,
    pub mesh: MeshConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub core_log10: Array2<f64>,
    pub meta: ModelMeta,
}

impl ModelFile {
    pub fn new(
        core_log10: Array2<f64>,
        background_log10: f64,
        generator: &str,
        spec: serde_json::Value,
        seed: Option<u64>,
        mesh: &Mesh,
    ) -> Self {
        let (r, c) = core_log10.dim();
        Self {
            core_log10,
            meta: ModelMeta {
                kind: "model".into(),
                dtype: DTYPE.into(),
                shape: [r, c],
                background_log10,
                generator: generator.into(),
                spec,
                seed,
                mesh: mesh.config.clone(),
            },
        }
    }

    pub fn core(&self) -> ArrayView2<'_, f64> {
        self.core_log10.view()
    }

    /// Full-mesh model with padding blended to the stored background.
    pub fn to_model(&self, mesh: &Mesh) -> Result<ResistivityModel> {
        embed_core(self.core_log10.view(), mesh, self.meta.background_log10)
    }

    pub fn save(&self, bin: &Path) -> Result<()> {
        write_f64(bin, self.core_log10.as_standard_layout().as_slice().expect("standard"))?;
        write_json(&sidecar_path(bin), &self.meta)
    }

    pub fn load(bin: &Path) -> Result<Self> {
        let meta: ModelMeta = read_json(&sidecar_path(bin))?;
        if meta.kind != "model" || meta.dtype != DTYPE {
            return Err(Error::Format(format!("{}: not a model file", bin.display())));
        }
        let [r, c] = meta.shape;
        let v = read_f64(bin, r * c)?;
        let core_log10 = Array2::from_shape_vec((r, c), v).map_err(|e| Error::Format(e.to_string()))?;
        Ok(Self { core_log10, meta })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseMeta {
    pub kind: String,
    pub dtype: String,
    /// (channel, frequency, station).
    pub shape: [usize; 3],
    pub channels: Vec<String>,
    pub frequencies_hz: Vec<f64>,
    pub station_x_m: Vec<f64>,
    /// Same layout as the data; `true` marks a missing entry.
    pub mask: Option<Vec<Vec<Vec<bool>>>>,
}

pub fn save_response(bin: &Path, r: &RmtResponse) -> Result<()> {
    let (c, f, s) = r.data.dim();
    let mask = r.mask.as_ref().map(|m| {
        (0..c)
            .map(|i| (0..f).map(|j| (0..s).map(|k| m[[i, j, k]]).collect()).collect())
            .collect()
    });
    let meta = ResponseMeta {
        kind: "response".into(),
        dtype: DTYPE.into(),
        shape: [c, f, s],
        channels: Channel::ALL.iter().map(|c| c.name().to_string()).collect(),
        frequencies_hz: r.frequencies_hz.clone(),
        station_x_m: r.station_x_m.clone(),
        mask,
    };
    write_f64(bin, r.data.as_standard_layout().as_slice().expect("standard"))?;
    write_json(&sidecar_path(bin), &meta)
}

pub fn load_response(bin: &Path) -> Result<RmtResponse> {
    let meta: ResponseMeta = read_json(&sidecar_path(bin))?;
    if meta.kind != "response" || meta.dtype != DTYPE {
        return Err(Error::Format(format!("{}: not a response file", bin.display())));
    }
    let expected: Vec<String> = Channel::ALL.iter().map(|c| c.name().to_string()).collect();
    if meta.channels != expected {
        return Err(Error::Format(format!(
            "{}: channel order {:?}, expected {:?}",
            bin.display(),
            meta.channels,
            expected
        )));
    }
    let [c, f, s] = meta.shape;
    let data = Array3::from_shape_vec((c, f, s), read_f64(bin, c * f * s)?)
        .map_err(|e| Error::Format(e.to_string()))?;
    let mask = match meta.mask {
        Some(m) => {
            let flat: Vec<bool> = m.into_iter().flatten().flatten().collect();
            Some(Array3::from_shape_vec((c, f, s), flat).map_err(|e| Error::Format(e.to_string()))?)
        }
        None => None,
    };
    RmtResponse::new(meta.frequencies_hz, meta.station_x_m, data, mask)
}
