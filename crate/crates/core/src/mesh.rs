//! Graded finite-difference mesh and resistivity models defined on it.
//!
//! Horizontal coordinates are centred on the profile midpoint. Depth `z` is
//! positive downward with `z = 0` at the air-earth interface, so air nodes have
//! negative `z`.

use std::ops::Range;

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometry parameters of the graded mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeshConfig {
    pub core_cell_size_m: f64,
    pub first_layer_thickness_m: f64,
    pub vertical_growth: f64,
    pub n_subsurface_layers: usize,
    pub n_pad_columns: usize,
    pub pad_growth: f64,
    pub n_air_layers: usize,
    pub air_first_thickness_m: f64,
    pub air_growth: f64,
    pub air_resistivity_ohm_m: f64,
    pub n_core_columns: usize,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self {
            core_cell_size_m: 2.0,
            first_layer_thickness_m: 1.0,
            vertical_growth: 1.1,
            n_subsurface_layers: 50,
            n_pad_columns: 10,
            pad_growth: 1.5,
            n_air_layers: 10,
            air_first_thickness_m: 1.0,
            air_growth: 3.0,
            air_resistivity_ohm_m: 1e10,
            n_core_columns: 116,
        }
    }
}

impl MeshConfig {
    pub fn validate(&self) -> Result<()> {
        let lengths = [
            ("core_cell_size_m", self.core_cell_size_m),
            ("first_layer_thickness_m", self.first_layer_thickness_m),
            ("air_first_thickness_m", self.air_first_thickness_m),
            ("air_resistivity_ohm_m", self.air_resistivity_ohm_m),
        ];
        for (field, v) in lengths {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(field, format!("must be positive, got {v}")));
            }
        }
        let ratios = [
            ("vertical_growth", self.vertical_growth),
            ("pad_growth", self.pad_growth),
            ("air_growth", self.air_growth),
        ];
        for (field, v) in ratios {
            if !(v.is_finite() && v >= 1.0) {
                return Err(Error::config(field, format!("must be >= 1, got {v}")));
            }
        }
        let counts = [
            ("n_subsurface_layers", self.n_subsurface_layers),
            ("n_pad_columns", self.n_pad_columns),
            ("n_air_layers", self.n_air_layers),
            ("n_core_columns", self.n_core_columns),
        ];
        for (field, v) in counts {
            if v == 0 {
                return Err(Error::config(field, "must be at least 1"));
            }
        }
        Ok(())
    }

    pub fn n_columns(&self) -> usize {
        self.n_core_columns + 2 * self.n_pad_columns
    }

    /// FNV-1a hash of the configuration, used to tie models to their mesh.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bits: u64| {
            for b in bits.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        for v in [
            self.core_cell_size_m,
            self.first_layer_thickness_m,
            self.vertical_growth,
            self.pad_growth,
            self.air_first_thickness_m,
            self.air_growth,
            self.air_resistivity_ohm_m,
        ] {
            eat(v.to_bits());
        }
        for v in [
            self.n_subsurface_layers,
            self.n_pad_columns,
            self.n_air_layers,
            self.n_core_columns,
        ] {
            eat(v as u64);
        }
        h
    }
}

/// A graded rectangular mesh: core columns of constant width flanked by
/// geometrically growing padding, air layers above a graded subsurface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub config: MeshConfig,
    /// Cell widths, left to right.
    pub column_widths_m: Vec<f64>,
    /// Cell thicknesses from the top air layer down to the deepest layer.
    pub layer_thicknesses_m: Vec<f64>,
    pub n_air_layers: usize,
    pub core_column_range: Range<usize>,
    /// Node row index of the air-earth interface.
    pub surface_row: usize,
    pub node_x_m: Vec<f64>,
    pub node_z_m: Vec<f64>,
}

pub fn build_mesh(config: &MeshConfig) -> Result<Mesh> {
    config.validate()?;
    let npad = config.n_pad_columns;
    let ncore = config.n_core_columns;

    let pad: Vec<f64> = (1..=npad)
        .map(|j| config.core_cell_size_m * config.pad_growth.powi(j as i32))
        .collect();
    let mut column_widths_m = Vec::with_capacity(ncore + 2 * npad);
    column_widths_m.extend(pad.iter().rev());
    column_widths_m.extend(std::iter::repeat_n(config.core_cell_size_m, ncore));
    column_widths_m.extend(pad.iter());

    let air: Vec<f64> = (0..config.n_air_layers)
        .map(|j| config.air_first_thickness_m * config.air_growth.powi(j as i32))
        .collect();
    let mut layer_thicknesses_m = Vec::with_capacity(air.len() + config.n_subsurface_layers);
    layer_thicknesses_m.extend(air.iter().rev());
    layer_thicknesses_m.extend(
        (0..config.n_subsurface_layers)
            .map(|j| config.first_layer_thickness_m * config.vertical_growth.powi(j as i32)),
    );

    // x = 0 at the centre of the core, built outward so the grid is exactly
    // symmetric.
    let ncols = column_widths_m.len();
    let mut node_x_m = vec![0.0; ncols + 1];
    let half_core = 0.5 * ncore as f64 * config.core_cell_size_m;
    for i in 0..=ncore {
        node_x_m[npad + i] = -half_core + i as f64 * config.core_cell_size_m;
    }
    if ncore % 2 == 0 {
        node_x_m[npad + ncore / 2] = 0.0;
    }
    for j in 0..npad {
        node_x_m[npad - 1 - j] = node_x_m[npad - j] - pad[j];
        node_x_m[npad + ncore + 1 + j] = node_x_m[npad + ncore + j] + pad[j];
    }
    for i in 0..ncols.div_ceil(2) {
        let m = 0.5 * (node_x_m[ncols - i] - node_x_m[i]);
        node_x_m[i] = -m;
        node_x_m[ncols - i] = m;
    }

    let surface_row = config.n_air_layers;
    let mut node_z_m = vec![0.0; layer_thicknesses_m.len() + 1];
    for r in (0..surface_row).rev() {
        node_z_m[r] = node_z_m[r + 1] - layer_thicknesses_m[r];
    }
    for r in surface_row..layer_thicknesses_m.len() {
        node_z_m[r + 1] = node_z_m[r] + layer_thicknesses_m[r];
    }

    Ok(Mesh {
        config: config.clone(),
        column_widths_m,
        layer_thicknesses_m,
        n_air_layers: config.n_air_layers,
        core_column_range: npad..npad + ncore,
        surface_row,
        node_x_m,
        node_z_m,
    })
}

impl Mesh {
    pub fn n_columns(&self) -> usize {
        self.column_widths_m.len()
    }

    pub fn n_subsurface_layers(&self) -> usize {
        self.layer_thicknesses_m.len() - self.n_air_layers
    }

    pub fn subsurface_thicknesses(&self) -> &[f64] {
        &self.layer_thicknesses_m[self.n_air_layers..]
    }

    pub fn air_thicknesses(&self) -> &[f64] {
        &self.layer_thicknesses_m[..self.n_air_layers]
    }

    /// Depth of the subsurface node rows, starting with 0 at the surface.
    pub fn subsurface_node_z(&self) -> &[f64] {
        &self.node_z_m[self.surface_row..]
    }

    pub fn total_depth_m(&self) -> f64 {
        self.subsurface_thicknesses().iter().sum()
    }

    pub fn cell_center_x(&self, col: usize) -> f64 {
        0.5 * (self.node_x_m[col] + self.node_x_m[col + 1])
    }

    /// Centre depth of subsurface layer `layer` (0 = topmost).
    pub fn layer_center_z(&self, layer: usize) -> f64 {
        let r = self.surface_row + layer;
        0.5 * (self.node_z_m[r] + self.node_z_m[r + 1])
    }

    /// Horizontal extent of the core region.
    pub fn core_x_extent(&self) -> (f64, f64) {
        (
            self.node_x_m[self.core_column_range.start],
            self.node_x_m[self.core_column_range.end],
        )
    }

    pub fn core_shape(&self) -> (usize, usize) {
        (self.n_subsurface_layers(), self.core_column_range.len())
    }

    pub fn model_shape(&self) -> (usize, usize) {
        (self.n_subsurface_layers(), self.n_columns())
    }

    pub fn id(&self) -> u64 {
        self.config.fingerprint()
    }
}

/// Where a station sits on the surface: the node at or left of it and the
/// linear interpolation weight toward the next node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationLocation {
    pub node: usize,
    pub frac: f64,
}

/// Surface node indices of the given stations.
///
/// Stations that do not coincide with a node return the node immediately to
/// their left; [`locate_stations`] carries the interpolation weight.
pub fn station_nodes(mesh: &Mesh, station_x_m: &[f64]) -> Result<Vec<usize>> {
    Ok(locate_stations(mesh, station_x_m)?
        .into_iter()
        .map(|l| l.node)
        .collect())
}

pub fn locate_stations(mesh: &Mesh, station_x_m: &[f64]) -> Result<Vec<StationLocation>> {
    let (lo, hi) = mesh.core_x_extent();
    let core = mesh.core_column_range.clone();
    let tol = 1e-9 * mesh.config.core_cell_size_m;
    station_x_m
        .iter()
        .map(|&x| {
            if !(x >= lo - tol && x <= hi + tol) {
                return Err(Error::OutOfDomain {
                    x_m: x,
                    lo_m: lo,
                    hi_m: hi,
                });
            }
            // nodes core.start ..= core.end span the core
            let nodes = &mesh.node_x_m[core.start..=core.end];
            let mut k = nodes.partition_point(|&nx| nx <= x + tol).saturating_sub(1);
            k = k.min(nodes.len() - 1);
            let node = core.start + k;
            let dx = x - mesh.node_x_m[node];
            if dx.abs() <= tol || node == core.end {
                return Ok(StationLocation { node, frac: 0.0 });
            }
            let w = mesh.node_x_m[node + 1] - mesh.node_x_m[node];
            Ok(StationLocation {
                node,
                frac: dx / w,
            })
        })
        .collect()
}

/// `n` stations evenly spaced over `[-half_length, half_length]`.
pub fn profile_stations(n: usize, half_length_m: f64) -> Vec<f64> {
    if n == 1 {
        return vec![0.0];
    }
    (0..n)
        .map(|i| -half_length_m + 2.0 * half_length_m * i as f64 / (n - 1) as f64)
        .collect()
}

/// The 21 stations at 10 m spacing over the 200 m profile.
pub fn default_stations() -> Vec<f64> {
    profile_stations(21, 100.0)
}

/// log10 resistivity on the subsurface cells of a mesh (air excluded).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResistivityModel {
    /// Shape (subsurface layers, columns), log10(ohm m).
    pub log10_rho: Array2<f64>,
    pub mesh_id: u64,
}

impl ResistivityModel {
    pub fn new(log10_rho: Array2<f64>, mesh: &Mesh) -> Result<Self> {
        if log10_rho.dim() != mesh.model_shape() {
            return Err(Error::Dimension(format!(
                "model shape {:?} does not match mesh {:?}",
                log10_rho.dim(),
                mesh.model_shape()
            )));
        }
        if let Some(v) = log10_rho.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite log10 resistivity {v}")));
        }
        Ok(Self {
            log10_rho,
            mesh_id: mesh.id(),
        })
    }

    pub fn uniform(mesh: &Mesh, rho_ohm_m: f64) -> Result<Self> {
        if !(rho_ohm_m > 0.0 && rho_ohm_m.is_finite()) {
            return Err(Error::Domain(format!("resistivity must be positive, got {rho_ohm_m}")));
        }
        Self::new(Array2::from_elem(mesh.model_shape(), rho_ohm_m.log10()), mesh)
    }

    pub fn core<'a>(&'a self, mesh: &Mesh) -> ArrayView2<'a, f64> {
        self.log10_rho.slice(s![.., mesh.core_column_range.clone()])
    }

    pub fn check_mesh(&self, mesh: &Mesh) -> Result<()> {
        if self.log10_rho.dim() != mesh.model_shape() {
            return Err(Error::Dimension(format!(
                "model shape {:?} does not match mesh {:?}",
                self.log10_rho.dim(),
                mesh.model_shape()
            )));
        }
        Ok(())
    }

    /// Left-right mirror image (the mesh is symmetric).
    pub fn mirrored(&self) -> Self {
        Self {
            log10_rho: self.log10_rho.slice(s![.., ..;-1]).to_owned(),
            mesh_id: self.mesh_id,
        }
    }
}

/// Places core values on the full mesh, filling the padding columns by linear
/// interpolation in log10 space from the outermost core column to
/// `background` at the outermost padding column.
pub fn embed_core(
    core_values: ArrayView2<f64>,
    mesh: &Mesh,
    background: f64,
) -> Result<ResistivityModel> {
    if core_values.dim() != mesh.core_shape() {
        return Err(Error::Dimension(format!(
            "core shape {:?} does not match mesh core {:?}",
            core_values.dim(),
            mesh.core_shape()
        )));
    }
    let (nrows, ncols) = mesh.model_shape();
    let core = mesh.core_column_range.clone();
    let npad = core.start;
    let mut full = Array2::zeros((nrows, ncols));
    full.slice_mut(s![.., core.clone()]).assign(&core_values);
    let last = core_values.ncols() - 1;
    for r in 0..nrows {
        let left = core_values[[r, 0]];
        let right = core_values[[r, last]];
        for j in 1..=npad {
            let t = j as f64 / npad as f64;
            full[[r, core.start - j]] = left + (background - left) * t;
            full[[r, core.end - 1 + j]] = right + (background - right) * t;
        }
    }
    ResistivityModel::new(full, mesh)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_mesh_dimensions() {
        let mesh = build_mesh(&MeshConfig::default()).unwrap();
        assert_eq!(mesh.n_columns(), 136);
        assert_eq!(mesh.n_subsurface_layers(), 50);
        assert_eq!(mesh.layer_thicknesses_m.len(), 60);
        assert_eq!(mesh.node_x_m.len(), 137);
        assert_eq!(mesh.node_z_m.len(), 61);
        assert_eq!(mesh.surface_row, 10);
        assert_eq!(mesh.node_z_m[10], 0.0);
        let core_width: f64 = mesh.column_widths_m[mesh.core_column_range.clone()]
            .iter()
            .sum();
        assert!((core_width - 232.0).abs() < 1e-12);
        assert_eq!(mesh.core_x_extent(), (-116.0, 116.0));
    }

    #[test]
    fn third_layer_thickness() {
        let mesh = build_mesh(&MeshConfig::default()).unwrap();
        assert!((mesh.subsurface_thicknesses()[2] - 1.21).abs() < 1e-12);
        // sum of 1.1^j, j < 50
        let expect = (1.1f64.powi(50) - 1.0) / 0.1;
        assert!((mesh.total_depth_m() - expect).abs() < 1e-9);
        assert!((mesh.total_depth_m() - 1163.9).abs() < 0.1);
    }

    #[test]
    fn unit_growth_gives_uniform_depth() {
        let cfg = MeshConfig {
            vertical_growth: 1.0,
            ..Default::default()
        };
        let mesh = build_mesh(&cfg).unwrap();
        assert_eq!(mesh.total_depth_m(), 50.0);
    }

    #[test]
    fn symmetric_and_graded() {
        let mesh = build_mesh(&MeshConfig::default()).unwrap();
        let n = mesh.n_columns();
        for i in 0..n {
            assert_eq!(mesh.column_widths_m[i], mesh.column_widths_m[n - 1 - i]);
        }
        for i in 0..=n {
            assert_eq!(mesh.node_x_m[i], -mesh.node_x_m[n - i]);
        }
        let pad = &mesh.column_widths_m[mesh.core_column_range.end..];
        assert!(pad.windows(2).all(|w| w[1] > w[0]));
        assert!(pad[0] > mesh.config.core_cell_size_m);
        assert!(mesh.layer_thicknesses_m.iter().all(|&t| t > 0.0));
    }

    #[test]
    fn invalid_config_names_field() {
        let cfg = MeshConfig {
            pad_growth: 0.5,
            ..Default::default()
        };
        match build_mesh(&cfg) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "pad_growth"),
            other => panic!("unexpected {other:?}"),
        }
        let cfg = MeshConfig {
            n_core_columns: 0,
            ..Default::default()
        };
        assert!(matches!(
            build_mesh(&cfg),
            Err(Error::Config {
                field: "n_core_columns",
                ..
            })
        ));
    }

    #[test]
    fn deterministic_build() {
        let a = build_mesh(&MeshConfig::default()).unwrap();
        let b = build_mesh(&MeshConfig::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn stations_on_nodes() {
        let mesh = build_mesh(&MeshConfig::default()).unwrap();
        let xs = default_stations();
        let locs = locate_stations(&mesh, &xs).unwrap();
        let nodes: Vec<usize> = locs.iter().map(|l| l.node).collect();
        assert_eq!(nodes.len(), 21);
        for (l, x) in locs.iter().zip(&xs) {
            assert_eq!(l.frac, 0.0);
            assert_eq!(mesh.node_x_m[l.node], *x);
            assert!(mesh.core_column_range.contains(&l.node));
        }
        let mut dedup = nodes.clone();
        dedup.dedup();
        assert_eq!(dedup.len(), 21);
    }

    #[test]
    fn centre_station() {
        let mesh = build_mesh(&MeshConfig::default()).unwrap();
        let n = station_nodes(&mesh, &[0.0]).unwrap();
        assert_eq!(n, vec![mesh.n_columns() / 2]);
    }

    #[test]
    fn station_outside_core() {
        let mesh = build_mesh(&MeshConfig::default()).unwrap();
        assert!(matches!(
            station_nodes(&mesh, &[1e3]),
            Err(Error::OutOfDomain { .. })
        ));
    }

    #[test]
    fn off_node_station_weight() {
        let mesh = build_mesh(&MeshConfig::default()).unwrap();
        let l = locate_stations(&mesh, &[3.0]).unwrap()[0];
        assert_eq!(mesh.node_x_m[l.node], 2.0);
        assert!((l.frac - 0.5).abs() < 1e-12);
    }

    #[test]
    fn embed_constant() {
        let mesh = build_mesh(&MeshConfig::default()).unwrap();
        let core = Array2::from_elem(mesh.core_shape(), 2.0);
        let m = embed_core(core.view(), &mesh, 2.0).unwrap();
        assert!(m.log10_rho.iter().all(|&v| v == 2.0));
    }

    #[test]
    fn embed_linear_ramp() {
        let mesh = build_mesh(&MeshConfig::default()).unwrap();
        let core = Array2::from_elem(mesh.core_shape(), 3.0);
        let m = embed_core(core.view(), &mesh, 1.0).unwrap();
        let start = mesh.core_column_range.start;
        let end = mesh.core_column_range.end;
        for j in 1..=10 {
            let expect = 3.0 + (1.0 - 3.0) * j as f64 / 10.0;
            for r in [0, 25, 49] {
                assert!((m.log10_rho[[r, start - j]] - expect).abs() < 1e-12);
                assert!((m.log10_rho[[r, end - 1 + j]] - expect).abs() < 1e-12);
            }
        }
        assert_eq!(m.core(&mesh), core);
    }

    #[test]
    fn embed_shape_mismatch() {
        let mesh = build_mesh(&MeshConfig::default()).unwrap();
        let core = Array2::from_elem((10, 10), 3.0);
        assert!(matches!(
            embed_core(core.view(), &mesh, 1.0),
            Err(Error::Dimension(_))
        ));
    }
}
