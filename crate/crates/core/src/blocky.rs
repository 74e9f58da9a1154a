//! Blocky out-of-distribution models and the two checkerboard fixtures.
//!
//! Anomalies are unions of axis-aligned rectangles in metres (x across the
//! profile, z down from the surface), rasterised onto the core cells by
//! cell-centre containment.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{embed_core, Mesh, ResistivityModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryType {
    OneBlock,
    TwoBlocks,
    ThreeBlocks,
    OneInclined,
    TwoInclined,
}

impl GeometryType {
    pub const ALL: [GeometryType; 5] = [
        GeometryType::OneBlock,
        GeometryType::TwoBlocks,
        GeometryType::ThreeBlocks,
        GeometryType::OneInclined,
        GeometryType::TwoInclined,
    ];

    pub fn n_anomalies(self) -> usize {
        match self {
            GeometryType::OneBlock | GeometryType::OneInclined => 1,
            GeometryType::TwoBlocks | GeometryType::TwoInclined => 2,
            GeometryType::ThreeBlocks => 3,
        }
    }

    pub fn is_inclined(self) -> bool {
        matches!(self, GeometryType::OneInclined | GeometryType::TwoInclined)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlockySpec {
    /// `None` draws one of the five types uniformly per sample.
    pub geometry_type: Option<GeometryType>,
    pub background_ohm_m: f64,
    pub high_range_ohm_m: (f64, f64),
    pub low_range_ohm_m: (f64, f64),
    pub block_width_m: (f64, f64),
    pub block_height_m: (f64, f64),
    pub top_depth_m: (f64, f64),
    /// Bound on |x| of an anomaly's centre.
    pub center_x_max_m: f64,
    pub inclined_steps: (usize, usize),
    pub dip_deg: (f64, f64),
    pub step_width_m: (f64, f64),
    pub step_height_m: (f64, f64),
    /// Minimum gap between distinct anomalies.
    pub separation_m: f64,
    pub max_attempts: usize,
}

impl Default for BlockySpec {
    fn default() -> Self {
        Self {
            geometry_type: None,
            background_ohm_m: 500.0,
            high_range_ohm_m: (1000.0, 2000.0),
            low_range_ohm_m: (10.0, 20.0),
            block_width_m: (20.0, 60.0),
            block_height_m: (10.0, 30.0),
            top_depth_m: (4.0, 30.0),
            center_x_max_m: 80.0,
            inclined_steps: (4, 8),
            dip_deg: (20.0, 60.0),
            step_width_m: (10.0, 20.0),
            step_height_m: (3.0, 6.0),
            separation_m: 2.0,
            max_attempts: 100,
        }
    }
}

impl BlockySpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.background_ohm_m > 0.0 && self.background_ohm_m.is_finite()) {
            return Err(Error::config("background_ohm_m", "must be positive"));
        }
        let intervals = [
            ("high_range_ohm_m", self.high_range_ohm_m),
            ("low_range_ohm_m", self.low_range_ohm_m),
            ("block_width_m", self.block_width_m),
            ("block_height_m", self.block_height_m),
            ("step_width_m", self.step_width_m),
            ("step_height_m", self.step_height_m),
        ];
        for (field, (lo, hi)) in intervals {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(Error::config(field, format!("need 0 < lo <= hi, got ({lo}, {hi})")));
            }
        }
        let (tlo, thi) = self.top_depth_m;
        if !(tlo >= 0.0 && tlo <= thi) {
            return Err(Error::config("top_depth_m", "need 0 <= lo <= hi"));
        }
        let (dlo, dhi) = self.dip_deg;
        if !(dlo > 0.0 && dlo <= dhi && dhi < 90.0) {
            return Err(Error::config("dip_deg", "need 0 < lo <= hi < 90"));
        }
        let (slo, shi) = self.inclined_steps;
        if slo == 0 || slo > shi {
            return Err(Error::config("inclined_steps", "need 1 <= lo <= hi"));
        }
        if !(self.center_x_max_m >= 0.0) {
            return Err(Error::config("center_x_max_m", "must be >= 0"));
        }
        if self.max_attempts == 0 {
            return Err(Error::config("max_attempts", "must be at least 1"));
        }
        Ok(())
    }
}

/// Axis-aligned rectangle, metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub z0: f64,
    pub z1: f64,
}

impl Rect {
    pub fn contains(&self, x: f64, z: f64) -> bool {
        x > self.x0 && x < self.x1 && z > self.z0 && z < self.z1
    }

    fn intersects(&self, other: &Rect, gap: f64) -> bool {
        self.x0 < other.x1 + gap
            && other.x0 < self.x1 + gap
            && self.z0 < other.z1 + gap
            && other.z0 < self.z1 + gap
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "H")]
    High,
    #[serde(rename = "L")]
    Low,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anomaly {
    pub label: Label,
    pub resistivity_ohm_m: f64,
    pub parts: Vec<Rect>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockyRealization {
    pub geometry_type: GeometryType,
    pub anomalies: Vec<Anomaly>,
    pub model: ResistivityModel,
    pub background_log10: f64,
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

fn block<R: Rng + ?Sized>(spec: &BlockySpec, rng: &mut R) -> Vec<Rect> {
    let w = uniform(rng, spec.block_width_m);
    let h = uniform(rng, spec.block_height_m);
    let top = uniform(rng, spec.top_depth_m);
    let cx = uniform(rng, (-spec.center_x_max_m, spec.center_x_max_m));
    vec![Rect {
        x0: cx - 0.5 * w,
        x1: cx + 0.5 * w,
        z0: top,
        z1: top + h,
    }]
}

/// A dipping body as a stack of rectangles, each shifted sideways by
/// `step height / tan(dip)`.
fn inclined<R: Rng + ?Sized>(spec: &BlockySpec, rng: &mut R) -> Vec<Rect> {
    let n = rng.random_range(spec.inclined_steps.0..=spec.inclined_steps.1);
    let w = uniform(rng, spec.step_width_m);
    let h = uniform(rng, spec.step_height_m);
    let dip = uniform(rng, spec.dip_deg).to_radians();
    let dir = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let shift = dir * h / dip.tan();
    let top = uniform(rng, spec.top_depth_m);
    let cx = uniform(rng, (-spec.center_x_max_m, spec.center_x_max_m));
    let x_start = cx - 0.5 * shift * (n - 1) as f64;
    (0..n)
        .map(|i| {
            let x = x_start + shift * i as f64;
            let z = top + h * i as f64;
            Rect {
                x0: x - 0.5 * w,
                x1: x + 0.5 * w,
                z0: z,
                z1: z + h,
            }
        })
        .collect()
}

fn core_bounds(mesh: &Mesh) -> Rect {
    let (x0, x1) = mesh.core_x_extent();
    Rect {
        x0,
        x1,
        z0: 0.0,
        z1: mesh.total_depth_m(),
    }
}

fn inside(r: &Rect, bounds: &Rect) -> bool {
    r.x0 >= bounds.x0 && r.x1 <= bounds.x1 && r.z0 >= bounds.z0 && r.z1 <= bounds.z1
}

/// Core log10 values for `anomalies` over `background_ohm_m`.
pub fn rasterize(mesh: &Mesh, background_ohm_m: f64, anomalies: &[Anomaly]) -> Array2<f64> {
    let (nl, nc) = mesh.core_shape();
    let c0 = mesh.core_column_range.start;
    let mut core = Array2::from_elem((nl, nc), background_ohm_m.log10());
    for r in 0..nl {
        let z = mesh.layer_center_z(r);
        for c in 0..nc {
            let x = mesh.cell_center_x(c0 + c);
            for a in anomalies {
                if a.parts.iter().any(|p| p.contains(x, z)) {
                    core[[r, c]] = a.resistivity_ohm_m.log10();
                }
            }
        }
    }
    core
}

fn covers_a_cell(mesh: &Mesh, parts: &[Rect]) -> bool {
    let (nl, nc) = mesh.core_shape();
    let c0 = mesh.core_column_range.start;
    (0..nl).any(|r| {
        let z = mesh.layer_center_z(r);
        (0..nc).any(|c| parts.iter().any(|p| p.contains(mesh.cell_center_x(c0 + c), z)))
    })
}

pub fn sample_blocky<R: Rng + ?Sized>(
    spec: &BlockySpec,
    mesh: &Mesh,
    rng: &mut R,
) -> Result<BlockyRealization> {
    spec.validate()?;
    let geometry_type = match spec.geometry_type {
        Some(g) => g,
        None => GeometryType::ALL[rng.random_range(0..GeometryType::ALL.len())],
    };
    let bounds = core_bounds(mesh);
    let mut anomalies: Vec<Anomaly> = Vec::with_capacity(geometry_type.n_anomalies());
    for _ in 0..geometry_type.n_anomalies() {
        let mut placed = None;
        for _ in 0..spec.max_attempts {
            let parts = if geometry_type.is_inclined() {
                inclined(spec, rng)
            } else {
                block(spec, rng)
            };
            let ok = parts.iter().all(|p| inside(p, &bounds))
                && covers_a_cell(mesh, &parts)
                && !anomalies.iter().any(|a| {
                    a.parts
                        .iter()
                        .any(|q| parts.iter().any(|p| p.intersects(q, spec.separation_m)))
                });
            if ok {
                placed = Some(parts);
                break;
            }
        }
        let parts = placed.ok_or_else(|| {
            Error::Generation(format!(
                "could not place anomaly {} of {:?} after {} attempts",
                anomalies.len() + 1,
                geometry_type,
                spec.max_attempts
            ))
        })?;
        let (label, range) = if rng.random_bool(0.5) {
            (Label::High, spec.high_range_ohm_m)
        } else {
            (Label::Low, spec.low_range_ohm_m)
        };
        anomalies.push(Anomaly {
            label,
            resistivity_ohm_m: uniform(rng, range),
            parts,
        });
    }
    let core = rasterize(mesh, spec.background_ohm_m, &anomalies);
    let background_log10 = spec.background_ohm_m.log10();
    let model = embed_core(core.view(), mesh, background_log10)?;
    Ok(BlockyRealization {
        geometry_type,
        anomalies,
        model,
        background_log10,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Fixture {
    /// Three abutting 30 m x 25 m blocks, resistive on the flanks.
    One,
    /// Two rows of two blocks with alternating values.
    Two,
}

impl Fixture {
    pub fn from_id(id: u32) -> Result<Self> {
        match id {
            1 => Ok(Fixture::One),
            2 => Ok(Fixture::Two),
            _ => Err(Error::Domain(format!("unknown checkerboard fixture {id}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CheckerboardConfig {
    pub background_ohm_m: f64,
    pub resistive_ohm_m: f64,
    pub conductive_ohm_m: f64,
    /// Central block of fixture one.
    pub central_block_ohm_m: f64,
}

impl Default for CheckerboardConfig {
    fn default() -> Self {
        Self {
            background_ohm_m: 100.0,
            resistive_ohm_m: 1000.0,
            conductive_ohm_m: 10.0,
            central_block_ohm_m: 10.0,
        }
    }
}

pub fn checkerboard_anomalies(fixture: Fixture, config: &CheckerboardConfig) -> Vec<Anomaly> {
    let rect = |x0, x1, z0, z1| Rect { x0, x1, z0, z1 };
    let anomaly = |rho: f64, r: Rect| Anomaly {
        label: if rho > config.background_ohm_m {
            Label::High
        } else {
            Label::Low
        },
        resistivity_ohm_m: rho,
        parts: vec![r],
    };
    let (hi, lo) = (config.resistive_ohm_m, config.conductive_ohm_m);
    match fixture {
        Fixture::One => vec![
            anomaly(hi, rect(-45.0, -15.0, 5.0, 30.0)),
            anomaly(config.central_block_ohm_m, rect(-15.0, 15.0, 5.0, 30.0)),
            anomaly(hi, rect(15.0, 45.0, 5.0, 30.0)),
        ],
        Fixture::Two => vec![
            anomaly(lo, rect(-60.0, -20.0, 5.0, 15.0)),
            anomaly(hi, rect(20.0, 60.0, 5.0, 15.0)),
            anomaly(hi, rect(-60.0, -20.0, 25.0, 35.0)),
            anomaly(lo, rect(20.0, 60.0, 25.0, 35.0)),
        ],
    }
}

pub fn checkerboard(fixture: Fixture, mesh: &Mesh, config: &CheckerboardConfig) -> Result<ResistivityModel> {
    if !(config.background_ohm_m > 0.0
        && config.resistive_ohm_m > 0.0
        && config.conductive_ohm_m > 0.0
        && config.central_block_ohm_m > 0.0)
    {
        return Err(Error::Domain("checkerboard resistivities must be positive".into()));
    }
    let anomalies = checkerboard_anomalies(fixture, config);
    let core = rasterize(mesh, config.background_ohm_m, &anomalies);
    embed_core(core.view(), mesh, config.background_ohm_m.log10())
}
