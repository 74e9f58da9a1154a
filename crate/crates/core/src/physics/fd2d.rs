//! Node-centred finite-volume solution of the 2D TE and TM equations.
//!
//! TE solves `∇²E + iωμσE = 0` for the strike-parallel electric field over
//! air and earth; TM solves `∇·(ρ∇H) + iωμH = 0` for the strike-parallel
//! magnetic field over the earth only. Integrating over the dual cell of
//! each node gives a symmetric 5-point operator:
//!
//! * TE couplings are pure geometry; the mass term uses the area-weighted
//!   mean conductivity of the four cells around the node.
//! * TM couplings carry the length-weighted mean resistivity along the dual
//!   edge (the harmonic mean of the two cell conductivities in parallel).
//!
//! All four sides are Dirichlet: value 1 on top, and on the sides and bottom
//! the 1D layered solution of the local column, normalised to 1 at the top.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::mesh::{locate_stations, Mesh, ResistivityModel, StationLocation};
use crate::physics::layered::{field_profile_1d, LayeredModel, Mode, MU0};
use crate::physics::response::{FrequencySet, RmtResponse};
use crate::physics::sparse::{solve_symmetric, CsrMatrix};

use ndarray::Array3;

/// Required relative residual of every solve.
pub const RESIDUAL_TOL: f64 = 1e-10;

/// Nodes in the one-sided surface derivative stencil.
pub const SURFACE_STENCIL_POINTS: usize = 5;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Cell geometry and material for one mode.
struct CellGrid {
    widths: Vec<f64>,
    heights: Vec<f64>,
    /// Conductivity (TE) or resistivity (TM), row-major.
    value: Vec<f64>,
}

impl CellGrid {
    fn new(mode: Mode, mesh: &Mesh, model: &ResistivityModel) -> Result<Self> {
        model.check_mesh(mesh)?;
        if let Some(v) = model.log10_rho.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite log10 resistivity {v}")));
        }
        let ncols = mesh.n_columns();
        let (heights, air_rows) = match mode {
            Mode::Te => (mesh.layer_thicknesses_m.clone(), mesh.n_air_layers),
            Mode::Tm => (mesh.subsurface_thicknesses().to_vec(), 0),
        };
        let mut value = Vec::with_capacity(heights.len() * ncols);
        let air_sigma = 1.0 / mesh.config.air_resistivity_ohm_m;
        for _ in 0..air_rows * ncols {
            value.push(air_sigma);
        }
        for &l in model.log10_rho.iter() {
            let rho = 10f64.powf(l);
            value.push(match mode {
                Mode::Te => 1.0 / rho,
                Mode::Tm => rho,
            });
        }
        Ok(Self {
            widths: mesh.column_widths_m.clone(),
            heights,
            value,
        })
    }

    fn ncols(&self) -> usize {
        self.widths.len()
    }

    fn nrows(&self) -> usize {
        self.heights.len()
    }

    fn at(&self, r: usize, c: usize) -> f64 {
        self.value[r * self.ncols() + c]
    }

    /// Resistivity of cell row `r` seen by node column `c` (average over the
    /// adjacent cell columns, in the quantity the stencil is linear in).
    fn column_resistivity(&self, mode: Mode, r: usize, c: usize) -> f64 {
        let l = c.saturating_sub(1);
        let rr = c.min(self.ncols() - 1);
        let v = 0.5 * (self.at(r, l) + self.at(r, rr));
        match mode {
            Mode::Te => 1.0 / v,
            Mode::Tm => v,
        }
    }
}

/// Linear system over the interior nodes plus the Dirichlet data it was
/// built from.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub mode: Mode,
    pub frequency_hz: f64,
    pub n_node_rows: usize,
    pub n_node_cols: usize,
    pub matrix: CsrMatrix,
    pub rhs: Vec<Complex64>,
    /// Full node grid, row-major; Dirichlet values on the boundary, zero
    /// inside.
    pub boundary: Vec<Complex64>,
    /// Mass coefficient `ωμ·m` of each unknown, so row sums can be checked.
    pub mass: Vec<f64>,
}

impl AssembledSystem {
    pub fn n_unknowns(&self) -> usize {
        self.matrix.n
    }

    /// Unknowns are numbered column by column, depth fastest, which keeps
    /// the half bandwidth at the number of interior rows.
    pub fn unknown_index(&self, r: usize, c: usize) -> Option<usize> {
        let ir = self.n_node_rows - 2;
        (r >= 1 && r + 1 < self.n_node_rows && c >= 1 && c + 1 < self.n_node_cols)
            .then(|| (c - 1) * ir + (r - 1))
    }

    pub fn node_of_unknown(&self, k: usize) -> (usize, usize) {
        let ir = self.n_node_rows - 2;
        (k % ir + 1, k / ir + 1)
    }

    pub fn is_boundary(&self, r: usize, c: usize) -> bool {
        self.unknown_index(r, c).is_none()
    }
}

pub fn assemble(
    mode: Mode,
    mesh: &Mesh,
    model: &ResistivityModel,
    frequency_hz: f64,
) -> Result<AssembledSystem> {
    if !(frequency_hz.is_finite() && frequency_hz > 0.0) {
        return Err(Error::Domain(format!(
            "frequency must be positive, got {frequency_hz}"
        )));
    }
    let grid = CellGrid::new(mode, mesh, model)?;
    let omega = 2.0 * std::f64::consts::PI * frequency_hz;
    let nr = grid.nrows() + 1;
    let nc = grid.ncols() + 1;
    let boundary = boundary_values(mode, &grid, frequency_hz)?;

    let ir = nr - 2;
    let n = ir * (nc - 2);
    let idx = |r: usize, c: usize| -> Option<usize> {
        (r >= 1 && r + 1 < nr && c >= 1 && c + 1 < nc).then(|| (c - 1) * ir + (r - 1))
    };
    let mut rows = Vec::with_capacity(n);
    let mut rhs = vec![ZERO; n];
    let mut mass = vec![0.0; n];
    let w = &grid.widths;
    let h = &grid.heights;
    for c in 1..nc - 1 {
        for r in 1..nr - 1 {
            let (ww, we) = (w[c - 1], w[c]);
            let (hn, hs) = (h[r - 1], h[r]);
            let (nw, ne, sw, se) = (
                grid.at(r - 1, c - 1),
                grid.at(r - 1, c),
                grid.at(r, c - 1),
                grid.at(r, c),
            );
            let (ce, cw, cn, cs, m) = match mode {
                Mode::Te => (
                    0.5 * (hn + hs) / we,
                    0.5 * (hn + hs) / ww,
                    0.5 * (ww + we) / hn,
                    0.5 * (ww + we) / hs,
                    0.25 * (nw * ww * hn + ne * we * hn + sw * ww * hs + se * we * hs),
                ),
                Mode::Tm => (
                    0.5 * (ne * hn + se * hs) / we,
                    0.5 * (nw * hn + sw * hs) / ww,
                    0.5 * (nw * ww + ne * we) / hn,
                    0.5 * (sw * ww + se * we) / hs,
                    0.25 * (ww + we) * (hn + hs),
                ),
            };
            let k = idx(r, c).unwrap();
            let mass_k = omega * MU0 * m;
            mass[k] = mass_k;
            let mut row = Vec::with_capacity(5);
            row.push((k, Complex64::new(ce + cw + cn + cs, -mass_k)));
            for (coef, rr, cc) in [(ce, r, c + 1), (cw, r, c - 1), (cn, r - 1, c), (cs, r + 1, c)] {
                match idx(rr, cc) {
                    Some(j) => row.push((j, Complex64::new(-coef, 0.0))),
                    None => rhs[k] += coef * boundary[rr * nc + cc],
                }
            }
            rows.push(row);
        }
    }
    Ok(AssembledSystem {
        mode,
        frequency_hz,
        n_node_rows: nr,
        n_node_cols: nc,
        matrix: CsrMatrix::from_rows(rows),
        rhs,
        boundary,
        mass,
    })
}

/// Dirichlet data on the full node grid.
fn boundary_values(mode: Mode, grid: &CellGrid, frequency_hz: f64) -> Result<Vec<Complex64>> {
    let nr = grid.nrows() + 1;
    let nc = grid.ncols() + 1;
    let mut out = vec![ZERO; nr * nc];
    let mut depth = vec![0.0; nr];
    for r in 1..nr {
        depth[r] = depth[r - 1] + grid.heights[r - 1];
    }
    let thick = grid.heights[..grid.nrows() - 1].to_vec();
    for c in 0..nc {
        let rho: Vec<f64> = (0..grid.nrows())
            .map(|r| grid.column_resistivity(mode, r, c))
            .collect();
        let column = LayeredModel::new(rho, thick.clone())?;
        if c == 0 || c == nc - 1 {
            let prof = field_profile_1d(&column, frequency_hz, &depth, mode)?;
            for r in 0..nr {
                out[r * nc + c] = prof[r];
            }
        } else {
            out[c] = Complex64::new(1.0, 0.0);
            let prof = field_profile_1d(&column, frequency_hz, &depth[nr - 1..], mode)?;
            out[(nr - 1) * nc + c] = prof[0];
        }
    }
    Ok(out)
}

/// Solved field over the full node grid.
#[derive(Debug, Clone)]
pub struct FieldSolution {
    pub mode: Mode,
    pub frequency_hz: f64,
    pub n_node_rows: usize,
    pub n_node_cols: usize,
    /// Row-major node values: `E_x` for TE, `H_x` for TM.
    pub node_values: Vec<Complex64>,
    pub relative_residual: f64,
}

impl FieldSolution {
    pub fn at(&self, r: usize, c: usize) -> Complex64 {
        self.node_values[r * self.n_node_cols + c]
    }
}

pub fn solve_fields(system: &AssembledSystem) -> Result<FieldSolution> {
    let (x, res) = solve_symmetric(&system.matrix, &system.rhs, RESIDUAL_TOL)?;
    let mut node_values = system.boundary.clone();
    for (k, v) in x.into_iter().enumerate() {
        let (r, c) = system.node_of_unknown(k);
        node_values[r * system.n_node_cols + c] = v;
    }
    Ok(FieldSolution {
        mode: system.mode,
        frequency_hz: system.frequency_hz,
        n_node_rows: system.n_node_rows,
        n_node_cols: system.n_node_cols,
        node_values,
        relative_residual: res,
    })
}

/// Weights of the first derivative at `x0` from values at `nodes`
/// (Fornberg's recursion).
pub fn derivative_weights(nodes: &[f64], x0: f64) -> Vec<f64> {
    let n = nodes.len();
    let m = 1;
    let mut c = vec![[0.0f64; 2]; n];
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - x0;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|w| w[1]).collect()
}

pub fn surface_impedance(
    fields: &FieldSolution,
    mesh: &Mesh,
    model: &ResistivityModel,
    stations: &[StationLocation],
) -> Result<Vec<Complex64>> {
    surface_impedance_with(fields, mesh, model, stations, SURFACE_STENCIL_POINTS)
}

/// Station impedances (positive-phase convention) from a one-sided
/// `points`-node vertical derivative into the earth.
///
/// TE: `H_y = ∂E_x/∂z / (iωμ)`. TM: `E_y = ρ ∂H_x/∂z = ∂H_x/∂ζ` with the
/// conductance depth `ζ = ∫σ dz`, in which `H_x` has a continuous derivative
/// across layer boundaries.
pub fn surface_impedance_with(
    fields: &FieldSolution,
    mesh: &Mesh,
    model: &ResistivityModel,
    stations: &[StationLocation],
    points: usize,
) -> Result<Vec<Complex64>> {
    let mode = fields.mode;
    let grid = CellGrid::new(mode, mesh, model)?;
    if fields.n_node_cols != grid.ncols() + 1 || fields.n_node_rows != grid.nrows() + 1 {
        return Err(Error::Dimension("field solution does not match mesh".into()));
    }
    let surface = match mode {
        Mode::Te => mesh.surface_row,
        Mode::Tm => 0,
    };
    let points = points.clamp(2, fields.n_node_rows - surface);
    let omega = 2.0 * std::f64::consts::PI * fields.frequency_hz;

    let at_node = |c: usize| -> (Complex64, Complex64) {
        let mut offsets = Vec::with_capacity(points);
        let mut s = 0.0;
        offsets.push(0.0);
        for k in 0..points - 1 {
            let r = surface + k;
            let stretch = match mode {
                Mode::Te => 1.0,
                Mode::Tm => 1.0 / grid.column_resistivity(mode, r, c),
            };
            s += stretch * grid.heights[r];
            offsets.push(s);
        }
        let wts = derivative_weights(&offsets, 0.0);
        let d: Complex64 = wts
            .iter()
            .enumerate()
            .map(|(k, w)| *w * fields.at(surface + k, c))
            .sum();
        (fields.at(surface, c), d)
    };

    stations
        .iter()
        .map(|loc| {
            if loc.node + 1 >= fields.n_node_cols {
                return Err(Error::Dimension(format!(
                    "station node {} outside the surface row",
                    loc.node
                )));
            }
            let (mut u, mut du) = at_node(loc.node);
            if loc.frac > 0.0 {
                let (u1, du1) = at_node(loc.node + 1);
                u += (u1 - u) * loc.frac;
                du += (du1 - du) * loc.frac;
            }
            Ok(match mode {
                // raw E/H = iωμ E / E'
                Mode::Te => (Complex64::new(0.0, omega * MU0) * u / du).conj(),
                // raw E_y/H_x = dH/dζ / H, sign flipped into the same quadrant
                Mode::Tm => (-du / u).conj(),
            })
        })
        .collect()
}

/// Impedances of both modes at every frequency, then apparent resistivity and
/// phase.
pub fn forward_response(
    model: &ResistivityModel,
    mesh: &Mesh,
    freqs: &FrequencySet,
    station_x_m: &[f64],
) -> Result<RmtResponse> {
    let stations = locate_stations(mesh, station_x_m)?;
    let nf = freqs.len();
    let ns = stations.len();
    let mut data = Array3::zeros((4, nf, ns));
    for (fi, &f) in freqs.frequencies_hz.iter().enumerate() {
        for (mi, mode) in [Mode::Te, Mode::Tm].into_iter().enumerate() {
            let z = impedances(mode, mesh, model, f, &stations)?;
            for (si, zi) in z.iter().enumerate() {
                data[[mi, fi, si]] = crate::physics::apparent_resistivity(*zi, f);
                data[[2 + mi, fi, si]] = crate::physics::phase_deg(*zi);
            }
        }
    }
    if let Some(v) = data.iter().find(|v| !v.is_finite()) {
        return Err(Error::Numerical {
            reason: format!("non-finite response value {v}"),
            residual: f64::NAN,
        });
    }
    RmtResponse::new(freqs.frequencies_hz.clone(), station_x_m.to_vec(), data, None)
}

/// Assemble, solve and extract station impedances for one mode and frequency.
pub fn impedances(
    mode: Mode,
    mesh: &Mesh,
    model: &ResistivityModel,
    frequency_hz: f64,
    stations: &[StationLocation],
) -> Result<Vec<Complex64>> {
    let sys = assemble(mode, mesh, model, frequency_hz)?;
    let fields = solve_fields(&sys)?;
    surface_impedance(&fields, mesh, model, stations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, MeshConfig};

    fn small_mesh() -> Mesh {
        build_mesh(&MeshConfig {
            n_core_columns: 20,
            n_pad_columns: 6,
            n_subsurface_layers: 20,
            n_air_layers: 5,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn derivative_weights_exact_for_polynomials() {
        let nodes = [0.0, 1.0, 2.1, 3.31, 4.641];
        let w = derivative_weights(&nodes, 0.0);
        // d/dz of z^p at 0 is 1 for p = 1, 0 otherwise
        for p in 0..5 {
            let d: f64 = w.iter().zip(&nodes).map(|(w, z)| w * z.powi(p)).sum();
            let expect = if p == 1 { 1.0 } else { 0.0 };
            assert!((d - expect).abs() < 1e-10, "p={p} d={d}");
        }
        let w3 = derivative_weights(&[0.0, 1.0, 3.0], 0.0);
        let (h1, h2) = (1.0, 2.0);
        let expect = [
            -(2.0 * h1 + h2) / (h1 * (h1 + h2)),
            (h1 + h2) / (h1 * h2),
            -h1 / (h2 * (h1 + h2)),
        ];
        for (a, b) in w3.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn unknown_count_and_symmetry() {
        let mesh = build_mesh(&MeshConfig::default()).unwrap();
        let model = ResistivityModel::uniform(&mesh, 100.0).unwrap();
        let te = assemble(Mode::Te, &mesh, &model, 1e4).unwrap();
        assert_eq!((te.n_node_rows, te.n_node_cols), (61, 137));
        assert_eq!(te.n_unknowns(), 59 * 135);
        assert_eq!(te.matrix.half_bandwidth(), 59);
        let tm = assemble(Mode::Tm, &mesh, &model, 1e4).unwrap();
        assert_eq!(tm.n_unknowns(), 49 * 135);
        let small = small_mesh();
        let m = ResistivityModel::uniform(&small, 30.0).unwrap();
        for mode in [Mode::Te, Mode::Tm] {
            let s = assemble(mode, &small, &m, 3e4).unwrap();
            assert!(s.matrix.is_symmetric(1e-14));
        }
    }

    #[test]
    fn interior_rows_sum_to_mass_term() {
        let mesh = small_mesh();
        let model = ResistivityModel::uniform(&mesh, 50.0).unwrap();
        for mode in [Mode::Te, Mode::Tm] {
            let s = assemble(mode, &mesh, &model, 2e4).unwrap();
            for k in 0..s.n_unknowns() {
                let (r, c) = s.node_of_unknown(k);
                let touches_boundary = [(r + 1, c), (r - 1, c), (r, c + 1), (r, c - 1)]
                    .iter()
                    .any(|&(a, b)| s.is_boundary(a, b));
                if touches_boundary {
                    continue;
                }
                let sum: Complex64 = s.matrix.row(k).map(|(_, v)| v).sum();
                let scale = s.matrix.get(k, k).re;
                assert!(sum.re.abs() <= 1e-12 * scale, "{mode:?} row {k}: {sum}");
                assert!((sum.im + s.mass[k]).abs() <= 1e-12 * s.mass[k]);
            }
        }
    }

    #[test]
    fn solution_keeps_boundary_values() {
        let mesh = small_mesh();
        let model = ResistivityModel::uniform(&mesh, 100.0).unwrap();
        let s = assemble(Mode::Te, &mesh, &model, 1e4).unwrap();
        let f = solve_fields(&s).unwrap();
        assert!(f.relative_residual <= RESIDUAL_TOL);
        for r in 0..f.n_node_rows {
            for c in 0..f.n_node_cols {
                if s.is_boundary(r, c) {
                    assert_eq!(f.at(r, c), s.boundary[r * f.n_node_cols + c]);
                }
            }
        }
        assert_eq!(f.at(0, 5), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn rejects_bad_input() {
        let mesh = small_mesh();
        let model = ResistivityModel::uniform(&mesh, 100.0).unwrap();
        assert!(assemble(Mode::Te, &mesh, &model, 0.0).is_err());
        let other = build_mesh(&MeshConfig::default()).unwrap();
        assert!(matches!(
            assemble(Mode::Te, &other, &model, 1e3),
            Err(Error::Dimension(_))
        ));
        let mut bad = model.clone();
        bad.log10_rho[[0, 0]] = f64::NAN;
        assert!(assemble(Mode::Tm, &mesh, &bad, 1e3).is_err());
    }
}
