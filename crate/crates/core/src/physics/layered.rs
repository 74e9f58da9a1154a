//! Analytic 1D layered-earth magnetotelluric response.
//!
//! Fields follow the `e^{-iωt}` time convention with depth positive downward,
//! so a decaying wave is `e^{ikz}` with `k = sqrt(iωμ0/ρ)`. Impedances handed
//! out of this module are reported in the positive-phase quadrant (complex
//! conjugate of the raw `E/H` ratio), which puts a half-space at +45°.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Vacuum permeability, H/m.
pub const MU0: f64 = 4e-7 * PI;

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "TE")]
    Te,
    #[serde(rename = "TM")]
    Tm,
}

/// Horizontally stratified earth; the last resistivity is the basement
/// half-space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayeredModel {
    pub resistivities_ohm_m: Vec<f64>,
    pub thicknesses_m: Vec<f64>,
}

impl LayeredModel {
    pub fn new(resistivities_ohm_m: Vec<f64>, thicknesses_m: Vec<f64>) -> Result<Self> {
        if resistivities_ohm_m.is_empty() {
            return Err(Error::Domain("layered model needs at least one layer".into()));
        }
        if thicknesses_m.len() + 1 != resistivities_ohm_m.len() {
            return Err(Error::Dimension(format!(
                "{} resistivities need {} thicknesses, got {}",
                resistivities_ohm_m.len(),
                resistivities_ohm_m.len() - 1,
                thicknesses_m.len()
            )));
        }
        if let Some(r) = resistivities_ohm_m.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return Err(Error::Domain(format!("resistivity must be positive, got {r}")));
        }
        if let Some(h) = thicknesses_m.iter().find(|h| !(h.is_finite() && **h > 0.0)) {
            return Err(Error::Domain(format!("thickness must be positive, got {h}")));
        }
        Ok(Self {
            resistivities_ohm_m,
            thicknesses_m,
        })
    }

    pub fn half_space(rho_ohm_m: f64) -> Result<Self> {
        Self::new(vec![rho_ohm_m], vec![])
    }

    pub fn n_layers(&self) -> usize {
        self.resistivities_ohm_m.len()
    }
}

fn check_frequency(frequency_hz: f64) -> Result<f64> {
    if !(frequency_hz.is_finite() && frequency_hz > 0.0) {
        return Err(Error::Domain(format!(
            "frequency must be positive, got {frequency_hz}"
        )));
    }
    Ok(2.0 * PI * frequency_hz)
}

/// Per-layer quantities of the downward solution, raw `e^{-iωt}` convention.
struct Stack {
    k: Vec<Complex64>,
    /// Reflection coefficient at the bottom of each finite layer.
    refl: Vec<Complex64>,
    /// `E_x/H_y` at the top of each layer.
    z_top: Vec<Complex64>,
}

fn stack(model: &LayeredModel, omega: f64) -> Stack {
    let n = model.n_layers();
    let k: Vec<Complex64> = model
        .resistivities_ohm_m
        .iter()
        .map(|&rho| (I * omega * MU0 / rho).sqrt())
        .collect();
    let intrinsic: Vec<Complex64> = k.iter().map(|&kj| omega * MU0 / kj).collect();
    let mut z_top = vec![Complex64::new(0.0, 0.0); n];
    let mut refl = vec![Complex64::new(0.0, 0.0); n];
    z_top[n - 1] = intrinsic[n - 1];
    for j in (0..n - 1).rev() {
        let zj = intrinsic[j];
        let r = (z_top[j + 1] - zj) / (z_top[j + 1] + zj);
        let e = (2.0 * I * k[j] * model.thicknesses_m[j]).exp();
        refl[j] = r;
        z_top[j] = zj * (1.0 + r * e) / (1.0 - r * e);
    }
    Stack { k, refl, z_top }
}

/// Surface impedance `Z = E/H` of a layered earth, positive-phase convention.
pub fn impedance_1d(model: &LayeredModel, frequency_hz: f64) -> Result<Complex64> {
    let omega = check_frequency(frequency_hz)?;
    Ok(stack(model, omega).z_top[0].conj())
}

/// `|Z|²/(ωμ0)`.
pub fn apparent_resistivity(z: Complex64, frequency_hz: f64) -> f64 {
    z.norm_sqr() / (2.0 * PI * frequency_hz * MU0)
}

/// `arctan(Im Z / Re Z)` in degrees.
pub fn phase_deg(z: Complex64) -> f64 {
    (z.im / z.re).atan().to_degrees()
}

/// Complex field amplitudes at `depths_m` below the top of the model,
/// normalised to 1 at depth 0.
///
/// TE returns the strike-parallel electric field, TM the strike-parallel
/// magnetic field. In 1D the TM magnetic field obeys the same equation as
/// the TE horizontal magnetic field, so both come from one downward sweep.
pub fn field_profile_1d(
    model: &LayeredModel,
    frequency_hz: f64,
    depths_m: &[f64],
    mode: Mode,
) -> Result<Vec<Complex64>> {
    let omega = check_frequency(frequency_hz)?;
    if let Some(d) = depths_m.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
        return Err(Error::Domain(format!("depth must be >= 0, got {d}")));
    }
    let st = stack(model, omega);
    let n = model.n_layers();

    // E and dE/dz at the top of each layer, E normalised at the surface.
    let mut tops = Vec::with_capacity(n);
    let mut top_z = Vec::with_capacity(n);
    let mut e_top = Complex64::new(1.0, 0.0);
    let mut depth = 0.0;
    for j in 0..n {
        tops.push(e_top);
        top_z.push(depth);
        if j + 1 < n {
            let h = model.thicknesses_m[j];
            let (e, _) = in_layer(&st, j, e_top, h, h);
            e_top = e;
            depth += h;
        }
    }

    let e_surface = Complex64::new(1.0, 0.0);
    let de_surface = derivative_at_top(&st, 0, e_surface, model);
    depths_m
        .iter()
        .map(|&d| {
            let j = top_z.partition_point(|&t| t <= d).saturating_sub(1);
            let h = if j + 1 < n {
                model.thicknesses_m[j]
            } else {
                f64::INFINITY
            };
            let (e, de) = in_layer(&st, j, tops[j], h, d - top_z[j]);
            Ok(match mode {
                Mode::Te => e,
                Mode::Tm => de / de_surface,
            })
        })
        .collect()
}

fn derivative_at_top(st: &Stack, j: usize, e_top: Complex64, model: &LayeredModel) -> Complex64 {
    let h = model.thicknesses_m.get(j).copied().unwrap_or(f64::INFINITY);
    in_layer(st, j, e_top, h, 0.0).1
}

/// E and dE/dz at local depth `zl` inside layer `j` of thickness `h`, given
/// E at the layer top. Both exponentials decay across the layer, so this
/// stays finite for layers many skin depths thick.
fn in_layer(st: &Stack, j: usize, e_top: Complex64, h: f64, zl: f64) -> (Complex64, Complex64) {
    let k = st.k[j];
    if !h.is_finite() {
        let p = (I * k * zl).exp();
        return (e_top * p, I * k * e_top * p);
    }
    let r = st.refl[j];
    let a = e_top / (1.0 + r * (2.0 * I * k * h).exp());
    let down = (I * k * zl).exp();
    let up = r * (I * k * (2.0 * h - zl)).exp();
    (a * (down + up), I * k * a * (down - up))
}

/// Raw (`e^{-iωt}`) `E/H` ratio at the top of the model. Used by the 2D
/// solver tests to compare against raw field ratios.
pub fn raw_surface_ratio(model: &LayeredModel, frequency_hz: f64) -> Result<Complex64> {
    let omega = check_frequency(frequency_hz)?;
    Ok(stack(model, omega).z_top[0])
}
