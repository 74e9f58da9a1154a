//! Random masking of response channels and L1 recovery of the missing
//! entries in an orthonormal 2D DCT-II basis, solved with monotone FISTA.

use ndarray::{Array2, Array3, ArrayView2, Axis, Zip};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::{Channel, RmtResponse};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskSpec {
    pub fraction_masked: f64,
    pub seed: u64,
    pub independent_per_channel: bool,
}

impl Default for MaskSpec {
    fn default() -> Self {
        Self {
            fraction_masked: 0.3125,
            seed: 0,
            independent_per_channel: true,
        }
    }
}

impl MaskSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.fraction_masked) {
            return Err(Error::config(
                "fraction_masked",
                format!("must be in [0, 1), got {}", self.fraction_masked),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsConfig {
    pub lambda_rel: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for CsConfig {
    fn default() -> Self {
        Self {
            lambda_rel: 1e-3,
            max_iters: 500,
            tol: 1e-6,
        }
    }
}

impl CsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_rel > 0.0) {
            return Err(Error::config("lambda_rel", "must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::config("max_iters", "must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::config("tol", "must be positive"));
        }
        Ok(())
    }
}

/// Exactly `⌊fraction · N⌋` entries set, chosen without replacement.
pub fn random_mask<R: Rng + ?Sized>(
    shape: (usize, usize),
    fraction: f64,
    rng: &mut R,
) -> Result<Array2<bool>> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::Domain(format!("mask fraction {fraction} outside [0, 1)")));
    }
    let n = shape.0 * shape.1;
    let count = (fraction * n as f64).floor() as usize;
    let mut m = Array2::from_elem(shape, false);
    let flat = m.as_slice_mut().expect("standard layout");
    for i in sample(rng, n, count) {
        flat[i] = true;
    }
    Ok(m)
}

/// Copy of `data` with a mask drawn for every channel from `spec.seed`.
pub fn mask_response(data: &RmtResponse, spec: &MaskSpec) -> Result<RmtResponse> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let shape = (data.n_freq(), data.n_station());
    let mut mask = Array3::from_elem((4, shape.0, shape.1), false);
    let shared = random_mask(shape, spec.fraction_masked, &mut rng)?;
    for (i, mut ch) in mask.axis_iter_mut(Axis(0)).enumerate() {
        if spec.independent_per_channel && i > 0 {
            ch.assign(&random_mask(shape, spec.fraction_masked, &mut rng)?);
        } else {
            ch.assign(&shared);
        }
    }
    let mut out = data.clone();
    out.mask = Some(mask);
    Ok(out)
}

/// Orthonormal DCT-II matrix, `D[k][i] = s_k cos(π(2i+1)k / 2n)`.
pub fn dct_matrix(n: usize) -> Array2<f64> {
    let nf = n as f64;
    Array2::from_shape_fn((n, n), |(k, i)| {
        let s = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
        s * (std::f64::consts::PI * (2 * i + 1) as f64 * k as f64 / (2.0 * nf)).cos()
    })
}

/// Separable 2D DCT-II pair for one image shape.
#[derive(Debug, Clone)]
pub struct Dct2 {
    rows: Array2<f64>,
    cols: Array2<f64>,
}

impl Dct2 {
    pub fn new(shape: (usize, usize)) -> Self {
        Self {
            rows: dct_matrix(shape.0),
            cols: dct_matrix(shape.1),
        }
    }

    pub fn forward(&self, a: ArrayView2<f64>) -> Array2<f64> {
        self.rows.dot(&a).dot(&self.cols.t())
    }

    pub fn inverse(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.rows.t().dot(&x).dot(&self.cols)
    }
}

fn soft_threshold(x: &Array2<f64>, t: f64) -> Array2<f64> {
    x.mapv(|v| v.signum() * (v.abs() - t).max(0.0))
}

#[derive(Debug, Clone)]
pub struct FistaResult {
    pub coefficients: Array2<f64>,
    /// Inverse transform of the coefficients, before observed entries are
    /// written back.
    pub signal: Array2<f64>,
    /// Objective after every iteration.
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub lambda: f64,
}

/// `min_x ½‖M Ψ⁻¹ x − y‖² + λ‖x‖₁` by monotone FISTA with unit step.
/// `observed[i]` is true where `values[i]` is a measurement.
pub fn l1_recover(
    values: ArrayView2<f64>,
    observed: ArrayView2<bool>,
    config: &CsConfig,
) -> Result<FistaResult> {
    config.validate()?;
    if values.dim() != observed.dim() {
        return Err(Error::Dimension(format!(
            "values {:?} vs mask {:?}",
            values.dim(),
            observed.dim()
        )));
    }
    let dct = Dct2::new(values.dim());
    let y = Zip::from(&values)
        .and(&observed)
        .map_collect(|&v, &o| if o { v } else { 0.0 });
    let back = dct.forward(y.view());
    let lambda = config.lambda_rel * back.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let residual = |x: &Array2<f64>| -> Array2<f64> {
        let a = dct.inverse(x.view());
        Zip::from(&a)
            .and(&y)
            .and(&observed)
            .map_collect(|&a, &y, &o| if o { a - y } else { 0.0 })
    };
    let objective = |x: &Array2<f64>| -> f64 {
        let r = residual(x);
        0.5 * r.iter().map(|v| v * v).sum::<f64>() + lambda * x.iter().map(|v| v.abs()).sum::<f64>()
    };

    let mut x = Array2::<f64>::zeros(values.dim());
    let mut fx = objective(&x);
    let mut yk = x.clone();
    let mut t = 1.0f64;
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..config.max_iters {
        iterations += 1;
        let g = dct.forward(residual(&yk).view());
        let z = soft_threshold(&(&yk - &g), lambda);
        // size of the proximal gradient step; zero exactly at a minimiser
        let step = (&z - &yk).iter().map(|v| v * v).sum::<f64>().sqrt();
        let nz = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        let fz = objective(&z);
        let x_prev = x.clone();
        if fz <= fx {
            x = z.clone();
            fx = fz;
        }
        history.push(fx);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        yk = &x + &((&z - &x) * (t / t_next)) + &((&x - &x_prev) * ((t - 1.0) / t_next));
        t = t_next;
        if step <= config.tol * nz.max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }
    let signal = dct.inverse(x.view());
    Ok(FistaResult {
        coefficients: x,
        signal,
        objective: history,
        iterations,
        converged,
        lambda,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStatus {
    pub channel: Channel,
    pub n_masked: usize,
    pub iterations: usize,
    pub converged: bool,
    pub lambda: f64,
}

/// Recovers every masked channel: apparent resistivities in log10, phases
/// in degrees. Observed entries are copied through unchanged and the
/// output carries no mask.
pub fn reconstruct(data: &RmtResponse, config: &CsConfig) -> Result<(RmtResponse, Vec<ChannelStatus>)> {
    config.validate()?;
    let mut out = data.clone();
    out.mask = None;
    let mut status = Vec::with_capacity(4);
    let Some(mask) = &data.mask else {
        return Ok((out, status));
    };
    for ch in Channel::ALL {
        let m = mask.index_axis(Axis(0), ch.index());
        let n_masked = m.iter().filter(|&&b| b).count();
        if n_masked == 0 {
            continue;
        }
        let raw = data.channel(ch);
        let vals = if ch.is_resistivity() {
            raw.mapv(f64::log10)
        } else {
            raw.to_owned()
        };
        let observed = m.mapv(|b| !b);
        let r = l1_recover(vals.view(), observed.view(), config)?;
        if !r.converged {
            log::warn!(
                "{}: no convergence after {} iterations",
                ch.name(),
                r.iterations
            );
        }
        let mut filled = Zip::from(&r.signal)
            .and(&vals)
            .and(&observed)
            .map_collect(|&s, &v, &o| if o { v } else { s });
        if ch.is_resistivity() {
            filled.mapv_inplace(|v| 10f64.powf(v));
            Zip::from(&mut filled)
                .and(&raw)
                .and(&observed)
                .for_each(|f, &v, &o| {
                    if o {
                        *f = v;
                    }
                });
        }
        out.set_channel(ch, &filled);
        status.push(ChannelStatus {
            channel: ch,
            n_masked,
            iterations: r.iterations,
            converged: r.converged,
            lambda: r.lambda,
        });
    }
    Ok((out, status))
}

/// `(reconstructed − original) / original` per entry.
pub fn relative_error(reconstructed: ArrayView2<f64>, original: ArrayView2<f64>) -> Result<Array2<f64>> {
    if reconstructed.dim() != original.dim() {
        return Err(Error::Dimension(format!(
            "{:?} vs {:?}",
            reconstructed.dim(),
            original.dim()
        )));
    }
    if original.iter().any(|&v| v == 0.0) {
        return Err(Error::Domain("relative error needs nonzero originals".into()));
    }
    Ok(Zip::from(&reconstructed)
        .and(&original)
        .map_collect(|&r, &o| (r - o) / o))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub median: f64,
}

/// Equal-width histogram over the data range; the top edge is inclusive.
pub fn histogram(values: &[f64], bins: usize) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::Domain("histogram needs at least one bin".into()));
    }
    if values.is_empty() {
        return Err(Error::Domain("histogram of no values".into()));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        hi = lo + 1e-12_f64.max(lo.abs() * 1e-12);
    }
    let w = (hi - lo) / bins as f64;
    let edges = (0..=bins).map(|i| lo + w * i as f64).collect();
    let mut counts = vec![0; bins];
    for &v in values {
        let i = (((v - lo) / w).floor() as usize).min(bins - 1);
        counts[i] += 1;
    }
    Ok(Histogram {
        edges,
        counts,
        median: median(values),
    })
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
