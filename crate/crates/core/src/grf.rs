//! Gaussian random field resistivity models from a truncated Karhunen-Loève
//! expansion.
//!
//! Fields are drawn on a coarse lattice laid over the core in index space
//! (both axes scaled by the core cell size), rescaled into the log10 range,
//! then bilinearly upsampled onto the core cells. The Gaussian kernel is
//! separable, so the lattice eigenpairs are Kronecker products of two small
//! one-dimensional decompositions.

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{embed_core, Mesh, ResistivityModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationLengths {
    Isotropic(f64),
    Anisotropic { horizontal_m: f64, vertical_m: f64 },
}

impl CorrelationLengths {
    /// `(horizontal, vertical)` in metres.
    pub fn per_axis(self) -> (f64, f64) {
        match self {
            CorrelationLengths::Isotropic(c) => (c, c),
            CorrelationLengths::Anisotropic {
                horizontal_m,
                vertical_m,
            } => (horizontal_m, vertical_m),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrfSpec {
    pub correlation_lengths: CorrelationLengths,
    pub variance: f64,
    pub truncation_k: usize,
    pub mean_log10_rho: f64,
    pub log10_range: (f64, f64),
    /// Lattice `(rows, cols)`.
    pub grid_shape: (usize, usize),
}

impl Default for GrfSpec {
    fn default() -> Self {
        Self {
            correlation_lengths: CorrelationLengths::Isotropic(30.0),
            variance: 1.0,
            truncation_k: 8,
            mean_log10_rho: 2.5,
            log10_range: (1.0, 4.0),
            grid_shape: (25, 34),
        }
    }
}

impl GrfSpec {
    pub fn validate(&self) -> Result<()> {
        let (ch, cv) = self.correlation_lengths.per_axis();
        for (field, v) in [("correlation_lengths", ch), ("correlation_lengths", cv)] {
            if !(v > 0.0) || v.is_nan() {
                return Err(Error::config(field, format!("must be positive, got {v}")));
            }
        }
        if !(self.variance.is_finite() && self.variance > 0.0) {
            return Err(Error::config("variance", "must be positive"));
        }
        if !self.mean_log10_rho.is_finite() {
            return Err(Error::config("mean_log10_rho", "must be finite"));
        }
        let (lo, hi) = self.log10_range;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::config("log10_range", format!("need lo < hi, got ({lo}, {hi})")));
        }
        let (r, c) = self.grid_shape;
        if r < 2 || c < 2 {
            return Err(Error::config("grid_shape", "need at least 2x2 lattice points"));
        }
        if self.truncation_k == 0 || self.truncation_k > r * c {
            return Err(Error::config(
                "truncation_k",
                format!("must be in 1..={}, got {}", r * c, self.truncation_k),
            ));
        }
        Ok(())
    }
}

/// Bounds for auto-sampled specs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrfBounds {
    pub correlation_range_m: (f64, f64),
    pub truncation_range: (usize, usize),
    pub anisotropic_probability: f64,
    pub variance: f64,
    pub mean_log10_rho: f64,
    pub log10_range: (f64, f64),
    pub grid_shape: (usize, usize),
}

impl Default for GrfBounds {
    fn default() -> Self {
        Self {
            correlation_range_m: (10.0, 80.0),
            truncation_range: (5, 10),
            anisotropic_probability: 0.5,
            variance: 1.0,
            mean_log10_rho: 2.5,
            log10_range: (1.0, 4.0),
            grid_shape: (25, 34),
        }
    }
}

impl GrfBounds {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> GrfSpec {
        let (lo, hi) = self.correlation_range_m;
        let draw = |rng: &mut R| if hi > lo { rng.random_range(lo..=hi) } else { lo };
        let correlation_lengths = if rng.random_bool(self.anisotropic_probability) {
            let horizontal_m = draw(rng);
            let vertical_m = draw(rng);
            CorrelationLengths::Anisotropic {
                horizontal_m,
                vertical_m,
            }
        } else {
            CorrelationLengths::Isotropic(draw(rng))
        };
        let (klo, khi) = self.truncation_range;
        GrfSpec {
            correlation_lengths,
            variance: self.variance,
            truncation_k: rng.random_range(klo..=khi),
            mean_log10_rho: self.mean_log10_rho,
            log10_range: self.log10_range,
            grid_shape: self.grid_shape,
        }
    }
}

/// `C[i][j] = variance · exp(-½ Σ_axis d²/c²)` over `(x, z)` points.
pub fn covariance_matrix(points: &[[f64; 2]], spec: &GrfSpec) -> Result<Array2<f64>> {
    let (ch, cv) = spec.correlation_lengths.per_axis();
    if !(ch > 0.0 && cv > 0.0) {
        return Err(Error::Domain(format!(
            "correlation lengths must be positive, got ({ch}, {cv})"
        )));
    }
    if points.is_empty() {
        return Err(Error::Domain("covariance needs at least one point".into()));
    }
    let n = points.len();
    let mut c = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let dx = (points[i][0] - points[j][0]) / ch;
            let dz = (points[i][1] - points[j][1]) / cv;
            let v = spec.variance * (-0.5 * (dx * dx + dz * dz)).exp();
            c[[i, j]] = v;
            c[[j, i]] = v;
        }
    }
    Ok(c)
}

/// Top eigenpairs of a covariance, sorted descending.
#[derive(Debug, Clone, PartialEq)]
pub struct KlDecomposition {
    pub eigenvalues: Vec<f64>,
    /// One orthonormal eigenvector per column, `(n_points, k)`.
    pub eigenvectors: Array2<f64>,
}

impl KlDecomposition {
    pub fn k(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn n_points(&self) -> usize {
        self.eigenvectors.nrows()
    }

    /// `Σ λᵢ φᵢ φᵢᵀ`.
    pub fn covariance(&self) -> Array2<f64> {
        let mut scaled = self.eigenvectors.clone();
        for (mut col, &l) in scaled.columns_mut().into_iter().zip(&self.eigenvalues) {
            col *= l;
        }
        scaled.dot(&self.eigenvectors.t())
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns the
/// eigenvalues in descending order with matching eigenvector columns.
pub fn symmetric_eigen(a: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = a.nrows();
    let mut a = a.clone();
    let mut v = Array2::<f64>::eye(n);
    let scale: f64 = a.iter().map(|x| x * x).sum();
    for _ in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[[p, q]] * a[[p, q]];
            }
        }
        if off <= 1e-32 * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[[k, p]], a[[k, q]]);
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[[p, k]], a[[q, k]]);
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[[k, p]], v[[k, q]]);
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[[j, j]].total_cmp(&a[[i, i]]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[[i, i]]).collect();
    let mut vectors = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        vectors.column_mut(dst).assign(&v.column(src));
    }
    (values, vectors)
}

fn check_symmetric(c: &Array2<f64>) -> Result<()> {
    if c.nrows() != c.ncols() {
        return Err(Error::Dimension(format!(
            "covariance must be square, got {:?}",
            c.dim()
        )));
    }
    let scale = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let n = c.nrows();
    for i in 0..n {
        for j in 0..i {
            if (c[[i, j]] - c[[j, i]]).abs() > 1e-12 * scale {
                return Err(Error::Domain(format!("matrix not symmetric at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

/// Top-`k` eigenpairs of a symmetric matrix; small negative eigenvalues from
/// round-off are clamped to zero.
pub fn kl_decompose(c: &Array2<f64>, k: usize) -> Result<KlDecomposition> {
    check_symmetric(c)?;
    if k == 0 || k > c.nrows() {
        return Err(Error::Domain(format!(
            "truncation {k} outside 1..={}",
            c.nrows()
        )));
    }
    let (values, vectors) = symmetric_eigen(c);
    Ok(KlDecomposition {
        eigenvalues: values[..k].iter().map(|v| v.max(0.0)).collect(),
        eigenvectors: vectors.slice(ndarray::s![.., ..k]).to_owned(),
    })
}

/// Lattice point coordinates `(x, z)`, row-major, in index space scaled by
/// the core cell size.
pub fn lattice_points(spec: &GrfSpec, mesh: &Mesh) -> Vec<[f64; 2]> {
    let (xs, zs) = lattice_axes(spec, mesh);
    zs.iter()
        .flat_map(|&z| xs.iter().map(move |&x| [x, z]))
        .collect()
}

fn lattice_axes(spec: &GrfSpec, mesh: &Mesh) -> (Vec<f64>, Vec<f64>) {
    let (nl, nc) = mesh.core_shape();
    let (r, c) = spec.grid_shape;
    let h = mesh.config.core_cell_size_m;
    let axis = |n_lat: usize, n_cells: usize| -> Vec<f64> {
        (0..n_lat)
            .map(|i| i as f64 * (n_cells - 1) as f64 / (n_lat - 1) as f64 * h)
            .collect()
    };
    (axis(c, nc), axis(r, nl))
}

/// KL decomposition of the lattice covariance via the separable kernel:
/// eigenpairs of the full lattice are products of the per-axis ones.
pub fn lattice_kl(spec: &GrfSpec, mesh: &Mesh) -> Result<KlDecomposition> {
    spec.validate()?;
    let (xs, zs) = lattice_axes(spec, mesh);
    let (ch, cv) = spec.correlation_lengths.per_axis();
    let axis_eigen = |coords: &[f64], c0: f64| -> Result<(Vec<f64>, Array2<f64>)> {
        let pts: Vec<[f64; 2]> = coords.iter().map(|&x| [x, 0.0]).collect();
        let one = GrfSpec {
            correlation_lengths: CorrelationLengths::Isotropic(c0),
            variance: 1.0,
            ..spec.clone()
        };
        Ok(symmetric_eigen(&covariance_matrix(&pts, &one)?))
    };
    let (lx, vx) = axis_eigen(&xs, ch)?;
    let (lz, vz) = axis_eigen(&zs, cv)?;
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(lx.len() * lz.len());
    for (a, &la) in lz.iter().enumerate() {
        for (b, &lb) in lx.iter().enumerate() {
            pairs.push((spec.variance * la.max(0.0) * lb.max(0.0), a, b));
        }
    }
    pairs.sort_by(|p, q| q.0.total_cmp(&p.0).then((p.1, p.2).cmp(&(q.1, q.2))));
    let k = spec.truncation_k;
    let (nr, nc) = (zs.len(), xs.len());
    let mut vectors = Array2::zeros((nr * nc, k));
    for (col, &(_, a, b)) in pairs[..k].iter().enumerate() {
        for i in 0..nr {
            for j in 0..nc {
                vectors[[i * nc + j, col]] = vz[[i, a]] * vx[[j, b]];
            }
        }
    }
    Ok(KlDecomposition {
        eigenvalues: pairs[..k].iter().map(|p| p.0).collect(),
        eigenvectors: vectors,
    })
}

/// `F = Σ √λᵢ φᵢ ξᵢ + μ` with standard normal `ξᵢ`.
pub fn sample_grf<R: Rng + ?Sized>(decomp: &KlDecomposition, mean: f64, rng: &mut R) -> Array1<f64> {
    let mut f = Array1::from_elem(decomp.n_points(), mean);
    for (i, &l) in decomp.eigenvalues.iter().enumerate() {
        let xi: f64 = rng.sample(StandardNormal);
        f.scaled_add(l.sqrt() * xi, &decomp.eigenvectors.column(i));
    }
    f
}

/// Min-max affine map into `range`. A field whose spread is negligible
/// against `scale` becomes its mean, clamped into the range.
pub fn rescale_to_range(field: ArrayView1<f64>, range: (f64, f64), scale: f64) -> Array1<f64> {
    let lo = field.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = field.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 1e-6 * scale.abs().max(f64::MIN_POSITIVE) {
        let m = field.mean().unwrap_or(range.0).clamp(range.0, range.1);
        return Array1::from_elem(field.len(), m);
    }
    field.mapv(|v| {
        if v == lo {
            range.0
        } else if v == hi {
            range.1
        } else {
            range.0 + (v - lo) / (hi - lo) * (range.1 - range.0)
        }
    })
}

/// Bilinear resampling with corner-aligned grids.
pub fn resample_bilinear(src: &Array2<f64>, shape: (usize, usize)) -> Array2<f64> {
    let (sr, sc) = src.dim();
    let (dr, dc) = shape;
    let pos = |i: usize, n_src: usize, n_dst: usize| -> (usize, usize, f64) {
        if n_src == 1 || n_dst == 1 {
            return (0, 0, 0.0);
        }
        let t = i as f64 * (n_src - 1) as f64 / (n_dst - 1) as f64;
        let i0 = (t.floor() as usize).min(n_src - 2);
        (i0, i0 + 1, t - i0 as f64)
    };
    let cols: Vec<_> = (0..dc).map(|j| pos(j, sc, dc)).collect();
    Array2::from_shape_fn((dr, dc), |(i, j)| {
        let (r0, r1, fr) = pos(i, sr, dr);
        let (c0, c1, fc) = cols[j];
        let top = src[[r0, c0]] * (1.0 - fc) + src[[r0, c1]] * fc;
        let bot = src[[r1, c0]] * (1.0 - fc) + src[[r1, c1]] * fc;
        top * (1.0 - fr) + bot * fr
    })
}

/// A generated model together with its padding background.
#[derive(Debug, Clone, PartialEq)]
pub struct GrfRealization {
    pub spec: GrfSpec,
    pub model: ResistivityModel,
    pub background_log10: f64,
}

pub fn grf_resistivity_model<R: Rng + ?Sized>(
    spec: &GrfSpec,
    mesh: &Mesh,
    rng: &mut R,
) -> Result<GrfRealization> {
    let decomp = lattice_kl(spec, mesh)?;
    let raw = sample_grf(&decomp, spec.mean_log10_rho, rng);
    let scaled = rescale_to_range(raw.view(), spec.log10_range, spec.variance.sqrt());
    let lattice = scaled
        .into_shape_with_order(spec.grid_shape)
        .map_err(|e| Error::Dimension(e.to_string()))?;
    let core = resample_bilinear(&lattice, mesh.core_shape());
    let background_log10 = core.mean().unwrap_or(spec.mean_log10_rho);
    let model = embed_core(core.view(), mesh, background_log10)?;
    Ok(GrfRealization {
        spec: spec.clone(),
        model,
        background_log10,
    })
}

/// Draws a spec within `bounds`, then a model from it.
pub fn sample_grf_model<R: Rng + ?Sized>(
    bounds: &GrfBounds,
    mesh: &Mesh,
    rng: &mut R,
) -> Result<GrfRealization> {
    let spec = bounds.sample(rng);
    grf_resistivity_model(&spec, mesh, rng)
}
