//! Image-space scores between predicted and true models.

use ndarray::{Array1, Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;

fn same_shape(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension(format!("{:?} vs {:?}", a.dim(), b.dim())));
    }
    if a.is_empty() {
        return Err(Error::Dimension("empty image".into()));
    }
    Ok(())
}

pub fn mse(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<f64> {
    same_shape(&a, &b)?;
    let s = Zip::from(&a).and(&b).fold(0.0, |acc, x, y| acc + (x - y) * (x - y));
    Ok(s / a.len() as f64)
}

pub fn mae(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<f64> {
    same_shape(&a, &b)?;
    let s = Zip::from(&a).and(&b).fold(0.0, |acc, x, y| acc + (x - y).abs());
    Ok(s / a.len() as f64)
}

/// Normalised 1D Gaussian taps.
pub fn gaussian_window(size: usize, sigma: f64) -> Array1<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let g = Array1::from_shape_fn(size, |i| {
        let d = i as f64 - c;
        (-d * d / (2.0 * sigma * sigma)).exp()
    });
    let s = g.sum();
    g / s
}

// separable valid-mode filtering
fn filter_valid(img: &Array2<f64>, w: &Array1<f64>) -> Array2<f64> {
    let k = w.len();
    let (h, wd) = img.dim();
    let rows = Array2::from_shape_fn((h, wd - k + 1), |(i, j)| {
        (0..k).map(|t| w[t] * img[[i, j + t]]).sum::<f64>()
    });
    Array2::from_shape_fn((h - k + 1, wd - k + 1), |(i, j)| {
        (0..k).map(|t| w[t] * rows[[i + t, j]]).sum::<f64>()
    })
}

/// Local SSIM map over every fully contained 11×11 Gaussian window.
pub fn ssim_map(a: ArrayView2<f64>, b: ArrayView2<f64>, data_range: f64) -> Result<Array2<f64>> {
    same_shape(&a, &b)?;
    if !(data_range > 0.0) {
        return Err(Error::config("data_range", "must be positive"));
    }
    let (h, w) = a.dim();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::config(
            "ssim window",
            format!("{SSIM_WINDOW}x{SSIM_WINDOW} window larger than {h}x{w} image"),
        ));
    }
    let g = gaussian_window(SSIM_WINDOW, SSIM_SIGMA);
    let c1 = (0.01 * data_range).powi(2);
    let c2 = (0.03 * data_range).powi(2);
    let a = a.to_owned();
    let b = b.to_owned();
    let mu_a = filter_valid(&a, &g);
    let mu_b = filter_valid(&b, &g);
    let aa = filter_valid(&(&a * &a), &g);
    let bb = filter_valid(&(&b * &b), &g);
    let ab = filter_valid(&(&a * &b), &g);
    let mut out = Array2::zeros(mu_a.dim());
    Zip::from(&mut out)
        .and(&mu_a)
        .and(&mu_b)
        .and(&aa)
        .and(&bb)
        .and(&ab)
        .for_each(|o, &ma, &mb, &saa, &sbb, &sab| {
            let va = saa - ma * ma;
            let vb = sbb - mb * mb;
            let cov = sab - ma * mb;
            *o = ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        });
    Ok(out)
}

pub fn ssim(a: ArrayView2<f64>, b: ArrayView2<f64>, data_range: f64) -> Result<f64> {
    Ok(ssim_map(a, b, data_range)?.mean().expect("nonempty"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub dataset: String,
    pub mse: f64,
    pub mae: f64,
    pub ssim: f64,
    pub per_sample_mse: Vec<f64>,
    pub per_sample_mae: Vec<f64>,
    pub per_sample_ssim: Vec<f64>,
}

impl MetricReport {
    /// Scores prediction/truth pairs and averages them.
    pub fn from_pairs<'a, I>(dataset: impl Into<String>, pairs: I, data_range: f64) -> Result<Self>
    where
        I: IntoIterator<Item = (ArrayView2<'a, f64>, ArrayView2<'a, f64>)>,
    {
        let mut r = MetricReport {
            dataset: dataset.into(),
            mse: 0.0,
            mae: 0.0,
            ssim: 0.0,
            per_sample_mse: Vec::new(),
            per_sample_mae: Vec::new(),
            per_sample_ssim: Vec::new(),
        };
        for (p, t) in pairs {
            r.per_sample_mse.push(mse(p, t)?);
            r.per_sample_mae.push(mae(p, t)?);
            r.per_sample_ssim.push(ssim(p, t, data_range)?);
        }
        let n = r.per_sample_mse.len();
        if n == 0 {
            return Err(Error::Domain("no samples to score".into()));
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / n as f64;
        r.mse = mean(&r.per_sample_mse);
        r.mae = mean(&r.per_sample_mae);
        r.ssim = mean(&r.per_sample_ssim);
        Ok(r)
    }

    pub fn len(&self) -> usize {
        self.per_sample_mse.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_sample_mse.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_values() {
        let a = Array2::from_shape_fn((12, 14), |(i, j)| ((i * 3 + j) % 7) as f64 / 7.0);
        assert_eq!(mse(a.view(), a.view()).unwrap(), 0.0);
        assert_eq!(mae(a.view(), a.view()).unwrap(), 0.0);
        let b = &a + 2.0;
        assert!((mse(a.view(), b.view()).unwrap() - 4.0).abs() < 1e-12);
        assert!((mae(a.view(), b.view()).unwrap() - 2.0).abs() < 1e-12);
        assert!((ssim(a.view(), a.view(), 1.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn window_too_large() {
        let a = Array2::<f64>::zeros((10, 30));
        assert!(matches!(ssim(a.view(), a.view(), 1.0), Err(Error::Config { .. })));
        assert!(mse(a.view(), Array2::zeros((3, 3)).view()).is_err());
    }

    #[test]
    fn window_sums_to_one() {
        let g = gaussian_window(11, 1.5);
        assert!((g.sum() - 1.0).abs() < 1e-15);
        assert!((g[0] - g[10]).abs() < 1e-18);
    }
}
