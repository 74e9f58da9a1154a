//! Layers with explicit forward and backward passes. `forward` runs in
//! training mode and caches what `backward` needs; `infer` is side-effect free.

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor4;
use crate::error::{Error, Result};

/// A learnable array with its accumulated gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    #[serde(skip)]
    pub grad: Vec<f64>,
}

impl Param {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, value: Vec<f64>) -> Self {
        let n = value.len();
        debug_assert_eq!(n, shape.iter().product::<usize>());
        Self {
            name: name.into(),
            shape,
            value,
            grad: vec![0.0; n],
        }
    }

    pub fn filled(name: impl Into<String>, shape: Vec<usize>, v: f64) -> Self {
        let n = shape.iter().product();
        Self::new(name, shape, vec![v; n])
    }

    /// Zero-mean normal entries with standard deviation `sqrt(2 / fan_in)`.
    pub fn kaiming<R: Rng + ?Sized>(
        name: impl Into<String>,
        shape: Vec<usize>,
        fan_in: usize,
        rng: &mut R,
    ) -> Self {
        let std = (2.0 / fan_in as f64).sqrt();
        let n = shape.iter().product();
        let v = (0..n).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect();
        Self::new(name, shape, v)
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.clear();
        self.grad.resize(self.value.len(), 0.0);
    }
}

fn no_cache(layer: &str) -> Error {
    Error::Training(format!("{layer}: backward called without a training forward pass"))
}

fn mat<'a>(rows: usize, cols: usize, s: &'a [f64]) -> ArrayView2<'a, f64> {
    ArrayView2::from_shape((rows, cols), s).expect("buffer size")
}

fn mat_mut<'a>(rows: usize, cols: usize, s: &'a mut [f64]) -> ArrayViewMut2<'a, f64> {
    ArrayViewMut2::from_shape((rows, cols), s).expect("buffer size")
}

/// Patch matrix `(c·k·k, h·w)` for a stride-1 convolution with `pad` zeros.
fn im2col(x: &[f64], c: usize, h: usize, w: usize, k: usize, pad: usize, out: &mut Vec<f64>) {
    out.clear();
    out.resize(c * k * k * h * w, 0.0);
    let hw = h * w;
    for ci in 0..c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = ((ci * k + ky) * k + kx) * hw;
                for y in 0..h {
                    let sy = y as isize + ky as isize - pad as isize;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    let dst = &mut out[row + y * w..row + (y + 1) * w];
                    for (xo, d) in dst.iter_mut().enumerate() {
                        let sx = xo as isize + kx as isize - pad as isize;
                        if sx >= 0 && sx < w as isize {
                            *d = src[sx as usize];
                        }
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f64], c: usize, h: usize, w: usize, k: usize, pad: usize, dx: &mut [f64]) {
    let hw = h * w;
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = ((ci * k + ky) * k + kx) * hw;
                for y in 0..h {
                    let sy = y as isize + ky as isize - pad as isize;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let base = ci * hw + sy as usize * w;
                    for xo in 0..w {
                        let sx = xo as isize + kx as isize - pad as isize;
                        if sx >= 0 && sx < w as isize {
                            dx[base + sx as usize] += cols[row + y * w + xo];
                        }
                    }
                }
            }
        }
    }
}

/// Square-kernel convolution, stride 1, shape preserving (`pad = k / 2`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv2d {
    pub weight: Param,
    pub bias: Param,
    pub kernel: usize,
    #[serde(skip)]
    cache: Option<Tensor4>,
}

impl Conv2d {
    pub fn new<R: Rng + ?Sized>(name: &str, c_in: usize, c_out: usize, kernel: usize, rng: &mut R) -> Self {
        Self {
            weight: Param::kaiming(
                format!("{name}.weight"),
                vec![c_out, c_in, kernel, kernel],
                c_in * kernel * kernel,
                rng,
            ),
            bias: Param::filled(format!("{name}.bias"), vec![c_out], 0.0),
            kernel,
            cache: None,
        }
    }

    pub fn c_in(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn c_out(&self) -> usize {
        self.weight.shape[0]
    }

    fn check(&self, x: &Tensor4) -> Result<()> {
        if x.c() != self.c_in() {
            return Err(Error::Dimension(format!(
                "{}: expected {} input channels, got {}",
                self.weight.name,
                self.c_in(),
                x.c()
            )));
        }
        Ok(())
    }

    pub fn infer(&self, x: &Tensor4) -> Result<Tensor4> {
        self.check(x)?;
        let (c, h, w, k) = (x.c(), x.h(), x.w(), self.kernel);
        let (co, hw, ckk) = (self.c_out(), h * w, c * k * k);
        let wm = mat(co, ckk, &self.weight.value);
        let mut y = Tensor4::zeros([x.n(), co, h, w]);
        let mut cols = Vec::new();
        for n in 0..x.n() {
            let ys = y.sample_mut(n);
            for (o, b) in self.bias.value.iter().enumerate() {
                ys[o * hw..(o + 1) * hw].fill(*b);
            }
            let xin = if k == 1 {
                x.sample(n)
            } else {
                im2col(x.sample(n), c, h, w, k, k / 2, &mut cols);
                &cols
            };
            general_mat_mul(1.0, &wm, &mat(ckk, hw, xin), 1.0, &mut mat_mut(co, hw, ys));
        }
        Ok(y)
    }

    pub fn forward(&mut self, x: &Tensor4) -> Result<Tensor4> {
        let y = self.infer(x)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor4) -> Result<Tensor4> {
        let x = self.cache.as_ref().ok_or_else(|| no_cache(&self.weight.name))?;
        let (c, h, w, k) = (x.c(), x.h(), x.w(), self.kernel);
        let (co, hw, ckk) = (self.c_out(), h * w, c * k * k);
        dy.check_shape([x.n(), co, h, w], &self.weight.name)?;
        let wm = mat(co, ckk, &self.weight.value);
        let mut dx = Tensor4::zeros(x.shape);
        let mut cols = Vec::new();
        let mut dcols = vec![0.0; ckk * hw];
        for n in 0..x.n() {
            let dys = mat(co, hw, dy.sample(n));
            for (o, g) in self.bias.grad.iter_mut().enumerate() {
                *g += dy.sample(n)[o * hw..(o + 1) * hw].iter().sum::<f64>();
            }
            let xin: &[f64] = if k == 1 {
                x.sample(n)
            } else {
                im2col(x.sample(n), c, h, w, k, k / 2, &mut cols);
                &cols
            };
            general_mat_mul(
                1.0,
                &dys,
                &mat(ckk, hw, xin).t(),
                1.0,
                &mut mat_mut(co, ckk, &mut self.weight.grad),
            );
            if k == 1 {
                general_mat_mul(1.0, &wm.t(), &dys, 0.0, &mut mat_mut(ckk, hw, dx.sample_mut(n)));
            } else {
                general_mat_mul(1.0, &wm.t(), &dys, 0.0, &mut mat_mut(ckk, hw, &mut dcols));
                col2im(&dcols, c, h, w, k, k / 2, dx.sample_mut(n));
            }
        }
        Ok(dx)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }
}

#[derive(Debug, Clone, PartialEq)]
struct BnCache {
    xhat: Tensor4,
    inv_std: Vec<f64>,
}

/// Per-channel batch normalisation with running statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm2d {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
    #[serde(skip)]
    cache: Option<BnCache>,
}

impl BatchNorm2d {
    pub fn new(name: &str, channels: usize) -> Self {
        Self {
            gamma: Param::filled(format!("{name}.gamma"), vec![channels], 1.0),
            beta: Param::filled(format!("{name}.beta"), vec![channels], 0.0),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum: 0.1,
            eps: 1e-5,
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn check(&self, x: &Tensor4) -> Result<()> {
        if x.c() != self.channels() {
            return Err(Error::Dimension(format!(
                "{}: expected {} channels, got {}",
                self.gamma.name,
                self.channels(),
                x.c()
            )));
        }
        Ok(())
    }

    pub fn infer(&self, x: &Tensor4) -> Result<Tensor4> {
        self.check(x)?;
        let mut y = x.clone();
        for c in 0..x.c() {
            let s = self.gamma.value[c] / (self.running_var[c] + self.eps).sqrt();
            let t = self.beta.value[c] - s * self.running_mean[c];
            for n in 0..x.n() {
                y.channel_mut(n, c).iter_mut().for_each(|v| *v = s * *v + t);
            }
        }
        Ok(y)
    }

    /// Training mode: normalises with batch statistics and updates the
    /// running averages.
    pub fn forward(&mut self, x: &Tensor4) -> Result<Tensor4> {
        self.check(x)?;
        let m = (x.n() * x.plane()) as f64;
        let mut xhat = x.clone();
        let mut y = x.clone();
        let mut inv_std = vec![0.0; x.c()];
        for c in 0..x.c() {
            let mut mean = 0.0;
            for n in 0..x.n() {
                mean += x.channel(n, c).iter().sum::<f64>();
            }
            mean /= m;
            let mut var = 0.0;
            for n in 0..x.n() {
                var += x.channel(n, c).iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
            }
            var /= m;
            let is = 1.0 / (var + self.eps).sqrt();
            inv_std[c] = is;
            let (g, b) = (self.gamma.value[c], self.beta.value[c]);
            for n in 0..x.n() {
                let xh = xhat.channel_mut(n, c);
                xh.iter_mut().for_each(|v| *v = (*v - mean) * is);
                let yc = y.channel_mut(n, c);
                for (o, h) in yc.iter_mut().zip(xhat.channel(n, c)) {
                    *o = g * h + b;
                }
            }
            let unbiased = if m > 1.0 { var * m / (m - 1.0) } else { var };
            self.running_mean[c] = (1.0 - self.momentum) * self.running_mean[c] + self.momentum * mean;
            self.running_var[c] = (1.0 - self.momentum) * self.running_var[c] + self.momentum * unbiased;
        }
        self.cache = Some(BnCache { xhat, inv_std });
        Ok(y)
    }

    /// Normalised pre-scale activations from the last training pass.
    pub fn last_normalized(&self) -> Option<&Tensor4> {
        self.cache.as_ref().map(|c| &c.xhat)
    }

    pub fn backward(&mut self, dy: &Tensor4) -> Result<Tensor4> {
        let cache = self.cache.as_ref().ok_or_else(|| no_cache(&self.gamma.name))?;
        dy.check_shape(cache.xhat.shape, &self.gamma.name)?;
        let m = (dy.n() * dy.plane()) as f64;
        let mut dx = Tensor4::zeros(dy.shape);
        for c in 0..dy.c() {
            let (mut dg, mut db) = (0.0, 0.0);
            for n in 0..dy.n() {
                for (d, h) in dy.channel(n, c).iter().zip(cache.xhat.channel(n, c)) {
                    dg += d * h;
                    db += d;
                }
            }
            self.gamma.grad[c] += dg;
            self.beta.grad[c] += db;
            let k = self.gamma.value[c] * cache.inv_std[c] / m;
            for n in 0..dy.n() {
                let out = dx.channel_mut(n, c);
                for ((o, d), h) in out.iter_mut().zip(dy.channel(n, c)).zip(cache.xhat.channel(n, c)) {
                    *o = k * (m * d - db - h * dg);
                }
            }
        }
        Ok(dx)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gamma, &mut self.beta]
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.gamma, &self.beta]
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Relu {
    mask: Option<Vec<bool>>,
}

impl Relu {
    pub fn infer(&self, x: &Tensor4) -> Tensor4 {
        let mut y = x.clone();
        y.data.iter_mut().for_each(|v| *v = v.max(0.0));
        y
    }

    pub fn forward(&mut self, x: &Tensor4) -> Tensor4 {
        self.mask = Some(x.data.iter().map(|&v| v > 0.0).collect());
        self.infer(x)
    }

    pub fn backward(&mut self, dy: &Tensor4) -> Result<Tensor4> {
        let mask = self.mask.as_ref().ok_or_else(|| no_cache("relu"))?;
        let mut dx = dy.clone();
        for (d, &m) in dx.data.iter_mut().zip(mask) {
            if !m {
                *d = 0.0;
            }
        }
        Ok(dx)
    }
}

/// 2×2 mean, stride 2.
pub fn avg_pool2(x: &Tensor4) -> Result<Tensor4> {
    if x.h() % 2 != 0 || x.w() % 2 != 0 {
        return Err(Error::Dimension(format!("avg_pool2 needs even H and W, got {:?}", x.shape)));
    }
    let (h2, w2) = (x.h() / 2, x.w() / 2);
    let w = x.w();
    let mut y = Tensor4::zeros([x.n(), x.c(), h2, w2]);
    for n in 0..x.n() {
        for c in 0..x.c() {
            let src = x.channel(n, c);
            let dst = y.channel_mut(n, c);
            for i in 0..h2 {
                for j in 0..w2 {
                    let a = 2 * i * w + 2 * j;
                    dst[i * w2 + j] = 0.25 * (src[a] + src[a + 1] + src[a + w] + src[a + w + 1]);
                }
            }
        }
    }
    Ok(y)
}

pub fn avg_pool2_backward(dy: &Tensor4) -> Tensor4 {
    let (h, w) = (dy.h() * 2, dy.w() * 2);
    let w2 = dy.w();
    let mut dx = Tensor4::zeros([dy.n(), dy.c(), h, w]);
    for n in 0..dy.n() {
        for c in 0..dy.c() {
            let src = dy.channel(n, c);
            let dst = dx.channel_mut(n, c);
            for i in 0..h {
                for j in 0..w {
                    dst[i * w + j] = 0.25 * src[(i / 2) * w2 + j / 2];
                }
            }
        }
    }
    dx
}

/// Transposed convolution, kernel 3, stride 2, padding 1, output padding 1:
/// `(N, C_in, H, W) → (N, C_out, 2H, 2W)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpConv2d {
    /// Shape `(C_in, C_out, 3, 3)`.
    pub weight: Param,
    pub bias: Param,
    #[serde(skip)]
    cache: Option<Tensor4>,
}

impl UpConv2d {
    pub const KERNEL: usize = 3;
    pub const STRIDE: usize = 2;
    pub const PADDING: usize = 1;
    pub const OUTPUT_PADDING: usize = 1;

    pub fn new<R: Rng + ?Sized>(name: &str, c_in: usize, c_out: usize, rng: &mut R) -> Self {
        Self {
            weight: Param::kaiming(format!("{name}.weight"), vec![c_in, c_out, 3, 3], c_in * 9, rng),
            bias: Param::filled(format!("{name}.bias"), vec![c_out], 0.0),
            cache: None,
        }
    }

    pub fn c_in(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn c_out(&self) -> usize {
        self.weight.shape[1]
    }

    /// Standard transposed-convolution output length.
    pub fn output_len(input: usize) -> usize {
        (input - 1) * Self::STRIDE + Self::KERNEL + Self::OUTPUT_PADDING - 2 * Self::PADDING
    }

    // visits every (col row, col index, output offset) of the stride-2 scatter
    fn for_each_tap(c_out: usize, h: usize, w: usize, mut f: impl FnMut(usize, usize, usize)) {
        let (ho, wo) = (Self::output_len(h), Self::output_len(w));
        for co in 0..c_out {
            for ky in 0..3 {
                for kx in 0..3 {
                    let row = (co * 3 + ky) * 3 + kx;
                    for iy in 0..h {
                        let oy = (2 * iy + ky) as isize - 1;
                        if oy < 0 || oy >= ho as isize {
                            continue;
                        }
                        for ix in 0..w {
                            let ox = (2 * ix + kx) as isize - 1;
                            if ox < 0 || ox >= wo as isize {
                                continue;
                            }
                            f(row * h * w + iy * w + ix, co, (oy as usize) * wo + ox as usize);
                        }
                    }
                }
            }
        }
    }

    pub fn infer(&self, x: &Tensor4) -> Result<Tensor4> {
        if x.c() != self.c_in() {
            return Err(Error::Dimension(format!(
                "{}: expected {} input channels, got {}",
                self.weight.name,
                self.c_in(),
                x.c()
            )));
        }
        let (ci, co, h, w) = (self.c_in(), self.c_out(), x.h(), x.w());
        let (ho, wo) = (Self::output_len(h), Self::output_len(w));
        let hw = h * w;
        let wm = mat(ci, co * 9, &self.weight.value);
        let mut y = Tensor4::zeros([x.n(), co, ho, wo]);
        let mut cols = vec![0.0; co * 9 * hw];
        for n in 0..x.n() {
            general_mat_mul(1.0, &wm.t(), &mat(ci, hw, x.sample(n)), 0.0, &mut mat_mut(co * 9, hw, &mut cols));
            let ys = y.sample_mut(n);
            for (o, b) in self.bias.value.iter().enumerate() {
                ys[o * ho * wo..(o + 1) * ho * wo].fill(*b);
            }
            Self::for_each_tap(co, h, w, |src, c, dst| ys[c * ho * wo + dst] += cols[src]);
        }
        Ok(y)
    }

    pub fn forward(&mut self, x: &Tensor4) -> Result<Tensor4> {
        let y = self.infer(x)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor4) -> Result<Tensor4> {
        let x = self.cache.as_ref().ok_or_else(|| no_cache(&self.weight.name))?;
        let (ci, co, h, w) = (self.c_in(), self.c_out(), x.h(), x.w());
        let (ho, wo) = (Self::output_len(h), Self::output_len(w));
        dy.check_shape([x.n(), co, ho, wo], &self.weight.name)?;
        let hw = h * w;
        let wm = mat(ci, co * 9, &self.weight.value);
        let mut dx = Tensor4::zeros(x.shape);
        let mut dcols = vec![0.0; co * 9 * hw];
        for n in 0..x.n() {
            let dys = dy.sample(n);
            for (o, g) in self.bias.grad.iter_mut().enumerate() {
                *g += dys[o * ho * wo..(o + 1) * ho * wo].iter().sum::<f64>();
            }
            dcols.fill(0.0);
            Self::for_each_tap(co, h, w, |src, c, dst| dcols[src] = dys[c * ho * wo + dst]);
            let dc = mat(co * 9, hw, &dcols);
            general_mat_mul(
                1.0,
                &mat(ci, hw, x.sample(n)),
                &dc.t(),
                1.0,
                &mut mat_mut(ci, co * 9, &mut self.weight.grad),
            );
            general_mat_mul(1.0, &wm, &dc, 0.0, &mut mat_mut(ci, hw, dx.sample_mut(n)));
        }
        Ok(dx)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pooling_means() {
        let x = Tensor4::from_vec([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(avg_pool2(&x).unwrap().data, vec![2.5]);
        let c = Tensor4::from_fn([2, 3, 4, 6], |_| 1.5);
        assert!(avg_pool2(&c).unwrap().data.iter().all(|&v| v == 1.5));
        assert!(avg_pool2(&Tensor4::zeros([1, 1, 3, 4])).is_err());
        let g = avg_pool2_backward(&Tensor4::from_vec([1, 1, 1, 1], vec![4.0]).unwrap());
        assert_eq!(g.data, vec![1.0; 4]);
    }

    #[test]
    fn upconv_doubles_size() {
        for h in 1..6 {
            assert_eq!(UpConv2d::output_len(h), 2 * h);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let up = UpConv2d::new("up", 8, 4, &mut rng);
        let y = up.infer(&Tensor4::zeros([1, 8, 8, 8])).unwrap();
        assert_eq!(y.shape, [1, 4, 16, 16]);
    }

    #[test]
    fn relu_zeroes_negatives() {
        let mut r = Relu::default();
        let x = Tensor4::from_fn([1, 2, 3, 3], |[_, c, h, w]| -1.0 - (c + h + w) as f64);
        assert!(r.forward(&x).data.iter().all(|&v| v == 0.0));
        assert!(r.backward(&x).unwrap().data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_without_forward_fails() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut c = Conv2d::new("c", 1, 1, 3, &mut rng);
        assert!(c.backward(&Tensor4::zeros([1, 1, 2, 2])).is_err());
        let mut bn = BatchNorm2d::new("bn", 2);
        assert!(bn.backward(&Tensor4::zeros([1, 2, 2, 2])).is_err());
    }
}
