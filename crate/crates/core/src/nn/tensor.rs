use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense `(N, C, H, W)` tensor, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor4 {
    pub shape: [usize; 4],
    pub data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.iter().product::<usize>() {
            return Err(Error::Dimension(format!(
                "{} values for shape {shape:?}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn from_fn(shape: [usize; 4], mut f: impl FnMut([usize; 4]) -> f64) -> Self {
        let mut t = Self::zeros(shape);
        let mut i = 0;
        for n in 0..shape[0] {
            for c in 0..shape[1] {
                for h in 0..shape[2] {
                    for w in 0..shape[3] {
                        t.data[i] = f([n, c, h, w]);
                        i += 1;
                    }
                }
            }
        }
        t
    }

    pub fn n(&self) -> usize {
        self.shape[0]
    }

    pub fn c(&self) -> usize {
        self.shape[1]
    }

    pub fn h(&self) -> usize {
        self.shape[2]
    }

    pub fn w(&self) -> usize {
        self.shape[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn plane(&self) -> usize {
        self.shape[2] * self.shape[3]
    }

    /// Values of sample `n` as a `C·H·W` slice.
    pub fn sample(&self, n: usize) -> &[f64] {
        let s = self.shape[1] * self.plane();
        &self.data[n * s..(n + 1) * s]
    }

    pub fn sample_mut(&mut self, n: usize) -> &mut [f64] {
        let s = self.shape[1] * self.plane();
        &mut self.data[n * s..(n + 1) * s]
    }

    pub fn channel(&self, n: usize, c: usize) -> &[f64] {
        let p = self.plane();
        let o = (n * self.shape[1] + c) * p;
        &self.data[o..o + p]
    }

    pub fn channel_mut(&mut self, n: usize, c: usize) -> &mut [f64] {
        let p = self.plane();
        let o = (n * self.shape[1] + c) * p;
        &mut self.data[o..o + p]
    }

    pub fn get(&self, idx: [usize; 4]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: [usize; 4], v: f64) {
        let o = self.offset(idx);
        self.data[o] = v;
    }

    fn offset(&self, [n, c, h, w]: [usize; 4]) -> usize {
        ((n * self.shape[1] + c) * self.shape[2] + h) * self.shape[3] + w
    }

    /// Copies the listed samples, in order, into a new batch.
    pub fn gather(&self, samples: &[usize]) -> Tensor4 {
        let mut out = Tensor4::zeros([samples.len(), self.shape[1], self.shape[2], self.shape[3]]);
        for (i, &s) in samples.iter().enumerate() {
            out.sample_mut(i).copy_from_slice(self.sample(s));
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn check_shape(&self, expected: [usize; 4], what: &str) -> Result<()> {
        if self.shape != expected {
            return Err(Error::Dimension(format!(
                "{what}: expected {expected:?}, got {:?}",
                self.shape
            )));
        }
        Ok(())
    }
}

/// Channel concatenation, `b`'s channels after `a`'s.
pub fn concat_channels(a: &Tensor4, b: &Tensor4) -> Result<Tensor4> {
    if a.n() != b.n() || a.h() != b.h() || a.w() != b.w() {
        return Err(Error::Dimension(format!(
            "cannot concatenate {:?} and {:?}",
            a.shape, b.shape
        )));
    }
    let mut out = Tensor4::zeros([a.n(), a.c() + b.c(), a.h(), a.w()]);
    let (sa, sb) = (a.c() * a.plane(), b.c() * b.plane());
    for n in 0..a.n() {
        let dst = out.sample_mut(n);
        dst[..sa].copy_from_slice(a.sample(n));
        dst[sa..sa + sb].copy_from_slice(b.sample(n));
    }
    Ok(out)
}

/// Inverse of [`concat_channels`]: the first `c_first` channels and the rest.
pub fn split_channels(t: &Tensor4, c_first: usize) -> (Tensor4, Tensor4) {
    let p = t.plane();
    let mut a = Tensor4::zeros([t.n(), c_first, t.h(), t.w()]);
    let mut b = Tensor4::zeros([t.n(), t.c() - c_first, t.h(), t.w()]);
    for n in 0..t.n() {
        let s = t.sample(n);
        a.sample_mut(n).copy_from_slice(&s[..c_first * p]);
        b.sample_mut(n).copy_from_slice(&s[c_first * p..]);
    }
    (a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_then_split_round_trips() {
        let a = Tensor4::from_fn([2, 4, 3, 5], |[n, c, h, w]| (n * 100 + c * 10 + h * 5 + w) as f64);
        let b = Tensor4::from_fn([2, 3, 3, 5], |[n, c, h, w]| -((n * 100 + c * 10 + h * 5 + w) as f64));
        let j = concat_channels(&a, &b).unwrap();
        assert_eq!(j.shape, [2, 7, 3, 5]);
        assert_eq!(j.get([1, 5, 2, 1]), b.get([1, 1, 2, 1]));
        let (x, y) = split_channels(&j, 4);
        assert_eq!((x, y), (a, b));
        assert!(concat_channels(&Tensor4::zeros([1, 1, 2, 2]), &Tensor4::zeros([1, 1, 4, 4])).is_err());
    }

    #[test]
    fn indexing_is_row_major() {
        let t = Tensor4::from_fn([2, 3, 4, 5], |[n, c, h, w]| (((n * 3 + c) * 4 + h) * 5 + w) as f64);
        assert!(t.data.iter().enumerate().all(|(i, &v)| v == i as f64));
        assert_eq!(t.gather(&[1]).data, t.sample(1));
    }
}
