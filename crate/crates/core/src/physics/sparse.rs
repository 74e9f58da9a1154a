//! Complex sparse matrices and a banded direct solver.
//!
//! The finite-volume operators are complex symmetric with a positive definite
//! real part, so a banded `LDLᵀ` factorisation without pivoting is stable.

use num_complex::Complex64;

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<Complex64>,
}

impl CsrMatrix {
    /// Builds from per-row `(column, value)` lists; entries within a row are
    /// sorted by column and duplicates summed.
    pub fn from_rows(rows: Vec<Vec<(usize, Complex64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                if last == Some(c) {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_rows(
            (0..n)
                .map(|i| vec![(i, Complex64::new(1.0, 0.0))])
                .collect(),
        )
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.row(i)
            .find(|&(c, _)| c == j)
            .map(|(_, v)| v)
            .unwrap_or(ZERO)
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        (0..self.n)
            .map(|i| self.row(i).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    pub fn half_bandwidth(&self) -> usize {
        (0..self.n)
            .flat_map(|i| self.row(i).map(move |(c, _)| c.abs_diff(i)))
            .max()
            .unwrap_or(0)
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        (0..self.n).all(|i| {
            self.row(i).all(|(j, v)| {
                let w = self.get(j, i);
                (v - w).norm() <= rel_tol * v.norm().max(w.norm())
            })
        })
    }

    pub fn relative_residual(&self, x: &[Complex64], b: &[Complex64]) -> f64 {
        let ax = self.matvec(x);
        let r: f64 = ax
            .iter()
            .zip(b)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let nb: f64 = b.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if nb == 0.0 {
            r
        } else {
            r / nb
        }
    }
}

/// Banded `LDLᵀ` factor of a complex symmetric matrix.
///
/// Column `k` stores `a(k + d, k)` for `d = 0..=bw` at `k * (bw + 1) + d`;
/// after factorisation `d = 0` holds the pivot and `d > 0` the multipliers.
pub struct BandedLdlt {
    n: usize,
    bw: usize,
    band: Vec<Complex64>,
}

impl BandedLdlt {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.n;
        let bw = a.half_bandwidth();
        let w = bw + 1;
        let mut band = vec![ZERO; n * w];
        for i in 0..n {
            for (j, v) in a.row(i) {
                if j <= i {
                    band[j * w + (i - j)] = v;
                }
            }
        }
        for k in 0..n {
            let pivot = band[k * w];
            if !(pivot.norm() > 0.0 && pivot.re.is_finite() && pivot.im.is_finite()) {
                return Err(Error::Numerical {
                    reason: format!("zero or non-finite pivot at row {k}"),
                    residual: f64::INFINITY,
                });
            }
            let inv = 1.0 / pivot;
            let m = bw.min(n - 1 - k);
            let (head, tail) = band.split_at_mut((k + 1) * w);
            let col = &mut head[k * w..];
            for i in 1..=m {
                let l = col[i] * inv;
                if l == ZERO {
                    continue;
                }
                // column k+i, rows (k+i)..=(k+m)
                let target = &mut tail[(i - 1) * w..(i - 1) * w + (m - i + 1)];
                let src = &col[i..=m];
                let li = -l;
                for (t, s) in target.iter_mut().zip(src) {
                    *t += li * *s;
                }
            }
            for v in col[1..=m].iter_mut() {
                *v *= inv;
            }
        }
        Ok(Self { n, bw, band })
    }

    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let w = self.bw + 1;
        let n = self.n;
        let mut x = b.to_vec();
        for k in 0..n {
            let xk = x[k];
            let m = self.bw.min(n - 1 - k);
            let col = &self.band[k * w..k * w + m + 1];
            for (xi, l) in x[k + 1..=k + m].iter_mut().zip(&col[1..]) {
                *xi -= l * xk;
            }
        }
        for k in 0..n {
            x[k] /= self.band[k * w];
        }
        for k in (0..n).rev() {
            let m = self.bw.min(n - 1 - k);
            let col = &self.band[k * w..k * w + m + 1];
            let s: Complex64 = x[k + 1..=k + m]
                .iter()
                .zip(&col[1..])
                .map(|(xi, l)| l * xi)
                .sum();
            x[k] -= s;
        }
        x
    }
}

/// Solves `A x = b` by banded `LDLᵀ` with up to two refinement steps, and
/// fails unless the relative residual reaches `tol`.
pub fn solve_symmetric(a: &CsrMatrix, b: &[Complex64], tol: f64) -> Result<(Vec<Complex64>, f64)> {
    if b.len() != a.n {
        return Err(Error::Dimension(format!(
            "right-hand side has {} entries for a {}x{} matrix",
            b.len(),
            a.n,
            a.n
        )));
    }
    let f = BandedLdlt::factor(a)?;
    let mut x = f.solve(b);
    let mut res = a.relative_residual(&x, b);
    for _ in 0..2 {
        if res <= tol * 1e-2 || !res.is_finite() {
            break;
        }
        let ax = a.matvec(&x);
        let r: Vec<Complex64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let dx = f.solve(&r);
        for (xi, d) in x.iter_mut().zip(dx) {
            *xi += d;
        }
        res = a.relative_residual(&x, b);
    }
    if !(res <= tol) {
        return Err(Error::Numerical {
            reason: "residual above tolerance".into(),
            residual: res,
        });
    }
    Ok((x, res))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn identity_system() {
        let a = CsrMatrix::identity(7);
        let b = vec![c(1.0, 0.0); 7];
        let (x, res) = solve_symmetric(&a, &b, 1e-10).unwrap();
        assert!(x.iter().all(|v| *v == c(1.0, 0.0)));
        assert_eq!(res, 0.0);
    }

    #[test]
    fn random_banded_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 60;
        let bw = 5;
        let mut dense = vec![vec![c(0.0, 0.0); n]; n];
        for i in 0..n {
            for j in i.saturating_sub(bw)..i {
                let v = c(rng.random_range(-1.0..0.0), 0.0);
                dense[i][j] = v;
                dense[j][i] = v;
            }
        }
        for i in 0..n {
            let off: f64 = dense[i].iter().map(|v| v.norm()).sum();
            dense[i][i] = c(off + 0.1, rng.random_range(-3.0..3.0));
        }
        let rows = dense
            .iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, v)| v.norm() > 0.0)
                    .map(|(j, v)| (j, *v))
                    .collect()
            })
            .collect();
        let a = CsrMatrix::from_rows(rows);
        assert_eq!(a.half_bandwidth(), bw);
        assert!(a.is_symmetric(0.0));
        let xt: Vec<Complex64> = (0..n)
            .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let b = a.matvec(&xt);
        let (x, res) = solve_symmetric(&a, &b, 1e-12).unwrap();
        assert!(res < 1e-12);
        for (u, v) in x.iter().zip(&xt) {
            assert!((u - v).norm() < 1e-10);
        }
    }

    #[test]
    fn singular_reports_error() {
        let a = CsrMatrix::from_rows(vec![vec![(0, c(0.0, 0.0))]]);
        assert!(matches!(
            solve_symmetric(&a, &[c(1.0, 0.0)], 1e-10),
            Err(Error::Numerical { .. })
        ));
    }
}
