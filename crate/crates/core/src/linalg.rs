//! Complex banded LU with partial pivoting, and a small dense LU.

use crate::error::{Error, Result};
use crate::C64;
use num_complex::Complex;
use num_traits::NumAssign;
use std::ops::{Index, IndexMut, Neg};
use twofloat::TwoFloat;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Complex double-double scalar (about 32 significant digits).
pub type Cdd = Complex<TwoFloat>;

/// Field elements the band LU works over.
pub trait Scalar: Copy + PartialEq + NumAssign + Neg<Output = Self> + Send + Sync {
    /// Modulus, to double precision (pivot choice only).
    fn modulus(&self) -> f64;
    fn from_c64(z: C64) -> Self;
    fn to_c64(&self) -> C64;
    /// `1 / self`, to the working precision of the type.
    fn reciprocal(&self) -> Self;
    #[inline]
    fn divide(&self, d: &Self) -> Self {
        *self * d.reciprocal()
    }
}

impl Scalar for C64 {
    #[inline]
    fn modulus(&self) -> f64 {
        self.norm()
    }
    #[inline]
    fn from_c64(z: C64) -> Self {
        z
    }
    #[inline]
    fn to_c64(&self) -> C64 {
        *self
    }
    #[inline]
    fn reciprocal(&self) -> Self {
        1.0 / self
    }
    #[inline]
    fn divide(&self, d: &Self) -> Self {
        self / d
    }
}

impl Scalar for Cdd {
    #[inline]
    fn modulus(&self) -> f64 {
        self.re.hi().hypot(self.im.hi())
    }
    #[inline]
    fn from_c64(z: C64) -> Self {
        Cdd::new(TwoFloat::from(z.re), TwoFloat::from(z.im))
    }
    #[inline]
    fn to_c64(&self) -> C64 {
        C64::new(self.re.hi() + self.re.lo(), self.im.hi() + self.im.lo())
    }
    /// `conj(z) / |z|^2` with one Newton step on the real reciprocal.
    /// `TwoFloat` division drops the low word of `1 - b t`, so it is avoided.
    fn reciprocal(&self) -> Self {
        let n = self.re * self.re + self.im * self.im;
        let t = 1.0 / n.hi();
        let e = TwoFloat::from(1.0) - n * t;
        let y = TwoFloat::from(t) + e * t;
        Cdd::new(self.re * y, -(self.im * y))
    }
}

/// LU factors of a square banded matrix (LAPACK `gbtrf` layout, row-major).
///
/// Row `i` stores columns `i - kl ..= i + kl + ku`; multipliers are kept in
/// place and row interchanges are applied to the trailing part only, so the
/// solve replays them in elimination order.
#[derive(Clone, Debug)]
pub struct BandLu<T = C64> {
    n: usize,
    kl: usize,
    ku: usize,
    wd: usize,
    a: Vec<T>,
    piv: Vec<usize>,
}

impl<T: Scalar> BandLu<T> {
    pub fn factor(n: usize, entries: &[(u32, u32, C64)]) -> Result<BandLu<T>> {
        let mut kl = 0usize;
        let mut ku = 0usize;
        for &(r, c, _) in entries {
            let (r, c) = (r as usize, c as usize);
            if r >= n || c >= n {
                return Err(Error::InvalidParameter(format!("entry ({r}, {c}) outside {n}x{n}")));
            }
            if r > c {
                kl = kl.max(r - c);
            } else {
                ku = ku.max(c - r);
            }
        }
        let wd = 2 * kl + ku + 1;
        let mut a = vec![T::zero(); n * wd];
        for &(r, c, v) in entries {
            let (r, c) = (r as usize, c as usize);
            a[r * wd + c + kl - r] += T::from_c64(v);
        }
        let mut lu = BandLu { n, kl, ku, wd, a, piv: vec![0; n] };
        lu.eliminate()?;
        Ok(lu)
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> usize {
        i * self.wd + j + self.kl - i
    }

    fn eliminate(&mut self) -> Result<()> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let scale = self.a.iter().fold(0.0f64, |m, z| m.max(z.modulus()));
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.a[self.at(k, k)].modulus();
            for i in k + 1..=last {
                let v = self.a[self.at(i, k)].modulus();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= scale * 1e-300 || best == 0.0 {
                return Err(Error::Singular(k));
            }
            self.piv[k] = p;
            let jmax = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    let (x, y) = (self.at(k, j), self.at(p, j));
                    self.a.swap(x, y);
                }
            }
            let pivot = self.a[self.at(k, k)];
            let inv = pivot.reciprocal();
            let krow = self.at(k, k + 1);
            let len = jmax - k;
            for i in k + 1..=last {
                let ik = self.at(i, k);
                let l = self.a[ik] * inv;
                self.a[ik] = l;
                if l == T::zero() {
                    continue;
                }
                let irow = self.at(i, k + 1);
                let (lo, hi) = self.a.split_at_mut(irow);
                let (src, dst) = (&lo[krow..krow + len], &mut hi[..len]);
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d -= l * s;
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn det(&self) -> T {
        let mut d = T::one();
        for k in 0..self.n {
            d *= self.a[self.at(k, k)];
            if self.piv[k] != k {
                d = -d;
            }
        }
        d
    }

    /// Solve `A x = b` in place.
    pub fn solve(&self, b: &mut [T]) {
        self.solve_from(b, 0)
    }

    /// As [`solve`](Self::solve), for a right-hand side vanishing below `first`.
    fn solve_from(&self, b: &mut [T], first: usize) {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        for k in first.saturating_sub(kl)..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != T::zero() {
                for i in k + 1..=(k + kl).min(n - 1) {
                    b[i] -= self.a[self.at(i, k)] * bk;
                }
            }
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            let jmax = (i + kl + ku).min(n - 1);
            let row = &self.a[self.at(i, i + 1).min(self.a.len())..];
            for (j, &v) in (i + 1..=jmax).zip(row) {
                s -= v * b[j];
            }
            b[i] = s.divide(&self.a[self.at(i, i)]);
        }
    }

    /// Column `c` of the inverse.
    pub fn inverse_column(&self, c: usize) -> Vec<T> {
        let mut e = vec![T::zero(); self.n];
        e[c] = T::one();
        self.solve_from(&mut e, c);
        e
    }
}

/// The full inverse, column-major (`data[c * n + r]`).
pub fn inverse_columns(lu: &BandLu) -> Vec<C64> {
    use rayon::prelude::*;
    let n = lu.n();
    let mut data = vec![ZERO; n * n];
    data.par_chunks_mut(n.max(1)).enumerate().for_each(|(c, col)| {
        col.copy_from_slice(&lu.inverse_column(c));
    });
    data
}

/// Small dense complex matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<C64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> DenseMatrix {
        DenseMatrix { rows, cols, data: vec![ZERO; rows * cols] }
    }

    /// Determinant by Gaussian elimination with partial pivoting.
    pub fn det(&self) -> C64 {
        assert_eq!(self.rows, self.cols);
        det_in_place(&mut self.data.clone(), self.rows)
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Determinant of the row-major `n x n` matrix in `a`, destroying it.
pub fn det_in_place(a: &mut [C64], n: usize) -> C64 {
    let mut d = C64::new(1.0, 0.0);
    for k in 0..n {
        let mut p = k;
        let mut best = a[k * n + k].norm_sqr();
        for i in k + 1..n {
            let v = a[i * n + k].norm_sqr();
            if v > best {
                best = v;
                p = i;
            }
        }
        if best == 0.0 {
            return ZERO;
        }
        if p != k {
            for j in k..n {
                a.swap(k * n + j, p * n + j);
            }
            d = -d;
        }
        let piv = a[k * n + k];
        d *= piv;
        let inv = 1.0 / piv;
        for i in k + 1..n {
            let l = a[i * n + k] * inv;
            if l == ZERO {
                continue;
            }
            for j in k + 1..n {
                let t = a[k * n + j];
                a[i * n + j] -= l * t;
            }
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_band(n: usize, kl: usize, ku: usize, seed: u64) -> Vec<(u32, u32, C64)> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                // weak diagonal forces pivoting
                let s = if i == j { 0.01 } else { 1.0 };
                out.push((i as u32, j as u32, C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * s));
            }
        }
        out
    }

    fn dense_of(n: usize, e: &[(u32, u32, C64)]) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(n, n);
        for &(r, c, v) in e {
            d[(r as usize, c as usize)] += v;
        }
        d
    }

    #[test]
    fn band_lu_matches_dense() {
        for (n, kl, ku) in [(1, 0, 0), (7, 2, 1), (30, 3, 5), (40, 7, 2)] {
            let e = random_band(n, kl, ku, n as u64);
            let lu = BandLu::<C64>::factor(n, &e).unwrap();
            let d = dense_of(n, &e);
            assert!((lu.det() - d.det()).norm() < 1e-10 * d.det().norm().max(1.0));
            for c in 0..n {
                let x = lu.inverse_column(c);
                for r in 0..n {
                    let mut s = ZERO;
                    for k in 0..n {
                        s += d[(r, k)] * x[k];
                    }
                    let want = if r == c { 1.0 } else { 0.0 };
                    assert!((s - want).norm() < 1e-9, "n={n} r={r} c={c}");
                }
            }
        }
    }

    #[test]
    fn double_double_solve_has_tiny_residual() {
        let (n, kl, ku) = (30, 3, 4);
        let e = random_band(n, kl, ku, 5);
        let lu = BandLu::<Cdd>::factor(n, &e).unwrap();
        let lu64 = BandLu::<C64>::factor(n, &e).unwrap();
        for c in [0, 13, 29] {
            let x = lu.inverse_column(c);
            let mut r = vec![Cdd::from_c64(ZERO); n];
            for &(i, j, v) in &e {
                r[i as usize] += Cdd::from_c64(v) * x[j as usize];
            }
            r[c] -= Cdd::from_c64(C64::new(1.0, 0.0));
            let m = r.iter().fold(0.0f64, |m, z| m.max(z.modulus()));
            let xm = x.iter().fold(0.0f64, |m, z| m.max(z.modulus()));
            assert!(m < 1e-26, "c={c} res={m:e} xmax={xm:e}");
            for (a, b) in x.iter().zip(lu64.inverse_column(c)) {
                assert!((a.to_c64() - b).norm() < 1e-9);
            }
        }
        assert!((lu.det().to_c64() - lu64.det()).norm() < 1e-9 * lu64.det().norm());
    }

    #[test]
    fn singular_detected() {
        let e = vec![(0, 0, C64::new(1.0, 0.0)), (1, 0, C64::new(2.0, 0.0))];
        assert!(BandLu::<C64>::factor(2, &e).is_err());
    }

    #[test]
    fn small_det() {
        let mut m = DenseMatrix::zeros(2, 2);
        m[(0, 0)] = C64::new(1.0, 1.0);
        m[(0, 1)] = C64::new(2.0, 0.0);
        m[(1, 0)] = C64::new(0.0, 3.0);
        m[(1, 1)] = C64::new(4.0, 0.0);
        let d = m.det();
        assert!((d - C64::new(4.0, -2.0)).norm() < 1e-14);
        assert_eq!(DenseMatrix::zeros(0, 0).det(), C64::new(1.0, 0.0));
    }
}
