//! Sparse storage and a banded `LDLᵀ` factorization shared by the real
//! stiffness solves and the complex shifted solves.
//!
//! The factorization does not pivot. It is used for symmetric positive
//! definite matrices and for complex symmetric matrices `A + zB` whose
//! Hermitian part is positive definite, where the pivots stay away from zero.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{ensure, Error, Result};

/// Field scalar used by [`BandLdl`].
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + PartialEq
{
    fn zero() -> Self;
    fn from_real(x: f64) -> Self;
    fn modulus(self) -> f64;
    fn is_finite(self) -> bool;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn from_real(x: f64) -> Self {
        x
    }
    fn modulus(self) -> f64 {
        libm::fabs(self)
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn from_real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn modulus(self) -> f64 {
        libm::hypot(self.re, self.im)
    }
    fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

/// Compressed sparse row matrix with `f64` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        for &(r, c, v) in &sorted {
            ensure(r < nrows && c < ncols, "triplet index out of range")?;
            ensure(v.is_finite(), "non-finite matrix entry")?;
        }
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn from_dense(a: &DMatrix<f64>) -> Result<Self> {
        let mut triplets = Vec::new();
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                let v = a[(i, j)];
                if v != 0.0 {
                    triplets.push((i, j, v));
                }
            }
        }
        Self::from_triplets(a.nrows(), a.ncols(), &triplets)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterates the stored entries of row `i` as `(col, value)`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.nrows) {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    pub fn mul_vec_complex(&self, x: &[Complex64]) -> Vec<Complex64> {
        (0..self.nrows)
            .map(|i| {
                self.row(i)
                    .fold(Complex64::new(0.0, 0.0), |acc, (j, v)| acc + x[j] * v)
            })
            .collect()
    }

    /// Quadratic form `xᵀ A x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        (0..self.nrows)
            .map(|i| x[i] * self.row(i).map(|(j, v)| v * x[j]).sum::<f64>())
            .sum()
    }

    pub fn bandwidth(&self) -> usize {
        self.triplets()
            .map(|(i, j, _)| i.abs_diff(j))
            .max()
            .unwrap_or(0)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.nrows == self.ncols
            && self
                .triplets()
                .all(|(i, j, v)| libm::fabs(v - self.get(j, i)) <= tol * (1.0 + libm::fabs(v)))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            a[(i, j)] += v;
        }
        a
    }

    /// `alpha * self + beta * other`, both square of the same size.
    pub fn linear_combination(&self, alpha: f64, other: &CsrMatrix, beta: f64) -> Result<Self> {
        ensure(
            self.nrows == other.nrows && self.ncols == other.ncols,
            "matrix shapes differ",
        )?;
        let triplets: Vec<_> = self
            .triplets()
            .map(|(i, j, v)| (i, j, alpha * v))
            .chain(other.triplets().map(|(i, j, v)| (i, j, beta * v)))
            .collect();
        Self::from_triplets(self.nrows, self.ncols, &triplets)
    }
}

/// Banded `LDLᵀ` factorization of a symmetric (or complex symmetric) matrix.
#[derive(Debug, Clone)]
pub struct BandLdl<T> {
    n: usize,
    bw: usize,
    /// Row `i` holds `L[i][i-bw..i]` at offsets `0..bw`.
    lower: Vec<T>,
    diag: Vec<T>,
}

impl<T: Scalar> BandLdl<T> {
    /// Factors the matrix whose lower band is delivered by `entry(i, j)` for
    /// `j <= i`, `i - j <= bw`.
    pub fn factor_with(n: usize, bw: usize, entry: impl Fn(usize, usize) -> T) -> Result<Self> {
        let bw = bw.min(n.saturating_sub(1));
        let mut lower = vec![T::zero(); n * bw];
        let mut diag = vec![T::zero(); n];
        let mut scaled = vec![T::zero(); bw];
        let mut scale = 0.0f64;
        for i in 0..n {
            scale = scale.max(entry(i, i).modulus());
        }
        let tiny = scale * 1e-300_f64.max(f64::EPSILON * f64::EPSILON);
        for i in 0..n {
            let first = i.saturating_sub(bw);
            // w_k = L[i][k] * d_k for the entries already computed in row i.
            for j in first..i {
                let mut s = entry(i, j);
                let kfirst = first.max(j.saturating_sub(bw));
                for k in kfirst..j {
                    s -= scaled[k - first] * lower[j * bw + (k + bw - j)];
                }
                let lij = s / diag[j];
                lower[i * bw + (j + bw - i)] = lij;
                scaled[j - first] = lij * diag[j];
            }
            let mut d = entry(i, i);
            for k in first..i {
                d -= scaled[k - first] * lower[i * bw + (k + bw - i)];
            }
            if !d.is_finite() || d.modulus() <= tiny || d.modulus() == 0.0 {
                return Err(Error::NumericalFailure("zero pivot in banded LDLᵀ"));
            }
            diag[i] = d;
        }
        Ok(Self { n, bw, lower, diag })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    pub fn diagonal(&self) -> &[T] {
        &self.diag
    }

    #[inline]
    fn l(&self, i: usize, j: usize) -> T {
        self.lower[i * self.bw + (j + self.bw - i)]
    }

    /// Solves `L y = b` in place.
    pub fn forward(&self, x: &mut [T]) {
        for i in 0..self.n {
            let mut s = x[i];
            for j in i.saturating_sub(self.bw)..i {
                s -= self.l(i, j) * x[j];
            }
            x[i] = s;
        }
    }

    /// Solves `Lᵀ x = y` in place.
    pub fn backward(&self, x: &mut [T]) {
        for i in (0..self.n).rev() {
            let xi = x[i];
            for j in i.saturating_sub(self.bw)..i {
                let l = self.l(i, j);
                x[j] -= l * xi;
            }
        }
    }

    /// Overwrites `x` with `Lᵀ x`.
    pub fn mul_lower_transpose(&self, x: &mut [T]) {
        for j in 0..self.n {
            let mut s = x[j];
            for i in j + 1..(j + self.bw + 1).min(self.n) {
                s += self.l(i, j) * x[i];
            }
            x[j] = s;
        }
    }

    pub fn solve_in_place(&self, x: &mut [T]) -> Result<()> {
        ensure(x.len() == self.n, "right-hand side has wrong length")?;
        self.forward(x);
        for (xi, &d) in x.iter_mut().zip(&self.diag) {
            *xi = *xi / d;
        }
        self.backward(x);
        if x.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NumericalFailure("non-finite solution"))
        }
    }

    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x)?;
        Ok(x)
    }
}

impl BandLdl<f64> {
    pub fn factor_real(a: &CsrMatrix) -> Result<Self> {
        ensure(a.nrows() == a.ncols(), "matrix must be square")?;
        let bw = a.bandwidth();
        let n = a.nrows();
        let band = dense_band(a, bw);
        Self::factor_with(n, bw, |i, j| band[i * (bw + 1) + (j + bw - i)])
    }

    /// True when every pivot is positive, i.e. the factored matrix is SPD.
    pub fn is_positive_definite(&self) -> bool {
        self.diag.iter().all(|&d| d > 0.0)
    }
}

impl BandLdl<Complex64> {
    /// Factors `alpha * a + beta * b` for real symmetric `a`, `b` and complex weights.
    pub fn factor_combination(
        a: &CsrMatrix,
        alpha: Complex64,
        b: &CsrMatrix,
        beta: Complex64,
    ) -> Result<Self> {
        ensure(
            a.nrows() == a.ncols() && b.nrows() == a.nrows() && b.ncols() == a.ncols(),
            "matrix shapes differ",
        )?;
        let bw = a.bandwidth().max(b.bandwidth());
        let n = a.nrows();
        let band_a = dense_band(a, bw);
        let band_b = dense_band(b, bw);
        Self::factor_with(n, bw, |i, j| {
            let o = i * (bw + 1) + (j + bw - i);
            alpha * band_a[o] + beta * band_b[o]
        })
    }
}

/// Lower band of `a` in row-major `(bw + 1)`-wide storage; the diagonal sits at offset `bw`.
fn dense_band(a: &CsrMatrix, bw: usize) -> Vec<f64> {
    let mut band = vec![0.0; a.nrows() * (bw + 1)];
    for (i, j, v) in a.triplets() {
        if j <= i {
            band[i * (bw + 1) + (j + bw - i)] += v;
        }
    }
    band
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(libm::fabs(*v)))
}

pub fn norm2(x: &[f64]) -> f64 {
    libm::sqrt(dot(x, x))
}
