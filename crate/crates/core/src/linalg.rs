//! Small dense complex linear algebra: Hermitian inner products, null-space
//! projectors and dominant eigenvectors of Hermitian PSD matrices.
//!
//! Dimensions here are the antenna count (at most a handful), so everything
//! is stored densely and computed directly.

use std::ops::{Index, IndexMut};

use num_complex::Complex;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::num::Real;

/// Complex column vector, e.g. a channel `h_k` or a beamformer `w_T`.
#[derive(Clone, Debug, PartialEq)]
pub struct CVector<R> {
    entries: Vec<Complex<R>>,
}

impl<R: Real> CVector<R> {
    /// Builds a vector, rejecting empty input and non-finite entries.
    pub fn new(entries: Vec<Complex<R>>) -> Result<Self> {
        if entries.is_empty() || entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidVector);
        }
        Ok(Self { entries })
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            entries: vec![Complex::zero(); len],
        }
    }

    /// Unit vector along axis `i`.
    pub fn basis(len: usize, i: usize) -> Self {
        let mut v = Self::zeros(len);
        v.entries[i] = Complex::one();
        v
    }

    pub fn from_real(values: &[R]) -> Result<Self> {
        Self::new(values.iter().map(|&x| Complex::new(x, R::zero())).collect())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex<R>] {
        &self.entries
    }

    pub fn iter(&self) -> impl Iterator<Item = &Complex<R>> {
        self.entries.iter()
    }

    pub fn norm_sqr(&self) -> R {
        self.entries.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> R {
        self.norm_sqr().sqrt()
    }

    pub fn scaled(&self, s: R) -> Self {
        Self {
            entries: self.entries.iter().map(|z| z * s).collect(),
        }
    }

    pub fn scaled_complex(&self, s: Complex<R>) -> Self {
        Self {
            entries: self.entries.iter().map(|z| z * s).collect(),
        }
    }

    /// Returns `self / ‖self‖`, or `None` for the zero vector.
    pub fn normalized(&self) -> Option<Self> {
        let n = self.norm();
        (n > R::zero()).then(|| self.scaled(R::one() / n))
    }

    pub fn axpy(&mut self, a: Complex<R>, x: &CVector<R>) {
        for (y, xi) in self.entries.iter_mut().zip(&x.entries) {
            *y = *y + a * xi;
        }
    }

    /// Rotates the vector so that its largest-magnitude entry is real and
    /// positive. Fixes the phase ambiguity of eigen- and null-space vectors.
    pub fn phase_normalized(&self) -> Self {
        let pivot = self
            .entries
            .iter()
            .copied()
            .fold(Complex::zero(), |best: Complex<R>, z| {
                if z.norm_sqr() > best.norm_sqr() {
                    z
                } else {
                    best
                }
            });
        let mag = pivot.norm();
        if mag > R::zero() {
            self.scaled_complex(pivot.conj() / mag)
        } else {
            self.clone()
        }
    }

    pub fn into_inner(self) -> Vec<Complex<R>> {
        self.entries
    }
}

impl<R> Index<usize> for CVector<R> {
    type Output = Complex<R>;

    fn index(&self, i: usize) -> &Complex<R> {
        &self.entries[i]
    }
}

impl<R> IndexMut<usize> for CVector<R> {
    fn index_mut(&mut self, i: usize) -> &mut Complex<R> {
        &mut self.entries[i]
    }
}

/// Returns `a^H b = Σ conj(a_i) b_i`.
pub fn herm_inner<R: Real>(a: &CVector<R>, b: &CVector<R>) -> Result<Complex<R>> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(herm_dot(a.as_slice(), b.as_slice()))
}

/// Unchecked `a^H b` for equal-length slices.
#[inline]
pub(crate) fn herm_dot<R: Real>(a: &[Complex<R>], b: &[Complex<R>]) -> Complex<R> {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .fold(Complex::zero(), |acc, (x, y)| acc + x.conj() * y)
}

/// Dense complex matrix in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix<R> {
    rows: usize,
    cols: usize,
    data: Vec<Complex<R>>,
}

impl<R: Real> CMatrix<R> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex::one();
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<Complex<R>>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex<R>) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Diagonal matrix with real entries.
    pub fn diag(values: &[R]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = Complex::new(v, R::zero());
        }
        m
    }

    /// Rank-one Hermitian matrix `x x^H`.
    pub fn outer(x: &CVector<R>) -> Self {
        Self::from_fn(x.len(), x.len(), |i, j| x[i] * x[j].conj())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn column(&self, j: usize) -> CVector<R> {
        CVector {
            entries: (0..self.rows).map(|i| self[(i, j)]).collect(),
        }
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn mul_vec(&self, x: &CVector<R>) -> Result<CVector<R>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: x.len(),
            });
        }
        let entries = (0..self.rows)
            .map(|i| {
                let row = &self.data[i * self.cols..(i + 1) * self.cols];
                row.iter()
                    .zip(x.as_slice())
                    .fold(Complex::zero(), |acc, (a, b)| acc + a * b)
            })
            .collect();
        Ok(CVector { entries })
    }

    pub fn matmul(&self, other: &CMatrix<R>) -> Result<CMatrix<R>> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: other.rows,
            });
        }
        Ok(Self::from_fn(self.rows, other.cols, |i, j| {
            (0..self.cols).fold(Complex::zero(), |acc, k| acc + self[(i, k)] * other[(k, j)])
        }))
    }

    pub fn add(&self, other: &CMatrix<R>) -> Result<CMatrix<R>> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &CMatrix<R>) -> Result<CMatrix<R>> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(
        &self,
        other: &CMatrix<R>,
        f: impl Fn(Complex<R>, Complex<R>) -> Complex<R>,
    ) -> Result<CMatrix<R>> {
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return Err(Error::DimensionMismatch {
                expected: self.rows * self.cols,
                found: other.rows * other.cols,
            });
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn trace(&self) -> Complex<R> {
        (0..self.rows.min(self.cols)).fold(Complex::zero(), |acc, i| acc + self[(i, i)])
    }

    /// Largest entrywise modulus.
    pub fn max_abs(&self) -> R {
        self.data.iter().map(|z| z.norm()).fold(R::zero(), R::max)
    }

    /// Largest entrywise deviation from `other`.
    pub fn max_abs_diff(&self, other: &CMatrix<R>) -> R {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(R::zero(), R::max)
    }

    pub fn is_hermitian(&self, tol: R) -> bool {
        self.is_square() && self.max_abs_diff(&self.adjoint()) <= tol
    }
}

impl<R> Index<(usize, usize)> for CMatrix<R> {
    type Output = Complex<R>;

    fn index(&self, (i, j): (usize, usize)) -> &Complex<R> {
        &self.data[i * self.cols + j]
    }
}

impl<R> IndexMut<(usize, usize)> for CMatrix<R> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex<R> {
        &mut self.data[i * self.cols + j]
    }
}

/// Orthonormal basis of `span(channels)` by modified Gram-Schmidt with one
/// re-orthogonalization pass.
pub fn orthonormal_basis<R: Real>(channels: &[CVector<R>], dim: usize) -> Result<Vec<CVector<R>>> {
    let mut basis: Vec<CVector<R>> = Vec::with_capacity(channels.len());
    for (index, h) in channels.iter().enumerate() {
        if h.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: h.len(),
            });
        }
        let scale = h.norm();
        let mut v = h.clone();
        for _ in 0..2 {
            for u in &basis {
                let c = herm_dot(u.as_slice(), v.as_slice());
                v.axpy(-c, u);
            }
        }
        let n = v.norm();
        if scale == R::zero() || n <= R::rank_tol() * scale {
            return Err(Error::DegenerateChannel { index });
        }
        basis.push(v.scaled(R::one() / n));
    }
    Ok(basis)
}

/// Orthogonal projector onto the complement of `span(channels)` in `C^dim`,
/// built as `I - U U^H` from an orthonormal basis `U` of the channels.
pub fn null_projector<R: Real>(channels: &[CVector<R>], dim: usize) -> Result<CMatrix<R>> {
    if dim == 0 {
        return Err(Error::Parameter("projector dimension must be positive".into()));
    }
    if channels.len() > dim {
        // More vectors than dimensions: necessarily dependent.
        return Err(Error::DegenerateChannel { index: dim });
    }
    let basis = orthonormal_basis(channels, dim)?;
    let mut q = CMatrix::identity(dim);
    for u in &basis {
        for i in 0..dim {
            for j in 0..dim {
                q[(i, j)] = q[(i, j)] - u[i] * u[j].conj();
            }
        }
    }
    Ok(q)
}

/// Largest eigenvalue of a Hermitian PSD matrix and its unit eigenvector.
#[derive(Clone, Debug, PartialEq)]
pub struct Eigenpair<R> {
    pub value: R,
    pub vector: CVector<R>,
}

pub const EIG_MAX_ITERS: usize = 10_000;
const EIG_RQ_TOL: f64 = 1e-10;
const EIG_RESIDUAL_TOL: f64 = 1e-8;

/// Dominant eigenpair of a Hermitian PSD matrix by power iteration.
///
/// Iterates with `A^8` (three squarings of the trace-normalized matrix) to
/// speed up small spectral gaps, stops once the Rayleigh quotient settles,
/// and returns the vector phase-normalized.
pub fn dominant_eigvec<R: Real>(a: &CMatrix<R>) -> Result<Eigenpair<R>> {
    if !a.is_square() || a.rows() == 0 {
        return Err(Error::DimensionMismatch {
            expected: a.rows(),
            found: a.cols(),
        });
    }
    let n = a.rows();
    let trace = a.trace().re;
    if !(trace > R::zero()) {
        // Zero matrix: every vector is an eigenvector of eigenvalue 0.
        return Ok(Eigenpair {
            value: R::zero(),
            vector: CVector::basis(n, 0),
        });
    }
    let scaled = CMatrix {
        rows: n,
        cols: n,
        data: a.data.iter().map(|z| z / trace).collect(),
    };
    let mut accel = scaled;
    for _ in 0..3 {
        accel = accel.matmul(&accel)?;
    }

    // Start from the column with the largest diagonal entry, plus a fixed
    // generic perturbation so the start is never orthogonal to the target.
    let pivot = (0..n)
        .max_by(|&i, &j| a[(i, i)].re.partial_cmp(&a[(j, j)].re).unwrap())
        .unwrap();
    let col = a.column(pivot);
    let col_norm = col.norm();
    let mut v = CVector {
        entries: col
            .iter()
            .enumerate()
            .map(|(i, z)| {
                let p = Complex::new(
                    R::one() / R::of((i + 2) as f64),
                    R::one() / R::of((i + 3) as f64),
                );
                z + p * col_norm * R::of(1e-3)
            })
            .collect(),
    };
    v = v.normalized().unwrap_or_else(|| CVector::basis(n, 0));

    let rayleigh = |v: &CVector<R>| -> Result<(R, R)> {
        let av = a.mul_vec(v)?;
        let lambda = herm_dot(v.as_slice(), av.as_slice()).re;
        let mut r = av;
        r.axpy(Complex::new(-lambda, R::zero()), v);
        Ok((lambda, r.norm()))
    };

    let (mut lambda, mut residual) = rayleigh(&v)?;
    let rq_tol = R::of(EIG_RQ_TOL).max(R::epsilon() * R::of(10.0));
    let res_tol = R::of(EIG_RESIDUAL_TOL).max(R::epsilon() * R::of(100.0));
    for _ in 0..EIG_MAX_ITERS {
        let next = accel.mul_vec(&v)?;
        let Some(next) = next.normalized() else {
            break;
        };
        v = next;
        let (l, r) = rayleigh(&v)?;
        let settled = (l - lambda).abs() <= rq_tol * l.abs().max(R::min_positive_value());
        lambda = l;
        residual = r;
        if residual <= R::of(0.01) * res_tol * lambda.abs()
            || (settled && residual <= res_tol * lambda.abs())
        {
            break;
        }
    }
    if residual > res_tol * lambda.abs().max(R::min_positive_value()) {
        return Err(Error::NoConvergence {
            iterations: EIG_MAX_ITERS,
            residual: residual.as_f64(),
        });
    }
    Ok(Eigenpair {
        value: lambda,
        vector: v.phase_normalized(),
    })
}
