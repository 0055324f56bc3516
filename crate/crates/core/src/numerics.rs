//! Dense vectors and row-major matrices, plus the handful of kernels the
//! recurrences need.
//!
//! Constructors that take external data (`Vector::new`, `Matrix::new`) reject
//! non-finite entries. Results of arithmetic are not re-checked: an unstable
//! integrator is allowed to overflow, and the scans detect that with
//! [`Matrix::is_finite`].

use std::ops::{Index, IndexMut};

use crate::error::{shape, Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Vector<T> {
    data: Vec<T>,
}

impl<T: Scalar> Vector<T> {
    pub fn new(data: Vec<T>) -> Result<Self> {
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("vector"));
        }
        Ok(Self { data })
    }

    pub(crate) fn from_raw(data: Vec<T>) -> Self {
        Self { data }
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            data: vec![T::zero(); len],
        }
    }

    /// Unit basis vector `e_index` of length `len`.
    pub fn basis(len: usize, index: usize) -> Self {
        let mut v = Self::zeros(len);
        v.data[index] = T::one();
        v
    }

    pub fn from_fn(len: usize, f: impl FnMut(usize) -> T) -> Self {
        Self {
            data: (0..len).map(f).collect(),
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.data.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn norm(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    pub fn scaled(&self, s: T) -> Self {
        Self::from_raw(self.data.iter().map(|&x| x * s).collect())
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        max_abs_diff_slices(&self.data, &other.data)
    }

    pub fn cast<U: Scalar>(&self) -> Vector<U> {
        Vector::from_raw(
            self.data
                .iter()
                .map(|x| U::from(*x).expect("finite cast"))
                .collect(),
        )
    }
}

impl<T> Index<usize> for Vector<T> {
    type Output = T;
    #[inline]
    fn index(&self, i: usize) -> &T {
        &self.data[i]
    }
}

impl<T> IndexMut<usize> for Vector<T> {
    #[inline]
    fn index_mut(&mut self, i: usize) -> &mut T {
        &mut self.data[i]
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    /// Builds a matrix from row-major `data`.
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(shape(
                "Matrix::new",
                format!("{} entries", rows * cols),
                data.len(),
            ));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("matrix"));
        }
        Ok(Self { rows, cols, data })
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_raw(rows, cols, vec![T::zero(); rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::from_raw(rows, cols, data)
    }

    /// Stacks equal-length vectors as the rows of a matrix.
    pub fn from_rows(rows: &[Vector<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vector::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(shape("Matrix::from_rows", cols, format!("row {i} of length {}", r.len())));
            }
            data.extend_from_slice(r.as_slice());
        }
        Ok(Self::from_raw(rows.len(), cols, data))
    }

    pub fn diag(values: &[T]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_vector(&self, i: usize) -> Vector<T> {
        Vector::from_raw(self.row(i).to_vec())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    /// `max |a_ij − b_ij|`. Panics on shape mismatch.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!(self.shape(), other.shape(), "max_abs_diff shape mismatch");
        max_abs_diff_slices(&self.data, &other.data)
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn scaled(&self, s: T) -> Self {
        Self::from_raw(self.rows, self.cols, self.data.iter().map(|&x| x * s).collect())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    fn zip_with(&self, other: &Self, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(shape(op, format!("{:?}", self.shape()), format!("{:?}", other.shape())));
        }
        Ok(Self::from_raw(
            self.rows,
            self.cols,
            self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        ))
    }

    /// `self · rhs`.
    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(shape(
                "matmul",
                format!("lhs cols {} == rhs rows", self.cols),
                rhs.rows,
            ));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (p, &a) in self.row(i).iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(rhs.row(p)) {
                    *o = *o + a * b;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · rhs` without forming the transpose.
    pub fn transpose_matmul(&self, rhs: &Self) -> Result<Self> {
        if self.rows != rhs.rows {
            return Err(shape(
                "transpose_matmul",
                format!("lhs rows {} == rhs rows", self.rows),
                rhs.rows,
            ));
        }
        let mut out = Self::zeros(self.cols, rhs.cols);
        for p in 0..self.rows {
            let rhs_row = rhs.row(p);
            for (i, &a) in self.row(p).iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o = *o + a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · rhsᵀ` without forming the transpose.
    pub fn matmul_transpose(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.cols {
            return Err(shape(
                "matmul_transpose",
                format!("lhs cols {} == rhs cols", self.cols),
                rhs.cols,
            ));
        }
        Ok(Self::from_fn(self.rows, rhs.rows, |i, j| {
            dot_slices(self.row(i), rhs.row(j))
        }))
    }

    /// `self · x`.
    pub fn matvec(&self, x: &Vector<T>) -> Result<Vector<T>> {
        if self.cols != x.len() {
            return Err(shape("matvec", self.cols, x.len()));
        }
        Ok(Vector::from_raw(
            (0..self.rows).map(|i| dot_slices(self.row(i), x.as_slice())).collect(),
        ))
    }

    pub fn cast<U: Scalar>(&self) -> Matrix<U> {
        Matrix::from_raw(
            self.rows,
            self.cols,
            self.data
                .iter()
                .map(|x| U::from(*x).expect("finite cast"))
                .collect(),
        )
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub(crate) fn dot_slices<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn max_abs_diff_slices<T: Scalar>(a: &[T], b: &[T]) -> T {
    assert_eq!(a.len(), b.len(), "max_abs_diff length mismatch");
    a.iter()
        .zip(b)
        .fold(T::zero(), |m, (&x, &y)| {
            let d = (x - y).abs();
            // NaN must not be swallowed by `max`.
            if d.is_nan() || m.is_nan() {
                T::nan()
            } else {
                m.max(d)
            }
        })
}

pub fn dot<T: Scalar>(a: &Vector<T>, b: &Vector<T>) -> Result<T> {
    if a.len() != b.len() {
        return Err(shape("dot", a.len(), b.len()));
    }
    Ok(dot_slices(a.as_slice(), b.as_slice()))
}

/// `a bᵀ`.
pub fn outer<T: Scalar>(a: &Vector<T>, b: &Vector<T>) -> Matrix<T> {
    Matrix::from_fn(a.len(), b.len(), |i, j| a[i] * b[j])
}

/// `Sᵀ q`, the readout `o = Sᵀ q` of a fast-weight state.
pub fn matvec_transposed<T: Scalar>(s: &Matrix<T>, q: &Vector<T>) -> Result<Vector<T>> {
    if s.rows() != q.len() {
        return Err(shape("matvec_transposed", s.rows(), q.len()));
    }
    Ok(Vector::from_raw(transposed_product(s, q.as_slice())))
}

/// `Sᵀ q` over raw slices; accumulates row by row so the inner loop is contiguous.
#[inline]
pub(crate) fn transposed_product<T: Scalar>(s: &Matrix<T>, q: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); s.cols()];
    for (i, &qi) in q.iter().enumerate() {
        if qi == T::zero() {
            continue;
        }
        for (o, &x) in out.iter_mut().zip(s.row(i)) {
            *o = *o + qi * x;
        }
    }
    out
}

/// Solves `L X = B` for unit lower-triangular `L` by forward substitution.
///
/// `L` must have an exactly-unit diagonal and exactly-zero strict upper
/// triangle. The result is deterministic for given inputs.
pub fn unit_lower_solve<T: Scalar>(l: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    let n = l.rows();
    if l.cols() != n {
        return Err(shape("unit_lower_solve", "square L", format!("{:?}", l.shape())));
    }
    if b.rows() != n {
        return Err(shape("unit_lower_solve", format!("B with {n} rows"), b.rows()));
    }
    for i in 0..n {
        if l[(i, i)] != T::one() {
            return Err(Error::NotUnitLower(format!("diagonal entry {i} is {}", l[(i, i)])));
        }
        if let Some(j) = (i + 1..n).find(|&j| l[(i, j)] != T::zero()) {
            return Err(Error::NotUnitLower(format!("entry ({i}, {j}) above the diagonal is nonzero")));
        }
    }
    let cols = b.cols();
    let mut x = b.clone();
    for i in 1..n {
        let (solved, rest) = x.data.split_at_mut(i * cols);
        let row = &mut rest[..cols];
        for j in 0..i {
            let lij = l[(i, j)];
            if lij == T::zero() {
                continue;
            }
            for (r, &s) in row.iter_mut().zip(&solved[j * cols..(j + 1) * cols]) {
                *r = *r - lij * s;
            }
        }
    }
    Ok(x)
}
