//! Dense linear-algebra kernels used by the propagation engine.
//!
//! Everything here is row-major `f64`. Matrices are small enough (a few
//! thousand rows over a few hundred inputs) that no blocking or sparse
//! storage is attempted.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which extremum of an affine function to take over an input box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Min,
    Max,
}

/// Row-major dense matrix with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim("matrix data", rows * cols, data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::dim("matrix row", cols, row.len()));
            }
            data.extend_from_slice(row);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    /// `self · v`
    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::dim("matrix-vector product", self.cols, v.len()));
        }
        Ok((0..self.rows).map(|r| dot(self.row(r), v)).collect())
    }

    /// `self · other`
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::dim("matrix product", self.cols, other.rows));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            let dst = out.row_mut(r);
            for (k, &w) in self.row(r).iter().enumerate() {
                if w != 0.0 {
                    axpy(w, other.row(k), dst);
                }
            }
        }
        Ok(out)
    }
}

/// Real vector with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("vector"));
        }
        Ok(Self(data))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub(crate) fn from_raw(data: Vec<f64>) -> Self {
        Self(data)
    }
}

impl std::ops::Deref for Vector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Affine map `x ↦ A·x + B`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineForm {
    pub a: Matrix,
    pub b: Vector,
}

impl AffineForm {
    pub fn new(a: Matrix, b: Vector) -> Result<Self> {
        if a.rows() != b.len() {
            return Err(Error::dim("affine form offset", a.rows(), b.len()));
        }
        Ok(Self { a, b })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            a: Matrix::identity(n),
            b: Vector::zeros(n),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = self.a.mul_vec(x)?;
        for (yi, bi) in y.iter_mut().zip(self.b.iter()) {
            *yi += bi;
        }
        Ok(y)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Elementwise sign split `M = M⁺ + M⁻` with `M⁺ ≥ 0`, `M⁻ ≤ 0`.
pub fn split_pos_neg(m: &Matrix) -> (Matrix, Matrix) {
    let pos = m.data.iter().map(|&v| v.max(0.0)).collect();
    let neg = m.data.iter().map(|&v| v.min(0.0)).collect();
    (
        Matrix::from_raw(m.rows, m.cols, pos),
        Matrix::from_raw(m.rows, m.cols, neg),
    )
}

/// Closed-form extremum of `a·x + b` over the ℓ∞ ball `‖x − x0‖∞ ≤ eps`.
pub fn linf_extreme(a: &[f64], b: f64, x0: &[f64], eps: f64, direction: Direction) -> Result<f64> {
    if a.len() != x0.len() {
        return Err(Error::dim("linf_extreme centre", a.len(), x0.len()));
    }
    if !(eps >= 0.0) {
        return Err(Error::Domain(format!("radius must be non-negative, got {eps}")));
    }
    let centre = dot(a, x0) + b;
    let l1: f64 = a.iter().map(|v| v.abs()).sum();
    Ok(match direction {
        Direction::Min => centre - eps * l1,
        Direction::Max => centre + eps * l1,
    })
}

/// Extremum of `a·x + b` over an axis-aligned box `lo ≤ x ≤ hi`.
///
/// Equal to [`linf_extreme`] when the box is an unclipped ℓ∞ ball, but also
/// handles balls intersected with a global clip range.
pub fn box_extreme(a: &[f64], b: f64, lo: &[f64], hi: &[f64], direction: Direction) -> f64 {
    debug_assert_eq!(a.len(), lo.len());
    let mut acc = b;
    match direction {
        Direction::Min => {
            for ((&ai, &l), &h) in a.iter().zip(lo).zip(hi) {
                acc += if ai >= 0.0 { ai * l } else { ai * h };
            }
        }
        Direction::Max => {
            for ((&ai, &l), &h) in a.iter().zip(lo).zip(hi) {
                acc += if ai >= 0.0 { ai * h } else { ai * l };
            }
        }
    }
    acc
}

/// `(W·A, W·B + b)`: the affine form of `x ↦ W·(A·x + B) + b`.
pub fn affine_compose(outer_w: &Matrix, outer_b: &Vector, inner: &AffineForm) -> Result<AffineForm> {
    if outer_w.cols() != inner.a.rows() {
        return Err(Error::dim("affine_compose", inner.a.rows(), outer_w.cols()));
    }
    if outer_b.len() != outer_w.rows() {
        return Err(Error::dim("affine_compose bias", outer_w.rows(), outer_b.len()));
    }
    let a = outer_w.matmul(&inner.a)?;
    let mut b = outer_w.mul_vec(&inner.b)?;
    for (bi, oi) in b.iter_mut().zip(outer_b.iter()) {
        *bi += oi;
    }
    Ok(AffineForm {
        a,
        b: Vector::from_raw(b),
    })
}
