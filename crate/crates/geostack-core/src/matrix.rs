//! Dense row-major matrices, with a structurally upper-triangular variant.
//!
//! [`UpperTriangularMatrix`] keeps a full `d×d` grid in memory but never
//! lets a strictly-lower entry become nonzero: every constructor and
//! mutator masks them. Products of two such matrices only ever touch the
//! upper triangle, so closure holds by construction rather than by
//! tolerance.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{GeoError, Result};
use crate::math;

#[derive(Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct UpperTriangularMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl fmt::Debug for UpperTriangularMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UpperTriangularMatrix")
            .field("dim", &self.dim)
            .field("rows", &self.data.chunks(self.dim).collect::<Vec<_>>())
            .finish()
    }
}

impl UpperTriangularMatrix {
    pub fn zeros(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(GeoError::InvalidDimension(dim));
        }
        Ok(Self {
            dim,
            data: vec![0.0; dim * dim],
        })
    }

    pub fn identity(dim: usize) -> Result<Self> {
        let mut m = Self::zeros(dim)?;
        for i in 0..dim {
            m.data[i * dim + i] = 1.0;
        }
        Ok(m)
    }

    /// Builds from a row-major `dim×dim` grid. Fails if any strictly-lower
    /// entry is nonzero or any entry is non-finite.
    pub fn from_dense(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(GeoError::InvalidDimension(dim));
        }
        if data.len() != dim * dim {
            return Err(GeoError::DimensionMismatch {
                expected: dim * dim,
                found: data.len(),
            });
        }
        for i in 0..dim {
            for j in 0..dim {
                let v = data[i * dim + j];
                if !v.is_finite() {
                    return Err(GeoError::NonFinite(alloc::format!("entry ({i}, {j})")));
                }
                if i > j && v != 0.0 {
                    return Err(GeoError::InvalidInput(alloc::format!(
                        "strictly-lower entry ({i}, {j}) is nonzero"
                    )));
                }
            }
        }
        Ok(Self { dim, data })
    }

    /// Builds from a row-major grid, discarding whatever sits below the diagonal.
    pub fn from_dense_masked(dim: usize, mut data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(GeoError::InvalidDimension(dim));
        }
        if data.len() != dim * dim {
            return Err(GeoError::DimensionMismatch {
                expected: dim * dim,
                found: data.len(),
            });
        }
        for i in 1..dim {
            for j in 0..i {
                data[i * dim + j] = 0.0;
            }
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(GeoError::NonFinite(alloc::format!(
                "entry ({}, {})",
                k / dim,
                k % dim
            )));
        }
        Ok(Self { dim, data })
    }

    /// Builds from the packed upper triangle, row-major: `(0,0) (0,1) … (0,d-1) (1,1) …`.
    pub fn from_packed(dim: usize, packed: &[f64]) -> Result<Self> {
        let mut m = Self::zeros(dim)?;
        if packed.len() != packed_len(dim) {
            return Err(GeoError::DimensionMismatch {
                expected: packed_len(dim),
                found: packed.len(),
            });
        }
        let mut it = packed.iter();
        for i in 0..dim {
            for j in i..dim {
                let v = *it.next().expect("length checked");
                if !v.is_finite() {
                    return Err(GeoError::NonFinite(alloc::format!("entry ({i}, {j})")));
                }
                m.data[i * dim + j] = v;
            }
        }
        Ok(m)
    }

    pub fn to_packed(&self) -> Vec<f64> {
        let d = self.dim;
        let mut out = Vec::with_capacity(packed_len(d));
        for i in 0..d {
            out.extend_from_slice(&self.data[i * d + i..(i + 1) * d]);
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row-major dense view, lower triangle included (always zero).
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    /// Sets an upper-triangle entry. Writing below the diagonal is rejected.
    pub fn set(&mut self, i: usize, j: usize, value: f64) -> Result<()> {
        if i > j {
            return Err(GeoError::InvalidInput(alloc::format!(
                "cannot write strictly-lower entry ({i}, {j})"
            )));
        }
        if !value.is_finite() {
            return Err(GeoError::NonFinite(alloc::format!("entry ({i}, {j})")));
        }
        self.data[i * self.dim + j] = value;
        Ok(())
    }

    pub fn diagonal(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.dim).map(move |i| self.get(i, i))
    }

    /// Visits every upper-triangle position `(i, j)` with `i <= j`.
    pub fn upper_indices(dim: usize) -> impl Iterator<Item = (usize, usize)> {
        (0..dim).flat_map(move |i| (i..dim).map(move |j| (i, j)))
    }

    pub fn frobenius_norm(&self) -> f64 {
        math::sqrt(self.frobenius_norm_sq())
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(GeoError::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Self { dim: self.dim, data })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Self { dim: self.dim, data })
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    /// `self + I`.
    pub fn add_identity(&self) -> Self {
        let mut out = self.clone();
        for i in 0..self.dim {
            out.data[i * self.dim + i] += 1.0;
        }
        out
    }

    /// `self − I`.
    pub fn sub_identity(&self) -> Self {
        let mut out = self.clone();
        for i in 0..self.dim {
            out.data[i * self.dim + i] -= 1.0;
        }
        out
    }

    /// Upper-triangular product. Only `i <= k <= j` contributes to `(i, j)`.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        let d = self.dim;
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for k in i..d {
                let a = self.data[i * d + k];
                if a == 0.0 {
                    continue;
                }
                let row = &other.data[k * d..(k + 1) * d];
                let dst = &mut out[i * d..(i + 1) * d];
                for j in k..d {
                    dst[j] += a * row[j];
                }
            }
        }
        Ok(Self { dim: d, data: out })
    }

    /// Dense `selfᵀ·self − I` (symmetric).
    pub fn gram_minus_identity(&self) -> Matrix {
        let d = self.dim;
        let mut out = vec![0.0; d * d];
        // (WᵀW)_{ab} = Σ_k W_{ka} W_{kb}, with W_{ka} = 0 unless k <= a.
        for a in 0..d {
            for b in a..d {
                let s: f64 = (0..=a).map(|k| self.data[k * d + a] * self.data[k * d + b]).sum();
                out[a * d + b] = s;
                out[b * d + a] = s;
            }
            out[a * d + a] -= 1.0;
        }
        Matrix {
            rows: d,
            cols: d,
            data: out,
        }
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix {
            rows: self.dim,
            cols: self.dim,
            data: self.data.clone(),
        }
    }

    /// Row vector times matrix: `x·self`.
    pub fn apply_row(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        debug_assert_eq!(x.len(), d);
        debug_assert_eq!(out.len(), d);
        out.iter_mut().for_each(|v| *v = 0.0);
        for (k, &xk) in x.iter().enumerate() {
            if xk == 0.0 {
                continue;
            }
            let row = &self.data[k * d..(k + 1) * d];
            for j in k..d {
                out[j] += xk * row[j];
            }
        }
    }

    pub fn apply_row_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.apply_row(x, &mut out);
        out
    }
}

/// Number of stored entries in a packed `d×d` upper triangle.
pub const fn packed_len(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

/// General dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(GeoError::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(GeoError::NonFinite(alloc::format!("matrix entry {k}")));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn frobenius_norm(&self) -> f64 {
        math::sqrt(self.data.iter().map(|v| v * v).sum())
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(GeoError::DimensionMismatch {
                expected: self.cols,
                found: other.rows,
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let src = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        Ok(out)
    }

    /// `self·w` for a square upper-triangular right factor.
    pub fn mul_upper(&self, w: &UpperTriangularMatrix) -> Result<Matrix> {
        if self.cols != w.dim() {
            return Err(GeoError::DimensionMismatch {
                expected: self.cols,
                found: w.dim(),
            });
        }
        let mut out = Self::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            w.apply_row(self.row(i), &mut out.data[i * self.cols..(i + 1) * self.cols]);
        }
        Ok(out)
    }

    /// Row vector times matrix: `h·self`.
    pub fn apply_row(&self, h: &[f64]) -> Result<Vec<f64>> {
        if h.len() != self.rows {
            return Err(GeoError::DimensionMismatch {
                expected: self.rows,
                found: h.len(),
            });
        }
        let mut out = vec![0.0; self.cols];
        for (i, &hi) in h.iter().enumerate() {
            for (o, v) in out.iter_mut().zip(self.row(i)) {
                *o += hi * v;
            }
        }
        Ok(out)
    }

    /// `self·v` for a column vector.
    pub fn apply_col(&self, v: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|i| math::dot(self.row(i), v)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_dim_rejected() {
        assert_eq!(
            UpperTriangularMatrix::identity(0),
            Err(GeoError::InvalidDimension(0))
        );
    }

    #[test]
    fn lower_write_rejected() {
        let mut m = UpperTriangularMatrix::identity(3).unwrap();
        assert!(m.set(2, 0, 1.0).is_err());
        assert!(m.set(0, 2, 1.0).is_ok());
        assert!(m.set(0, 1, f64::NAN).is_err());
    }

    #[test]
    fn from_dense_checks_lower_triangle() {
        assert!(UpperTriangularMatrix::from_dense(2, vec![1.0, 2.0, 0.5, 1.0]).is_err());
        let m = UpperTriangularMatrix::from_dense_masked(2, vec![1.0, 2.0, 0.5, 1.0]).unwrap();
        assert_eq!(m.get(1, 0), 0.0);
        assert_eq!(m.get(0, 1), 2.0);
    }

    #[test]
    fn packed_round_trip() {
        let m =
            UpperTriangularMatrix::from_dense(3, vec![1.0, 2.0, 3.0, 0.0, 4.0, 5.0, 0.0, 0.0, 6.0]).unwrap();
        let p = m.to_packed();
        assert_eq!(p, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(UpperTriangularMatrix::from_packed(3, &p).unwrap(), m);
    }

    #[test]
    fn upper_product_matches_dense_product() {
        let a =
            UpperTriangularMatrix::from_dense(3, vec![1.0, 2.0, 3.0, 0.0, 4.0, 5.0, 0.0, 0.0, 6.0]).unwrap();
        let b = UpperTriangularMatrix::from_dense(3, vec![0.5, -1.0, 2.0, 0.0, 1.5, 0.25, 0.0, 0.0, -2.0])
            .unwrap();
        let fast = a.mul(&b).unwrap();
        let dense = a.to_matrix().matmul(&b.to_matrix()).unwrap();
        assert_eq!(fast.as_slice(), dense.as_slice());
    }

    #[test]
    fn gram_matches_dense() {
        let a =
            UpperTriangularMatrix::from_dense(3, vec![1.0, 2.0, 3.0, 0.0, 4.0, 5.0, 0.0, 0.0, 6.0]).unwrap();
        let dense = a.to_matrix();
        let mut g = dense.transpose().matmul(&dense).unwrap();
        for i in 0..3 {
            g.set(i, i, g.get(i, i) - 1.0);
        }
        assert_eq!(a.gram_minus_identity(), g);
    }
}
