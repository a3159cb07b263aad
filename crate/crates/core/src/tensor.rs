//! Small dense N×N matrices (N ∈ {1, 2}) used for coefficient values and
//! effective tensors.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::ops::{Add, Mul, Sub};

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 2;

#[derive(Clone, Copy, PartialEq)]
pub struct Tensor {
    dim: usize,
    m: [[f64; MAX_DIM]; MAX_DIM],
}

impl Tensor {
    pub fn zeros(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "unsupported dimension {dim}");
        Tensor { dim, m: [[0.0; MAX_DIM]; MAX_DIM] }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    pub fn scaled_identity(dim: usize, c: f64) -> Self {
        let mut t = Self::zeros(dim);
        for i in 0..dim {
            t.m[i][i] = c;
        }
        t
    }

    pub fn diag(entries: &[f64]) -> Self {
        let mut t = Self::zeros(entries.len());
        for (i, &v) in entries.iter().enumerate() {
            t.m[i][i] = v;
        }
        t
    }

    /// Builds a tensor from row vectors; `None` if the rows are not square
    /// or the size is unsupported.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Option<Self> {
        let dim = rows.len();
        if !(1..=MAX_DIM).contains(&dim) || rows.iter().any(|r| r.as_ref().len() != dim) {
            return None;
        }
        let mut t = Self::zeros(dim);
        for (i, r) in rows.iter().enumerate() {
            for (j, &v) in r.as_ref().iter().enumerate() {
                t.m[i][j] = v;
            }
        }
        Some(t)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim).map(|i| self.m[i][..self.dim].to_vec()).collect()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[i][j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.m[i][j] = v;
    }

    /// Column `j`, padded with zeros to `MAX_DIM`.
    pub fn column(&self, j: usize) -> [f64; MAX_DIM] {
        let mut c = [0.0; MAX_DIM];
        for (i, ci) in c.iter_mut().enumerate().take(self.dim) {
            *ci = self.m[i][j];
        }
        c
    }

    pub fn set_column(&mut self, j: usize, col: &[f64]) {
        for i in 0..self.dim {
            self.m[i][j] = col[i];
        }
    }

    #[inline]
    pub fn mul_vec(&self, v: &[f64]) -> [f64; MAX_DIM] {
        let mut out = [0.0; MAX_DIM];
        for (i, o) in out.iter_mut().enumerate().take(self.dim) {
            let mut s = 0.0;
            for (j, vj) in v.iter().enumerate().take(self.dim) {
                s += self.m[i][j] * vj;
            }
            *o = s;
        }
        out
    }

    /// Quadratic form ξ·Aξ.
    pub fn quadratic(&self, xi: &[f64]) -> f64 {
        let a = self.mul_vec(xi);
        (0..self.dim).map(|i| a[i] * xi[i]).sum()
    }

    pub fn transpose(&self) -> Self {
        let mut t = *self;
        for i in 0..self.dim {
            for j in 0..self.dim {
                t.m[i][j] = self.m[j][i];
            }
        }
        t
    }

    pub fn symmetric_part(&self) -> Self {
        (*self + self.transpose()) * 0.5
    }

    /// Eigenvalues of the symmetric part, ascending.
    pub fn sym_eigenvalues(&self) -> Vec<f64> {
        let s = self.symmetric_part();
        match self.dim {
            1 => vec![s.m[0][0]],
            _ => {
                let (a, b, d) = (s.m[0][0], s.m[0][1], s.m[1][1]);
                let mean = 0.5 * (a + d);
                let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
                vec![mean - rad, mean + rad]
            }
        }
    }

    pub fn sym_min_eigenvalue(&self) -> f64 {
        self.sym_eigenvalues()[0]
    }

    pub fn max_abs(&self) -> f64 {
        self.entries().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.entries().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.entries().all(f64::is_finite)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (*self - self.transpose()).max_abs() <= tol * self.max_abs().max(f64::MIN_POSITIVE)
    }

    pub fn entries(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.dim).flat_map(move |i| (0..self.dim).map(move |j| self.m[i][j]))
    }

    /// Arithmetic mean of a non-empty collection of same-sized tensors.
    pub fn mean<'a, I: IntoIterator<Item = &'a Tensor>>(items: I) -> Option<Tensor> {
        let mut it = items.into_iter();
        let first = *it.next()?;
        let mut sum = first;
        let mut n = 1usize;
        for t in it {
            sum = sum + *t;
            n += 1;
        }
        Some(sum * (1.0 / n as f64))
    }
}

impl Add for Tensor {
    type Output = Tensor;
    fn add(mut self, rhs: Tensor) -> Tensor {
        debug_assert_eq!(self.dim, rhs.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                self.m[i][j] += rhs.m[i][j];
            }
        }
        self
    }
}

impl Sub for Tensor {
    type Output = Tensor;
    fn sub(self, rhs: Tensor) -> Tensor {
        self + rhs * -1.0
    }
}

impl Mul<f64> for Tensor {
    type Output = Tensor;
    fn mul(mut self, c: f64) -> Tensor {
        for i in 0..self.dim {
            for j in 0..self.dim {
                self.m[i][j] *= c;
            }
        }
        self
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.to_rows())
    }
}

impl Serialize for Tensor {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Tensor {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        Tensor::from_rows(&rows)
            .ok_or_else(|| serde::de::Error::custom("expected a square 1x1 or 2x2 matrix"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigenvalues_of_symmetric_part() {
        let t = Tensor::from_rows(&[[2.0, 0.5], [0.5, 2.0]]).unwrap();
        let ev = t.sym_eigenvalues();
        assert!((ev[0] - 1.5).abs() < 1e-15 && (ev[1] - 2.5).abs() < 1e-15);
        // antisymmetric part does not contribute
        let skew = Tensor::from_rows(&[[1.0, 3.0], [-3.0, 1.0]]).unwrap();
        assert_eq!(skew.sym_min_eigenvalue(), 1.0);
    }

    #[test]
    fn rejects_ragged_rows() {
        assert!(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_none());
        assert!(Tensor::from_rows::<Vec<f64>>(&[]).is_none());
    }
}
