use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense complex matrix, row-major. Constructors only produce Hermitian
/// positive semidefinite matrices; the checks below verify that numerically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl DensityMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![Complex64::default(); dim * dim],
        }
    }

    /// `|v><v|` without normalizing.
    pub fn from_pure(v: &[Complex64]) -> Self {
        let mut rho = Self::zeros(v.len());
        rho.add_pure(1.0, v);
        rho
    }

    /// `rho += weight |v><v|`.
    pub fn add_pure(&mut self, weight: f64, v: &[Complex64]) {
        assert_eq!(v.len(), self.dim, "vector length must match the matrix dimension");
        for (i, vi) in v.iter().enumerate() {
            if *vi == Complex64::default() {
                continue;
            }
            let row = &mut self.data[i * self.dim..(i + 1) * self.dim];
            for (r, vj) in row.iter_mut().zip(v) {
                *r += vi * vj.conj() * weight;
            }
        }
    }

    /// Row-major entries; the caller guarantees Hermiticity.
    pub(crate) fn from_raw(dim: usize, data: Vec<Complex64>) -> Self {
        assert_eq!(data.len(), dim * dim);
        Self { dim, data }
    }

    /// `self += weight * other`.
    pub(crate) fn add_scaled(&mut self, other: &DensityMatrix, weight: f64) {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b * weight;
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.dim + j]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i).re).sum()
    }

    /// Divides by the trace. A zero matrix is returned unchanged.
    pub fn normalized(&self) -> DensityMatrix {
        let tr = self.trace();
        if tr == 0.0 {
            return self.clone();
        }
        DensityMatrix {
            dim: self.dim,
            data: self.data.iter().map(|c| c / tr).collect(),
        }
    }

    /// `<v|rho|v>` (real part; the imaginary part vanishes for Hermitian rho).
    pub fn expectation(&self, v: &[Complex64]) -> Result<f64> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} against {}x{} matrix",
                v.len(),
                self.dim,
                self.dim
            )));
        }
        let mut acc = Complex64::default();
        for (i, vi) in v.iter().enumerate() {
            if *vi == Complex64::default() {
                continue;
            }
            let row = &self.data[i * self.dim..(i + 1) * self.dim];
            let rv: Complex64 = row.iter().zip(v).map(|(r, vj)| r * vj).sum();
            acc += vi.conj() * rv;
        }
        Ok(acc.re)
    }

    pub fn hermiticity_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for j in i..self.dim {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    /// Eigenvalues (ascending) and matching eigenvectors.
    pub fn eigen(&self) -> (Vec<f64>, Vec<Vec<Complex64>>) {
        if self.dim == 0 {
            return (Vec::new(), Vec::new());
        }
        let m = DMatrix::from_row_slice(self.dim, self.dim, &self.data);
        let eig = SymmetricEigen::new(m);
        let mut pairs: Vec<(f64, Vec<Complex64>)> = eig
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(j, &l)| (l, eig.eigenvectors.column(j).iter().copied().collect()))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        pairs.into_iter().unzip()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigen().0.first().copied().unwrap_or(0.0)
    }

    /// Number of eigenvalues above `tol * trace`.
    pub fn rank(&self, tol: f64) -> usize {
        let tr = self.trace().abs();
        self.eigen().0.iter().filter(|&&l| l > tol * tr).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn pure_state_properties() {
        let v = [c(0.6, 0.0), c(0.0, 0.8)];
        let rho = DensityMatrix::from_pure(&v);
        assert_abs_diff_eq!(rho.trace(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(rho.expectation(&v).unwrap(), 1.0, epsilon = 1e-15);
        assert!(rho.hermiticity_error() < 1e-15);
        assert_eq!(rho.rank(1e-12), 1);
        let (vals, _) = rho.eigen();
        assert_abs_diff_eq!(vals[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(vals[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn mixture_and_normalization() {
        let mut rho = DensityMatrix::zeros(3);
        rho.add_pure(2.0, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        rho.add_pure(1.0, &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
        let rho = rho.normalized();
        assert_abs_diff_eq!(rho.trace(), 1.0, epsilon = 1e-15);
        assert_eq!(rho.rank(1e-12), 2);
        assert_abs_diff_eq!(rho.get(0, 0).re, 2.0 / 3.0, epsilon = 1e-15);
        assert!(rho.min_eigenvalue() > -1e-15);
        assert!(rho.expectation(&[c(1.0, 0.0)]).is_err());
    }
}
