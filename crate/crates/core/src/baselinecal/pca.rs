use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::sym_eigen;
use crate::real::{matmul_tn_acc, Real};

/// Principal axes of row-major samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real + Serialize + for<'a> Deserialize<'a>")]
pub struct Pca<T> {
    pub dim: usize,
    pub k: usize,
    pub mean: Vec<T>,
    /// `k × dim`, rows orthonormal, leading variance first.
    pub basis: Vec<T>,
    /// Sample variance along each retained axis.
    pub variances: Vec<T>,
    /// Sum of all sample variances.
    pub total_variance: T,
}

impl<T: Real> Pca<T> {
    /// Fits `k` components to `n` rows of width `dim`.
    pub fn fit(data: &[T], n: usize, dim: usize, k: usize) -> Result<Self> {
        if data.len() != n * dim {
            return Err(Error::invalid(format!("pca: {} values for {n} rows of width {dim}", data.len())));
        }
        if k == 0 || k > dim {
            return Err(Error::invalid(format!("pca: k = {k} must lie in 1..={dim}")));
        }
        if k >= n {
            return Err(Error::invalid(format!("pca: k = {k} exceeds sample count {n}")));
        }
        let mut mean = vec![T::zero(); dim];
        for row in data.chunks_exact(dim) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += *v;
            }
        }
        let inv_n = T::one() / T::from_usize(n).expect("n");
        mean.iter_mut().for_each(|m| *m *= inv_n);
        let centered: Vec<T> = data
            .chunks_exact(dim)
            .flat_map(|row| row.iter().zip(&mean).map(|(v, m)| *v - *m))
            .collect();
        let mut cov = vec![T::zero(); dim * dim];
        matmul_tn_acc(dim, n, dim, &centered, &centered, &mut cov);
        let inv = T::one() / T::from_usize(n - 1).expect("n");
        cov.iter_mut().for_each(|c| *c *= inv);
        let total_variance = (0..dim).map(|i| cov[i * dim + i]).sum();

        let eig = sym_eigen(&cov, dim)?;
        let mut basis = eig.vectors[..k * dim].to_vec();
        // Sign convention: largest-magnitude entry of each axis is positive.
        for row in basis.chunks_exact_mut(dim) {
            let pivot = row.iter().copied().fold(T::zero(), |a, v| if v.abs() > a.abs() { v } else { a });
            if pivot < T::zero() {
                row.iter_mut().for_each(|v| *v = -*v);
            }
        }
        let variances = eig.values[..k].iter().map(|v| v.max(T::zero())).collect();
        Ok(Pca { dim, k, mean, basis, variances, total_variance })
    }

    pub fn axis(&self, j: usize) -> &[T] {
        &self.basis[j * self.dim..(j + 1) * self.dim]
    }

    pub fn project(&self, row: &[T]) -> Vec<T> {
        (0..self.k)
            .map(|j| self.axis(j).iter().zip(row).zip(&self.mean).map(|((b, v), m)| *b * (*v - *m)).sum())
            .collect()
    }

    pub fn reconstruct(&self, scores: &[T]) -> Vec<T> {
        let mut out = self.mean.clone();
        for (j, s) in scores.iter().enumerate() {
            for (o, b) in out.iter_mut().zip(self.axis(j)) {
                *o += *s * *b;
            }
        }
        out
    }

    /// Largest deviation of the basis Gram matrix from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.k {
            for j in 0..self.k {
                let g: T = self.axis(i).iter().zip(self.axis(j)).map(|(a, b)| *a * *b).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g.as_f64() - target).abs());
            }
        }
        worst
    }

    pub fn explained_fraction(&self) -> f64 {
        let kept: T = self.variances.iter().copied().sum();
        if self.total_variance > T::zero() {
            (kept / self.total_variance).as_f64()
        } else {
            1.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_one_ray() {
        let dim = 6;
        let dir = [1.0, 2.0, 0.5, 0.0, -1.0, 3.0];
        let data: Vec<f64> = (0..20).flat_map(|i| dir.iter().map(move |d| d * (i as f64 * 0.3 + 1.0))).collect();
        let pca = Pca::fit(&data, 20, dim, 2).unwrap();
        assert!(pca.variances[0] / pca.total_variance > 0.9999);
        assert!(pca.orthonormality_error() < 1e-10);
    }

    #[test]
    fn rejects_bad_k() {
        let data = vec![0.0f64; 12];
        assert!(Pca::fit(&data, 4, 3, 0).is_err());
        assert!(Pca::fit(&data, 4, 3, 4).is_err());
        // Needs more samples than components.
        assert!(Pca::fit(&data[..9], 3, 3, 3).is_err());
    }
}
