//! Small dense symmetric linear algebra: eigendecomposition and Cholesky solves.
//! Matrices are row-major `n × n` slices.

use crate::error::{Error, Result};
use crate::real::Real;

/// Eigenpairs of a symmetric matrix, eigenvalues in descending order.
#[derive(Clone, Debug)]
pub struct SymEigen<T> {
    pub values: Vec<T>,
    /// Row `j` is the unit eigenvector of `values[j]`.
    pub vectors: Vec<T>,
    pub n: usize,
}

impl<T: Real> SymEigen<T> {
    pub fn vector(&self, j: usize) -> &[T] {
        &self.vectors[j * self.n..(j + 1) * self.n]
    }
}

/// Householder reduction to tridiagonal form followed by implicit QL iterations.
pub fn sym_eigen<T: Real>(a: &[T], n: usize) -> Result<SymEigen<T>> {
    if a.len() != n * n || n == 0 {
        return Err(Error::invalid(format!("sym_eigen: expected {n}x{n} matrix, got {} values", a.len())));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("sym_eigen input".into()));
    }
    // Column-major working copy: v[i][j] stored at v[i * n + j], as in the classic routine.
    let mut v = a.to_vec();
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    tridiagonalize(&mut v, &mut d, &mut e, n);
    ql_implicit(&mut v, &mut d, &mut e, n)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[j].partial_cmp(&d[i]).expect("finite eigenvalues"));
    let values = order.iter().map(|&j| d[j]).collect();
    let mut vectors = Vec::with_capacity(n * n);
    for &j in &order {
        vectors.extend((0..n).map(|i| v[i * n + j]));
    }
    Ok(SymEigen { values, vectors, n })
}

fn tridiagonalize<T: Real>(v: &mut [T], d: &mut [T], e: &mut [T], n: usize) {
    for j in 0..n {
        d[j] = v[(n - 1) * n + j];
    }
    for i in (1..n).rev() {
        let mut scale = T::zero();
        let mut h = T::zero();
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == T::zero() {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[(i - 1) * n + j];
                v[i * n + j] = T::zero();
                v[j * n + i] = T::zero();
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > T::zero() {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for j in 0..i {
                e[j] = T::zero();
            }
            for j in 0..i {
                f = d[j];
                v[j * n + i] = f;
                g = e[j] + v[j * n + j] * f;
                for k in (j + 1)..i {
                    g += v[k * n + j] * d[k];
                    e[k] += v[k * n + j] * f;
                }
                e[j] = g;
            }
            f = T::zero();
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[k * n + j] -= f * e[k] + g * d[k];
                }
                d[j] = v[(i - 1) * n + j];
                v[i * n + j] = T::zero();
            }
        }
        d[i] = h;
    }
    // Accumulate the transformations.
    for i in 0..n.saturating_sub(1) {
        v[(n - 1) * n + i] = v[i * n + i];
        v[i * n + i] = T::one();
        let h = d[i + 1];
        if h != T::zero() {
            for k in 0..=i {
                d[k] = v[k * n + i + 1] / h;
            }
            for j in 0..=i {
                let mut g = T::zero();
                for k in 0..=i {
                    g += v[k * n + i + 1] * v[k * n + j];
                }
                for k in 0..=i {
                    let dk = d[k];
                    v[k * n + j] -= g * dk;
                }
            }
        }
        for k in 0..=i {
            v[k * n + i + 1] = T::zero();
        }
    }
    for j in 0..n {
        d[j] = v[(n - 1) * n + j];
        v[(n - 1) * n + j] = T::zero();
    }
    v[(n - 1) * n + n - 1] = T::one();
    e[0] = T::zero();
}

fn ql_implicit<T: Real>(v: &mut [T], d: &mut [T], e: &mut [T], n: usize) -> Result<()> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = T::zero();
    let mut f = T::zero();
    let mut tst1 = T::zero();
    let eps = T::epsilon();
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > 60 {
                    return Err(Error::NonFinite("eigenvalue iteration did not converge".into()));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (T::lit(2.0) * e[l]);
                let mut r = p.hypot(T::one());
                if p < T::zero() {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for i in (l + 2)..n {
                    d[i] -= h;
                }
                f += h;
                p = d[m];
                let mut c = T::one();
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = T::zero();
                let mut s2 = T::zero();
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        h = v[k * n + i + 1];
                        v[k * n + i + 1] = s * v[k * n + i] + c * h;
                        v[k * n + i] = c * v[k * n + i] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = T::zero();
    }
    Ok(())
}

/// Solves `A x = b` for symmetric positive definite `A` (row-major `n × n`),
/// for every column of the row-major `n × m` right-hand side.
pub fn cholesky_solve<T: Real>(a: &[T], n: usize, b: &[T], m: usize) -> Result<Vec<T>> {
    if a.len() != n * n || b.len() != n * m {
        return Err(Error::invalid("cholesky_solve: shape mismatch"));
    }
    let mut l = vec![T::zero(); n * n];
    let scale = (0..n).map(|i| a[i * n + i].abs()).fold(T::zero(), T::max);
    let tol = T::lit(1e-13) * scale.max(T::min_positive_value());
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > tol) {
                    return Err(Error::Singular(format!(
                        "matrix is not positive definite (pivot {i} = {})",
                        s.as_f64()
                    )));
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let mut x = b.to_vec();
    for c in 0..m {
        for i in 0..n {
            let mut s = x[i * m + c];
            for k in 0..i {
                s -= l[i * n + k] * x[k * m + c];
            }
            x[i * m + c] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = x[i * m + c];
            for k in (i + 1)..n {
                s -= l[k * n + i] * x[k * m + c];
            }
            x[i * m + c] = s / l[i * n + i];
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sym(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = (0..n).map(|k| b[i * n + k] * b[j * n + k]).sum();
            }
        }
        a
    }

    #[test]
    fn reconstructs_matrix() {
        let n = 12;
        let a = random_sym(n, 1);
        let eig = sym_eigen(&a, n).unwrap();
        for i in 0..n {
            for j in 0..n {
                let v: f64 = (0..n).map(|k| eig.values[k] * eig.vector(k)[i] * eig.vector(k)[j]).sum();
                assert!((v - a[i * n + j]).abs() < 1e-10);
            }
        }
        assert!(eig.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn diagonal_and_one_by_one() {
        let eig = sym_eigen(&[3.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0], 3).unwrap();
        assert_eq!(eig.values, vec![3.0, 2.0, 1.0]);
        let one = sym_eigen(&[4.0], 1).unwrap();
        assert_eq!(one.values, vec![4.0]);
        assert_eq!(one.vectors, vec![1.0]);
    }

    #[test]
    fn cholesky_solves() {
        let n = 6;
        let mut a = random_sym(n, 2);
        for i in 0..n {
            a[i * n + i] += 1.0;
        }
        let x_true: Vec<f64> = (0..n * 2).map(|i| i as f64 - 3.0).collect();
        let mut b = vec![0.0; n * 2];
        for i in 0..n {
            for c in 0..2 {
                b[i * 2 + c] = (0..n).map(|k| a[i * n + k] * x_true[k * 2 + c]).sum();
            }
        }
        let x = cholesky_solve(&a, n, &b, 2).unwrap();
        for (p, q) in x.iter().zip(&x_true) {
            assert!((p - q).abs() < 1e-9);
        }
    }

    #[test]
    fn singular_rejected() {
        let err = cholesky_solve(&[1.0, 1.0, 1.0, 1.0], 2, &[1.0, 1.0], 1).unwrap_err();
        assert!(matches!(err, Error::Singular(_)));
    }
}
