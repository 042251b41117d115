use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diffcore::persist::{read_f64_file, read_json, write_f64_file, write_json};
use crate::error::{Error, Result};
use crate::linalg::cholesky_solve;
use crate::real::Real;

/// Ridge weight applied when none is configured.
pub const DEFAULT_RIDGE: f64 = 1e-2;

/// Affine map `y ↦ A y + b` in compressed space.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearCalibrator<T> {
    pub dim: usize,
    /// Row-major `dim × dim`; row `i` produces output `i`.
    pub matrix: Vec<T>,
    pub intercept: Vec<T>,
    pub ridge: T,
}

impl<T: Real> LinearCalibrator<T> {
    pub fn identity(dim: usize) -> Self {
        let mut matrix = vec![T::zero(); dim * dim];
        (0..dim).for_each(|i| matrix[i * dim + i] = T::one());
        LinearCalibrator { dim, matrix, intercept: vec![T::zero(); dim], ridge: T::zero() }
    }

    pub fn apply(&self, y: &[T]) -> Vec<T> {
        assert_eq!(y.len(), self.dim, "calibrator input width");
        self.matrix
            .chunks_exact(self.dim)
            .zip(&self.intercept)
            .map(|(row, b)| row.iter().zip(y).map(|(a, v)| *a * *v).sum::<T>() + *b)
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.matrix.iter().chain(&self.intercept).all(|v| v.is_finite())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_f64_file(&dir.join("matrix.f64"), self.matrix.iter().map(|v| v.as_f64()))?;
        write_f64_file(&dir.join("intercept.f64"), self.intercept.iter().map(|v| v.as_f64()))?;
        write_json(&dir.join("calibrator.json"), &CalibratorManifest { format_version: 1, dim: self.dim, ridge: self.ridge.as_f64() })
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let m: CalibratorManifest = read_json(&dir.join("calibrator.json"))?;
        let matrix = read_f64_file(&dir.join("matrix.f64"))?;
        let intercept = read_f64_file(&dir.join("intercept.f64"))?;
        if m.format_version != 1 || matrix.len() != m.dim * m.dim || intercept.len() != m.dim {
            return Err(Error::invalid(format!("{}: calibrator tensors do not match manifest", dir.display())));
        }
        Ok(LinearCalibrator {
            dim: m.dim,
            matrix: matrix.into_iter().map(T::lit).collect(),
            intercept: intercept.into_iter().map(T::lit).collect(),
            ridge: T::lit(m.ridge),
        })
    }
}

#[derive(Serialize, Deserialize)]
struct CalibratorManifest {
    format_version: u32,
    dim: usize,
    ridge: f64,
}

/// Minimizes `Σ‖y_exp − (A y_sim + b)‖² + λ‖A‖²_F`; the intercept is not penalized.
pub fn fit_linear<T: Real>(y_sim: &[Vec<T>], y_exp: &[Vec<T>], ridge: T) -> Result<LinearCalibrator<T>> {
    let n = y_sim.len();
    if n == 0 || n != y_exp.len() {
        return Err(Error::invalid(format!("fit_linear: {} simulated vs {} experimental rows", n, y_exp.len())));
    }
    if !(ridge >= T::zero()) || !ridge.is_finite() {
        return Err(Error::invalid("ridge weight must be finite and ≥ 0"));
    }
    let d = y_sim[0].len();
    if d == 0 || y_sim.iter().chain(y_exp).any(|r| r.len() != d) {
        return Err(Error::invalid("fit_linear: ragged rows"));
    }
    let inv_n = T::one() / T::from_usize(n).expect("n");
    let mean = |rows: &[Vec<T>]| -> Vec<T> {
        (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<T>() * inv_n).collect()
    };
    let xm = mean(y_sim);
    let ym = mean(y_exp);

    // G = Xcᵀ Xc + λI, R = Xcᵀ Yc.
    let mut g = vec![T::zero(); d * d];
    let mut r = vec![T::zero(); d * d];
    for (xs, ys) in y_sim.iter().zip(y_exp) {
        let xc: Vec<T> = xs.iter().zip(&xm).map(|(a, m)| *a - *m).collect();
        let yc: Vec<T> = ys.iter().zip(&ym).map(|(a, m)| *a - *m).collect();
        for i in 0..d {
            for j in 0..d {
                g[i * d + j] += xc[i] * xc[j];
                r[i * d + j] += xc[i] * yc[j];
            }
        }
    }
    (0..d).for_each(|i| g[i * d + i] += ridge);

    // W solves G W = R with W = Aᵀ.
    let w = cholesky_solve(&g, d, &r, d).map_err(|e| match e {
        Error::Singular(msg) => Error::Singular(format!(
            "{msg}; {n} training pairs cannot determine a {d}-dimensional linear map, set a ridge weight > 0"
        )),
        other => other,
    })?;
    let mut matrix = vec![T::zero(); d * d];
    for i in 0..d {
        for j in 0..d {
            matrix[i * d + j] = w[j * d + i];
        }
    }
    let intercept = (0..d)
        .map(|i| ym[i] - (0..d).map(|j| matrix[i * d + j] * xm[j]).sum::<T>())
        .collect();
    let cal = LinearCalibrator { dim: d, matrix, intercept, ridge };
    if !cal.is_finite() {
        return Err(Error::NonFinite("linear calibrator coefficients".into()));
    }
    Ok(cal)
}
