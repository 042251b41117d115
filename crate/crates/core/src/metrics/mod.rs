//! R², χ²/N, bulk shift and Gauss-Laguerre image descriptors.

mod laguerre;

pub use laguerre::{gauss_laguerre_coefficient, generalized_laguerre, image_descriptors, BasisConfig, Centering, ImageDescriptors};

use crate::error::{Error, Result};
use crate::real::Real;

/// Coefficient of determination `1 − SS_res/SS_tot`. Negative values are allowed.
pub fn r2<T: Real>(obs: &[T], pred: &[T]) -> Result<T> {
    if obs.len() != pred.len() {
        return Err(Error::invalid(format!("r2: {} observations vs {} predictions", obs.len(), pred.len())));
    }
    if obs.len() < 2 {
        return Err(Error::invalid("r2 needs at least 2 samples"));
    }
    let mean = obs.iter().copied().sum::<T>() / T::from_usize(obs.len()).expect("count");
    let ss_tot: T = obs.iter().map(|o| (*o - mean) * (*o - mean)).sum();
    if !(ss_tot > T::zero()) {
        return Err(Error::invalid("r2 undefined for constant observations"));
    }
    let ss_res: T = obs.iter().zip(pred).map(|(o, p)| (*o - *p) * (*o - *p)).sum();
    Ok(T::one() - ss_res / ss_tot)
}

/// Mean squared σ-scaled residual.
pub fn chi2n<T: Real>(obs: &[T], pred: &[T], sigma: &[T]) -> Result<T> {
    if obs.len() != pred.len() || obs.len() != sigma.len() {
        return Err(Error::invalid("chi2n: obs, pred and sigma lengths differ"));
    }
    if obs.is_empty() {
        return Err(Error::invalid("chi2n needs at least 1 sample"));
    }
    if sigma.iter().any(|s| !(*s > T::zero())) {
        return Err(Error::invalid("chi2n: sigma must be positive"));
    }
    let sum: T = obs.iter().zip(pred).zip(sigma).map(|((o, p), s)| ((*o - *p) / *s).powi(2)).sum();
    Ok(sum / T::from_usize(obs.len()).expect("count"))
}

/// `|mean(pred − obs)| / std(obs)`: the systematic offset in units of spread.
pub fn bulk_shift<T: Real>(obs: &[T], pred: &[T]) -> Result<T> {
    if obs.len() != pred.len() || obs.len() < 2 {
        return Err(Error::invalid("bulk_shift needs matching inputs with at least 2 samples"));
    }
    let n = T::from_usize(obs.len()).expect("count");
    let mean = obs.iter().copied().sum::<T>() / n;
    let var = obs.iter().map(|o| (*o - mean).powi(2)).sum::<T>() / (n - T::one());
    if !(var > T::zero()) {
        return Err(Error::invalid("bulk_shift undefined for constant observations"));
    }
    let shift = obs.iter().zip(pred).map(|(o, p)| *p - *o).sum::<T>() / n;
    Ok(shift.abs() / var.sqrt())
}
