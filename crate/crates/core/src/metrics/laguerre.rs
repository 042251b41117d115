use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Centering {
    /// Intensity-weighted centroid.
    #[default]
    Centroid,
    /// Geometric center of the pixel grid.
    Grid,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct BasisConfig {
    /// Gaussian waist in pixels; `None` means side / 4.
    pub waist: Option<f64>,
    #[serde(default)]
    pub centering: Centering,
}

/// The three-number image summary.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageDescriptors {
    /// Coefficient of mode (0, 0, cos).
    pub radius_mode: f64,
    /// Coefficient of mode (0, 2, cos); positive when wider than tall.
    pub shape_mode: f64,
    pub max_amplitude: f64,
}

/// Generalized Laguerre polynomial `L_p^α(t)` by the three-term recurrence.
pub fn generalized_laguerre<T: Real>(p: usize, alpha: T, t: T) -> T {
    let mut prev = T::one();
    if p == 0 {
        return prev;
    }
    let mut cur = T::one() + alpha - t;
    for k in 1..p {
        let kf = T::from_usize(k).expect("k");
        let next = ((T::lit(2.0) * kf + T::one() + alpha - t) * cur - (kf + alpha) * prev) / (kf + T::one());
        prev = cur;
        cur = next;
    }
    cur
}

fn center<T: Real>(image: &[T], side: usize, centering: Centering) -> Result<(T, T)> {
    let half = T::from_usize(side - 1).expect("side") / T::lit(2.0);
    match centering {
        Centering::Grid => Ok((half, half)),
        Centering::Centroid => {
            let (mut m, mut mx, mut my) = (T::zero(), T::zero(), T::zero());
            for row in 0..side {
                for col in 0..side {
                    let v = image[row * side + col];
                    m += v;
                    mx += v * T::from_usize(col).expect("col");
                    my += v * T::from_usize(row).expect("row");
                }
            }
            if !(m > T::zero()) {
                return Err(Error::invalid("image has no positive intensity"));
            }
            Ok((mx / m, my / m))
        }
    }
}

fn check_image<T: Real>(image: &[T]) -> Result<usize> {
    let side = (image.len() as f64).sqrt().round() as usize;
    if side == 0 || side * side != image.len() {
        return Err(Error::invalid(format!("image of {} pixels is not square", image.len())));
    }
    if image.iter().any(|v| !v.is_finite() || *v < T::zero()) {
        return Err(Error::invalid("image must be finite and non-negative"));
    }
    if image.iter().all(|v| *v == T::zero()) {
        return Err(Error::invalid("image is all zero"));
    }
    Ok(side)
}

/// Discrete inner product of a square image with the (p, m, cos) Gauss-Laguerre
/// function `L_p^{|m|}(r²/w²)·exp(−r²/(2w²))·cos(mθ)`. θ is measured from the
/// +column axis, so m = 2 weights horizontal extent positively.
pub fn gauss_laguerre_coefficient<T: Real>(image: &[T], p: usize, m: usize, cfg: &BasisConfig) -> Result<T> {
    let side = check_image(image)?;
    let w = T::lit(cfg.waist.unwrap_or(side as f64 / 4.0));
    if !(w > T::zero()) {
        return Err(Error::invalid("waist must be positive"));
    }
    let (cx, cy) = center(image, side, cfg.centering)?;
    let w2 = w * w;
    let alpha = T::from_usize(m).expect("m");
    let mut acc = T::zero();
    for row in 0..side {
        let dy = T::from_usize(row).expect("row") - cy;
        for col in 0..side {
            let dx = T::from_usize(col).expect("col") - cx;
            let r2 = dx * dx + dy * dy;
            let angular = if m == 0 {
                T::one()
            } else if r2 == T::zero() {
                T::zero()
            } else {
                (alpha * dy.atan2(dx)).cos()
            };
            let radial = generalized_laguerre(p, alpha, r2 / w2) * (-r2 / (T::lit(2.0) * w2)).exp();
            acc += image[row * side + col] * radial * angular;
        }
    }
    Ok(acc)
}

pub fn image_descriptors<T: Real>(image: &[T], cfg: &BasisConfig) -> Result<ImageDescriptors> {
    check_image(image)?;
    let max = image.iter().copied().fold(T::neg_infinity(), T::max);
    Ok(ImageDescriptors {
        radius_mode: gauss_laguerre_coefficient(image, 0, 0, cfg)?.as_f64(),
        shape_mode: gauss_laguerre_coefficient(image, 0, 2, cfg)?.as_f64(),
        max_amplitude: max.as_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob(side: usize, sx: f64, sy: f64) -> Vec<f64> {
        let c = (side as f64 - 1.0) / 2.0;
        (0..side * side)
            .map(|i| {
                let (r, col) = ((i / side) as f64, (i % side) as f64);
                (-0.5 * (((col - c) / sx).powi(2) + ((r - c) / sy).powi(2))).exp()
            })
            .collect()
    }

    fn rotate(img: &[f64], side: usize) -> Vec<f64> {
        let mut out = vec![0.0; img.len()];
        for r in 0..side {
            for c in 0..side {
                out[c * side + (side - 1 - r)] = img[r * side + c];
            }
        }
        out
    }

    #[test]
    fn laguerre_closed_forms() {
        for &t in &[0.0f64, 0.3, 1.7, 4.0] {
            let a = 2.0f64;
            assert!((generalized_laguerre(1, a, t) - (1.0 + a - t)).abs() < 1e-12);
            let l2 = 0.5 * (t * t - 2.0 * (a + 2.0) * t + (a + 1.0) * (a + 2.0));
            assert!((generalized_laguerre(2, a, t) - l2).abs() < 1e-12);
        }
    }

    #[test]
    fn circular_blob_has_no_shape() {
        let d = image_descriptors(&blob(32, 5.0, 5.0), &BasisConfig::default()).unwrap();
        assert!(d.shape_mode.abs() < 1e-6);
    }

    #[test]
    fn oblate_positive_prolate_negative() {
        let cfg = BasisConfig::default();
        let wide = blob(32, 7.0, 4.0);
        let tall = rotate(&wide, 32);
        let a = image_descriptors(&wide, &cfg).unwrap();
        let b = image_descriptors(&tall, &cfg).unwrap();
        assert!(a.shape_mode > 0.0 && b.shape_mode < 0.0);
        assert!((a.shape_mode + b.shape_mode).abs() < 1e-6);
        assert!((a.radius_mode - b.radius_mode).abs() < 1e-9);
        assert_eq!(a.max_amplitude, b.max_amplitude);
    }

    #[test]
    fn radius_grows_with_width() {
        let cfg = BasisConfig::default();
        let mut prev = 0.0;
        for k in 1..8 {
            let d = image_descriptors(&blob(32, k as f64, k as f64), &cfg).unwrap();
            assert!(d.radius_mode > prev);
            prev = d.radius_mode;
        }
    }

    #[test]
    fn zero_image_rejected() {
        assert!(image_descriptors(&[0.0; 16], &BasisConfig::default()).is_err());
        assert!(image_descriptors(&[1.0; 15], &BasisConfig::default()).is_err());
    }
}
