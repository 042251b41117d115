use super::config::{LossMode, TLConfig};
use crate::error::{Error, Result};
use crate::toydata::{MultiModalOutput, NormStats, N_SCALARS};

/// Per-sample calibration objective
/// `‖img residual‖² + γ·‖scalar residual‖² + λ·θ²`.
///
/// Images are compared as given (unit-mean). Scalars are physical; in CHI2
/// mode the residual is divided by `obs.sigma`, in L2 mode it is min-max
/// normalized with `norm`. `theta_sq` is ‖θ‖² of the retrained tensors.
pub fn tl_loss(pred: &MultiModalOutput, obs: &MultiModalOutput, theta_sq: f64, cfg: &TLConfig, norm: &NormStats) -> Result<f64> {
    if pred.image.len() != obs.image.len() {
        return Err(Error::invalid("tl_loss: image sizes differ"));
    }
    let img: f64 = pred.image.iter().zip(&obs.image).map(|(p, o)| (p - o) * (p - o)).sum();
    let mut sca = 0.0;
    for k in 0..N_SCALARS {
        let r = pred.scalars[k] - obs.scalars[k];
        let scaled = match cfg.loss_mode {
            LossMode::Chi2 => {
                if !(obs.sigma[k] > 0.0) {
                    return Err(Error::invalid(format!("tl_loss: sigma[{k}] must be positive in chi2 mode")));
                }
                r / obs.sigma[k]
            }
            LossMode::L2 => r / norm.span(k),
        };
        sca += scaled * scaled;
    }
    Ok(img + cfg.gamma(pred.image.len()) * sca + cfg.l2 * theta_sq)
}

/// Batched data term (mean over samples) and its gradient w.r.t. normalized
/// decoder outputs.
pub(crate) struct DataTerm<'a> {
    pub obs_scalars: &'a [f64],
    pub obs_images: &'a [f64],
    pub sigma: &'a [f64],
    pub norm: &'a NormStats,
    pub gamma: f64,
    pub mode: LossMode,
}

impl DataTerm<'_> {
    /// `pred_scalars` are normalized; returns (loss, d_scalars, d_images).
    pub fn eval(&self, batch: &[usize], pred_scalars: &[f64], pred_images: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let n = batch.len() as f64;
        let p = pred_images.len() / batch.len();
        let mut loss = 0.0;
        let mut d_img = Vec::with_capacity(pred_images.len());
        for (b, &i) in batch.iter().enumerate() {
            let obs = &self.obs_images[i * p..(i + 1) * p];
            for (pr, o) in pred_images[b * p..(b + 1) * p].iter().zip(obs) {
                let r = pr - o;
                loss += r * r / n;
                d_img.push(2.0 * r / n);
            }
        }
        let mut d_sca = Vec::with_capacity(pred_scalars.len());
        for (b, &i) in batch.iter().enumerate() {
            for k in 0..N_SCALARS {
                let span = self.norm.span(k);
                let phys = pred_scalars[b * N_SCALARS + k] * span + self.norm.scalar_min[k];
                let r = phys - self.obs_scalars[i * N_SCALARS + k];
                // Residual in the loss's units, and d(residual)/d(normalized prediction).
                let (res, jac) = match self.mode {
                    LossMode::Chi2 => {
                        let s = self.sigma[i * N_SCALARS + k];
                        (r / s, span / s)
                    }
                    LossMode::L2 => (r / span, 1.0),
                };
                loss += self.gamma * res * res / n;
                d_sca.push(2.0 * self.gamma * res * jac / n);
            }
        }
        (loss, d_sca, d_img)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn out(scalars: [f64; N_SCALARS], image: Vec<f64>) -> MultiModalOutput {
        MultiModalOutput { scalars, image, sigma: [1.0; N_SCALARS] }
    }

    fn stats() -> NormStats {
        NormStats { scalar_min: [0.0; N_SCALARS], scalar_max: [2.0; N_SCALARS] }
    }

    #[test]
    fn perfect_fit_is_zero() {
        let a = out([1.0; N_SCALARS], vec![1.0; 4]);
        assert_eq!(tl_loss(&a, &a, 0.0, &TLConfig::default(), &stats()).unwrap(), 0.0);
    }

    #[test]
    fn chi2_arithmetic() {
        let cfg = TLConfig { gamma_sca: Some(1.0), l2: 0.0, ..Default::default() };
        let obs = out([0.0; N_SCALARS], vec![1.0; 4]);
        let mut s = [0.0; N_SCALARS];
        s[0] = 1.0;
        s[1] = 2.0;
        let pred = out(s, vec![1.0; 4]);
        assert_eq!(tl_loss(&pred, &obs, 0.0, &cfg, &stats()).unwrap(), 5.0);
    }

    #[test]
    fn zero_gamma_ignores_scalars() {
        let cfg = TLConfig { gamma_sca: Some(0.0), ..Default::default() };
        let obs = out([0.0; N_SCALARS], vec![1.0, 2.0, 0.5, 0.5]);
        let a = out([0.0; N_SCALARS], vec![1.5, 2.0, 0.5, 0.5]);
        let b = out([3.0; N_SCALARS], vec![1.5, 2.0, 0.5, 0.5]);
        let la = tl_loss(&a, &obs, 1.0, &cfg, &stats()).unwrap();
        assert_eq!(la, tl_loss(&b, &obs, 1.0, &cfg, &stats()).unwrap());
        assert!((la - (0.25 + 0.05)).abs() < 1e-15);
    }

    #[test]
    fn nonpositive_sigma_rejected() {
        let a = out([0.0; N_SCALARS], vec![1.0; 4]);
        let mut b = a.clone();
        b.sigma[3] = 0.0;
        assert!(tl_loss(&a, &b, 0.0, &TLConfig::default(), &stats()).is_err());
    }

    #[test]
    fn l2_mode_uses_normalized_units() {
        let cfg = TLConfig { loss_mode: LossMode::L2, l2: 0.0, ..Default::default() };
        let obs = out([0.0; N_SCALARS], vec![1.0; 4]);
        let mut s = [0.0; N_SCALARS];
        s[2] = 1.0;
        let pred = out(s, vec![1.0; 4]);
        assert!((tl_loss(&pred, &obs, 0.0, &cfg, &stats()).unwrap() - 0.25).abs() < 1e-15);
    }
}
