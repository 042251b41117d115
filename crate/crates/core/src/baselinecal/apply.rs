use serde::{Deserialize, Serialize};

use super::compressor::{fit_compressor, OutputCompressor, DEFAULT_K_IMG};
use super::linear::{fit_linear, LinearCalibrator, DEFAULT_RIDGE};
use crate::error::{Error, Result};
use crate::surrogate::{Predictions, SurrogateModel};
use crate::toydata::{Dataset, DesignPoint, N_SCALARS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub k_img: usize,
    pub k_all: Option<usize>,
    pub ridge: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig { k_img: DEFAULT_K_IMG, k_all: None, ridge: DEFAULT_RIDGE }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_img == 0 {
            return Err(Error::invalid("k_img must be ≥ 1"));
        }
        if !(self.ridge >= 0.0) || !self.ridge.is_finite() {
            return Err(Error::invalid(format!("ridge weight must be finite and ≥ 0, got {}", self.ridge)));
        }
        Ok(())
    }
}

/// Fits the compressor to a population of simulated outputs.
pub fn fit_compressor_dataset(sims: &Dataset, cfg: &BaselineConfig) -> Result<OutputCompressor<f64>> {
    cfg.validate()?;
    if sims.is_normalized() {
        return Err(Error::invalid("compressor expects physical-unit outputs"));
    }
    let scalars: Vec<f64> = sims.scalars.iter().flatten().copied().collect();
    fit_compressor(&scalars, &sims.images, sims.len(), sims.side, cfg.k_img, cfg.k_all)
}

pub fn compress_predictions(comp: &OutputCompressor<f64>, pred: &Predictions) -> Result<Vec<Vec<f64>>> {
    (0..pred.len()).map(|i| comp.compress(&pred.scalars[i], pred.image(i))).collect()
}

pub fn compress_dataset(comp: &OutputCompressor<f64>, data: &Dataset) -> Result<Vec<Vec<f64>>> {
    (0..data.len()).map(|i| comp.compress(&data.scalars[i], data.image(i))).collect()
}

/// Decompresses rows; image intensities are clipped at zero.
pub fn decompress_rows(comp: &OutputCompressor<f64>, rows: &[Vec<f64>]) -> Result<Predictions> {
    let mut pred = Predictions { side: comp.side, scalars: Vec::with_capacity(rows.len()), images: Vec::new() };
    for y in rows {
        let (s, img) = comp.decompress(y)?;
        pred.scalars.push(s.try_into().map_err(|_| Error::invalid("compressor scalar count"))?);
        pred.images.extend(img.into_iter().map(|v| v.max(0.0)));
    }
    Ok(pred)
}

/// Fits L from the surrogate's predictions at the experiment inputs.
pub fn fit_baseline(
    model: &SurrogateModel,
    comp: &OutputCompressor<f64>,
    experiments: &Dataset,
    ridge: f64,
) -> Result<LinearCalibrator<f64>> {
    if experiments.is_empty() {
        return Err(Error::invalid("baseline needs at least one experiment"));
    }
    let sim = compress_predictions(comp, &model.predict_batch(&experiments.inputs)?)?;
    let exp = compress_dataset(comp, experiments)?;
    fit_linear(&sim, &exp, ridge)
}

/// decompress(L(compress(S(x)))).
pub fn apply_baseline(
    model: &SurrogateModel,
    comp: &OutputCompressor<f64>,
    cal: &LinearCalibrator<f64>,
    xs: &[DesignPoint],
) -> Result<Predictions> {
    apply_to_predictions(comp, cal, &model.predict_batch(xs)?)
}

pub fn apply_to_predictions(comp: &OutputCompressor<f64>, cal: &LinearCalibrator<f64>, pred: &Predictions) -> Result<Predictions> {
    if cal.dim != comp.output_dim() {
        return Err(Error::invalid(format!(
            "calibrator width {} does not match compressor output {}",
            cal.dim,
            comp.output_dim()
        )));
    }
    let rows: Vec<Vec<f64>> = compress_predictions(comp, pred)?.iter().map(|y| cal.apply(y)).collect();
    decompress_rows(comp, &rows)
}

/// Element-wise mean of equally shaped prediction batches.
pub fn mean_predictions(parts: &[Predictions]) -> Result<Predictions> {
    let first = parts.first().ok_or_else(|| Error::invalid("cannot average an empty list of predictions"))?;
    if parts.iter().any(|p| p.len() != first.len() || p.side != first.side || p.images.len() != first.images.len()) {
        return Err(Error::invalid("predictions to average differ in shape"));
    }
    let w = 1.0 / parts.len() as f64;
    let mut scalars = vec![[0.0; N_SCALARS]; first.len()];
    let mut images = vec![0.0; first.images.len()];
    for p in parts {
        for (acc, row) in scalars.iter_mut().zip(&p.scalars) {
            acc.iter_mut().zip(row).for_each(|(a, v)| *a += w * v);
        }
        images.iter_mut().zip(&p.images).for_each(|(a, v)| *a += w * v);
    }
    Ok(Predictions { side: first.side, scalars, images })
}

/// Mean of the individual baseline outputs.
pub fn bagged_predict(
    cals: &[LinearCalibrator<f64>],
    model: &SurrogateModel,
    comp: &OutputCompressor<f64>,
    xs: &[DesignPoint],
) -> Result<Predictions> {
    if cals.is_empty() {
        return Err(Error::invalid("bagged_predict needs at least one calibrator"));
    }
    let base = model.predict_batch(xs)?;
    let parts = cals.iter().map(|c| apply_to_predictions(comp, c, &base)).collect::<Result<Vec<_>>>()?;
    mean_predictions(&parts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(sign: f64) -> Predictions {
        Predictions {
            side: 2,
            scalars: vec![[sign; N_SCALARS], [2.0 * sign; N_SCALARS]],
            images: (0..8).map(|i| sign * i as f64).collect(),
        }
    }

    #[test]
    fn opposite_predictions_cancel() {
        let m = mean_predictions(&[pred(1.0), pred(-1.0)]).unwrap();
        assert!(m.scalars.iter().flatten().chain(&m.images).all(|v| *v == 0.0));
    }

    #[test]
    fn singleton_mean_is_identity() {
        assert_eq!(mean_predictions(&[pred(1.0)]).unwrap(), pred(1.0));
        assert!(mean_predictions(&[]).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(BaselineConfig::default().validate().is_ok());
        assert!(BaselineConfig { k_img: 0, ..Default::default() }.validate().is_err());
        assert!(BaselineConfig { ridge: -1.0, ..Default::default() }.validate().is_err());
    }
}
