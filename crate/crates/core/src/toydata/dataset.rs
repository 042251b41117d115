use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generator::{Generator, Physics};
use super::schema::*;
use crate::error::{Error, Result};
use crate::seed;

/// Per-scalar min-max statistics fitted on a training set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub scalar_min: [f64; N_SCALARS],
    pub scalar_max: [f64; N_SCALARS],
}

impl NormStats {
    pub fn fit(scalars: &[[f64; N_SCALARS]]) -> Result<Self> {
        if scalars.is_empty() {
            return Err(Error::invalid("cannot fit normalization on an empty dataset"));
        }
        let mut lo = [f64::INFINITY; N_SCALARS];
        let mut hi = [f64::NEG_INFINITY; N_SCALARS];
        for row in scalars {
            for k in 0..N_SCALARS {
                lo[k] = lo[k].min(row[k]);
                hi[k] = hi[k].max(row[k]);
            }
        }
        for k in 0..N_SCALARS {
            if !(hi[k] > lo[k]) {
                return Err(Error::invalid(format!("scalar column `{}` is constant; cannot min-max normalize", SCALAR_NAMES[k])));
            }
        }
        Ok(NormStats { scalar_min: lo, scalar_max: hi })
    }

    pub fn span(&self, k: usize) -> f64 {
        self.scalar_max[k] - self.scalar_min[k]
    }

    pub fn forward(&self, row: &[f64; N_SCALARS]) -> [f64; N_SCALARS] {
        std::array::from_fn(|k| (row[k] - self.scalar_min[k]) / self.span(k))
    }

    pub fn inverse(&self, row: &[f64; N_SCALARS]) -> [f64; N_SCALARS] {
        std::array::from_fn(|k| row[k] * self.span(k) + self.scalar_min[k])
    }

    pub fn forward_sigma(&self, sigma: &[f64; N_SCALARS]) -> [f64; N_SCALARS] {
        std::array::from_fn(|k| sigma[k] / self.span(k))
    }

    pub fn inverse_sigma(&self, sigma: &[f64; N_SCALARS]) -> [f64; N_SCALARS] {
        std::array::from_fn(|k| sigma[k] * self.span(k))
    }
}

/// Divides an image by its own mean intensity.
pub fn normalize_image(image: &mut [f64]) -> Result<()> {
    let mean = image.iter().sum::<f64>() / image.len() as f64;
    if !(mean > 0.0 && mean.is_finite()) {
        return Err(Error::invalid(format!("image mean {mean} is not positive")));
    }
    image.iter_mut().for_each(|v| *v /= mean);
    Ok(())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub role: String,
    pub seed: Option<u64>,
    pub noise_seed: Option<u64>,
    pub generator: Option<Physics>,
    /// Present when scalars and sigmas are min-max normalized.
    pub normalization: Option<NormStats>,
}

/// A batch of inputs with their multi-modal outputs, stored column-friendly.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub side: usize,
    pub inputs: Vec<DesignPoint>,
    pub scalars: Vec<[f64; N_SCALARS]>,
    pub sigmas: Vec<[f64; N_SCALARS]>,
    /// `len × side × side`, row-major.
    pub images: Vec<f64>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn empty(side: usize) -> Self {
        Dataset { side, inputs: vec![], scalars: vec![], sigmas: vec![], images: vec![], meta: DatasetMeta::default() }
    }

    pub fn from_outputs(side: usize, inputs: Vec<DesignPoint>, outputs: Vec<MultiModalOutput>) -> Result<Self> {
        if inputs.len() != outputs.len() {
            return Err(Error::invalid("input and output counts differ"));
        }
        let mut d = Dataset::empty(side);
        d.images.reserve(outputs.len() * side * side);
        for (x, y) in inputs.into_iter().zip(outputs) {
            d.push(x, y)?;
        }
        Ok(d)
    }

    pub fn push(&mut self, x: DesignPoint, y: MultiModalOutput) -> Result<()> {
        if y.image.len() != self.pixels() {
            return Err(Error::invalid(format!("image has {} pixels, dataset expects {}", y.image.len(), self.pixels())));
        }
        self.inputs.push(x);
        self.scalars.push(y.scalars);
        self.sigmas.push(y.sigma);
        self.images.extend_from_slice(&y.image);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn pixels(&self) -> usize {
        self.side * self.side
    }

    pub fn image(&self, i: usize) -> &[f64] {
        let p = self.pixels();
        &self.images[i * p..(i + 1) * p]
    }

    pub fn output(&self, i: usize) -> MultiModalOutput {
        MultiModalOutput { scalars: self.scalars[i], image: self.image(i).to_vec(), sigma: self.sigmas[i] }
    }

    pub fn is_normalized(&self) -> bool {
        self.meta.normalization.is_some()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut d = Dataset::empty(self.side);
        d.meta = self.meta.clone();
        for &i in indices {
            d.inputs.push(self.inputs[i]);
            d.scalars.push(self.scalars[i]);
            d.sigmas.push(self.sigmas[i]);
            d.images.extend_from_slice(self.image(i));
        }
        d
    }

    /// Column `k` of the scalar table.
    pub fn scalar_column(&self, k: usize) -> Vec<f64> {
        self.scalars.iter().map(|r| r[k]).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.scalars.len() != n || self.sigmas.len() != n || self.images.len() != n * self.pixels() {
            return Err(Error::invalid("dataset columns have inconsistent lengths"));
        }
        if self.images.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("dataset images must be finite and non-negative"));
        }
        if self.sigmas.iter().flatten().any(|s| !(*s > 0.0)) {
            return Err(Error::invalid("dataset sigmas must be positive"));
        }
        Ok(())
    }
}

impl Generator {
    /// Simulates every input in parallel; assembly order follows `inputs`.
    pub fn dataset(&self, inputs: Vec<DesignPoint>, noise_seed: Option<u64>) -> Result<Dataset> {
        let outputs: Vec<MultiModalOutput> = inputs
            .par_iter()
            .enumerate()
            .map(|(i, x)| self.simulate(x, noise_seed.map(|s| seed::derive(s, i as u64))))
            .collect::<Result<_>>()?;
        let mut d = Dataset::from_outputs(self.side(), inputs, outputs)?;
        d.meta.generator = Some(self.physics().clone());
        d.meta.noise_seed = noise_seed;
        Ok(d)
    }
}

/// Min-max normalizes scalars (and sigmas) and mean-normalizes images.
///
/// With `stats` the given statistics are reused, otherwise they are fitted here.
pub fn normalize(data: &Dataset, stats: Option<&NormStats>) -> Result<(Dataset, NormStats)> {
    if data.is_normalized() {
        return Err(Error::invalid("dataset is already normalized"));
    }
    let stats = match stats {
        Some(s) => s.clone(),
        None => NormStats::fit(&data.scalars)?,
    };
    let mut out = data.clone();
    out.scalars = data.scalars.iter().map(|r| stats.forward(r)).collect();
    out.sigmas = data.sigmas.iter().map(|s| stats.forward_sigma(s)).collect();
    let p = data.pixels();
    for img in out.images.chunks_mut(p) {
        normalize_image(img)?;
    }
    out.meta.normalization = Some(stats.clone());
    Ok((out, stats))
}

/// Undoes the scalar and sigma normalization. Images keep unit mean.
pub fn denormalize(data: &Dataset, stats: &NormStats) -> Result<Dataset> {
    let mut out = data.clone();
    out.scalars = data.scalars.iter().map(|r| stats.inverse(r)).collect();
    out.sigmas = data.sigmas.iter().map(|s| stats.inverse_sigma(s)).collect();
    out.meta.normalization = None;
    Ok(out)
}
