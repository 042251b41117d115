use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::arch::Architecture;
use super::nets::{decode, encode};
use crate::diffcore::persist::{read_json, write_json};
use crate::diffcore::{load_parameters, save_parameters, ParameterSet};
use crate::error::{Error, Result};
use crate::metrics::r2;
use crate::toydata::{denormalize, input_index, Dataset, DesignPoint, MultiModalOutput, NormStats, INPUT_RANGES, N_SCALARS};

type Ps = ParameterSet<f64>;

/// Rows evaluated per forward pass during inference.
pub(crate) const EVAL_CHUNK: usize = 256;

/// Output normalization carried with a trained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelNorm {
    pub scalars: NormStats,
    /// Measurement errors of the training population, physical units.
    pub sigma: [f64; N_SCALARS],
}

/// Batch of surrogate outputs: physical-unit scalars and unit-mean images.
#[derive(Clone, Debug, PartialEq)]
pub struct Predictions {
    pub side: usize,
    pub scalars: Vec<[f64; N_SCALARS]>,
    pub images: Vec<f64>,
}

impl Predictions {
    pub fn len(&self) -> usize {
        self.scalars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scalars.is_empty()
    }

    pub fn pixels(&self) -> usize {
        self.side * self.side
    }

    pub fn image(&self, i: usize) -> &[f64] {
        let p = self.pixels();
        &self.images[i * p..(i + 1) * p]
    }

    pub fn output(&self, i: usize, sigma: [f64; N_SCALARS]) -> MultiModalOutput {
        MultiModalOutput { scalars: self.scalars[i], image: self.image(i).to_vec(), sigma }
    }

    pub fn scalar_column(&self, k: usize) -> Vec<f64> {
        self.scalars.iter().map(|r| r[k]).collect()
    }

    pub fn subset(&self, idx: &[usize]) -> Predictions {
        Predictions {
            side: self.side,
            scalars: idx.iter().map(|&i| self.scalars[i]).collect(),
            images: idx.iter().flat_map(|&i| self.image(i).iter().copied()).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.scalars.iter().flatten().chain(&self.images).all(|v| v.is_finite())
    }
}

/// Per-scalar R² plus one pooled pixel R².
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct R2Table {
    pub scalars: [f64; N_SCALARS],
    pub pixels: f64,
}

impl R2Table {
    pub fn min_scalar(&self) -> f64 {
        self.scalars.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Scores predictions against observations (physical scalars, unit-mean images).
pub fn r2_table(obs: &Dataset, pred: &Predictions) -> Result<R2Table> {
    if obs.len() != pred.len() || obs.side != pred.side {
        return Err(Error::invalid("r2_table: observation and prediction shapes differ"));
    }
    let mut scalars = [0.0; N_SCALARS];
    for (k, s) in scalars.iter_mut().enumerate() {
        *s = r2(&obs.scalar_column(k), &pred.scalar_column(k))?;
    }
    Ok(R2Table { scalars, pixels: r2(&obs.images, &pred.images)? })
}

#[derive(Clone, Debug)]
pub struct SurrogateModel {
    pub arch: Architecture,
    /// Image branch, scalar branch, trunk.
    pub encoder: Vec<Ps>,
    /// Shared innermost layer, scalar head, image head.
    pub decoder: Vec<Ps>,
    pub forward: Ps,
    pub inverse: Ps,
    pub norm: ModelNorm,
}

impl SurrogateModel {
    pub fn input_indices(&self) -> Result<Vec<usize>> {
        self.arch.inputs.iter().map(|n| input_index(n)).collect()
    }

    /// Selected inputs mapped onto [0, 1] by their simulated ranges.
    /// Out-of-range points are allowed (extrapolation) but logged.
    pub fn normalize_inputs(&self, xs: &[DesignPoint]) -> Result<Vec<f64>> {
        let idx = self.input_indices()?;
        let mut out = Vec::with_capacity(xs.len() * idx.len());
        for x in xs {
            if !x.in_range() {
                log::warn!("design point {:?} is outside the simulated ranges; extrapolating", x.0);
            }
            for &i in &idx {
                let (lo, hi) = INPUT_RANGES[i];
                out.push((x.0[i] - lo) / (hi - lo));
            }
        }
        Ok(out)
    }

    /// F(x) for normalized inputs.
    pub fn latents(&self, x_norm: &[f64], n: usize) -> Result<Vec<f64>> {
        self.forward.forward(x_norm, n)
    }

    /// D(z) in physical scalar units, image intensities clipped at zero.
    pub fn decode_latents(&self, decoder: &[Ps], z: &[f64], n: usize) -> Result<Predictions> {
        let latent = self.arch.latent;
        let mut pred = Predictions { side: self.arch.side, scalars: Vec::with_capacity(n), images: Vec::with_capacity(n * self.arch.pixels()) };
        for start in (0..n).step_by(EVAL_CHUNK) {
            let m = EVAL_CHUNK.min(n - start);
            let (s, img) = decode(decoder, &z[start * latent..(start + m) * latent], m)?;
            for row in s.chunks_exact(N_SCALARS) {
                let r: [f64; N_SCALARS] = row.try_into().expect("row");
                pred.scalars.push(self.norm.scalars.inverse(&r));
            }
            // The image head is linear; intensities are physical only when ≥ 0.
            pred.images.extend(img.into_iter().map(|v| v.max(0.0)));
        }
        Ok(pred)
    }

    /// S(x) = D(F(x)).
    pub fn predict_batch(&self, xs: &[DesignPoint]) -> Result<Predictions> {
        if xs.is_empty() {
            return Ok(Predictions { side: self.arch.side, scalars: vec![], images: vec![] });
        }
        let z = self.latents(&self.normalize_inputs(xs)?, xs.len())?;
        self.decode_latents(&self.decoder, &z, xs.len())
    }

    pub fn predict(&self, x: &DesignPoint) -> Result<MultiModalOutput> {
        Ok(self.predict_batch(std::slice::from_ref(x))?.output(0, self.norm.sigma))
    }

    /// E(y) for a dataset, chunked. Images are mean-normalized on the fly.
    pub fn encode_dataset(&self, data: &Dataset) -> Result<Vec<f64>> {
        let normed = self.normalized(data)?;
        let p = self.arch.pixels();
        let mut z = Vec::with_capacity(data.len() * self.arch.latent);
        for start in (0..data.len()).step_by(EVAL_CHUNK) {
            let m = EVAL_CHUNK.min(data.len() - start);
            let imgs = &normed.images[start * p..(start + m) * p];
            let sca: Vec<f64> = normed.scalars[start..start + m].iter().flatten().copied().collect();
            z.extend(encode(&self.encoder, imgs, &sca, m)?);
        }
        Ok(z)
    }

    /// D(E(y)).
    pub fn reconstruct(&self, data: &Dataset) -> Result<Predictions> {
        let z = self.encode_dataset(data)?;
        self.decode_latents(&self.decoder, &z, data.len())
    }

    /// Brings any dataset into this model's normalized space.
    pub fn normalized(&self, data: &Dataset) -> Result<Dataset> {
        if data.side != self.arch.side {
            return Err(Error::invalid(format!("dataset image side {} differs from model side {}", data.side, self.arch.side)));
        }
        let raw = self.physical(data)?;
        Ok(crate::toydata::normalize(&raw, Some(&self.norm.scalars))?.0)
    }

    /// Physical scalars with unit-mean images.
    pub fn physical(&self, data: &Dataset) -> Result<Dataset> {
        match &data.meta.normalization {
            Some(stats) => denormalize(data, stats),
            None => {
                let mut d = data.clone();
                for img in d.images.chunks_mut(data.pixels()) {
                    crate::toydata::normalize_image(img)?;
                }
                Ok(d)
            }
        }
    }

    /// Held-out score of S(x) against the dataset.
    pub fn evaluate_r2(&self, data: &Dataset) -> Result<R2Table> {
        if data.len() < 2 {
            return Err(Error::invalid("evaluate_r2 needs at least 2 samples"));
        }
        r2_table(&self.physical(data)?, &self.predict_batch(&data.inputs)?)
    }

    /// Held-out score of D(E(y)) against the dataset.
    pub fn evaluate_reconstruction_r2(&self, data: &Dataset) -> Result<R2Table> {
        if data.len() < 2 {
            return Err(Error::invalid("evaluate_reconstruction_r2 needs at least 2 samples"));
        }
        r2_table(&self.physical(data)?, &self.reconstruct(data)?)
    }

    pub fn all_sets(&self) -> impl Iterator<Item = &Ps> {
        self.encoder.iter().chain(&self.decoder).chain([&self.forward, &self.inverse])
    }

    /// Content hash over architecture, normalization and every tensor bit.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.arch).expect("arch serializes"));
        h.update(serde_json::to_vec(&self.norm).expect("norm serializes"));
        for set in self.all_sets() {
            h.update(set.name.as_bytes());
            for v in set.flatten() {
                h.update(v.to_le_bytes());
            }
        }
        hex(&h.finalize())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        for (sub, sets) in [("E", &self.encoder), ("D", &self.decoder)] {
            for set in sets.iter() {
                let leaf = set.name.split('.').nth(1).unwrap_or(&set.name).to_string();
                save_parameters(set, &dir.join(sub).join(leaf))?;
            }
        }
        save_parameters(&self.forward, &dir.join("F"))?;
        save_parameters(&self.inverse, &dir.join("I"))?;
        write_json(&dir.join("arch.json"), &ArchFile { arch: self.arch.clone(), manifest: self.arch.manifest() })?;
        write_json(&dir.join("norm_stats.json"), &self.norm)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let file: ArchFile = read_json(&dir.join("arch.json"))?;
        file.arch.validate()?;
        if file.manifest != file.arch.manifest() {
            return Err(Error::invalid("architecture manifest names do not match this build's layer plan"));
        }
        let load_group = |sub: &str, leaves: [&str; 3]| -> Result<Vec<Ps>> {
            leaves.iter().map(|l| load_parameters(&dir.join(sub).join(l))).collect()
        };
        let model = SurrogateModel {
            encoder: load_group("E", ["img", "sca", "trunk"])?,
            decoder: load_group("D", ["inner", "sca", "img"])?,
            forward: load_parameters(&dir.join("F"))?,
            inverse: load_parameters(&dir.join("I"))?,
            norm: read_json(&dir.join("norm_stats.json"))?,
            arch: file.arch,
        };
        model.check_topology()?;
        Ok(model)
    }

    /// Loaded tensors must match the declared architecture exactly.
    pub fn check_topology(&self) -> Result<()> {
        let enc = self.arch.encoder_specs();
        let dec = self.arch.decoder_specs();
        let expected = enc.iter().chain(&dec).cloned().chain([self.arch.forward_specs(), self.arch.inverse_specs()]);
        for (set, specs) in self.all_sets().zip(expected) {
            if set.specs() != specs {
                return Err(Error::Shape { layer: set.name.clone(), detail: "stored topology differs from arch.json".into() });
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct ArchFile {
    #[serde(flatten)]
    arch: Architecture,
    manifest: super::arch::ArchManifest,
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
