use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::arch::Architecture;
use super::mmd::mmd_to_standard_normal;
use super::model::{ModelNorm, R2Table, SurrogateModel};
use super::nets::{decode_backprop, decode_trace, encode_backprop, encode_trace};
use crate::diffcore::{optimize, LossTrace, Objective, ParameterSet, Schedule, TrainConfig, TrainMask};
use crate::error::{Error, Result};
use crate::seed;
use crate::toydata::{normalize, Dataset, N_SCALARS};

type Ps = ParameterSet<f64>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurrogateTrainConfig {
    pub autoencoder: TrainConfig,
    pub forward_inverse: TrainConfig,
    /// Weight of the MMD penalty pulling latents toward N(0, I).
    pub latent_prior_weight: f64,
    /// Scalar reconstruction weight relative to the (per-pixel mean) image term.
    pub scalar_weight: f64,
    pub inverse_weight: f64,
    /// Weight of ‖I(F(x)) − x‖².
    pub cycle_x_weight: f64,
    /// Weight of ‖F(I(z)) − z‖².
    pub cycle_z_weight: f64,
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for SurrogateTrainConfig {
    fn default() -> Self {
        SurrogateTrainConfig {
            autoencoder: TrainConfig {
                iterations: 6000,
                learning_rate: 2e-3,
                batch_size: 64,
                schedule: Schedule::Cosine { final_fraction: 0.02 },
                ..Default::default()
            },
            forward_inverse: TrainConfig {
                iterations: 20000,
                learning_rate: 1e-3,
                batch_size: 128,
                schedule: Schedule::Cosine { final_fraction: 0.02 },
                ..Default::default()
            },
            latent_prior_weight: 0.01,
            scalar_weight: 30.0,
            inverse_weight: 1.0,
            cycle_x_weight: 0.1,
            cycle_z_weight: 0.1,
            holdout_fraction: 0.1,
            seed: 0,
        }
    }
}

impl SurrogateTrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("latent_prior_weight", self.latent_prior_weight),
            ("scalar_weight", self.scalar_weight),
            ("inverse_weight", self.inverse_weight),
            ("cycle_x_weight", self.cycle_x_weight),
            ("cycle_z_weight", self.cycle_z_weight),
        ] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::invalid(format!("{name} must be a non-negative number, got {w}")));
            }
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::invalid("holdout_fraction must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Row-major normalized training arrays.
struct Table<'a> {
    images: &'a [f64],
    scalars: Vec<f64>,
    pixels: usize,
}

impl<'a> Table<'a> {
    fn new(d: &'a Dataset) -> Self {
        Table { images: &d.images, scalars: d.scalars.iter().flatten().copied().collect(), pixels: d.pixels() }
    }

    fn gather(&self, batch: &[usize]) -> (Vec<f64>, Vec<f64>) {
        let mut img = Vec::with_capacity(batch.len() * self.pixels);
        let mut sca = Vec::with_capacity(batch.len() * N_SCALARS);
        for &i in batch {
            img.extend_from_slice(&self.images[i * self.pixels..(i + 1) * self.pixels]);
            sca.extend_from_slice(&self.scalars[i * N_SCALARS..(i + 1) * N_SCALARS]);
        }
        (img, sca)
    }
}

struct AutoencoderObjective<'a> {
    data: Table<'a>,
    n: usize,
    latent: usize,
    scalar_weight: f64,
    prior_weight: f64,
}

impl Objective<f64> for AutoencoderObjective<'_> {
    fn sample_count(&self) -> usize {
        self.n
    }

    fn loss_and_grad(&self, params: &[Ps], batch: &[usize], mask: &TrainMask, grads: &mut [Ps]) -> Result<f64> {
        let (enc, dec) = params.split_at(3);
        let (genc, gdec) = grads.split_at_mut(3);
        let n = batch.len();
        let (img, sca) = self.data.gather(batch);
        let et = encode_trace(enc, &img, &sca, n)?;
        let dt = decode_trace(dec, et.latent(), n)?;

        let pix = self.data.pixels as f64;
        let mut loss = 0.0;
        let d_img: Vec<f64> = dt
            .images()
            .iter()
            .zip(&img)
            .map(|(p, o)| {
                let r = p - o;
                loss += r * r / (n as f64 * pix);
                2.0 * r / (n as f64 * pix)
            })
            .collect();
        let w = self.scalar_weight / (n * N_SCALARS) as f64;
        let d_sca: Vec<f64> = dt
            .scalars()
            .iter()
            .zip(&sca)
            .map(|(p, o)| {
                let r = p - o;
                loss += w * r * r;
                2.0 * w * r
            })
            .collect();
        let mut dz = decode_backprop(dec, &dt, &d_sca, &d_img, mask, gdec, true)?.expect("latent gradient requested");
        if self.prior_weight > 0.0 {
            let (m, g) = mmd_to_standard_normal(et.latent(), n, self.latent);
            loss += self.prior_weight * m;
            dz.iter_mut().zip(g).for_each(|(a, b)| *a += self.prior_weight * b);
        }
        encode_backprop(enc, &et, &dz, mask, genc)?;
        Ok(loss)
    }
}

/// Fits E and D jointly on normalized simulations.
pub fn train_autoencoder(
    train: &Dataset,
    arch: &Architecture,
    cfg: &SurrogateTrainConfig,
) -> Result<(Vec<Ps>, Vec<Ps>, LossTrace)> {
    if !train.is_normalized() {
        return Err(Error::invalid("train_autoencoder expects a normalized dataset"));
    }
    arch.validate()?;
    cfg.validate()?;
    if train.side != arch.side {
        return Err(Error::invalid("dataset image side differs from the architecture"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive_named(cfg.seed, "init/autoencoder"));
    let mut params = arch.init_encoder(&mut rng)?;
    params.extend(arch.init_decoder(&mut rng)?);
    let objective = AutoencoderObjective {
        data: Table::new(train),
        n: train.len(),
        latent: arch.latent,
        scalar_weight: cfg.scalar_weight,
        prior_weight: cfg.latent_prior_weight,
    };
    let mut tc = cfg.autoencoder.clone();
    tc.seed = seed::derive_named(cfg.seed ^ tc.seed, "batches/autoencoder");
    let trace = optimize(&mut params, &objective, &tc)?;
    let dec = params.split_off(3);
    Ok((params, dec, trace))
}

/// Mean squared value of each term of the forward/inverse objective.
/// Cycle entries are `None` when their weight is zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiDecomposition {
    pub forward: f64,
    pub inverse: f64,
    pub cycle_x: Option<f64>,
    pub cycle_z: Option<f64>,
}

struct ForwardInverseObjective<'a> {
    x: &'a [f64],
    z: &'a [f64],
    d_in: usize,
    latent: usize,
    cfg: &'a SurrogateTrainConfig,
}

impl ForwardInverseObjective<'_> {
    fn gather(&self, batch: &[usize]) -> (Vec<f64>, Vec<f64>) {
        let x = batch.iter().flat_map(|&i| self.x[i * self.d_in..(i + 1) * self.d_in].iter().copied()).collect();
        let z = batch.iter().flat_map(|&i| self.z[i * self.latent..(i + 1) * self.latent].iter().copied()).collect();
        (x, z)
    }

    /// Loss, its decomposition, and (optionally) gradients.
    fn evaluate(&self, params: &[Ps], batch: &[usize], mask: &TrainMask, grads: Option<&mut [Ps]>) -> Result<(f64, FiDecomposition)> {
        let (f, i) = (&params[0], &params[1]);
        let n = batch.len();
        let (x, z) = self.gather(batch);
        let sq = |a: &[f64], b: &[f64], w: f64, len: usize| -> (f64, Vec<f64>) {
            let s = w / (n * len) as f64;
            let mut v = 0.0;
            let g = a
                .iter()
                .zip(b)
                .map(|(p, o)| {
                    let r = p - o;
                    v += r * r / (n * len) as f64;
                    2.0 * s * r
                })
                .collect();
            (v, g)
        };

        let ft = f.trace(&x, n)?;
        let it = i.trace(&z, n)?;
        let (lf, mut d_fx) = sq(ft.output(), &z, 1.0, self.latent);
        let (li, mut d_iz) = sq(it.output(), &x, self.cfg.inverse_weight, self.d_in);
        let mut total = lf + self.cfg.inverse_weight * li;
        let mut dec = FiDecomposition { forward: lf, inverse: li, cycle_x: None, cycle_z: None };

        let mut grads = grads;
        if self.cfg.cycle_x_weight > 0.0 {
            let ct = i.trace(ft.output(), n)?;
            let (l, g) = sq(ct.output(), &x, self.cfg.cycle_x_weight, self.d_in);
            total += self.cfg.cycle_x_weight * l;
            dec.cycle_x = Some(l);
            if let Some(gr) = grads.as_deref_mut() {
                let back = i.backprop(&ct, &g, mask, &mut gr[1], true)?.expect("input gradient");
                d_fx.iter_mut().zip(back).for_each(|(a, b)| *a += b);
            }
        }
        if self.cfg.cycle_z_weight > 0.0 {
            let ct = f.trace(it.output(), n)?;
            let (l, g) = sq(ct.output(), &z, self.cfg.cycle_z_weight, self.latent);
            total += self.cfg.cycle_z_weight * l;
            dec.cycle_z = Some(l);
            if let Some(gr) = grads.as_deref_mut() {
                let back = f.backprop(&ct, &g, mask, &mut gr[0], true)?.expect("input gradient");
                d_iz.iter_mut().zip(back).for_each(|(a, b)| *a += b);
            }
        }
        if let Some(gr) = grads {
            f.backprop(&ft, &d_fx, mask, &mut gr[0], false)?;
            i.backprop(&it, &d_iz, mask, &mut gr[1], false)?;
        }
        Ok((total, dec))
    }
}

impl Objective<f64> for ForwardInverseObjective<'_> {
    fn sample_count(&self) -> usize {
        self.x.len() / self.d_in
    }

    fn loss_and_grad(&self, params: &[Ps], batch: &[usize], mask: &TrainMask, grads: &mut [Ps]) -> Result<f64> {
        Ok(self.evaluate(params, batch, mask, Some(grads))?.0)
    }
}

/// Fits F: x → E(y) and I: E(y) → x with cycle terms; E stays frozen.
///
/// `x_norm` holds the normalized surrogate inputs (`n × d_in`), `z` the
/// latents E(y) (`n × latent`).
pub fn train_forward_inverse(
    x_norm: &[f64],
    z: &[f64],
    arch: &Architecture,
    cfg: &SurrogateTrainConfig,
) -> Result<(Ps, Ps, LossTrace, FiDecomposition)> {
    arch.validate()?;
    cfg.validate()?;
    let (d_in, latent) = (arch.n_inputs(), arch.latent);
    if x_norm.len() % d_in != 0 || z.len() % latent != 0 || x_norm.len() / d_in != z.len() / latent {
        return Err(Error::invalid("forward/inverse training arrays have inconsistent shapes"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive_named(cfg.seed, "init/forward_inverse"));
    let mut params = vec![
        ParameterSet::init("F", arch.forward_specs(), &mut rng)?,
        ParameterSet::init("I", arch.inverse_specs(), &mut rng)?,
    ];
    let objective = ForwardInverseObjective { x: x_norm, z, d_in, latent, cfg };
    let mut tc = cfg.forward_inverse.clone();
    tc.seed = seed::derive_named(cfg.seed ^ tc.seed, "batches/forward_inverse");
    let trace = optimize(&mut params, &objective, &tc)?;
    let all: Vec<usize> = (0..objective.sample_count()).collect();
    let (_, dec) = objective.evaluate(&params, &all, &TrainMask::none(), None)?;
    let i = params.pop().expect("I");
    let f = params.pop().expect("F");
    Ok((f, i, trace, dec))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub n_train: usize,
    pub n_heldout: usize,
    pub autoencoder_trace: LossTrace,
    pub forward_inverse_trace: LossTrace,
    pub decomposition: FiDecomposition,
    /// D(E(y)) on held-out simulations.
    pub heldout_reconstruction: Option<R2Table>,
    /// D(F(x)) on held-out simulations.
    pub heldout_forward: Option<R2Table>,
    /// RMS of I(F(x)) − x on held-out simulations, normalized input units.
    pub heldout_cycle_rms: Option<f64>,
}

/// Seeded shuffle split into (train, held-out) index lists.
pub fn holdout_split(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_hold = ((n as f64) * fraction).round() as usize;
    let hold = idx.split_off(n - n_hold.min(n));
    (idx, hold)
}

/// Full initial-surrogate fit on raw simulations, with held-out scoring.
pub fn train_surrogate(sims: &Dataset, arch: &Architecture, cfg: &SurrogateTrainConfig) -> Result<(SurrogateModel, TrainingReport)> {
    arch.validate()?;
    cfg.validate()?;
    if sims.is_normalized() {
        return Err(Error::invalid("train_surrogate expects raw simulations"));
    }
    let (train_idx, hold_idx) = holdout_split(sims.len(), cfg.holdout_fraction, seed::derive_named(cfg.seed, "holdout"));
    if train_idx.len() < 2 {
        return Err(Error::invalid("too few simulations left for training"));
    }
    let train_raw = sims.subset(&train_idx);
    let (train, stats) = normalize(&train_raw, None)?;
    let sigma = train_raw.sigmas[0];

    let (encoder, decoder, ae_trace) = train_autoencoder(&train, arch, cfg)?;
    let mut model = SurrogateModel {
        arch: arch.clone(),
        encoder,
        decoder,
        forward: ParameterSet::init("F", arch.forward_specs(), &mut ChaCha8Rng::seed_from_u64(0))?,
        inverse: ParameterSet::init("I", arch.inverse_specs(), &mut ChaCha8Rng::seed_from_u64(0))?,
        norm: ModelNorm { scalars: stats, sigma },
    };
    let z = model.encode_dataset(&train)?;
    let x = model.normalize_inputs(&train.inputs)?;
    let (f, i, fi_trace, decomposition) = train_forward_inverse(&x, &z, arch, cfg)?;
    model.forward = f;
    model.inverse = i;

    let mut report = TrainingReport {
        n_train: train_idx.len(),
        n_heldout: hold_idx.len(),
        autoencoder_trace: ae_trace,
        forward_inverse_trace: fi_trace,
        decomposition,
        heldout_reconstruction: None,
        heldout_forward: None,
        heldout_cycle_rms: None,
    };
    if hold_idx.len() >= 2 {
        let hold = sims.subset(&hold_idx);
        report.heldout_reconstruction = Some(model.evaluate_reconstruction_r2(&hold)?);
        report.heldout_forward = Some(model.evaluate_r2(&hold)?);
        let xh = model.normalize_inputs(&hold.inputs)?;
        let back = model.inverse.forward(&model.latents(&xh, hold.len())?, hold.len())?;
        let mse = back.iter().zip(&xh).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / xh.len() as f64;
        report.heldout_cycle_rms = Some(mse.sqrt());
    }
    Ok((model, report))
}
