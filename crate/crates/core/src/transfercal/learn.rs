use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{Strategy, TLConfig};
use super::loss::DataTerm;
use crate::diffcore::persist::{read_json, write_json};
use crate::diffcore::{load_parameters, optimize, save_parameters, LossTrace, Objective, ParameterSet, TrainConfig, TrainMask};
use crate::error::{Error, Result};
use crate::surrogate::nets::{decode_backprop, decode_trace, encode_backprop, encode_trace};
use crate::surrogate::{Predictions, SurrogateModel};
use crate::toydata::{Dataset, DesignPoint, N_SCALARS};

type Ps = ParameterSet<f64>;

/// A surrogate with some layers refit to experiments.
#[derive(Clone, Debug)]
pub struct CalibratedModel {
    /// Base model with the retrained sets swapped in.
    pub model: SurrogateModel,
    pub base_hash: String,
    pub config: TLConfig,
    /// Names of every layer that was updated.
    pub retrained: Vec<String>,
    /// One loss trace per optimize call.
    pub traces: Vec<LossTrace>,
}

/// Path through the network the objective differentiates.
enum Route {
    /// D(z) with z = F(x) precomputed.
    Decoder { z: Vec<f64> },
    /// D(F(x)).
    Forward { x: Vec<f64> },
    /// D(E(y)).
    Autoencoder { images: Vec<f64>, scalars: Vec<f64> },
}

struct TlObjective<'a> {
    route: Route,
    data: DataTerm<'a>,
    n: usize,
    latent: usize,
    d_in: usize,
    pixels: usize,
}

fn rows(src: &[f64], batch: &[usize], width: usize) -> Vec<f64> {
    batch.iter().flat_map(|&i| src[i * width..(i + 1) * width].iter().copied()).collect()
}

impl Objective<f64> for TlObjective<'_> {
    fn sample_count(&self) -> usize {
        self.n
    }

    fn loss_and_grad(&self, params: &[Ps], batch: &[usize], mask: &TrainMask, grads: &mut [Ps]) -> Result<f64> {
        let n = batch.len();
        match &self.route {
            Route::Decoder { z } => {
                let dt = decode_trace(params, &rows(z, batch, self.latent), n)?;
                let (loss, ds, di) = self.data.eval(batch, dt.scalars(), dt.images());
                decode_backprop(params, &dt, &ds, &di, mask, grads, false)?;
                Ok(loss)
            }
            Route::Forward { x } => {
                let (f, dec) = params.split_at(1);
                let (gf, gdec) = grads.split_at_mut(1);
                let ft = f[0].trace(&rows(x, batch, self.d_in), n)?;
                let dt = decode_trace(dec, ft.output(), n)?;
                let (loss, ds, di) = self.data.eval(batch, dt.scalars(), dt.images());
                let dz = decode_backprop(dec, &dt, &ds, &di, mask, gdec, true)?.expect("latent gradient");
                f[0].backprop(&ft, &dz, mask, &mut gf[0], false)?;
                Ok(loss)
            }
            Route::Autoencoder { images, scalars } => {
                let (enc, dec) = params.split_at(3);
                let (genc, gdec) = grads.split_at_mut(3);
                let et = encode_trace(enc, &rows(images, batch, self.pixels), &rows(scalars, batch, N_SCALARS), n)?;
                let dt = decode_trace(dec, et.latent(), n)?;
                let (loss, ds, di) = self.data.eval(batch, dt.scalars(), dt.images());
                let dz = decode_backprop(dec, &dt, &ds, &di, mask, gdec, true)?.expect("latent gradient");
                encode_backprop(enc, &et, &dz, mask, genc)?;
                Ok(loss)
            }
        }
    }
}

/// Layers each strategy retrains, in stage order.
pub fn strategy_layers(base: &SurrogateModel, strategy: Strategy) -> Vec<Vec<String>> {
    let m = base.arch.manifest();
    match strategy {
        Strategy::ForwardTail => vec![vec![m.forward_last]],
        Strategy::AeCoresThenForwardTail => vec![vec![m.encoder_innermost, m.decoder_innermost], vec![m.forward_last]],
        Strategy::DecoderInnermost => vec![vec![m.decoder_innermost]],
    }
}

fn check_layers(base: &SurrogateModel, names: &[String]) -> Result<()> {
    for name in names {
        if !base.all_sets().any(|s| s.layer(name).is_some()) {
            return Err(Error::invalid(format!("strategy layer `{name}` is not in the model")));
        }
    }
    Ok(())
}

/// Refits the strategy's layers to the training experiments.
pub fn transfer_learn(base: &SurrogateModel, exp_train: &Dataset, cfg: &TLConfig) -> Result<CalibratedModel> {
    cfg.validate()?;
    if exp_train.is_empty() {
        return Err(Error::invalid("transfer learning needs at least one experiment"));
    }
    let stages = strategy_layers(base, cfg.strategy);
    for s in &stages {
        check_layers(base, s)?;
    }
    let mut cal = CalibratedModel {
        model: base.clone(),
        base_hash: base.content_hash(),
        config: cfg.clone(),
        retrained: stages.concat(),
        traces: Vec::new(),
    };
    if cfg.iterations == 0 {
        return Ok(cal);
    }

    let phys = base.physical(exp_train)?;
    let n = phys.len();
    let obs_scalars: Vec<f64> = phys.scalars.iter().flatten().copied().collect();
    let sigma: Vec<f64> = phys.sigmas.iter().flatten().copied().collect();
    let data = DataTerm {
        obs_scalars: &obs_scalars,
        obs_images: &phys.images,
        sigma: &sigma,
        norm: &base.norm.scalars,
        gamma: cfg.gamma(phys.pixels()),
        mode: cfg.loss_mode,
    };
    let x = base.normalize_inputs(&phys.inputs)?;
    let (latent, d_in, pixels) = (base.arch.latent, base.arch.n_inputs(), base.arch.pixels());

    for (stage_idx, layers) in stages.iter().enumerate() {
        let tc = TrainConfig {
            iterations: cfg.iterations,
            learning_rate: cfg.learning_rate,
            l2: cfg.l2,
            batch_size: n,
            seed: crate::seed::derive(cfg.seed, stage_idx as u64),
            trainable: Some(layers.clone()),
            schedule: Default::default(),
        };
        let m = &mut cal.model;
        let touches_encoder = layers.iter().any(|l| m.encoder.iter().any(|s| s.layer(l).is_some()));
        let touches_forward = layers.iter().any(|l| m.forward.layer(l).is_some());
        let trace = if touches_encoder {
            let normed = m.normalized(exp_train)?;
            let path = Route::Autoencoder {
                images: normed.images.clone(),
                scalars: normed.scalars.iter().flatten().copied().collect(),
            };
            let obj = TlObjective { route: path, data: data_ref(&data), n, latent, d_in, pixels };
            let mut params: Vec<Ps> = m.encoder.drain(..).chain(m.decoder.drain(..)).collect();
            let t = optimize(&mut params, &obj, &tc);
            m.decoder = params.split_off(3);
            m.encoder = params;
            t?
        } else if touches_forward {
            let obj = TlObjective { route: Route::Forward { x: x.clone() }, data: data_ref(&data), n, latent, d_in, pixels };
            let mut params: Vec<Ps> = std::iter::once(m.forward.clone()).chain(m.decoder.drain(..)).collect();
            let t = optimize(&mut params, &obj, &tc);
            m.decoder = params.split_off(1);
            m.forward = params.pop().expect("F");
            t?
        } else {
            let z = m.latents(&x, n)?;
            let obj = TlObjective { route: Route::Decoder { z }, data: data_ref(&data), n, latent, d_in, pixels };
            let mut params = std::mem::take(&mut m.decoder);
            let t = optimize(&mut params, &obj, &tc);
            m.decoder = params;
            t?
        };
        cal.traces.push(trace);
    }
    Ok(cal)
}

fn data_ref<'a>(d: &DataTerm<'a>) -> DataTerm<'a> {
    DataTerm { obs_scalars: d.obs_scalars, obs_images: d.obs_images, sigma: d.sigma, norm: d.norm, gamma: d.gamma, mode: d.mode }
}

impl CalibratedModel {
    /// S_TL(x) = D_TL(F(x)) (with F_TL for the forward strategies).
    pub fn predict_batch(&self, xs: &[DesignPoint]) -> Result<Predictions> {
        self.model.predict_batch(xs)
    }

    /// Parameter sets that contain a retrained layer.
    pub fn retrained_sets(&self) -> Vec<&Ps> {
        self.model.all_sets().filter(|s| self.retrained.iter().any(|l| s.layer(l).is_some())).collect()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for set in self.retrained_sets() {
            save_parameters(set, &dir.join("retrained").join(&set.name))?;
        }
        write_json(&dir.join("tlconfig.json"), &self.config)?;
        write_json(
            &dir.join("calibration.json"),
            &CalibrationFile { base_hash: self.base_hash.clone(), retrained: self.retrained.clone() },
        )?;
        let mut csv = String::from("stage,iteration,loss\n");
        for (s, t) in self.traces.iter().enumerate() {
            for (i, v) in t.values.iter().enumerate() {
                csv.push_str(&format!("{s},{i},{v}\n"));
            }
        }
        let p = dir.join("loss_trace.csv");
        std::fs::write(&p, csv).map_err(|e| Error::io(&p, e))
    }

    /// Restores a calibration on top of the base model it was trained from.
    pub fn load(dir: &Path, base: &SurrogateModel) -> Result<Self> {
        let file: CalibrationFile = read_json(&dir.join("calibration.json"))?;
        let config: TLConfig = read_json(&dir.join("tlconfig.json"))?;
        if file.base_hash != base.content_hash() {
            return Err(Error::invalid("calibration was trained on a different base model (hash mismatch)"));
        }
        let mut model = base.clone();
        let names: Vec<String> = model.all_sets().map(|s| s.name.clone()).collect();
        for name in names {
            let path = dir.join("retrained").join(&name);
            if !path.exists() {
                continue;
            }
            let set: Ps = load_parameters(&path)?;
            let slot = model
                .encoder
                .iter_mut()
                .chain(model.decoder.iter_mut())
                .chain([&mut model.forward, &mut model.inverse])
                .find(|s| s.name == name)
                .expect("name from model");
            if slot.specs() != set.specs() {
                return Err(Error::Shape { layer: name, detail: "retrained set topology differs from base".into() });
            }
            *slot = set;
        }
        let traces = read_traces(&dir.join("loss_trace.csv"))?;
        Ok(CalibratedModel { model, base_hash: file.base_hash, config, retrained: file.retrained, traces })
    }
}

#[derive(Serialize, Deserialize)]
struct CalibrationFile {
    base_hash: String,
    retrained: Vec<String>,
}

fn read_traces(path: &Path) -> Result<Vec<LossTrace>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut traces: Vec<LossTrace> = Vec::new();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::invalid(format!("{}: malformed line `{line}`", path.display()));
        if f.len() != 3 {
            return Err(bad());
        }
        let stage: usize = f[0].parse().map_err(|_| bad())?;
        let v: f64 = f[2].parse().map_err(|_| bad())?;
        while traces.len() <= stage {
            traces.push(LossTrace::default());
        }
        traces[stage].values.push(v);
    }
    Ok(traces)
}
