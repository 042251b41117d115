use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::{ParameterSet, TrainMask};
use crate::error::{Error, Result};
use crate::real::Real;

/// Step-size schedule over the iteration budget.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Schedule {
    #[default]
    Constant,
    /// Cosine decay from the base rate to `final_fraction` of it.
    Cosine { final_fraction: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    /// Weight of the λ·‖θ‖² penalty over trainable tensors.
    pub l2: f64,
    /// Mini-batch size; batches wrap over a reshuffled permutation each epoch.
    pub batch_size: usize,
    pub seed: u64,
    /// Layer names to update; `None` trains every layer.
    pub trainable: Option<Vec<String>>,
    #[serde(default)]
    pub schedule: Schedule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 1000,
            learning_rate: 1e-3,
            l2: 0.0,
            batch_size: 64,
            seed: 0,
            trainable: None,
            schedule: Schedule::Constant,
        }
    }
}

impl TrainConfig {
    pub fn mask(&self) -> TrainMask {
        match &self.trainable {
            None => TrainMask::All,
            Some(names) => TrainMask::only(names.iter().cloned()),
        }
    }

    /// Checks the config against the parameter sets it will drive.
    pub fn validate<T: Real>(&self, params: &[ParameterSet<T>]) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::invalid("iteration count must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::invalid(format!("L2 weight must be non-negative, got {}", self.l2)));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if let Schedule::Cosine { final_fraction } = self.schedule {
            if !(0.0..=1.0).contains(&final_fraction) {
                return Err(Error::invalid("cosine final fraction must lie in [0, 1]"));
            }
        }
        if let Some(names) = &self.trainable {
            for name in names {
                if !params.iter().any(|p| p.layer(name).is_some()) {
                    return Err(Error::invalid(format!("trainable layer `{name}` is not present in any parameter set")));
                }
            }
        }
        Ok(())
    }

    fn rate_at(&self, step: usize) -> f64 {
        match self.schedule {
            Schedule::Constant => self.learning_rate,
            Schedule::Cosine { final_fraction } => {
                let t = if self.iterations > 1 { step as f64 / (self.iterations - 1) as f64 } else { 1.0 };
                let c = 0.5 * (1.0 + (std::f64::consts::PI * t).cos());
                self.learning_rate * (final_fraction + (1.0 - final_fraction) * c)
            }
        }
    }
}

/// A differentiable training objective over indexed samples.
pub trait Objective<T: Real> {
    fn sample_count(&self) -> usize;

    /// Mean data loss over `batch`; adds its gradient into `grads`
    /// (one buffer per parameter set, same topology). Layers outside
    /// `mask` may be skipped.
    fn loss_and_grad(
        &self,
        params: &[ParameterSet<T>],
        batch: &[usize],
        mask: &TrainMask,
        grads: &mut [ParameterSet<T>],
    ) -> Result<T>;
}

/// Objective built from a closure; handy for toy problems and tests.
pub struct FnObjective<F> {
    pub samples: usize,
    pub f: F,
}

impl<T, F> Objective<T> for FnObjective<F>
where
    T: Real,
    F: Fn(&[ParameterSet<T>], &[usize], &TrainMask, &mut [ParameterSet<T>]) -> Result<T>,
{
    fn sample_count(&self) -> usize {
        self.samples
    }

    fn loss_and_grad(
        &self,
        params: &[ParameterSet<T>],
        batch: &[usize],
        mask: &TrainMask,
        grads: &mut [ParameterSet<T>],
    ) -> Result<T> {
        (self.f)(params, batch, mask, grads)
    }
}

/// Objective values (data + L2) per step; the last entry is evaluated
/// after the final update on the last batch.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTrace {
    pub values: Vec<f64>,
}

impl LossTrace {
    pub fn first(&self) -> Option<f64> {
        self.values.first().copied()
    }

    pub fn last(&self) -> Option<f64> {
        self.values.last().copied()
    }
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

struct Moments<T> {
    m: Vec<T>,
    v: Vec<T>,
}

/// Runs exactly `cfg.iterations` Adam steps on the masked-in tensors of `params`.
///
/// Frozen tensors are never written. Given the same seed, data and config the
/// result is bit-identical across runs.
pub fn optimize<T: Real, O: Objective<T> + ?Sized>(
    params: &mut [ParameterSet<T>],
    objective: &O,
    cfg: &TrainConfig,
) -> Result<LossTrace> {
    cfg.validate(params)?;
    let n = objective.sample_count();
    if n == 0 {
        return Err(Error::invalid("objective has no samples"));
    }
    let mask = cfg.mask();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let full_batch = cfg.batch_size >= n;
    if !full_batch {
        order.shuffle(&mut rng);
    }
    let mut cursor = 0usize;

    // Moment buffers for every (set, layer) slot, allocated only where trainable.
    let mut moments: Vec<Vec<Option<(Moments<T>, Moments<T>)>>> = params
        .iter()
        .map(|p| {
            p.layers()
                .iter()
                .map(|l| {
                    mask.contains(&l.spec.name).then(|| {
                        (
                            Moments { m: vec![T::zero(); l.weight.len()], v: vec![T::zero(); l.weight.len()] },
                            Moments { m: vec![T::zero(); l.bias.len()], v: vec![T::zero(); l.bias.len()] },
                        )
                    })
                })
                .collect()
        })
        .collect();

    let l2 = T::lit(cfg.l2);
    let two = T::lit(2.0);
    let mut trace = LossTrace { values: Vec::with_capacity(cfg.iterations + 1) };
    let mut batch: Vec<usize> = Vec::with_capacity(cfg.batch_size.min(n));

    let mut next_batch = |batch: &mut Vec<usize>, rng: &mut ChaCha8Rng| {
        batch.clear();
        if full_batch {
            batch.extend(0..n);
            return;
        }
        while batch.len() < cfg.batch_size {
            if cursor == n {
                order.shuffle(rng);
                cursor = 0;
            }
            batch.push(order[cursor]);
            cursor += 1;
        }
    };

    for step in 0..cfg.iterations {
        next_batch(&mut batch, &mut rng);
        let mut grads: Vec<ParameterSet<T>> = params.iter().map(|p| p.zeros_like()).collect();
        let data_loss = objective.loss_and_grad(params, &batch, &mask, &mut grads)?;
        let penalty: T = params.iter().map(|p| p.sum_squares(&mask)).sum::<T>() * l2;
        let loss = data_loss + penalty;
        if !loss.is_finite() {
            return Err(Error::Diverged { iteration: step, loss: loss.as_f64() });
        }
        trace.values.push(loss.as_f64());

        let rate = T::lit(cfg.rate_at(step));
        let t = (step + 1) as i32;
        let bias1 = T::one() - T::lit(BETA1).powi(t);
        let bias2 = T::one() - T::lit(BETA2).powi(t);
        for ((set, grad_set), slots) in params.iter_mut().zip(&grads).zip(moments.iter_mut()) {
            for ((layer, glayer), slot) in set.layers_mut().iter_mut().zip(grad_set.layers()).zip(slots.iter_mut()) {
                let Some((mw, mb)) = slot else { continue };
                adam_update(&mut layer.weight, &glayer.weight, mw, l2 * two, rate, bias1, bias2);
                adam_update(&mut layer.bias, &glayer.bias, mb, l2 * two, rate, bias1, bias2);
            }
        }
        if let Some(bad) = params.iter().find(|p| !p.all_finite()) {
            return Err(Error::NonFinite(format!("parameters of `{}` after step {}", bad.name, step)));
        }
    }

    // Objective after the final update, on the last batch.
    let mut scratch: Vec<ParameterSet<T>> = params.iter().map(|p| p.zeros_like()).collect();
    let data_loss = objective.loss_and_grad(params, &batch, &mask, &mut scratch)?;
    let penalty: T = params.iter().map(|p| p.sum_squares(&mask)).sum::<T>() * l2;
    let loss = data_loss + penalty;
    if !loss.is_finite() {
        return Err(Error::Diverged { iteration: cfg.iterations, loss: loss.as_f64() });
    }
    trace.values.push(loss.as_f64());
    Ok(trace)
}

fn adam_update<T: Real>(theta: &mut [T], grad: &[T], mom: &mut Moments<T>, decay: T, rate: T, bias1: T, bias2: T) {
    let b1 = T::lit(BETA1);
    let b2 = T::lit(BETA2);
    let eps = T::lit(EPS);
    for i in 0..theta.len() {
        let g = grad[i] + decay * theta[i];
        mom.m[i] = b1 * mom.m[i] + (T::one() - b1) * g;
        mom.v[i] = b2 * mom.v[i] + (T::one() - b2) * g * g;
        let m_hat = mom.m[i] / bias1;
        let v_hat = mom.v[i] / bias2;
        theta[i] -= rate * m_hat / (v_hat.sqrt() + eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::layer::{Activation, LayerSpec};
    use rand::SeedableRng;

    /// θ is the bias of a 1→1 dense layer fed with zero input.
    fn scalar_param(start: f64) -> ParameterSet<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p =
            ParameterSet::init("theta", vec![LayerSpec::dense("t", 1, 1, Activation::Linear)], &mut rng).unwrap();
        p.layers_mut()[0].weight[0] = 0.0;
        p.layers_mut()[0].bias[0] = start;
        p
    }

    fn quadratic() -> FnObjective<impl Fn(&[ParameterSet<f64>], &[usize], &TrainMask, &mut [ParameterSet<f64>]) -> Result<f64>>
    {
        FnObjective {
            samples: 1,
            f: |p: &[ParameterSet<f64>], _b: &[usize], _m: &TrainMask, g: &mut [ParameterSet<f64>]| {
                let theta = p[0].layers()[0].bias[0];
                g[0].layers_mut()[0].bias[0] += 2.0 * (theta - 3.0);
                Ok((theta - 3.0).powi(2))
            },
        }
    }

    #[test]
    fn convex_toy_converges() {
        let mut p = [scalar_param(0.0)];
        let cfg = TrainConfig { iterations: 500, learning_rate: 0.1, batch_size: 1, ..Default::default() };
        let trace = optimize(&mut p, &quadratic(), &cfg).unwrap();
        let theta = p[0].layers()[0].bias[0];
        assert!((theta - 3.0).abs() < 1e-3, "theta = {theta}");
        assert_eq!(trace.values.len(), 501);
    }

    #[test]
    fn zero_iterations_rejected() {
        let mut p = [scalar_param(0.0)];
        let cfg = TrainConfig { iterations: 0, ..Default::default() };
        assert!(optimize(&mut p, &quadratic(), &cfg).unwrap_err().is_validation());
    }

    #[test]
    fn strong_l2_pulls_toward_zero() {
        let mut p = [scalar_param(0.0)];
        let cfg = TrainConfig { iterations: 500, learning_rate: 0.1, l2: 1e3, batch_size: 1, ..Default::default() };
        optimize(&mut p, &quadratic(), &cfg).unwrap();
        let theta = p[0].layers()[0].bias[0];
        assert!(theta < 3.0);
        assert!(theta.abs() < 0.05, "theta = {theta}");
    }

    #[test]
    fn unknown_trainable_layer_rejected() {
        let mut p = [scalar_param(0.0)];
        let cfg = TrainConfig { trainable: Some(vec!["nope".into()]), ..Default::default() };
        let err = optimize(&mut p, &quadratic(), &cfg).unwrap_err();
        assert!(err.to_string().contains("nope"));
    }

    #[test]
    fn diverging_loss_reports_iteration() {
        let mut p = [scalar_param(0.0)];
        let obj = FnObjective {
            samples: 1,
            f: |_p: &[ParameterSet<f64>], _b: &[usize], _m: &TrainMask, _g: &mut [ParameterSet<f64>]| Ok(f64::INFINITY),
        };
        let cfg = TrainConfig { iterations: 3, ..Default::default() };
        match optimize(&mut p, &obj, &cfg).unwrap_err() {
            Error::Diverged { iteration, .. } => assert_eq!(iteration, 0),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn cosine_schedule_ends_at_fraction() {
        let cfg = TrainConfig {
            iterations: 11,
            learning_rate: 1.0,
            schedule: Schedule::Cosine { final_fraction: 0.1 },
            ..Default::default()
        };
        assert!((cfg.rate_at(0) - 1.0).abs() < 1e-12);
        assert!((cfg.rate_at(10) - 0.1).abs() < 1e-12);
    }
}
