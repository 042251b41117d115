use std::collections::BTreeSet;

use rand::Rng;

use super::layer::{Layer, LayerSpec};
use crate::error::{Error, Result};
use crate::real::Real;

/// Which layers receive gradients and updates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TrainMask {
    All,
    Only(BTreeSet<String>),
}

impl TrainMask {
    pub fn only<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        TrainMask::Only(names.into_iter().map(Into::into).collect())
    }

    pub fn none() -> Self {
        TrainMask::Only(BTreeSet::new())
    }

    pub fn contains(&self, layer: &str) -> bool {
        match self {
            TrainMask::All => true,
            TrainMask::Only(set) => set.contains(layer),
        }
    }
}

/// A sequential stack of layers: the unit of persistence, gradients and
/// optimization. Layer names are unique within a set.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterSet<T> {
    pub name: String,
    layers: Vec<Layer<T>>,
}

/// Per-layer inputs and pre-activations recorded by [`ParameterSet::trace`].
#[derive(Clone, Debug)]
pub struct Trace<T> {
    pub batch: usize,
    inputs: Vec<Vec<T>>,
    pre: Vec<Vec<T>>,
    output: Vec<T>,
}

impl<T> Trace<T> {
    pub fn output(&self) -> &[T] {
        &self.output
    }

    pub fn into_output(self) -> Vec<T> {
        self.output
    }
}

impl<T: Real> ParameterSet<T> {
    /// Builds a set with freshly initialized weights.
    pub fn init<R: Rng + ?Sized>(name: impl Into<String>, specs: Vec<LayerSpec>, rng: &mut R) -> Result<Self> {
        Self::check_topology(&specs)?;
        let layers = specs.into_iter().map(|s| Layer::init(s, rng)).collect();
        Ok(ParameterSet { name: name.into(), layers })
    }

    pub fn from_layers(name: impl Into<String>, layers: Vec<Layer<T>>) -> Result<Self> {
        let specs: Vec<LayerSpec> = layers.iter().map(|l| l.spec.clone()).collect();
        Self::check_topology(&specs)?;
        for l in &layers {
            if l.weight.len() != l.spec.kind.weight_len() || l.bias.len() != l.spec.kind.bias_len() {
                return Err(Error::Shape {
                    layer: l.spec.name.clone(),
                    detail: format!(
                        "tensor lengths ({}, {}) do not match topology ({}, {})",
                        l.weight.len(),
                        l.bias.len(),
                        l.spec.kind.weight_len(),
                        l.spec.kind.bias_len()
                    ),
                });
            }
        }
        Ok(ParameterSet { name: name.into(), layers })
    }

    fn check_topology(specs: &[LayerSpec]) -> Result<()> {
        if specs.is_empty() {
            return Err(Error::invalid("a parameter set needs at least one layer"));
        }
        let mut seen = BTreeSet::new();
        for (i, s) in specs.iter().enumerate() {
            s.kind.validate().map_err(|detail| Error::Shape { layer: s.name.clone(), detail })?;
            if !seen.insert(s.name.as_str()) {
                return Err(Error::invalid(format!("duplicate layer name `{}`", s.name)));
            }
            if i > 0 && specs[i - 1].kind.fan_out() != s.kind.fan_in() {
                return Err(Error::Shape {
                    layer: s.name.clone(),
                    detail: format!(
                        "fan-in {} does not match previous layer `{}` fan-out {}",
                        s.kind.fan_in(),
                        specs[i - 1].name,
                        specs[i - 1].kind.fan_out()
                    ),
                });
            }
        }
        Ok(())
    }

    pub fn zeros_like(&self) -> Self {
        ParameterSet {
            name: self.name.clone(),
            layers: self.layers.iter().map(|l| Layer::zeros(l.spec.clone())).collect(),
        }
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn layer(&self, name: &str) -> Option<&Layer<T>> {
        self.layers.iter().find(|l| l.spec.name == name)
    }

    pub fn layer_mut(&mut self, name: &str) -> Option<&mut Layer<T>> {
        self.layers.iter_mut().find(|l| l.spec.name == name)
    }

    pub fn layer_names(&self) -> impl Iterator<Item = &str> {
        self.layers.iter().map(|l| l.spec.name.as_str())
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec.clone()).collect()
    }

    pub fn fan_in(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn fan_out(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    fn check_input(&self, input: &[T], n: usize) -> Result<()> {
        let want = n * self.fan_in();
        if input.len() != want || n == 0 {
            return Err(Error::Shape {
                layer: self.layers[0].spec.name.clone(),
                detail: format!(
                    "expected {} samples x fan-in {} = {} values, got {}",
                    n,
                    self.fan_in(),
                    want,
                    input.len()
                ),
            });
        }
        Ok(())
    }

    /// Evaluates the stack on `n` row-major samples.
    pub fn forward(&self, input: &[T], n: usize) -> Result<Vec<T>> {
        self.check_input(input, n)?;
        let mut x = input.to_vec();
        for layer in &self.layers {
            x = layer.forward_batch(&x, n).1;
        }
        Ok(x)
    }

    /// Forward pass that keeps what [`ParameterSet::backprop`] needs.
    pub fn trace(&self, input: &[T], n: usize) -> Result<Trace<T>> {
        self.check_input(input, n)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut x = input.to_vec();
        for layer in &self.layers {
            let (z, out) = layer.forward_batch(&x, n);
            inputs.push(x);
            pre.push(z);
            x = out;
        }
        Ok(Trace { batch: n, inputs, pre, output: x })
    }

    /// Reverse pass. Adds dL/dθ for masked-in layers into `grads` (which
    /// must share this set's topology) and optionally returns dL/d input.
    ///
    /// Layers outside `mask` contribute nothing to `grads`; their weights
    /// are still used to carry the signal further down.
    pub fn backprop(
        &self,
        trace: &Trace<T>,
        out_grad: &[T],
        mask: &TrainMask,
        grads: &mut ParameterSet<T>,
        want_input_grad: bool,
    ) -> Result<Option<Vec<T>>> {
        let n = trace.batch;
        if out_grad.len() != n * self.fan_out() {
            return Err(Error::Shape {
                layer: self.layers[self.layers.len() - 1].spec.name.clone(),
                detail: format!("upstream gradient has {} values, expected {}", out_grad.len(), n * self.fan_out()),
            });
        }
        if let Some(i) = out_grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!(
                "upstream gradient entry {} into `{}` of `{}` is {}",
                i,
                self.layers[self.layers.len() - 1].spec.name,
                self.name,
                out_grad[i]
            )));
        }
        if grads.layers.len() != self.layers.len() {
            return Err(Error::invalid("gradient buffer topology differs from parameter set"));
        }
        // Lowest layer that still needs a signal.
        let lowest_trainable = self.layers.iter().position(|l| mask.contains(&l.spec.name));
        let stop = if want_input_grad { Some(0) } else { lowest_trainable };
        let Some(stop) = stop else {
            return Ok(None);
        };
        let mut g = out_grad.to_vec();
        for idx in (stop..self.layers.len()).rev() {
            let layer = &self.layers[idx];
            let slot = mask.contains(&layer.spec.name).then(|| &mut grads.layers[idx]);
            let need_below = idx > stop || want_input_grad;
            let next = layer.backward_batch(&trace.inputs[idx], &trace.pre[idx], &g, n, slot, need_below);
            match next {
                Some(v) => g = v,
                None => break,
            }
        }
        Ok(if want_input_grad { Some(g) } else { None })
    }

    /// dL/dθ for a single evaluation: trace at `input`, then backprop `loss_grad`.
    pub fn gradient(&self, input: &[T], n: usize, loss_grad: &[T], mask: &TrainMask) -> Result<ParameterSet<T>> {
        let trace = self.trace(input, n)?;
        let mut grads = self.zeros_like();
        self.backprop(&trace, loss_grad, mask, &mut grads, false)?;
        Ok(grads)
    }

    /// Σθ² over masked-in tensors.
    pub fn sum_squares(&self, mask: &TrainMask) -> T {
        self.layers
            .iter()
            .filter(|l| mask.contains(&l.spec.name))
            .flat_map(|l| l.weight.iter().chain(&l.bias))
            .map(|&v| v * v)
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weight.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    /// Flattened parameter vector in layer order, weight before bias.
    pub fn flatten(&self) -> Vec<T> {
        self.layers.iter().flat_map(|l| l.weight.iter().chain(&l.bias).copied()).collect()
    }

    pub fn max_abs_diff(&self, other: &ParameterSet<T>) -> Option<T> {
        if self.specs() != other.specs() {
            return None;
        }
        Some(
            self.flatten()
                .iter()
                .zip(other.flatten())
                .map(|(a, b)| (*a - b).abs())
                .fold(T::zero(), |m, d| if d > m { d } else { m }),
        )
    }

    pub fn scale(&mut self, factor: T) {
        for l in &mut self.layers {
            l.weight.iter_mut().chain(l.bias.iter_mut()).for_each(|v| *v *= factor);
        }
    }

    pub fn add_assign(&mut self, other: &ParameterSet<T>) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight.iter_mut().zip(&b.weight).for_each(|(x, y)| *x += *y);
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += *y);
        }
    }

    /// Whether two sets hold bitwise identical tensors for `layer`.
    pub fn layer_bits_equal(&self, other: &ParameterSet<T>, layer: &str) -> bool {
        match (self.layer(layer), other.layer(layer)) {
            (Some(a), Some(b)) => {
                a.spec == b.spec && bits_equal(&a.weight, &b.weight) && bits_equal(&a.bias, &b.bias)
            }
            _ => false,
        }
    }

    /// Bitwise equality of every tensor.
    pub fn bits_equal(&self, other: &ParameterSet<T>) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().all(|l| other.layer_bits_equal(self, &l.spec.name))
    }

    /// Converts the scalar width (e.g. f64 -> f32).
    pub fn cast<U: Real>(&self) -> ParameterSet<U> {
        ParameterSet {
            name: self.name.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    spec: l.spec.clone(),
                    weight: l.weight.iter().map(|v| U::lit(v.as_f64())).collect(),
                    bias: l.bias.iter().map(|v| U::lit(v.as_f64())).collect(),
                })
                .collect(),
        }
    }
}

/// f32 -> f64 widening is exact, so comparing widened bit patterns is faithful.
fn bits_equal<T: Real>(a: &[T], b: &[T]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.as_f64().to_bits() == y.as_f64().to_bits())
}
