//! Central finite-difference verification of analytic gradients.

use super::params::{ParameterSet, TrainMask};
use crate::error::Result;
use crate::real::Real;

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Denominator floor for the relative error of near-zero components.
const REL_FLOOR: f64 = 1e-6;

/// Components below this fraction of the largest one are judged against that
/// scale instead of their own; their differences are dominated by roundoff.
const SCALE_FLOOR: f64 = 1e-4;

/// Scalar loss on a network output, returning the value and dL/d output.
pub trait OutputLoss<T> {
    fn eval(&self, output: &[T]) -> (T, Vec<T>);
}

impl<T, F> OutputLoss<T> for F
where
    F: Fn(&[T]) -> (T, Vec<T>),
{
    fn eval(&self, output: &[T]) -> (T, Vec<T>) {
        self(output)
    }
}

/// Half the squared distance to `target`.
pub fn squared_loss<T: Real>(target: Vec<T>) -> impl Fn(&[T]) -> (T, Vec<T>) {
    move |out: &[T]| {
        let half = T::lit(0.5);
        let grad: Vec<T> = out.iter().zip(&target).map(|(o, t)| *o - *t).collect();
        let value = grad.iter().map(|g| *g * *g).sum::<T>() * half;
        (value, grad)
    }
}

/// Worst per-component relative error between backprop and central differences.
pub fn gradient_check<T: Real, L: OutputLoss<T>>(
    params: &ParameterSet<T>,
    input: &[T],
    batch: usize,
    loss: &L,
) -> Result<f64> {
    let out = params.forward(input, batch)?;
    let (_, dout) = loss.eval(&out);
    let analytic = params.gradient(input, batch, &dout, &TrainMask::All)?;
    compare_gradients(params, input, batch, loss, &analytic)
}

/// Compares a supplied gradient against central differences.
pub fn compare_gradients<T: Real, L: OutputLoss<T>>(
    params: &ParameterSet<T>,
    input: &[T],
    batch: usize,
    loss: &L,
    analytic: &ParameterSet<T>,
) -> Result<f64> {
    let h = T::lit(FD_STEP);
    let two_h = h + h;
    let mut probe = params.clone();
    let mut pairs = Vec::new();
    for li in 0..params.layers().len() {
        for tensor in 0..2 {
            let len = {
                let l = &params.layers()[li];
                if tensor == 0 { l.weight.len() } else { l.bias.len() }
            };
            for i in 0..len {
                let base = slot(&mut probe, li, tensor, i).to_owned();
                *slot(&mut probe, li, tensor, i) = base + h;
                let plus = loss.eval(&probe.forward(input, batch)?).0;
                *slot(&mut probe, li, tensor, i) = base - h;
                let minus = loss.eval(&probe.forward(input, batch)?).0;
                *slot(&mut probe, li, tensor, i) = base;

                let numeric = ((plus - minus) / two_h).as_f64();
                let a = {
                    let l = &analytic.layers()[li];
                    if tensor == 0 { l.weight[i] } else { l.bias[i] }
                }
                .as_f64();
                pairs.push((a, numeric));
            }
        }
    }
    let scale = pairs.iter().fold(0.0f64, |m, (a, n)| m.max(a.abs()).max(n.abs()));
    let floor = REL_FLOOR.max(SCALE_FLOOR * scale);
    Ok(pairs.iter().map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor)).fold(0.0, f64::max))
}

fn slot<T>(p: &mut ParameterSet<T>, layer: usize, tensor: usize, i: usize) -> &mut T
where
    T: Real,
{
    let l = &mut p.layers_mut()[layer];
    if tensor == 0 {
        &mut l.weight[i]
    } else {
        &mut l.bias[i]
    }
}
