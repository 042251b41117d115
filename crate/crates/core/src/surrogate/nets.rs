//! Branch wiring of the encoder and decoder over plain sequential parameter sets.
//!
//! Encoder sets: `[image branch, scalar branch, trunk]`.
//! Decoder sets: `[shared innermost, scalar head, image head]`.

use crate::diffcore::{ParameterSet, Trace, TrainMask};
use crate::error::Result;

type Ps = ParameterSet<f64>;

pub(crate) fn any_trainable(p: &Ps, mask: &TrainMask) -> bool {
    p.layer_names().any(|n| mask.contains(n))
}

fn concat_rows(a: &[f64], la: usize, b: &[f64], lb: usize, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * (la + lb));
    for i in 0..n {
        out.extend_from_slice(&a[i * la..(i + 1) * la]);
        out.extend_from_slice(&b[i * lb..(i + 1) * lb]);
    }
    out
}

fn split_rows(g: &[f64], la: usize, lb: usize, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = Vec::with_capacity(n * la);
    let mut b = Vec::with_capacity(n * lb);
    for row in g.chunks_exact(la + lb).take(n) {
        a.extend_from_slice(&row[..la]);
        b.extend_from_slice(&row[la..]);
    }
    (a, b)
}

pub struct EncodeTrace {
    img: Trace<f64>,
    sca: Trace<f64>,
    trunk: Trace<f64>,
}

impl EncodeTrace {
    pub fn latent(&self) -> &[f64] {
        self.trunk.output()
    }
}

pub fn encode_trace(e: &[Ps], images: &[f64], scalars: &[f64], n: usize) -> Result<EncodeTrace> {
    let img = e[0].trace(images, n)?;
    let sca = e[1].trace(scalars, n)?;
    let joined = concat_rows(img.output(), e[0].fan_out(), sca.output(), e[1].fan_out(), n);
    let trunk = e[2].trace(&joined, n)?;
    Ok(EncodeTrace { img, sca, trunk })
}

pub fn encode(e: &[Ps], images: &[f64], scalars: &[f64], n: usize) -> Result<Vec<f64>> {
    let fi = e[0].forward(images, n)?;
    let fs = e[1].forward(scalars, n)?;
    e[2].forward(&concat_rows(&fi, e[0].fan_out(), &fs, e[1].fan_out(), n), n)
}

pub fn encode_backprop(e: &[Ps], tr: &EncodeTrace, dz: &[f64], mask: &TrainMask, grads: &mut [Ps]) -> Result<()> {
    let below = any_trainable(&e[0], mask) || any_trainable(&e[1], mask);
    let dj = e[2].backprop(&tr.trunk, dz, mask, &mut grads[2], below)?;
    if let Some(dj) = dj {
        let n = tr.trunk.batch;
        let (di, ds) = split_rows(&dj, e[0].fan_out(), e[1].fan_out(), n);
        e[0].backprop(&tr.img, &di, mask, &mut grads[0], false)?;
        e[1].backprop(&tr.sca, &ds, mask, &mut grads[1], false)?;
    }
    Ok(())
}

pub struct DecodeTrace {
    inner: Trace<f64>,
    sca: Trace<f64>,
    img: Trace<f64>,
}

impl DecodeTrace {
    pub fn scalars(&self) -> &[f64] {
        self.sca.output()
    }

    pub fn images(&self) -> &[f64] {
        self.img.output()
    }
}

pub fn decode_trace(d: &[Ps], z: &[f64], n: usize) -> Result<DecodeTrace> {
    let inner = d[0].trace(z, n)?;
    let sca = d[1].trace(inner.output(), n)?;
    let img = d[2].trace(inner.output(), n)?;
    Ok(DecodeTrace { inner, sca, img })
}

/// (scalars `n×10`, images `n×P`), both in normalized units.
pub fn decode(d: &[Ps], z: &[f64], n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let h = d[0].forward(z, n)?;
    Ok((d[1].forward(&h, n)?, d[2].forward(&h, n)?))
}

/// Backprop through both heads; returns dL/dz when asked.
pub fn decode_backprop(
    d: &[Ps],
    tr: &DecodeTrace,
    d_sca: &[f64],
    d_img: &[f64],
    mask: &TrainMask,
    grads: &mut [Ps],
    want_z: bool,
) -> Result<Option<Vec<f64>>> {
    let below = want_z || any_trainable(&d[0], mask);
    let hs = d[1].backprop(&tr.sca, d_sca, mask, &mut grads[1], below)?;
    let hi = d[2].backprop(&tr.img, d_img, mask, &mut grads[2], below)?;
    match (hs, hi) {
        (Some(mut dh), Some(dhi)) => {
            dh.iter_mut().zip(&dhi).for_each(|(a, b)| *a += b);
            d[0].backprop(&tr.inner, &dh, mask, &mut grads[0], want_z)
        }
        _ => Ok(None),
    }
}
