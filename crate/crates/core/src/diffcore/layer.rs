use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::real::{matmul_acc, matmul_nt_acc, matmul_tn_acc, Real};

/// Negative-side slope of the leaky rectifier.
pub const LEAKY_SLOPE: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Linear,
    LeakyRelu,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply<T: Real>(self, z: T) -> T {
        match self {
            Activation::Linear => z,
            Activation::LeakyRelu => {
                if z > T::zero() {
                    z
                } else {
                    z * T::lit(LEAKY_SLOPE)
                }
            }
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative with respect to the pre-activation.
    #[inline]
    pub fn derivative<T: Real>(self, z: T) -> T {
        match self {
            Activation::Linear => T::one(),
            Activation::LeakyRelu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::lit(LEAKY_SLOPE)
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                T::one() - t * t
            }
        }
    }
}

/// Geometry of a 2-D convolution window sweep.
///
/// For `ConvTranspose2d` the geometry describes the adjoint convolution:
/// `in_*` is the transposed layer's *output* grid and `out_*` its input.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Window {
    channels: usize,
    in_h: usize,
    in_w: usize,
    out_h: usize,
    out_w: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
}

impl Window {
    fn col_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Writes the patches of `image` (C x H x W) into `cols`, a
    /// `(C*k*k) x total_cols` row-major matrix, starting at column `col0`.
    fn im2col<T: Real>(&self, image: &[T], cols: &mut [T], total_cols: usize, col0: usize) {
        let k = self.kernel;
        for c in 0..self.channels {
            let plane = &image[c * self.in_h * self.in_w..(c + 1) * self.in_h * self.in_w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    let dst = &mut cols[row * total_cols + col0..row * total_cols + col0 + self.positions()];
                    for oy in 0..self.out_h {
                        let iy = (oy * self.stride + ky) as isize - self.padding as isize;
                        let line = &mut dst[oy * self.out_w..(oy + 1) * self.out_w];
                        if iy < 0 || iy >= self.in_h as isize {
                            line.iter_mut().for_each(|v| *v = T::zero());
                            continue;
                        }
                        let src = &plane[iy as usize * self.in_w..(iy as usize + 1) * self.in_w];
                        for (ox, v) in line.iter_mut().enumerate() {
                            let ix = (ox * self.stride + kx) as isize - self.padding as isize;
                            *v = if ix < 0 || ix >= self.in_w as isize {
                                T::zero()
                            } else {
                                src[ix as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`Window::im2col`]: scatters-and-adds columns back onto `image`.
    fn col2im<T: Real>(&self, cols: &[T], total_cols: usize, col0: usize, image: &mut [T]) {
        let k = self.kernel;
        for c in 0..self.channels {
            let plane = &mut image[c * self.in_h * self.in_w..(c + 1) * self.in_h * self.in_w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    let src = &cols[row * total_cols + col0..row * total_cols + col0 + self.positions()];
                    for oy in 0..self.out_h {
                        let iy = (oy * self.stride + ky) as isize - self.padding as isize;
                        if iy < 0 || iy >= self.in_h as isize {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * self.in_w..(iy as usize + 1) * self.in_w];
                        for ox in 0..self.out_w {
                            let ix = (ox * self.stride + kx) as isize - self.padding as isize;
                            if ix >= 0 && ix < self.in_w as isize {
                                dst[ix as usize] += src[oy * self.out_w + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Layer topology. Together with the activation it fixes every tensor shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerKind {
    Dense {
        fan_in: usize,
        fan_out: usize,
    },
    /// Input `in_channels x height x width`, weights `[out][in][k][k]`.
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        height: usize,
        width: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    /// Input `in_channels x height x width`, weights `[in][out][k][k]`.
    ConvTranspose2d {
        in_channels: usize,
        out_channels: usize,
        height: usize,
        width: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        output_padding: usize,
    },
}

impl LayerKind {
    pub fn fan_in(&self) -> usize {
        match *self {
            LayerKind::Dense { fan_in, .. } => fan_in,
            LayerKind::Conv2d { in_channels, height, width, .. }
            | LayerKind::ConvTranspose2d { in_channels, height, width, .. } => in_channels * height * width,
        }
    }

    pub fn fan_out(&self) -> usize {
        match *self {
            LayerKind::Dense { fan_out, .. } => fan_out,
            LayerKind::Conv2d { out_channels, .. } | LayerKind::ConvTranspose2d { out_channels, .. } => {
                let (h, w) = self.out_hw();
                out_channels * h * w
            }
        }
    }

    /// Output spatial size; `(1, 1)` for dense layers.
    pub fn out_hw(&self) -> (usize, usize) {
        match *self {
            LayerKind::Dense { .. } => (1, 1),
            LayerKind::Conv2d { height, width, kernel, stride, padding, .. } => (
                (height + 2 * padding).saturating_sub(kernel) / stride + 1,
                (width + 2 * padding).saturating_sub(kernel) / stride + 1,
            ),
            LayerKind::ConvTranspose2d { height, width, kernel, stride, padding, output_padding, .. } => (
                ((height - 1) * stride + kernel + output_padding).saturating_sub(2 * padding),
                ((width - 1) * stride + kernel + output_padding).saturating_sub(2 * padding),
            ),
        }
    }

    pub fn weight_len(&self) -> usize {
        match *self {
            LayerKind::Dense { fan_in, fan_out } => fan_in * fan_out,
            LayerKind::Conv2d { in_channels, out_channels, kernel, .. }
            | LayerKind::ConvTranspose2d { in_channels, out_channels, kernel, .. } => {
                in_channels * out_channels * kernel * kernel
            }
        }
    }

    pub fn bias_len(&self) -> usize {
        match *self {
            LayerKind::Dense { fan_out, .. } => fan_out,
            LayerKind::Conv2d { out_channels, .. } | LayerKind::ConvTranspose2d { out_channels, .. } => out_channels,
        }
    }

    /// Effective number of inputs feeding one output unit.
    fn receptive(&self) -> usize {
        match *self {
            LayerKind::Dense { fan_in, .. } => fan_in,
            LayerKind::Conv2d { in_channels, kernel, .. } => in_channels * kernel * kernel,
            LayerKind::ConvTranspose2d { in_channels, kernel, stride, .. } => {
                (in_channels * kernel * kernel / (stride * stride)).max(1)
            }
        }
    }

    pub(crate) fn validate(&self) -> Result<(), String> {
        match *self {
            LayerKind::Dense { fan_in, fan_out } => {
                if fan_in == 0 || fan_out == 0 {
                    return Err("dense layer needs non-zero fan-in and fan-out".into());
                }
            }
            LayerKind::Conv2d { in_channels, out_channels, height, width, kernel, stride, .. } => {
                if in_channels == 0 || out_channels == 0 || kernel == 0 || stride == 0 {
                    return Err("conv layer needs non-zero channels, kernel and stride".into());
                }
                if height == 0 || width == 0 {
                    return Err("conv layer needs a non-empty input grid".into());
                }
            }
            LayerKind::ConvTranspose2d {
                in_channels,
                out_channels,
                height,
                width,
                kernel,
                stride,
                output_padding,
                ..
            } => {
                if in_channels == 0 || out_channels == 0 || kernel == 0 || stride == 0 {
                    return Err("transposed conv needs non-zero channels, kernel and stride".into());
                }
                if height == 0 || width == 0 {
                    return Err("transposed conv needs a non-empty input grid".into());
                }
                if output_padding >= stride {
                    return Err("output padding must be smaller than the stride".into());
                }
            }
        }
        if self.fan_out() == 0 {
            return Err("layer produces an empty output".into());
        }
        Ok(())
    }

    fn window(&self) -> Option<Window> {
        match *self {
            LayerKind::Dense { .. } => None,
            LayerKind::Conv2d { in_channels, height, width, kernel, stride, padding, .. } => {
                let (out_h, out_w) = self.out_hw();
                Some(Window { channels: in_channels, in_h: height, in_w: width, out_h, out_w, kernel, stride, padding })
            }
            LayerKind::ConvTranspose2d { out_channels, height, width, kernel, stride, padding, .. } => {
                let (oh, ow) = self.out_hw();
                Some(Window {
                    channels: out_channels,
                    in_h: oh,
                    in_w: ow,
                    out_h: height,
                    out_w: width,
                    kernel,
                    stride,
                    padding,
                })
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: LayerKind,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn dense(name: impl Into<String>, fan_in: usize, fan_out: usize, activation: Activation) -> Self {
        LayerSpec { name: name.into(), kind: LayerKind::Dense { fan_in, fan_out }, activation }
    }

    /// Stride-2 "same" convolution with a 3x3 kernel: halves the grid.
    pub fn conv_down(name: impl Into<String>, in_channels: usize, out_channels: usize, side: usize, activation: Activation) -> Self {
        LayerSpec {
            name: name.into(),
            kind: LayerKind::Conv2d { in_channels, out_channels, height: side, width: side, kernel: 3, stride: 2, padding: 1 },
            activation,
        }
    }

    /// Stride-2 transposed convolution with a 4x4 kernel: doubles the grid.
    pub fn conv_up(name: impl Into<String>, in_channels: usize, out_channels: usize, side: usize, activation: Activation) -> Self {
        LayerSpec {
            name: name.into(),
            kind: LayerKind::ConvTranspose2d {
                in_channels,
                out_channels,
                height: side,
                width: side,
                kernel: 4,
                stride: 2,
                padding: 1,
                output_padding: 0,
            },
            activation,
        }
    }
}

/// One layer's parameters. Weight layouts are row-major as documented on [`LayerKind`].
#[derive(Clone, Debug, PartialEq)]
pub struct Layer<T> {
    pub spec: LayerSpec,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Layer<T> {
    pub fn zeros(spec: LayerSpec) -> Self {
        let weight = vec![T::zero(); spec.kind.weight_len()];
        let bias = vec![T::zero(); spec.kind.bias_len()];
        Layer { spec, weight, bias }
    }

    /// Uniform fan-in scaled initialization; biases start at zero.
    pub fn init<R: Rng + ?Sized>(spec: LayerSpec, rng: &mut R) -> Self {
        let mut layer = Self::zeros(spec);
        let gain = match layer.spec.activation {
            Activation::LeakyRelu => 6.0,
            Activation::Linear | Activation::Tanh => 3.0,
        };
        let bound = (gain / layer.spec.kind.receptive() as f64).sqrt();
        for w in layer.weight.iter_mut() {
            *w = T::lit(rng.random_range(-bound..bound));
        }
        layer
    }

    pub fn fan_in(&self) -> usize {
        self.spec.kind.fan_in()
    }

    pub fn fan_out(&self) -> usize {
        self.spec.kind.fan_out()
    }

    /// Computes pre-activations and outputs for `n` samples stored row-major.
    pub fn forward_batch(&self, input: &[T], n: usize) -> (Vec<T>, Vec<T>) {
        let fan_out = self.fan_out();
        let mut pre = vec![T::zero(); n * fan_out];
        match &self.spec.kind {
            LayerKind::Dense { fan_in, fan_out } => {
                for row in pre.chunks_exact_mut(*fan_out) {
                    row.copy_from_slice(&self.bias);
                }
                matmul_nt_acc(n, *fan_in, *fan_out, input, &self.weight, &mut pre);
            }
            LayerKind::Conv2d { out_channels, .. } => {
                let win = self.spec.kind.window().expect("conv window");
                let positions = win.positions();
                let total = n * positions;
                let mut cols = vec![T::zero(); win.col_rows() * total];
                let in_len = self.fan_in();
                for s in 0..n {
                    win.im2col(&input[s * in_len..(s + 1) * in_len], &mut cols, total, s * positions);
                }
                let mut channel_major = vec![T::zero(); out_channels * total];
                matmul_acc(*out_channels, win.col_rows(), total, &self.weight, &cols, &mut channel_major);
                for c in 0..*out_channels {
                    for s in 0..n {
                        let src = &channel_major[c * total + s * positions..c * total + (s + 1) * positions];
                        let dst = &mut pre[s * fan_out + c * positions..s * fan_out + (c + 1) * positions];
                        for (d, v) in dst.iter_mut().zip(src) {
                            *d = *v + self.bias[c];
                        }
                    }
                }
            }
            LayerKind::ConvTranspose2d { in_channels, out_channels, height, width, .. } => {
                let win = self.spec.kind.window().expect("conv window");
                let in_pos = height * width;
                let total = n * in_pos;
                let x = sample_to_channel_major(input, n, *in_channels, in_pos);
                let mut cols = vec![T::zero(); win.col_rows() * total];
                matmul_tn_acc(win.col_rows(), *in_channels, total, &self.weight, &x, &mut cols);
                let out_pos = fan_out / out_channels;
                for s in 0..n {
                    let img = &mut pre[s * fan_out..(s + 1) * fan_out];
                    win.col2im(&cols, total, s * in_pos, img);
                    for c in 0..*out_channels {
                        for v in &mut img[c * out_pos..(c + 1) * out_pos] {
                            *v += self.bias[c];
                        }
                    }
                }
            }
        }
        let act = self.spec.activation;
        let out = match act {
            Activation::Linear => pre.clone(),
            _ => pre.iter().map(|&z| act.apply(z)).collect(),
        };
        (pre, out)
    }

    /// Backpropagates `out_grad` (dL/d output) through this layer.
    ///
    /// Accumulates parameter gradients into `grad` when given and returns
    /// dL/d input when `want_input` is set.
    pub fn backward_batch(
        &self,
        input: &[T],
        pre: &[T],
        out_grad: &[T],
        n: usize,
        grad: Option<&mut Layer<T>>,
        want_input: bool,
    ) -> Option<Vec<T>> {
        let act = self.spec.activation;
        let delta: Vec<T> = match act {
            Activation::Linear => out_grad.to_vec(),
            _ => out_grad.iter().zip(pre).map(|(&g, &z)| g * act.derivative(z)).collect(),
        };
        let fan_in = self.fan_in();
        let fan_out = self.fan_out();
        match &self.spec.kind {
            LayerKind::Dense { .. } => {
                if let Some(g) = grad {
                    matmul_tn_acc(fan_out, n, fan_in, &delta, input, &mut g.weight);
                    for row in delta.chunks_exact(fan_out) {
                        for (b, d) in g.bias.iter_mut().zip(row) {
                            *b += *d;
                        }
                    }
                }
                want_input.then(|| {
                    let mut dx = vec![T::zero(); n * fan_in];
                    matmul_acc(n, fan_out, fan_in, &delta, &self.weight, &mut dx);
                    dx
                })
            }
            LayerKind::Conv2d { out_channels, .. } => {
                let win = self.spec.kind.window().expect("conv window");
                let positions = win.positions();
                let total = n * positions;
                let d = sample_to_channel_major(&delta, n, *out_channels, positions);
                if let Some(g) = grad {
                    let mut cols = vec![T::zero(); win.col_rows() * total];
                    for s in 0..n {
                        win.im2col(&input[s * fan_in..(s + 1) * fan_in], &mut cols, total, s * positions);
                    }
                    matmul_nt_acc(*out_channels, total, win.col_rows(), &d, &cols, &mut g.weight);
                    for c in 0..*out_channels {
                        g.bias[c] += d[c * total..(c + 1) * total].iter().copied().sum::<T>();
                    }
                }
                want_input.then(|| {
                    let mut dcols = vec![T::zero(); win.col_rows() * total];
                    matmul_tn_acc(win.col_rows(), *out_channels, total, &self.weight, &d, &mut dcols);
                    let mut dx = vec![T::zero(); n * fan_in];
                    for s in 0..n {
                        win.col2im(&dcols, total, s * positions, &mut dx[s * fan_in..(s + 1) * fan_in]);
                    }
                    dx
                })
            }
            LayerKind::ConvTranspose2d { in_channels, out_channels, height, width, .. } => {
                let win = self.spec.kind.window().expect("conv window");
                let in_pos = height * width;
                let total = n * in_pos;
                let mut dcols = vec![T::zero(); win.col_rows() * total];
                for s in 0..n {
                    win.im2col(&delta[s * fan_out..(s + 1) * fan_out], &mut dcols, total, s * in_pos);
                }
                if let Some(g) = grad {
                    let x = sample_to_channel_major(input, n, *in_channels, in_pos);
                    matmul_nt_acc(*in_channels, total, win.col_rows(), &x, &dcols, &mut g.weight);
                    let out_pos = fan_out / out_channels;
                    for s in 0..n {
                        for c in 0..*out_channels {
                            let base = s * fan_out + c * out_pos;
                            g.bias[c] += delta[base..base + out_pos].iter().copied().sum::<T>();
                        }
                    }
                }
                want_input.then(|| {
                    let mut dx_cm = vec![T::zero(); in_channels * total];
                    matmul_acc(*in_channels, win.col_rows(), total, &self.weight, &dcols, &mut dx_cm);
                    channel_to_sample_major(&dx_cm, n, *in_channels, in_pos)
                })
            }
        }
    }
}

/// `[n][c][p]` -> `[c][n][p]`.
fn sample_to_channel_major<T: Real>(x: &[T], n: usize, channels: usize, positions: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for s in 0..n {
        for c in 0..channels {
            let src = &x[(s * channels + c) * positions..(s * channels + c + 1) * positions];
            out[(c * n + s) * positions..(c * n + s + 1) * positions].copy_from_slice(src);
        }
    }
    out
}

/// `[c][n][p]` -> `[n][c][p]`.
fn channel_to_sample_major<T: Real>(x: &[T], n: usize, channels: usize, positions: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for c in 0..channels {
        for s in 0..n {
            let src = &x[(c * n + s) * positions..(c * n + s + 1) * positions];
            out[(s * channels + c) * positions..(s * channels + c + 1) * positions].copy_from_slice(src);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct-loop convolution used as an independent reference.
    fn conv_reference(layer: &Layer<f64>, x: &[f64]) -> Vec<f64> {
        let LayerKind::Conv2d { in_channels, out_channels, height, width, kernel, stride, padding } = layer.spec.kind
        else {
            unreachable!()
        };
        let (oh, ow) = layer.spec.kind.out_hw();
        let mut out = vec![0.0; out_channels * oh * ow];
        for co in 0..out_channels {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = layer.bias[co];
                    for ci in 0..in_channels {
                        for ky in 0..kernel {
                            for kx in 0..kernel {
                                let iy = (oy * stride + ky) as isize - padding as isize;
                                let ix = (ox * stride + kx) as isize - padding as isize;
                                if iy < 0 || ix < 0 || iy >= height as isize || ix >= width as isize {
                                    continue;
                                }
                                let w = layer.weight[((co * in_channels + ci) * kernel + ky) * kernel + kx];
                                acc += w * x[(ci * height + iy as usize) * width + ix as usize];
                            }
                        }
                    }
                    out[(co * oh + oy) * ow + ox] = acc;
                }
            }
        }
        out
    }

    /// Scatter form of the transposed convolution.
    fn conv_t_reference(layer: &Layer<f64>, x: &[f64]) -> Vec<f64> {
        let LayerKind::ConvTranspose2d { in_channels, out_channels, height, width, kernel, stride, padding, .. } =
            layer.spec.kind
        else {
            unreachable!()
        };
        let (oh, ow) = layer.spec.kind.out_hw();
        let mut out = vec![0.0; out_channels * oh * ow];
        for co in 0..out_channels {
            for p in 0..oh * ow {
                out[co * oh * ow + p] = layer.bias[co];
            }
        }
        for ci in 0..in_channels {
            for iy in 0..height {
                for ix in 0..width {
                    let v = x[(ci * height + iy) * width + ix];
                    for co in 0..out_channels {
                        for ky in 0..kernel {
                            for kx in 0..kernel {
                                let oy = (iy * stride + ky) as isize - padding as isize;
                                let ox = (ix * stride + kx) as isize - padding as isize;
                                if oy < 0 || ox < 0 || oy >= oh as isize || ox >= ow as isize {
                                    continue;
                                }
                                let w = layer.weight[((ci * out_channels + co) * kernel + ky) * kernel + kx];
                                out[(co * oh + oy as usize) * ow + ox as usize] += w * v;
                            }
                        }
                    }
                }
            }
        }
        out
    }

    fn seeded(spec: LayerSpec) -> Layer<f64> {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut l = Layer::init(spec, &mut rng);
        for (i, b) in l.bias.iter_mut().enumerate() {
            *b = 0.1 * i as f64 - 0.05;
        }
        l
    }

    #[test]
    fn conv_matches_direct_loops() {
        let layer = seeded(LayerSpec::conv_down("c", 2, 3, 8, Activation::Linear));
        assert_eq!(layer.spec.kind.out_hw(), (4, 4));
        let n = 2;
        let x: Vec<f64> = (0..n * layer.fan_in()).map(|i| (i as f64 * 0.3).sin()).collect();
        let (pre, _) = layer.forward_batch(&x, n);
        for s in 0..n {
            let want = conv_reference(&layer, &x[s * layer.fan_in()..(s + 1) * layer.fan_in()]);
            for (a, b) in pre[s * layer.fan_out()..(s + 1) * layer.fan_out()].iter().zip(&want) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transposed_conv_matches_scatter_loops() {
        let layer = seeded(LayerSpec::conv_up("u", 3, 2, 4, Activation::Linear));
        assert_eq!(layer.spec.kind.out_hw(), (8, 8));
        let n = 3;
        let x: Vec<f64> = (0..n * layer.fan_in()).map(|i| (i as f64 * 0.17).cos()).collect();
        let (pre, _) = layer.forward_batch(&x, n);
        for s in 0..n {
            let want = conv_t_reference(&layer, &x[s * layer.fan_in()..(s + 1) * layer.fan_in()]);
            for (a, b) in pre[s * layer.fan_out()..(s + 1) * layer.fan_out()].iter().zip(&want) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn leaky_slope_on_negative_side() {
        assert_eq!(Activation::LeakyRelu.apply(-2.0f64), -2.0 * LEAKY_SLOPE);
        assert_eq!(Activation::LeakyRelu.derivative(3.0f64), 1.0);
        assert_eq!(Activation::Linear.derivative(-3.0f64), 1.0);
    }
}
