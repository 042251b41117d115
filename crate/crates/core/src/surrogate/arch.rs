use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{Activation, LayerSpec, ParameterSet};
use crate::error::{Error, Result};
use crate::toydata::N_SCALARS;

/// Layer plan for E, D, F and I.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    /// Surrogate input names, in column order.
    pub inputs: Vec<String>,
    pub side: usize,
    pub latent: usize,
    /// Channels of the two stride-2 encoder convolutions (mirrored in D).
    pub conv_channels: [usize; 2],
    pub scalar_branch: usize,
    /// Width of the encoder trunk and of the decoder's shared innermost layer.
    pub trunk: usize,
    pub fi_width: usize,
    /// Dense layers in F and in I.
    pub fi_depth: usize,
    pub hidden_activation: Activation,
}

impl Architecture {
    pub fn new(inputs: Vec<String>, side: usize) -> Self {
        Architecture {
            inputs,
            side,
            latent: 32,
            conv_channels: [16, 32],
            scalar_branch: 32,
            trunk: 64,
            fi_width: 64,
            fi_depth: 3,
            hidden_activation: Activation::LeakyRelu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs.is_empty() {
            return Err(Error::invalid("surrogate needs at least one input"));
        }
        if self.side < 4 || self.side % 4 != 0 {
            return Err(Error::invalid(format!("image side {} must be a positive multiple of 4", self.side)));
        }
        if self.latent == 0 || self.trunk == 0 || self.scalar_branch == 0 || self.fi_width == 0 {
            return Err(Error::invalid("layer widths must be positive"));
        }
        if self.conv_channels.contains(&0) {
            return Err(Error::invalid("conv channel counts must be positive"));
        }
        if self.fi_depth < 1 {
            return Err(Error::invalid("F and I need at least one layer"));
        }
        Ok(())
    }

    pub fn pixels(&self) -> usize {
        self.side * self.side
    }

    /// Flattened size of the coarsest convolutional feature map.
    pub fn feature_len(&self) -> usize {
        self.conv_channels[1] * (self.side / 4).pow(2)
    }

    pub fn n_inputs(&self) -> usize {
        self.inputs.len()
    }

    fn dense_stack(&self, prefix: &str, fan_in: usize, fan_out: usize) -> Vec<LayerSpec> {
        let act = self.hidden_activation;
        let mut specs = Vec::with_capacity(self.fi_depth);
        let mut width = fan_in;
        for i in 0..self.fi_depth {
            let last = i + 1 == self.fi_depth;
            let (name, out, a) =
                if last { (format!("{prefix}.out"), fan_out, Activation::Linear) } else { (format!("{prefix}.h{i}"), self.fi_width, act) };
            specs.push(LayerSpec::dense(name, width, out, a));
            width = out;
        }
        specs
    }

    /// E as (image branch, scalar branch, trunk).
    pub fn encoder_specs(&self) -> [Vec<LayerSpec>; 3] {
        let act = self.hidden_activation;
        let [c1, c2] = self.conv_channels;
        [
            vec![
                LayerSpec::conv_down("E.img.c1", 1, c1, self.side, act),
                LayerSpec::conv_down("E.img.c2", c1, c2, self.side / 2, act),
            ],
            vec![LayerSpec::dense("E.sca.d1", N_SCALARS, self.scalar_branch, act)],
            vec![
                LayerSpec::dense("E.trunk.d1", self.feature_len() + self.scalar_branch, self.trunk, act),
                LayerSpec::dense(ENCODER_INNERMOST, self.trunk, self.latent, Activation::Linear),
            ],
        ]
    }

    /// D as (shared innermost layer, scalar head, image head).
    pub fn decoder_specs(&self) -> [Vec<LayerSpec>; 3] {
        let act = self.hidden_activation;
        let [c1, c2] = self.conv_channels;
        [
            vec![LayerSpec::dense(DECODER_INNERMOST, self.latent, self.trunk, act)],
            vec![
                LayerSpec::dense("D.sca.d1", self.trunk, self.scalar_branch, act),
                LayerSpec::dense("D.sca.out", self.scalar_branch, N_SCALARS, Activation::Linear),
            ],
            vec![
                LayerSpec::dense("D.img.d1", self.trunk, self.feature_len(), act),
                LayerSpec::conv_up("D.img.u1", c2, c1, self.side / 4, act),
                LayerSpec::conv_up("D.img.u2", c1, 1, self.side / 2, Activation::Linear),
            ],
        ]
    }

    pub fn forward_specs(&self) -> Vec<LayerSpec> {
        self.dense_stack("F", self.n_inputs(), self.latent)
    }

    pub fn inverse_specs(&self) -> Vec<LayerSpec> {
        self.dense_stack("I", self.latent, self.n_inputs())
    }

    pub fn init_encoder<R: Rng>(&self, rng: &mut R) -> Result<Vec<ParameterSet<f64>>> {
        init_sets(["E.img", "E.sca", "E.trunk"], self.encoder_specs(), rng)
    }

    pub fn init_decoder<R: Rng>(&self, rng: &mut R) -> Result<Vec<ParameterSet<f64>>> {
        init_sets(["D.inner", "D.sca", "D.img"], self.decoder_specs(), rng)
    }

    pub fn manifest(&self) -> ArchManifest {
        ArchManifest {
            decoder_innermost: DECODER_INNERMOST.into(),
            encoder_innermost: ENCODER_INNERMOST.into(),
            forward_last: FORWARD_LAST.into(),
        }
    }
}

pub const DECODER_INNERMOST: &str = "D.inner.d1";
pub const ENCODER_INNERMOST: &str = "E.trunk.out";
pub const FORWARD_LAST: &str = "F.out";

/// Layer roles the calibration strategies refer to.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchManifest {
    pub decoder_innermost: String,
    pub encoder_innermost: String,
    pub forward_last: String,
}

fn init_sets<R: Rng>(names: [&str; 3], specs: [Vec<LayerSpec>; 3], rng: &mut R) -> Result<Vec<ParameterSet<f64>>> {
    names.into_iter().zip(specs).map(|(n, s)| ParameterSet::init(n, s, rng)).collect()
}
