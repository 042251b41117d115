use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which part of the surrogate is retrained on the experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Strategy {
    /// Last layer of F only.
    ForwardTail,
    /// Innermost encoder and decoder layers on the autoencoder path, then F's last layer.
    AeCoresThenForwardTail,
    /// The decoder's shared innermost layer only.
    DecoderInnermost,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "FORWARD_TAIL" | "A" => Ok(Strategy::ForwardTail),
            "AE_CORES_THEN_FORWARD_TAIL" | "B" => Ok(Strategy::AeCoresThenForwardTail),
            "DECODER_INNERMOST" | "C" => Ok(Strategy::DecoderInnermost),
            _ => Err(Error::invalid(format!(
                "unknown strategy `{s}` (expected FORWARD_TAIL, AE_CORES_THEN_FORWARD_TAIL or DECODER_INNERMOST)"
            ))),
        }
    }
}

/// Whether scalar residuals are divided by the measurement error.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossMode {
    /// Squared residuals of min-max normalized scalars.
    L2,
    /// Squared residuals over sigma, in physical units.
    Chi2,
}

impl std::str::FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l2" => Ok(LossMode::L2),
            "chi2" => Ok(LossMode::Chi2),
            _ => Err(Error::invalid(format!("unknown loss mode `{s}` (expected l2 or chi2)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TLConfig {
    pub strategy: Strategy,
    /// Steps per optimize call; 0 returns the base model unchanged.
    pub iterations: usize,
    pub learning_rate: f64,
    /// λ on ‖θ‖² of the retrained tensors.
    pub l2: f64,
    /// Scalar-term weight; `None` picks the per-mode default.
    pub gamma_sca: Option<f64>,
    pub loss_mode: LossMode,
    pub seed: u64,
}

impl Default for TLConfig {
    fn default() -> Self {
        TLConfig {
            strategy: Strategy::DecoderInnermost,
            iterations: 100,
            learning_rate: 3e-5,
            l2: 0.05,
            gamma_sca: None,
            loss_mode: LossMode::Chi2,
            seed: 0,
        }
    }
}

impl TLConfig {
    /// 1 in L2 mode; 0.01·pixels/10 in CHI2 mode.
    pub fn gamma(&self, pixels: usize) -> f64 {
        self.gamma_sca.unwrap_or(match self.loss_mode {
            LossMode::L2 => 1.0,
            LossMode::Chi2 => 0.01 * pixels as f64 / 10.0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("TL learning rate must be positive"));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::invalid("TL L2 weight must be non-negative"));
        }
        if let Some(g) = self.gamma_sca {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(Error::invalid("gamma_sca must be non-negative"));
            }
        }
        Ok(())
    }
}
