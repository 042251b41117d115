use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_INPUTS: usize = 9;
pub const N_SCALARS: usize = 10;

/// Input names in column order. Percent-valued inputs are stored in percent.
pub const INPUT_NAMES: [&str; N_INPUTS] = [
    "scale",
    "drive_asym_mode_1_0",
    "drive_asym_mode_2_0_t1",
    "drive_asym_mode_2_0_t2",
    "drive_trough_adj",
    "drive_power_adj",
    "drive_energy_adj",
    "preheat",
    "dopant_fraction",
];

/// Simulated [min, max] per input.
pub const INPUT_RANGES: [(f64, f64); N_INPUTS] = [
    (0.8, 1.6),
    (0.0, 1.0),
    (-6.0, 0.0),
    (-6.0, 6.0),
    (-0.2, 0.5),
    (-0.25, 0.5),
    (-0.25, 0.5),
    (0.0, 50.0),
    (0.1, 0.35),
];

pub const SCALAR_NAMES: [&str; N_SCALARS] = [
    "BT_GRH",
    "BT_SPIDER",
    "DSR_AV",
    "DT_TION_AV",
    "P0_HGXD_090-078_TI",
    "DT_VEL_NTOF_161-056",
    "LOG10_XRAY_YIELD_22KEV",
    "LOG10_DT_YIELD_AV",
    "BW_GRH",
    "BW_SPIDER",
];

pub const IDX_SCALE: usize = 0;
pub const IDX_ASYM_1_0: usize = 1;
pub const IDX_ASYM_T1: usize = 2;
pub const IDX_ASYM_T2: usize = 3;
pub const IDX_TROUGH: usize = 4;
pub const IDX_POWER: usize = 5;
pub const IDX_ENERGY: usize = 6;
pub const IDX_PREHEAT: usize = 7;
pub const IDX_DOPANT: usize = 8;

/// Index of the hot-spot radius scalar.
pub const SCALAR_RADIUS: usize = 4;
/// Index of the log X-ray yield scalar.
pub const SCALAR_XRAY: usize = 6;

pub fn input_index(name: &str) -> Result<usize> {
    INPUT_NAMES
        .iter()
        .position(|n| *n == name)
        .ok_or_else(|| Error::invalid(format!("unknown input `{name}`; expected one of {}", INPUT_NAMES.join(", "))))
}

/// Checks a value against its input range, with a little slack for round-off.
pub fn check_input(index: usize, value: f64) -> Result<()> {
    let (lo, hi) = INPUT_RANGES[index];
    let slack = 1e-12 * (hi - lo);
    if !value.is_finite() || value < lo - slack || value > hi + slack {
        return Err(Error::invalid(format!(
            "input `{}` = {value} outside [{lo}, {hi}]",
            INPUT_NAMES[index]
        )));
    }
    Ok(())
}

/// One point of the 9-dimensional design space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignPoint(pub [f64; N_INPUTS]);

impl DesignPoint {
    pub fn new(values: [f64; N_INPUTS]) -> Result<Self> {
        let p = DesignPoint(values);
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        (0..N_INPUTS).try_for_each(|i| check_input(i, self.0[i]))
    }

    pub fn in_range(&self) -> bool {
        self.validate().is_ok()
    }

    /// Each component mapped linearly onto [-1, 1].
    pub fn unit(&self) -> [f64; N_INPUTS] {
        std::array::from_fn(|i| {
            let (lo, hi) = INPUT_RANGES[i];
            2.0 * (self.0[i] - lo) / (hi - lo) - 1.0
        })
    }

    pub fn get(&self, name: &str) -> Result<f64> {
        Ok(self.0[input_index(name)?])
    }
}

/// Scalars, image and per-scalar measurement errors for one shot or simulation.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiModalOutput {
    pub scalars: [f64; N_SCALARS],
    /// Row-major `side × side` intensities.
    pub image: Vec<f64>,
    pub sigma: [f64; N_SCALARS],
}

impl MultiModalOutput {
    pub fn side(&self) -> usize {
        (self.image.len() as f64).sqrt().round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.scalars.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("output scalars".into()));
        }
        if self.image.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("image intensities must be finite and non-negative"));
        }
        if let Some(i) = self.sigma.iter().position(|s| !(*s > 0.0)) {
            return Err(Error::invalid(format!("sigma of `{}` must be positive", SCALAR_NAMES[i])));
        }
        Ok(())
    }
}
