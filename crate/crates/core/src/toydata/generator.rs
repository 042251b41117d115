//! Deterministic stand-in simulator: smooth nonlinear scalars plus an
//! elliptical hot-spot image, all closed-form in the 9 inputs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::schema::*;
use super::sample::sample_inputs;
use crate::error::{Error, Result};

pub const GENERATOR_VERSION: &str = "toy-hotspot-1";

/// Generator coefficients that are worth exposing; everything else is fixed
/// in the formulas below and covered by `version`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Physics {
    pub version: String,
    /// Image side in pixels.
    pub side: usize,
    /// Strength of the preheat response in every output.
    pub preheat_coupling: f64,
    /// Log axis ratio per percent of combined mode-2,0 drive asymmetry.
    pub ellipticity_gain: f64,
    /// Hot-spot radius growth (in 1/32 of the image side) from zero to full preheat.
    pub preheat_radius_gain: f64,
    /// Measurement error as a fraction of the reference population std.
    pub sigma_fraction: f64,
    /// Size and seed of the reference population that sets the std.
    pub reference_size: usize,
    pub reference_seed: u64,
}

impl Default for Physics {
    fn default() -> Self {
        Physics {
            version: GENERATOR_VERSION.into(),
            side: 32,
            preheat_coupling: 0.4,
            ellipticity_gain: 0.14,
            preheat_radius_gain: 2.5,
            sigma_fraction: 0.05,
            reference_size: 20_000,
            reference_seed: 0x5eed,
        }
    }
}

impl Physics {
    pub fn validate(&self) -> Result<()> {
        if self.version != GENERATOR_VERSION {
            return Err(Error::invalid(format!(
                "generator version `{}` is not supported (this build ships `{GENERATOR_VERSION}`)",
                self.version
            )));
        }
        if !(8..=64).contains(&self.side) || self.side % 4 != 0 {
            return Err(Error::invalid(format!("image side must be a multiple of 4 in [8, 64], got {}", self.side)));
        }
        if !(self.sigma_fraction > 0.0) {
            return Err(Error::invalid("sigma fraction must be positive"));
        }
        if self.reference_size < 2 {
            return Err(Error::invalid("reference population needs at least 2 samples"));
        }
        Ok(())
    }
}

/// Combined mode-2,0 asymmetry, in percent.
fn combined_asym(x: &DesignPoint) -> f64 {
    0.7 * x.0[IDX_ASYM_T1] + x.0[IDX_ASYM_T2]
}

/// The 10 noise-free scalars.
pub fn scalar_response(x: &DesignPoint, physics: &Physics) -> [f64; N_SCALARS] {
    let u = x.unit();
    let sc = x.0[IDX_SCALE];
    let (usc, ua, ut2, utr, upw, uen) = (u[IDX_SCALE], u[IDX_ASYM_1_0], u[IDX_ASYM_T2], u[IDX_TROUGH], u[IDX_POWER], u[IDX_ENERGY]);
    let s = combined_asym(x);
    let asym = 0.3 * ua * ua + 0.5 * (s / 8.0).powi(2);
    let q = physics.preheat_coupling * x.0[IDX_PREHEAT] / 50.0;

    let bt = 8.0 + 0.25 * usc + 0.30 * (1.5 * upw - 0.5 * uen).tanh() + 0.15 * utr * uen
        + 0.12 * (2.2 * ua + utr).cos()
        + 0.10 * asym
        + 0.35 * q * (1.0 + 0.4 * upw);
    let bt_spider = bt + 0.05;
    let dsr = 4.0
        * (1.0 + 0.08 * usc)
        * (0.15 * (2.0 * utr + upw).sin() - 0.10 * uen * ua - 0.30 * q * (1.0 - 0.3 * utr) - 0.1 * asym).exp();
    let tion = 3.0
        * (1.0 + 0.1 * usc)
        * (0.12 * upw * upw - 0.10 * ua + 0.12 * (2.5 * uen - utr).sin() + 0.25 * q * (1.0 + 0.5 * uen)).exp();
    let radius = 30.0
        * (0.75 + 0.25 * sc)
        * (0.10 * (1.8 * upw + 0.6 * ua).cos() + 0.08 * utr * ut2 - 0.06 * uen + 0.25 * q + 0.08 * asym).exp();
    let vel = 380.0
        * (0.08 * upw + 0.07 * (2.2 * uen + 0.8 * utr).sin() - 0.06 * ua * upw - 0.12 * q * (1.0 + 0.5 * ua)
            - 0.03 * asym)
            .exp();
    let xray = 15.0 + 0.25 * usc + 0.4 * (uen + 0.5 * utr).tanh() - 0.15 * ua * ua + 0.2 * upw * utr + 0.3 * q * sc
        - 0.25 * asym;
    let yield_dt = 14.0 + 0.4 * sc.ln() - 0.3 * asym + 0.3 * (1.5 * upw - uen).cos() + 0.2 * ua * utr
        - 0.5 * q * sc * (1.0 + 0.3 * uen);
    let bw_grh = 150.0
        * (0.7 + 0.3 * sc)
        * (0.12 * (2.0 * ua - 1.2 * uen).sin() + 0.1 * utr * utr - 0.08 * upw + 0.25 * q * (1.0 - 0.4 * upw)
            + 0.1 * asym)
            .exp();
    let bw_spider = 0.9 * bw_grh * (0.08 * (2.0 * utr - upw).tanh() + 0.1 * ua * uen + 0.15 * q).exp();

    [bt, bt_spider, dsr, tion, radius, vel, xray, yield_dt, bw_grh, bw_spider]
}

/// Raw (unnormalized) hot-spot image; total intensity follows the X-ray yield.
pub fn hotspot_image(x: &DesignPoint, xray_log10: f64, physics: &Physics) -> Vec<f64> {
    let side = physics.side;
    let u = x.unit();
    let (utr, upw, uen) = (u[IDX_TROUGH], u[IDX_POWER], u[IDX_ENERGY]);
    let p = x.0[IDX_PREHEAT] / 50.0;
    let sc = x.0[IDX_SCALE];
    let r0 = side as f64 / 32.0
        * (4.0 + 3.0 * (sc - 0.8) / 0.8 + physics.preheat_radius_gain * p)
        * (0.08 * upw - 0.06 * uen + 0.05 * utr).exp();
    // Negative combined asymmetry flattens the hot spot (oblate).
    let half_log_ratio = -0.5 * physics.ellipticity_gain * combined_asym(x);
    let rx = r0 * half_log_ratio.exp();
    let ry = r0 * (-half_log_ratio).exp();
    let sharp = 1.1 + 0.1 * uen;
    let amplitude = 10f64.powf(xray_log10 - 15.0);
    let c = (side as f64 - 1.0) / 2.0;
    let mut img = Vec::with_capacity(side * side);
    for row in 0..side {
        let dy = (row as f64 - c) / ry;
        for col in 0..side {
            let dx = (col as f64 - c) / rx;
            let rho2 = dx * dx + dy * dy;
            img.push(amplitude * (-0.5 * rho2.powf(sharp)).exp());
        }
    }
    img
}

/// A `Physics` plus its derived measurement errors.
#[derive(Clone, Debug)]
pub struct Generator {
    physics: Physics,
    sigma: [f64; N_SCALARS],
}

impl Generator {
    pub fn new(physics: Physics) -> Result<Self> {
        physics.validate()?;
        let xs = sample_inputs(physics.reference_size, &[], physics.reference_seed)?;
        let n = xs.len() as f64;
        let mut mean = [0.0; N_SCALARS];
        let mut sq = [0.0; N_SCALARS];
        let rows: Vec<[f64; N_SCALARS]> = xs.iter().map(|x| scalar_response(x, &physics)).collect();
        for r in &rows {
            for k in 0..N_SCALARS {
                mean[k] += r[k] / n;
            }
        }
        for r in &rows {
            for k in 0..N_SCALARS {
                sq[k] += (r[k] - mean[k]).powi(2);
            }
        }
        let sigma = std::array::from_fn(|k| physics.sigma_fraction * (sq[k] / (n - 1.0)).sqrt());
        Ok(Generator { physics, sigma })
    }

    pub fn physics(&self) -> &Physics {
        &self.physics
    }

    pub fn side(&self) -> usize {
        self.physics.side
    }

    pub fn sigma(&self) -> [f64; N_SCALARS] {
        self.sigma
    }

    /// One simulation. With `noise_seed`, scalars get Gaussian noise at `sigma`.
    pub fn simulate(&self, x: &DesignPoint, noise_seed: Option<u64>) -> Result<MultiModalOutput> {
        x.validate()?;
        let mut scalars = scalar_response(x, &self.physics);
        let image = hotspot_image(x, scalars[SCALAR_XRAY], &self.physics);
        if let Some(seed) = noise_seed {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for (v, s) in scalars.iter_mut().zip(&self.sigma) {
                *v += Normal::new(0.0, *s).expect("positive sigma").sample(&mut rng);
            }
        }
        let out = MultiModalOutput { scalars, image, sigma: self.sigma };
        out.validate()?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mid() -> [f64; N_INPUTS] {
        std::array::from_fn(|i| 0.5 * (INPUT_RANGES[i].0 + INPUT_RANGES[i].1))
    }

    #[test]
    fn bang_times_differ_by_constant() {
        let g = Generator::new(Physics::default()).unwrap();
        for x in sample_inputs(200, &[], 3).unwrap() {
            let s = g.simulate(&x, None).unwrap().scalars;
            assert!((s[1] - s[0] - 0.05).abs() < 1e-12);
        }
    }

    #[test]
    fn radius_increases_with_scale() {
        let physics = Physics::default();
        let mut prev = f64::NEG_INFINITY;
        for i in 0..10 {
            let mut v = mid();
            v[IDX_SCALE] = 0.8 + 0.8 * i as f64 / 9.0;
            let r = scalar_response(&DesignPoint(v), &physics)[SCALAR_RADIUS];
            assert!(r > prev);
            prev = r;
        }
    }

    #[test]
    fn deterministic_with_and_without_noise() {
        let g = Generator::new(Physics::default()).unwrap();
        let x = DesignPoint(mid());
        assert_eq!(g.simulate(&x, None).unwrap(), g.simulate(&x, None).unwrap());
        assert_eq!(g.simulate(&x, Some(9)).unwrap(), g.simulate(&x, Some(9)).unwrap());
        assert_ne!(g.simulate(&x, Some(9)).unwrap().scalars, g.simulate(&x, None).unwrap().scalars);
    }

    #[test]
    fn out_of_range_rejected() {
        let g = Generator::new(Physics::default()).unwrap();
        let mut v = mid();
        v[IDX_PREHEAT] = 51.0;
        assert!(g.simulate(&DesignPoint(v), None).unwrap_err().is_validation());
    }

    #[test]
    fn image_mass_tracks_xray_yield() {
        let physics = Physics::default();
        let x = DesignPoint(mid());
        let a: f64 = hotspot_image(&x, 15.0, &physics).iter().sum();
        let b: f64 = hotspot_image(&x, 16.0, &physics).iter().sum();
        assert!((b / a - 10.0).abs() < 1e-9);
    }
}
