use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::generator::Generator;
use super::sample::{resolve_fixed, sample_inputs};
use super::schema::*;
use crate::error::{Error, Result};
use crate::seed;

/// Nominal vs perturbed fixed inputs for a synthetic calibration campaign.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CampaignSpec {
    pub nominal: BTreeMap<String, f64>,
    pub perturbed: BTreeMap<String, f64>,
    pub n_sims: usize,
    pub n_train: usize,
    pub n_validation: usize,
    pub seed: u64,
    /// Adds measurement noise at sigma to the experiment scalars.
    #[serde(default)]
    pub experiment_noise: bool,
}

impl Default for CampaignSpec {
    fn default() -> Self {
        let fixed = |t1: f64, preheat: f64| {
            BTreeMap::from([
                ("drive_asym_mode_2_0_t1".to_string(), t1),
                ("preheat".to_string(), preheat),
                ("scale".to_string(), 1.0),
                ("dopant_fraction".to_string(), 0.28),
            ])
        };
        CampaignSpec {
            nominal: fixed(0.0, 5.0),
            perturbed: fixed(-5.0, 20.0),
            n_sims: 8000,
            n_train: 7,
            n_validation: 1000,
            seed: 2019,
            experiment_noise: false,
        }
    }
}

impl CampaignSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.nominal.keys().eq(self.perturbed.keys()) {
            return Err(Error::invalid("nominal and perturbed must fix the same inputs"));
        }
        for map in [&self.nominal, &self.perturbed] {
            for (name, v) in map {
                check_input(input_index(name)?, *v)?;
            }
        }
        if self.n_sims == 0 {
            return Err(Error::invalid("simulation count must be at least 1"));
        }
        if self.n_train == 0 {
            return Err(Error::invalid("training experiment count must be at least 1"));
        }
        Ok(())
    }

    /// Inputs left free in both sets, in column order.
    pub fn free_inputs(&self) -> Vec<&'static str> {
        INPUT_NAMES.iter().copied().filter(|n| !self.nominal.contains_key(*n)).collect()
    }

    /// The control variant: experiments drawn from the nominal setting.
    pub fn null_bias(&self) -> Self {
        CampaignSpec { perturbed: self.nominal.clone(), ..self.clone() }
    }
}

#[derive(Clone, Debug)]
pub struct Campaign {
    pub sims: Dataset,
    pub exp_train: Dataset,
    pub exp_validation: Dataset,
}

fn fixed_of(map: &BTreeMap<String, f64>) -> Result<Vec<(usize, f64)>> {
    resolve_fixed(&map.iter().map(|(k, v)| (k.clone(), *v)).collect::<Vec<_>>())
}

fn role_dataset(gen: &Generator, n: usize, fixed: &[(usize, f64)], master: u64, role: &str, noisy: bool) -> Result<Dataset> {
    if n == 0 {
        let mut d = Dataset::empty(gen.side());
        d.meta.role = role.into();
        return Ok(d);
    }
    let s = seed::derive_named(master, role);
    let noise = noisy.then(|| seed::derive_named(master, &format!("{role}/noise")));
    let mut d = gen.dataset(sample_inputs(n, fixed, s)?, noise)?;
    d.meta.role = role.into();
    d.meta.seed = Some(s);
    Ok(d)
}

pub fn make_campaign(spec: &CampaignSpec, gen: &Generator) -> Result<Campaign> {
    spec.validate()?;
    let nominal = fixed_of(&spec.nominal)?;
    let perturbed = fixed_of(&spec.perturbed)?;
    Ok(Campaign {
        sims: role_dataset(gen, spec.n_sims, &nominal, spec.seed, "sims", false)?,
        exp_train: role_dataset(gen, spec.n_train, &perturbed, spec.seed, "exp_train", spec.experiment_noise)?,
        exp_validation: role_dataset(gen, spec.n_validation, &perturbed, spec.seed, "exp_validation", spec.experiment_noise)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toydata::Physics;

    #[test]
    fn zero_train_rejected() {
        let spec = CampaignSpec { n_train: 0, ..Default::default() };
        assert!(spec.validate().unwrap_err().is_validation());
    }

    #[test]
    fn mismatched_fixed_sets_rejected() {
        let mut spec = CampaignSpec::default();
        spec.perturbed.remove("scale");
        assert!(spec.validate().is_err());
    }

    #[test]
    fn free_inputs_are_the_other_five() {
        let spec = CampaignSpec::default();
        assert_eq!(
            spec.free_inputs(),
            vec!["drive_asym_mode_1_0", "drive_asym_mode_2_0_t2", "drive_trough_adj", "drive_power_adj", "drive_energy_adj"]
        );
    }

    #[test]
    fn sizes_and_fixed_values() {
        let gen = Generator::new(Physics::default()).unwrap();
        let spec = CampaignSpec { n_sims: 20, n_train: 3, n_validation: 5, ..Default::default() };
        let c = make_campaign(&spec, &gen).unwrap();
        assert_eq!((c.sims.len(), c.exp_train.len(), c.exp_validation.len()), (20, 3, 5));
        assert!(c.sims.inputs.iter().all(|x| x.0[IDX_PREHEAT] == 5.0 && x.0[IDX_ASYM_T1] == 0.0));
        assert!(c.exp_train.inputs.iter().all(|x| x.0[IDX_PREHEAT] == 20.0 && x.0[IDX_ASYM_T1] == -5.0));
        assert_ne!(c.exp_train.inputs[0].0[IDX_POWER], c.exp_validation.inputs[0].0[IDX_POWER]);
    }
}
