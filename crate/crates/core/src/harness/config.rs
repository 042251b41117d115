use std::path::Path;

use serde::{Deserialize, Serialize};

use super::crossval::SyntheticConfig;
use super::splits::SplitPlan;
use crate::baselinecal::BaselineConfig;
use crate::diffcore::persist::read_json;
use crate::error::Result;
use crate::surrogate::SurrogateTrainConfig;
use crate::toydata::{CampaignSpec, Physics};
use crate::transfercal::TLConfig;

/// Every tunable in one JSON document; absent sections take their defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub physics: Physics,
    pub campaign: CampaignSpec,
    pub surrogate: SurrogateTrainConfig,
    pub tl: TLConfig,
    pub baseline: BaselineConfig,
    pub splits: SplitPlan,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    /// One master seed for every stage.
    pub fn set_seed(&mut self, seed: u64) {
        self.campaign.seed = seed;
        self.surrogate.seed = seed;
        self.tl.seed = seed;
        self.splits.seed = seed;
    }

    pub fn synthetic(&self, with_baseline: bool) -> SyntheticConfig {
        SyntheticConfig {
            physics: self.physics.clone(),
            campaign: self.campaign.clone(),
            surrogate: self.surrogate.clone(),
            tl: self.tl.clone(),
            baseline: with_baseline.then(|| self.baseline.clone()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_document_fills_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"tl": {"iterations": 7}, "splits": {"protocol": "HOLDOUT_X15"}}"#).unwrap();
        assert_eq!(cfg.tl.iterations, 7);
        assert_eq!(cfg.tl.learning_rate, TLConfig::default().learning_rate);
        assert_eq!(cfg.splits.train_k, 7);
        assert_eq!(cfg.campaign, CampaignSpec::default());
    }

    #[test]
    fn full_round_trip() {
        let cfg = RunConfig::default();
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
