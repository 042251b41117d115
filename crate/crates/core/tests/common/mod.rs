#![allow(dead_code)]

use std::sync::OnceLock;

use biascal::diffcore::Schedule;
use biascal::surrogate::{train_surrogate, Architecture, SurrogateModel, SurrogateTrainConfig, TrainingReport};
use biascal::toydata::{make_campaign, Campaign, CampaignSpec, Generator, Physics};

/// Small enough to train in a few seconds.
pub const SIDE: usize = 8;

pub fn physics() -> Physics {
    Physics { side: SIDE, reference_size: 2000, ..Default::default() }
}

pub fn campaign_spec() -> CampaignSpec {
    CampaignSpec { n_sims: 400, n_train: 10, n_validation: 60, ..Default::default() }
}

pub fn train_config() -> SurrogateTrainConfig {
    let mut cfg = SurrogateTrainConfig::default();
    cfg.autoencoder.iterations = 400;
    cfg.autoencoder.schedule = Schedule::Constant;
    cfg.forward_inverse.iterations = 600;
    cfg.forward_inverse.schedule = Schedule::Constant;
    cfg
}

pub struct Fixture {
    pub campaign: Campaign,
    pub model: SurrogateModel,
    pub report: TrainingReport,
}

pub fn fixture() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| {
        let spec = campaign_spec();
        let campaign = make_campaign(&spec, &Generator::new(physics()).unwrap()).unwrap();
        let arch = Architecture::new(spec.free_inputs().iter().map(|s| s.to_string()).collect(), SIDE);
        let (model, report) = train_surrogate(&campaign.sims, &arch, &train_config()).unwrap();
        Fixture { campaign, model, report }
    })
}
