use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{
    descriptor_triple, CalibrationReport, Observation, PredictionRecord, Predictor, PredictorMetrics, RuntimeStats, Scored,
    SplitRecord,
};
use super::splits::{make_splits, SplitPlan};
use crate::baselinecal::{apply_to_predictions, fit_baseline, fit_compressor_dataset, mean_predictions, BaselineConfig, OutputCompressor};
use crate::error::{Error, Result};
use crate::seed;
use crate::surrogate::{train_surrogate, Architecture, Predictions, SurrogateModel, SurrogateTrainConfig, TrainingReport};
use crate::toydata::{make_campaign, Campaign, CampaignSpec, Dataset, Generator, Physics, N_SCALARS as N};
use crate::transfercal::{transfer_learn, TLConfig};

/// Environment variable capping split-level parallelism.
pub const THREADS_ENV: &str = "BIASCAL_THREADS";

/// Worker count from `BIASCAL_THREADS`, else all cores.
pub fn split_threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(rayon::current_num_threads)
}

/// A fitted compressor plus the settings used for each per-split linear map.
#[derive(Clone, Debug)]
pub struct BaselineSetup {
    pub config: BaselineConfig,
    pub compressor: OutputCompressor<f64>,
}

impl BaselineSetup {
    pub fn fit(sims: &Dataset, config: BaselineConfig) -> Result<Self> {
        Ok(BaselineSetup { compressor: fit_compressor_dataset(sims, &config)?, config })
    }
}

struct SplitOutcome {
    record: SplitRecord,
    tl: Option<Predictions>,
    baseline: Option<Predictions>,
    seconds: f64,
}

fn run_split(
    model: &SurrogateModel,
    train: &Dataset,
    validation: &Dataset,
    tl: &TLConfig,
    baseline: Option<&BaselineSetup>,
) -> Result<(Predictions, Option<Predictions>, Vec<Vec<f64>>)> {
    let cal = transfer_learn(model, train, tl)?;
    let tl_pred = cal.predict_batch(&validation.inputs)?;
    if !tl_pred.all_finite() {
        return Err(Error::NonFinite("transfer-learned predictions".into()));
    }
    let base_pred = match baseline {
        Some(b) => {
            let l = fit_baseline(model, &b.compressor, train, b.config.ridge)?;
            Some(apply_to_predictions(&b.compressor, &l, &model.predict_batch(&validation.inputs)?)?)
        }
        None => None,
    };
    Ok((tl_pred, base_pred, cal.traces.iter().map(|t| t.values.clone()).collect()))
}

/// Runs jobs `(id, train set, validation indices)` against a shared pool of
/// validation experiments and reduces them into one report.
#[allow(clippy::too_many_arguments)]
fn evaluate_jobs(
    label: &str,
    protocol: Option<super::splits::Protocol>,
    model: &SurrogateModel,
    pool: &Dataset,
    jobs: Vec<(usize, Vec<usize>, Dataset, Vec<usize>)>,
    tl: &TLConfig,
    baseline: Option<&BaselineSetup>,
    threads: usize,
) -> Result<CalibrationReport> {
    tl.validate()?;
    let start = Instant::now();
    let obs = model.physical(pool)?;
    let obs_desc: Vec<[f64; 3]> = (0..obs.len()).into_par_iter().map(|i| descriptor_triple(obs.image(i))).collect();

    let initial = model.predict_batch(&obs.inputs)?;
    let initial_desc: Vec<[f64; 3]> = (0..initial.len()).into_par_iter().map(|i| descriptor_triple(initial.image(i))).collect();

    let pool_threads = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    let mut outcomes: Vec<SplitOutcome> = pool_threads.install(|| {
        jobs.into_par_iter()
            .map(|(id, train_idx, train, validation)| {
                let t0 = Instant::now();
                let split_seed = seed::derive(tl.seed, id as u64);
                let cfg = TLConfig { seed: split_seed, ..tl.clone() };
                let val = obs.subset(&validation);
                let (tl_pred, baseline_pred, traces, error) = match run_split(model, &train, &val, &cfg, baseline) {
                    Ok((a, b, t)) => (Some(a), b, t, None),
                    Err(e) => {
                        log::warn!("split {id} failed: {e}");
                        (None, None, Vec::new(), Some(e.to_string()))
                    }
                };
                SplitOutcome {
                    record: SplitRecord { id, seed: split_seed, train: train_idx, validation, error, loss_traces: traces },
                    tl: tl_pred,
                    baseline: baseline_pred,
                    seconds: t0.elapsed().as_secs_f64(),
                }
            })
            .collect()
    });
    outcomes.sort_by_key(|o| o.record.id);

    let mut records = Vec::new();
    let initial_rows: Vec<Scored> = (0..obs.len())
        .map(|i| Scored { sample: i, scalars: initial.scalars[i], image: initial.image(i), descriptors: initial_desc[i] })
        .collect();
    for r in &initial_rows {
        records.push(PredictionRecord { predictor: Predictor::Initial, split: None, sample: r.sample, scalars: r.scalars, descriptors: r.descriptors });
    }
    let initial_metrics = PredictorMetrics::compute(&obs, &obs_desc, &initial_rows);

    // Descriptors of every split prediction, in split order.
    let described: Vec<(Predictor, usize, usize, [f64; N], Vec<f64>, [f64; 3])> = outcomes
        .par_iter()
        .flat_map_iter(|o| {
            let mut rows = Vec::new();
            for (pred, which) in [(o.tl.as_ref(), Predictor::Tl), (o.baseline.as_ref(), Predictor::Baseline)] {
                if let Some(p) = pred {
                    for (j, &sample) in o.record.validation.iter().enumerate() {
                        rows.push((which, o.record.id, sample, p.scalars[j], p.image(j).to_vec(), descriptor_triple(p.image(j))));
                    }
                }
            }
            rows
        })
        .collect();

    let mut per_predictor = |which: Predictor| -> (Option<PredictorMetrics>, Option<PredictorMetrics>) {
        let rows: Vec<Scored> = described
            .iter()
            .filter(|r| r.0 == which)
            .map(|r| Scored { sample: r.2, scalars: r.3, image: &r.4, descriptors: r.5 })
            .collect();
        if rows.is_empty() {
            return (None, None);
        }
        for r in described.iter().filter(|r| r.0 == which) {
            records.push(PredictionRecord { predictor: which, split: Some(r.1), sample: r.2, scalars: r.3, descriptors: r.5 });
        }
        let pooled = PredictorMetrics::compute(&obs, &obs_desc, &rows);

        let mut groups: BTreeMap<usize, Vec<Predictions>> = BTreeMap::new();
        for r in &rows {
            groups.entry(r.sample).or_default().push(Predictions { side: obs.side, scalars: vec![r.scalars], images: r.image.to_vec() });
        }
        let bagged: Vec<(usize, Predictions)> =
            groups.into_iter().map(|(s, parts)| (s, mean_predictions(&parts).expect("non-empty group"))).collect();
        let bag_desc: Vec<[f64; 3]> = bagged.iter().map(|(_, p)| descriptor_triple(p.image(0))).collect();
        let bag_rows: Vec<Scored> = bagged
            .iter()
            .zip(&bag_desc)
            .map(|((s, p), d)| Scored { sample: *s, scalars: p.scalars[0], image: p.image(0), descriptors: *d })
            .collect();
        (Some(pooled), Some(PredictorMetrics::compute(&obs, &obs_desc, &bag_rows)))
    };
    let (tl_metrics, tl_bagged) = per_predictor(Predictor::Tl);
    let (baseline_metrics, baseline_bagged) = per_predictor(Predictor::Baseline);

    let observations = (0..obs.len())
        .map(|i| Observation { sample: i, scalars: obs.scalars[i], sigma: obs.sigmas[i], descriptors: obs_desc[i] })
        .collect();
    let n_splits = outcomes.len().max(1);
    let runtime = RuntimeStats {
        total_seconds: start.elapsed().as_secs_f64(),
        mean_split_seconds: outcomes.iter().map(|o| o.seconds).sum::<f64>() / n_splits as f64,
        threads,
    };
    let splits: Vec<SplitRecord> = outcomes.into_iter().map(|o| o.record).collect();
    Ok(CalibrationReport {
        label: label.to_string(),
        protocol,
        base_hash: model.content_hash(),
        tl_config: tl.clone(),
        baseline_config: baseline.map(|b| b.config.clone()),
        n_experiments: obs.len(),
        initial: initial_metrics,
        tl: tl_metrics,
        baseline: baseline_metrics,
        tl_bagged,
        baseline_bagged,
        observations,
        records,
        complete: splits.iter().all(|s| s.error.is_none()),
        splits,
        runtime,
    })
}

/// Transfer-learns (and optionally fits the baseline) on each split's
/// training experiments and scores the validation experiments.
pub fn run_crossval(
    model: &SurrogateModel,
    experiments: &Dataset,
    plan: &SplitPlan,
    tl: &TLConfig,
    baseline: Option<&BaselineSetup>,
) -> Result<CalibrationReport> {
    run_crossval_with_threads(model, experiments, plan, tl, baseline, split_threads())
}

pub fn run_crossval_with_threads(
    model: &SurrogateModel,
    experiments: &Dataset,
    plan: &SplitPlan,
    tl: &TLConfig,
    baseline: Option<&BaselineSetup>,
    threads: usize,
) -> Result<CalibrationReport> {
    if plan.n_samples != experiments.len() {
        return Err(Error::invalid(format!(
            "plan covers {} samples but {} experiments were given",
            plan.n_samples,
            experiments.len()
        )));
    }
    let plan = make_splits(plan)?;
    let jobs = plan
        .splits
        .iter()
        .map(|s| (s.id, s.train.clone(), experiments.subset(&s.train), s.validation.clone()))
        .collect();
    evaluate_jobs("crossval", Some(plan.protocol), model, experiments, jobs, tl, baseline, threads)
}

/// Calibrates once on `train` and scores every experiment in `validation`.
pub fn calibrate_and_validate(
    model: &SurrogateModel,
    train: &Dataset,
    validation: &Dataset,
    tl: &TLConfig,
    baseline: Option<&BaselineSetup>,
) -> Result<CalibrationReport> {
    let jobs = vec![(0, Vec::new(), train.clone(), (0..validation.len()).collect())];
    evaluate_jobs("holdout", None, model, validation, jobs, tl, baseline, 1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub physics: Physics,
    pub campaign: CampaignSpec,
    pub surrogate: SurrogateTrainConfig,
    pub tl: TLConfig,
    pub baseline: Option<BaselineConfig>,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            physics: Physics::default(),
            campaign: CampaignSpec::default(),
            surrogate: SurrogateTrainConfig::default(),
            tl: TLConfig::default(),
            baseline: None,
        }
    }
}

pub struct SyntheticOutcome {
    pub campaign: Campaign,
    pub model: SurrogateModel,
    pub training: TrainingReport,
    pub report: CalibrationReport,
}

/// Generate, train the initial surrogate on nominal simulations, transfer-learn
/// on the perturbed training experiments, score the perturbed validation set.
pub fn run_synthetic_protocol(cfg: &SyntheticConfig) -> Result<SyntheticOutcome> {
    let gen = Generator::new(cfg.physics.clone())?;
    let campaign = make_campaign(&cfg.campaign, &gen)?;
    let arch = Architecture::new(cfg.campaign.free_inputs().iter().map(|s| s.to_string()).collect(), cfg.physics.side);
    let (model, training) = train_surrogate(&campaign.sims, &arch, &cfg.surrogate)?;
    let baseline = cfg.baseline.clone().map(|b| BaselineSetup::fit(&campaign.sims, b)).transpose()?;
    let mut report = calibrate_and_validate(&model, &campaign.exp_train, &campaign.exp_validation, &cfg.tl, baseline.as_ref())?;
    report.label = "synthetic".into();
    Ok(SyntheticOutcome { campaign, model, training, report })
}
