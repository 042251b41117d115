use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use biascal::baselinecal::{apply_baseline, fit_baseline, LinearCalibrator, OutputCompressor};
use biascal::diffcore::persist::{read_json, write_json};
use biascal::harness::{
    calibrate_and_validate, emit_report, run_crossval, run_synthetic_protocol, BaselineSetup, CalibrationReport, Protocol,
    RunConfig,
};
use biascal::metrics::chi2n;
use biascal::surrogate::{train_surrogate, Architecture, SurrogateModel};
use biascal::toydata::{load_dataset, make_campaign, save_dataset, Generator, N_SCALARS, SCALAR_NAMES};
use biascal::transfercal::{transfer_learn, CalibratedModel, LossMode, Strategy};
use biascal::Result;

#[derive(Parser)]
#[command(name = "biascal", version, about = "Surrogate training and transfer-learning calibration on toy implosion data")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// JSON configuration; missing sections take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed applied to every stage.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Number of random splits.
    #[arg(long, global = true)]
    splits: Option<usize>,
    /// Which layers transfer learning retrains.
    #[arg(long, global = true)]
    strategy: Option<Strategy>,
    /// `l2` or `chi2`.
    #[arg(long, global = true)]
    loss: Option<LossMode>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulations plus training and validation experiments.
    GenerateData,
    /// Train the autoencoder, forward and inverse models on simulations.
    TrainSurrogate {
        #[arg(long)]
        data: PathBuf,
    },
    /// Held-out R² of S(x) and D(E(y)).
    EvaluateSurrogate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Retrain the strategy layers on experiments.
    TransferLearn {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Optional experiments to score the calibrated model on.
        #[arg(long)]
        validation: Option<PathBuf>,
    },
    /// Fit the PCA compressor on simulations and a linear map on experiments.
    Baseline {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        sims: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        validation: Option<PathBuf>,
    },
    /// Split the experiments, calibrate per split and score the held-out ones.
    Crossval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Simulations for the baseline compressor; the baseline is skipped without them.
        #[arg(long)]
        sims: Option<PathBuf>,
        #[arg(long)]
        protocol: Option<Protocol>,
    },
    /// Generate, train, calibrate and report in one run.
    SyntheticProtocol {
        #[arg(long)]
        baseline: bool,
    },
    /// Re-emit tables and plots from a saved `report.json`.
    Report {
        #[arg(long)]
        report: PathBuf,
    },
}

fn config(g: &Global) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.set_seed(s);
    }
    if let Some(n) = g.splits {
        cfg.splits.n_splits = n;
    }
    if let Some(s) = g.strategy {
        cfg.tl.strategy = s;
    }
    if let Some(l) = g.loss {
        cfg.tl.loss_mode = l;
    }
    Ok(cfg)
}

fn print_chi2(label: &str, obs: &biascal::toydata::Dataset, pred: &biascal::surrogate::Predictions) -> Result<()> {
    for k in 0..N_SCALARS {
        let sig: Vec<f64> = obs.sigmas.iter().map(|s| s[k]).collect();
        let c = chi2n(&obs.scalar_column(k), &pred.scalar_column(k), &sig)?;
        println!("{label} {:<24} chi2/N {c:.4}", SCALAR_NAMES[k]);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = config(&cli.global)?;
    let out = &cli.global.out;
    match cli.command {
        Command::GenerateData => {
            let gen = Generator::new(cfg.physics.clone())?;
            let c = make_campaign(&cfg.campaign, &gen)?;
            save_dataset(&c.sims, &out.join("sims"))?;
            save_dataset(&c.exp_train, &out.join("exp_train"))?;
            save_dataset(&c.exp_validation, &out.join("exp_validation"))?;
            write_json(&out.join("config.json"), &cfg)?;
            println!("wrote {} sims, {} training and {} validation experiments to {}", c.sims.len(), c.exp_train.len(), c.exp_validation.len(), out.display());
        }
        Command::TrainSurrogate { data } => {
            let sims = load_dataset(&data)?;
            let arch = Architecture::new(cfg.campaign.free_inputs().iter().map(|s| s.to_string()).collect(), sims.side);
            let (model, report) = train_surrogate(&sims, &arch, &cfg.surrogate)?;
            model.save(out)?;
            write_json(&out.join("training_report.json"), &report)?;
            println!("saved model {} to {}", model.content_hash(), out.display());
        }
        Command::EvaluateSurrogate { model, data } => {
            let m = SurrogateModel::load(&model)?;
            let d = load_dataset(&data)?;
            let table = serde_json::json!({
                "forward": m.evaluate_r2(&d)?,
                "reconstruction": m.evaluate_reconstruction_r2(&d)?,
            });
            println!("{}", serde_json::to_string_pretty(&table)?);
        }
        Command::TransferLearn { model, data, validation } => {
            let base = SurrogateModel::load(&model)?;
            let train = load_dataset(&data)?;
            match validation {
                Some(v) => {
                    let val = load_dataset(&v)?;
                    let report = calibrate_and_validate(&base, &train, &val, &cfg.tl, None)?;
                    emit_report(&report, &out.join("report"))?;
                    let cal = transfer_learn(&base, &train, &cfg.tl)?;
                    cal.save(&out.join("calibrated"))?;
                    println!("calibrated model and report written to {}", out.display());
                }
                None => {
                    let cal = transfer_learn(&base, &train, &cfg.tl)?;
                    cal.save(out)?;
                    let check = CalibratedModel::load(out, &base)?;
                    println!("retrained {:?}; saved to {}", check.retrained, out.display());
                }
            }
        }
        Command::Baseline { model, sims, data, validation } => {
            let m = SurrogateModel::load(&model)?;
            let setup = BaselineSetup::fit(&load_dataset(&sims)?, cfg.baseline.clone())?;
            let train = m.physical(&load_dataset(&data)?)?;
            let cal = fit_baseline(&m, &setup.compressor, &train, setup.config.ridge)?;
            setup.compressor.save(&out.join("compressor"))?;
            cal.save(&out.join("calibrator"))?;
            let comp = OutputCompressor::<f64>::load(&out.join("compressor"))?;
            let cal = LinearCalibrator::<f64>::load(&out.join("calibrator"))?;
            if let Some(v) = validation {
                let val = m.physical(&load_dataset(&v)?)?;
                print_chi2("initial ", &val, &m.predict_batch(&val.inputs)?)?;
                print_chi2("baseline", &val, &apply_baseline(&m, &comp, &cal, &val.inputs)?)?;
            }
            println!("baseline written to {}", out.display());
        }
        Command::Crossval { model, data, sims, protocol } => {
            let m = SurrogateModel::load(&model)?;
            let exps = load_dataset(&data)?;
            let mut plan = cfg.splits.clone();
            plan.n_samples = exps.len();
            if let Some(p) = protocol {
                plan.protocol = p;
            }
            let setup = sims.map(|s| BaselineSetup::fit(&load_dataset(&s)?, cfg.baseline.clone())).transpose()?;
            let report = run_crossval(&m, &exps, &plan, &cfg.tl, setup.as_ref())?;
            emit_report(&report, out)?;
            summarize(&report);
        }
        Command::SyntheticProtocol { baseline } => {
            let outcome = run_synthetic_protocol(&cfg.synthetic(baseline))?;
            outcome.model.save(&out.join("model"))?;
            write_json(&out.join("training_report.json"), &outcome.training)?;
            emit_report(&outcome.report, &out.join("report"))?;
            summarize(&outcome.report);
        }
        Command::Report { report } => {
            let r: CalibrationReport = read_json(&report)?;
            let files = emit_report(&r, out)?;
            println!("wrote {} files to {}", files.len(), out.display());
        }
    }
    Ok(())
}

fn summarize(r: &CalibrationReport) {
    use biascal::harness::Predictor::*;
    println!("{} splits, complete: {}", r.splits.len(), r.complete);
    println!("TL beats initial on chi2/N for {}/{N_SCALARS} scalars", r.chi2_wins(Tl, Initial));
    if r.baseline.is_some() {
        println!("baseline beats initial for {}/{N_SCALARS}, TL beats baseline for {}/{N_SCALARS}", r.chi2_wins(Baseline, Initial), r.chi2_wins(Tl, Baseline));
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() { ExitCode::from(2) } else { ExitCode::from(1) }
        }
    }
}
