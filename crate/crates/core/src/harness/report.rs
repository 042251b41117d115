use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::plot::{scatter_png, Series};
use super::splits::Protocol;
use crate::baselinecal::BaselineConfig;
use crate::diffcore::persist::write_json;
use crate::error::{Error, Result};
use crate::metrics::{bulk_shift, chi2n, image_descriptors, r2, BasisConfig};
use crate::surrogate::model::hex;
use crate::toydata::{Dataset, N_SCALARS, SCALAR_NAMES};
use crate::transfercal::TLConfig;

pub const DESCRIPTOR_NAMES: [&str; 3] = ["radius", "shape", "max"];

/// Metric value; `None` where undefined (too few samples, constant observations).
pub type Metric = Option<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predictor {
    Initial,
    Tl,
    Baseline,
}

impl Predictor {
    pub fn name(self) -> &'static str {
        match self {
            Predictor::Initial => "initial",
            Predictor::Tl => "tl",
            Predictor::Baseline => "baseline",
        }
    }
}

/// Radius, shape and max-amplitude descriptors; zeros for an all-dark image.
pub fn descriptor_triple(image: &[f64]) -> [f64; 3] {
    match image_descriptors(image, &BasisConfig::default()) {
        Ok(d) => [d.radius_mode, d.shape_mode, d.max_amplitude],
        Err(e) => {
            log::warn!("image descriptors unavailable ({e}); using zeros");
            [0.0; 3]
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictorMetrics {
    pub n: usize,
    pub chi2n: [Metric; N_SCALARS],
    pub r2: [Metric; N_SCALARS],
    pub bulk_shift: [Metric; N_SCALARS],
    pub pixel_r2: Metric,
    pub descriptor_r2: [Metric; 3],
}

/// One prediction of one experiment, with the image it was scored on.
pub(crate) struct Scored<'a> {
    pub sample: usize,
    pub scalars: [f64; N_SCALARS],
    pub image: &'a [f64],
    pub descriptors: [f64; 3],
}

impl PredictorMetrics {
    /// Scores rows against `obs` (physical units), pooling every row.
    pub(crate) fn compute(obs: &Dataset, obs_desc: &[[f64; 3]], rows: &[Scored<'_>]) -> Self {
        let col = |f: &dyn Fn(&Scored) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
        let mut m = PredictorMetrics {
            n: rows.len(),
            chi2n: [None; N_SCALARS],
            r2: [None; N_SCALARS],
            bulk_shift: [None; N_SCALARS],
            pixel_r2: None,
            descriptor_r2: [None; 3],
        };
        for k in 0..N_SCALARS {
            let o = col(&|r| obs.scalars[r.sample][k]);
            let p = col(&|r| r.scalars[k]);
            let s = col(&|r| obs.sigmas[r.sample][k]);
            m.chi2n[k] = chi2n(&o, &p, &s).ok();
            m.r2[k] = r2(&o, &p).ok();
            m.bulk_shift[k] = bulk_shift(&o, &p).ok();
        }
        let o_img: Vec<f64> = rows.iter().flat_map(|r| obs.image(r.sample).iter().copied()).collect();
        let p_img: Vec<f64> = rows.iter().flat_map(|r| r.image.iter().copied()).collect();
        m.pixel_r2 = r2(&o_img, &p_img).ok();
        for d in 0..3 {
            m.descriptor_r2[d] = r2(&col(&|r| obs_desc[r.sample][d]), &col(&|r| r.descriptors[d])).ok();
        }
        m
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub sample: usize,
    pub scalars: [f64; N_SCALARS],
    pub sigma: [f64; N_SCALARS],
    pub descriptors: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub predictor: Predictor,
    /// `None` for the single initial-model pass.
    pub split: Option<usize>,
    pub sample: usize,
    pub scalars: [f64; N_SCALARS],
    pub descriptors: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub id: usize,
    pub seed: u64,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub error: Option<String>,
    /// Transfer-learning loss per stage and iteration.
    pub loss_traces: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RuntimeStats {
    pub total_seconds: f64,
    pub mean_split_seconds: f64,
    pub threads: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub label: String,
    pub protocol: Option<Protocol>,
    pub base_hash: String,
    pub tl_config: TLConfig,
    pub baseline_config: Option<BaselineConfig>,
    pub n_experiments: usize,
    pub initial: PredictorMetrics,
    /// Pooled over the concatenated validation sets of every split.
    pub tl: Option<PredictorMetrics>,
    pub baseline: Option<PredictorMetrics>,
    /// Per-experiment mean over all splits that validated it.
    pub tl_bagged: Option<PredictorMetrics>,
    pub baseline_bagged: Option<PredictorMetrics>,
    pub observations: Vec<Observation>,
    pub records: Vec<PredictionRecord>,
    pub splits: Vec<SplitRecord>,
    pub complete: bool,
    pub runtime: RuntimeStats,
}

impl CalibrationReport {
    pub fn metrics(&self, p: Predictor) -> Option<&PredictorMetrics> {
        match p {
            Predictor::Initial => Some(&self.initial),
            Predictor::Tl => self.tl.as_ref(),
            Predictor::Baseline => self.baseline.as_ref(),
        }
    }

    /// Scalars where `a` scores strictly lower χ²/N than `b`.
    pub fn chi2_wins(&self, a: Predictor, b: Predictor) -> usize {
        match (self.metrics(a), self.metrics(b)) {
            (Some(x), Some(y)) => (0..N_SCALARS)
                .filter(|&k| matches!((x.chi2n[k], y.chi2n[k]), (Some(p), Some(q)) if p < q))
                .count(),
            _ => 0,
        }
    }

    pub fn failed_splits(&self) -> Vec<usize> {
        self.splits.iter().filter(|s| s.error.is_some()).map(|s| s.id).collect()
    }
}

fn fmt(v: Metric) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    let werr = |e: csv::Error| Error::invalid(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(werr)?;
    for r in rows {
        w.write_record(&r).map_err(werr)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct IndexEntry {
    file: String,
    bytes: u64,
    sha256: String,
}

/// Writes CSV tables, scatter plots, the JSON report and an `index.json`
/// listing every file with its SHA-256. Returns the written paths.
pub fn emit_report(report: &CalibrationReport, out: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out.join("plots")).map_err(|e| Error::io(out, e))?;
    let mut files = Vec::new();
    let predictors: Vec<(Predictor, &PredictorMetrics)> =
        [Predictor::Initial, Predictor::Tl, Predictor::Baseline].into_iter().filter_map(|p| report.metrics(p).map(|m| (p, m))).collect();

    let path = out.join("scalars_metrics.csv");
    let header = [
        "scalar", "chi2n_initial", "chi2n_tl", "chi2n_baseline", "r2_initial", "r2_tl", "r2_baseline",
        "bulk_shift_initial", "bulk_shift_tl", "bulk_shift_baseline", "chi2n_tl_bagged", "chi2n_baseline_bagged",
    ];
    let get = |m: Option<&PredictorMetrics>, f: &dyn Fn(&PredictorMetrics) -> Metric| fmt(m.and_then(f));
    write_csv(
        &path,
        &header,
        (0..N_SCALARS).map(|k| {
            let mut row = vec![SCALAR_NAMES[k].to_string()];
            for f in [
                &(|m: &PredictorMetrics| m.chi2n[k]) as &dyn Fn(&PredictorMetrics) -> Metric,
                &|m| m.r2[k],
                &|m| m.bulk_shift[k],
            ] {
                for p in [Predictor::Initial, Predictor::Tl, Predictor::Baseline] {
                    row.push(get(report.metrics(p), f));
                }
            }
            row.push(get(report.tl_bagged.as_ref(), &|m| m.chi2n[k]));
            row.push(get(report.baseline_bagged.as_ref(), &|m| m.chi2n[k]));
            row
        }),
    )?;
    files.push(path);

    let path = out.join("descriptor_metrics.csv");
    let names = DESCRIPTOR_NAMES.iter().copied().chain(["pixels"]);
    write_csv(
        &path,
        &["quantity", "r2_initial", "r2_tl", "r2_baseline"],
        names.enumerate().map(|(d, name)| {
            let mut row = vec![name.to_string()];
            for p in [Predictor::Initial, Predictor::Tl, Predictor::Baseline] {
                let v = report.metrics(p).and_then(|m| if d < 3 { m.descriptor_r2[d] } else { m.pixel_r2 });
                row.push(fmt(v));
            }
            row
        }),
    )?;
    files.push(path);

    let obs: BTreeMap<usize, &Observation> = report.observations.iter().map(|o| (o.sample, o)).collect();
    let split_str = |s: Option<usize>| s.map_or_else(String::new, |v| v.to_string());
    let path = out.join("scalar_scatter.csv");
    write_csv(
        &path,
        &["predictor", "split", "sample", "scalar", "observed", "predicted", "sigma"],
        report.records.iter().flat_map(|r| {
            let o = obs[&r.sample];
            (0..N_SCALARS).map(move |k| {
                vec![
                    r.predictor.name().to_string(),
                    split_str(r.split),
                    r.sample.to_string(),
                    SCALAR_NAMES[k].to_string(),
                    o.scalars[k].to_string(),
                    r.scalars[k].to_string(),
                    o.sigma[k].to_string(),
                ]
            })
        }),
    )?;
    files.push(path);

    let path = out.join("descriptor_scatter.csv");
    write_csv(
        &path,
        &["predictor", "split", "sample", "descriptor", "observed", "predicted"],
        report.records.iter().flat_map(|r| {
            let o = obs[&r.sample];
            (0..3).map(move |d| {
                vec![
                    r.predictor.name().to_string(),
                    split_str(r.split),
                    r.sample.to_string(),
                    DESCRIPTOR_NAMES[d].to_string(),
                    o.descriptors[d].to_string(),
                    r.descriptors[d].to_string(),
                ]
            })
        }),
    )?;
    files.push(path);

    let path = out.join("loss_traces.csv");
    write_csv(
        &path,
        &["split", "stage", "iteration", "loss"],
        report.splits.iter().flat_map(|s| {
            s.loss_traces.iter().enumerate().flat_map(move |(stage, t)| {
                t.iter().enumerate().map(move |(i, v)| vec![s.id.to_string(), stage.to_string(), i.to_string(), v.to_string()])
            })
        }),
    )?;
    files.push(path);

    let join = |v: &[usize]| v.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ");
    let path = out.join("splits.csv");
    write_csv(
        &path,
        &["split", "seed", "train", "validation", "status"],
        report.splits.iter().map(|s| {
            vec![
                s.id.to_string(),
                s.seed.to_string(),
                join(&s.train),
                join(&s.validation),
                s.error.clone().unwrap_or_else(|| "ok".into()),
            ]
        }),
    )?;
    files.push(path);

    for k in 0..N_SCALARS {
        let series: Vec<Series> = predictors
            .iter()
            .map(|(p, _)| Series {
                predictor: *p,
                points: report
                    .records
                    .iter()
                    .filter(|r| r.predictor == *p)
                    .map(|r| (obs[&r.sample].scalars[k], r.scalars[k], obs[&r.sample].sigma[k]))
                    .collect(),
            })
            .collect();
        let path = out.join("plots").join(format!("scalar_{}.png", SCALAR_NAMES[k]));
        scatter_png(&series, &path)?;
        files.push(path);
    }
    for (d, name) in DESCRIPTOR_NAMES.iter().enumerate() {
        let series: Vec<Series> = predictors
            .iter()
            .map(|(p, _)| Series {
                predictor: *p,
                points: report
                    .records
                    .iter()
                    .filter(|r| r.predictor == *p)
                    .map(|r| (obs[&r.sample].descriptors[d], r.descriptors[d], 0.0))
                    .collect(),
            })
            .collect();
        let path = out.join("plots").join(format!("descriptor_{name}.png"));
        scatter_png(&series, &path)?;
        files.push(path);
    }

    let path = out.join("report.json");
    write_json(&path, report)?;
    files.push(path);

    let mut index = Vec::with_capacity(files.len());
    for f in &files {
        let bytes = fs::read(f).map_err(|e| Error::io(f, e))?;
        index.push(IndexEntry {
            file: f.strip_prefix(out).unwrap_or(f).to_string_lossy().replace('\\', "/"),
            bytes: bytes.len() as u64,
            sha256: hex(&Sha256::digest(&bytes)),
        });
    }
    let path = out.join("index.json");
    write_json(&path, &index)?;
    files.push(path);
    Ok(files)
}
