//! Dataset directory: inputs/scalars/sigmas CSVs, raw image block, JSON manifest.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, DatasetMeta};
use super::schema::*;
use crate::diffcore::persist::{read_f64_file, read_json, write_f64_file, write_json};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct Manifest {
    count: usize,
    image_side: usize,
    #[serde(flatten)]
    meta: DatasetMeta,
}

fn write_table(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    let csv_err = |e: csv::Error| Error::invalid(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_table<const N: usize>(path: &Path, header: &[&str; N]) -> Result<Vec<[f64; N]>> {
    let csv_err = |e: csv::Error| Error::invalid(format!("{}: {e}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let got: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if got != header.iter().map(|s| s.to_string()).collect::<Vec<_>>() {
        return Err(Error::invalid(format!("{}: unexpected header {:?}", path.display(), got)));
    }
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != N {
            return Err(Error::invalid(format!("{}: row {} has {} fields", path.display(), line + 1, rec.len())));
        }
        let mut row = [0.0; N];
        for (k, field) in rec.iter().enumerate() {
            row[k] = field
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("{}: bad number `{field}` in row {}", path.display(), line + 1)))?;
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn save_dataset(data: &Dataset, dir: &Path) -> Result<()> {
    data.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_table(&dir.join("inputs.csv"), &INPUT_NAMES, data.inputs.iter().map(|x| x.0.to_vec()))?;
    write_table(&dir.join("scalars.csv"), &SCALAR_NAMES, data.scalars.iter().map(|r| r.to_vec()))?;
    write_table(&dir.join("sigmas.csv"), &SCALAR_NAMES, data.sigmas.iter().map(|r| r.to_vec()))?;
    write_f64_file(&dir.join("images.bin"), data.images.iter().copied())?;
    write_json(&dir.join("manifest.json"), &Manifest { count: data.len(), image_side: data.side, meta: data.meta.clone() })
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest: Manifest = read_json(&dir.join("manifest.json"))?;
    let inputs = read_table(&dir.join("inputs.csv"), &INPUT_NAMES)?;
    let scalars = read_table(&dir.join("scalars.csv"), &SCALAR_NAMES)?;
    let sigmas = read_table(&dir.join("sigmas.csv"), &SCALAR_NAMES)?;
    let images = read_f64_file(&dir.join("images.bin"))?;
    let n = manifest.count;
    if inputs.len() != n || scalars.len() != n || sigmas.len() != n || images.len() != n * manifest.image_side.pow(2) {
        return Err(Error::invalid(format!("{}: file sizes disagree with manifest count {n}", dir.display())));
    }
    let data = Dataset {
        side: manifest.image_side,
        inputs: inputs.into_iter().map(DesignPoint).collect(),
        scalars,
        sigmas,
        images,
        meta: manifest.meta,
    };
    data.validate()?;
    Ok(data)
}
