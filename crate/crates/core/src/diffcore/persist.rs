//! Directory persistence: `manifest.json` plus one little-endian f64 file per tensor.
//!
//! f32 parameters are widened on save and narrowed on load, which is exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layer::{Layer, LayerSpec};
use super::params::ParameterSet;
use crate::error::{Error, Result};
use crate::real::Real;

const MANIFEST: &str = "manifest.json";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    name: String,
    layers: Vec<LayerEntry>,
}

#[derive(Serialize, Deserialize)]
struct LayerEntry {
    spec: LayerSpec,
    weight_file: String,
    bias_file: String,
}

pub fn write_f64_file(path: &Path, values: impl IntoIterator<Item = f64>) -> Result<()> {
    let bytes: Vec<u8> = values.into_iter().flat_map(f64::to_le_bytes).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_f64_file(path: &Path) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::invalid(format!("{}: length {} is not a multiple of 8", path.display(), bytes.len())));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect())
}

pub fn write_json<S: Serialize + ?Sized>(path: &Path, value: &S) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<D: for<'de> Deserialize<'de>>(path: &Path) -> Result<D> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn save_parameters<T: Real>(params: &ParameterSet<T>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(params.layers().len());
    for (i, layer) in params.layers().iter().enumerate() {
        let weight_file = format!("{i:03}_{}.weight.f64", layer.spec.name);
        let bias_file = format!("{i:03}_{}.bias.f64", layer.spec.name);
        write_f64_file(&dir.join(&weight_file), layer.weight.iter().map(|v| v.as_f64()))?;
        write_f64_file(&dir.join(&bias_file), layer.bias.iter().map(|v| v.as_f64()))?;
        entries.push(LayerEntry { spec: layer.spec.clone(), weight_file, bias_file });
    }
    let manifest = Manifest { format_version: FORMAT_VERSION, name: params.name.clone(), layers: entries };
    write_json(&dir.join(MANIFEST), &manifest)
}

pub fn load_parameters<T: Real>(dir: &Path) -> Result<ParameterSet<T>> {
    let manifest: Manifest = read_json(&dir.join(MANIFEST))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::invalid(format!(
            "{}: unsupported parameter format version {}",
            dir.display(),
            manifest.format_version
        )));
    }
    let mut layers = Vec::with_capacity(manifest.layers.len());
    for entry in manifest.layers {
        let mut layer = Layer::<T>::zeros(entry.spec);
        let weight = read_f64_file(&dir.join(&entry.weight_file))?;
        let bias = read_f64_file(&dir.join(&entry.bias_file))?;
        if weight.len() != layer.weight.len() || bias.len() != layer.bias.len() {
            return Err(Error::Shape {
                layer: layer.spec.name.clone(),
                detail: format!(
                    "stored tensors have {}+{} values, layer expects {}+{}",
                    weight.len(),
                    bias.len(),
                    layer.weight.len(),
                    layer.bias.len()
                ),
            });
        }
        layer.weight = weight.into_iter().map(T::lit).collect();
        layer.bias = bias.into_iter().map(T::lit).collect();
        layers.push(layer);
    }
    ParameterSet::from_layers(manifest.name, layers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::layer::Activation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net<T: Real>() -> ParameterSet<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        ParameterSet::init(
            "net",
            vec![
                LayerSpec::conv_down("c", 1, 2, 8, Activation::LeakyRelu),
                LayerSpec::dense("d", 32, 3, Activation::Tanh),
            ],
            &mut rng,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact_f64() {
        let dir = tempfile::tempdir().unwrap();
        let p = net::<f64>();
        save_parameters(&p, dir.path()).unwrap();
        let q: ParameterSet<f64> = load_parameters(dir.path()).unwrap();
        assert!(p.bits_equal(&q));
        assert_eq!(p.specs(), q.specs());
    }

    #[test]
    fn round_trip_is_bit_exact_f32() {
        let dir = tempfile::tempdir().unwrap();
        let p = net::<f32>();
        save_parameters(&p, dir.path()).unwrap();
        let q: ParameterSet<f32> = load_parameters(dir.path()).unwrap();
        assert!(p.bits_equal(&q));
    }

    #[test]
    fn truncated_tensor_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_parameters(&net::<f64>(), dir.path()).unwrap();
        let f = dir.path().join("001_d.bias.f64");
        write_f64_file(&f, [1.0, 2.0]).unwrap();
        let err = load_parameters::<f64>(dir.path()).unwrap_err();
        assert!(err.to_string().contains("`d`"), "{err}");
    }
}
