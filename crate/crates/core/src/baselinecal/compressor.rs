use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::pca::Pca;
use crate::diffcore::persist::{read_f64_file, read_json, write_f64_file, write_json};
use crate::error::{Error, Result};
use crate::real::Real;

/// Image components kept by default.
pub const DEFAULT_K_IMG: usize = 4;

/// Maps a multi-modal output to a short vector `[image scores, scalars]`,
/// every entry min-max scaled onto [0, 1] over the fitting population.
#[derive(Clone, Debug, PartialEq)]
pub struct OutputCompressor<T> {
    pub side: usize,
    pub n_scalars: usize,
    pub image_pca: Pca<T>,
    /// Per-entry lower bound and span of `[scores, scalars]`.
    pub lo: Vec<T>,
    pub span: Vec<T>,
    /// Optional second PCA over the scaled concatenation.
    pub all_pca: Option<Pca<T>>,
    pub fitted_on: usize,
}

impl<T: Real> OutputCompressor<T> {
    pub fn k_img(&self) -> usize {
        self.image_pca.k
    }

    /// Length of the concatenated, scaled vector before any second PCA.
    pub fn stacked_dim(&self) -> usize {
        self.k_img() + self.n_scalars
    }

    pub fn output_dim(&self) -> usize {
        self.all_pca.as_ref().map_or(self.stacked_dim(), |p| p.k)
    }

    fn stack(&self, scalars: &[T], image: &[T]) -> Vec<T> {
        let mut v = self.image_pca.project(image);
        v.extend_from_slice(scalars);
        v.iter_mut().zip(self.lo.iter().zip(&self.span)).for_each(|(x, (l, s))| *x = (*x - *l) / *s);
        v
    }

    pub fn compress(&self, scalars: &[T], image: &[T]) -> Result<Vec<T>> {
        if scalars.len() != self.n_scalars || image.len() != self.image_pca.dim {
            return Err(Error::invalid(format!(
                "compress: expected {} scalars and {} pixels, got {} and {}",
                self.n_scalars,
                self.image_pca.dim,
                scalars.len(),
                image.len()
            )));
        }
        let v = self.stack(scalars, image);
        Ok(match &self.all_pca {
            Some(p) => p.project(&v),
            None => v,
        })
    }

    /// Inverse map through the transposed bases; returns `(scalars, image)`.
    pub fn decompress(&self, y: &[T]) -> Result<(Vec<T>, Vec<T>)> {
        if y.len() != self.output_dim() {
            return Err(Error::invalid(format!("decompress: expected {} values, got {}", self.output_dim(), y.len())));
        }
        let mut v = match &self.all_pca {
            Some(p) => p.reconstruct(y),
            None => y.to_vec(),
        };
        v.iter_mut().zip(self.lo.iter().zip(&self.span)).for_each(|(x, (l, s))| *x = *x * *s + *l);
        let scalars = v.split_off(self.k_img());
        Ok((scalars, self.image_pca.reconstruct(&v)))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let f = |v: &[T]| v.iter().map(|x| x.as_f64()).collect::<Vec<_>>();
        let image = PcaMeta::store(&self.image_pca, dir, "image")?;
        let all = self.all_pca.as_ref().map(|p| PcaMeta::store(p, dir, "all")).transpose()?;
        write_f64_file(&dir.join("scale_lo.f64"), f(&self.lo))?;
        write_f64_file(&dir.join("scale_span.f64"), f(&self.span))?;
        let manifest = CompressorManifest {
            format_version: 1,
            side: self.side,
            n_scalars: self.n_scalars,
            fitted_on: self.fitted_on,
            image,
            all,
        };
        write_json(&dir.join("compressor.json"), &manifest)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let m: CompressorManifest = read_json(&dir.join("compressor.json"))?;
        if m.format_version != 1 {
            return Err(Error::invalid(format!("unsupported compressor format {}", m.format_version)));
        }
        let image_pca = m.image.restore(dir)?;
        let all_pca = m.all.as_ref().map(|meta| meta.restore(dir)).transpose()?;
        let t = |v: Vec<f64>| v.into_iter().map(T::lit).collect::<Vec<_>>();
        let c = OutputCompressor {
            side: m.side,
            n_scalars: m.n_scalars,
            image_pca,
            lo: t(read_f64_file(&dir.join("scale_lo.f64"))?),
            span: t(read_f64_file(&dir.join("scale_span.f64"))?),
            all_pca,
            fitted_on: m.fitted_on,
        };
        if c.lo.len() != c.stacked_dim() || c.span.len() != c.stacked_dim() || c.image_pca.dim != c.side * c.side {
            return Err(Error::invalid(format!("{}: inconsistent compressor dimensions", dir.display())));
        }
        Ok(c)
    }
}

#[derive(Serialize, Deserialize)]
struct PcaMeta {
    prefix: String,
    k: usize,
    dim: usize,
}

impl PcaMeta {
    fn store<T: Real>(p: &Pca<T>, dir: &Path, prefix: &str) -> Result<Self> {
        let f = |v: &[T]| v.iter().map(|x| x.as_f64()).collect::<Vec<_>>();
        write_f64_file(&dir.join(format!("{prefix}_mean.f64")), f(&p.mean))?;
        write_f64_file(&dir.join(format!("{prefix}_basis.f64")), f(&p.basis))?;
        let mut var = f(&p.variances);
        var.push(p.total_variance.as_f64());
        write_f64_file(&dir.join(format!("{prefix}_variances.f64")), var)?;
        Ok(PcaMeta { prefix: prefix.to_string(), k: p.k, dim: p.dim })
    }

    fn restore<T: Real>(&self, dir: &Path) -> Result<Pca<T>> {
        let read = |what: &str| read_f64_file(&dir.join(format!("{}_{what}.f64", self.prefix)));
        let (mean, basis, mut var) = (read("mean")?, read("basis")?, read("variances")?);
        if mean.len() != self.dim || basis.len() != self.k * self.dim || var.len() != self.k + 1 {
            return Err(Error::invalid(format!("{}: PCA tensors do not match their manifest", self.prefix)));
        }
        let total = var.pop().expect("total variance");
        let t = |v: Vec<f64>| v.into_iter().map(T::lit).collect::<Vec<_>>();
        Ok(Pca { dim: self.dim, k: self.k, mean: t(mean), basis: t(basis), variances: t(var), total_variance: T::lit(total) })
    }
}

#[derive(Serialize, Deserialize)]
struct CompressorManifest {
    format_version: u32,
    side: usize,
    n_scalars: usize,
    fitted_on: usize,
    image: PcaMeta,
    all: Option<PcaMeta>,
}

/// Fits the compressor to `n` outputs: `scalars` is `n × n_scalars`, `images` is `n × side²`.
pub fn fit_compressor<T: Real>(
    scalars: &[T],
    images: &[T],
    n: usize,
    side: usize,
    k_img: usize,
    k_all: Option<usize>,
) -> Result<OutputCompressor<T>> {
    let pixels = side * side;
    if n == 0 || images.len() != n * pixels || scalars.len() % n != 0 {
        return Err(Error::invalid(format!("fit_compressor: inconsistent shapes for {n} samples")));
    }
    if k_img > pixels {
        return Err(Error::invalid(format!("k_img = {k_img} exceeds pixel count {pixels}")));
    }
    let n_scalars = scalars.len() / n;
    let image_pca = Pca::fit(images, n, pixels, k_img)?;
    let stacked = k_img + n_scalars;

    let mut rows = Vec::with_capacity(n * stacked);
    for i in 0..n {
        rows.extend(image_pca.project(&images[i * pixels..(i + 1) * pixels]));
        rows.extend_from_slice(&scalars[i * n_scalars..(i + 1) * n_scalars]);
    }
    let mut lo = vec![T::infinity(); stacked];
    let mut hi = vec![T::neg_infinity(); stacked];
    for row in rows.chunks_exact(stacked) {
        for j in 0..stacked {
            lo[j] = lo[j].min(row[j]);
            hi[j] = hi[j].max(row[j]);
        }
    }
    // Constant entries keep unit span so the map stays invertible.
    let span: Vec<T> = lo
        .iter()
        .zip(&hi)
        .map(|(l, h)| {
            let s = *h - *l;
            if s > T::epsilon() * (l.abs() + h.abs() + T::one()) { s } else { T::one() }
        })
        .collect();

    let mut c = OutputCompressor { side, n_scalars, image_pca, lo, span, all_pca: None, fitted_on: n };
    if let Some(k) = k_all {
        let scaled: Vec<T> = (0..n)
            .flat_map(|i| c.stack(&scalars[i * n_scalars..(i + 1) * n_scalars], &images[i * pixels..(i + 1) * pixels]))
            .collect();
        c.all_pca = Some(Pca::fit(&scaled, n, stacked, k)?);
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample(n: usize, side: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scalars = (0..n * 3).map(|_| rng.random_range(-2.0..5.0)).collect();
        let images = (0..n * side * side).map(|_| rng.random_range(0.0..2.0)).collect();
        (scalars, images)
    }

    #[test]
    fn full_rank_round_trip() {
        let (s, im) = sample(40, 4, 1);
        let c = fit_compressor(&s, &im, 40, 4, 16, None).unwrap();
        for i in 0..40 {
            let y = c.compress(&s[i * 3..i * 3 + 3], &im[i * 16..i * 16 + 16]).unwrap();
            let (rs, ri) = c.decompress(&y).unwrap();
            for (a, b) in rs.iter().zip(&s[i * 3..i * 3 + 3]).chain(ri.iter().zip(&im[i * 16..i * 16 + 16])) {
                assert!((a - b).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn scores_scaled_to_unit_range() {
        let (s, im) = sample(30, 3, 2);
        let c = fit_compressor(&s, &im, 30, 3, 4, None).unwrap();
        let ys: Vec<Vec<f64>> = (0..30).map(|i| c.compress(&s[i * 3..i * 3 + 3], &im[i * 9..i * 9 + 9]).unwrap()).collect();
        for j in 0..c.output_dim() {
            let lo = ys.iter().map(|y| y[j]).fold(f64::INFINITY, f64::min);
            let hi = ys.iter().map(|y| y[j]).fold(f64::NEG_INFINITY, f64::max);
            assert!(lo.abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn second_stage_reduces_dimension() {
        let (s, im) = sample(30, 3, 3);
        let c = fit_compressor(&s, &im, 30, 3, 4, Some(5)).unwrap();
        assert_eq!(c.output_dim(), 5);
        let y = c.compress(&s[..3], &im[..9]).unwrap();
        let (rs, ri) = c.decompress(&y).unwrap();
        assert_eq!((rs.len(), ri.len()), (3, 9));
        let full = fit_compressor(&s, &im, 30, 3, 4, Some(7)).unwrap();
        let (fs, _) = full.decompress(&full.compress(&s[..3], &im[..9]).unwrap()).unwrap();
        let direct = c.image_pca.project(&im[..9]);
        assert_eq!(direct.len(), 4);
        for (a, b) in fs.iter().zip(&s[..3]) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_oversized_k() {
        let (s, im) = sample(10, 2, 4);
        assert!(fit_compressor(&s, &im, 10, 2, 5, None).is_err());
        assert!(fit_compressor(&s, &im, 10, 2, 4, None).is_ok());
        let (s, im) = sample(3, 2, 4);
        assert!(fit_compressor(&s, &im, 3, 2, 3, None).is_err());
    }

    #[test]
    fn persistence_round_trip() {
        let (s, im) = sample(20, 3, 5);
        let c = fit_compressor(&s, &im, 20, 3, 4, Some(6)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        c.save(dir.path()).unwrap();
        let back: OutputCompressor<f64> = OutputCompressor::load(dir.path()).unwrap();
        assert_eq!(back, c);
    }
}
