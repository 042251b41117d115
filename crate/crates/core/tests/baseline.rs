mod common;

use biascal::baselinecal::{
    apply_baseline, bagged_predict, compress_dataset, fit_baseline, fit_compressor, fit_compressor_dataset, fit_linear,
    BaselineConfig, LinearCalibrator,
};
use nalgebra::DMatrix;

fn images_matrix(images: &[f64], n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(n, p, images)
}

#[test]
fn pca_axes_match_dense_covariance_eigenvectors() {
    let f = common::fixture();
    let sims = &f.campaign.sims;
    let (n, p) = (sims.len(), sims.pixels());
    let comp = fit_compressor_dataset(sims, &BaselineConfig { k_img: 6, ..Default::default() }).unwrap();

    let x = images_matrix(&sims.images, n, p);
    let mean = x.row_mean();
    let centered = DMatrix::from_fn(n, p, |i, j| x[(i, j)] - mean[j]);
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let eig = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    for (j, &col) in order.iter().take(6).enumerate() {
        let oracle = eig.eigenvectors.column(col);
        let ours = comp.image_pca.axis(j);
        let dot: f64 = ours.iter().zip(oracle.iter()).map(|(a, b)| a * b).sum();
        let sign = dot.signum();
        let err = ours.iter().zip(oracle.iter()).map(|(a, b)| (a - sign * b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-6, "axis {j}: {err}");
        assert!((comp.image_pca.variances[j] - eig.eigenvalues[col]).abs() < 1e-8 * eig.eigenvalues[col].max(1.0));
    }
    assert!(comp.image_pca.orthonormality_error() < 1e-8);
}

#[test]
fn round_trip_error_shrinks_with_more_components() {
    let f = common::fixture();
    let sims = &f.campaign.sims;
    let scalars: Vec<f64> = sims.scalars.iter().flatten().copied().collect();
    let mut last = f64::INFINITY;
    for k in [1, 2, 4, 8, 16, 32, 64] {
        let comp = fit_compressor(&scalars, &sims.images, sims.len(), sims.side, k, None).unwrap();
        let err: f64 = (0..sims.len())
            .map(|i| {
                let y = comp.compress(&sims.scalars[i], sims.image(i)).unwrap();
                let (_, img) = comp.decompress(&y).unwrap();
                img.iter().zip(sims.image(i)).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
            })
            .sum();
        assert!(err <= last * (1.0 + 1e-9), "k = {k}: {err} > {last}");
        last = err;
    }
    assert!(last < 1e-12, "full basis leaves {last}");
}

#[test]
fn identity_map_with_full_basis_reproduces_surrogate() {
    let f = common::fixture();
    let sims = &f.campaign.sims;
    let comp = fit_compressor_dataset(sims, &BaselineConfig { k_img: sims.pixels(), ..Default::default() }).unwrap();
    let xs = &f.campaign.exp_validation.inputs;
    let id = LinearCalibrator::identity(comp.output_dim());
    let a = apply_baseline(&f.model, &comp, &id, xs).unwrap();
    let b = f.model.predict_batch(xs).unwrap();
    for (p, q) in a.scalars.iter().flatten().zip(b.scalars.iter().flatten()).chain(a.images.iter().zip(&b.images)) {
        assert!((p - q).abs() < 1e-8 * (1.0 + q.abs()), "{p} vs {q}");
    }
}

#[test]
fn bagging_singleton_and_shape() {
    let f = common::fixture();
    let comp = fit_compressor_dataset(&f.campaign.sims, &BaselineConfig::default()).unwrap();
    let train = &f.campaign.exp_train;
    let cal = fit_baseline(&f.model, &comp, train, 1e-2).unwrap();
    let xs = &f.campaign.exp_validation.inputs;
    assert_eq!(bagged_predict(&[cal.clone()], &f.model, &comp, xs).unwrap(), apply_baseline(&f.model, &comp, &cal, xs).unwrap());
    assert!(bagged_predict(&[], &f.model, &comp, xs).is_err());
    assert_eq!(cal.dim, 4 + 10);
}

#[test]
fn seven_pairs_need_ridge() {
    let f = common::fixture();
    let comp = fit_compressor_dataset(&f.campaign.sims, &BaselineConfig::default()).unwrap();
    let train = f.campaign.exp_train.subset(&[0, 1, 2, 3, 4, 5, 6]);
    let err = fit_baseline(&f.model, &comp, &train, 0.0).unwrap_err();
    assert!(err.is_validation(), "{err}");
    let y = compress_dataset(&comp, &train).unwrap();
    assert!(fit_linear(&y, &y, 1e-2).unwrap().is_finite());
}

#[test]
fn compressor_rejects_normalized_data() {
    let f = common::fixture();
    let normed = f.model.normalized(&f.campaign.sims).unwrap();
    assert!(fit_compressor_dataset(&normed, &BaselineConfig::default()).is_err());
    assert!(fit_compressor_dataset(&f.campaign.sims, &BaselineConfig { k_img: 65, ..Default::default() }).is_err());
}
