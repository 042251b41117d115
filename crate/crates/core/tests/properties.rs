use biascal::baselinecal::{fit_compressor, fit_linear};
use biascal::harness::{make_splits, Protocol, SplitPlan};
use biascal::linalg::sym_eigen;
use biascal::metrics::{bulk_shift, chi2n, image_descriptors, r2, BasisConfig};
use biascal::toydata::{normalize_image, sample_inputs, NormStats, N_INPUTS, N_SCALARS};
use proptest::prelude::*;

fn values(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100.0..100.0f64, n)
}

fn shuffled<T: Clone>(v: &[T], perm: &[usize]) -> Vec<T> {
    perm.iter().map(|&i| v[i].clone()).collect()
}

fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    let mut s = seed | 1;
    for i in (1..n).rev() {
        s ^= s << 13;
        s ^= s >> 7;
        s ^= s << 17;
        p.swap(i, (s % (i as u64 + 1)) as usize);
    }
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metrics_ignore_sample_order(obs in values(3..40), noise in values(40..41), seed in any::<u64>()) {
        let n = obs.len();
        let pred: Vec<f64> = obs.iter().zip(&noise).map(|(o, e)| o + 0.1 * e).collect();
        let sigma: Vec<f64> = noise[..n].iter().map(|e| 1.0 + e.abs()).collect();
        let p = permutation(n, seed);
        let (o2, p2, s2) = (shuffled(&obs, &p), shuffled(&pred, &p), shuffled(&sigma, &p));
        let c = chi2n(&obs, &pred, &sigma).unwrap();
        prop_assert!((c - chi2n(&o2, &p2, &s2).unwrap()).abs() <= 1e-9 * (1.0 + c));
        if let Ok(r) = r2(&obs, &pred) {
            prop_assert!((r - r2(&o2, &p2).unwrap()).abs() <= 1e-9 * (1.0 + r.abs()));
            prop_assert!(r <= 1.0);
        }
        if let Ok(b) = bulk_shift(&obs, &pred) {
            prop_assert!(b >= 0.0);
        }
    }

    #[test]
    fn perfect_prediction_scores(obs in values(2..30)) {
        let sigma = vec![0.5; obs.len()];
        prop_assert_eq!(chi2n(&obs, &obs, &sigma).unwrap(), 0.0);
        if let Ok(r) = r2(&obs, &obs) {
            prop_assert_eq!(r, 1.0);
        }
    }

    #[test]
    fn quarter_turn_flips_shape_only(pixels in prop::collection::vec(0.0..1.0f64, 64), hot in 0usize..64) {
        let side = 8;
        let mut img = pixels;
        img[hot] += 5.0;
        let rotated: Vec<f64> = (0..side * side).map(|k| {
            let (r, c) = (k / side, k % side);
            img[(side - 1 - c) * side + r]
        }).collect();
        let cfg = BasisConfig::default();
        let (a, b) = (image_descriptors(&img, &cfg).unwrap(), image_descriptors(&rotated, &cfg).unwrap());
        prop_assert!((a.radius_mode - b.radius_mode).abs() < 1e-9);
        prop_assert!((a.shape_mode + b.shape_mode).abs() < 1e-9);
        prop_assert!((a.max_amplitude - b.max_amplitude).abs() < 1e-12);
    }

    #[test]
    fn image_normalization_gives_unit_mean(mut img in prop::collection::vec(0.0..10.0f64, 16..100)) {
        img[0] += 0.1;
        normalize_image(&mut img).unwrap();
        let mean = img.iter().sum::<f64>() / img.len() as f64;
        prop_assert!((mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scalar_normalization_round_trips(rows in prop::collection::vec(prop::array::uniform10(-50.0..50.0f64), 2..20)) {
        prop_assume!((0..N_SCALARS).all(|k| rows.iter().any(|r| r[k] != rows[0][k])));
        let stats = NormStats::fit(&rows).unwrap();
        for r in &rows {
            let f = stats.forward(r);
            prop_assert!(f.iter().all(|v| (-1e-12..=1.0 + 1e-12).contains(v)));
            let back = stats.inverse(&f);
            for (a, b) in back.iter().zip(r) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn sampled_inputs_stay_in_range(n in 1usize..50, seed in any::<u64>()) {
        let xs = sample_inputs(n, &[(0, 1.0)], seed).unwrap();
        prop_assert_eq!(xs.len(), n);
        prop_assert!(xs.iter().all(|x| x.in_range() && x.0[0] == 1.0 && x.0.len() == N_INPUTS));
    }

    #[test]
    fn random_splits_partition(n in 3usize..15, k_frac in 0.1..0.9f64, seed in any::<u64>()) {
        let k = ((n as f64 * k_frac) as usize).clamp(1, n - 1);
        let plan = make_splits(&SplitPlan { protocol: Protocol::RandomWithReplacement, n_samples: n, train_k: k, n_splits: 20, seed, splits: vec![] }).unwrap();
        for s in &plan.splits {
            prop_assert_eq!(s.train.len(), k);
            prop_assert!(s.train.iter().all(|i| !s.validation.contains(i)));
            let mut all: Vec<usize> = s.train.iter().chain(&s.validation).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn ridge_fit_is_finite_at_any_rank(n in 1usize..10, d in 1usize..16, seed in any::<u64>(), lambda in 1e-6..10.0f64) {
        let p = permutation(n * d * 2, seed);
        let x: Vec<Vec<f64>> = (0..n).map(|i| (0..d).map(|j| p[i * d + j] as f64 / 7.0).collect()).collect();
        let y: Vec<Vec<f64>> = (0..n).map(|i| (0..d).map(|j| p[n * d + i * d + j] as f64 / 3.0).collect()).collect();
        prop_assert!(fit_linear(&x, &y, lambda).unwrap().is_finite());
    }

    #[test]
    fn calibrator_is_affine(a in values(5..6), b in values(5..6), alpha in -3.0..3.0f64, beta in -3.0..3.0f64) {
        let x: Vec<Vec<f64>> = (0..12).map(|i| (0..5).map(|j| ((i * 5 + j) as f64 * 0.37).sin()).collect()).collect();
        let y: Vec<Vec<f64>> = x.iter().map(|r| r.iter().rev().map(|v| 2.0 * v + 0.3).collect()).collect();
        let cal = fit_linear(&x, &y, 0.1).unwrap();
        let lin = |v: &[f64]| -> Vec<f64> { cal.apply(v).iter().zip(&cal.intercept).map(|(p, c)| p - c).collect() };
        let mix: Vec<f64> = a.iter().zip(&b).map(|(p, q)| alpha * p + beta * q).collect();
        let (la, lb, lm) = (lin(&a), lin(&b), lin(&mix));
        for i in 0..5 {
            prop_assert!((lm[i] - (alpha * la[i] + beta * lb[i])).abs() < 1e-9 * (1.0 + lm[i].abs()));
        }
    }

    #[test]
    fn eigen_decomposition_reconstructs(entries in prop::collection::vec(-5.0..5.0f64, 36)) {
        let n = 6;
        let a: Vec<f64> = (0..n * n).map(|k| { let (i, j) = (k / n, k % n); entries[i.min(j) * n + i.max(j)] }).collect();
        let eig = sym_eigen(&a, n).unwrap();
        for i in 0..n {
            for j in 0..n {
                let v: f64 = (0..n).map(|k| eig.values[k] * eig.vector(k)[i] * eig.vector(k)[j]).sum();
                prop_assert!((v - a[i * n + j]).abs() < 1e-9);
            }
        }
        let oracle = nalgebra::DMatrix::from_row_slice(n, n, &a).symmetric_eigen();
        let mut ev: Vec<f64> = oracle.eigenvalues.iter().copied().collect();
        ev.sort_by(|x, y| y.partial_cmp(x).unwrap());
        for (x, y) in eig.values.iter().zip(&ev) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn compressor_round_trip_monotone(seed in any::<u64>()) {
        let (n, side) = (30, 4);
        let p = permutation(n * (side * side + 2), seed);
        let scalars: Vec<f64> = (0..n * 2).map(|i| p[i] as f64).collect();
        let images: Vec<f64> = (0..n * side * side).map(|i| p[n * 2 + i] as f64 / 100.0).collect();
        let mut last = f64::INFINITY;
        for k in 1..=16 {
            let c = fit_compressor(&scalars, &images, n, side, k, None).unwrap();
            let err: f64 = (0..n).map(|i| {
                let img = &images[i * 16..(i + 1) * 16];
                let (_, back) = c.decompress(&c.compress(&scalars[i * 2..i * 2 + 2], img).unwrap()).unwrap();
                back.iter().zip(img).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
            }).sum();
            prop_assert!(err <= last * (1.0 + 1e-9) + 1e-12);
            last = err;
        }
    }
}
