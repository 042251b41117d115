//! Squared maximum mean discrepancy between a latent batch and N(0, I).
//!
//! With the Gaussian kernel `k(a, b) = exp(−‖a−b‖²/(2h²))` the expectations
//! against the standard normal are closed-form, so no prior samples are drawn:
//! `E_x k(z, x) = (h²/(h²+1))^{d/2} exp(−‖z‖²/(2(h²+1)))` and
//! `E_{x,x'} k(x, x') = (h²/(h²+2))^{d/2}`.

/// Value and gradient w.r.t. the `n × d` batch `z`. Bandwidth `h² = 2d`.
pub fn mmd_to_standard_normal(z: &[f64], n: usize, d: usize) -> (f64, Vec<f64>) {
    let h2 = 2.0 * d as f64;
    let nf = n as f64;
    let c1 = (h2 / (h2 + 1.0)).powf(d as f64 / 2.0);
    let c2 = (h2 / (h2 + 2.0)).powf(d as f64 / 2.0);
    let mut grad = vec![0.0; n * d];
    let mut within = 0.0;
    for i in 0..n {
        let zi = &z[i * d..(i + 1) * d];
        for j in (i + 1)..n {
            let zj = &z[j * d..(j + 1) * d];
            let dist2: f64 = zi.iter().zip(zj).map(|(a, b)| (a - b) * (a - b)).sum();
            let k = (-dist2 / (2.0 * h2)).exp();
            within += 2.0 * k;
            // d/dz_i of 2k/n² is −2k(z_i − z_j)/(h² n²); z_j gets the opposite sign.
            let s = 2.0 * k / (h2 * nf * nf);
            for t in 0..d {
                let diff = zi[t] - zj[t];
                grad[i * d + t] -= s * diff;
                grad[j * d + t] += s * diff;
            }
        }
    }
    within = (within + nf) / (nf * nf);
    let mut cross = 0.0;
    for i in 0..n {
        let zi = &z[i * d..(i + 1) * d];
        let norm2: f64 = zi.iter().map(|v| v * v).sum();
        let e = c1 * (-norm2 / (2.0 * (h2 + 1.0))).exp();
        cross += e;
        let s = 2.0 * e / (nf * (h2 + 1.0));
        for t in 0..d {
            grad[i * d + t] += s * zi[t];
        }
    }
    cross *= 2.0 / nf;
    (within - cross + c2, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn gradient_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (n, d) = (5, 3);
        let z: Vec<f64> = (0..n * d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let (_, g) = mmd_to_standard_normal(&z, n, d);
        let h = 1e-6;
        for k in 0..z.len() {
            let mut zp = z.clone();
            zp[k] += h;
            let mut zm = z.clone();
            zm[k] -= h;
            let num = (mmd_to_standard_normal(&zp, n, d).0 - mmd_to_standard_normal(&zm, n, d).0) / (2.0 * h);
            assert!((num - g[k]).abs() < 1e-8, "{k}: {num} vs {}", g[k]);
        }
    }

    #[test]
    fn normal_batch_scores_lower_than_shifted() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (n, d) = (200, 4);
        let z: Vec<f64> = (0..n * d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let shifted: Vec<f64> = z.iter().map(|v| v + 2.0).collect();
        let a = mmd_to_standard_normal(&z, n, d).0;
        let b = mmd_to_standard_normal(&shifted, n, d).0;
        assert!(a >= -1e-12 && a < 0.01 && b > 10.0 * a, "{a} {b}");
    }
}
