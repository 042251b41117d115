use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::schema::*;
use crate::error::{Error, Result};

/// Uniform draws over the input ranges with some components pinned.
pub fn sample_inputs(n: usize, fixed: &[(usize, f64)], seed: u64) -> Result<Vec<DesignPoint>> {
    if n == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    for &(i, v) in fixed {
        if i >= N_INPUTS {
            return Err(Error::invalid(format!("input index {i} out of range")));
        }
        check_input(i, v)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let mut v: [f64; N_INPUTS] = std::array::from_fn(|i| {
                let (lo, hi) = INPUT_RANGES[i];
                lo + (hi - lo) * rng.random::<f64>()
            });
            for &(i, val) in fixed {
                v[i] = val;
            }
            DesignPoint(v)
        })
        .collect())
}

/// Resolves `(name, value)` pairs into indexed assignments.
pub fn resolve_fixed(named: &[(String, f64)]) -> Result<Vec<(usize, f64)>> {
    named.iter().map(|(n, v)| Ok((input_index(n)?, *v))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fully_fixed_returns_that_point() {
        let v = [1.0, 0.5, -3.0, 2.0, 0.1, 0.0, 0.2, 10.0, 0.2];
        let fixed: Vec<(usize, f64)> = v.iter().copied().enumerate().collect();
        let xs = sample_inputs(1, &fixed, 0).unwrap();
        assert_eq!(xs[0].0, v);
    }

    #[test]
    fn empirical_ranges_cover_table() {
        let xs = sample_inputs(10_000, &[], 1).unwrap();
        for i in 0..N_INPUTS {
            let (lo, hi) = INPUT_RANGES[i];
            let tol = 0.01 * (hi - lo);
            let mn = xs.iter().map(|x| x.0[i]).fold(f64::INFINITY, f64::min);
            let mx = xs.iter().map(|x| x.0[i]).fold(f64::NEG_INFINITY, f64::max);
            assert!(mn >= lo && mn - lo < tol, "{i}: min {mn}");
            assert!(mx <= hi && hi - mx < tol, "{i}: max {mx}");
        }
    }

    #[test]
    fn out_of_range_fixed_rejected() {
        assert!(sample_inputs(3, &[(IDX_PREHEAT, 60.0)], 0).is_err());
        assert!(sample_inputs(0, &[], 0).is_err());
    }
}
