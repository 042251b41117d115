use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Training subsets drawn per held-out sample.
pub const HOLDOUT_REPEATS: usize = 15;

/// Largest EXHAUSTIVE plan accepted.
const MAX_EXHAUSTIVE: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Protocol {
    RandomWithReplacement,
    Exhaustive,
    HoldoutX15,
}

impl std::str::FromStr for Protocol {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "RANDOM_WITH_REPLACEMENT" | "RANDOM" => Ok(Protocol::RandomWithReplacement),
            "EXHAUSTIVE" => Ok(Protocol::Exhaustive),
            "HOLDOUT_X15" | "HOLDOUT" => Ok(Protocol::HoldoutX15),
            _ => Err(Error::invalid(format!("unknown split protocol `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub id: usize,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitPlan {
    pub protocol: Protocol,
    pub n_samples: usize,
    pub train_k: usize,
    /// Used by RANDOM_WITH_REPLACEMENT only.
    pub n_splits: usize,
    pub seed: u64,
    /// Filled by [`make_splits`]; a non-empty list supplied up front is taken as is.
    pub splits: Vec<Split>,
}

impl Default for SplitPlan {
    fn default() -> Self {
        SplitPlan {
            protocol: Protocol::RandomWithReplacement,
            n_samples: 10,
            train_k: 7,
            n_splits: 100,
            seed: 0,
            splits: Vec::new(),
        }
    }
}

impl SplitPlan {
    pub fn new(protocol: Protocol, n_samples: usize) -> Self {
        SplitPlan { protocol, n_samples, ..Default::default() }
    }
}

fn binomial(n: usize, k: usize) -> u64 {
    let k = k.min(n - k) as u64;
    (0..k).fold(1u64, |acc, i| acc.saturating_mul(n as u64 - i) / (i + 1))
}

fn complement(n: usize, train: &[usize]) -> Vec<usize> {
    let mut used = vec![false; n];
    train.iter().for_each(|&i| used[i] = true);
    (0..n).filter(|&i| !used[i]).collect()
}

fn check_explicit(plan: &SplitPlan) -> Result<()> {
    for s in &plan.splits {
        if s.train.is_empty() || s.validation.is_empty() {
            return Err(Error::invalid(format!("split {}: empty train or validation set", s.id)));
        }
        if let Some(i) = s.train.iter().chain(&s.validation).find(|&&i| i >= plan.n_samples) {
            return Err(Error::invalid(format!("split {}: index {i} out of range for {} samples", s.id, plan.n_samples)));
        }
        if s.train.iter().any(|i| s.validation.contains(i)) {
            log::warn!("split {}: validation overlaps training; its metrics are in-sample", s.id);
        }
    }
    let mut ids: Vec<usize> = plan.splits.iter().map(|s| s.id).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("split ids must be unique"));
    }
    Ok(())
}

/// Expands the plan into explicit splits, deterministically per seed.
pub fn make_splits(plan: &SplitPlan) -> Result<SplitPlan> {
    let mut out = plan.clone();
    if !plan.splits.is_empty() {
        check_explicit(plan)?;
        return Ok(out);
    }
    let (n, k) = (plan.n_samples, plan.train_k);
    if k == 0 || k >= n {
        return Err(Error::invalid(format!("train_k = {k} must lie in 1..{n}")));
    }
    let rng_for = |id: usize| ChaCha8Rng::seed_from_u64(seed::derive(plan.seed, id as u64));
    out.splits = match plan.protocol {
        Protocol::RandomWithReplacement => {
            if plan.n_splits == 0 {
                return Err(Error::invalid("n_splits must be ≥ 1"));
            }
            (0..plan.n_splits)
                .map(|id| {
                    let mut train = sample(&mut rng_for(id), n, k).into_vec();
                    train.sort_unstable();
                    Split { id, validation: complement(n, &train), train }
                })
                .collect()
        }
        Protocol::Exhaustive => {
            let count = binomial(n, k);
            if count > MAX_EXHAUSTIVE {
                return Err(Error::invalid(format!("{n} choose {k} = {count} splits is too many for EXHAUSTIVE")));
            }
            let mut splits = Vec::with_capacity(count as usize);
            let mut comb: Vec<usize> = (0..k).collect();
            loop {
                splits.push(Split { id: splits.len(), validation: complement(n, &comb), train: comb.clone() });
                // Next combination in lexicographic order.
                let Some(i) = (0..k).rev().find(|&i| comb[i] < n - k + i) else { break };
                comb[i] += 1;
                for j in i + 1..k {
                    comb[j] = comb[j - 1] + 1;
                }
            }
            splits
        }
        Protocol::HoldoutX15 => {
            if k > n - 1 {
                return Err(Error::invalid(format!("HOLDOUT_X15 needs train_k ≤ {}", n - 1)));
            }
            let mut splits = Vec::with_capacity(n * HOLDOUT_REPEATS);
            for held in 0..n {
                let others: Vec<usize> = (0..n).filter(|&i| i != held).collect();
                for _ in 0..HOLDOUT_REPEATS {
                    let id = splits.len();
                    let mut train: Vec<usize> = sample(&mut rng_for(id), n - 1, k).into_iter().map(|j| others[j]).collect();
                    train.sort_unstable();
                    splits.push(Split { id, train, validation: vec![held] });
                }
            }
            splits
        }
    };
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn exhaustive_ten_choose_seven() {
        let p = make_splits(&SplitPlan::new(Protocol::Exhaustive, 10)).unwrap();
        assert_eq!(p.splits.len(), 120);
        let distinct: BTreeSet<Vec<usize>> = p.splits.iter().map(|s| s.train.clone()).collect();
        assert_eq!(distinct.len(), 120);
    }

    #[test]
    fn holdout_fifteen_per_sample() {
        let p = make_splits(&SplitPlan::new(Protocol::HoldoutX15, 10)).unwrap();
        assert_eq!(p.splits.len(), 150);
        for held in 0..10 {
            let group: Vec<_> = p.splits.iter().filter(|s| s.validation == vec![held]).collect();
            assert_eq!(group.len(), 15);
            assert!(group.iter().all(|s| s.train.len() == 7 && !s.train.contains(&held)));
        }
    }

    #[test]
    fn random_plan_is_deterministic() {
        let plan = SplitPlan { n_splits: 500, seed: 9, ..Default::default() };
        let a = make_splits(&plan).unwrap();
        assert_eq!(a, make_splits(&plan).unwrap());
        assert_eq!(a.splits.len(), 500);
        let other = make_splits(&SplitPlan { seed: 10, ..plan }).unwrap();
        assert_ne!(a.splits, other.splits);
    }

    #[test]
    fn invalid_counts_rejected() {
        assert!(make_splits(&SplitPlan { train_k: 10, ..Default::default() }).is_err());
        assert!(make_splits(&SplitPlan { train_k: 0, ..Default::default() }).is_err());
        assert!(make_splits(&SplitPlan { n_splits: 0, ..Default::default() }).is_err());
        assert!(make_splits(&SplitPlan { n_samples: 60, train_k: 30, protocol: Protocol::Exhaustive, ..Default::default() }).is_err());
    }

    #[test]
    fn explicit_splits_checked() {
        let mut plan = SplitPlan { n_samples: 3, ..Default::default() };
        plan.splits = vec![Split { id: 0, train: vec![0, 1], validation: vec![0, 1] }];
        assert!(make_splits(&plan).is_ok());
        plan.splits[0].validation = vec![5];
        assert!(make_splits(&plan).is_err());
    }
}
