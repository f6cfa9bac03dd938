use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::capacity::{blahut_arimoto, BaOptions};
use crate::channel::{Channel, InputSubset};
use crate::error::{Error, Result};

pub const DEFAULT_BUDGET: u128 = 1_000_000;

/// `n choose k`, exact.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// The `rank`-th `k`-subset of `0..n` in lexicographic order.
fn unrank(mut rank: u128, n: usize, k: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(k);
    let mut next = 0;
    for slot in 0..k {
        let left = k - slot - 1;
        loop {
            let count = binomial(n - next - 1, left);
            if rank < count {
                break;
            }
            rank -= count;
            next += 1;
        }
        out.push(next);
        next += 1;
    }
    out
}

pub(crate) fn subset_capacity(channel: &Channel, subset: &[usize], ba: &BaOptions) -> Result<f64> {
    if subset.len() == 1 {
        return Ok(0.0);
    }
    let sub = channel.restrict(&InputSubset::new(subset.to_vec())?)?;
    Ok(blahut_arimoto(&sub, ba)?.capacity_nats)
}

fn check_k(channel: &Channel, k: usize, min: usize) -> Result<()> {
    if k < min || k > channel.num_inputs() {
        return Err(Error::InvalidK {
            k,
            num_inputs: channel.num_inputs(),
        });
    }
    Ok(())
}

/// Larger capacity wins; equal capacities go to the lexicographically
/// smaller subset, so the reduction does not depend on scheduling.
fn pick(a: (f64, Vec<usize>), b: (f64, Vec<usize>)) -> (f64, Vec<usize>) {
    if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
        b
    } else {
        a
    }
}

/// Best `k`-subset by capacity over all `C(|X|, k)` candidates.
pub fn exhaustive_search(channel: &Channel, k: usize, budget: u128, ba: &BaOptions) -> Result<(InputSubset, f64)> {
    check_k(channel, k, 1)?;
    let n = channel.num_inputs();
    let count = binomial(n, k);
    if count > budget {
        return Err(Error::BudgetExceeded { count, budget });
    }
    let count = usize::try_from(count).map_err(|_| Error::BudgetExceeded { count, budget })?;
    let (cap, best) = (0..count)
        .into_par_iter()
        .with_min_len(64)
        .map(|r| {
            let s = unrank(r as u128, n, k);
            subset_capacity(channel, &s, ba).map(|c| (c, s))
        })
        .try_reduce_with(|a, b| Ok(pick(a, b)))
        .expect("at least one subset")?;
    Ok((InputSubset::new(best)?, cap))
}

/// Forward greedy by capacity gain, starting from the best pair.
pub fn greedy_search(channel: &Channel, k: usize, ba: &BaOptions) -> Result<(InputSubset, f64)> {
    check_k(channel, k, 2)?;
    let (pair, mut cap) = exhaustive_search(channel, 2, u128::MAX, ba)?;
    let mut current = pair.indices().to_vec();
    while current.len() < k {
        let mut best: Option<(usize, f64)> = None;
        for x in 0..channel.num_inputs() {
            if current.contains(&x) {
                continue;
            }
            let mut trial = current.clone();
            trial.push(x);
            trial.sort_unstable();
            let c = subset_capacity(channel, &trial, ba)?;
            if best.is_none_or(|(_, b)| c > b) {
                best = Some((x, c));
            }
        }
        let (x, c) = best.expect("k <= |X| leaves a candidate");
        current.push(x);
        current.sort_unstable();
        cap = c;
    }
    Ok((InputSubset::new(current)?, cap))
}

/// Uniformly random `k`-subset.
pub fn random_subset(channel: &Channel, k: usize, seed: u64) -> Result<InputSubset> {
    check_k(channel, k, 1)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    InputSubset::from_unsorted(sample(&mut rng, channel.num_inputs(), k).into_vec())
}
