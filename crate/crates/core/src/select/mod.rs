//! Choosing which input symbols to keep.
//!
//! The clustering selector groups rows by complete-linkage agglomeration on
//! Jensen–Shannon distance and keeps one far-out representative per group.
//! It needs no capacity evaluations; capacity is computed afterwards only
//! to report the result. Exhaustive, greedy and random searches serve as
//! baselines.

mod cluster;
mod search;

pub use cluster::{cluster_inputs, pairwise_jsd, select_representatives, ClusterAssignment, DistanceMatrix, MergeStep};
pub use search::{binomial, DEFAULT_BUDGET};

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bound::{capacity_loss_bound, BoundOptions, BoundReport};
use crate::capacity::{BaOptions, DEFAULT_TOL_NATS};
use crate::channel::{validate_channel, Channel, InputSubset};
use crate::error::{Error, Result};
use crate::prob::entropy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Method {
    Clustering,
    Exhaustive,
    Greedy,
    Random,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Clustering, Method::Exhaustive, Method::Greedy, Method::Random];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Clustering => "CLUSTERING",
            Method::Exhaustive => "EXHAUSTIVE",
            Method::Greedy => "GREEDY",
            Method::Random => "RANDOM",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown selection method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectOptions {
    pub ba: BaOptions,
    /// Attach a capacity-loss certificate to the result.
    pub bound: Option<BoundOptions>,
    /// Largest number of subsets the exhaustive search may visit.
    pub budget: u128,
    /// Seed of the random baseline.
    pub seed: u64,
}

impl Default for SelectOptions {
    fn default() -> Self {
        Self {
            ba: BaOptions::default(),
            bound: None,
            budget: DEFAULT_BUDGET,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SelectionResult {
    pub subset: InputSubset,
    pub method: Method,
    pub capacity_nats: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<BoundReport>,
    pub wall_time_s: f64,
}

fn finish(
    channel: &Channel,
    subset: InputSubset,
    capacity: Option<f64>,
    method: Method,
    opts: &SelectOptions,
    start: Instant,
) -> Result<SelectionResult> {
    let capacity_nats = match capacity {
        Some(c) => c,
        None => search::subset_capacity(channel, subset.indices(), &opts.ba)?,
    };
    let bound = match &opts.bound {
        Some(b) => Some(capacity_loss_bound(channel, &subset, b)?),
        None => None,
    };
    Ok(SelectionResult {
        subset,
        method,
        capacity_nats,
        bound,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Clustering selection of `k` inputs.
pub fn select_inputs(channel: &Channel, k: usize, opts: &SelectOptions) -> Result<SelectionResult> {
    let start = Instant::now();
    let d = pairwise_jsd(channel);
    let assignment = cluster_inputs(&d, k)?;
    let subset = select_representatives(&d, &assignment)?;
    finish(channel, subset, None, Method::Clustering, opts, start)
}

pub fn exhaustive_select(channel: &Channel, k: usize, opts: &SelectOptions) -> Result<SelectionResult> {
    let start = Instant::now();
    let (subset, cap) = search::exhaustive_search(channel, k, opts.budget, &opts.ba)?;
    finish(channel, subset, Some(cap), Method::Exhaustive, opts, start)
}

pub fn greedy_select(channel: &Channel, k: usize, opts: &SelectOptions) -> Result<SelectionResult> {
    let start = Instant::now();
    let (subset, cap) = search::greedy_search(channel, k, &opts.ba)?;
    finish(channel, subset, Some(cap), Method::Greedy, opts, start)
}

pub fn random_select(channel: &Channel, k: usize, opts: &SelectOptions) -> Result<SelectionResult> {
    let start = Instant::now();
    let subset = search::random_subset(channel, k, opts.seed)?;
    finish(channel, subset, None, Method::Random, opts, start)
}

pub fn select_with(method: Method, channel: &Channel, k: usize, opts: &SelectOptions) -> Result<SelectionResult> {
    match method {
        Method::Clustering => select_inputs(channel, k, opts),
        Method::Exhaustive => exhaustive_select(channel, k, opts),
        Method::Greedy => greedy_select(channel, k, opts),
        Method::Random => random_select(channel, k, opts),
    }
}

/// Four rows with equal entropy on which capacity gains are not
/// diminishing.
pub fn counterexample_channel() -> Channel {
    validate_channel(&[
        vec![0.6, 0.2, 0.1, 0.1],
        vec![0.6, 0.1, 0.1, 0.2],
        vec![0.6, 0.1, 0.2, 0.1],
        vec![0.1, 0.6, 0.1, 0.2],
    ])
    .expect("fixed channel is valid")
}

#[derive(Debug, Clone, Serialize)]
pub struct SubmodularityReport {
    /// `C({0,1,3} ∪ {2}) − C({0,1,3})`.
    pub gain_large: f64,
    /// `C({0,1} ∪ {2}) − C({0,1})`.
    pub gain_small: f64,
    /// `gain_large − gain_small`; positive means diminishing returns fail.
    pub margin: f64,
    pub row_entropies: Vec<f64>,
    pub entropy_spread: f64,
    /// Adding a symbol to the empty set gains nothing.
    pub gain_from_empty: f64,
    /// Adding symbol 2 to `{0}`.
    pub gain_from_singleton: f64,
}

/// Checks that the fixed four-row channel violates diminishing returns.
pub fn check_submodularity_counterexample() -> Result<SubmodularityReport> {
    let ch = counterexample_channel();
    let ba = BaOptions::default();
    let cap = |s: &[usize]| search::subset_capacity(&ch, s, &ba);
    let gain_large = cap(&[0, 1, 2, 3])? - cap(&[0, 1, 3])?;
    let gain_small = cap(&[0, 1, 2])? - cap(&[0, 1])?;
    let margin = gain_large - gain_small;
    let row_entropies: Vec<f64> = ch.rows().map(entropy).collect();
    let hi = row_entropies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = row_entropies.iter().copied().fold(f64::INFINITY, f64::min);
    let report = SubmodularityReport {
        gain_large,
        gain_small,
        margin,
        row_entropies,
        entropy_spread: hi - lo,
        gain_from_empty: cap(&[2])?,
        gain_from_singleton: cap(&[0, 2])? - cap(&[0])?,
    };
    if !(margin > 10.0 * DEFAULT_TOL_NATS) || report.entropy_spread > 1e-12 {
        return Err(Error::CounterexampleFailed { margin });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capacity::capacity;
    use crate::channel::fixtures::counterexample;

    #[test]
    fn method_names() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert_eq!("greedy".parse::<Method>().unwrap(), Method::Greedy);
        assert!("kmeans".parse::<Method>().is_err());
        assert_eq!(serde_json::to_string(&Method::Exhaustive).unwrap(), "\"EXHAUSTIVE\"");
    }

    #[test]
    fn keep_all_matches_full_capacity() {
        let ce = counterexample();
        let full = capacity(&ce).unwrap();
        let r = select_inputs(&ce, 4, &SelectOptions::default()).unwrap();
        assert_eq!(r.subset.indices(), &[0, 1, 2, 3]);
        assert!((r.capacity_nats - full).abs() <= 2e-9);
    }

    #[test]
    fn duplicate_groups_are_recovered() {
        let protos = [vec![0.8, 0.1, 0.1], vec![0.1, 0.8, 0.1], vec![0.1, 0.1, 0.8]];
        let rows: Vec<Vec<f64>> = (0..9).map(|i| protos[(i * 5) % 3].clone()).collect();
        let ch = validate_channel(&rows).unwrap();
        let d = pairwise_jsd(&ch);
        let c = cluster_inputs(&d, 3).unwrap();
        for members in &c.clusters {
            let p = &rows[members[0]];
            assert!(members.iter().all(|&x| &rows[x] == p));
            assert_eq!(members.len(), 3);
        }
        let r = select_inputs(&ch, 3, &SelectOptions::default()).unwrap();
        let mut seen: Vec<&Vec<f64>> = r.subset.indices().iter().map(|&x| &rows[x]).collect();
        seen.dedup();
        assert_eq!(seen.len(), 3);
    }

    #[test]
    fn bound_is_attached_on_request() {
        let ce = counterexample();
        let opts = SelectOptions {
            bound: Some(BoundOptions::default()),
            ..SelectOptions::default()
        };
        let r = select_inputs(&ce, 2, &opts).unwrap();
        assert_eq!(r.bound.as_ref().unwrap().subset, r.subset);
        assert!(select_inputs(&ce, 2, &SelectOptions::default()).unwrap().bound.is_none());
    }

    #[test]
    fn ordering_between_methods() {
        let ce = counterexample();
        let opts = SelectOptions::default();
        for k in 2..=4 {
            let e = exhaustive_select(&ce, k, &opts).unwrap().capacity_nats;
            for m in [Method::Clustering, Method::Greedy, Method::Random] {
                let c = select_with(m, &ce, k, &opts).unwrap().capacity_nats;
                assert!(c >= 0.0 && c <= e + 2e-9, "{m} k={k}: {c} > {e}");
            }
        }
    }

    #[test]
    fn counterexample_check_passes() {
        let r = check_submodularity_counterexample().unwrap();
        assert!(r.margin > 1e-7);
        assert!(r.entropy_spread <= 1e-12);
        let h = entropy(&[0.6, 0.2, 0.1, 0.1]);
        assert!(r.row_entropies.iter().all(|&e| (e - h).abs() <= 1e-12));
        assert_eq!(r.gain_from_empty, 0.0);
        assert!(r.gain_from_singleton > 0.0);
    }
}
