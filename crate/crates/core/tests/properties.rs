use proptest::prelude::*;

use dmc_prune::bound::{capacity_loss_bound, hull_substitution_sides, BoundOptions};
use dmc_prune::capacity::{blahut_arimoto, pseudo_capacity, row_divergences, BaOptions, PseudoOptions};
use dmc_prune::gen::{sample_dmc, GeneratorConfig};
use dmc_prune::hull::{chi2_to_hull, HullOptions};
use dmc_prune::prob::{chi2_divergence, entropy, js_divergence, kl_divergence};
use dmc_prune::select::{exhaustive_select, greedy_select, select_inputs, SelectOptions};
use dmc_prune::sweep::{rows_from_csv, rows_to_csv, run_sweep, SweepConfig};
use dmc_prune::{validate_channel, Channel, InputSubset};

const TOL: f64 = 1e-9;

fn normalize(w: Vec<f64>) -> Vec<f64> {
    let z: f64 = w.iter().sum();
    w.into_iter().map(|v| v / z).collect()
}

/// Full-support distribution over `n` outcomes.
fn dist(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, n).prop_map(normalize)
}

/// Distribution with some exact zeros.
fn sparse_dist(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![3 => 0.01f64..1.0, 1 => Just(0.0)], n).prop_map(|mut w| {
        if w.iter().all(|&v| v == 0.0) {
            w[0] = 1.0;
        }
        normalize(w)
    })
}

fn channel(nx: std::ops::RangeInclusive<usize>, ny: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Channel> {
    (nx, ny).prop_flat_map(|(nx, ny)| {
        prop::collection::vec(sparse_dist(ny), nx).prop_map(|rows| validate_channel(&rows).unwrap())
    })
}

fn full_channel(nx: std::ops::RangeInclusive<usize>, ny: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Channel> {
    (nx, ny).prop_flat_map(|(nx, ny)| {
        prop::collection::vec(dist(ny), nx).prop_map(|rows| validate_channel(&rows).unwrap())
    })
}

fn pair(n: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    n.prop_flat_map(|n| (dist(n), dist(n)))
}

fn cap(ch: &Channel) -> f64 {
    blahut_arimoto(ch, &BaOptions::default()).unwrap().capacity_nats
}

fn subset_of(nx: usize, mask: u64) -> InputSubset {
    let idx: Vec<usize> = (0..nx).filter(|&x| mask >> x & 1 == 1).collect();
    if idx.is_empty() {
        InputSubset::new(vec![0]).unwrap()
    } else {
        InputSubset::new(idx).unwrap()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn chi2_dominates_kl((p, q) in pair(2..=8)) {
        let kl = kl_divergence(&p, &q).unwrap().value();
        let chi2 = chi2_divergence(&p, &q).unwrap().value();
        prop_assert!(chi2 >= kl - 1e-15);
    }

    #[test]
    fn js_symmetric_and_bounded((p, q) in pair(2..=8)) {
        let a = js_divergence(&p, &q).unwrap();
        let b = js_divergence(&q, &p).unwrap();
        prop_assert!((a - b).abs() < 1e-15);
        prop_assert!((0.0..=std::f64::consts::LN_2 + 1e-15).contains(&a));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn divergences_vanish_on_equal_arguments(p in (2usize..=8).prop_flat_map(sparse_dist)) {
        prop_assert!(kl_divergence(&p, &p).unwrap().value().abs() < 1e-12);
        prop_assert!(chi2_divergence(&p, &p).unwrap().value().abs() < 1e-12);
        prop_assert!(js_divergence(&p, &p).unwrap().abs() < 1e-12);
    }

    #[test]
    fn uniform_entropy(n in 1usize..=64) {
        let u = vec![1.0 / n as f64; n];
        prop_assert!((entropy(&u) - (n as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn restriction_composes(ch in channel(2..=8, 2..=5), outer in any::<u64>(), inner in any::<u64>()) {
        let r = subset_of(ch.num_inputs(), outer);
        let positions = subset_of(r.len(), inner);
        let twice = ch.restrict(&r).unwrap().restrict(&positions).unwrap();
        let once = ch.restrict(&r.select_positions(&positions).unwrap()).unwrap();
        prop_assert_eq!(twice, once);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn capacity_certificate(ch in channel(1..=8, 2..=8)) {
        let opts = BaOptions { record_trace: true, ..BaOptions::default() };
        let r = blahut_arimoto(&ch, &opts).unwrap();
        let radius = row_divergences(&ch, &r.output_dist).into_iter().fold(0.0, f64::max);
        prop_assert!(radius - r.capacity_nats <= 2.0 * TOL, "radius {radius} above capacity {}", r.capacity_nats);
        prop_assert!(r.capacity_nats >= -1e-15);
        prop_assert!(r.capacity_nats <= (ch.num_inputs().min(ch.num_outputs()) as f64).ln() + 2.0 * TOL);
        for w in r.trace.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-12, "lower bracket fell from {} to {}", w[0], w[1]);
        }
    }

    #[test]
    fn capacity_permutation_invariant(ch in channel(2..=7, 2..=7), seed in any::<u64>()) {
        let rot = |n: usize, by: u64| -> Vec<usize> { (0..n).map(|i| (i + by as usize) % n).rev().collect() };
        let c = cap(&ch);
        let pi = ch.permute_inputs(&rot(ch.num_inputs(), seed)).unwrap();
        let po = ch.permute_outputs(&rot(ch.num_outputs(), seed >> 8)).unwrap();
        prop_assert!((cap(&pi) - c).abs() <= 2.0 * TOL);
        prop_assert!((cap(&po) - c).abs() <= 2.0 * TOL);
    }

    #[test]
    fn restriction_never_gains(ch in channel(2..=8, 2..=6), mask in any::<u64>()) {
        let sub = ch.restrict(&subset_of(ch.num_inputs(), mask)).unwrap();
        prop_assert!(cap(&sub) <= cap(&ch) + 2.0 * TOL);
    }

    #[test]
    fn pseudo_capacity_close_to_capacity(ch in full_channel(2..=6, 2..=5), frac in 0.01f64..=1.0) {
        let eta = frac / ch.num_outputs() as f64;
        let c = cap(&ch);
        let pc = pseudo_capacity(&ch, eta, &PseudoOptions::default()).unwrap();
        let diff = pc.pseudo_capacity_nats - c;
        prop_assert!(diff >= -2.0 * TOL, "diff {diff}");
        prop_assert!(diff <= 2.0 * eta * ch.num_outputs() as f64 + 2.0 * TOL, "diff {diff}");
        prop_assert!(pc.output_dist.iter().all(|&q| q >= eta - 1e-12));
    }

    #[test]
    fn hull_distance_properties(ch in full_channel(3..=6, 2..=6)) {
        let n = ch.num_inputs();
        let target = ch.row(n - 1);
        let opts = HullOptions { record_trace: true, ..HullOptions::default() };
        let small = ch.restrict(&InputSubset::new((0..n - 2).collect()).unwrap()).unwrap();
        let large = ch.restrict(&InputSubset::new((0..n - 1).collect()).unwrap()).unwrap();
        let ps = chi2_to_hull(&small, target, &opts).unwrap();
        let pl = chi2_to_hull(&large, target, &opts).unwrap();
        let (ds, dl) = (ps.distance_chi2.value(), pl.distance_chi2.value());
        for r in large.rows() {
            prop_assert!(dl <= chi2_divergence(target, r).unwrap().value() + 1e-12);
        }
        prop_assert!(dl <= ds + 1e-6);
        prop_assert!(pl.gap <= opts.tol * dl.max(1.0));
        for w in pl.trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12);
        }
        prop_assert!((pl.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bound_is_sound_and_output_invariant(seed in 0u64..10_000, k in 2usize..6) {
        let cfg = GeneratorConfig { num_prototypes: 3, ..GeneratorConfig::new(7, 6).with_seed(seed) };
        let ch = sample_dmc(&cfg).unwrap();
        let kept = select_inputs(&ch, k, &SelectOptions::default()).unwrap().subset;
        let opts = BoundOptions::default();
        let r = capacity_loss_bound(&ch, &kept, &opts).unwrap();
        let perm: Vec<usize> = (0..6).rev().collect();
        let rp = capacity_loss_bound(&ch.permute_outputs(&perm).unwrap(), &kept, &opts).unwrap();
        prop_assert_eq!(r.bound_nats.is_some(), rp.bound_nats.is_some());
        if let (Some(a), Some(b)) = (r.bound_nats, rp.bound_nats) {
            prop_assert!((a - b).abs() <= 1e-6 * a.max(1.0), "{a} vs {b}");
            let loss = cap(&ch) - r.capacity_pruned_nats;
            prop_assert!(a >= loss - 2.0 * TOL);
        }
        let exact = BoundOptions { membership_tol: 0.0, ..opts };
        let (lhs, rhs) = hull_substitution_sides(&ch, &kept, &exact).unwrap();
        prop_assert!(lhs <= rhs + 4.0 * TOL, "{lhs} > {rhs}");
    }

    #[test]
    fn selection_ordering(ch in full_channel(3..=7, 2..=5)) {
        let opts = SelectOptions::default();
        let n = ch.num_inputs();
        let mut prev = 0.0;
        for k in 2..=n {
            let ex = exhaustive_select(&ch, k, &opts).unwrap().capacity_nats;
            let cl = select_inputs(&ch, k, &opts).unwrap().capacity_nats;
            let gr = greedy_select(&ch, k, &opts).unwrap().capacity_nats;
            prop_assert!(ex >= prev - 2.0 * TOL);
            prop_assert!(ex >= cl - 2.0 * TOL && cl >= 0.0);
            prop_assert!(ex >= gr - 2.0 * TOL && gr >= 0.0);
            prev = ex;
        }
        let all = select_inputs(&ch, n, &opts).unwrap();
        let expected: Vec<usize> = (0..n).collect();
        prop_assert_eq!(all.subset.indices(), expected.as_slice());
        prop_assert!((all.capacity_nats - cap(&ch)).abs() <= 2.0 * TOL);
    }

    #[test]
    fn generated_channels_validate(seed in any::<u64>(), nx in 3usize..12, ny in 2usize..12) {
        let cfg = GeneratorConfig { num_prototypes: 2, ..GeneratorConfig::new(nx, ny).with_seed(seed) };
        let ch = sample_dmc(&cfg).unwrap();
        prop_assert!(validate_channel(&ch.to_rows()).is_ok());
        prop_assert!(ch.as_slice().iter().all(|&v| v > 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn sweep_csv_round_trip(seed in any::<u64>()) {
        let cfg = SweepConfig {
            generator: GeneratorConfig { num_prototypes: 2, ..GeneratorConfig::new(5, 4).with_seed(seed) },
            k_values: vec![2, 3],
            num_channels: 2,
            ..SweepConfig::default()
        };
        let out = run_sweep(&cfg).unwrap();
        let text = rows_to_csv(&out.rows).unwrap();
        let back = rows_from_csv(&text).unwrap();
        prop_assert_eq!(rows_to_csv(&back).unwrap(), text);
        for s in &out.summary {
            let caps: Vec<f64> = back
                .iter()
                .filter(|r| r.k == s.k && r.method == s.method)
                .filter_map(|r| r.capacity_bits)
                .collect();
            let mean = caps.iter().sum::<f64>() / caps.len() as f64;
            prop_assert!((mean - s.mean_capacity_bits).abs() <= 1e-11);
        }
    }
}
