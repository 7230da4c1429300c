use std::collections::BTreeMap;

use super::*;
use crate::model::{builtin_model, permutations, RateExpr};

fn model(name: &str, p: &[(&str, f64)]) -> ModelSpec {
    let p: BTreeMap<String, f64> = p.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    builtin_model(name, &p).unwrap()
}

fn dir(table: &JumpRateTable, delta: &[i32]) -> usize {
    table
        .index_of(&JumpDirection::new(delta.to_vec()).unwrap())
        .expect("direction present")
}

/// Count ordered k-tuples of distinct labeled particles whose states match.
fn brute_force_count(counts: &[u32], tuple: &[usize]) -> u128 {
    let labels: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(s, &c)| std::iter::repeat_n(s, c as usize))
        .collect();
    let n = labels.len();
    let k = tuple.len();
    let mut total = 0u128;
    let mut idx = vec![0usize; k];
    loop {
        let distinct = (0..k).all(|a| (a + 1..k).all(|b| idx[a] != idx[b]));
        if distinct && (0..k).all(|l| labels[idx[l]] == tuple[l]) {
            total += 1;
        }
        let mut p = 0;
        loop {
            if p == k {
                return total;
            }
            idx[p] += 1;
            if idx[p] < n {
                break;
            }
            idx[p] = 0;
            p += 1;
        }
    }
}

#[test]
fn tuple_count_examples() {
    let x = LatticePoint::new(vec![2, 1], 3).unwrap();
    assert_eq!(tuple_count(3, &[0, 0], &x).unwrap(), 2);
    let x = LatticePoint::new(vec![2, 3], 5).unwrap();
    assert_eq!(tuple_count(5, &[0, 1], &x).unwrap(), 6);
    let x = LatticePoint::new(vec![2], 2).unwrap();
    assert_eq!(tuple_count(2, &[0, 0, 0], &x).unwrap(), 0);
    assert!(tuple_count(4, &[0], &x).is_err());
}

#[test]
fn tuple_count_matches_enumeration() {
    let d = 3;
    for n in 1..=8u32 {
        for a in 0..=n {
            for b in 0..=(n - a) {
                let counts = vec![a, b, n - a - b];
                let x = LatticePoint::new(counts.clone(), n).unwrap();
                for k in 1..=3usize {
                    let mut tuple = vec![0usize; k];
                    loop {
                        assert_eq!(
                            tuple_count(n, &tuple, &x).unwrap(),
                            brute_force_count(&counts, &tuple),
                            "n={n} counts={counts:?} tuple={tuple:?}"
                        );
                        let mut p = 0;
                        while p < k {
                            tuple[p] += 1;
                            if tuple[p] < d {
                                break;
                            }
                            tuple[p] = 0;
                            p += 1;
                        }
                        if p == k {
                            break;
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn curie_weiss_limit_rates() {
    let t = JumpRateTable::new(&model("curie-weiss", &[("beta", 1.0)]));
    let x = [0.3, 0.7];
    // e₋₁ − e₁ is +1 in coordinate 1 (spin −1)
    let down = dir(&t, &[1, -1]);
    let up = dir(&t, &[-1, 1]);
    assert!((t.rate(down, &x) - 0.7 * (-0.8f64).exp()).abs() < 1e-15);
    assert!((t.rate(down, &x) - 0.314530).abs() < 1e-6);
    assert!((t.rate(up, &x) - 0.3).abs() < 1e-15);
    assert!((t.rate(up, &[0.5, 0.5]) - 0.5).abs() < 1e-15);
    assert!((t.rate(down, &[0.5, 0.5]) - 0.5).abs() < 1e-15);
}

#[test]
fn curie_weiss_finite_n() {
    let t = JumpRateTable::new(&model("curie-weiss", &[("beta", 1.0)]));
    let x = LatticePoint::new(vec![2, 2], 4).unwrap();
    assert!((t.rate_n(dir(&t, &[-1, 1]), &x) - 0.5).abs() < 1e-15);
}

#[test]
fn eg3_rates() {
    let c = [("c1", 1.3), ("c2", 0.7), ("c3", 1.1), ("c4", 0.9), ("c5", 1.7), ("c6", 0.6)];
    let t = JumpRateTable::new(&model("eg3", &c));
    let x = [0.1, 0.2, 0.3, 0.4];
    assert!((t.rate(dir(&t, &[-1, 1, 0, 0]), &x) - 0.1 * 1.3).abs() < 1e-15);
    // the class {(1,2)→(3,4), (2,1)→(4,3)} has two tuple pairs
    let v5 = dir(&t, &[-1, -1, 1, 1]);
    assert!((t.rate(v5, &x) - 0.1 * 0.2 * 1.7).abs() < 1e-15);

    let n = 4;
    let lx = LatticePoint::new(vec![1, 1, 1, 1], n).unwrap();
    assert!((t.rate_n(v5, &lx) - 1.7 / 16.0).abs() < 1e-15);
    // one listing alone gives c5/32
    let single = t.directions()[v5].contributions[0].weight / 2.0;
    assert!((single * 1.0 * 1.7 / 16.0 - 1.7 / 32.0).abs() < 1e-15);

    let vtx = LatticePoint::new(vec![4, 0, 0, 0], n).unwrap();
    assert_eq!(t.rate_n(v5, &vtx), 0.0);
    assert_eq!(t.rate(v5, &[1.0, 0.0, 0.0, 0.0]), 0.0);
}

#[test]
fn eg3_effective_matrix() {
    let c = [("c1", 1.3), ("c2", 0.7), ("c3", 1.1), ("c4", 0.9), ("c5", 1.7), ("c6", 0.6)];
    let t = JumpRateTable::new(&model("eg3", &c));
    let x = [0.1, 0.2, 0.3, 0.4];
    let g = t.effective_matrix(&x);
    assert!((g[0][2] - 0.2 * 1.7).abs() < 1e-15);
    assert!((g[1][3] - 0.1 * 1.7).abs() < 1e-15);
    assert!((g[2][0] - 0.4 * 0.6).abs() < 1e-15);
    assert!((g[3][1] - 0.3 * 0.6).abs() < 1e-15);
    assert!((g[0][1] - 1.3).abs() < 1e-15);
    assert_eq!(g[0][3], 0.0);
}

#[test]
fn arn_effective_matrix() {
    let t = JumpRateTable::new(&model("arn", &[("gamma", 1.0), ("C", 2.0)]));
    let x = [0.7, 0.2, 0.1];
    let g = t.effective_matrix(&x);
    // γ + γ x_C Σ_{j<C} x_j from the rerouted pairs
    assert!((g[1][2] - (1.0 + 0.1 * 0.9)).abs() < 1e-15);
    assert!((g[0][1] - (1.0 + 0.1 * 0.9)).abs() < 1e-15);
    // departures keep their single-transition rate i
    assert!((g[1][0] - 1.0).abs() < 1e-15);
    assert!((g[2][1] - 2.0).abs() < 1e-15);
}

#[test]
fn effective_matrix_reproduces_drift() {
    for (name, p) in [
        ("curie-weiss", vec![("beta", 1.3)]),
        ("arn", vec![("gamma", 0.8), ("C", 3.0)]),
        ("eg3", vec![("c5", 2.0), ("c6", 0.5)]),
    ] {
        let t = JumpRateTable::new(&model(name, &p));
        for x in validation_grid(t.d()) {
            let xs = x.coords();
            let drift = drift_of(&t, xs);
            let g = t.effective_matrix(xs);
            for j in 0..t.d() {
                let xg: f64 = (0..t.d()).map(|i| xs[i] * g[i][j]).sum();
                assert!((xg - drift[j]).abs() <= 1e-12, "{name} {xs:?}");
            }
        }
    }
}

#[test]
fn total_exit_rate_matches_generator() {
    let t = JumpRateTable::new(&model("eg3", &[]));
    let n = 6u32;
    let x = LatticePoint::new(vec![1, 2, 0, 3], n).unwrap();
    let lam = t.rates_n(&x);
    // direct generator intensity: sum over ordered particle tuples
    let mut direct = 0.0;
    for (i, tr) in t.spec().expanded().transitions().iter().enumerate() {
        let a = tuple_count(n, &tr.from, &x).unwrap() as f64;
        let _ = i;
        direct += a * (n as f64).powi(1 - tr.k() as i32) * tr.rate.eval(&x.to_coords())
            / (n as f64 * factorial(tr.k()) as f64);
    }
    let ours: f64 = lam.iter().sum();
    assert!((n as f64 * ours - n as f64 * direct).abs() < 1e-12);
}

#[test]
fn finite_n_converges_at_rate_one_over_n() {
    for name in ["curie-weiss", "arn", "eg3"] {
        let t = JumpRateTable::new(&model(name, &[]));
        // lattice-exact point, so x_n = x for every n below
        let coords: Vec<f64> = match t.d() {
            2 => vec![0.3, 0.7],
            3 => vec![0.5, 0.3, 0.2],
            _ => vec![0.1, 0.2, 0.3, 0.4],
        };
        let x = crate::model::SimplexPoint::new(coords).unwrap();
        let err = |n: u32| -> f64 {
            let l = LatticePoint::nearest(&x, n);
            let xs = l.to_coords();
            (0..t.len())
                .map(|i| (t.rate_n(i, &l) - t.rate(i, &xs)).abs())
                .fold(0.0, f64::max)
        };
        let c = err(100) * 100.0 + 1e-12;
        for n in [1000, 10000] {
            assert!(err(n) <= c / n as f64 * (1.0 + 1e-6), "{name} n={n}");
        }
    }
}

#[test]
fn symmetrization_matches_brute_force_expansion() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for _ in 0..30 {
        let d = 4;
        let mut ts: Vec<TupleTransition> = Vec::new();
        while ts.len() < 5 {
            let k = rng.gen_range(1..=3);
            let from: Vec<usize> = (0..k).map(|_| rng.gen_range(0..d)).collect();
            let to: Vec<usize> = from.iter().map(|&f| (f + rng.gen_range(1..d)) % d).collect();
            let rate = RateExpr::parse(&format!("{} + x{}", rng.gen_range(1..5), rng.gen_range(1..=d))).unwrap();
            let t = TupleTransition::new(from, to, rate);
            if ts.iter().all(|o| o.pair_multiset() != t.pair_multiset()) {
                ts.push(t);
            }
        }
        let sym = ModelSpec::new(d, ts, true).unwrap();
        let explicit = sym.expanded();
        // independent check of the class sizes
        for (t, idx) in sym.transitions().iter().zip(0..) {
            let mut set = std::collections::BTreeSet::new();
            for p in permutations(t.k()) {
                set.insert((
                    p.iter().map(|&q| t.from[q]).collect::<Vec<_>>(),
                    p.iter().map(|&q| t.to[q]).collect::<Vec<_>>(),
                ));
            }
            assert_eq!(set.len(), sym.multiplicity(idx));
        }
        let a = JumpRateTable::new(&sym);
        let b = JumpRateTable::new(&explicit);
        let x = [0.1, 0.2, 0.3, 0.4];
        let lx = LatticePoint::new(vec![2, 3, 1, 4], 10).unwrap();
        for (i, e) in a.directions().iter().enumerate() {
            let j = b.index_of(&e.v).unwrap();
            assert!((a.rate(i, &x) - b.rate(j, &x)).abs() < 1e-14);
            assert!((a.rate_n(i, &lx) - b.rate_n(j, &lx)).abs() < 1e-14);
        }
        assert_eq!(a.len(), b.len());
    }
}

#[test]
fn zero_rate_transitions_are_dropped() {
    let ts = vec![
        TupleTransition::new(vec![0], vec![1], RateExpr::Num(1.0)),
        TupleTransition::new(vec![1], vec![0], RateExpr::Num(0.0)),
    ];
    let t = JumpRateTable::new(&ModelSpec::new(2, ts, true).unwrap());
    assert_eq!(t.len(), 1);
}

#[test]
fn negative_support_profiles() {
    let t = JumpRateTable::new(&model("eg3", &[]));
    let ns = t.negative_support(dir(&t, &[-1, -1, 1, 1]));
    assert_eq!(ns.states, vec![0, 1]);
    assert_eq!(ns.profiles, vec![vec![1, 1]]);
}

#[test]
fn estimates_hold_for_builtins() {
    for name in ["curie-weiss", "eg3"] {
        let r = rate_estimate_report(&model(name, &[]));
        assert!(r.ok(), "{name}: {:?}", r.findings);
        assert!(r.c0 > 0.0);
    }
    let cw = rate_estimate_report(&model("curie-weiss", &[("beta", 1.0)]));
    assert!((cw.c0 - (-2.0f64).exp()).abs() < 1e-2);
    // rerouted arrivals need a full link, so their rate γ·x_C vanishes on
    // the face x_C = 0 while staying positive elsewhere
    let arn = rate_estimate_report(&model("arn", &[]));
    assert!(!arn.findings.is_empty());
    assert!(arn.findings.iter().all(|f| f.kind == "mixed-rate"));
}

#[test]
fn estimate_report_flags_mixed_rates() {
    let ts = vec![
        TupleTransition::new(vec![0], vec![1], RateExpr::parse("x1").unwrap()),
        TupleTransition::new(vec![1], vec![0], RateExpr::Num(1.0)),
    ];
    let r = rate_estimate_report(&ModelSpec::new(2, ts, true).unwrap());
    assert!(r.findings.iter().any(|f| f.kind == "mixed-rate"));
}
