use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::lln::{drift, integrate_lln};
use crate::model::{builtin_model, random_simplex_points, ModelSpec, PiecewiseLinearPath, RateExpr, SimplexPoint, TupleTransition};
use crate::rates::JumpRateTable;

fn table(name: &str) -> JumpRateTable {
    JumpRateTable::new(&builtin_model(name, &BTreeMap::new()).unwrap())
}

fn cw(beta: f64) -> JumpRateTable {
    let p = BTreeMap::from([("beta".to_string(), beta)]);
    JumpRateTable::new(&builtin_model("cw", &p).unwrap())
}

fn pt(c: &[f64]) -> SimplexPoint {
    SimplexPoint::new(c.to_vec()).unwrap()
}

/// Random zero-sum vector with entries of size about `scale`.
fn random_velocity(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> Vec<f64> {
    let mut b: Vec<f64> = (0..d).map(|_| rng.gen_range(-scale..scale)).collect();
    let m = b.iter().sum::<f64>() / d as f64;
    b.iter_mut().for_each(|v| *v -= m);
    b
}

fn interior_points(d: usize, count: usize, seed: u64) -> Vec<SimplexPoint> {
    random_simplex_points(d, 10 * count, seed)
        .into_iter()
        .filter(|p| p.min_coord() >= 0.05)
        .take(count)
        .collect()
}

/// Closed form for two states: with `λ₊` the rate of `e₂ − e₁` and `λ₋` of
/// `e₁ − e₂`, `L(x, (−s, s)) = θs − λ₊(e^θ − 1) − λ₋(e^{−θ} − 1)` where
/// `λ₊e^θ − λ₋e^{−θ} = s`.
fn two_state_rate(lp: f64, lm: f64, s: f64) -> f64 {
    let e = (s + (s * s + 4.0 * lp * lm).sqrt()) / (2.0 * lp);
    let th = e.ln();
    th * s - lp * (e - 1.0) - lm * (1.0 / e - 1.0)
}

/// Curie–Weiss rates `(λ₊, λ₋)` at `(x1, x2)` with `β = 1`.
fn cw_rates(x1: f64, x2: f64) -> (f64, f64) {
    let up = if x1 > x2 { (-2.0 * (x1 - x2)).exp() } else { 1.0 };
    let down = if x2 > x1 { (-2.0 * (x2 - x1)).exp() } else { 1.0 };
    (x1 * up, x2 * down)
}

#[test]
fn poisson_cost_values() {
    assert_eq!(poisson_ell(1.0), 0.0);
    assert_eq!(poisson_ell(0.0), 1.0);
    assert!((poisson_ell(std::f64::consts::E) - 1.0).abs() < 1e-15);
    assert_eq!(poisson_ell(-0.5), f64::INFINITY);
}

#[test]
fn hamiltonian_basics() {
    let t = cw(1.0);
    let x = pt(&[0.5, 0.5]);
    let h = hamiltonian(&t, &x, &[0.0, 0.0], false).unwrap();
    assert_eq!(h.value, 0.0);
    let x2 = pt(&[0.3, 0.7]);
    let h2 = hamiltonian(&t, &x2, &[0.0, 0.0], false).unwrap();
    let g = drift(&t, &x2);
    for i in 0..2 {
        assert!((h2.gradient[i] - g[i]).abs() < 1e-15);
    }
    let h = hamiltonian(&t, &x, &[0.0, 1.0], false).unwrap();
    let e = std::f64::consts::E;
    let expect = 0.5 * (e - 1.0) + 0.5 * (1.0 / e - 1.0);
    assert!((h.value - expect).abs() < 1e-14);
    assert!((h.value - 0.543081).abs() < 1e-6);
}

#[test]
fn hamiltonian_derivatives_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for name in ["cw", "eg3", "arn"] {
        let t = table(name);
        let d = t.d();
        for x in random_simplex_points(d, 10, 11) {
            let theta: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let h = hamiltonian(&t, &x, &theta, true).unwrap();
            let hess = h.hessian.unwrap();
            let step = 1e-5;
            for i in 0..d {
                let mut tp = theta.clone();
                let mut tm = theta.clone();
                tp[i] += step;
                tm[i] -= step;
                let hp = hamiltonian(&t, &x, &tp, false).unwrap();
                let hm = hamiltonian(&t, &x, &tm, false).unwrap();
                let fd = (hp.value - hm.value) / (2.0 * step);
                assert!((fd - h.gradient[i]).abs() <= 1e-6 * h.gradient[i].abs().max(1.0));
                for j in 0..d {
                    let fd = (hp.gradient[j] - hm.gradient[j]) / (2.0 * step);
                    assert!((fd - hess[i][j]).abs() <= 1e-6 * hess[i][j].abs().max(1.0), "{name}");
                }
            }
        }
    }
}

#[test]
fn zero_of_the_rate_function() {
    for name in ["cw", "eg3", "arn"] {
        let t = table(name);
        for x in interior_points(t.d(), 10, 3) {
            let b = drift(&t, &x);
            let r = local_rate(&t, &x, &b).unwrap();
            assert!(r.value <= 1e-12, "{name}: {}", r.value);
            for (q, l) in r.flows.iter().zip(&r.rates) {
                assert!((q - l).abs() <= 1e-9);
            }
        }
    }
}

#[test]
fn symmetric_pair_at_rest() {
    let t = cw(1.0);
    let r = local_rate(&t, &pt(&[0.5, 0.5]), &[0.0, 0.0]).unwrap();
    assert_eq!(r.value, 0.0);
}

#[test]
fn curie_weiss_against_brute_force() {
    let t = cw(1.0);
    let x = pt(&[0.5, 0.5]);
    let s = 0.3;
    let dual = local_rate(&t, &x, &[-s, s]).unwrap();
    let primal = local_rate_primal(&t, &x, &[-s, s]).unwrap();
    // minimize over q₋ ∈ [0, 2] with q₊ = q₋ + s on a 10⁶-point grid
    let (lp, lm) = (0.5, 0.5);
    let n = 1_000_000;
    let brute = (0..=n)
        .map(|k| {
            let qm = 2.0 * k as f64 / n as f64;
            lp * poisson_ell((qm + s) / lp) + lm * poisson_ell(qm / lm)
        })
        .fold(f64::INFINITY, f64::min);
    assert!((dual.value - brute).abs() <= 1e-6, "{} vs {brute}", dual.value);
    assert!((primal.value - brute).abs() <= 1e-6);
    assert!((dual.value - two_state_rate(lp, lm, s)).abs() <= 1e-12);
    assert_eq!(dual.method, RateMethod::Dual);
    assert_eq!(primal.method, RateMethod::Primal);
}

#[test]
fn dual_and_primal_agree_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for name in ["cw", "eg3", "arn"] {
        let t = table(name);
        for x in interior_points(t.d(), 50, 5) {
            let b = random_velocity(&mut rng, t.d(), 2.0);
            let dual = local_rate(&t, &x, &b).unwrap();
            let primal = local_rate_primal(&t, &x, &b).unwrap();
            assert!((dual.value - primal.value).abs() <= 1e-6, "{name}");
            assert!(dual.flow_residual(&t, &b) <= 1e-9);
            assert!(primal.flow_residual(&t, &b) <= 1e-9);
            assert!(primal.flow_entropy_bound_holds());
            // first-order condition
            let h = hamiltonian(&t, &x, &dual.theta, false).unwrap();
            let err = h.gradient.iter().zip(&b).map(|(g, bi)| (g - bi).abs()).fold(0.0, f64::max);
            assert!(err <= 1e-8);
            assert!(dual.theta.iter().sum::<f64>().abs() <= 1e-12);
            for ((e, q), l) in t.directions().iter().zip(&dual.flows).zip(&dual.rates) {
                let th: f64 = e.vector().iter().zip(&dual.theta).map(|(v, th)| v * th).sum();
                assert!((q - l * th.exp()).abs() <= 1e-9);
            }
        }
    }
}

fn one_way() -> JumpRateTable {
    let spec = ModelSpec::new(2, vec![TupleTransition::new(vec![0], vec![1], RateExpr::Num(1.0))], true).unwrap();
    JumpRateTable::new(&spec)
}

#[test]
fn infeasible_velocity() {
    let t = one_way();
    let x = pt(&[0.5, 0.5]);
    let b = [0.1, -0.1];
    let r = local_rate(&t, &x, &b).unwrap();
    assert_eq!(r.value, f64::INFINITY);
    assert_eq!(r.method, RateMethod::Infeasible);
    let a = r.ascent.unwrap();
    assert!(a[0] * b[0] + a[1] * b[1] > 0.0);
    // the ascent direction is non-increasing along every active direction
    assert!(-a[0] + a[1] <= 1e-12);
    let p = local_rate_primal(&t, &x, &b).unwrap();
    assert_eq!(p.value, f64::INFINITY);
    // the feasible side is finite and matches the one-direction formula
    let r = local_rate(&t, &x, &[-0.2, 0.2]).unwrap();
    assert!((r.value - 0.5 * poisson_ell(0.4)).abs() < 1e-12);
}

#[test]
fn vertex_at_rest_costs_the_escape_rate() {
    // at (1, 0) only e₂ − e₁ is active, with rate e^{−2}; staying put costs λ ℓ(0) = λ
    let t = cw(1.0);
    let x = pt(&[1.0, 0.0]);
    let r = local_rate(&t, &x, &[0.0, 0.0]).unwrap();
    assert!((r.value - (-2.0f64).exp()).abs() <= 1e-9, "{}", r.value);
    let p = local_rate_primal(&t, &x, &[0.0, 0.0]).unwrap();
    assert!((p.value - r.value).abs() <= 1e-6);
}

#[test]
fn rejects_bad_velocity() {
    let t = cw(1.0);
    assert!(local_rate(&t, &pt(&[0.5, 0.5]), &[0.1, 0.1]).is_err());
    assert!(local_rate(&t, &pt(&[0.5, 0.5]), &[0.1]).is_err());
}

#[test]
fn convex_in_velocity() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for name in ["cw", "eg3", "arn"] {
        let t = table(name);
        for x in interior_points(t.d(), 10, 8) {
            let b1 = random_velocity(&mut rng, t.d(), 3.0);
            let b2 = random_velocity(&mut rng, t.d(), 3.0);
            let l1 = local_rate(&t, &x, &b1).unwrap().value;
            let l2 = local_rate(&t, &x, &b2).unwrap().value;
            for lam in [0.25, 0.5, 0.75] {
                let b: Vec<f64> = b1.iter().zip(&b2).map(|(p, q)| lam * p + (1.0 - lam) * q).collect();
                let l = local_rate(&t, &x, &b).unwrap().value;
                assert!(l >= 0.0);
                assert!(l <= lam * l1 + (1.0 - lam) * l2 + 1e-8);
            }
        }
    }
}

#[test]
fn continuity_towards_the_barycenter() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for name in ["cw", "eg3", "arn"] {
        let t = table(name);
        let d = t.d();
        let bary = SimplexPoint::barycenter(d);
        let xs = interior_points(d, 5, 21);
        let betas: Vec<Vec<f64>> = (0..10).map(|_| random_velocity(&mut rng, d, 2.0)).collect();
        let fit = |rho: f64| -> f64 {
            let mut c: f64 = 0.0;
            for x in &xs {
                let xr: Vec<f64> = x.coords().iter().zip(bary.coords()).map(|(a, b)| (1.0 - rho) * a + rho * b).collect();
                let xr = SimplexPoint::renormalized(xr).unwrap().0;
                for b in &betas {
                    let l = local_rate(&t, x, b).unwrap().value;
                    let lr = local_rate(&t, &xr, b).unwrap().value;
                    c = c.max((lr - l) / (1.0 + l));
                }
            }
            c
        };
        let c = [fit(0.1), fit(0.01), fit(0.001)];
        assert!(c[1] <= c[0] + 1e-12 && c[2] <= c[1] + 1e-12, "{name}: {c:?}");
        assert!(c[2] < 0.01);
    }
}

#[test]
fn superlinearity_bound() {
    let t = cw(1.0);
    let x = pt(&[0.5, 0.5]);
    assert!(superlinearity_bound_check(&t, &x, &[-10.0, 10.0]).unwrap().holds);
    let s = std::f64::consts::E * 1.01 / 2f64.sqrt();
    let c = superlinearity_bound_check(&t, &x, &[-s, s]).unwrap();
    assert!(c.holds && c.bound <= 0.0);
    assert!(superlinearity_bound_check(&t, &x, &[-1.0, 1.0]).is_err());
    for name in ["cw", "eg3", "arn"] {
        let t = table(name);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = interior_points(t.d(), 1, 4).remove(0);
        let b = random_velocity(&mut rng, t.d(), 1.0);
        let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        for s in [10.0, 100.0, 1000.0] {
            let sb: Vec<f64> = b.iter().map(|v| s * v / nb).collect();
            let r = local_rate(&t, &x, &sb).unwrap();
            assert!(r.value / (s * s.ln()) >= 0.1, "{name} {s}: {}", r.value);
        }
    }
}

#[test]
fn action_of_the_lln_path_vanishes() {
    for name in ["cw", "eg3"] {
        let t = table(name);
        let x = interior_points(t.d(), 1, 17).remove(0);
        let p = integrate_lln(&t, &x, 1.0, 1e-3).unwrap().to_path().unwrap();
        let a = path_action(&t, &p).unwrap();
        assert!(a.value <= 1e-6, "{name}: {}", a.value);
        assert!((a.value - a.segments.iter().sum::<f64>()).abs() <= 1e-15);
    }
    let t = cw(1.0);
    let c = PiecewiseLinearPath::constant(&pt(&[0.5, 0.5]), 1.0).unwrap();
    assert_eq!(path_action(&t, &c).unwrap().value, 0.0);
}

#[test]
fn straight_path_matches_refined_quadrature() {
    let t = cw(1.0);
    let p = PiecewiseLinearPath::straight(&pt(&[0.5, 0.5]), &pt(&[0.2, 0.8]), 1.0, 2).unwrap();
    let a = path_action(&t, &p).unwrap();
    assert_eq!(a.scheme, "gauss-legendre-5");
    // composite Simpson over 201 points with the closed-form rate
    let f = |s: f64| {
        let x1 = 0.5 - 0.3 * s;
        let (lp, lm) = cw_rates(x1, 1.0 - x1);
        two_state_rate(lp, lm, 0.3)
    };
    let n = 200;
    let h = 1.0 / n as f64;
    let simpson: f64 = (0..=n)
        .map(|k| {
            let w = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
            w * f(k as f64 * h)
        })
        .sum::<f64>()
        * h
        / 3.0;
    assert!((a.value - simpson).abs() <= 1e-5, "{} vs {simpson}", a.value);
}

#[test]
fn infinite_segments_are_flagged() {
    let t = one_way();
    let p = PiecewiseLinearPath::straight(&pt(&[0.3, 0.7]), &pt(&[0.6, 0.4]), 1.0, 3).unwrap();
    let a = path_action(&t, &p).unwrap();
    assert_eq!(a.value, f64::INFINITY);
    assert_eq!(a.infinite_segments, vec![0, 1]);
}

#[test]
fn perturbation_endpoints_and_floor() {
    let t = table("eg3");
    let g = PiecewiseLinearPath::straight(&pt(&[0.7, 0.1, 0.1, 0.1]), &pt(&[0.1, 0.2, 0.3, 0.4]), 1.0, 11).unwrap();
    let p0 = perturb_path(&t, &g, 0.0).unwrap();
    for (s, k) in g.times().iter().zip(g.knots()) {
        let v = p0.eval(*s);
        assert!(v.iter().zip(k.coords()).all(|(a, b)| (a - b).abs() <= 1e-15));
    }
    let lln = integrate_lln(&t, g.start(), 1.0, 1e-3).unwrap();
    let p1 = perturb_path(&t, &g, 1.0).unwrap();
    for (s, k) in lln.times.iter().zip(&lln.points) {
        let v = p1.eval(*s);
        assert!(v.iter().zip(k.coords()).all(|(a, b)| (a - b).abs() <= 1e-12));
    }
    let rho = 0.3;
    let p = perturb_path(&t, &g, rho).unwrap();
    assert_eq!(p.start(), g.start());
    let mu = lln.to_path().unwrap();
    for (s, k) in p.times().iter().zip(p.knots()) {
        let m = mu.eval(*s);
        for i in 0..4 {
            assert!(k.coords()[i] >= rho * m[i]);
        }
    }
}

#[test]
fn reparametrization_identity_and_lln_rescaling() {
    let t = cw(1.0);
    let g = PiecewiseLinearPath::straight(&pt(&[0.5, 0.5]), &pt(&[0.3, 0.7]), 1.0, 20).unwrap();
    let (a, b) = reparametrization_check(&t, &g, 1.0).unwrap();
    assert_eq!(a, b);
    let lln = integrate_lln(&t, &pt(&[0.2, 0.8]), 1.0, 1e-3).unwrap().to_path().unwrap();
    let (a, b) = reparametrization_check(&t, &lln, 2.0).unwrap();
    assert!(a <= 1e-4 && b.is_finite());
    assert!(reparametrization_check(&t, &g, 3.0).is_err());
}

#[test]
fn sanov_examples() {
    let u = pt(&[0.5, 0.5]);
    assert_eq!(sanov_cost(&u, &u).unwrap(), 0.0);
    assert!((sanov_cost(&pt(&[1.0, 0.0]), &u).unwrap() - 2f64.ln()).abs() < 1e-15);
    assert_eq!(sanov_cost(&u, &pt(&[1.0, 0.0])).unwrap(), f64::INFINITY);
}

#[test]
fn minimizer_reaches_the_lln_endpoint_for_free() {
    let t = cw(1.0);
    let x0 = pt(&[0.2, 0.8]);
    let end = integrate_lln(&t, &x0, 0.5, 1e-3).unwrap().end().clone();
    let r = minimize_action(&t, &x0, &end, 0.5, 30).unwrap();
    assert!(r.value <= 1e-4, "{}", r.value);
}

#[test]
fn minimizer_improves_on_the_straight_line_and_is_refinement_stable() {
    let t = cw(1.0);
    let x0 = pt(&[0.5, 0.5]);
    let x1 = pt(&[0.3, 0.7]);
    let r50 = minimize_action(&t, &x0, &x1, 0.75, 50).unwrap();
    let r25 = minimize_action(&t, &x0, &x1, 0.75, 25).unwrap();
    let straight = path_action(&t, &PiecewiseLinearPath::straight(&x0, &x1, 0.75, 50).unwrap()).unwrap();
    assert!(r50.value >= 0.0 && r50.value <= straight.value);
    assert!((r25.value - r50.value).abs() <= 0.02 * r50.value, "{} vs {}", r25.value, r50.value);
    let diag = r50.optimizer.as_ref().unwrap();
    assert_eq!(diag.knots, 50);
    assert!(diag.starts.iter().any(|s| s.label == "straight"));
    assert!(minimize_action(&t, &x0, &x1, 1.5, 50).is_err());
}

#[test]
fn quasipotential_basics() {
    let t = cw(0.5);
    let star = pt(&[0.5, 0.5]);
    let v = quasipotential(&t, &star, &star).unwrap();
    assert!(v.value <= 1e-8);
    let y = pt(&[0.3, 0.7]);
    let v = quasipotential(&t, &star, &y).unwrap();
    assert!(v.value.is_finite() && v.value > 0.0);
    assert_eq!(v.path.t_end(), 1.0);
    assert_eq!(v.horizons.len(), DEFAULT_HORIZONS.len());
}

#[test]
fn quasipotential_concatenation_seed() {
    let t = cw(0.5);
    let opts = QuasipotentialOptions {
        horizons: vec![0.5, 1.0],
        minimize: MinimizeOptions {
            knots: 20,
            ..MinimizeOptions::default()
        },
        seeds: Vec::new(),
    };
    let (x, y, z) = (pt(&[0.5, 0.5]), pt(&[0.4, 0.6]), pt(&[0.25, 0.75]));
    let xy = quasipotential_with(&t, &x, &y, &opts).unwrap();
    let yz = quasipotential_with(&t, &y, &z, &opts).unwrap();
    let seed = xy.native_path().unwrap().concat(&yz.native_path().unwrap()).unwrap();
    let seeded = QuasipotentialOptions {
        seeds: vec![seed],
        ..opts
    };
    let xz = quasipotential_with(&t, &x, &z, &seeded).unwrap();
    assert!(xz.value <= xy.value + yz.value + 1e-6);
}
