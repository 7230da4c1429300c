//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any fails.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use mfldp::ldp::{
    local_rate, local_rate_primal, minimize_action, path_action, perturb_path, reparametrization_bound,
    reparametrization_check, superlinearity_bound_check, ActionReport, LocalRateResult,
};
use mfldp::lln::{integrate_lln, DEFAULT_DT};
use mfldp::model::{
    builtin_model, random_simplex_points, LatticePoint, ModelSpec, PiecewiseLinearPath, RateExpr, SimplexPoint,
    TupleTransition,
};
use mfldp::rates::{tuple_count, JumpRateTable};
use mfldp::simulate::{
    birth_chain_bound, build_tilt_control, exact_transient, excursion_bound, excursion_constants, gillespie_run,
    lattice_states, mc_rate_estimate, point_event_decays, McOptions, SimStream, TrajectorySample,
};
use mfldp::structure::{
    build_boundary_escape, build_interior_path, check_single_ergodic, check_ue, is_k_ergodic, represent_direction,
    CommunicatingPath, SingleMatrix,
};

const BUILTINS: [&str; 3] = ["curie-weiss", "arn", "eg3"];

struct Outcome {
    pass: bool,
    detail: String,
}

type Check = fn() -> mfldp::Result<Outcome>;

/// For criteria without a runtime budget.
const NO_BUDGET: Option<Duration> = None;

fn spec(name: &str) -> ModelSpec {
    builtin_model(name, &BTreeMap::new()).unwrap()
}

fn table(name: &str) -> JumpRateTable {
    JumpRateTable::new(&spec(name))
}

fn pt(c: &[f64]) -> SimplexPoint {
    SimplexPoint::new(c.to_vec()).unwrap()
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Points with every coordinate at least `floor`.
fn floored_points(d: usize, count: usize, floor: f64, seed: u64) -> Vec<SimplexPoint> {
    random_simplex_points(d, count, seed)
        .into_iter()
        .map(|p| pt(&p.coords().iter().map(|c| floor + (1.0 - floor * d as f64) * c).collect::<Vec<_>>()))
        .collect()
}

/// Sum-zero vector with Euclidean norm `scale`.
fn velocity(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let m = v.iter().sum::<f64>() / d as f64;
    v.iter_mut().for_each(|x| *x -= m);
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x *= scale / norm);
    v
}

fn dual_primal_agreement() -> mfldp::Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    let mut cases = 0;
    for name in BUILTINS {
        let t = table(name);
        let pairs: Vec<(SimplexPoint, Vec<f64>)> = floored_points(t.d(), 200, 0.05, 7)
            .into_iter()
            .map(|x| {
                let s = rng.gen_range(0.1..3.0);
                let b = velocity(&mut rng, t.d(), s);
                (x, b)
            })
            .collect();
        let gaps = pairs
            .par_iter()
            .map(|(x, b)| Ok((local_rate(&t, x, b)?.value - local_rate_primal(&t, x, b)?.value).abs()))
            .collect::<mfldp::Result<Vec<f64>>>()?;
        worst = gaps.iter().copied().fold(worst, f64::max);
        cases += gaps.len();
    }
    Ok(Outcome {
        pass: worst <= 1e-6,
        detail: format!("{cases} pairs, max |dual − primal| = {worst:.3e} (tol 1e-6)"),
    })
}

fn point_event_ldp() -> mfldp::Result<Outcome> {
    let t = table("curie-weiss");
    let (x0, target, horizon) = (pt(&[0.5, 0.5]), pt(&[0.3, 0.7]), 0.75);
    let est = point_event_decays(&t, &x0, &target, horizon, &[50, 100, 200, 400])?;
    let j = minimize_action(&t, &x0, &target, horizon, 50)?.value;
    let rate = est.extrapolation.as_ref().map_or(f64::NAN, |e| e.rate);
    let err = relative(rate, j);
    Ok(Outcome {
        pass: err <= 0.05,
        detail: format!("extrapolated decay {rate:.5}, J = {j:.5}, relative error {err:.3} (tol 0.05)"),
    })
}

fn set_event_ldp() -> mfldp::Result<Outcome> {
    let t = table("curie-weiss");
    let x0 = pt(&[0.5, 0.5]);
    let grid_n = 50;
    let targets: Vec<SimplexPoint> = lattice_states(2, grid_n)
        .into_iter()
        .filter(|c| c[0] * 5 >= 4 * grid_n)
        .map(|c| LatticePoint::new(c, grid_n).map(|p| p.to_simplex()))
        .collect::<mfldp::Result<_>>()?;
    let optima = targets
        .par_iter()
        .map(|y| minimize_action(&t, &x0, y, 1.0, 30))
        .collect::<mfldp::Result<Vec<ActionReport>>>()?;
    let best = optima.iter().min_by(|a, b| a.value.total_cmp(&b.value)).unwrap();
    let control = build_tilt_control(&t, best)?;
    let event = |s: &TrajectorySample| s.state_counts(s.times.len() - 1)[0] * 5 >= 4 * s.n;
    let opts = McOptions { seed: 303, reps: 100_000, horizon: 1.0 };
    let est = mc_rate_estimate(&t, &x0, &event, &[50, 100, 200, 400], &opts, Some(&control))?;
    let rate = est.extrapolation.as_ref().map_or(f64::NAN, |e| e.rate);
    let err = relative(rate, best.value);
    let decays: Vec<String> = est.rows.iter().map(|r| format!("{}:{:.4}", r.n, r.decay)).collect();
    Ok(Outcome {
        pass: err <= 0.2,
        detail: format!(
            "decays [{}], extrapolated {rate:.4}, min J = {:.4}, relative error {err:.3} (tol 0.2)",
            decays.join(" "),
            best.value
        ),
    })
}

fn lln_convergence() -> mfldp::Result<Outcome> {
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, x0) in [("curie-weiss", pt(&[0.5, 0.5])), ("eg3", SimplexPoint::barycenter(4))] {
        let t = table(name);
        let lln = integrate_lln(&t, &x0, 1.0, DEFAULT_DT)?.to_path()?;
        let start = LatticePoint::nearest(&x0, 10_000);
        let devs = (0..100u64)
            .into_par_iter()
            .map(|id| Ok(gillespie_run(&t, &start, 1.0, &mut SimStream::new(404, id))?.sup_deviation(&lln)))
            .collect::<mfldp::Result<Vec<f64>>>()?;
        let within = devs.iter().filter(|&&d| d <= 0.03).count();
        pass &= within >= 95;
        parts.push(format!("{name} {within}/100"));
    }
    Ok(Outcome {
        pass,
        detail: format!("{} within 0.03 (need 95)", parts.join(", ")),
    })
}

fn eg3_structure() -> mfldp::Result<Outcome> {
    let s = spec("eg3");
    let kerg = is_k_ergodic(&s).ergodic;
    let g2 = check_single_ergodic(&s, SingleMatrix::Effective);
    let g1 = check_single_ergodic(&s, SingleMatrix::Single).ergodic;
    let ue = check_ue(&s).ok;
    let boundary = g2
        .counterexample
        .as_ref()
        .is_some_and(|x| x.contains(&0.0));
    Ok(Outcome {
        pass: kerg && !g2.ergodic && boundary && !g1 && ue,
        detail: format!(
            "k-ergodic {kerg}, effective ergodic {} (counterexample {:?}), single ergodic {g1}, ue {ue}",
            g2.ergodic, g2.counterexample
        ),
    })
}

fn birth_chains() -> mfldp::Result<(bool, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut pass = true;
    let mut margin = f64::INFINITY;
    for _ in 0..20 {
        let steps = rng.gen_range(1..=5);
        let d = steps + 1;
        let b: Vec<f64> = (0..steps).map(|_| rng.gen_range(0.2..3.0)).collect();
        let mut ts: Vec<(usize, usize, f64)> = (0..steps).map(|i| (i, i + 1, b[i])).collect();
        for i in 0..d {
            for j in 0..d {
                if j != i && j != i + 1 && rng.gen_bool(0.3) {
                    ts.push((i, j, rng.gen_range(0.1..1.0)));
                }
            }
        }
        let c = (0..d)
            .map(|i| ts.iter().filter(|t| t.0 == i).map(|t| t.2).sum::<f64>())
            .fold(0.0, f64::max)
            * rng.gen_range(1.0..1.5);
        let t = rng.gen_range(0.1..4.0);
        let transitions = ts
            .iter()
            .map(|&(i, j, r)| TupleTransition::new(vec![i], vec![j], RateExpr::constant(r)))
            .collect();
        let table = JumpRateTable::new(&ModelSpec::new(d, transitions, false)?);
        let mut start = vec![0; d];
        start[0] = 1;
        let law = exact_transient(&table, &LatticePoint::new(start, 1)?, t)?;
        let mut end = vec![0; d];
        end[steps] = 1;
        let exact = law.prob(&end);
        let bound = birth_chain_bound(&b, c, t)?;
        pass &= exact >= bound * (1.0 - 1e-10) - law.truncation;
        margin = margin.min(exact - bound);
    }
    Ok((pass, margin))
}

fn bounds_suite() -> mfldp::Result<Outcome> {
    let (chains, margin) = birth_chains()?;

    let cw = table("curie-weiss");
    let delta = 0.2;
    let tau = delta / (2.0 * 2f64.sqrt() * excursion_constants(&cw).c2);
    let bound = excursion_bound(&cw, 200, delta, tau)?;
    let start = LatticePoint::nearest(&pt(&[0.5, 0.5]), 200);
    let hits = (0..100_000u64)
        .into_par_iter()
        .map(|id| Ok((gillespie_run(&cw, &start, tau, &mut SimStream::new(616, id))?.sup_excursion(tau) >= delta) as usize))
        .sum::<mfldp::Result<usize>>()?;
    let freq = hits as f64 / 1e5;
    let excursion = freq <= bound;

    let mut superlinear = true;
    let mut entropy = true;
    let mut solves = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(626);
    for name in BUILTINS {
        let t = table(name);
        let d = t.d();
        let points = floored_points(d, 10, 0.05, 17);
        let dirs: Vec<Vec<f64>> = (0..10).map(|_| velocity(&mut rng, d, 1.0)).collect();
        let cases: Vec<(SimplexPoint, Vec<f64>)> = points
            .iter()
            .flat_map(|x| {
                dirs.iter()
                    .flat_map(move |v| [10.0, 100.0, 1000.0].map(|s| (x.clone(), v.iter().map(|c| c * s).collect())))
            })
            .collect();
        let checks = cases
            .par_iter()
            .map(|(x, b)| superlinearity_bound_check(&t, x, b))
            .collect::<mfldp::Result<Vec<_>>>()?;
        superlinear &= checks.iter().all(|c| c.holds);
        let mut pairs = cases.clone();
        pairs.extend(floored_points(d, 100, 0.05, 19).into_iter().map(|x| {
            let s = rng.gen_range(0.1..3.0);
            (x, velocity(&mut rng, d, s))
        }));
        let primal = pairs
            .par_iter()
            .map(|(x, b)| local_rate_primal(&t, x, b))
            .collect::<mfldp::Result<Vec<LocalRateResult>>>()?;
        for r in primal.iter().filter(|r| r.is_finite()) {
            entropy &= r.flow_entropy_bound_holds();
            solves += 1;
        }
    }
    Ok(Outcome {
        pass: chains && excursion && superlinear && entropy,
        detail: format!(
            "birth chains {chains} (min margin {margin:.2e}); excursion freq {freq:.2e} ≤ bound {bound:.3e}: {excursion}; \
             superlinearity on 900 cases {superlinear}; flow-entropy at {solves} primal solves {entropy}"
        ),
    })
}

fn guard_holds(p: &CommunicatingPath, a: f64) -> bool {
    (0..p.directions.len()).all(|m| {
        let (t0, t1) = (p.path.times()[m], p.path.times()[m + 1]);
        (0..=64).all(|s| {
            let x = p.path.eval(t0 + (t1 - t0) * s as f64 / 64.0);
            p.directions[m].iter().zip(&x).all(|(&v, &xi)| v >= 0 || xi >= a - 1e-12)
        })
    })
}

fn constructive_paths() -> mfldp::Result<Outcome> {
    let mut rep_worst = 0.0f64;
    let mut tele_worst = 0.0f64;
    let mut reps = 0;
    for name in ["eg3", "curie-weiss"] {
        let s = spec(name);
        for u in 0..s.d() {
            for w in (0..s.d()).filter(|&w| w != u) {
                rep_worst = rep_worst.max(represent_direction(&s, u, w)?.residual);
                reps += 1;
            }
        }
        let a = 0.05;
        let points = floored_points(s.d(), 6, a, 23);
        for x in &points {
            for y in &points {
                let p = build_interior_path(&s, x, y, a)?;
                tele_worst = tele_worst.max(p.telescoping_residual(x.coords(), y.coords()));
            }
        }
    }
    let eg3 = spec("eg3");
    let a_max = 1.0 / ((eg3.k_max() as f64 + 1.0).powi(3) * 4.0);
    let mut escapes = true;
    for i in 0..4 {
        let x = SimplexPoint::vertex(4, i);
        for a in [a_max, a_max / 3.0] {
            let p = build_boundary_escape(&eg3, &x, a)?;
            escapes &= p.end().min_coord() >= a - 1e-12 && guard_holds(&p, a);
            tele_worst = tele_worst.max(p.telescoping_residual(x.coords(), p.end().coords()));
        }
    }
    Ok(Outcome {
        pass: rep_worst <= 1e-10 && escapes && tele_worst <= 1e-10,
        detail: format!(
            "{reps} representations, max residual {rep_worst:.2e}; vertex escapes reach the interior with the guard: {escapes}; \
             max telescoping residual {tele_worst:.2e} (tol 1e-10)"
        ),
    })
}

fn perturbation_and_reparametrization() -> mfldp::Result<Outcome> {
    let t = table("curie-weiss");
    let cases = [
        ([0.5, 0.5], [0.3, 0.7]),
        ([0.5, 0.5], [0.35, 0.65]),
        ([0.5, 0.5], [0.6, 0.4]),
        ([0.5, 0.5], [0.75, 0.25]),
        ([0.5, 0.5], [0.8, 0.2]),
        ([0.3, 0.7], [0.5, 0.5]),
        ([0.3, 0.7], [0.2, 0.8]),
        ([0.7, 0.3], [0.4, 0.6]),
        ([0.2, 0.8], [0.6, 0.4]),
        ([0.9, 0.1], [0.5, 0.5]),
    ];
    let paths = cases
        .par_iter()
        .map(|(x, y)| minimize_action(&t, &pt(x), &pt(y), 1.0, 20).map(|r| r.path))
        .collect::<mfldp::Result<Vec<PiecewiseLinearPath>>>()?;
    let results = paths
        .par_iter()
        .map(|g| -> mfldp::Result<(bool, bool, f64, f64)> {
            // ε(ρ) is the least excess that makes I(ψ^ρ) ≤ I(γ) + ε(ρ) true;
            // the signed gap is also required to shrink in magnitude.
            let base = path_action(&t, &perturb_path(&t, g, 0.0)?)?.value;
            let mut gaps = Vec::new();
            let mut close = true;
            for k in 3..=10 {
                let rho = 0.5f64.powi(k);
                let psi = perturb_path(&t, g, rho)?;
                gaps.push(path_action(&t, &psi)?.value - base);
                close &= psi.times().iter().all(|&s| {
                    let dist = psi.eval(s).iter().zip(g.eval(s)).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                    dist <= 2f64.sqrt() * rho + 1e-12
                });
            }
            let eps: Vec<f64> = gaps.iter().map(|g| g.max(0.0)).collect();
            let slack = 1e-9 * (1.0 + base);
            let perturb = close
                && eps.windows(2).all(|w| w[1] <= w[0] + slack)
                && gaps.windows(2).all(|w| w[1].abs() <= w[0].abs() + slack)
                && eps[7] <= 0.05 * base + 1e-3;
            let mut reparam = true;
            let mut ratio = 0.0f64;
            for c in [0.99, 1.01] {
                let (a, b) = reparametrization_check(&t, g, c)?;
                let bound = reparametrization_bound(&t, a, c);
                reparam &= (a - b).abs() <= bound;
                ratio = ratio.max((a - b).abs() / bound);
            }
            let (a, b) = reparametrization_check(&t, g, 1.0)?;
            reparam &= a == b;
            Ok((perturb, reparam, gaps[7], ratio))
        })
        .collect::<mfldp::Result<Vec<_>>>()?;
    let lln = integrate_lln(&t, &pt(&[0.2, 0.8]), 1.0, DEFAULT_DT)?.to_path()?;
    let (a, b) = reparametrization_check(&t, &lln, 2.0)?;
    let perturb = results.iter().all(|r| r.0);
    let reparam = results.iter().all(|r| r.1) && a.is_finite() && b.is_finite();
    let last_gap = results.iter().map(|r| r.2.abs()).fold(0.0, f64::max);
    let rep_ratio = results.iter().map(|r| r.3).fold(0.0, f64::max);
    Ok(Outcome {
        pass: perturb && reparam,
        detail: format!(
            "10 optimizer paths: ψ^ρ within diam·ρ of γ, ε(ρ) and |I(ψ^ρ) − I(γ)| decreasing, ε(2^-10) small: {perturb} (max |gap| at 2^-10 {last_gap:.2e}); \
             reparametrization within bound {reparam} (worst |Δ|/bound {rep_ratio:.3}); LLN at c=2: {a:.2e} → {b:.2e}"
        ),
    })
}

/// Ordered tuples of distinct labelled particles whose states spell `tuple`.
fn enumerate_tuples(counts: &[u32], tuple: &[usize]) -> u128 {
    let labels: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(s, &c)| std::iter::repeat_n(s, c as usize))
        .collect();
    fn go(labels: &[usize], tuple: &[usize], used: &mut Vec<usize>) -> u128 {
        if used.len() == tuple.len() {
            return 1;
        }
        let want = tuple[used.len()];
        let mut total = 0;
        for p in 0..labels.len() {
            if labels[p] == want && !used.contains(&p) {
                used.push(p);
                total += go(labels, tuple, used);
                used.pop();
            }
        }
        total
    }
    go(&labels, tuple, &mut Vec::new())
}

fn oracle_equivalences() -> mfldp::Result<Outcome> {
    let mut counting = true;
    let mut cases = 0;
    for n in 1..=8u32 {
        for a in 0..=n {
            for b in 0..=(n - a) {
                let counts = vec![a, b, n - a - b];
                let x = LatticePoint::new(counts.clone(), n)?;
                for k in 1..=3u32 {
                    for code in 0..3usize.pow(k) {
                        let tuple: Vec<usize> = (0..k).map(|p| code / 3usize.pow(p) % 3).collect();
                        counting &= tuple_count(n, &tuple, &x)? == enumerate_tuples(&counts, &tuple);
                        cases += 1;
                    }
                }
            }
        }
    }

    let cw = table("curie-weiss");
    let n = 50;
    let x = LatticePoint::nearest(&pt(&[0.5, 0.5]), n);
    let law = exact_transient(&cw, &x, 1.0)?;
    let runs = 100_000u64;
    let ends = (0..runs)
        .into_par_iter()
        .map(|id| {
            let s = gillespie_run(&cw, &x, 1.0, &mut SimStream::new(909, id))?;
            Ok(s.state_counts(s.times.len() - 1)[0])
        })
        .collect::<mfldp::Result<Vec<u32>>>()?;
    let mut gillespie = true;
    let mut z_max = 0.0f64;
    for k in [15u32, 20, 25, 30, 35] {
        let p = law.prob(&[k, n - k]);
        let freq = ends.iter().filter(|&&e| e == k).count() as f64 / runs as f64;
        let z = (freq - p).abs() / (p * (1.0 - p) / runs as f64).sqrt();
        gillespie &= z <= 4.0;
        z_max = z_max.max(z);
    }

    let start = pt(&[0.5, 0.5]);
    let tail = |k: u32| {
        law.states
            .iter()
            .zip(&law.probabilities)
            .filter(|(s, _)| s[0] >= k)
            .map(|(_, p)| p)
            .sum::<f64>()
    };
    let k = (0..=n).find(|&k| tail(k) <= 1.5e-2).unwrap();
    let target = pt(&[k as f64 / n as f64, 1.0 - k as f64 / n as f64]);
    let control = build_tilt_control(&cw, &minimize_action(&cw, &start, &target, 1.0, 20)?)?;
    let event = move |s: &TrajectorySample| s.state_counts(s.times.len() - 1)[0] >= k;
    let opts = McOptions { seed: 919, reps: 20_000, horizon: 1.0 };
    let plain = &mc_rate_estimate(&cw, &start, &event, &[n], &opts, None)?.rows[0];
    let is = &mc_rate_estimate(&cw, &start, &event, &[n], &opts, Some(&control))?.rows[0];
    let combined = (plain.stderr.powi(2) + is.stderr.powi(2)).sqrt();
    let z_is = (plain.p_hat - is.p_hat).abs() / combined;
    let sampling = z_is <= 3.0;

    Ok(Outcome {
        pass: counting && gillespie && sampling,
        detail: format!(
            "tuple counts on {cases} cases {counting}; Gillespie vs uniformization max z {z_max:.2} (tol 4); \
             IS {:.4e} vs plain {:.4e}, z {z_is:.2} (tol 3)",
            is.p_hat, plain.p_hat
        ),
    })
}

fn main() {
    let criteria: [(&str, Check, Option<Duration>); 9] = [
        ("1 dual/primal rate equality", dual_primal_agreement, Some(Duration::from_secs(30))),
        ("2 point-event LDP", point_event_ldp, Some(Duration::from_secs(300))),
        ("3 set-event LDP", set_event_ldp, Some(Duration::from_secs(600))),
        ("4 law of large numbers", lln_convergence, Some(Duration::from_secs(120))),
        ("5 eg3 structure", eg3_structure, Some(Duration::from_secs(5))),
        ("6 bounds suite", bounds_suite, Some(Duration::from_secs(180))),
        ("7 constructive paths", constructive_paths, NO_BUDGET),
        ("8 perturbation and reparametrization", perturbation_and_reparametrization, NO_BUDGET),
        ("9 oracle equivalences", oracle_equivalences, NO_BUDGET),
    ];
    let mut failed = 0;
    for (name, check, budget) in criteria {
        let clock = Instant::now();
        let outcome = check();
        let elapsed = clock.elapsed();
        let (pass, detail) = match outcome {
            Ok(o) => (o.pass && budget.is_none_or(|b| elapsed <= b), o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "{} criterion {name}: {detail} [{:.1}s{}]",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.map_or(String::new(), |b| format!(" of {}s", b.as_secs()))
        );
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
