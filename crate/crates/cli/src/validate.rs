//! Validation experiments.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use mfldp::ldp::{local_rate_primal, minimize_action_with, quasipotential, superlinearity_bound_check, MinimizeOptions};
use mfldp::lln::integrate_lln;
use mfldp::model::{random_simplex_points, LatticePoint, ModelSpec, RateExpr, SimplexPoint, TupleTransition};
use mfldp::rates::JumpRateTable;
use mfldp::simulate::{
    birth_chain_bound, build_tilt_control, exact_transient, excursion_bound, excursion_constants, gillespie_run,
    lattice_states, mc_rate_estimate, point_event_decays, McOptions, RareEventEstimate, SimStream, TrajectorySample,
};

use crate::commands::structure_report;
use crate::emit::{fmt_float, json_string, write_output, Csv};
use crate::{parse_list, parse_point, CliError, Context, ModelArgs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    LlnConvergence,
    LdpSetEvent,
    LdpPointEvent,
    QuasipotentialStationary,
    BoundsSuite,
}

#[derive(Debug, Args, Serialize)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum)]
    pub experiment: Experiment,
    /// Replicates (per n where applicable).
    #[arg(long)]
    pub reps: Option<usize>,
    /// Population sizes, comma-separated.
    #[arg(long)]
    pub ns: Option<String>,
    /// Population size for single-n experiments.
    #[arg(long)]
    pub n: Option<u32>,
    /// Initial point (default: barycenter).
    #[arg(long)]
    pub x0: Option<String>,
    /// Target point for point events and the quasipotential.
    #[arg(long)]
    pub target: Option<String>,
    /// Horizon.
    #[arg(long)]
    pub t: Option<f64>,
    /// Set events: 1-based state whose fraction is thresholded.
    #[arg(long, default_value_t = 1)]
    pub state: usize,
    /// Set events: the event is `x_state ≥ threshold` at time `t`.
    #[arg(long, default_value_t = 0.8)]
    pub threshold: f64,
    /// Path knots for the action minimizations.
    #[arg(long, default_value_t = 30)]
    pub knots: usize,
    /// Run even if the structural checks fail.
    #[arg(long)]
    pub force: bool,
    /// JSON report.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV plot data (per-n decays, per-seed deviations, or check rows).
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

impl ValidateArgs {
    fn reps(&self, default: usize) -> Result<usize, CliError> {
        match self.reps {
            Some(0) => Err(CliError::Usage("--reps must be positive".into())),
            Some(r) => Ok(r),
            None => Ok(default),
        }
    }

    fn ns(&self, default: &[u32]) -> Result<Vec<u32>, CliError> {
        let Some(text) = &self.ns else {
            return Ok(default.to_vec());
        };
        let ns: Vec<u32> = parse_list("--ns", text)?
            .into_iter()
            .map(|v| if v >= 1.0 && v.fract() == 0.0 { Ok(v as u32) } else { Err(CliError::Usage(format!("--ns: {v} is not a positive integer"))) })
            .collect::<Result<_, _>>()?;
        if ns.is_empty() {
            return Err(CliError::Usage("--ns is empty".into()));
        }
        Ok(ns)
    }

    fn point(&self, flag: &str, text: &Option<String>, d: usize) -> Result<SimplexPoint, CliError> {
        match text {
            Some(s) => parse_point(flag, s, d),
            None => Ok(SimplexPoint::barycenter(d)),
        }
    }

    fn horizon(&self, default: f64) -> Result<f64, CliError> {
        let t = self.t.unwrap_or(default);
        if !(t > 0.0) || !t.is_finite() {
            return Err(CliError::Usage("--t must be positive".into()));
        }
        Ok(t)
    }
}

pub fn run(ctx: &Context, a: &ValidateArgs) -> Result<(), CliError> {
    if a.reps == Some(0) {
        return Err(CliError::Usage("--reps must be positive".into()));
    }
    let structure = structure_report(ctx);
    let holds = structure["assumptions_hold"].as_bool().unwrap_or(false);
    if !holds && !a.force && a.experiment != Experiment::BoundsSuite {
        return Err(CliError::Failed("the model fails the structural checks (use --force to run anyway)".into()));
    }
    let (mut report, csv) = match a.experiment {
        Experiment::LlnConvergence => lln_convergence(ctx, a)?,
        Experiment::LdpSetEvent => set_event(ctx, a)?,
        Experiment::LdpPointEvent => point_event(ctx, a)?,
        Experiment::QuasipotentialStationary => stationary(ctx, a)?,
        Experiment::BoundsSuite => bounds_suite(ctx, a)?,
    };
    report["experiment"] = serde_json::to_value(a.experiment).unwrap();
    report["assumptions_hold"] = json!(holds);
    report["config"] = ctx.config("validate", a)?;
    if let Some(p) = &a.csv {
        write_output(Some(p), &csv)?;
    }
    write_output(a.out.as_deref(), &json_string(&report))
}

fn decay_csv(est: &RareEventEstimate) -> String {
    let header: Vec<String> = ["n", "p_hat", "stderr", "decay", "reps", "method"].map(String::from).to_vec();
    let mut csv = Csv::new(&header);
    for r in &est.rows {
        csv.row(&[
            r.n.to_string(),
            fmt_float(r.p_hat),
            fmt_float(r.stderr),
            fmt_float(r.decay),
            r.reps.to_string(),
            r.method.clone(),
        ]);
    }
    csv.into_string()
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn lln_convergence(ctx: &Context, a: &ValidateArgs) -> Result<(Value, String), CliError> {
    let reps = a.reps(100)?;
    let n = a.n.unwrap_or(10_000);
    let t = a.horizon(1.0)?;
    let x0 = a.point("--x0", &a.x0, ctx.table.d())?;
    let lln = integrate_lln(&ctx.table, &x0, t, mfldp::lln::DEFAULT_DT)?.to_path()?;
    let start = LatticePoint::nearest(&x0, n);
    let devs: Vec<f64> = (0..reps as u64)
        .into_par_iter()
        .map(|id| {
            let s = gillespie_run(&ctx.table, &start, t, &mut SimStream::new(ctx.seed, id))?;
            Ok(s.sup_deviation(&lln))
        })
        .collect::<Result<_, mfldp::Error>>()?;
    let tol = 0.03;
    let within = devs.iter().filter(|&&d| d <= tol).count();
    let mut csv = Csv::new(&["stream".to_string(), "sup_deviation".to_string()]);
    for (i, d) in devs.iter().enumerate() {
        csv.row(&[i.to_string(), fmt_float(*d)]);
    }
    let report = json!({
        "n": n,
        "reps": reps,
        "tolerance": tol,
        "within": within,
        "pass": within as f64 >= 0.95 * reps as f64,
        "deviations": devs,
    });
    Ok((report, csv.into_string()))
}

fn set_event(ctx: &Context, a: &ValidateArgs) -> Result<(Value, String), CliError> {
    let d = ctx.table.d();
    if a.state == 0 || a.state > d {
        return Err(CliError::Usage(format!("--state must be in 1..={d}")));
    }
    let s = a.state - 1;
    let theta = a.threshold;
    let ns = a.ns(&[50, 100, 200, 400])?;
    let reps = a.reps(100_000)?;
    let t = a.horizon(1.0)?;
    let x0 = a.point("--x0", &a.x0, d)?;
    let grid_n = *ns.iter().min().unwrap();
    let targets: Vec<SimplexPoint> = lattice_states(d, grid_n)
        .into_iter()
        .filter(|c| c[s] as f64 >= theta * grid_n as f64 - 1e-9)
        .map(|c| LatticePoint::new(c, grid_n).map(|p| p.to_simplex()))
        .collect::<Result<_, _>>()?;
    if targets.is_empty() || targets.len() > 500 {
        return Err(CliError::Usage(format!("{} lattice targets at n = {grid_n}; adjust --threshold or --ns", targets.len())));
    }
    let opts = MinimizeOptions {
        knots: a.knots,
        ..MinimizeOptions::default()
    };
    let values: Vec<(f64, mfldp::ldp::ActionReport)> = targets
        .par_iter()
        .map(|y| minimize_action_with(&ctx.table, &x0, y, t, &opts).map(|r| (r.value, r)))
        .collect::<Result<_, _>>()?;
    let (best_value, best) = values
        .iter()
        .min_by(|p, q| p.0.total_cmp(&q.0))
        .map(|(v, r)| (*v, r.clone()))
        .unwrap();
    let control = build_tilt_control(&ctx.table, &best)?;
    let event = move |sample: &TrajectorySample| {
        let last = sample.state_counts(sample.times.len() - 1);
        last[s] as f64 >= theta * sample.n as f64 - 1e-9
    };
    let mc = McOptions { seed: ctx.seed, reps, horizon: t };
    let est = mc_rate_estimate(&ctx.table, &x0, &event, &ns, &mc, Some(&control))?;
    let rate = est.extrapolation.as_ref().map(|e| e.rate);
    let report = json!({
        "estimate": est,
        "j_min": best_value,
        "j_argmin": best.path.end().coords(),
        "targets": targets.len(),
        "relative_error": rate.map(|r| relative(r, best_value)),
        "pass": rate.is_some_and(|r| relative(r, best_value) <= 0.2),
    });
    Ok((report, decay_csv(&est)))
}

fn point_event(ctx: &Context, a: &ValidateArgs) -> Result<(Value, String), CliError> {
    let d = ctx.table.d();
    let ns = a.ns(&[50, 100, 200, 400])?;
    let t = a.horizon(0.75)?;
    let x0 = a.point("--x0", &a.x0, d)?;
    let target = a.point("--target", &a.target, d)?;
    let est = point_event_decays(&ctx.table, &x0, &target, t, &ns)?;
    let opts = MinimizeOptions {
        knots: a.knots.max(50),
        ..MinimizeOptions::default()
    };
    let j = minimize_action_with(&ctx.table, &x0, &target, t, &opts)?.value;
    let rate = est.extrapolation.as_ref().map(|e| e.rate);
    let report = json!({
        "estimate": est,
        "j_t": j,
        "relative_error": rate.map(|r| relative(r, j)),
        "pass": rate.is_some_and(|r| relative(r, j) <= 0.05),
    });
    Ok((report, decay_csv(&est)))
}

/// Fraction of `[0, T]` spent at the lattice point nearest `target`.
fn occupation(sample: &TrajectorySample, target: &[u32]) -> f64 {
    let mut time = 0.0;
    for k in 0..sample.times.len() {
        let end = sample.times.get(k + 1).copied().unwrap_or(sample.horizon);
        if sample.state_counts(k) == target {
            time += end - sample.times[k];
        }
    }
    time / sample.horizon
}

fn stationary(ctx: &Context, a: &ValidateArgs) -> Result<(Value, String), CliError> {
    let d = ctx.table.d();
    let ns = a.ns(&[10, 20, 40])?;
    let t = a.horizon(500.0)?;
    let x0 = a.point("--x0", &a.x0, d)?;
    let target = a
        .target
        .as_ref()
        .ok_or_else(|| CliError::Usage("quasipotential-stationary needs --target".into()))?;
    let y = parse_point("--target", target, d)?;
    let fixed = integrate_lln(&ctx.table, &x0, 100.0, mfldp::lln::DEFAULT_DT)?.end().clone();
    let v = quasipotential(&ctx.table, &fixed, &y)?;
    let rows: Vec<Value> = ns
        .par_iter()
        .enumerate()
        .map(|(i, &n)| {
            let start = LatticePoint::nearest(&fixed, n);
            let yn = LatticePoint::nearest(&y, n);
            let s = gillespie_run(&ctx.table, &start, t, &mut SimStream::new(ctx.seed, i as u64))?;
            let freq = occupation(&s, yn.counts());
            Ok(json!({
                "n": n,
                "occupation": freq,
                "decay": if freq > 0.0 { Some(-freq.ln() / n as f64) } else { None },
                "jumps": s.jumps(),
            }))
        })
        .collect::<Result<_, mfldp::Error>>()?;
    let mut csv = Csv::new(&["n".to_string(), "occupation".to_string(), "decay".to_string()]);
    for r in &rows {
        let decay = r["decay"].as_f64().map_or(String::new(), fmt_float);
        csv.row(&[r["n"].to_string(), fmt_float(r["occupation"].as_f64().unwrap()), decay]);
    }
    let report = json!({
        "fixed_point": fixed.coords(),
        "target": y.coords(),
        "quasipotential": v.value,
        "horizon": t,
        "rows": rows,
    });
    Ok((report, csv.into_string()))
}

#[derive(Debug, Serialize)]
struct CheckRow {
    check: String,
    pass: bool,
    value: f64,
    bound: f64,
    cases: usize,
}

/// Random birth chains on a one-particle lattice: exact end-state probability
/// against the chain lower bound. Returns the worst `(exact, bound)` margin.
fn birth_chains(seed: u64, count: usize) -> Result<CheckRow, mfldp::Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pass = true;
    let mut worst = (f64::INFINITY, 0.0, 0.0);
    for _ in 0..count {
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
            .fold(0.0, f64::max);
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
        if exact - bound < worst.0 {
            worst = (exact - bound, exact, bound);
        }
    }
    Ok(CheckRow {
        check: "birth-chain".into(),
        pass,
        value: worst.1,
        bound: worst.2,
        cases: count,
    })
}

fn bounds_suite(ctx: &Context, a: &ValidateArgs) -> Result<(Value, String), CliError> {
    let table = &ctx.table;
    let d = table.d();
    let mut rows = vec![birth_chains(ctx.seed, 20)?];

    let n = a.n.unwrap_or(200);
    let reps = a.reps(100_000)?;
    let delta = 0.2;
    let k = excursion_constants(table);
    let tau = delta / (2.0 * (d as f64).sqrt() * k.c2);
    let bound = excursion_bound(table, n, delta, tau)?;
    let x0 = a.point("--x0", &a.x0, d)?;
    let start = LatticePoint::nearest(&x0, n);
    let hits = (0..reps as u64)
        .into_par_iter()
        .map(|id| {
            gillespie_run(table, &start, tau, &mut SimStream::new(ctx.seed, id)).map(|s| (s.sup_excursion(tau) >= delta) as usize)
        })
        .sum::<Result<usize, mfldp::Error>>()?;
    let freq = hits as f64 / reps as f64;
    rows.push(CheckRow {
        check: "excursion".into(),
        pass: freq <= bound,
        value: freq,
        bound,
        cases: reps,
    });

    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed ^ 0x5eed);
    let points: Vec<SimplexPoint> = random_simplex_points(d, 1000, ctx.seed)
        .into_iter()
        .filter(|p| p.min_coord() >= 0.05)
        .take(10)
        .collect();
    let dirs: Vec<Vec<f64>> = (0..10)
        .map(|_| {
            let mut v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let m = v.iter().sum::<f64>() / d as f64;
            v.iter_mut().for_each(|x| *x -= m);
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
            v
        })
        .collect();
    let cases: Vec<(SimplexPoint, Vec<f64>)> = points
        .iter()
        .flat_map(|x| {
            dirs.iter().flat_map(move |v| {
                [10.0, 100.0, 1000.0].map(|s| (x.clone(), v.iter().map(|c| c * s).collect::<Vec<f64>>()))
            })
        })
        .collect();
    let superlinear = cases
        .par_iter()
        .map(|(x, beta)| superlinearity_bound_check(table, x, beta))
        .collect::<Result<Vec<_>, _>>()?;
    let worst = superlinear
        .iter()
        .min_by(|p, q| (p.value - p.bound).total_cmp(&(q.value - q.bound)))
        .unwrap();
    rows.push(CheckRow {
        check: "superlinearity".into(),
        pass: superlinear.iter().all(|c| c.holds),
        value: worst.value,
        bound: worst.bound,
        cases: superlinear.len(),
    });

    let primal = cases
        .par_iter()
        .map(|(x, beta)| local_rate_primal(table, x, beta))
        .collect::<Result<Vec<_>, _>>()?;
    let converged: Vec<_> = primal.iter().filter(|r| r.is_finite()).collect();
    rows.push(CheckRow {
        check: "flow-entropy".into(),
        pass: converged.iter().all(|r| r.flow_entropy_bound_holds()),
        value: converged.len() as f64,
        bound: primal.len() as f64,
        cases: converged.len(),
    });

    let mut csv = Csv::new(&["check", "pass", "value", "bound", "cases"].map(String::from));
    for r in &rows {
        csv.row(&[r.check.clone(), r.pass.to_string(), fmt_float(r.value), fmt_float(r.bound), r.cases.to_string()]);
    }
    let report = json!({
        "rows": rows,
        "pass": rows.iter().all(|r| r.pass),
        "excursion": { "n": n, "delta": delta, "tau": tau, "constants": k },
    });
    Ok((report, csv.into_string()))
}
