//! Minimum-action paths on a fixed time grid (`J_t`) and the
//! quasipotential `V(x, y) = inf_T J_T(x, y)`.
//!
//! The interior knots of a piecewise-linear path are optimized by projected
//! L-BFGS on the quadrature action. Gradients come from the envelope theorem:
//! `∂_β L = θ*` and `∂_x L = −Σ_v ∂_x λ_v (e^{⟨θ*,v⟩} − 1)`, with `∂_x λ_v` by
//! finite differences. The initial inverse Hessian is the inverse discrete
//! Laplacian (an `H¹` preconditioner), which removes the `O(knots²)`
//! conditioning of the path energy.

use rayon::prelude::*;
use serde::Serialize;

use super::action::{path_action, perturb_path, ActionReport, GAUSS_LEGENDRE_5};
use super::local::{local_rate_at, EXP_CAP};
use crate::error::{Error, Result};
use crate::lln::{integrate_lln, DEFAULT_DT};
use crate::model::{PiecewiseLinearPath, SimplexPoint};
use crate::rates::JumpRateTable;
use crate::structure::{build_interior_path, project_simplex};

pub const DEFAULT_KNOTS: usize = 50;
pub const DEFAULT_HORIZONS: [f64; 6] = [0.25, 0.5, 1.0, 2.0, 4.0, 8.0];
/// Step of the finite differences for `∂_x λ_v`.
pub const FD_STEP: f64 = 1e-6;
const MEMORY: usize = 8;

#[derive(Debug, Clone, Serialize)]
pub struct MinimizeOptions {
    pub knots: usize,
    pub max_iter: usize,
    /// Relative decrease below which an iteration counts as stalled.
    pub tol: f64,
    pub rho_variants: Vec<f64>,
    /// Extra starting paths; rescaled to the horizon.
    #[serde(skip)]
    pub seeds: Vec<PiecewiseLinearPath>,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            knots: DEFAULT_KNOTS,
            max_iter: 500,
            tol: 1e-10,
            rho_variants: vec![1e-2, 1e-3],
            seeds: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StartReport {
    pub label: String,
    pub initial: f64,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizerDiagnostics {
    pub horizon: f64,
    pub knots: usize,
    pub best: String,
    pub starts: Vec<StartReport>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

struct Objective<'a> {
    table: &'a JumpRateTable,
    times: Vec<f64>,
    d: usize,
}

struct Eval {
    f: f64,
    /// Per knot, projected onto the sum-zero hyperplane.
    grad: Vec<Vec<f64>>,
    /// Dual optimizers per segment and node, for warm starts.
    thetas: Vec<Vec<Vec<f64>>>,
}

struct SegmentEval {
    f: f64,
    left: Vec<f64>,
    right: Vec<f64>,
    thetas: Vec<Vec<f64>>,
}

impl<'a> Objective<'a> {
    fn n(&self) -> usize {
        self.times.len()
    }

    /// `∂_x L(x, β)` at the dual optimizer `θ`.
    fn dx_rate(&self, x: &[f64], theta: &[f64]) -> Vec<f64> {
        let dirs = self.table.directions();
        let tilt: Vec<f64> = dirs.iter().map(|e| dot(theta, e.vector()).min(EXP_CAP).exp() - 1.0).collect();
        let mut g = vec![0.0; self.d];
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        for i in 0..self.d {
            let down = if x[i] >= FD_STEP { FD_STEP } else { 0.0 };
            xp[i] = x[i] + FD_STEP;
            xm[i] = x[i] - down;
            let rp = self.table.rates(&xp);
            let rm = self.table.rates(&xm);
            let h = FD_STEP + down;
            g[i] = -(0..dirs.len()).map(|v| (rp[v] - rm[v]) / h * tilt[v]).sum::<f64>();
            xp[i] = x[i];
            xm[i] = x[i];
        }
        g
    }

    fn segment(&self, m: usize, a: &[f64], b: &[f64], warm: Option<&[Vec<f64>]>, grad: bool) -> Result<Option<SegmentEval>> {
        let h = self.times[m + 1] - self.times[m];
        let beta: Vec<f64> = a.iter().zip(b).map(|(p, q)| (q - p) / h).collect();
        let mut out = SegmentEval {
            f: 0.0,
            left: vec![0.0; self.d],
            right: vec![0.0; self.d],
            thetas: Vec::with_capacity(5),
        };
        for (j, (xi, w)) in GAUSS_LEGENDRE_5.iter().enumerate() {
            let s = 0.5 * (1.0 + xi);
            let x: Vec<f64> = a.iter().zip(b).map(|(p, q)| p + s * (q - p)).collect();
            let start = warm.map(|w| w[j].as_slice()).filter(|t| !t.is_empty());
            let r = local_rate_at(self.table, &x, &beta, start)?;
            if !r.is_finite() {
                return Ok(None);
            }
            let c = 0.5 * h * w;
            out.f += c * r.value;
            if grad {
                let dx = self.dx_rate(&x, &r.theta);
                for i in 0..self.d {
                    out.left[i] += c * ((1.0 - s) * dx[i] - r.theta[i] / h);
                    out.right[i] += c * (s * dx[i] + r.theta[i] / h);
                }
            }
            out.thetas.push(r.theta);
        }
        Ok(Some(out))
    }

    fn eval(&self, xs: &[Vec<f64>], warm: &[Vec<Vec<f64>>], grad: bool) -> Result<Option<Eval>> {
        let segs = (0..self.n() - 1)
            .into_par_iter()
            .map(|m| self.segment(m, &xs[m], &xs[m + 1], warm.get(m).map(|w| w.as_slice()), grad))
            .collect::<Result<Vec<_>>>()?;
        let mut f = 0.0;
        let mut g = vec![vec![0.0; self.d]; self.n()];
        let mut thetas = Vec::with_capacity(segs.len());
        for (m, s) in segs.into_iter().enumerate() {
            let Some(s) = s else { return Ok(None) };
            f += s.f;
            for i in 0..self.d {
                g[m][i] += s.left[i];
                g[m + 1][i] += s.right[i];
            }
            thetas.push(s.thetas);
        }
        for gk in g.iter_mut() {
            let mean = gk.iter().sum::<f64>() / self.d as f64;
            gk.iter_mut().for_each(|v| *v -= mean);
        }
        Ok(Some(Eval { f, grad: g, thetas }))
    }

    /// Apply the inverse of the discrete Dirichlet Laplacian on interior
    /// knots, coordinate by coordinate (Thomas algorithm).
    fn precondition(&self, r: &[f64]) -> Vec<f64> {
        let n = self.n() - 2;
        let d = self.d;
        let h: Vec<f64> = self.times.windows(2).map(|w| w[1] - w[0]).collect();
        let diag: Vec<f64> = (0..n).map(|k| 1.0 / h[k] + 1.0 / h[k + 1]).collect();
        let off: Vec<f64> = (0..n.saturating_sub(1)).map(|k| -1.0 / h[k + 1]).collect();
        let mut out = vec![0.0; r.len()];
        for i in 0..d {
            let mut c = vec![0.0; n];
            let mut z = vec![0.0; n];
            for k in 0..n {
                let sub = if k > 0 { off[k - 1] } else { 0.0 };
                let den = diag[k] - if k > 0 { sub * c[k - 1] } else { 0.0 };
                c[k] = if k + 1 < n { off[k] / den } else { 0.0 };
                z[k] = (r[k * d + i] - if k > 0 { sub * z[k - 1] } else { 0.0 }) / den;
            }
            for k in (0..n.saturating_sub(1)).rev() {
                z[k] -= c[k] * z[k + 1];
            }
            for k in 0..n {
                out[k * d + i] = z[k];
            }
        }
        out
    }
}

struct Outcome {
    knots: Vec<Vec<f64>>,
    initial: f64,
    value: f64,
    iterations: usize,
    converged: bool,
}

fn interior_flat(xs: &[Vec<f64>]) -> Vec<f64> {
    xs[1..xs.len() - 1].iter().flatten().copied().collect()
}

fn with_interior(xs: &[Vec<f64>], flat: &[f64], d: usize) -> Vec<Vec<f64>> {
    let mut out = xs.to_vec();
    for (k, chunk) in flat.chunks(d).enumerate() {
        out[k + 1] = project_simplex(chunk);
    }
    out
}

fn optimize(obj: &Objective, init: Vec<Vec<f64>>, max_iter: usize, tol: f64) -> Result<Outcome> {
    let d = obj.d;
    let mut xs = init;
    let Some(mut cur) = obj.eval(&xs, &[], true)? else {
        return Ok(Outcome {
            knots: xs,
            initial: f64::INFINITY,
            value: f64::INFINITY,
            iterations: 0,
            converged: false,
        });
    };
    let initial = cur.f;
    if obj.n() <= 2 {
        return Ok(Outcome {
            knots: xs,
            initial,
            value: initial,
            iterations: 0,
            converged: true,
        });
    }
    let mut x = interior_flat(&xs);
    let mut g = interior_flat(&cur.grad);
    let mut mem: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new();
    let mut stalls = 0;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        // two-loop recursion with the preconditioner as initial inverse Hessian
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(mem.len());
        for (s, y, rho) in mem.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        let mut r = obj.precondition(&q);
        if let Some((s, y, _)) = mem.last() {
            let py = obj.precondition(y);
            let gamma = dot(s, y) / dot(y, &py);
            r.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in mem.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &r);
            r.iter_mut().zip(s).for_each(|(ri, si)| *ri += si * (a - b));
        }
        let mut p: Vec<f64> = r.iter().map(|v| -v).collect();
        if !(dot(&p, &g) < 0.0) {
            mem.clear();
            p = obj.precondition(&g).iter().map(|v| -v).collect();
        }
        let pmax = p.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if pmax == 0.0 {
            converged = true;
            break;
        }
        let mut alpha = if mem.is_empty() { (0.05 / pmax).min(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + alpha * b).collect();
            let txs = with_interior(&xs, &trial, d);
            let tflat = interior_flat(&txs);
            let step: Vec<f64> = tflat.iter().zip(&x).map(|(a, b)| a - b).collect();
            if step.iter().all(|v| *v == 0.0) {
                break;
            }
            if let Some(e) = obj.eval(&txs, &cur.thetas, true)? {
                if e.f <= cur.f + 1e-4 * dot(&g, &step) {
                    accepted = Some((txs, tflat, step, e));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((txs, tflat, step, e)) = accepted else {
            if mem.is_empty() {
                converged = true;
                break;
            }
            mem.clear();
            continue;
        };
        let gn = interior_flat(&e.grad);
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&step, &y);
        if sy > 1e-16 * dot(&step, &step).sqrt() * dot(&y, &y).sqrt() {
            if mem.len() == MEMORY {
                mem.remove(0);
            }
            mem.push((step, y, 1.0 / sy));
        }
        let decrease = cur.f - e.f;
        xs = txs;
        x = tflat;
        g = gn;
        cur = e;
        if decrease <= tol * cur.f.abs().max(1e-6) {
            stalls += 1;
            if stalls >= 3 {
                converged = true;
                break;
            }
        } else {
            stalls = 0;
        }
    }
    Ok(Outcome {
        knots: xs,
        initial,
        value: cur.f,
        iterations,
        converged,
    })
}

fn uniform_grid(t: f64, knots: usize) -> Vec<f64> {
    (0..knots).map(|k| t * k as f64 / (knots - 1) as f64).collect()
}

/// Sample `path` on `times` and correct the ends linearly onto `x0`, `xt`.
fn pinned(path: &PiecewiseLinearPath, times: &[f64], x0: &[f64], xt: &[f64]) -> Vec<Vec<f64>> {
    let t = *times.last().unwrap();
    let a = path.eval(times[0]);
    let b = path.eval(t);
    times
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            if k == 0 {
                return x0.to_vec();
            }
            if k + 1 == times.len() {
                return xt.to_vec();
            }
            let w = s / t;
            let p: Vec<f64> = path
                .eval(s)
                .iter()
                .enumerate()
                .map(|(i, v)| v + w * (xt[i] - b[i]) + (1.0 - w) * (x0[i] - a[i]))
                .collect();
            project_simplex(&p)
        })
        .collect()
}

fn lln_bridge(table: &JumpRateTable, x0: &SimplexPoint, xt: &SimplexPoint, t: f64) -> Option<PiecewiseLinearPath> {
    let half = 0.5 * t;
    let lln = integrate_lln(table, x0, half, DEFAULT_DT).ok()?;
    let mid = lln.end().clone();
    let a = mid.min_coord().min(xt.min_coord());
    if !(a > 1e-9) {
        return None;
    }
    let bridge = build_interior_path(table.spec(), &mid, xt, a).ok()?;
    let bridge = bridge.path.time_scaled(1.0 / half).ok()?.starting_at(half);
    lln.to_path().ok()?.concat(&bridge).ok()
}

fn to_path(times: &[f64], knots: &[Vec<f64>]) -> Result<PiecewiseLinearPath> {
    let pts = knots
        .iter()
        .map(|k| SimplexPoint::renormalized(k.clone()).map(|p| p.0))
        .collect::<Result<Vec<_>>>()?;
    PiecewiseLinearPath::new(times.to_vec(), pts)
}

/// Upper bound on `J_t(x0, xt)` with `knots` equally spaced knots and default
/// options; `t ∈ (0, 1]`.
pub fn minimize_action(
    table: &JumpRateTable,
    x0: &SimplexPoint,
    xt: &SimplexPoint,
    t: f64,
    knots: usize,
) -> Result<ActionReport> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::Precondition("horizon t must lie in (0, 1]".into()));
    }
    let opts = MinimizeOptions {
        knots,
        ..MinimizeOptions::default()
    };
    minimize_action_with(table, x0, xt, t, &opts)
}

/// [`minimize_action`] for any horizon `t > 0` and explicit options.
///
/// Starts: the straight line, the LLN path with its end pinned to `xt`, the
/// LLN path up to `t/2` followed by an interior bridge, the supplied seeds,
/// and `ψ^ρ` perturbations of the best of those.
pub fn minimize_action_with(
    table: &JumpRateTable,
    x0: &SimplexPoint,
    xt: &SimplexPoint,
    t: f64,
    opts: &MinimizeOptions,
) -> Result<ActionReport> {
    let d = table.d();
    if x0.d() != d || xt.d() != d {
        return Err(Error::Precondition("endpoints must have the model dimension".into()));
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Precondition("horizon must be positive".into()));
    }
    if opts.knots < 2 {
        return Err(Error::Precondition("need at least 2 knots".into()));
    }
    let times = uniform_grid(t, opts.knots);
    let obj = Objective {
        table,
        times: times.clone(),
        d,
    };
    let (a, b) = (x0.coords(), xt.coords());

    let mut starts: Vec<(String, Vec<Vec<f64>>)> = Vec::new();
    let straight = PiecewiseLinearPath::straight(x0, xt, t, opts.knots)?;
    starts.push(("straight".into(), straight.knots().iter().map(|k| k.coords().to_vec()).collect()));
    if let Ok(lln) = integrate_lln(table, x0, t, DEFAULT_DT) {
        starts.push(("lln".into(), pinned(&lln.to_path()?, &times, a, b)));
    }
    if let Some(p) = lln_bridge(table, x0, xt, t) {
        starts.push(("lln-bridge".into(), pinned(&p, &times, a, b)));
    }
    for (i, s) in opts.seeds.iter().enumerate() {
        if s.segments() == 0 || s.start().distance(x0) > 1e-9 || s.end().distance(xt) > 1e-9 {
            continue;
        }
        let scaled = s.starting_at(0.0).time_scaled(s.duration() / t)?;
        starts.push((format!("seed-{i}"), pinned(&scaled, &times, a, b)));
    }

    let run = |(label, init): (String, Vec<Vec<f64>>)| -> (String, Result<Outcome>) {
        (label, optimize(&obj, init, opts.max_iter, opts.tol))
    };
    let mut results: Vec<(String, Result<Outcome>)> = starts.into_par_iter().map(run).collect();

    let best_of = |rs: &[(String, Result<Outcome>)]| -> Option<usize> {
        (0..rs.len())
            .filter(|&i| matches!(&rs[i].1, Ok(o) if o.value.is_finite()))
            .min_by(|&i, &j| {
                let vi = rs[i].1.as_ref().unwrap().value;
                let vj = rs[j].1.as_ref().unwrap().value;
                vi.partial_cmp(&vj).unwrap()
            })
    };
    if let Some(i) = best_of(&results) {
        let base = to_path(&times, &results[i].1.as_ref().unwrap().knots)?;
        let variants: Vec<(String, Vec<Vec<f64>>)> = opts
            .rho_variants
            .iter()
            .filter_map(|&rho| {
                let p = perturb_path(table, &base, rho).ok()?;
                Some((format!("psi-{rho:e}"), pinned(&p, &times, a, b)))
            })
            .collect();
        results.extend(variants.into_par_iter().map(run).collect::<Vec<_>>());
    }

    let starts_report: Vec<StartReport> = results
        .iter()
        .map(|(label, r)| match r {
            Ok(o) => StartReport {
                label: label.clone(),
                initial: o.initial,
                value: o.value,
                iterations: o.iterations,
                converged: o.converged,
            },
            Err(_) => StartReport {
                label: label.clone(),
                initial: f64::INFINITY,
                value: f64::INFINITY,
                iterations: 0,
                converged: false,
            },
        })
        .collect();
    let (best_label, path) = match best_of(&results) {
        Some(i) => (results[i].0.clone(), to_path(&times, &results[i].1.as_ref().unwrap().knots)?),
        None => {
            if let Some((_, Err(e))) = results.iter().find(|(_, r)| r.is_err()) {
                if results.iter().all(|(_, r)| r.is_err()) {
                    return Err(e.clone());
                }
            }
            ("none".into(), straight)
        }
    };
    let mut report = path_action(table, &path)?;
    report.optimizer = Some(OptimizerDiagnostics {
        horizon: t,
        knots: opts.knots,
        best: best_label,
        starts: starts_report,
    });
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct HorizonValue {
    pub horizon: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct QuasipotentialReport {
    pub value: f64,
    /// Horizon of the best path (0 for `x = y`).
    pub horizon: f64,
    /// Best path, rescaled to `[0, 1]`.
    pub path: PiecewiseLinearPath,
    pub horizons: Vec<HorizonValue>,
    /// `"horizon"` or `"seed"`.
    pub source: String,
}

impl QuasipotentialReport {
    /// The best path on its own horizon `[0, T]`.
    pub fn native_path(&self) -> Result<PiecewiseLinearPath> {
        if self.horizon == 0.0 {
            return Ok(self.path.clone());
        }
        self.path.time_scaled(1.0 / self.horizon)
    }
}

#[derive(Debug, Clone)]
pub struct QuasipotentialOptions {
    pub horizons: Vec<f64>,
    pub minimize: MinimizeOptions,
    /// Candidate paths `x → y` of any horizon (for instance concatenations
    /// through waypoints); evaluated as they are and used as starts.
    pub seeds: Vec<PiecewiseLinearPath>,
}

impl Default for QuasipotentialOptions {
    fn default() -> Self {
        QuasipotentialOptions {
            horizons: DEFAULT_HORIZONS.to_vec(),
            minimize: MinimizeOptions::default(),
            seeds: Vec::new(),
        }
    }
}

/// Estimate of `V(x, y)` with default options.
pub fn quasipotential(table: &JumpRateTable, x: &SimplexPoint, y: &SimplexPoint) -> Result<QuasipotentialReport> {
    quasipotential_with(table, x, y, &QuasipotentialOptions::default())
}

/// Minimum over horizons of the minimized action, and over the supplied seeds.
pub fn quasipotential_with(
    table: &JumpRateTable,
    x: &SimplexPoint,
    y: &SimplexPoint,
    opts: &QuasipotentialOptions,
) -> Result<QuasipotentialReport> {
    if x.d() != table.d() || y.d() != table.d() {
        return Err(Error::Precondition("points must have the model dimension".into()));
    }
    if x.distance(y) == 0.0 {
        return Ok(QuasipotentialReport {
            value: 0.0,
            horizon: 0.0,
            path: PiecewiseLinearPath::new(vec![0.0], vec![x.clone()])?,
            horizons: Vec::new(),
            source: "horizon".into(),
        });
    }
    let seeds: Vec<PiecewiseLinearPath> = opts
        .seeds
        .iter()
        .filter(|s| s.segments() > 0 && s.start().distance(x) <= 1e-9 && s.end().distance(y) <= 1e-9)
        .cloned()
        .collect();
    let mut mopts = opts.minimize.clone();
    mopts.seeds.extend(seeds.iter().cloned());
    let per_horizon = opts
        .horizons
        .par_iter()
        .map(|&t| minimize_action_with(table, x, y, t, &mopts).map(|r| (t, r)))
        .collect::<Result<Vec<_>>>()?;
    let mut best: Option<(f64, f64, PiecewiseLinearPath, &str)> = None;
    let mut consider = |v: f64, t: f64, p: &PiecewiseLinearPath, src: &'static str| {
        if v.is_finite() && best.as_ref().is_none_or(|b| v < b.0) {
            best = Some((v, t, p.clone(), src));
        }
    };
    for (t, r) in &per_horizon {
        consider(r.value, *t, &r.path, "horizon");
    }
    for s in &seeds {
        let r = path_action(table, &s.starting_at(0.0))?;
        consider(r.value, s.duration(), &r.path, "seed");
    }
    let horizons = per_horizon
        .iter()
        .map(|(t, r)| HorizonValue {
            horizon: *t,
            value: r.value,
        })
        .collect();
    match best {
        Some((value, horizon, path, source)) => Ok(QuasipotentialReport {
            value,
            horizon,
            path: path.time_scaled(horizon)?,
            horizons,
            source: source.into(),
        }),
        None => {
            let t = opts.horizons.first().copied().unwrap_or(1.0);
            Ok(QuasipotentialReport {
                value: f64::INFINITY,
                horizon: t,
                path: PiecewiseLinearPath::straight(x, y, 1.0, 2)?,
                horizons,
                source: "horizon".into(),
            })
        }
    }
}
