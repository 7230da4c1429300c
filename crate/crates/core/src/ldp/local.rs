//! Poisson cost `ℓ`, the Hamiltonian `H(x, θ)` and the local rate function
//! `L(x, β)` in its dual (`sup_θ ⟨θ,β⟩ − H`) and primal (entropy
//! minimization over flows) forms.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::nnls::nnls;
use crate::error::{Error, Result};
use crate::model::SimplexPoint;
use crate::rates::JumpRateTable;

/// Exponents above this are continued linearly.
pub const EXP_CAP: f64 = 700.0;
/// Dual iterates beyond this norm are treated as diverging.
pub const DIVERGENCE_NORM: f64 = 1e3;
const MAX_NEWTON: usize = 200;
const MAX_PRIMAL: usize = 400;

/// `ℓ(r) = r log r − r + 1` for `r ≥ 0`, `+∞` for `r < 0`.
pub fn poisson_ell(r: f64) -> f64 {
    if r.is_nan() || r < 0.0 {
        f64::INFINITY
    } else if r == 0.0 {
        1.0
    } else if r.is_infinite() {
        f64::INFINITY
    } else {
        r * r.ln() - r + 1.0
    }
}

/// `exp` with the linear continuation above [`EXP_CAP`]: value, first and
/// second derivative, and whether the cap was hit.
#[inline]
fn capped_exp(s: f64) -> (f64, f64, f64, bool) {
    if s <= EXP_CAP {
        let e = s.exp();
        (e, e, e, false)
    } else {
        let e = EXP_CAP.exp();
        (e * (1.0 + s - EXP_CAP), e, 0.0, true)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

fn gauge_fixed(mut theta: Vec<f64>) -> Vec<f64> {
    let m = theta.iter().sum::<f64>() / theta.len() as f64;
    theta.iter_mut().for_each(|t| *t -= m);
    theta
}

/// `H(x, θ)` with its gradient and (optionally) Hessian in `θ`.
#[derive(Debug, Clone, Serialize)]
pub struct HamiltonianEval {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: Option<Vec<Vec<f64>>>,
    /// Some exponent exceeded [`EXP_CAP`].
    pub capped: bool,
}

/// `H(x, θ) = Σ_v λ_v(x)(e^{⟨θ,v⟩} − 1)`.
pub fn hamiltonian(table: &JumpRateTable, x: &SimplexPoint, theta: &[f64], hessian: bool) -> Result<HamiltonianEval> {
    let d = table.d();
    if x.d() != d || theta.len() != d {
        return Err(Error::Precondition("x and θ must have the model dimension".into()));
    }
    let rates = table.rates(x.coords());
    let mut value = 0.0;
    let mut gradient = vec![0.0; d];
    let mut hess = if hessian { Some(vec![vec![0.0; d]; d]) } else { None };
    let mut capped = false;
    for (e, &lam) in table.directions().iter().zip(&rates) {
        if lam == 0.0 {
            continue;
        }
        let v = e.vector();
        let (ex, e1, e2, hit) = capped_exp(dot(theta, v));
        capped |= hit;
        value += lam * (ex - 1.0);
        for i in 0..d {
            gradient[i] += lam * e1 * v[i];
        }
        if let Some(h) = hess.as_mut() {
            for i in 0..d {
                for j in 0..d {
                    h[i][j] += lam * e2 * v[i] * v[j];
                }
            }
        }
    }
    Ok(HamiltonianEval {
        value,
        gradient,
        hessian: hess,
        capped,
    })
}

/// How a local rate value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateMethod {
    Dual,
    Primal,
    /// The dual iteration diverged on a feasible velocity (optimum on the
    /// boundary of the flow cone); the primal solver produced the value.
    PrimalFallback,
    /// `β` is outside the cone of active directions: `L = +∞`.
    Infeasible,
}

#[derive(Debug, Clone, Serialize)]
pub struct LocalRateResult {
    /// `L(x, β)`; `f64::INFINITY` when infeasible.
    pub value: f64,
    /// Dual optimizer, gauge-fixed to sum 0 (empty when infeasible).
    pub theta: Vec<f64>,
    /// Primal flows `q_v`, in direction order.
    pub flows: Vec<f64>,
    /// `λ_v(x)`, in direction order.
    pub rates: Vec<f64>,
    pub iterations: usize,
    /// Sup-norm of the optimality residual at exit.
    pub gradient_norm: f64,
    pub method: RateMethod,
    /// Normalized unbounded ascent direction of the dual when infeasible.
    pub ascent: Option<Vec<f64>>,
    pub capped: bool,
}

impl LocalRateResult {
    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }

    /// `r ℓ(q_v/r) + r(e − 1) ≥ q_v` with `r = λ_v(x)`, for every direction
    /// with positive rate.
    pub fn flow_entropy_bound_holds(&self) -> bool {
        self.rates.iter().zip(&self.flows).all(|(&r, &q)| {
            if r <= 0.0 {
                return true;
            }
            let lhs = r * poisson_ell(q / r) + r * (std::f64::consts::E - 1.0);
            lhs >= q - 1e-12 * q.max(1.0)
        })
    }

    /// `‖Σ_v v q_v − β‖_∞`.
    pub fn flow_residual(&self, table: &JumpRateTable, beta: &[f64]) -> f64 {
        let mut r = beta.to_vec();
        for (e, &q) in table.directions().iter().zip(&self.flows) {
            for (ri, vi) in r.iter_mut().zip(e.vector()) {
                *ri -= q * vi;
            }
        }
        r.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn check_inputs(table: &JumpRateTable, x: &[f64], beta: &[f64]) -> Result<()> {
    let d = table.d();
    if x.len() != d || beta.len() != d {
        return Err(Error::Precondition("x and β must have the model dimension".into()));
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::NonFinite("velocity has a non-finite component".into()));
    }
    let s: f64 = beta.iter().sum();
    if s.abs() > 1e-10 * (1.0 + beta.iter().map(|b| b.abs()).sum::<f64>()) {
        return Err(Error::Precondition(format!("velocity components must sum to 0 (sum {s:e})")));
    }
    Ok(())
}

/// `L(x, β)` by damped Newton on the dual over the sum-zero hyperplane.
///
/// If the iterates run off to infinity, cone membership of `β` decides:
/// outside the cone of active directions the value is `+∞` (with the
/// separating ascent direction), inside it the primal solver takes over.
pub fn local_rate(table: &JumpRateTable, x: &SimplexPoint, beta: &[f64]) -> Result<LocalRateResult> {
    check_inputs(table, x.coords(), beta)?;
    solve_dual(table, table.rates(x.coords()), beta, None)
}

/// `L(x, β)` by direct minimization of `Σ λ_v ℓ(q_v/λ_v)` subject to
/// `Σ v q_v = β`, `q ≥ 0` (infeasible-start Newton in flow space).
pub fn local_rate_primal(table: &JumpRateTable, x: &SimplexPoint, beta: &[f64]) -> Result<LocalRateResult> {
    check_inputs(table, x.coords(), beta)?;
    let rates = table.rates(x.coords());
    if let Some(r) = infeasibility(table, &rates, beta) {
        return Ok(r);
    }
    solve_primal(table, rates, beta, RateMethod::Primal)
}

/// Dual solve at raw coordinates, optionally warm-started.
pub(crate) fn local_rate_at(
    table: &JumpRateTable,
    x: &[f64],
    beta: &[f64],
    warm: Option<&[f64]>,
) -> Result<LocalRateResult> {
    solve_dual(table, table.rates(x), beta, warm)
}

struct DualEval {
    f: f64,
    g: Vec<f64>,
    m: Option<DMatrix<f64>>,
    capped: bool,
}

fn dual_eval(vs: &[&[f64]], lam: &[f64], beta: &[f64], y: &[f64], hess: bool) -> DualEval {
    let r = y.len();
    let mut f = dot(y, &beta[..r]);
    let mut g = beta[..r].to_vec();
    let mut m = if hess { Some(DMatrix::zeros(r, r)) } else { None };
    let mut capped = false;
    for (v, &l) in vs.iter().zip(lam) {
        let (ex, e1, e2, hit) = capped_exp(dot(y, &v[..r]));
        capped |= hit;
        f -= l * (ex - 1.0);
        for i in 0..r {
            g[i] -= l * e1 * v[i];
        }
        if let Some(m) = m.as_mut() {
            for i in 0..r {
                for j in 0..r {
                    m[(i, j)] += l * e2 * v[i] * v[j];
                }
            }
        }
    }
    DualEval { f, g, m, capped }
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn solve_dual(table: &JumpRateTable, rates: Vec<f64>, beta: &[f64], warm: Option<&[f64]>) -> Result<LocalRateResult> {
    let d = table.d();
    let dirs = table.directions();
    let active: Vec<usize> = (0..rates.len()).filter(|&i| rates[i] > 0.0).collect();
    let vs: Vec<&[f64]> = active.iter().map(|&i| dirs[i].vector()).collect();
    let lam: Vec<f64> = active.iter().map(|&i| rates[i]).collect();
    let r = d - 1;
    let scale = 1.0 + sup_norm(beta) + lam.iter().sum::<f64>();
    let tol = 1e-12 * scale;

    let mut y: Vec<f64> = match warm {
        Some(t) if t.len() == d && t.iter().all(|v| v.is_finite()) => (0..r).map(|i| t[i] - t[r]).collect(),
        _ => vec![0.0; r],
    };
    let mut iterations = 0;
    let mut capped = false;
    let mut converged = false;
    let mut ev = dual_eval(&vs, &lam, beta, &y, true);
    // a warm start far from home can be worse than the origin
    if warm.is_some() && !(ev.f >= 0.0) {
        y = vec![0.0; r];
        ev = dual_eval(&vs, &lam, beta, &y, true);
    }
    loop {
        capped |= ev.capped;
        let gn = sup_norm(&ev.g);
        if gn <= tol {
            converged = true;
            break;
        }
        if iterations >= MAX_NEWTON || capped || y.iter().map(|v| v * v).sum::<f64>().sqrt() > DIVERGENCE_NORM {
            break;
        }
        let m = ev.m.take().unwrap();
        let g = DVector::from_column_slice(&ev.g);
        let mut mu = 1e-13 * (1.0 + m.trace() / r.max(1) as f64);
        let delta = loop {
            let mut a = m.clone();
            for i in 0..r {
                a[(i, i)] += mu;
            }
            if let Some(ch) = a.cholesky() {
                break ch.solve(&g);
            }
            mu *= 100.0;
        };
        let slope = g.dot(&delta);
        let slack = 1e-14 * (1.0 + ev.f.abs());
        let mut t = 1.0;
        let mut next = None;
        for _ in 0..60 {
            let trial: Vec<f64> = (0..r).map(|i| y[i] + t * delta[i]).collect();
            let e = dual_eval(&vs, &lam, beta, &trial, false);
            if e.f.is_finite() && e.f >= ev.f + 1e-4 * t * slope - slack {
                next = Some(trial);
                break;
            }
            t *= 0.5;
        }
        iterations += 1;
        match next {
            Some(trial) => {
                y = trial;
                ev = dual_eval(&vs, &lam, beta, &y, true);
            }
            None => {
                converged = gn <= 1e-8 * scale;
                break;
            }
        }
    }

    if !converged {
        if let Some(res) = infeasibility(table, &rates, beta) {
            return Ok(LocalRateResult { iterations, ..res });
        }
        return solve_primal(table, rates, beta, RateMethod::PrimalFallback);
    }
    let mut theta = y.clone();
    theta.push(0.0);
    let theta = gauge_fixed(theta);
    let mut flows = vec![0.0; rates.len()];
    for &i in &active {
        flows[i] = rates[i] * capped_exp(dot(&theta, dirs[i].vector())).0;
    }
    Ok(LocalRateResult {
        value: ev.f.max(0.0),
        theta,
        flows,
        rates,
        iterations,
        gradient_norm: sup_norm(&ev.g),
        method: RateMethod::Dual,
        ascent: None,
        capped,
    })
}

/// `Some(+∞ result)` when `β` is not a nonnegative combination of the
/// directions with positive rate.
fn infeasibility(table: &JumpRateTable, rates: &[f64], beta: &[f64]) -> Option<LocalRateResult> {
    let d = table.d();
    let active: Vec<usize> = (0..rates.len()).filter(|&i| rates[i] > 0.0).collect();
    let mut a = DMatrix::zeros(d, active.len());
    for (c, &i) in active.iter().enumerate() {
        for (r, v) in table.directions()[i].vector().iter().enumerate() {
            a[(r, c)] = *v;
        }
    }
    let b = DVector::from_column_slice(beta);
    let q = nnls(&a, &b);
    let res = &b - &a * q;
    let rn = res.norm();
    if rn <= 1e-9 * (1.0 + b.norm()) {
        return None;
    }
    Some(LocalRateResult {
        value: f64::INFINITY,
        theta: Vec::new(),
        flows: vec![0.0; rates.len()],
        rates: rates.to_vec(),
        iterations: 0,
        gradient_norm: rn,
        method: RateMethod::Infeasible,
        ascent: Some(gauge_fixed(res.iter().map(|v| v / rn).collect())),
        capped: false,
    })
}

struct PrimalPiece {
    q: Vec<f64>,
    w: Vec<f64>,
    iterations: usize,
    converged: bool,
    residual: f64,
    dual_residual: f64,
}

/// Infeasible-start Newton on `min Σ λ ℓ(q/λ)` s.t. `A q = b` for the
/// directions `vs` (first `r` coordinates).
fn primal_newton(vs: &[&[f64]], lam: &[f64], b: &[f64], scale: f64) -> PrimalPiece {
    let r = b.len();
    let m = vs.len();
    let bv = DVector::from_column_slice(b);
    if m == 0 {
        let res = sup_norm(b);
        return PrimalPiece {
            q: Vec::new(),
            w: vec![0.0; r],
            iterations: 0,
            converged: res <= 1e-13 * scale,
            residual: res,
            dual_residual: 0.0,
        };
    }
    let a = DMatrix::from_fn(r, m, |i, j| vs[j][i]);
    let residuals = |q: &DVector<f64>, w: &DVector<f64>| -> (DVector<f64>, DVector<f64>) {
        let at_w = a.transpose() * w;
        let rd = DVector::from_fn(m, |i, _| (q[i] / lam[i]).ln() + at_w[i]);
        let rp = &a * q - &bv;
        (rd, rp)
    };
    let norm2 = |rd: &DVector<f64>, rp: &DVector<f64>| (rd.norm_squared() + rp.norm_squared()).sqrt();
    let mut q = DVector::from_column_slice(lam);
    let mut w = DVector::zeros(r);
    let (mut rd, mut rp) = residuals(&q, &w);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_PRIMAL {
        if rp.amax() <= 1e-13 * scale && rd.amax() <= 1e-11 {
            converged = true;
            break;
        }
        let qa = DMatrix::from_fn(r, m, |i, j| a[(i, j)] * q[j]);
        let s = &qa * a.transpose();
        let rhs = &rp - &qa * &rd;
        let dw = match s.svd(true, true).solve(&rhs, 1e-14 * (1.0 + rhs.amax())) {
            Ok(v) => v,
            Err(_) => break,
        };
        let corr = &rd + a.transpose() * &dw;
        let dq = DVector::from_fn(m, |i, _| -q[i] * corr[i]);
        let mut t: f64 = 1.0;
        for i in 0..m {
            if dq[i] < 0.0 {
                t = t.min(-0.99 * q[i] / dq[i]);
            }
        }
        let current = norm2(&rd, &rp);
        let mut accepted = false;
        while t > 1e-14 {
            let qn = &q + t * &dq;
            let wn = &w + t * &dw;
            if qn.iter().all(|&v| v > 0.0) {
                let (rdn, rpn) = residuals(&qn, &wn);
                if norm2(&rdn, &rpn) <= (1.0 - 0.01 * t) * current {
                    q = qn;
                    w = wn;
                    rd = rdn;
                    rp = rpn;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        iterations += 1;
        if !accepted {
            break;
        }
    }
    PrimalPiece {
        q: q.iter().copied().collect(),
        w: w.iter().copied().collect(),
        iterations,
        converged,
        residual: rp.amax(),
        dual_residual: rd.amax(),
    }
}

/// Primal solve. When the optimum sits on a face of the flow cone (some
/// `q_v = 0`), Newton cannot converge in the interior; flows collapsing
/// towards 0 are then dropped as long as `β` stays in the cone of the rest,
/// and the reduced problem is solved again.
fn solve_primal(table: &JumpRateTable, rates: Vec<f64>, beta: &[f64], method: RateMethod) -> Result<LocalRateResult> {
    let d = table.d();
    let r = d - 1;
    let dirs = table.directions();
    let scale = 1.0 + sup_norm(beta) + rates.iter().sum::<f64>();
    let mut active: Vec<usize> = (0..rates.len()).filter(|&i| rates[i] > 0.0).collect();
    let mut dropped: Vec<usize> = Vec::new();
    let mut iterations = 0;
    let piece = loop {
        let vs: Vec<&[f64]> = active.iter().map(|&i| dirs[i].vector()).collect();
        let lam: Vec<f64> = active.iter().map(|&i| rates[i]).collect();
        let piece = primal_newton(&vs, &lam, &beta[..r], scale);
        iterations += piece.iterations;
        if piece.converged {
            break piece;
        }
        let small: Vec<usize> = (0..active.len()).filter(|&c| piece.q[c] < 1e-6 * scale).collect();
        if small.is_empty() {
            break piece;
        }
        let keep: Vec<usize> = (0..active.len()).filter(|c| !small.contains(c)).map(|c| active[c]).collect();
        let mut masked = vec![0.0; rates.len()];
        for &i in &keep {
            masked[i] = rates[i];
        }
        if infeasibility(table, &masked, beta).is_some() {
            break piece;
        }
        dropped.extend(small.iter().map(|&c| active[c]));
        active = keep;
    };
    if piece.residual > 1e-10 * scale {
        return Err(Error::NonConvergence(format!(
            "primal flow solve left constraint residual {:e}",
            piece.residual
        )));
    }
    let mut flows = vec![0.0; rates.len()];
    let mut value: f64 = dropped.iter().map(|&i| rates[i]).sum();
    for (c, &i) in active.iter().enumerate() {
        flows[i] = piece.q[c];
        value += rates[i] * poisson_ell(piece.q[c] / rates[i]);
    }
    let mut theta: Vec<f64> = piece.w.iter().map(|v| -v).collect();
    theta.push(0.0);
    Ok(LocalRateResult {
        value: value.max(0.0),
        theta: gauge_fixed(theta),
        flows,
        rates,
        iterations,
        gradient_norm: piece.residual.max(piece.dual_residual),
        method,
        ascent: None,
        capped: false,
    })
}
