//! The McKean–Vlasov limit `μ̇ = Σ_v v λ_v(μ)`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Finding, PiecewiseLinearPath, SimplexPoint};
use crate::rates::{drift_of, JumpRateTable};
use crate::structure::{check_simjumps, check_ue, is_k_ergodic};

/// Default integration step.
pub const DEFAULT_DT: f64 = 1e-3;

/// Integrated LLN trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct LlnTrajectory {
    pub times: Vec<f64>,
    pub points: Vec<SimplexPoint>,
    /// Number of coordinates clamped to zero by the per-step projection.
    pub clamps: usize,
}

impl LlnTrajectory {
    pub fn end(&self) -> &SimplexPoint {
        self.points.last().unwrap()
    }

    pub fn to_path(&self) -> Result<PiecewiseLinearPath> {
        PiecewiseLinearPath::new(self.times.clone(), self.points.clone())
    }
}

/// `Σ_v v λ_v(x)`.
pub fn drift(table: &JumpRateTable, x: &SimplexPoint) -> Vec<f64> {
    drift_of(table, x.coords())
}

fn rk4_step(table: &JumpRateTable, x: &[f64], h: f64) -> Vec<f64> {
    let add = |a: &[f64], b: &[f64], s: f64| -> Vec<f64> { a.iter().zip(b).map(|(p, q)| p + s * q).collect() };
    let k1 = drift_of(table, x);
    let k2 = drift_of(table, &add(x, &k1, h / 2.0));
    let k3 = drift_of(table, &add(x, &k2, h / 2.0));
    let k4 = drift_of(table, &add(x, &k3, h));
    (0..x.len())
        .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// Classical RK4 on `[0, t]` with step `dt`, projecting back onto the simplex
/// after every step. Knots at every multiple of `dt` and at `t`.
pub fn integrate_lln(table: &JumpRateTable, x0: &SimplexPoint, t: f64, dt: f64) -> Result<LlnTrajectory> {
    if !(t > 0.0) || !(dt > 0.0) || !t.is_finite() {
        return Err(Error::Precondition("need t > 0 and dt > 0".into()));
    }
    if x0.d() != table.d() {
        return Err(Error::Precondition("initial point has the wrong dimension".into()));
    }
    let full = (t / dt * (1.0 + 1e-12)).floor() as usize;
    let mut times = Vec::with_capacity(full + 2);
    let mut points = Vec::with_capacity(full + 2);
    times.push(0.0);
    points.push(x0.clone());
    let mut x = x0.coords().to_vec();
    let mut clamps = 0;
    let mut now = 0.0;
    let mut step = 0usize;
    loop {
        let next = if step < full { (step + 1) as f64 * dt } else { t };
        let next = next.min(t);
        let h = next - now;
        if h <= dt * 1e-9 {
            break;
        }
        let y = rk4_step(table, &x, h);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("drift is not finite near t = {now}")));
        }
        let (p, c) = SimplexPoint::renormalized(y)
            .map_err(|e| Error::NonFinite(format!("integration left the simplex at t = {next}: {e}")))?;
        clamps += c;
        x = p.coords().to_vec();
        times.push(next);
        points.push(p);
        now = next;
        step += 1;
        if (now - t).abs() <= dt * 1e-9 {
            break;
        }
    }
    Ok(LlnTrajectory { times, points, clamps })
}

/// Fitted lower envelope `μ_i(t) ≥ b t^D` for one start.
#[derive(Debug, Clone, Serialize)]
pub struct InteriorityFit {
    pub start: Vec<f64>,
    pub b: f64,
    pub exponent: u32,
    /// All coordinates strictly positive at `t = 0.01, 0.1, 1`.
    pub positive: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct InteriorityReport {
    pub fits: Vec<InteriorityFit>,
    pub findings: Vec<Finding>,
}

/// Integrate from each start (and every vertex) to `t = 1` and check that
/// the LLN path enters the interior immediately, fitting `(b, D)` with
/// `D ≤ K^d` from the local exponent near `t = 0`.
pub fn interiority_check(table: &JumpRateTable, samples: &[SimplexPoint]) -> Result<InteriorityReport> {
    let spec = table.spec();
    if !is_k_ergodic(spec).ergodic || !check_ue(spec).ok || !check_simjumps(spec).ok {
        return Err(Error::Precondition(
            "interiority needs K-ergodicity, uniform positivity and the simultaneous-jump condition".into(),
        ));
    }
    let d = table.d();
    let cap = (spec.k_max().max(1) as u32).saturating_pow(d as u32);
    let mut starts: Vec<SimplexPoint> = (0..d).map(|i| SimplexPoint::vertex(d, i)).collect();
    starts.extend(samples.iter().cloned());
    let fits: Vec<Result<InteriorityFit>> = starts
        .par_iter()
        .map(|x| {
            let traj = integrate_lln(table, x, 1.0, DEFAULT_DT)?;
            let at = |t: f64| traj.points[(t / DEFAULT_DT).round() as usize].coords().to_vec();
            let positive = [0.01, 0.1, 1.0].iter().all(|&t| at(t).iter().all(|&v| v > 0.0));
            let (p1, p2) = (at(0.001), at(0.01));
            let mut exponent = 0u32;
            for i in 0..d {
                if x[i] > 0.0 {
                    continue;
                }
                let slope = if p1[i] > 0.0 && p2[i] > 0.0 { (p2[i] / p1[i]).log10() } else { f64::INFINITY };
                let e = if slope.is_finite() { slope.round().max(0.0) as u32 } else { cap };
                exponent = exponent.max(e.min(cap));
            }
            let b = traj.times[1..]
                .iter()
                .zip(&traj.points[1..])
                .map(|(&t, p)| p.min_coord() / t.powi(exponent as i32))
                .fold(f64::INFINITY, f64::min);
            Ok(InteriorityFit {
                start: x.coords().to_vec(),
                b,
                exponent,
                positive,
            })
        })
        .collect();
    let fits = fits.into_iter().collect::<Result<Vec<_>>>()?;
    let findings = fits
        .iter()
        .filter(|f| !f.positive || !(f.b > 0.0))
        .map(|f| Finding::new("not-interior", "LLN path does not enter the interior").at_point(&f.start))
        .collect();
    Ok(InteriorityReport { fits, findings })
}
