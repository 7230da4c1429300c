//! Controlled simulation with likelihood-ratio weights.

use serde::Serialize;

use super::{check_start, SimStream, TrajectorySample};
use crate::error::{Error, Result};
use crate::ldp::{poisson_ell, segment_flows, ActionReport};
use crate::model::LatticePoint;
use crate::rates::JumpRateTable;

/// Controlled jump intensities `ᾱ_v` (per unit `n`).
pub trait Intensity: Sync {
    /// Intensities at time `t` in the state with occupation `counts`.
    fn intensities(&self, t: f64, counts: &[u32], n: u32, out: &mut Vec<f64>) -> Result<()>;

    /// First time after `t` at which the intensities change without a jump.
    fn next_change(&self, t: f64) -> f64;
}

/// Piecewise-constant, state-independent intensities on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlSignal {
    /// Piece boundaries (one more than pieces).
    pub times: Vec<f64>,
    /// `values[m][v]` on `[times[m], times[m+1])`, in direction order.
    pub values: Vec<Vec<f64>>,
    /// Declared bound on all values.
    pub bound: f64,
}

impl ControlSignal {
    pub fn new(times: Vec<f64>, values: Vec<Vec<f64>>, bound: f64) -> Result<Self> {
        if times.len() < 2 || values.len() + 1 != times.len() {
            return Err(Error::Precondition("a control needs one value vector per piece".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Precondition("control times must increase".into()));
        }
        if values.iter().flatten().any(|&a| !(a >= 0.0 && a <= bound)) {
            return Err(Error::Precondition(format!("control values must lie in [0, {bound}]")));
        }
        Ok(ControlSignal { times, values, bound })
    }

    pub fn pieces(&self) -> usize {
        self.values.len()
    }

    /// Piece in force at `t` (right-continuous), if `t` is covered.
    pub fn piece_at(&self, t: f64) -> Option<usize> {
        if t < self.times[0] || t > *self.times.last().unwrap() {
            return None;
        }
        Some(self.times.partition_point(|&s| s <= t).saturating_sub(1).min(self.pieces() - 1))
    }
}

impl Intensity for ControlSignal {
    fn intensities(&self, t: f64, _counts: &[u32], _n: u32, out: &mut Vec<f64>) -> Result<()> {
        let m = self
            .piece_at(t)
            .ok_or_else(|| Error::Precondition(format!("control is undefined at t = {t}")))?;
        out.clear();
        out.extend_from_slice(&self.values[m]);
        Ok(())
    }

    fn next_change(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        self.times.get(k).copied().unwrap_or(f64::INFINITY)
    }
}

/// Feedback control equal to the nominal rates `λ^n_v(x)`; the controlled
/// law is then the nominal one.
pub struct NominalFeedback<'a> {
    pub table: &'a JumpRateTable,
}

impl Intensity for NominalFeedback<'_> {
    fn intensities(&self, _t: f64, counts: &[u32], n: u32, out: &mut Vec<f64>) -> Result<()> {
        let mut xs = Vec::new();
        self.table.rates_n_counts(counts, n, &mut xs, out);
        Ok(())
    }

    fn next_change(&self, _t: f64) -> f64 {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ControlledSample {
    pub sample: TrajectorySample,
    /// `log dP/dQ` of the nominal law with respect to the controlled one.
    pub log_lr: f64,
    /// Proposed jumps that would have left the lattice.
    pub suppressed: usize,
    /// `Σ_v ∫ λ^n_v ℓ(ᾱ_v / λ^n_v) dt` along the run.
    pub cost: f64,
}

/// [`controlled_run_with`] for a piecewise-constant control, which must
/// cover `[0, t]`.
pub fn controlled_run(
    table: &JumpRateTable,
    x0: &LatticePoint,
    t: f64,
    control: &ControlSignal,
    stream: &mut SimStream,
) -> Result<ControlledSample> {
    if control.times[0] > 0.0 || *control.times.last().unwrap() < t {
        return Err(Error::Precondition("control does not cover the horizon".into()));
    }
    if control.values.iter().any(|v| v.len() != table.len()) {
        return Err(Error::Precondition("control needs one value per jump direction".into()));
    }
    controlled_run_with(table, x0, t, control, stream)
}

/// Simulate jumps in direction `v` at intensity `n ᾱ_v`, suppressing those
/// that would leave the lattice, and accumulate
/// `Σ_jumps log(λ^n_v/ᾱ_v) − n ∫ Σ_v (λ^n_v − ᾱ_v) dt`, where the integral
/// runs over the directions that can fire.
pub fn controlled_run_with(
    table: &JumpRateTable,
    x0: &LatticePoint,
    t: f64,
    control: &dyn Intensity,
    stream: &mut SimStream,
) -> Result<ControlledSample> {
    check_start(table, x0, t)?;
    let n = x0.n();
    let nf = n as f64;
    let dirs = table.directions();
    let mut out = TrajectorySample::start(x0, t, stream.id);
    let mut x = x0.clone();
    let mut xs = Vec::new();
    let mut lam = Vec::new();
    let mut alpha = Vec::new();
    let mut log_lr = 0.0;
    let mut cost = 0.0;
    let mut suppressed = 0;
    let mut now = 0.0;
    while now < t {
        table.rates_n_counts(x.counts(), n, &mut xs, &mut lam);
        control.intensities(now, x.counts(), n, &mut alpha)?;
        let feasible: Vec<bool> = dirs
            .iter()
            .map(|e| x.counts().iter().zip(e.v.delta()).all(|(&c, &dv)| (c as i64) + (dv as i64) >= 0))
            .collect();
        let total: f64 = alpha.iter().sum();
        let nominal: f64 = lam.iter().sum();
        let active: f64 = alpha.iter().zip(&feasible).filter(|(_, &f)| f).map(|(a, _)| a).sum();
        let running: f64 = (0..lam.len())
            .filter(|&v| feasible[v])
            .map(|v| match (lam[v], alpha[v]) {
                (_, a) if a == 0.0 => lam[v],
                (l, _) if l == 0.0 => f64::INFINITY,
                (l, a) => l * poisson_ell(a / l),
            })
            .sum();
        let stop = control.next_change(now).min(t);
        let wait = if total > 0.0 { stream.exp(nf * total) } else { f64::INFINITY };
        let dt = wait.min(stop - now);
        log_lr -= nf * (nominal - active) * dt;
        cost += running * dt;
        if now + wait >= stop {
            now = stop;
            continue;
        }
        now += wait;
        let target = stream.uniform() * total;
        let mut acc = 0.0;
        let mut pick = alpha.len() - 1;
        for (i, &a) in alpha.iter().enumerate() {
            acc += a;
            if target < acc && a > 0.0 {
                pick = i;
                break;
            }
        }
        while alpha[pick] == 0.0 {
            pick -= 1;
        }
        if !feasible[pick] {
            suppressed += 1;
            continue;
        }
        log_lr += if lam[pick] > 0.0 {
            (lam[pick] / alpha[pick]).ln()
        } else {
            f64::NEG_INFINITY
        };
        x.apply_in_place(&dirs[pick].v);
        out.push(now, x.counts(), pick);
    }
    Ok(ControlledSample {
        sample: out,
        log_lr,
        suppressed,
        cost,
    })
}

/// Piecewise-constant control with `ᾱ_v` on each segment equal to the
/// minimizing flows `q_v` at the segment midpoint (clipped below at 1e-12).
pub fn build_tilt_control(table: &JumpRateTable, optimal: &ActionReport) -> Result<ControlSignal> {
    if !optimal.value.is_finite() {
        return Err(Error::Precondition("the path has infinite action".into()));
    }
    let flows = segment_flows(table, &optimal.path)?;
    let values: Vec<Vec<f64>> = flows
        .iter()
        .map(|r| r.flows.iter().map(|&q| q.max(1e-12)).collect())
        .collect();
    let bound = values.iter().flatten().fold(0.0, |m: f64, &v| m.max(v));
    ControlSignal::new(optimal.path.times().to_vec(), values, bound)
}
