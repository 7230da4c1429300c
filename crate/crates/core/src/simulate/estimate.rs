//! Monte-Carlo and exact decay-rate estimates.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use super::transient::{transient_with, uniformized_kernel};
use super::{controlled_run, gillespie_run, ControlSignal, SimStream, TrajectorySample};
use crate::error::{Error, Result};
use crate::model::{LatticePoint, SimplexPoint};
use crate::rates::JumpRateTable;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateRow {
    pub n: u32,
    pub p_hat: f64,
    pub stderr: f64,
    /// `−(1/n) log p̂`; for a censored row, `log(reps)/n`.
    pub decay: f64,
    pub reps: usize,
    pub hits: usize,
    /// `"vanilla"`, `"importance"` or `"exact"`.
    pub method: String,
    /// No hits were observed, so `decay` is only a lower bound.
    pub censored: bool,
}

/// Least-squares fit `decay ≈ rate + a/n + b log(n)/n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Extrapolation {
    pub rate: f64,
    pub coef_inv_n: f64,
    pub coef_log_n: f64,
    pub points: usize,
    /// Root-mean-square residual of the fit.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RareEventEstimate {
    pub rows: Vec<EstimateRow>,
    pub extrapolation: Option<Extrapolation>,
}

impl RareEventEstimate {
    fn new(rows: Vec<EstimateRow>) -> Self {
        let usable: Vec<&EstimateRow> = rows.iter().filter(|r| !r.censored && r.decay.is_finite()).collect();
        let ns: Vec<u32> = usable.iter().map(|r| r.n).collect();
        let decays: Vec<f64> = usable.iter().map(|r| r.decay).collect();
        let extrapolation = extrapolate_decay(&ns, &decays);
        RareEventEstimate { rows, extrapolation }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McOptions {
    pub seed: u64,
    pub reps: usize,
    pub horizon: f64,
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions {
            seed: 42,
            reps: 10_000,
            horizon: 1.0,
        }
    }
}

/// Fit `decay_i ≈ rate + a/n_i + b log(n_i)/n_i`; `None` with fewer than
/// three distinct `n`.
pub fn extrapolate_decay(ns: &[u32], decays: &[f64]) -> Option<Extrapolation> {
    let mut distinct: Vec<u32> = ns.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if ns.len() != decays.len() || distinct.len() < 3 || distinct.contains(&0) {
        return None;
    }
    let m = ns.len();
    let a = DMatrix::from_fn(m, 3, |i, j| {
        let n = ns[i] as f64;
        match j {
            0 => 1.0,
            1 => 1.0 / n,
            _ => n.ln() / n,
        }
    });
    let b = DVector::from_column_slice(decays);
    let coef = a.clone().svd(true, true).solve(&b, 1e-14).ok()?;
    let res = &a * &coef - &b;
    Some(Extrapolation {
        rate: coef[0],
        coef_inv_n: coef[1],
        coef_log_n: coef[2],
        points: m,
        residual: (res.norm_squared() / m as f64).sqrt(),
    })
}

/// Estimate `P(event)` for each `n` from `reps` independent replicates
/// started at the lattice point nearest `x0`. With a control, replicates
/// are importance-weighted by the likelihood ratio.
pub fn mc_rate_estimate(
    table: &JumpRateTable,
    x0: &SimplexPoint,
    event: &(dyn Fn(&TrajectorySample) -> bool + Sync),
    ns: &[u32],
    opts: &McOptions,
    control: Option<&ControlSignal>,
) -> Result<RareEventEstimate> {
    if opts.reps < 100 {
        return Err(Error::Precondition("at least 100 replicates are needed".into()));
    }
    if ns.contains(&0) {
        return Err(Error::Precondition("population sizes must be positive".into()));
    }
    let mut rows = Vec::with_capacity(ns.len());
    for (i, &n) in ns.iter().enumerate() {
        let start = LatticePoint::nearest(x0, n);
        let weights: Vec<f64> = (0..opts.reps)
            .into_par_iter()
            .map(|r| {
                let mut stream = SimStream::new(opts.seed, ((i as u64) << 40) | r as u64);
                match control {
                    None => gillespie_run(table, &start, opts.horizon, &mut stream)
                        .map(|s| if event(&s) { 1.0 } else { 0.0 }),
                    Some(c) => controlled_run(table, &start, opts.horizon, c, &mut stream)
                        .map(|s| if event(&s.sample) { s.log_lr.exp() } else { 0.0 }),
                }
            })
            .collect::<Result<_>>()?;
        let reps = opts.reps as f64;
        let hits = weights.iter().filter(|&&w| w > 0.0).count();
        let p_hat = weights.iter().sum::<f64>() / reps;
        let var = (weights.iter().map(|w| (w - p_hat).powi(2)).sum::<f64>() / (reps - 1.0)).max(0.0);
        let censored = hits == 0;
        let decay = if censored { reps.ln() / n as f64 } else { -p_hat.ln() / n as f64 };
        rows.push(EstimateRow {
            n,
            p_hat,
            stderr: (var / reps).sqrt(),
            decay: if decay == 0.0 { 0.0 } else { decay },
            reps: opts.reps,
            hits,
            method: if control.is_some() { "importance" } else { "vanilla" }.into(),
            censored,
        });
    }
    Ok(RareEventEstimate::new(rows))
}

/// Exact `−(1/n) log P(μⁿ(t) = x_n)` with `x_n` the lattice point nearest
/// `target`, by uniformization.
pub fn point_event_decays(
    table: &JumpRateTable,
    x0: &SimplexPoint,
    target: &SimplexPoint,
    t: f64,
    ns: &[u32],
) -> Result<RareEventEstimate> {
    let rows = ns
        .par_iter()
        .map(|&n| {
            let kernel = uniformized_kernel(table, n)?;
            let law = transient_with(&kernel, &LatticePoint::nearest(x0, n), t)?;
            let xn = LatticePoint::nearest(target, n);
            let p = kernel
                .index_of(xn.counts())
                .map_or(0.0, |i| law.probabilities[i]);
            let decay = -p.ln() / n as f64;
            Ok(EstimateRow {
                n,
                p_hat: p,
                stderr: law.truncation,
                decay: if decay == 0.0 { 0.0 } else { decay },
                reps: 0,
                hits: 0,
                method: "exact".into(),
                censored: false,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RareEventEstimate::new(rows))
}
