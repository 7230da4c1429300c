//! Exact transient laws of `μⁿ` on small lattices by uniformization.

use std::collections::HashMap;

use serde::Serialize;
use statrs::distribution::{DiscreteCDF, Poisson};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::model::LatticePoint;
use crate::rates::JumpRateTable;

/// Largest lattice handled by [`exact_transient`].
pub const STATE_CAP: usize = 200_000;

const TRUNCATION: f64 = 1e-12;

/// `C(n+d−1, d−1)`, saturating.
fn lattice_size(d: usize, n: u32) -> usize {
    let mut c: u128 = 1;
    for i in 1..d as u128 {
        c = c * (n as u128 + i) / i;
        if c > usize::MAX as u128 {
            return usize::MAX;
        }
    }
    c as usize
}

/// All count vectors of `n` particles over `d` states, lexicographically.
pub fn lattice_states(d: usize, n: u32) -> Vec<Vec<u32>> {
    fn fill(prefix: &mut Vec<u32>, left: u32, slots: usize, out: &mut Vec<Vec<u32>>) {
        if slots == 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for c in 0..=left {
            prefix.push(c);
            fill(prefix, left - c, slots - 1, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if d > 0 {
        fill(&mut Vec::with_capacity(d), n, d, &mut out);
    }
    out
}

/// The jump chain `P = I + Q/Λ` of the generator on `𝒮_n`.
#[derive(Debug, Clone)]
pub struct UniformizedKernel {
    pub n: u32,
    pub states: Vec<Vec<u32>>,
    /// Uniformization rate `Λ = max_x n Σ_v λ^n_v(x)`.
    pub rate: f64,
    index: HashMap<Vec<u32>, usize>,
    rows: Vec<Vec<(usize, f64)>>,
    diag: Vec<f64>,
}

impl UniformizedKernel {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn index_of(&self, counts: &[u32]) -> Option<usize> {
        self.index.get(counts).copied()
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.diag[i] + self.rows[i].iter().map(|&(_, p)| p).sum::<f64>()
    }

    /// One step `p ↦ pP`.
    fn step(&self, p: &[f64], out: &mut [f64]) {
        for (o, (&pi, &di)) in out.iter_mut().zip(p.iter().zip(&self.diag)) {
            *o = pi * di;
        }
        for (i, row) in self.rows.iter().enumerate() {
            let pi = p[i];
            if pi == 0.0 {
                continue;
            }
            for &(j, q) in row {
                out[j] += pi * q;
            }
        }
    }
}

pub fn uniformized_kernel(table: &JumpRateTable, n: u32) -> Result<UniformizedKernel> {
    let d = table.d();
    let size = lattice_size(d, n);
    if size > STATE_CAP {
        return Err(Error::StateSpaceCap { states: size, cap: STATE_CAP });
    }
    let states = lattice_states(d, n);
    let index: HashMap<Vec<u32>, usize> = states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
    let nf = n as f64;
    let mut xs = Vec::new();
    let mut rates = Vec::new();
    let mut raw: Vec<Vec<(usize, f64)>> = Vec::with_capacity(states.len());
    let mut totals = Vec::with_capacity(states.len());
    for s in &states {
        table.rates_n_counts(s, n, &mut xs, &mut rates);
        let mut row = Vec::new();
        let mut total = 0.0;
        for (e, &r) in table.directions().iter().zip(&rates) {
            if r < 0.0 || !r.is_finite() {
                return Err(Error::Model(format!("invalid jump rate {r} at {s:?}")));
            }
            if r == 0.0 {
                continue;
            }
            let next: Vec<u32> = s
                .iter()
                .zip(e.v.delta())
                .map(|(&c, &dv)| (c as i64 + dv as i64).try_into().unwrap_or(u32::MAX))
                .collect();
            let j = index
                .get(&next)
                .copied()
                .ok_or_else(|| Error::Model("a positive-rate jump leaves the lattice".into()))?;
            row.push((j, nf * r));
            total += nf * r;
        }
        raw.push(row);
        totals.push(total);
    }
    let rate = totals.iter().copied().fold(0.0, f64::max);
    let scale = if rate > 0.0 { 1.0 / rate } else { 0.0 };
    let rows: Vec<Vec<(usize, f64)>> = raw
        .into_iter()
        .map(|row| row.into_iter().map(|(j, q)| (j, q * scale)).collect())
        .collect();
    let diag = rows
        .iter()
        .map(|row| 1.0 - row.iter().map(|&(_, p)| p).sum::<f64>())
        .collect();
    Ok(UniformizedKernel { n, states, rate, index, rows, diag })
}

/// Law of `μⁿ(t)` started from a point mass.
#[derive(Debug, Clone, Serialize)]
pub struct Transient {
    pub n: u32,
    pub t: f64,
    pub states: Vec<Vec<u32>>,
    pub probabilities: Vec<f64>,
    /// Poisson mass beyond the last power used; bounds the total-variation
    /// error.
    pub truncation: f64,
    pub terms: usize,
}

impl Transient {
    pub fn prob(&self, counts: &[u32]) -> f64 {
        self.states
            .iter()
            .position(|s| s.as_slice() == counts)
            .map_or(0.0, |i| self.probabilities[i])
    }
}

/// `P(μⁿ(t) = ·)` from `x0` by uniformization.
pub fn exact_transient(table: &JumpRateTable, x0: &LatticePoint, t: f64) -> Result<Transient> {
    if x0.d() != table.d() {
        return Err(Error::Precondition("initial state has the wrong dimension".into()));
    }
    let kernel = uniformized_kernel(table, x0.n())?;
    transient_with(&kernel, x0, t)
}

/// As [`exact_transient`], reusing a kernel.
pub fn transient_with(kernel: &UniformizedKernel, x0: &LatticePoint, t: f64) -> Result<Transient> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Precondition("time must be nonnegative".into()));
    }
    let start = kernel
        .index_of(x0.counts())
        .filter(|_| x0.n() == kernel.n)
        .ok_or_else(|| Error::Precondition("initial state is not in the kernel's lattice".into()))?;
    let mut p = vec![0.0; kernel.len()];
    p[start] = 1.0;
    let m = kernel.rate * t;
    if m == 0.0 {
        return Ok(Transient {
            n: kernel.n,
            t,
            states: kernel.states.clone(),
            probabilities: p,
            truncation: 0.0,
            terms: 1,
        });
    }
    let poisson = Poisson::new(m).map_err(|e| Error::Precondition(e.to_string()))?;
    let mut k_max = (m + 10.0 * m.sqrt() + 20.0).ceil() as u64;
    while poisson.sf(k_max) > TRUNCATION {
        k_max += (m.sqrt() as u64).max(10);
    }
    let truncation = poisson.sf(k_max);
    let mut acc = vec![0.0; kernel.len()];
    let mut next = vec![0.0; kernel.len()];
    let lm = m.ln();
    for k in 0..=k_max {
        let w = (-m + k as f64 * lm - ln_gamma(k as f64 + 1.0)).exp();
        for (a, &pi) in acc.iter_mut().zip(&p) {
            *a += w * pi;
        }
        if k < k_max {
            kernel.step(&p, &mut next);
            std::mem::swap(&mut p, &mut next);
        }
    }
    Ok(Transient {
        n: kernel.n,
        t,
        states: kernel.states.clone(),
        probabilities: acc,
        truncation,
        terms: k_max as usize + 1,
    })
}
