//! Jump rates of the empirical measure.
//!
//! For a transition class `(i, j)` of size `k` with `m` tuple pairs
//! (its multiplicity), the limit contribution to direction `v = e_j − e_i` is
//! `m · (∏_l x_{i_l}) · Γ(x) / k!`. At population `n` the product is replaced
//! by the exact count of ordered particle tuples, a product of falling
//! factorials `(n x_s)(n x_s − 1)⋯`, and Γ is scaled by `n^{1−k}`:
//! `λ^n_v(x) = Σ m · A_k(n, i, x) · n^{−k} · Γ(x) / k!`.
//!
//! The generator of the empirical measure jumps from `x` to `x + v/n` at
//! rate `n · λ^n_v(x)`.

mod estimates;

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{
    factorial, validation_grid, JumpDirection, LatticePoint, ModelSpec, SimplexPoint,
    TupleTransition,
};

pub use estimates::{jump_profile, rate_estimate_report, JumpProfile, RateEstimateReport};

/// Grid values below this are "identically zero".
pub const ZERO_TOL: f64 = 1e-12;
/// Grid minima above this are "uniformly positive".
pub const POSITIVE_TOL: f64 = 1e-9;

/// Grid classification of one rate family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum RateClass {
    Zero,
    Positive { min: f64 },
    Mixed { min: f64, max: f64 },
}

impl RateClass {
    pub fn is_positive(&self) -> bool {
        matches!(self, RateClass::Positive { .. })
    }
}

/// Classify a transition's rate over the validation grid.
pub fn classify_rate(t: &TupleTransition, grid: &[SimplexPoint]) -> RateClass {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for x in grid {
        let g = t.rate.eval(x.coords());
        let g = if g.is_nan() { f64::NEG_INFINITY } else { g };
        min = min.min(g);
        max = max.max(g);
    }
    if max.abs() < ZERO_TOL && min.abs() < ZERO_TOL {
        RateClass::Zero
    } else if min > POSITIVE_TOL && max.is_finite() {
        RateClass::Positive { min }
    } else {
        RateClass::Mixed { min, max }
    }
}

/// One listed transition feeding a direction.
#[derive(Debug, Clone, Serialize)]
pub struct Contribution {
    /// 0-based index into the model's transition list.
    pub transition: usize,
    pub k: usize,
    pub from: Vec<usize>,
    pub to: Vec<usize>,
    /// Number of tuple pairs represented (permutation copies).
    pub multiplicity: usize,
    /// `multiplicity / k!`.
    pub weight: f64,
    pub class: RateClass,
}

/// A jump direction with its contributing transitions.
#[derive(Debug, Clone, Serialize)]
pub struct DirectionEntry {
    pub v: JumpDirection,
    pub contributions: Vec<Contribution>,
    #[serde(skip)]
    vf: Vec<f64>,
}

impl DirectionEntry {
    pub fn vector(&self) -> &[f64] {
        &self.vf
    }
}

/// Negative support `N_v` and the source multiplicities observed on it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NegativeSupport {
    pub states: Vec<usize>,
    /// Per contributing transition, the source multiplicity of each state in `states`.
    pub profiles: Vec<Vec<u32>>,
}

struct Inner {
    spec: ModelSpec,
    directions: Vec<DirectionEntry>,
    max_norm: f64,
}

/// The map `v ↦ λ_v(·)` (and `λ^n_v`) for a model. Cheap to clone.
#[derive(Clone)]
pub struct JumpRateTable {
    inner: Arc<Inner>,
}

impl std::fmt::Debug for JumpRateTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("JumpRateTable")
            .field("d", &self.d())
            .field("directions", &self.inner.directions.len())
            .finish()
    }
}

impl JumpRateTable {
    /// Assemble the table. Transitions whose rate is identically zero on the
    /// validation grid and null directions are dropped.
    pub fn new(spec: &ModelSpec) -> Self {
        let d = spec.d();
        let grid = validation_grid(d);
        let mut directions: Vec<DirectionEntry> = Vec::new();
        for (idx, t) in spec.transitions().iter().enumerate() {
            let class = classify_rate(t, &grid);
            if class == RateClass::Zero {
                continue;
            }
            let v = t.direction(d);
            if v.is_null() {
                continue;
            }
            let multiplicity = spec.multiplicity(idx);
            let c = Contribution {
                transition: idx,
                k: t.k(),
                from: t.from.clone(),
                to: t.to.clone(),
                multiplicity,
                weight: multiplicity as f64 / factorial(t.k()) as f64,
                class,
            };
            match directions.iter_mut().find(|e| e.v == v) {
                Some(e) => e.contributions.push(c),
                None => directions.push(DirectionEntry {
                    vf: v.as_f64(),
                    v,
                    contributions: vec![c],
                }),
            }
        }
        let max_norm = directions.iter().map(|e| e.v.norm()).fold(0.0, f64::max);
        JumpRateTable {
            inner: Arc::new(Inner {
                spec: spec.clone(),
                directions,
                max_norm,
            }),
        }
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.inner.spec
    }

    pub fn d(&self) -> usize {
        self.inner.spec.d()
    }

    pub fn k_max(&self) -> usize {
        self.inner.spec.k_max()
    }

    pub fn directions(&self) -> &[DirectionEntry] {
        &self.inner.directions
    }

    pub fn len(&self) -> usize {
        self.inner.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.directions.is_empty()
    }

    /// `max_v ‖v‖`.
    pub fn max_norm(&self) -> f64 {
        self.inner.max_norm
    }

    pub fn index_of(&self, v: &JumpDirection) -> Option<usize> {
        self.inner.directions.iter().position(|e| &e.v == v)
    }

    fn gamma(&self, c: &Contribution, x: &[f64]) -> f64 {
        self.inner.spec.transitions()[c.transition].rate.eval(x)
    }

    /// Limit rate `λ_v(x)` of direction `idx`.
    pub fn rate(&self, idx: usize, x: &[f64]) -> f64 {
        self.inner.directions[idx]
            .contributions
            .iter()
            .map(|c| {
                let p: f64 = c.from.iter().map(|&i| x[i]).product();
                if p == 0.0 {
                    0.0
                } else {
                    c.weight * p * self.gamma(c, x)
                }
            })
            .sum()
    }

    /// All limit rates at `x`, in direction order.
    pub fn rates(&self, x: &[f64]) -> Vec<f64> {
        (0..self.len()).map(|i| self.rate(i, x)).collect()
    }

    /// Finite-n rate `λ^n_v(x)` of direction `idx` at a lattice point.
    pub fn rate_n(&self, idx: usize, x: &LatticePoint) -> f64 {
        let xs = x.to_coords();
        self.rate_n_with(idx, x.counts(), x.n(), &xs)
    }

    fn rate_n_with(&self, idx: usize, counts: &[u32], n: u32, xs: &[f64]) -> f64 {
        let n = n as f64;
        self.inner.directions[idx]
            .contributions
            .iter()
            .map(|c| {
                let a = tuple_count_unchecked(&c.from, counts);
                if a == 0 {
                    0.0
                } else {
                    c.weight * a as f64 * n.powi(-(c.k as i32)) * self.gamma(c, xs)
                }
            })
            .sum()
    }

    /// All finite-n rates at a lattice point, written into `out`.
    pub fn rates_n_into(&self, x: &LatticePoint, out: &mut Vec<f64>) {
        let xs = x.to_coords();
        out.clear();
        out.extend((0..self.len()).map(|i| self.rate_n_with(i, x.counts(), x.n(), &xs)));
    }

    /// Finite-n rates from raw counts, reusing the buffers `xs` and `out`.
    pub(crate) fn rates_n_counts(&self, counts: &[u32], n: u32, xs: &mut Vec<f64>, out: &mut Vec<f64>) {
        xs.clear();
        xs.extend(counts.iter().map(|&c| c as f64 / n as f64));
        out.clear();
        for i in 0..self.len() {
            let r = self.rate_n_with(i, counts, n, xs);
            out.push(r);
        }
    }

    pub fn rates_n(&self, x: &LatticePoint) -> Vec<f64> {
        let mut out = Vec::new();
        self.rates_n_into(x, &mut out);
        out
    }

    /// Negative support of direction `idx` with per-transition source profiles.
    pub fn negative_support(&self, idx: usize) -> NegativeSupport {
        let e = &self.inner.directions[idx];
        let states = e.v.negative_support();
        let profiles = e
            .contributions
            .iter()
            .map(|c| {
                states
                    .iter()
                    .map(|&s| c.from.iter().filter(|&&i| i == s).count() as u32)
                    .collect()
            })
            .collect();
        NegativeSupport { states, profiles }
    }

    /// Single-transition matrix `Γ^eff(x)`: the rate at which one particle
    /// in state `i` moves to `j`, aggregated over all tuple transitions it
    /// can take part in. Diagonal entries are negative row sums.
    ///
    /// `x · Γ^eff(x)` equals the drift `Σ_v v λ_v(x)`.
    pub fn effective_matrix(&self, x: &[f64]) -> Vec<Vec<f64>> {
        self.pair_matrix(x, usize::MAX)
    }

    /// Matrix of the `k = 1` rates `Γ¹(x)`, diagonal as negative row sums.
    pub fn single_matrix(&self, x: &[f64]) -> Vec<Vec<f64>> {
        self.pair_matrix(x, 1)
    }

    fn pair_matrix(&self, x: &[f64], k_limit: usize) -> Vec<Vec<f64>> {
        let d = self.d();
        let mut m = vec![vec![0.0; d]; d];
        for e in &self.inner.directions {
            for c in e.contributions.iter().filter(|c| c.k <= k_limit) {
                let g = self.gamma(c, x);
                for l in 0..c.k {
                    let others: f64 = (0..c.k)
                        .filter(|&r| r != l)
                        .map(|r| x[c.from[r]])
                        .product();
                    m[c.from[l]][c.to[l]] += c.weight * others * g;
                }
            }
        }
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 0.0;
            let s: f64 = row.iter().sum();
            row[i] = -s;
        }
        m
    }
}

/// Number of ordered tuples of distinct particles whose states spell
/// `tuple`, in a population with occupation `counts`.
pub fn tuple_count(n: u32, tuple: &[usize], x: &LatticePoint) -> Result<u128> {
    if x.n() != n {
        return Err(Error::Population {
            expected: n as usize,
            got: x.n() as usize,
        });
    }
    if let Some(&s) = tuple.iter().find(|&&s| s >= x.d()) {
        return Err(Error::Precondition(format!("state {} out of range", s + 1)));
    }
    Ok(tuple_count_unchecked(tuple, x.counts()))
}

fn tuple_count_unchecked(tuple: &[usize], counts: &[u32]) -> u128 {
    // the l-th occurrence of state s in the tuple has (count_s − (l−1))
    // particles left to choose from
    let mut total: u128 = 1;
    for (p, &s) in tuple.iter().enumerate() {
        let prior = tuple[..p].iter().filter(|&&t| t == s).count() as u32;
        let avail = counts[s].saturating_sub(prior);
        if avail == 0 {
            return 0;
        }
        total *= avail as u128;
    }
    total
}

/// Drift `Σ_v v λ_v(x)`.
pub fn drift_of(table: &JumpRateTable, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; table.d()];
    for (idx, e) in table.directions().iter().enumerate() {
        let r = table.rate(idx, x);
        if r != 0.0 {
            for (o, v) in out.iter_mut().zip(e.vector()) {
                *o += r * v;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests;
