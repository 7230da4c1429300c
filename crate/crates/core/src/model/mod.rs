//! Particle systems on a finite state space and the simplex they live on.
//!
//! States are numbered `1..=d` in every user-facing format (config files,
//! CLI, reports, rate-expression variables `x1..xd`). Inside the library
//! they are 0-based `usize` indices.

mod builtin;
mod config;
pub mod expr;
mod grid;
mod path;

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};

pub use builtin::builtin_model;
pub use config::{model_from_json, model_to_json, SCHEMA_VERSION};
pub use expr::RateExpr;
pub use grid::{ergodicity_grid, face_barycenters, random_simplex_points, validation_grid};
pub use path::PiecewiseLinearPath;

/// Absolute tolerance on the coordinate sum of a [`SimplexPoint`].
pub const SIMPLEX_TOL: f64 = 1e-12;
/// Largest deviation from unit mass that construction silently repairs.
pub const RENORMALIZE_TOL: f64 = 1e-9;

/// The state space `{1, ..., d}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StateSpace {
    d: usize,
}

impl StateSpace {
    pub fn new(d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::Model(format!("need at least 2 states, got {d}")));
        }
        Ok(StateSpace { d })
    }

    pub fn d(&self) -> usize {
        self.d
    }
}

/// A probability vector on `d` states.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimplexPoint(Vec<f64>);

impl SimplexPoint {
    /// Validate and (within [`RENORMALIZE_TOL`]) repair a probability vector.
    ///
    /// Negative entries above `-1e-12` are treated as roundoff and clamped.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Simplex("empty coordinate vector".into()));
        }
        let mut c = coords;
        for (i, v) in c.iter_mut().enumerate() {
            if !v.is_finite() {
                return Err(Error::Simplex(format!("coordinate {} is not finite", i + 1)));
            }
            if *v < 0.0 {
                if *v < -SIMPLEX_TOL {
                    return Err(Error::Simplex(format!(
                        "coordinate {} is negative ({v})",
                        i + 1
                    )));
                }
                *v = 0.0;
            }
        }
        let s: f64 = c.iter().sum();
        if (s - 1.0).abs() > RENORMALIZE_TOL {
            return Err(Error::Simplex(format!("coordinates sum to {s}, not 1")));
        }
        if s != 1.0 {
            for v in c.iter_mut() {
                *v /= s;
            }
        }
        Ok(SimplexPoint(c))
    }

    /// Project an arbitrary finite vector onto the simplex: clamp negatives,
    /// rescale. Used by integrators to remove roundoff drift.
    pub fn renormalized(mut coords: Vec<f64>) -> Result<(Self, usize)> {
        let mut clamped = 0;
        for v in coords.iter_mut() {
            if !v.is_finite() {
                return Err(Error::NonFinite("coordinate in renormalization".into()));
            }
            if *v < 0.0 {
                *v = 0.0;
                clamped += 1;
            }
        }
        let s: f64 = coords.iter().sum();
        if s <= 0.0 {
            return Err(Error::Simplex("vector has no positive mass".into()));
        }
        for v in coords.iter_mut() {
            *v /= s;
        }
        Ok((SimplexPoint(coords), clamped))
    }

    pub fn barycenter(d: usize) -> Self {
        SimplexPoint(vec![1.0 / d as f64; d])
    }

    pub fn vertex(d: usize, i: usize) -> Self {
        let mut c = vec![0.0; d];
        c[i] = 1.0;
        SimplexPoint(c)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.0
    }

    pub fn d(&self) -> usize {
        self.0.len()
    }

    pub fn min_coord(&self) -> f64 {
        self.0.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn distance(&self, other: &SimplexPoint) -> f64 {
        dist(&self.0, &other.0)
    }
}

impl std::ops::Index<usize> for SimplexPoint {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// A point of the lattice `S_n = S ∩ (1/n)Z^d`, stored as occupation counts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct LatticePoint {
    counts: Vec<u32>,
    n: u32,
}

impl LatticePoint {
    pub fn new(counts: Vec<u32>, n: u32) -> Result<Self> {
        let s: u64 = counts.iter().map(|&c| c as u64).sum();
        if s != n as u64 {
            return Err(Error::Population {
                expected: n as usize,
                got: s as usize,
            });
        }
        if n == 0 {
            return Err(Error::Simplex("population must be positive".into()));
        }
        Ok(LatticePoint { counts, n })
    }

    /// Nearest lattice point by largest-remainder rounding.
    pub fn nearest(x: &SimplexPoint, n: u32) -> Self {
        let scaled: Vec<f64> = x.coords().iter().map(|v| v * n as f64).collect();
        let mut counts: Vec<u32> = scaled.iter().map(|v| v.floor() as u32).collect();
        let assigned: u32 = counts.iter().sum();
        let mut order: Vec<usize> = (0..counts.len()).collect();
        order.sort_by(|&a, &b| {
            let ra = scaled[a] - scaled[a].floor();
            let rb = scaled[b] - scaled[b].floor();
            rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
        });
        for &i in order.iter().take((n - assigned) as usize) {
            counts[i] += 1;
        }
        LatticePoint { counts, n }
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn d(&self) -> usize {
        self.counts.len()
    }

    pub fn to_coords(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    pub fn to_simplex(&self) -> SimplexPoint {
        SimplexPoint(self.to_coords())
    }

    /// `self + v/n` if it stays in the lattice.
    pub fn shifted(&self, v: &JumpDirection) -> Option<LatticePoint> {
        let mut counts = self.counts.clone();
        for (c, &dv) in counts.iter_mut().zip(v.delta()) {
            let nc = *c as i64 + dv as i64;
            if nc < 0 {
                return None;
            }
            *c = nc as u32;
        }
        Some(LatticePoint { counts, n: self.n })
    }

    pub(crate) fn apply_in_place(&mut self, v: &JumpDirection) {
        for (c, &dv) in self.counts.iter_mut().zip(v.delta()) {
            *c = (*c as i64 + dv as i64) as u32;
        }
    }
}

/// Integer jump vector `e_j − e_i` (tuple sums).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct JumpDirection(Vec<i32>);

impl JumpDirection {
    pub fn new(delta: Vec<i32>) -> Result<Self> {
        if delta.iter().map(|&v| v as i64).sum::<i64>() != 0 {
            return Err(Error::Model("jump direction must sum to zero".into()));
        }
        Ok(JumpDirection(delta))
    }

    /// `Σ_l e_{to_l} − Σ_l e_{from_l}`.
    pub fn from_tuples(d: usize, from: &[usize], to: &[usize]) -> Self {
        let mut delta = vec![0; d];
        for &i in from {
            delta[i] -= 1;
        }
        for &j in to {
            delta[j] += 1;
        }
        JumpDirection(delta)
    }

    pub fn delta(&self) -> &[i32] {
        &self.0
    }

    pub fn is_null(&self) -> bool {
        self.0.iter().all(|&v| v == 0)
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&v| v as f64).collect()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt()
    }

    pub fn negated(&self) -> Self {
        JumpDirection(self.0.iter().map(|v| -v).collect())
    }

    /// Coordinates where the direction is strictly negative.
    pub fn negative_support(&self) -> Vec<usize> {
        (0..self.0.len()).filter(|&i| self.0[i] < 0).collect()
    }
}

/// A simultaneous transition of `k` particles from states `from` to `to`.
#[derive(Debug, Clone, PartialEq)]
pub struct TupleTransition {
    pub from: Vec<usize>,
    pub to: Vec<usize>,
    /// Limit rate `Γ^k_{ij}(x)`; at population `n` the rate is `n^{1−k}` times it.
    pub rate: RateExpr,
}

impl TupleTransition {
    pub fn new(from: Vec<usize>, to: Vec<usize>, rate: RateExpr) -> Self {
        TupleTransition { from, to, rate }
    }

    pub fn k(&self) -> usize {
        self.from.len()
    }

    pub fn direction(&self, d: usize) -> JumpDirection {
        JumpDirection::from_tuples(d, &self.from, &self.to)
    }

    /// Sorted list of the `(from_l, to_l)` pairs; equal for all joint
    /// permutations of the two tuples.
    pub fn pair_multiset(&self) -> Vec<(usize, usize)> {
        let mut p: Vec<(usize, usize)> = self
            .from
            .iter()
            .cloned()
            .zip(self.to.iter().cloned())
            .collect();
        p.sort_unstable();
        p
    }

    /// Number of distinct tuples `(σi, σj)` obtained by permuting positions.
    pub fn permutation_copies(&self) -> usize {
        let pairs = self.pair_multiset();
        let mut copies = factorial(pairs.len());
        let mut run = 1;
        for w in pairs.windows(2) {
            if w[0] == w[1] {
                run += 1;
            } else {
                copies /= factorial(run);
                run = 1;
            }
        }
        copies / factorial(run)
    }

    /// Source multiplicity profile `m_s = #{l : from_l = s}`.
    pub fn source_profile(&self, d: usize) -> Vec<u32> {
        let mut m = vec![0; d];
        for &i in &self.from {
            m[i] += 1;
        }
        m
    }

    /// Label used in reports, 1-based: `(1,2)->(3,4)`.
    pub fn label(&self) -> String {
        let f = |t: &[usize]| {
            t.iter()
                .map(|s| (s + 1).to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        format!("({})->({})", f(&self.from), f(&self.to))
    }
}

pub(crate) fn factorial(k: usize) -> usize {
    (1..=k).product::<usize>().max(1)
}

/// A complete particle system: state space, transitions and symmetrization mode.
///
/// With `symmetrize = true` each listed transition stands for its whole
/// permutation class `{(σi, σj)}`, all sharing the listed rate. With
/// `symmetrize = false` the list is taken as the full transition set.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    space: StateSpace,
    k_max: usize,
    transitions: Vec<TupleTransition>,
    symmetrize: bool,
    /// Named parameters the rates were built from; kept for provenance.
    pub params: BTreeMap<String, f64>,
    /// Optional human-readable name.
    pub name: Option<String>,
}

impl ModelSpec {
    pub fn new(d: usize, transitions: Vec<TupleTransition>, symmetrize: bool) -> Result<Self> {
        let space = StateSpace::new(d)?;
        let mut k_max = 0;
        for (idx, t) in transitions.iter().enumerate() {
            let tag = || format!("transition {} {}", idx + 1, t.label());
            if t.from.is_empty() || t.from.len() != t.to.len() {
                return Err(Error::Model(format!("{}: tuple lengths differ or are empty", tag())));
            }
            if t.from.iter().chain(&t.to).any(|&s| s >= d) {
                return Err(Error::Model(format!("{}: state out of range 1..{d}", tag())));
            }
            if t.from.iter().zip(&t.to).any(|(a, b)| a == b) {
                return Err(Error::Model(format!(
                    "{}: a particle must change state in every position",
                    tag()
                )));
            }
            if let Some(v) = t.rate.max_var() {
                if v >= d {
                    return Err(Error::Model(format!(
                        "{}: rate references x{} but d = {d}",
                        tag(),
                        v + 1
                    )));
                }
            }
            k_max = k_max.max(t.k());
        }
        if symmetrize {
            let mut seen = BTreeMap::new();
            for (idx, t) in transitions.iter().enumerate() {
                if let Some(prev) = seen.insert(t.pair_multiset(), idx) {
                    return Err(Error::Model(format!(
                        "transitions {} and {} are permutations of each other",
                        prev + 1,
                        idx + 1
                    )));
                }
            }
        }
        Ok(ModelSpec {
            space,
            k_max,
            transitions,
            symmetrize,
            params: BTreeMap::new(),
            name: None,
        })
    }

    pub fn d(&self) -> usize {
        self.space.d()
    }

    pub fn space(&self) -> StateSpace {
        self.space
    }

    /// Largest tuple size `K`.
    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn transitions(&self) -> &[TupleTransition] {
        &self.transitions
    }

    pub fn symmetrize(&self) -> bool {
        self.symmetrize
    }

    /// Number of tuple pairs in the transition set represented by listed
    /// transition `idx` (its permutation class size when symmetrizing).
    pub fn multiplicity(&self, idx: usize) -> usize {
        if self.symmetrize {
            self.transitions[idx].permutation_copies()
        } else {
            1
        }
    }

    /// Explicit transition set: every permutation copy listed separately,
    /// without symmetrization. Mainly a test oracle.
    pub fn expanded(&self) -> ModelSpec {
        if !self.symmetrize {
            return self.clone();
        }
        let mut out = Vec::new();
        for t in &self.transitions {
            let k = t.k();
            let mut seen = std::collections::BTreeSet::new();
            for perm in permutations(k) {
                let from: Vec<usize> = perm.iter().map(|&p| t.from[p]).collect();
                let to: Vec<usize> = perm.iter().map(|&p| t.to[p]).collect();
                if seen.insert((from.clone(), to.clone())) {
                    out.push(TupleTransition::new(from, to, t.rate.clone()));
                }
            }
        }
        let mut m = ModelSpec::new(self.d(), out, false).expect("expansion of a valid model");
        m.params = self.params.clone();
        m.name = self.name.clone();
        m
    }

    pub fn with_name(mut self, name: &str) -> Self {
        self.name = Some(name.to_string());
        self
    }
}

pub(crate) fn permutations(k: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; k], &mut out);
    out
}

/// A single diagnostic produced by a checker.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Finding {
    pub kind: String,
    pub message: String,
    /// 1-based index of the listed transition concerned, if any.
    pub transition: Option<usize>,
    pub point: Option<Vec<f64>>,
}

impl Finding {
    pub fn new(kind: &str, message: impl Into<String>) -> Self {
        Finding {
            kind: kind.to_string(),
            message: message.into(),
            transition: None,
            point: None,
        }
    }

    pub fn at_transition(mut self, idx: usize) -> Self {
        self.transition = Some(idx + 1);
        self
    }

    pub fn at_point(mut self, x: &[f64]) -> Self {
        self.point = Some(x.to_vec());
        self
    }
}

/// Check every rate on the validation grid: finite and not below `-1e-12`.
pub fn validate_model(spec: &ModelSpec) -> Vec<Finding> {
    let grid = validation_grid(spec.d());
    let mut findings = Vec::new();
    for (idx, t) in spec.transitions().iter().enumerate() {
        let values: Vec<f64> = grid.iter().map(|x| t.rate.eval(x.coords())).collect();
        if let Some(p) = values.iter().position(|g| !g.is_finite()) {
            findings.push(
                Finding::new(
                    "non-finite-rate",
                    format!("rate of {} evaluates to {}", t.label(), values[p]),
                )
                .at_transition(idx)
                .at_point(grid[p].coords()),
            );
        }
        if let Some(p) = values.iter().position(|&g| g < -1e-12) {
            findings.push(
                Finding::new(
                    "negative-rate",
                    format!("rate of {} evaluates to {}", t.label(), values[p]),
                )
                .at_transition(idx)
                .at_point(grid[p].coords()),
            );
        }
    }
    findings
}
