//! Simulation of the `n`-particle empirical measure, exact transient laws
//! for small systems, Monte-Carlo decay rates and the comparison bounds.
//!
//! Randomness comes from ChaCha8 streams keyed by `(seed, stream id)`, so a
//! replicate is reproducible on its own and replicates parallelize freely.

mod bounds;
mod control;
mod estimate;
mod transient;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{LatticePoint, PiecewiseLinearPath};
use crate::rates::JumpRateTable;

pub use bounds::{birth_chain_bound, excursion_bound, excursion_constants, ExcursionConstants};
pub use control::{build_tilt_control, controlled_run, controlled_run_with, ControlSignal, ControlledSample, Intensity, NominalFeedback};
pub use estimate::{
    extrapolate_decay, mc_rate_estimate, point_event_decays, EstimateRow, Extrapolation, McOptions, RareEventEstimate,
};
pub use transient::{exact_transient, lattice_states, transient_with, uniformized_kernel, Transient, UniformizedKernel, STATE_CAP};

/// A reproducible random stream.
#[derive(Debug, Clone)]
pub struct SimStream {
    pub seed: u64,
    pub id: u64,
    rng: ChaCha8Rng,
}

impl SimStream {
    pub fn new(seed: u64, id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(id);
        SimStream { seed, id, rng }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Exponential variate with the given rate.
    pub(crate) fn exp(&mut self, rate: f64) -> f64 {
        let u: f64 = 1.0 - self.rng.gen::<f64>();
        -u.ln() / rate
    }

    pub(crate) fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }
}

/// A sampled path of `μⁿ` on `[0, horizon]`: the initial state and the state
/// after every jump.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectorySample {
    pub n: u32,
    pub d: usize,
    pub horizon: f64,
    /// `0` followed by the jump times.
    pub times: Vec<f64>,
    /// Counts of every visited state, flattened (`d` per state).
    pub counts: Vec<u32>,
    /// Direction index of each jump (one fewer than states).
    pub directions: Vec<usize>,
    pub stream: u64,
}

impl TrajectorySample {
    fn start(x0: &LatticePoint, horizon: f64, stream: u64) -> Self {
        TrajectorySample {
            n: x0.n(),
            d: x0.d(),
            horizon,
            times: vec![0.0],
            counts: x0.counts().to_vec(),
            directions: Vec::new(),
            stream,
        }
    }

    fn push(&mut self, t: f64, counts: &[u32], dir: usize) {
        self.times.push(t);
        self.counts.extend_from_slice(counts);
        self.directions.push(dir);
    }

    pub fn jumps(&self) -> usize {
        self.directions.len()
    }

    pub fn state_counts(&self, k: usize) -> &[u32] {
        &self.counts[k * self.d..(k + 1) * self.d]
    }

    pub fn state(&self, k: usize) -> LatticePoint {
        LatticePoint::new(self.state_counts(k).to_vec(), self.n).expect("stored state")
    }

    /// `μⁿ(k-th state)` as coordinates.
    pub fn coords(&self, k: usize) -> Vec<f64> {
        let n = self.n as f64;
        self.state_counts(k).iter().map(|&c| c as f64 / n).collect()
    }

    /// Index of the state occupied at time `t` (right-continuous).
    pub fn index_at(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t).saturating_sub(1)
    }

    pub fn at(&self, t: f64) -> Vec<f64> {
        self.coords(self.index_at(t))
    }

    pub fn end(&self) -> Vec<f64> {
        self.coords(self.times.len() - 1)
    }

    /// `sup_t max_i |μⁿ_i(t) − γ_i(t)|` over `[0, horizon]`, checked at both
    /// sides of every jump, at the knots of `γ`, and at the horizon.
    pub fn sup_deviation(&self, gamma: &PiecewiseLinearPath) -> f64 {
        let dev = |a: &[f64], b: &[f64]| a.iter().zip(b).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
        let mut m: f64 = 0.0;
        for k in 0..self.times.len() {
            let t = self.times[k];
            let g = gamma.eval(t);
            m = m.max(dev(&self.coords(k), &g));
            if k > 0 {
                m = m.max(dev(&self.coords(k - 1), &g));
            }
        }
        for &t in gamma.times() {
            if t <= self.horizon {
                m = m.max(dev(&self.at(t), &gamma.eval(t)));
            }
        }
        m.max(dev(&self.end(), &gamma.eval(self.horizon)))
    }

    /// `sup_{t ≤ τ} ‖μⁿ(t) − μⁿ(0)‖` (Euclidean).
    pub fn sup_excursion(&self, tau: f64) -> f64 {
        let x0 = self.coords(0);
        let last = self.index_at(tau);
        (0..=last)
            .map(|k| crate::model::dist(&self.coords(k), &x0))
            .fold(0.0, f64::max)
    }
}

fn check_start(table: &JumpRateTable, x0: &LatticePoint, t: f64) -> Result<()> {
    if x0.d() != table.d() {
        return Err(Error::Precondition("initial state has the wrong dimension".into()));
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Precondition("horizon must be positive".into()));
    }
    Ok(())
}

/// Exact CTMC sample of `μⁿ` on `[0, t]` (Gillespie's direct method).
pub fn gillespie_run(table: &JumpRateTable, x0: &LatticePoint, t: f64, stream: &mut SimStream) -> Result<TrajectorySample> {
    check_start(table, x0, t)?;
    let n = x0.n();
    let nf = n as f64;
    let mut out = TrajectorySample::start(x0, t, stream.id);
    let mut x = x0.clone();
    let mut xs = Vec::with_capacity(x.d());
    let mut rates = Vec::with_capacity(table.len());
    let mut now = 0.0;
    loop {
        table.rates_n_counts(x.counts(), n, &mut xs, &mut rates);
        let mut total = 0.0;
        for &r in &rates {
            if r < 0.0 || !r.is_finite() {
                return Err(Error::Model(format!("invalid jump rate {r} at {:?}", x.counts())));
            }
            total += r;
        }
        if total == 0.0 {
            break;
        }
        now += stream.exp(nf * total);
        if now > t {
            break;
        }
        let target = stream.uniform() * total;
        let mut acc = 0.0;
        let mut pick = rates.len() - 1;
        for (i, &r) in rates.iter().enumerate() {
            acc += r;
            if target < acc && r > 0.0 {
                pick = i;
                break;
            }
        }
        while rates[pick] == 0.0 {
            pick -= 1;
        }
        let v = &table.directions()[pick].v;
        if x.counts().iter().zip(v.delta()).any(|(&c, &dv)| (c as i64) + (dv as i64) < 0) {
            return Err(Error::Model("a positive-rate jump leaves the lattice".into()));
        }
        x.apply_in_place(v);
        out.push(now, x.counts(), pick);
    }
    Ok(out)
}
