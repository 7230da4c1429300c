use serde::Serialize;

use super::{dist, SimplexPoint};
use crate::error::{Error, Result};

/// Piecewise-linear path in the simplex on a strictly increasing time grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PiecewiseLinearPath {
    times: Vec<f64>,
    knots: Vec<SimplexPoint>,
}

impl PiecewiseLinearPath {
    pub fn new(times: Vec<f64>, knots: Vec<SimplexPoint>) -> Result<Self> {
        if times.is_empty() || times.len() != knots.len() {
            return Err(Error::Precondition(
                "path needs as many knots as grid times (at least one)".into(),
            ));
        }
        if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Precondition("path times must be strictly increasing".into()));
        }
        let d = knots[0].d();
        if knots.iter().any(|k| k.d() != d) {
            return Err(Error::Precondition("knots differ in dimension".into()));
        }
        Ok(PiecewiseLinearPath { times, knots })
    }

    pub fn from_coords(times: Vec<f64>, knots: Vec<Vec<f64>>) -> Result<Self> {
        let knots = knots
            .into_iter()
            .map(SimplexPoint::new)
            .collect::<Result<Vec<_>>>()?;
        Self::new(times, knots)
    }

    /// Straight line from `x` to `y` over `[0, t]` with `knots` equally spaced knots.
    pub fn straight(x: &SimplexPoint, y: &SimplexPoint, t: f64, knots: usize) -> Result<Self> {
        if knots < 2 || t <= 0.0 {
            return Err(Error::Precondition("need t > 0 and at least 2 knots".into()));
        }
        let m = knots - 1;
        let times = (0..=m).map(|k| t * k as f64 / m as f64).collect();
        let pts = (0..=m)
            .map(|k| {
                let s = k as f64 / m as f64;
                let c = x
                    .coords()
                    .iter()
                    .zip(y.coords())
                    .map(|(a, b)| (1.0 - s) * a + s * b)
                    .collect();
                SimplexPoint::renormalized(c).map(|p| p.0)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(times, pts)
    }

    /// Constant path.
    pub fn constant(x: &SimplexPoint, t: f64) -> Result<Self> {
        Self::new(vec![0.0, t], vec![x.clone(), x.clone()])
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn knots(&self) -> &[SimplexPoint] {
        &self.knots
    }

    pub fn d(&self) -> usize {
        self.knots[0].d()
    }

    pub fn segments(&self) -> usize {
        self.times.len() - 1
    }

    pub fn start(&self) -> &SimplexPoint {
        &self.knots[0]
    }

    pub fn end(&self) -> &SimplexPoint {
        self.knots.last().unwrap()
    }

    pub fn t0(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn duration(&self) -> f64 {
        self.t_end() - self.t0()
    }

    /// Constant velocity on segment `m`.
    pub fn velocity(&self, m: usize) -> Vec<f64> {
        let h = self.times[m + 1] - self.times[m];
        self.knots[m + 1]
            .coords()
            .iter()
            .zip(self.knots[m].coords())
            .map(|(b, a)| (b - a) / h)
            .collect()
    }

    /// Linear interpolation; clamps outside the grid.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        if t <= self.t0() {
            return self.knots[0].coords().to_vec();
        }
        if t >= self.t_end() {
            return self.end().coords().to_vec();
        }
        let m = match self.times.binary_search_by(|s| s.partial_cmp(&t).unwrap()) {
            Ok(m) => return self.knots[m].coords().to_vec(),
            Err(m) => m - 1,
        };
        let s = (t - self.times[m]) / (self.times[m + 1] - self.times[m]);
        self.knots[m]
            .coords()
            .iter()
            .zip(self.knots[m + 1].coords())
            .map(|(a, b)| a + s * (b - a))
            .collect()
    }

    /// The same path sampled at `times` (which must lie in its time range).
    pub fn resample(&self, times: &[f64]) -> Result<Self> {
        let knots = times
            .iter()
            .map(|&t| SimplexPoint::renormalized(self.eval(t)).map(|p| p.0))
            .collect::<Result<Vec<_>>>()?;
        Self::new(times.to_vec(), knots)
    }

    /// `s ↦ γ(c s)` on `[t0/c, t_end/c]`.
    pub fn time_scaled(&self, c: f64) -> Result<Self> {
        if c <= 0.0 {
            return Err(Error::Precondition("time scale must be positive".into()));
        }
        Self::new(
            self.times.iter().map(|t| t / c).collect(),
            self.knots.clone(),
        )
    }

    /// Shift times so the path starts at `t0`.
    pub fn starting_at(&self, t0: f64) -> Self {
        let shift = t0 - self.t0();
        PiecewiseLinearPath {
            times: self.times.iter().map(|t| t + shift).collect(),
            knots: self.knots.clone(),
        }
    }

    /// Follow `self`, then `other` (whose start must match this end).
    pub fn concat(&self, other: &PiecewiseLinearPath) -> Result<Self> {
        if self.end().distance(other.start()) > 1e-9 {
            return Err(Error::Precondition("concatenated paths do not meet".into()));
        }
        let other = other.starting_at(self.t_end());
        let mut times = self.times.clone();
        let mut knots = self.knots.clone();
        times.extend_from_slice(&other.times[1..]);
        knots.extend_from_slice(&other.knots[1..]);
        Self::new(times, knots)
    }

    /// Euclidean arc length.
    pub fn length(&self) -> f64 {
        self.knots
            .windows(2)
            .map(|w| dist(w[0].coords(), w[1].coords()))
            .sum()
    }
}
