//! Path actions `I_t(γ) = ∫ L(γ, γ̇)`, the explicit analytic bounds on `L`,
//! the LLN perturbation `ψ^ρ`, and the Sanov initial cost.

use rayon::prelude::*;
use serde::Serialize;

use super::local::{local_rate, local_rate_at, LocalRateResult};
use super::minimize::OptimizerDiagnostics;
use crate::error::{Error, Result};
use crate::lln::{integrate_lln, DEFAULT_DT};
use crate::model::{validation_grid, PiecewiseLinearPath, SimplexPoint};
use crate::rates::JumpRateTable;

/// Identifier of the per-segment quadrature.
pub const QUADRATURE_SCHEME: &str = "gauss-legendre-5";

/// Nodes on `[−1, 1]` and weights.
pub(crate) const GAUSS_LEGENDRE_5: [(f64, f64); 5] = [
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.0, 0.568_888_888_888_888_9),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

#[derive(Debug, Clone, Serialize)]
pub struct ActionReport {
    pub path: PiecewiseLinearPath,
    /// `I(γ)`; `f64::INFINITY` if some segment is infeasible.
    pub value: f64,
    pub segments: Vec<f64>,
    /// Segments with infinite cost.
    pub infinite_segments: Vec<usize>,
    pub scheme: String,
    /// Present when the path came out of the optimizer.
    pub optimizer: Option<OptimizerDiagnostics>,
}

fn lerp(a: &[f64], b: &[f64], s: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(p, q)| p + s * (q - p)).collect()
}

/// Cost of the straight segment from `a` to `b` traversed in time `h`.
pub(crate) fn segment_action(table: &JumpRateTable, a: &[f64], b: &[f64], h: f64) -> Result<f64> {
    let beta: Vec<f64> = a.iter().zip(b).map(|(p, q)| (q - p) / h).collect();
    let mut total = 0.0;
    let mut warm: Option<Vec<f64>> = None;
    for (xi, w) in GAUSS_LEGENDRE_5 {
        let x = lerp(a, b, 0.5 * (1.0 + xi));
        let r = local_rate_at(table, &x, &beta, warm.as_deref())?;
        if !r.is_finite() {
            return Ok(f64::INFINITY);
        }
        total += 0.5 * h * w * r.value;
        warm = Some(r.theta);
    }
    Ok(total)
}

/// `I(γ)` by 5-node Gauss–Legendre quadrature on every segment.
pub fn path_action(table: &JumpRateTable, path: &PiecewiseLinearPath) -> Result<ActionReport> {
    if path.d() != table.d() {
        return Err(Error::Precondition("path dimension differs from the model".into()));
    }
    let t = path.times();
    let k = path.knots();
    let segments = (0..path.segments())
        .into_par_iter()
        .map(|m| segment_action(table, k[m].coords(), k[m + 1].coords(), t[m + 1] - t[m]))
        .collect::<Result<Vec<f64>>>()?;
    let infinite_segments: Vec<usize> = (0..segments.len()).filter(|&m| !segments[m].is_finite()).collect();
    let value = if infinite_segments.is_empty() {
        segments.iter().sum()
    } else {
        f64::INFINITY
    };
    Ok(ActionReport {
        path: path.clone(),
        value,
        segments,
        infinite_segments,
        scheme: QUADRATURE_SCHEME.to_string(),
        optimizer: None,
    })
}

/// Local rate solution at the midpoint of every segment (the minimizing
/// flows used to build piecewise-constant controls).
pub fn segment_flows(table: &JumpRateTable, path: &PiecewiseLinearPath) -> Result<Vec<LocalRateResult>> {
    let k = path.knots();
    (0..path.segments())
        .into_par_iter()
        .map(|m| {
            let x = lerp(k[m].coords(), k[m + 1].coords(), 0.5);
            local_rate_at(table, &x, &path.velocity(m), None)
        })
        .collect()
}

/// `R = max_v sup_x λ_v(x)`, estimated on the validation grid.
pub fn rate_bound(table: &JumpRateTable) -> f64 {
    validation_grid(table.d())
        .iter()
        .flat_map(|x| table.rates(x.coords()))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Serialize)]
pub struct SuperlinearityCheck {
    pub holds: bool,
    pub value: f64,
    /// `‖β‖ log‖β‖ / max_v‖v‖ − R|𝒱| ‖β‖`.
    pub bound: f64,
}

/// Check `L(x, β) ≥ ‖β‖ log‖β‖ / max_v‖v‖ − R|𝒱| ‖β‖`, the bound obtained
/// by testing the dual with `θ = (log‖β‖ / max_v‖v‖) β/‖β‖`.
pub fn superlinearity_bound_check(table: &JumpRateTable, x: &SimplexPoint, beta: &[f64]) -> Result<SuperlinearityCheck> {
    let norm = beta.iter().map(|b| b * b).sum::<f64>().sqrt();
    if !(norm > std::f64::consts::E) {
        return Err(Error::Precondition("the bound needs ‖β‖ > e".into()));
    }
    let r = rate_bound(table);
    let bound = norm * norm.ln() / table.max_norm() - r * table.len() as f64 * norm;
    let value = local_rate(table, x, beta)?.value;
    Ok(SuperlinearityCheck {
        holds: value >= bound - 1e-9 * bound.abs().max(1.0),
        value,
        bound,
    })
}

/// `ψ^ρ = ρ μ + (1 − ρ) γ` with `μ` the LLN trajectory started at `γ(0)`,
/// on the union of both time grids.
pub fn perturb_path(table: &JumpRateTable, gamma: &PiecewiseLinearPath, rho: f64) -> Result<PiecewiseLinearPath> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::Precondition("ρ must lie in [0, 1]".into()));
    }
    if gamma.segments() == 0 {
        return Ok(gamma.clone());
    }
    let t0 = gamma.t0();
    let lln = integrate_lln(table, gamma.start(), gamma.duration(), DEFAULT_DT)?
        .to_path()?
        .starting_at(t0);
    let mut times: Vec<f64> = gamma.times().iter().chain(lln.times()).copied().collect();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
    *times.last_mut().unwrap() = gamma.t_end();
    let knots = times
        .iter()
        .map(|&t| {
            let c = gamma
                .eval(t)
                .iter()
                .zip(lln.eval(t))
                .map(|(g, m)| rho * m + (1.0 - rho) * g)
                .collect();
            SimplexPoint::new(c)
        })
        .collect::<Result<Vec<_>>>()?;
    PiecewiseLinearPath::new(times, knots)
}

/// `(I_t(γ), I_{t/c}(γ_c))` with `γ_c(s) = γ(cs)`.
pub fn reparametrization_check(table: &JumpRateTable, gamma: &PiecewiseLinearPath, c: f64) -> Result<(f64, f64)> {
    if !(0.5..=2.0).contains(&c) {
        return Err(Error::Precondition("time scale c must lie in [0.5, 2]".into()));
    }
    let base = path_action(table, gamma)?.value;
    if !base.is_finite() {
        return Err(Error::Precondition("the path must have finite action".into()));
    }
    let scaled = path_action(table, &gamma.time_scaled(c)?)?.value;
    Ok((base, scaled))
}

/// Explicit bound on `|I_{t/c}(γ_c) − I_t(γ)|` for a path of action `action`:
/// `max{log(1/c), c log c}(I + R₁) + R|𝒱||1 − 1/c|` with `R₁ = |𝒱|R(e − 1)`.
pub fn reparametrization_bound(table: &JumpRateTable, action: f64, c: f64) -> f64 {
    let r = rate_bound(table);
    let nv = table.len() as f64;
    let r1 = nv * r * (std::f64::consts::E - 1.0);
    let f = (1.0 / c).ln().max(c * c.ln());
    f * (action + r1) + r * nv * (1.0 - 1.0 / c).abs()
}

/// Relative entropy `R(μ₀ ‖ ν) = Σ μ₀ᵢ log(μ₀ᵢ/νᵢ)`; `+∞` off the support.
pub fn sanov_cost(mu0: &SimplexPoint, nu: &SimplexPoint) -> Result<f64> {
    if mu0.d() != nu.d() {
        return Err(Error::Precondition("measures differ in dimension".into()));
    }
    let mut s = 0.0;
    for (&m, &n) in mu0.coords().iter().zip(nu.coords()) {
        if m == 0.0 {
            continue;
        }
        if n == 0.0 {
            return Ok(f64::INFINITY);
        }
        s += m * (m / n).ln();
    }
    Ok(s.max(0.0))
}
