//! Closed-form comparison bounds.

use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::ldp::rate_bound;
use crate::rates::JumpRateTable;

/// `(∏ b_i) t^N e^{−ct} / N!`, the chain lower bound for reaching the end
/// of a path of `N` jumps with rates `b_i` when every exit rate is at most
/// `c`.
pub fn birth_chain_bound(b: &[f64], c: f64, t: f64) -> Result<f64> {
    if b.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::Precondition("chain rates must be positive".into()));
    }
    if !(c >= 0.0) || !(t >= 0.0) || !c.is_finite() || !t.is_finite() {
        return Err(Error::Precondition("need c ≥ 0 and t ≥ 0".into()));
    }
    let n = b.len();
    if n == 0 {
        return Ok((-c * t).exp());
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let log = b.iter().map(|x| x.ln()).sum::<f64>() + n as f64 * t.ln() - ln_gamma(n as f64 + 1.0) - c * t;
    Ok(log.exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExcursionConstants {
    /// `max_v ‖v‖`.
    pub c1: f64,
    /// `R |𝒱| C̄₁`.
    pub c2: f64,
    /// Rate bound `R`.
    pub r: f64,
}

pub fn excursion_constants(table: &JumpRateTable) -> ExcursionConstants {
    let c1 = table.max_norm();
    let r = rate_bound(table);
    ExcursionConstants {
        c1,
        c2: r * table.len() as f64 * c1,
        r,
    }
}

/// `2d exp(−τ n ℓ̄(δ / 2√d τ))` with `ℓ̄(ϱ) = ϱ(log(ϱ/C̄₂) − 1)/C̄₁`, bounding
/// `P(sup_{t≤τ} ‖μⁿ(t) − μⁿ(0)‖ ≥ δ)`. Requires `τ ≤ δ/(2√d C̄₂)`.
pub fn excursion_bound(table: &JumpRateTable, n: u32, delta: f64, tau: f64) -> Result<f64> {
    let k = excursion_constants(table);
    let d = table.d() as f64;
    if !(delta > 0.0) || !(tau > 0.0) {
        return Err(Error::Precondition("need δ > 0 and τ > 0".into()));
    }
    let limit = delta / (2.0 * d.sqrt() * k.c2);
    if tau > limit * (1.0 + 1e-12) {
        return Err(Error::Precondition(format!("τ = {tau} exceeds δ/(2√d C̄₂) = {limit}")));
    }
    let rho = delta / (2.0 * d.sqrt() * tau);
    let ell = rho * ((rho / k.c2).ln() - 1.0) / k.c1;
    Ok(2.0 * d * (-tau * n as f64 * ell).exp())
}
