//! Grid verification of the standard estimates on the jump rates:
//!
//! 1. `λ_v(x) ≤ Ĉ ∏_{i∈N_v} x_i`;
//! 2. `λ_v(x)/λ_v(y) ≤ (1 + C₁‖x−y‖/c₀) ∏_{y_i<x_i} (x_i/y_i)^K`;
//! 3. `λ_v(x) ≥ (c₀/K!) ∏_i x_i^K`;
//! 4. `λ_v(x)/λ_v(y) ≥ c̄ ∏_{i∈N_v} (x_i/y_i)^{r_i}` for a source profile `r`.
//!
//! `c₀` is the smallest grid value of a positive rate family and `C₁` the
//! largest difference quotient of Γ observed on the sampled pairs, so (2)
//! is checked against constants that are consistent with the same sample.

use serde::Serialize;

use super::{JumpRateTable, RateClass};
use crate::model::{
    dist, factorial, random_simplex_points, validate_model, validation_grid, Finding, ModelSpec,
};

const PAIR_SEED: u64 = 0x7061_6972;
const PAIRS: usize = 200;

/// Outcome of the simultaneous-jump profile test for one direction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpProfile {
    /// Some positive transition takes exactly `|v_i|` particles from each `i ∈ N_v`.
    pub exact: bool,
    /// All positive transitions share one source profile supported on `N_v`.
    pub shared: bool,
    /// The profile used for the lower ratio bound, indexed by state.
    pub profile: Option<Vec<u32>>,
}

/// Source-profile diagnosis of direction `idx`.
pub fn jump_profile(table: &JumpRateTable, idx: usize) -> JumpProfile {
    let d = table.d();
    let e = &table.directions()[idx];
    let exact_profile: Vec<u32> = e.v.delta().iter().map(|&v| if v < 0 { (-v) as u32 } else { 0 }).collect();
    let positives: Vec<Vec<u32>> = e
        .contributions
        .iter()
        .filter(|c| c.class.is_positive())
        .map(|c| {
            let mut m = vec![0u32; d];
            for &i in &c.from {
                m[i] += 1;
            }
            m
        })
        .collect();
    let exact = positives.contains(&exact_profile);
    let shared = !positives.is_empty()
        && positives.iter().all(|p| *p == positives[0])
        && (0..d).all(|i| positives[0][i] == 0 || e.v.delta()[i] < 0);
    let profile = if exact {
        Some(exact_profile)
    } else if shared {
        Some(positives[0].clone())
    } else {
        None
    };
    JumpProfile {
        exact,
        shared,
        profile,
    }
}

/// Fitted constants and violations of the four rate estimates.
#[derive(Debug, Clone, Serialize)]
pub struct RateEstimateReport {
    /// Per direction, the smallest `Ĉ` valid on the grid.
    pub c_hat: Vec<f64>,
    /// Smallest grid value over positive rate families.
    pub c0: f64,
    /// Largest difference quotient of the rates over the sampled pairs.
    pub c1: f64,
    /// Per direction, the fitted `c̄` of the lower ratio bound (None when no profile).
    pub c_bar: Vec<Option<f64>>,
    pub findings: Vec<Finding>,
}

impl RateEstimateReport {
    pub fn ok(&self) -> bool {
        self.findings.is_empty()
    }
}

/// Verify the rate estimates on the validation grid and random pairs.
pub fn rate_estimate_report(spec: &ModelSpec) -> RateEstimateReport {
    let mut findings = validate_model(spec);
    let table = JumpRateTable::new(spec);
    let d = spec.d();
    let k = spec.k_max().max(1) as i32;
    let grid = validation_grid(d);

    let mut c0 = f64::INFINITY;
    for e in table.directions() {
        for c in &e.contributions {
            match c.class {
                RateClass::Positive { min } => c0 = c0.min(min),
                RateClass::Mixed { .. } => findings.push(
                    Finding::new(
                        "mixed-rate",
                        format!(
                            "rate of {} is neither identically zero nor bounded away from zero",
                            spec.transitions()[c.transition].label()
                        ),
                    )
                    .at_transition(c.transition),
                ),
                RateClass::Zero => {}
            }
        }
    }
    if !findings.is_empty() {
        return RateEstimateReport {
            c_hat: vec![],
            c0,
            c1: f64::NAN,
            c_bar: vec![],
            findings,
        };
    }

    // (1) and (3)
    let mut c_hat = vec![0.0f64; table.len()];
    let lower = c0 / factorial(spec.k_max()) as f64;
    for x in &grid {
        let xs = x.coords();
        for (idx, e) in table.directions().iter().enumerate() {
            let lam = table.rate(idx, xs);
            let prod: f64 = e.v.negative_support().iter().map(|&i| xs[i]).product();
            if prod > 0.0 {
                c_hat[idx] = c_hat[idx].max(lam / prod);
            } else if lam > 1e-15 {
                findings.push(
                    Finding::new("estimate-1", format!("λ_v > 0 where ∏_(N_v) x_i = 0 (direction {idx})"))
                        .at_point(xs),
                );
            }
            let floor: f64 = lower * xs.iter().map(|v| v.powi(k)).product::<f64>();
            if lam < floor * (1.0 - 1e-12) {
                findings.push(
                    Finding::new("estimate-3", format!("λ_v = {lam} below (c₀/K!)∏x_i^K = {floor}"))
                        .at_point(xs),
                );
            }
        }
    }

    // pairs: x from the grid (boundary allowed), y interior
    let ys = random_simplex_points(d, PAIRS, PAIR_SEED);
    let xs_pts: Vec<_> = grid.iter().cycle().skip(3).take(PAIRS).cloned().collect();
    let mut c1 = 0.0f64;
    for (x, y) in xs_pts.iter().zip(&ys) {
        let r = dist(x.coords(), y.coords());
        if r == 0.0 {
            continue;
        }
        for t in spec.transitions() {
            let q = (t.rate.eval(x.coords()) - t.rate.eval(y.coords())).abs() / r;
            if q.is_finite() {
                c1 = c1.max(q);
            }
        }
    }
    let profiles: Vec<JumpProfile> = (0..table.len()).map(|i| jump_profile(&table, i)).collect();
    let mut c_bar: Vec<Option<f64>> = profiles
        .iter()
        .map(|p| p.profile.as_ref().map(|_| f64::INFINITY))
        .collect();
    for (x, y) in xs_pts.iter().zip(&ys) {
        let (xc, yc) = (x.coords(), y.coords());
        let r = dist(xc, yc);
        let growth: f64 = (0..d)
            .filter(|&i| yc[i] < xc[i])
            .map(|i| (xc[i] / yc[i]).powi(k))
            .product();
        let upper = (1.0 + c1 / c0 * r) * growth;
        for idx in 0..table.len() {
            let ratio = table.rate(idx, xc) / table.rate(idx, yc);
            if ratio > upper * (1.0 + 1e-9) {
                findings.push(
                    Finding::new("estimate-2", format!("ratio {ratio} exceeds bound {upper} (direction {idx})"))
                        .at_point(xc),
                );
            }
            if let (Some(profile), Some(cb)) = (&profiles[idx].profile, c_bar[idx].as_mut()) {
                let base: f64 = (0..d)
                    .filter(|&i| profile[i] > 0)
                    .map(|i| (xc[i] / yc[i]).powi(profile[i] as i32))
                    .product();
                if base > 0.0 {
                    *cb = cb.min(ratio / base);
                }
            }
        }
    }
    for (idx, cb) in c_bar.iter().enumerate() {
        match cb {
            Some(v) if !(*v > 0.0) => findings.push(Finding::new(
                "estimate-4",
                format!("lower ratio constant for direction {idx} is not positive ({v})"),
            )),
            None => findings.push(Finding::new(
                "estimate-4",
                format!("direction {idx} has no admissible source profile"),
            )),
            _ => {}
        }
    }
    RateEstimateReport {
        c_hat,
        c0,
        c1,
        c_bar,
        findings,
    }
}
