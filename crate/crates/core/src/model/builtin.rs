//! Built-in example systems.
//!
//! * `curie-weiss` (`beta`, default 1): two opinions. State 1 is spin −1 and
//!   state 2 is spin +1, so a point is `(x₋₁, x₁)`. A particle leaves the
//!   majority opinion at rate `exp(−2β·|x₁ − x₋₁|)` and the minority (or a
//!   tie) at rate 1.
//! * `arn` (`gamma`, `C`, defaults 1 and 2): alternative rerouting network
//!   with link occupancies `0..=C` mapped to states `1..=C+1`. Single arrivals
//!   `i → i+1` at rate γ, departures `i → i−1` at rate `i`, and rerouted
//!   arrivals `(i, j) → (i+1, j+1)` for `i, j < C` at rate `γ·x_C`, where
//!   `x_C` is the fraction of full links.
//! * `eg3` (`c1`..`c6`, default 1): four states; `1 ↔ 2` and `3 ↔ 4` as
//!   single jumps, `(1,2) ↔ (3,4)` as pair jumps.

use std::collections::BTreeMap;

use super::{ModelSpec, RateExpr, TupleTransition};
use crate::error::{Error, Result};

fn take(params: &BTreeMap<String, f64>, allowed: &[(&str, f64)]) -> Result<BTreeMap<String, f64>> {
    for k in params.keys() {
        if !allowed.iter().any(|(a, _)| a == k) {
            return Err(Error::Parameter(format!("unknown parameter `{k}`")));
        }
    }
    let mut out = BTreeMap::new();
    for (name, default) in allowed {
        let v = params.get(*name).copied().unwrap_or(*default);
        if !v.is_finite() || v <= 0.0 {
            return Err(Error::Parameter(format!("`{name}` must be positive, got {v}")));
        }
        out.insert(name.to_string(), v);
    }
    Ok(out)
}

fn parse(src: &str, params: &BTreeMap<String, f64>) -> RateExpr {
    RateExpr::parse_with(src, params).expect("built-in rate expression")
}

/// Construct one of the built-in models by name.
pub fn builtin_model(name: &str, params: &BTreeMap<String, f64>) -> Result<ModelSpec> {
    let (spec, resolved) = match name {
        "curie-weiss" | "cw" => {
            let p = take(params, &[("beta", 1.0)])?;
            let t = vec![
                TupleTransition::new(
                    vec![0],
                    vec![1],
                    parse("cond(x1 > x2, exp(-2*beta*(x1 - x2)), 1)", &p),
                ),
                TupleTransition::new(
                    vec![1],
                    vec![0],
                    parse("cond(x2 > x1, exp(-2*beta*(x2 - x1)), 1)", &p),
                ),
            ];
            (ModelSpec::new(2, t, true)?.with_name("curie-weiss"), p)
        }
        "arn" => {
            let p = take(params, &[("gamma", 1.0), ("C", 2.0)])?;
            let c = p["C"];
            if c.fract() != 0.0 || c > 64.0 {
                return Err(Error::Parameter(format!("`C` must be a small integer, got {c}")));
            }
            let c = c as usize;
            let g = p["gamma"];
            let mut t = Vec::new();
            for i in 0..c {
                t.push(TupleTransition::new(vec![i], vec![i + 1], RateExpr::Num(g)));
            }
            for i in 1..=c {
                t.push(TupleTransition::new(vec![i], vec![i - 1], RateExpr::Num(i as f64)));
            }
            let full = RateExpr::Bin(
                super::expr::BinOp::Mul,
                Box::new(RateExpr::Num(g)),
                Box::new(RateExpr::Var(c)),
            );
            for i in 0..c {
                for j in i..c {
                    t.push(TupleTransition::new(vec![i, j], vec![i + 1, j + 1], full.clone()));
                }
            }
            (ModelSpec::new(c + 1, t, true)?.with_name("arn"), p)
        }
        "eg3" => {
            let p = take(
                params,
                &[("c1", 1.0), ("c2", 1.0), ("c3", 1.0), ("c4", 1.0), ("c5", 1.0), ("c6", 1.0)],
            )?;
            let c = |k: &str| RateExpr::Num(p[k]);
            let t = vec![
                TupleTransition::new(vec![0], vec![1], c("c1")),
                TupleTransition::new(vec![1], vec![0], c("c2")),
                TupleTransition::new(vec![2], vec![3], c("c3")),
                TupleTransition::new(vec![3], vec![2], c("c4")),
                TupleTransition::new(vec![0, 1], vec![2, 3], c("c5")),
                TupleTransition::new(vec![2, 3], vec![0, 1], c("c6")),
            ];
            (ModelSpec::new(4, t, true)?.with_name("eg3"), p)
        }
        other => return Err(Error::UnknownModel(other.to_string())),
    };
    let mut spec = spec;
    spec.params = resolved;
    Ok(spec)
}
