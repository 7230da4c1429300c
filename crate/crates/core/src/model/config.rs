//! JSON model files.
//!
//! ```json
//! {
//!   "schema": 1,
//!   "d": 4,
//!   "K": 2,
//!   "symmetrize": true,
//!   "params": { "c5": 1.0 },
//!   "transitions": [
//!     { "k": 1, "from": [1], "to": [2], "rate": "1.0" },
//!     { "k": 2, "from": [1, 2], "to": [3, 4], "rate": "c5" }
//!   ]
//! }
//! ```
//!
//! States are 1-based. `K` and each `k` are optional but checked when
//! present. `params` names may be used inside rate expressions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ModelSpec, RateExpr, TupleTransition};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    schema: u32,
    d: usize,
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    k_max: Option<usize>,
    #[serde(default = "default_symmetrize")]
    symmetrize: bool,
    #[serde(default)]
    params: BTreeMap<String, f64>,
    transitions: Vec<TransitionEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
}

fn default_symmetrize() -> bool {
    true
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransitionEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
    from: Vec<usize>,
    to: Vec<usize>,
    rate: String,
}

/// Parse a model file.
pub fn model_from_json(text: &str) -> Result<ModelSpec> {
    let file: ModelFile =
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    if file.schema != SCHEMA_VERSION {
        return Err(Error::Config(format!(
            "unsupported schema {} (expected {SCHEMA_VERSION})",
            file.schema
        )));
    }
    let mut transitions = Vec::with_capacity(file.transitions.len());
    for (idx, t) in file.transitions.iter().enumerate() {
        if let Some(k) = t.k {
            if k != t.from.len() {
                return Err(Error::Config(format!(
                    "transition {}: k = {k} but `from` has {} states",
                    idx + 1,
                    t.from.len()
                )));
            }
        }
        let zero_based = |v: &[usize]| -> Result<Vec<usize>> {
            v.iter()
                .map(|&s| {
                    if s == 0 {
                        Err(Error::Config(format!(
                            "transition {}: states are numbered from 1",
                            idx + 1
                        )))
                    } else {
                        Ok(s - 1)
                    }
                })
                .collect()
        };
        let rate = RateExpr::parse_with(&t.rate, &file.params)?;
        transitions.push(TupleTransition::new(
            zero_based(&t.from)?,
            zero_based(&t.to)?,
            rate,
        ));
    }
    let mut spec = ModelSpec::new(file.d, transitions, file.symmetrize)?;
    if let Some(k) = file.k_max {
        if k != spec.k_max() {
            return Err(Error::Config(format!(
                "K = {k} but the largest transition has k = {}",
                spec.k_max()
            )));
        }
    }
    spec.params = file.params;
    spec.name = file.name;
    Ok(spec)
}

/// Serialize a model; rates are written in canonical printed form with
/// parameters already substituted.
pub fn model_to_json(spec: &ModelSpec) -> String {
    let file = ModelFile {
        schema: SCHEMA_VERSION,
        d: spec.d(),
        k_max: Some(spec.k_max()),
        symmetrize: spec.symmetrize(),
        params: spec.params.clone(),
        transitions: spec
            .transitions()
            .iter()
            .map(|t| TransitionEntry {
                k: Some(t.k()),
                from: t.from.iter().map(|s| s + 1).collect(),
                to: t.to.iter().map(|s| s + 1).collect(),
                rate: t.rate.to_string(),
            })
            .collect(),
        name: spec.name.clone(),
    };
    serde_json::to_string_pretty(&file).expect("serializable")
}
