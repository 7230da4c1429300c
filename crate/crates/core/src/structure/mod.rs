//! Structural assumptions on the transition family and constructive
//! communicating paths.
//!
//! All checks are evaluated on finite point sets (see
//! [`crate::model::validation_grid`] and [`crate::model::ergodicity_grid`]),
//! so a positive answer is evidence, not proof: a rate expression whose zero
//! set is not a union of coordinate faces can slip between grid points.

mod linsys;
mod paths;
pub(crate) use paths::project_simplex;

use serde::Serialize;

use crate::model::{ergodicity_grid, validation_grid, Finding, ModelSpec};
use crate::rates::{classify_rate, jump_profile, JumpRateTable, RateClass, ZERO_TOL};

pub use linsys::{represent_direction, solve_nonneg_linear, Representation};
pub use paths::{
    build_boundary_escape, build_interior_path, build_path_single_jump,
    build_path_single_jump_discrete, distance_to_inner, CommunicatingPath, DiscretePath,
    StrongConstants,
};

/// Grid classification of every listed transition.
pub fn transition_classes(spec: &ModelSpec) -> Vec<RateClass> {
    let grid = validation_grid(spec.d());
    spec.transitions().iter().map(|t| classify_rate(t, &grid)).collect()
}

fn positive_mask(spec: &ModelSpec) -> Vec<bool> {
    transition_classes(spec).iter().map(RateClass::is_positive).collect()
}

/// One enlargement step of a closure: `state` joined via listed transition `transition`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosureStep {
    pub state: usize,
    pub transition: usize,
}

/// States reachable from `source` through positive-rate tuple transitions
/// whose sources all lie in the states already reached.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccessibilityClosure {
    pub source: usize,
    /// In order of addition; a transition adding several states appears once per state.
    pub steps: Vec<ClosureStep>,
}

impl AccessibilityClosure {
    /// Reached states in addition order, starting with the source.
    pub fn states(&self) -> Vec<usize> {
        std::iter::once(self.source)
            .chain(self.steps.iter().map(|s| s.state))
            .collect()
    }

    pub fn contains(&self, s: usize) -> bool {
        s == self.source || self.steps.iter().any(|st| st.state == s)
    }

    fn witness(&self, s: usize) -> Option<usize> {
        self.steps.iter().find(|st| st.state == s).map(|st| st.transition)
    }

    fn order(&self, s: usize) -> Option<usize> {
        self.states().iter().position(|&t| t == s)
    }

    /// An accessibility chain `source = u_1, …, u_M = w` with the transition
    /// used at each step: only the states `w` depends on through witness
    /// sources are kept, in addition order. Every source of step `m` lies in
    /// `{u_1, …, u_m}` and `u_{m+1}` is among its targets.
    pub fn chain(&self, spec: &ModelSpec, w: usize) -> Option<Vec<(usize, usize)>> {
        if !self.contains(w) {
            return None;
        }
        let mut needed = vec![w];
        let mut stack = vec![w];
        while let Some(s) = stack.pop() {
            if let Some(t) = self.witness(s) {
                for &i in &spec.transitions()[t].from {
                    if !needed.contains(&i) {
                        needed.push(i);
                        stack.push(i);
                    }
                }
            }
        }
        needed.sort_by_key(|&s| self.order(s).unwrap());
        let mut out: Vec<(usize, usize)> = needed
            .windows(2)
            .map(|p| (p[0], self.witness(p[1]).unwrap()))
            .collect();
        out.push((w, usize::MAX));
        Some(out)
    }
}

/// Least fixed point of K-accessibility from `u`.
pub fn accessibility_closure(spec: &ModelSpec, u: usize) -> AccessibilityClosure {
    closure_with(spec, &positive_mask(spec), u)
}

fn closure_with(spec: &ModelSpec, positive: &[bool], u: usize) -> AccessibilityClosure {
    let mut reached = vec![false; spec.d()];
    reached[u] = true;
    let mut steps = Vec::new();
    loop {
        let mut grew = false;
        for (idx, t) in spec.transitions().iter().enumerate() {
            if !positive[idx] || !t.from.iter().all(|&i| reached[i]) {
                continue;
            }
            for &j in &t.to {
                if !reached[j] {
                    reached[j] = true;
                    steps.push(ClosureStep {
                        state: j,
                        transition: idx,
                    });
                    grew = true;
                }
            }
        }
        if !grew {
            break;
        }
    }
    AccessibilityClosure { source: u, steps }
}

#[derive(Debug, Clone, Serialize)]
pub struct KErgodicity {
    pub ergodic: bool,
    /// One closure per source state; these are the certificates.
    pub closures: Vec<AccessibilityClosure>,
}

/// Whether every state is K-accessible from every other.
pub fn is_k_ergodic(spec: &ModelSpec) -> KErgodicity {
    let positive = positive_mask(spec);
    let closures: Vec<_> = (0..spec.d()).map(|u| closure_with(spec, &positive, u)).collect();
    let ergodic = closures.iter().all(|c| c.steps.len() + 1 == spec.d());
    KErgodicity { ergodic, closures }
}

/// Which single-jump matrix to test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SingleMatrix {
    /// Rates of the `k = 1` transitions.
    Single,
    /// The effective matrix aggregating all tuple sizes.
    Effective,
}

#[derive(Debug, Clone, Serialize)]
pub struct SingleErgodicity {
    pub matrix: SingleMatrix,
    pub ergodic: bool,
    /// First grid point where the positive-entry graph is not strongly connected.
    pub counterexample: Option<Vec<f64>>,
}

/// Strong connectivity of the positive entries of `Γ¹(x)` or `Γ^eff(x)` at
/// every point of the ergodicity grid.
pub fn check_single_ergodic(spec: &ModelSpec, which: SingleMatrix) -> SingleErgodicity {
    let table = JumpRateTable::new(spec);
    let counterexample = ergodicity_grid(spec.d()).into_iter().find_map(|x| {
        let m = match which {
            SingleMatrix::Single => table.single_matrix(x.coords()),
            SingleMatrix::Effective => table.effective_matrix(x.coords()),
        };
        let adj: Vec<Vec<bool>> = m
            .iter()
            .enumerate()
            .map(|(i, row)| row.iter().enumerate().map(|(j, &g)| i != j && g > ZERO_TOL).collect())
            .collect();
        (!strongly_connected(&adj)).then(|| x.into_coords())
    });
    SingleErgodicity {
        matrix: which,
        ergodic: counterexample.is_none(),
        counterexample,
    }
}

fn reach(adj: &[Vec<bool>], forward: bool) -> usize {
    let d = adj.len();
    let mut seen = vec![false; d];
    seen[0] = true;
    let mut stack = vec![0];
    while let Some(i) = stack.pop() {
        for j in 0..d {
            let edge = if forward { adj[i][j] } else { adj[j][i] };
            if edge && !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen.iter().filter(|&&s| s).count()
}

pub(crate) fn strongly_connected(adj: &[Vec<bool>]) -> bool {
    adj.len() <= 1 || (reach(adj, true) == adj.len() && reach(adj, false) == adj.len())
}

#[derive(Debug, Clone, Serialize)]
pub struct UeReport {
    pub ok: bool,
    pub classes: Vec<RateClass>,
    pub findings: Vec<Finding>,
}

/// Every rate family is either identically zero or uniformly positive.
pub fn check_ue(spec: &ModelSpec) -> UeReport {
    let classes = transition_classes(spec);
    let findings: Vec<Finding> = classes
        .iter()
        .enumerate()
        .filter_map(|(idx, c)| match c {
            RateClass::Mixed { min, max } => Some(
                Finding::new(
                    "mixed-rate",
                    format!(
                        "rate of {} ranges over [{min}, {max}] on the grid",
                        spec.transitions()[idx].label()
                    ),
                )
                .at_transition(idx),
            ),
            _ => None,
        })
        .collect();
    UeReport {
        ok: findings.is_empty(),
        classes,
        findings,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimJumpDiagnosis {
    pub direction: Vec<i32>,
    /// Property (1): an exact-source transition exists.
    pub exact: bool,
    /// Property (2): all positive transitions share a profile on `N_v`.
    pub shared: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimJumpsReport {
    pub ok: bool,
    pub directions: Vec<SimJumpDiagnosis>,
}

/// Source-profile condition on simultaneous jumps, per direction.
pub fn check_simjumps(spec: &ModelSpec) -> SimJumpsReport {
    let table = JumpRateTable::new(spec);
    let directions: Vec<SimJumpDiagnosis> = (0..table.len())
        .filter(|&i| table.directions()[i].contributions.iter().any(|c| c.class.is_positive()))
        .map(|i| {
            let p = jump_profile(&table, i);
            SimJumpDiagnosis {
                direction: table.directions()[i].v.delta().to_vec(),
                exact: p.exact,
                shared: p.shared,
            }
        })
        .collect();
    SimJumpsReport {
        ok: directions.iter().all(|d| d.exact || d.shared),
        directions,
    }
}
