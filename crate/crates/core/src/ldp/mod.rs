//! Rate functions and minimum-action problems.
//!
//! * [`poisson_ell`], [`hamiltonian`]: the building blocks `ℓ` and `H`.
//! * [`local_rate`], [`local_rate_primal`]: `L(x, β)` from both sides of the
//!   duality.
//! * [`path_action`]: `I(γ)` for piecewise-linear paths.
//! * [`minimize_action`], [`quasipotential`]: upper bounds on `J_t` and `V`.

mod action;
mod local;
mod minimize;
mod nnls;

pub use action::{
    path_action, perturb_path, rate_bound, reparametrization_bound, reparametrization_check, sanov_cost,
    segment_flows, superlinearity_bound_check, ActionReport, SuperlinearityCheck, QUADRATURE_SCHEME,
};
pub use local::{
    hamiltonian, local_rate, local_rate_primal, poisson_ell, HamiltonianEval, LocalRateResult, RateMethod,
    DIVERGENCE_NORM, EXP_CAP,
};
pub use minimize::{
    minimize_action, minimize_action_with, quasipotential, quasipotential_with, HorizonValue, MinimizeOptions,
    OptimizerDiagnostics, QuasipotentialOptions, QuasipotentialReport, StartReport, DEFAULT_HORIZONS,
    DEFAULT_KNOTS, FD_STEP,
};

#[cfg(test)]
mod tests;
