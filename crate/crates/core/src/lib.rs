//! Optimal vaccination and plasma-transfusion control of the SEIR model.
//!
//! The state `(s, e, i, r)` evolves under vaccination `u` (susceptible to
//! recovered) and plasma transfusion `p` (infected to recovered at rate
//! `p r i`). Five problems maximize
//! `int eta1 r - eta2 i - eta3 u^2 - eta4 p^2 dt` over box-bounded controls;
//! each can be solved by a forward-backward sweep on the optimality system
//! ([`pmp::solve_fbsm`]) or by projected gradient ascent on the control
//! nodes ([`direct::solve_projected_gradient`]).

pub mod compare;
pub mod direct;
pub mod dynamics;
pub mod error;
pub mod io;
pub mod objectives;
pub mod pmp;
pub mod report;
pub mod scenario;

pub use compare::{compare_solutions, ComparisonMetrics, SolutionFeatures};
pub use direct::{
    finite_difference_gradient, objective_gradient, project_box, solve_projected_gradient,
    DirectConfig, GradientVector,
};
pub use dynamics::{
    controlled_rhs, integrate_forward, seir_rhs, ControlSignal, ControlVariant, ModelParams,
    StateFractions, TimeGrid, Trajectory,
};
pub use error::{Error, Result};
pub use objectives::{evaluate_cost, integrand, problem_spec, CostWeights, ProblemId};
pub use pmp::{
    adjoint_rhs, characterize_controls, hamiltonian, integrate_adjoint_backward, solve_fbsm,
    AdjointTrajectory, AdjointVector, FbsmConfig,
};
pub use report::{InitialGuess, Method, SolveReport};
pub use scenario::{parse_scenario, Scenario};

/// Solves `problem` on `scenario` with default solver settings.
pub fn solve(scenario: &Scenario, problem: ProblemId, method: Method) -> Result<SolveReport> {
    match method {
        Method::Fbsm => solve_fbsm(scenario, problem, &FbsmConfig::default()),
        Method::ProjectedGradient => {
            solve_projected_gradient(scenario, problem, &DirectConfig::default())
        }
    }
}

/// Runs the uncontrolled model on the scenario grid.
pub fn simulate(scenario: &Scenario) -> Result<(Trajectory, ControlSignal)> {
    scenario.validate()?;
    let signal = ControlSignal::zeros(scenario.grid, ControlVariant::Uncontrolled);
    let traj = integrate_forward(&scenario.x0, &scenario.params, &signal)?;
    Ok((traj, signal))
}
