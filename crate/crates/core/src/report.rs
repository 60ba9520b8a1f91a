use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{ControlSignal, ModelParams, TimeGrid, Trajectory};
use crate::objectives::ProblemId;
use crate::pmp::AdjointTrajectory;

/// Which solver produced a [`SolveReport`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Forward-backward sweep on the optimality system.
    Fbsm,
    /// Projected gradient ascent over the control nodes.
    ProjectedGradient,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Fbsm => "fbsm",
            Method::ProjectedGradient => "direct",
        })
    }
}

/// Starting controls for either solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitialGuess {
    #[default]
    Zero,
    /// Every active control at its upper bound.
    Max,
    /// Uniform samples in the admissible box from a seeded generator.
    Random { seed: u64 },
}

impl InitialGuess {
    pub fn build(
        self,
        grid: TimeGrid,
        problem: ProblemId,
        params: &ModelParams,
    ) -> ControlSignal {
        let variant = problem.variant();
        match self {
            InitialGuess::Zero => ControlSignal::zeros(grid, variant),
            InitialGuess::Max => ControlSignal::constant(grid, variant, params.u_max, params.p_max),
            InitialGuess::Random { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut signal = ControlSignal::zeros(grid, variant);
                if variant.uses_vaccination() {
                    for v in signal.u_mut() {
                        *v = rng.gen::<f64>() * params.u_max;
                    }
                }
                if variant.uses_plasma() {
                    for v in signal.p_mut() {
                        *v = rng.gen::<f64>() * params.p_max;
                    }
                }
                signal
            }
        }
    }
}

/// Outcome of a solve.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub problem: ProblemId,
    pub method: Method,
    pub trajectory: Trajectory,
    pub controls: ControlSignal,
    /// Costates of the final controls; only the sweep method keeps them.
    pub adjoints: Option<AdjointTrajectory>,
    pub objective: f64,
    /// Sweeps (indirect) or accepted gradient steps (direct).
    pub iterations: usize,
    pub converged: bool,
    /// Sup-norm gap between the controls and their pointwise characterization.
    pub stationarity_residual: f64,
    /// Objective after every sweep or accepted step, starting with the initial guess.
    pub history: Vec<f64>,
}
