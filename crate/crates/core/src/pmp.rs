//! Optimality system of the control problems and the forward-backward sweep.
//!
//! For every variant the Hamiltonian is
//!
//! ```text
//! H = eta1 r - eta2 i - eta3 u^2 - eta4 p^2
//!   + l1 (-b s i - u s) + l2 (b s i - g e)
//!   + l3 (g e - m i - p r i) + l4 (m i + p r i + u s)
//! ```
//!
//! with `u` (resp. `p`) set to zero when the variant does not use it. Its
//! negated state gradient gives the costate equations
//!
//! ```text
//! l1' = l1 (b i + u) - l2 b i - l4 u
//! l2' = g (l2 - l3)
//! l3' = eta2 + (l1 - l2) b s + (l3 - l4)(m + p r)
//! l4' = -eta1 + (l3 - l4) p i
//! ```
//!
//! and maximizing `H` over the box gives
//! `u = clamp((l4 - l1) s / (2 eta3), 0, u_max)` and
//! `p = clamp((l4 - l3) r i / (2 eta4), 0, p_max)`.

use crate::dynamics::{
    integrate_forward, rhs_unchecked, rk4_step, ControlSignal, ControlVariant, ModelParams,
    StateFractions, TimeGrid, Trajectory,
};
use crate::error::{Error, Result};
use crate::objectives::{evaluate_cost, integrand, problem_spec, CostWeights, ProblemId};
use crate::report::{InitialGuess, Method, SolveReport};
use crate::scenario::Scenario;

/// Costate magnitude treated as divergence.
pub const ADJOINT_LIMIT: f64 = 1e6;

/// Costates paired with `(s, e, i, r)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AdjointVector {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
}

impl AdjointVector {
    pub const ZERO: Self = Self::from_array([0.0; 4]);

    pub const fn from_array(a: [f64; 4]) -> Self {
        Self {
            lambda1: a[0],
            lambda2: a[1],
            lambda3: a[2],
            lambda4: a[3],
        }
    }

    pub const fn to_array(self) -> [f64; 4] {
        [self.lambda1, self.lambda2, self.lambda3, self.lambda4]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjointTrajectory {
    pub grid: TimeGrid,
    pub costates: Vec<AdjointVector>,
}

/// Sweep settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FbsmConfig {
    /// Weight of the freshly characterized controls in the convex update.
    pub damping: f64,
    /// Stop once the stationarity residual falls below this.
    pub tol: f64,
    pub max_sweeps: usize,
    pub initial: InitialGuess,
}

impl Default for FbsmConfig {
    fn default() -> Self {
        Self {
            damping: 0.5,
            tol: 1e-4,
            max_sweeps: 1000,
            initial: InitialGuess::Zero,
        }
    }
}

impl FbsmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Validation {
                field: "damping".into(),
                message: format!("{} must lie in (0, 1]", self.damping),
            });
        }
        if !(self.tol > 0.0) {
            return Err(Error::Validation {
                field: "tol".into(),
                message: format!("{} must be positive", self.tol),
            });
        }
        if self.max_sweeps == 0 {
            return Err(Error::Validation {
                field: "max_sweeps".into(),
                message: "at least one sweep is required".into(),
            });
        }
        Ok(())
    }
}

fn active(variant: ControlVariant, u: f64, p: f64) -> (f64, f64) {
    (
        if variant.uses_vaccination() { u } else { 0.0 },
        if variant.uses_plasma() { p } else { 0.0 },
    )
}

pub fn hamiltonian(
    x: &StateFractions,
    lam: &AdjointVector,
    u: f64,
    p: f64,
    w: &CostWeights,
    params: &ModelParams,
    variant: ControlVariant,
) -> f64 {
    let dx = rhs_unchecked(x, params, u, p, variant);
    let l = lam.to_array();
    integrand(w, x, u, p) + (0..4).map(|k| l[k] * dx[k]).sum::<f64>()
}

/// Costate derivative `-dH/dx`.
pub fn adjoint_rhs(
    x: &StateFractions,
    lam: &AdjointVector,
    u: f64,
    p: f64,
    w: &CostWeights,
    params: &ModelParams,
    variant: ControlVariant,
) -> [f64; 4] {
    let (u, p) = active(variant, u, p);
    let ModelParams { beta, gamma, mu, .. } = *params;
    let AdjointVector {
        lambda1: l1,
        lambda2: l2,
        lambda3: l3,
        lambda4: l4,
    } = *lam;
    [
        l1 * (beta * x.i + u) - l2 * beta * x.i - l4 * u,
        gamma * (l2 - l3),
        w.eta2 + (l1 - l2) * beta * x.s + (l3 - l4) * (mu + p * x.r),
        -w.eta1 + (l3 - l4) * p * x.i,
    ]
}

/// `dH/du` and `dH/dp`; zero for controls the variant excludes.
pub fn control_sensitivity(
    x: &StateFractions,
    lam: &AdjointVector,
    u: f64,
    p: f64,
    w: &CostWeights,
    variant: ControlVariant,
) -> (f64, f64) {
    let du = if variant.uses_vaccination() {
        -2.0 * w.eta3 * u + (lam.lambda4 - lam.lambda1) * x.s
    } else {
        0.0
    };
    let dp = if variant.uses_plasma() {
        -2.0 * w.eta4 * p + (lam.lambda4 - lam.lambda3) * x.r * x.i
    } else {
        0.0
    };
    (du, dp)
}

// Maximizer of -weight v^2 + slope v over [0, bound]; bang-bang when the
// control is free of charge.
fn maximize_quadratic(weight: f64, slope: f64, bound: f64) -> f64 {
    if weight > 0.0 {
        (slope / (2.0 * weight)).clamp(0.0, bound)
    } else if slope > 0.0 {
        bound
    } else {
        0.0
    }
}

/// Pointwise maximizer of the Hamiltonian over the admissible box.
pub fn characterize_controls(
    x: &StateFractions,
    lam: &AdjointVector,
    w: &CostWeights,
    params: &ModelParams,
    variant: ControlVariant,
) -> (f64, f64) {
    let u = if variant.uses_vaccination() {
        maximize_quadratic(w.eta3, (lam.lambda4 - lam.lambda1) * x.s, params.u_max)
    } else {
        0.0
    };
    let p = if variant.uses_plasma() {
        maximize_quadratic(w.eta4, (lam.lambda4 - lam.lambda3) * x.r * x.i, params.p_max)
    } else {
        0.0
    };
    (u, p)
}

/// Integrates the costates backward from `lambda(T) = 0` with RK4, reading
/// states and controls by linear interpolation between nodes.
pub fn integrate_adjoint_backward(
    traj: &Trajectory,
    signal: &ControlSignal,
    w: &CostWeights,
    params: &ModelParams,
) -> Result<AdjointTrajectory> {
    let grid = traj.grid;
    if grid != *signal.grid() || traj.states.len() != grid.len() {
        return Err(Error::GridMismatch);
    }
    let h = grid.step();
    let variant = signal.variant();
    let n = grid.n_steps();
    let mut costates = vec![AdjointVector::ZERO; grid.len()];
    let mut y = [0.0; 4];
    for k in (0..n).rev() {
        let (xa, xb) = (traj.states[k].to_array(), traj.states[k + 1].to_array());
        y = rk4_step(&y, -h, |progress, lam| {
            let theta = 1.0 - progress;
            let x = if theta == 1.0 {
                xb
            } else if theta == 0.0 {
                xa
            } else {
                std::array::from_fn(|j| xa[j] + theta * (xb[j] - xa[j]))
            };
            let (u, p) = signal.interpolate(k, theta);
            adjoint_rhs(
                &StateFractions::from_array(x),
                &AdjointVector::from_array(*lam),
                u,
                p,
                w,
                params,
                variant,
            )
        });
        let magnitude = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(magnitude <= ADJOINT_LIMIT) {
            return Err(Error::AdjointDivergence {
                node: k,
                time: grid.time(k),
                magnitude,
            });
        }
        costates[k] = AdjointVector::from_array(y);
    }
    Ok(AdjointTrajectory { grid, costates })
}

/// Characterized controls at every node and their sup-norm distance to `signal`.
pub(crate) fn characterize_signal(
    traj: &Trajectory,
    adjoints: &AdjointTrajectory,
    signal: &ControlSignal,
    w: &CostWeights,
    params: &ModelParams,
) -> (ControlSignal, f64) {
    let variant = signal.variant();
    let mut target = ControlSignal::zeros(*signal.grid(), variant);
    let mut residual = 0.0f64;
    for k in 0..traj.grid.len() {
        let (u, p) =
            characterize_controls(&traj.states[k], &adjoints.costates[k], w, params, variant);
        target.u_mut()[k] = u;
        target.p_mut()[k] = p;
        residual = residual
            .max((u - signal.u()[k]).abs())
            .max((p - signal.p()[k]).abs());
    }
    (target, residual)
}

/// Forward-backward sweep with a damped convex control update.
pub fn solve_fbsm(scenario: &Scenario, id: ProblemId, cfg: &FbsmConfig) -> Result<SolveReport> {
    scenario.validate()?;
    cfg.validate()?;
    let (w, _) = problem_spec(id);
    let params = &scenario.params;
    let mut signal = cfg.initial.build(scenario.grid, id, params);
    let c = cfg.damping;
    let mut history = Vec::new();

    let mut sweeps = 0;
    loop {
        let traj = integrate_forward(&scenario.x0, params, &signal)?;
        let adjoints = integrate_adjoint_backward(&traj, &signal, &w, params)?;
        let objective = evaluate_cost(&w, &traj, &signal)?;
        history.push(objective);
        let (target, residual) = characterize_signal(&traj, &adjoints, &signal, &w, params);

        let converged = residual < cfg.tol;
        if converged || sweeps == cfg.max_sweeps {
            return Ok(SolveReport {
                problem: id,
                method: Method::Fbsm,
                trajectory: traj,
                controls: signal,
                adjoints: Some(adjoints),
                objective,
                iterations: sweeps,
                converged,
                stationarity_residual: residual,
                history,
            });
        }

        sweeps += 1;
        for (old, new) in signal.u_mut().iter_mut().zip(target.u()) {
            *old = c * new + (1.0 - c) * *old;
        }
        for (old, new) in signal.p_mut().iter_mut().zip(target.p()) {
            *old = c * new + (1.0 - c) * *old;
        }
    }
}
