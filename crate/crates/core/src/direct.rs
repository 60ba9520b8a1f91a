//! Single-shooting direct solver: projected gradient ascent on the control
//! node values, with adjoint gradients and a finite-difference oracle.

use crate::dynamics::{
    integrate_forward, integrate_forward_unchecked, rhs_unchecked, ControlSignal,
    ControlVariant, ModelParams, StateFractions, Trajectory,
};
use crate::error::{Error, Result};
use crate::objectives::{evaluate_cost, problem_spec, CostWeights, ProblemId};
use crate::pmp::{control_sensitivity, integrate_adjoint_backward};
use crate::report::{InitialGuess, Method, SolveReport};
use crate::scenario::Scenario;

/// Partial derivatives of the objective with respect to every node value.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector {
    pub du: Vec<f64>,
    pub dp: Vec<f64>,
}

impl GradientVector {
    pub fn max_abs(&self) -> f64 {
        self.du.iter().chain(&self.dp).fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Which control a node value belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Vaccination,
    Plasma,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectConfig {
    pub initial_step: f64,
    /// Backtracking factor in `(0, 1)`.
    pub shrink: f64,
    /// Armijo constant.
    pub sufficient_increase: f64,
    /// Stop once the sup-norm of the projected gradient step falls below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Line search gives up below this step.
    pub min_step: f64,
    pub initial: InitialGuess,
}

impl Default for DirectConfig {
    fn default() -> Self {
        Self {
            initial_step: 1.0,
            shrink: 0.5,
            sufficient_increase: 1e-4,
            tol: 1e-5,
            max_iter: 5000,
            min_step: 1e-10,
            initial: InitialGuess::Zero,
        }
    }
}

impl DirectConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, message: String| {
            Err(Error::Validation {
                field: field.into(),
                message,
            })
        };
        if !(self.initial_step > 0.0) {
            return fail("initial_step", format!("{} must be positive", self.initial_step));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return fail("shrink", format!("{} must lie in (0, 1)", self.shrink));
        }
        if !(self.sufficient_increase >= 0.0 && self.sufficient_increase < 1.0) {
            return fail(
                "sufficient_increase",
                format!("{} must lie in [0, 1)", self.sufficient_increase),
            );
        }
        if !(self.tol > 0.0) {
            return fail("tol", format!("{} must be positive", self.tol));
        }
        if !(self.min_step > 0.0) {
            return fail("min_step", format!("{} must be positive", self.min_step));
        }
        Ok(())
    }
}

/// Componentwise clamp onto `[0, u_max] x [0, p_max]`.
pub fn project_box(signal: &ControlSignal, params: &ModelParams) -> ControlSignal {
    let mut out = signal.clone();
    for v in out.u_mut() {
        *v = v.clamp(0.0, params.u_max);
    }
    for v in out.p_mut() {
        *v = v.clamp(0.0, params.p_max);
    }
    out
}

fn check_signal(signal: &ControlSignal, scenario: &Scenario, id: ProblemId) -> Result<()> {
    if *signal.grid() != scenario.grid {
        return Err(Error::GridMismatch);
    }
    if signal.variant() != id.variant() {
        return Err(Error::InvalidSignal(format!(
            "{id} needs {:?} controls, got {:?}",
            id.variant(),
            signal.variant()
        )));
    }
    Ok(())
}

fn objective_only(signal: &ControlSignal, scenario: &Scenario, w: &CostWeights) -> Result<f64> {
    let trajectory = integrate_forward_unchecked(&scenario.x0, &scenario.params, signal)?;
    evaluate_cost(w, &trajectory, signal)
}

/// `J_x(f)^T v` for the controlled vector field at `x`.
fn state_vjp(
    x: &[f64; 4],
    v: &[f64; 4],
    (u, p): (f64, f64),
    params: &ModelParams,
    variant: ControlVariant,
) -> [f64; 4] {
    let [s, _, i, r] = *x;
    let [vs, ve, vi, vr] = *v;
    let ModelParams { beta, gamma, mu, .. } = *params;
    let u = if variant.uses_vaccination() { u } else { 0.0 };
    let p = if variant.uses_plasma() { p } else { 0.0 };
    [
        (ve - vs) * beta * i + (vr - vs) * u,
        gamma * (vi - ve),
        (ve - vs) * beta * s + (vr - vi) * (mu + p * r),
        (vr - vi) * p * i,
    ]
}

/// `J_(u,p)(f)^T v`.
fn control_vjp(x: &[f64; 4], v: &[f64; 4], variant: ControlVariant) -> (f64, f64) {
    let [s, _, i, r] = *x;
    let du = if variant.uses_vaccination() { (v[3] - v[0]) * s } else { 0.0 };
    let dp = if variant.uses_plasma() { (v[3] - v[2]) * r * i } else { 0.0 };
    (du, dp)
}

fn axpy(x: &[f64; 4], a: f64, y: &[f64; 4]) -> [f64; 4] {
    std::array::from_fn(|j| x[j] + a * y[j])
}

struct Evaluation {
    objective: f64,
    trajectory: Trajectory,
    gradient: GradientVector,
}

/// Objective and its exact gradient for the discretized problem, by
/// reverse-mode differentiation of the RK4 steps and the trapezoidal cost.
fn evaluate(signal: &ControlSignal, scenario: &Scenario, w: &CostWeights) -> Result<Evaluation> {
    let params = &scenario.params;
    let trajectory = integrate_forward(&scenario.x0, params, signal)?;
    let objective = evaluate_cost(w, &trajectory, signal)?;

    let grid = *signal.grid();
    let h = grid.step();
    let n = grid.n_steps();
    let variant = signal.variant();
    let cost_state_gradient = [0.0, 0.0, -w.eta2, w.eta1];
    let mut gradient = GradientVector {
        du: vec![0.0; grid.len()],
        dp: vec![0.0; grid.len()],
    };
    for k in 0..grid.len() {
        let weight = grid.trapezoid_weight(k);
        if variant.uses_vaccination() {
            gradient.du[k] = -2.0 * w.eta3 * signal.u()[k] * weight;
        }
        if variant.uses_plasma() {
            gradient.dp[k] = -2.0 * w.eta4 * signal.p()[k] * weight;
        }
    }

    let f = |y: &[f64; 4], (u, p): (f64, f64)| {
        rhs_unchecked(&StateFractions::from_array(*y), params, u, p, variant)
    };
    // adj = dJ/dx_k
    let mut adj = cost_state_gradient.map(|g| g * grid.trapezoid_weight(n));
    for k in (0..n).rev() {
        let c1 = signal.interpolate(k, 0.0);
        let cm = signal.interpolate(k, 0.5);
        let c2 = signal.interpolate(k, 1.0);
        let y1 = trajectory.states[k].to_array();
        let y2 = axpy(&y1, 0.5 * h, &f(&y1, c1));
        let y3 = axpy(&y1, 0.5 * h, &f(&y2, cm));
        let y4 = axpy(&y1, h, &f(&y3, cm));

        let bar_k4 = adj.map(|a| a * h / 6.0);
        let mut bar_x = adj;

        let bar_y4 = state_vjp(&y4, &bar_k4, c2, params, variant);
        let (mut bar_u2, mut bar_p2) = control_vjp(&y4, &bar_k4, variant);
        bar_x = axpy(&bar_x, 1.0, &bar_y4);
        let bar_k3 = axpy(&adj.map(|a| a * h / 3.0), h, &bar_y4);

        let bar_y3 = state_vjp(&y3, &bar_k3, cm, params, variant);
        let (mut bar_um, mut bar_pm) = control_vjp(&y3, &bar_k3, variant);
        bar_x = axpy(&bar_x, 1.0, &bar_y3);
        let bar_k2 = axpy(&adj.map(|a| a * h / 3.0), 0.5 * h, &bar_y3);

        let bar_y2 = state_vjp(&y2, &bar_k2, cm, params, variant);
        let (du, dp) = control_vjp(&y2, &bar_k2, variant);
        bar_um += du;
        bar_pm += dp;
        bar_x = axpy(&bar_x, 1.0, &bar_y2);
        let bar_k1 = axpy(&bar_k4, 0.5 * h, &bar_y2);

        let bar_y1 = state_vjp(&y1, &bar_k1, c1, params, variant);
        let (bar_u1, bar_p1) = control_vjp(&y1, &bar_k1, variant);
        bar_x = axpy(&bar_x, 1.0, &bar_y1);

        bar_u2 += 0.5 * bar_um;
        bar_p2 += 0.5 * bar_pm;
        gradient.du[k] += bar_u1 + 0.5 * bar_um;
        gradient.dp[k] += bar_p1 + 0.5 * bar_pm;
        gradient.du[k + 1] += bar_u2;
        gradient.dp[k + 1] += bar_p2;

        adj = axpy(&bar_x, grid.trapezoid_weight(k), &cost_state_gradient);
    }

    Ok(Evaluation {
        objective,
        trajectory,
        gradient,
    })
}

/// Gradient of the discretized objective with respect to the control node
/// values, exact up to roundoff.
pub fn objective_gradient(
    signal: &ControlSignal,
    scenario: &Scenario,
    id: ProblemId,
) -> Result<GradientVector> {
    check_signal(signal, scenario, id)?;
    Ok(evaluate(signal, scenario, &id.weights())?.gradient)
}

/// Node gradient assembled from the continuous costates.
///
/// Node `k` moves the control along the hat function `phi_k`, so the state
/// coupling contributes `int (l4 - l1) s phi_k dt` (and the plasma analogue),
/// evaluated with the piecewise-linear mass matrix. The running cost is
/// differentiated in its trapezoidal form, `-2 eta3 u_k w_k`. Interior nodes
/// of smooth signals agree with [`objective_gradient`] to O(h^2); the two
/// end nodes only to O(h).
pub fn continuous_adjoint_gradient(
    signal: &ControlSignal,
    scenario: &Scenario,
    id: ProblemId,
) -> Result<GradientVector> {
    check_signal(signal, scenario, id)?;
    let w = id.weights();
    let trajectory = integrate_forward(&scenario.x0, &scenario.params, signal)?;
    let adjoints = integrate_adjoint_backward(&trajectory, signal, &w, &scenario.params)?;
    let grid = signal.grid();
    let n = grid.len();
    let variant = signal.variant();
    let zero_cost = CostWeights {
        eta3: 0.0,
        eta4: 0.0,
        ..w
    };
    let mut coupling_u = vec![0.0; n];
    let mut coupling_p = vec![0.0; n];
    for k in 0..n {
        let (du, dp) = control_sensitivity(
            &trajectory.states[k],
            &adjoints.costates[k],
            0.0,
            0.0,
            &zero_cost,
            variant,
        );
        coupling_u[k] = du;
        coupling_p[k] = dp;
    }
    let mass = |v: &[f64], k: usize| -> f64 {
        let h = grid.step();
        let left = if k > 0 { v[k - 1] / 6.0 + v[k] / 3.0 } else { 0.0 };
        let right = if k + 1 < n { v[k] / 3.0 + v[k + 1] / 6.0 } else { 0.0 };
        h * (left + right)
    };
    let mut g = GradientVector {
        du: vec![0.0; n],
        dp: vec![0.0; n],
    };
    for k in 0..n {
        let weight = grid.trapezoid_weight(k);
        if variant.uses_vaccination() {
            g.du[k] = mass(&coupling_u, k) - 2.0 * w.eta3 * signal.u()[k] * weight;
        }
        if variant.uses_plasma() {
            g.dp[k] = mass(&coupling_p, k) - 2.0 * w.eta4 * signal.p()[k] * weight;
        }
    }
    Ok(g)
}


/// Central difference of the objective in one node value. The perturbed
/// signal is not clamped.
pub fn finite_difference_partial(
    signal: &ControlSignal,
    scenario: &Scenario,
    id: ProblemId,
    control: Control,
    node: usize,
    delta: f64,
) -> Result<f64> {
    check_signal(signal, scenario, id)?;
    let active = match control {
        Control::Vaccination => signal.variant().uses_vaccination(),
        Control::Plasma => signal.variant().uses_plasma(),
    };
    if !active {
        return Ok(0.0);
    }
    let w = id.weights();
    let mut probe = signal.clone();
    let mut shifted = |d: f64| -> Result<f64> {
        let values = match control {
            Control::Vaccination => probe.u_mut(),
            Control::Plasma => probe.p_mut(),
        };
        let original = values[node];
        values[node] = original + d;
        let j = objective_only(&probe, scenario, &w);
        let values = match control {
            Control::Vaccination => probe.u_mut(),
            Control::Plasma => probe.p_mut(),
        };
        values[node] = original;
        j
    };
    let plus = shifted(delta)?;
    let minus = shifted(-delta)?;
    Ok((plus - minus) / (2.0 * delta))
}

/// Central-difference gradient over every node of every active control.
pub fn finite_difference_gradient(
    signal: &ControlSignal,
    scenario: &Scenario,
    id: ProblemId,
    delta: f64,
) -> Result<GradientVector> {
    if !(delta > 0.0) {
        return Err(Error::Validation {
            field: "delta".into(),
            message: format!("{delta} must be positive"),
        });
    }
    let n = signal.grid().len();
    let mut g = GradientVector {
        du: vec![0.0; n],
        dp: vec![0.0; n],
    };
    for k in 0..n {
        g.du[k] = finite_difference_partial(signal, scenario, id, Control::Vaccination, k, delta)?;
        g.dp[k] = finite_difference_partial(signal, scenario, id, Control::Plasma, k, delta)?;
    }
    Ok(g)
}

fn step_along(
    signal: &ControlSignal,
    direction: &GradientVector,
    step: f64,
    params: &ModelParams,
) -> ControlSignal {
    let mut out = signal.clone();
    if signal.variant().uses_vaccination() {
        for (v, d) in out.u_mut().iter_mut().zip(&direction.du) {
            *v = (*v + step * d).clamp(0.0, params.u_max);
        }
    }
    if signal.variant().uses_plasma() {
        for (v, d) in out.p_mut().iter_mut().zip(&direction.dp) {
            *v = (*v + step * d).clamp(0.0, params.p_max);
        }
    }
    out
}

// Weighted squared L2 norm and sup norm of (a - b).
fn distances(a: &ControlSignal, b: &ControlSignal) -> (f64, f64) {
    let grid = a.grid();
    let mut l2 = 0.0;
    let mut sup = 0.0f64;
    for k in 0..grid.len() {
        let du = a.u()[k] - b.u()[k];
        let dp = a.p()[k] - b.p()[k];
        l2 += grid.trapezoid_weight(k) * (du * du + dp * dp);
        sup = sup.max(du.abs()).max(dp.abs());
    }
    (l2, sup)
}

/// Node gradient divided by the quadrature weights: the gradient in the
/// L2(t0, T) metric, so step sizes do not depend on the grid resolution.
fn l2_direction(gradient: &GradientVector, signal: &ControlSignal) -> GradientVector {
    let grid = signal.grid();
    let scale = |g: &[f64]| -> Vec<f64> {
        g.iter().enumerate().map(|(k, v)| v / grid.trapezoid_weight(k)).collect()
    };
    GradientVector {
        du: scale(&gradient.du),
        dp: scale(&gradient.dp),
    }
}

/// Sup distance between the controls and the pointwise maximizers of the
/// discrete Hamiltonian implied by the L2 gradient `d`.
fn stationarity_residual(
    signal: &ControlSignal,
    d: &GradientVector,
    w: &CostWeights,
    params: &ModelParams,
) -> f64 {
    let target = |c: f64, d: f64, eta: f64, bound: f64| {
        if eta > 0.0 {
            (c + d / (2.0 * eta)).clamp(0.0, bound)
        } else if d > 0.0 {
            bound
        } else if d < 0.0 {
            0.0
        } else {
            c
        }
    };
    let variant = signal.variant();
    let mut worst = 0.0f64;
    for k in 0..signal.grid().len() {
        if variant.uses_vaccination() {
            let c = signal.u()[k];
            worst = worst.max((target(c, d.du[k], w.eta3, params.u_max) - c).abs());
        }
        if variant.uses_plasma() {
            let c = signal.p()[k];
            worst = worst.max((target(c, d.dp[k], w.eta4, params.p_max) - c).abs());
        }
    }
    worst
}

/// Projected gradient ascent with Armijo backtracking along the projection arc.
pub fn solve_projected_gradient(
    scenario: &Scenario,
    id: ProblemId,
    cfg: &DirectConfig,
) -> Result<SolveReport> {
    scenario.validate()?;
    cfg.validate()?;
    let (w, _) = problem_spec(id);
    let params = &scenario.params;

    let mut signal = project_box(&cfg.initial.build(scenario.grid, id, params), params);
    let mut eval = evaluate(&signal, scenario, &w)?;
    let mut direction = l2_direction(&eval.gradient, &signal);
    let mut history = vec![eval.objective];
    let mut iterations = 0;
    let mut converged = false;

    loop {
        let (_, pg_sup) = distances(&step_along(&signal, &direction, 1.0, params), &signal);
        if pg_sup < cfg.tol {
            converged = true;
            break;
        }
        if iterations >= cfg.max_iter {
            break;
        }

        let mut step = cfg.initial_step;
        let accepted = loop {
            let candidate = step_along(&signal, &direction, step, params);
            let (moved, _) = distances(&candidate, &signal);
            let objective = objective_only(&candidate, scenario, &w)?;
            // moved = step^2 |G_step|^2 with G_step the gradient mapping
            if objective >= eval.objective + cfg.sufficient_increase * moved / step {
                break Some(candidate);
            }
            step *= cfg.shrink;
            if step < cfg.min_step {
                break None;
            }
        };
        let Some(candidate) = accepted else {
            break;
        };
        signal = candidate;
        eval = evaluate(&signal, scenario, &w)?;
        direction = l2_direction(&eval.gradient, &signal);
        history.push(eval.objective);
        iterations += 1;
    }

    let residual = stationarity_residual(&signal, &direction, &w, params);

    Ok(SolveReport {
        problem: id,
        method: Method::ProjectedGradient,
        trajectory: eval.trajectory,
        controls: signal,
        adjoints: None,
        objective: eval.objective,
        iterations,
        converged,
        stationarity_residual: residual,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{ControlVariant, TimeGrid};
    use approx::assert_abs_diff_eq;

    #[test]
    fn projection_clamps_and_is_idempotent() {
        let params = ModelParams::default();
        let grid = TimeGrid::new(0.0, 1.0, 3).unwrap();
        let raw = ControlSignal::from_values(
            grid,
            ControlVariant::Both,
            vec![0.7, -0.2, 0.25, 0.5],
            vec![0.1, 0.31, -1.0, 0.0],
        )
        .unwrap();
        let projected = project_box(&raw, &params);
        assert_eq!(projected.u(), &[0.5, 0.0, 0.25, 0.5]);
        assert_eq!(projected.p(), &[0.1, 0.3, 0.0, 0.0]);
        assert_eq!(project_box(&projected, &params), projected);
    }

    #[test]
    fn quadratic_control_cost_gradient() {
        // no susceptibles and no infectives: OC1 reduces to -sum w_k u_k^2
        let mut scenario = Scenario::default();
        scenario.grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
        scenario.x0 = crate::dynamics::StateFractions::from_array([0.0, 0.0, 0.0, 1.0]);
        let grid = scenario.grid;
        let u: Vec<f64> = (0..grid.len()).map(|k| 0.04 * k as f64).collect();
        let signal =
            ControlSignal::from_values(grid, ControlVariant::VaccinationOnly, u.clone(), vec![0.0; 11])
                .unwrap();
        let fd = finite_difference_gradient(&signal, &scenario, ProblemId::OC1, 1e-5).unwrap();
        for k in 0..grid.len() {
            assert_abs_diff_eq!(fd.du[k], -2.0 * u[k] * grid.trapezoid_weight(k), epsilon = 1e-9);
        }
        assert!(fd.dp.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_vanishes_without_control_coupling() {
        let mut scenario = Scenario::default();
        scenario.grid = TimeGrid::new(0.0, 2.0, 20).unwrap();
        scenario.x0 = crate::dynamics::StateFractions::from_array([0.0, 0.3, 0.3, 0.4]);
        // without susceptibles vaccination moves nobody, and u^2 is flat at u = 0
        let signal = ControlSignal::zeros(scenario.grid, ControlVariant::VaccinationOnly);
        let fd = finite_difference_gradient(&signal, &scenario, ProblemId::OC1, 1e-5).unwrap();
        assert!(fd.max_abs() < 1e-12, "{}", fd.max_abs());
        let adj = objective_gradient(&signal, &scenario, ProblemId::OC1).unwrap();
        assert!(adj.max_abs() < 1e-12);
    }

    #[test]
    fn early_vaccination_pays_off() {
        let scenario = Scenario::default();
        let signal = ControlSignal::zeros(scenario.grid, ControlVariant::VaccinationOnly);
        let g = objective_gradient(&signal, &scenario, ProblemId::OC1).unwrap();
        assert!(g.du[..500].iter().all(|&v| v > 0.0));
        for k in [0, 100, 400] {
            let fd = finite_difference_partial(
                &signal,
                &scenario,
                ProblemId::OC1,
                Control::Vaccination,
                k,
                1e-5,
            )
            .unwrap();
            assert!((g.du[k] - fd).abs() <= 1e-4 * fd.abs(), "node {k}: {} vs {fd}", g.du[k]);
        }
    }

    #[test]
    fn discrete_gradient_matches_differences_at_the_end_nodes() {
        let mut scenario = Scenario::default();
        scenario.grid = TimeGrid::new(0.0, 20.0, 200).unwrap();
        for id in ProblemId::ALL {
            let signal = InitialGuess::Random { seed: 7 }.build(scenario.grid, id, &scenario.params);
            let g = objective_gradient(&signal, &scenario, id).unwrap();
            let fd = finite_difference_gradient(&signal, &scenario, id, 1e-5).unwrap();
            for k in [0, 1, 99, 199, 200] {
                assert_abs_diff_eq!(g.du[k], fd.du[k], epsilon = 1e-9);
                assert_abs_diff_eq!(g.dp[k], fd.dp[k], epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn continuous_gradient_agrees_in_the_interior() {
        let scenario = Scenario::default();
        let signal = ControlSignal::constant(scenario.grid, ControlVariant::Both, 0.2, 0.1);
        let exact = objective_gradient(&signal, &scenario, ProblemId::OC5).unwrap();
        let approx = continuous_adjoint_gradient(&signal, &scenario, ProblemId::OC5).unwrap();
        for k in (100..1900).step_by(150) {
            assert!((exact.du[k] - approx.du[k]).abs() <= 1e-4 * exact.du[k].abs());
            assert!((exact.dp[k] - approx.dp[k]).abs() <= 1e-4 * exact.dp[k].abs().max(1e-9));
        }
    }

    #[test]
    fn rejects_mismatched_signals() {
        let scenario = Scenario::default();
        let wrong = ControlSignal::zeros(scenario.grid, ControlVariant::PlasmaOnly);
        assert!(objective_gradient(&wrong, &scenario, ProblemId::OC1).is_err());
        let coarse =
            ControlSignal::zeros(TimeGrid::new(0.0, 20.0, 10).unwrap(), ControlVariant::VaccinationOnly);
        assert!(matches!(
            objective_gradient(&coarse, &scenario, ProblemId::OC1),
            Err(Error::GridMismatch)
        ));
        assert!(finite_difference_gradient(&coarse, &scenario, ProblemId::OC1, 0.0).is_err());
    }

    #[test]
    fn degenerate_box_returns_the_uncontrolled_run() {
        let mut scenario = Scenario::default();
        scenario.params = scenario.params.without_controls();
        let report =
            solve_projected_gradient(&scenario, ProblemId::OC5, &DirectConfig::default()).unwrap();
        assert_eq!(report.iterations, 0);
        assert!(report.converged);
        assert!(report.controls.u().iter().chain(report.controls.p()).all(|&v| v == 0.0));
    }

    #[test]
    fn config_validation() {
        let bad = DirectConfig {
            shrink: 1.0,
            ..DirectConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = DirectConfig {
            initial_step: 0.0,
            ..DirectConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
