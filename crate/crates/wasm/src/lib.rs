//! Browser bindings: each export takes scenario text in the `key = value`
//! format and returns JSON curves for the demo page in `www/`.

use serde::Serialize;
use seir_oc::{
    compare_solutions, parse_scenario, simulate as run_uncontrolled, solve as run_solver, Method,
    ProblemId, Scenario, SolveReport, Trajectory,
};
use wasm_bindgen::prelude::*;

/// Curves are thinned to at most this many points.
const MAX_POINTS: usize = 1001;

#[derive(Debug, Serialize)]
pub struct Curves {
    pub t: Vec<f64>,
    pub s: Vec<f64>,
    pub e: Vec<f64>,
    pub i: Vec<f64>,
    pub r: Vec<f64>,
    pub u: Vec<f64>,
    pub p: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct Solution {
    pub problem: String,
    pub method: String,
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
    pub curves: Curves,
}

#[derive(Debug, Serialize)]
pub struct Comparison {
    pub fbsm: Solution,
    pub direct: Solution,
    pub objective_gap: f64,
    pub control_l2_distance: f64,
}

fn curves(traj: &Trajectory, u: &[f64], p: &[f64]) -> Curves {
    let n = traj.states.len();
    let stride = n.div_ceil(MAX_POINTS).max(1);
    let mut idx: Vec<usize> = (0..n).step_by(stride).collect();
    if idx.last() != Some(&(n - 1)) {
        idx.push(n - 1);
    }
    let pick = |f: &dyn Fn(usize) -> f64| idx.iter().map(|&k| f(k)).collect();
    Curves {
        t: pick(&|k| traj.grid.time(k)),
        s: pick(&|k| traj.states[k].s),
        e: pick(&|k| traj.states[k].e),
        i: pick(&|k| traj.states[k].i),
        r: pick(&|k| traj.states[k].r),
        u: pick(&|k| u[k]),
        p: pick(&|k| p[k]),
    }
}

fn solution(report: &SolveReport) -> Solution {
    Solution {
        problem: report.problem.to_string(),
        method: report.method.to_string(),
        objective: report.objective,
        converged: report.converged,
        iterations: report.iterations,
        curves: curves(&report.trajectory, report.controls.u(), report.controls.p()),
    }
}

fn scenario(config: &str) -> Result<Scenario, String> {
    parse_scenario(config).map_err(|e| e.to_string())
}

fn problem(id: &str) -> Result<ProblemId, String> {
    id.parse().map_err(|_| format!("unknown problem `{id}`"))
}

pub fn simulate_curves(config: &str) -> Result<Curves, String> {
    let (traj, signal) = run_uncontrolled(&scenario(config)?).map_err(|e| e.to_string())?;
    Ok(curves(&traj, signal.u(), signal.p()))
}

pub fn solve_problem(config: &str, id: &str, method: &str) -> Result<Solution, String> {
    let method = match method {
        "fbsm" => Method::Fbsm,
        "direct" => Method::ProjectedGradient,
        other => return Err(format!("unknown method `{other}`")),
    };
    let report = run_solver(&scenario(config)?, problem(id)?, method).map_err(|e| e.to_string())?;
    Ok(solution(&report))
}

pub fn compare_methods(config: &str, id: &str) -> Result<Comparison, String> {
    let scenario = scenario(config)?;
    let id = problem(id)?;
    let a = run_solver(&scenario, id, Method::Fbsm).map_err(|e| e.to_string())?;
    let b = run_solver(&scenario, id, Method::ProjectedGradient).map_err(|e| e.to_string())?;
    let m = compare_solutions(&a, &b).map_err(|e| e.to_string())?;
    Ok(Comparison {
        fbsm: solution(&a),
        direct: solution(&b),
        objective_gap: m.objective_gap,
        control_l2_distance: m.control_l2_distance,
    })
}

fn to_js<T: Serialize>(value: Result<T, String>) -> Result<String, JsValue> {
    value
        .and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string()))
        .map_err(|e| JsValue::from_str(&e))
}

/// Uncontrolled run as JSON curves.
#[wasm_bindgen]
pub fn simulate(config: &str) -> Result<String, JsValue> {
    to_js(simulate_curves(config))
}

/// Optimal controls for `problem` (`oc1`..`oc5`) with `method` (`fbsm` or `direct`).
#[wasm_bindgen]
pub fn solve(config: &str, problem: &str, method: &str) -> Result<String, JsValue> {
    to_js(solve_problem(config, problem, method))
}

/// Both solvers on one problem, with their objective gap and control distance.
#[wasm_bindgen]
pub fn compare(config: &str, problem: &str) -> Result<String, JsValue> {
    to_js(compare_methods(config, problem))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curves_are_thinned_and_keep_the_end() {
        let c = simulate_curves("T = 100\n").unwrap();
        assert!(c.t.len() <= MAX_POINTS + 1);
        assert_eq!(*c.t.last().unwrap(), 100.0);
        assert!(*c.r.last().unwrap() > 0.4);
    }

    #[test]
    fn solvers_agree_through_the_bindings() {
        let cmp = compare_methods("", "oc5").unwrap();
        assert!(cmp.fbsm.converged && cmp.direct.converged);
        assert!(cmp.objective_gap < 1e-3 * (1.0 + cmp.fbsm.objective.abs()));
        let json = serde_json::to_string(&cmp).unwrap();
        assert!(json.contains("\"objective_gap\""));
    }

    #[test]
    fn bad_input_is_reported() {
        assert!(solve_problem("", "oc7", "fbsm").is_err());
        assert!(solve_problem("", "oc1", "newton").is_err());
        assert!(simulate_curves("beta = -1\n").is_err());
    }
}
