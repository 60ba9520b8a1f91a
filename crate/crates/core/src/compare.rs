use crate::dynamics::{ControlSignal, Trajectory};
use crate::error::{Error, Result};
use crate::report::SolveReport;

/// Shape features of one solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolutionFeatures {
    /// Earliest node time where `u` attains its maximum.
    pub peak_time_u: f64,
    /// Earliest node time where `p` attains its maximum.
    pub peak_time_p: f64,
    pub max_i: f64,
    pub terminal_r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonMetrics {
    /// `|J_a - J_b|`.
    pub objective_gap: f64,
    /// Trapezoidal L2 distance between the control pairs `(u, p)`.
    pub control_l2_distance: f64,
    pub a: SolutionFeatures,
    pub b: SolutionFeatures,
}

/// Time of the first node holding the largest value.
pub fn peak_time(values: &[f64], signal: &ControlSignal) -> f64 {
    let mut best = 0;
    for (k, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = k;
        }
    }
    signal.grid().time(best)
}

pub fn features(traj: &Trajectory, controls: &ControlSignal) -> SolutionFeatures {
    SolutionFeatures {
        peak_time_u: peak_time(controls.u(), controls),
        peak_time_p: peak_time(controls.p(), controls),
        max_i: traj.max_infected(),
        terminal_r: traj.terminal().r,
    }
}

pub fn control_l2_distance(a: &ControlSignal, b: &ControlSignal) -> Result<f64> {
    if a.grid() != b.grid() {
        return Err(Error::GridMismatch);
    }
    let grid = a.grid();
    let sq = grid.integrate((0..grid.len()).map(|k| {
        let du = a.u()[k] - b.u()[k];
        let dp = a.p()[k] - b.p()[k];
        du * du + dp * dp
    }));
    Ok(sq.sqrt())
}

pub fn compare_solutions(a: &SolveReport, b: &SolveReport) -> Result<ComparisonMetrics> {
    if a.trajectory.grid != b.trajectory.grid {
        return Err(Error::GridMismatch);
    }
    Ok(ComparisonMetrics {
        objective_gap: (a.objective - b.objective).abs(),
        control_l2_distance: control_l2_distance(&a.controls, &b.controls)?,
        a: features(&a.trajectory, &a.controls),
        b: features(&b.trajectory, &b.controls),
    })
}
