//! Running-cost family `eta1*r - eta2*i - eta3*u^2 - eta4*p^2` and the five
//! named problems built from it.

use std::fmt;
use std::str::FromStr;

use crate::dynamics::{ControlSignal, ControlVariant, StateFractions, Trajectory};
use crate::error::{Error, Result};

/// Nonnegative weights on `r`, `i`, `u^2` and `p^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostWeights {
    pub eta1: f64,
    pub eta2: f64,
    pub eta3: f64,
    pub eta4: f64,
}

impl CostWeights {
    pub const fn new(eta1: f64, eta2: f64, eta3: f64, eta4: f64) -> Self {
        Self {
            eta1,
            eta2,
            eta3,
            eta4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.eta1, self.eta2, self.eta3, self.eta4];
        if all.iter().all(|w| w.is_finite() && *w >= 0.0) {
            Ok(())
        } else {
            Err(Error::Validation {
                field: "weights".into(),
                message: format!("{all:?} must be finite and nonnegative"),
            })
        }
    }
}

/// The five vaccination / plasma problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProblemId {
    OC1,
    OC2,
    OC3,
    OC4,
    OC5,
}

impl ProblemId {
    pub const ALL: [ProblemId; 5] = [Self::OC1, Self::OC2, Self::OC3, Self::OC4, Self::OC5];

    pub fn weights(self) -> CostWeights {
        problem_spec(self).0
    }

    pub fn variant(self) -> ControlVariant {
        problem_spec(self).1
    }
}

impl fmt::Display for ProblemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = *self as usize + 1;
        write!(f, "oc{n}")
    }
}

impl FromStr for ProblemId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "oc1" => Ok(Self::OC1),
            "oc2" => Ok(Self::OC2),
            "oc3" => Ok(Self::OC3),
            "oc4" => Ok(Self::OC4),
            "oc5" => Ok(Self::OC5),
            _ => Err(Error::Validation {
                field: "problem".into(),
                message: format!("unknown problem `{s}`, expected oc1..oc5"),
            }),
        }
    }
}

/// Weights and controlled system of each problem.
pub fn problem_spec(id: ProblemId) -> (CostWeights, ControlVariant) {
    use ControlVariant::*;
    match id {
        ProblemId::OC1 => (CostWeights::new(0.0, 1.0, 1.0, 0.0), VaccinationOnly),
        ProblemId::OC2 => (CostWeights::new(1.0, 1.0, 1.0, 0.0), VaccinationOnly),
        ProblemId::OC3 => (CostWeights::new(0.0, 1.0, 0.0, 1.0), PlasmaOnly),
        ProblemId::OC4 => (CostWeights::new(1.0, 1.0, 0.0, 1.0), PlasmaOnly),
        ProblemId::OC5 => (CostWeights::new(0.0, 1.0, 1.0, 1.0), Both),
    }
}

pub fn integrand(w: &CostWeights, x: &StateFractions, u: f64, p: f64) -> f64 {
    w.eta1 * x.r - w.eta2 * x.i - w.eta3 * u * u - w.eta4 * p * p
}

/// Trapezoidal quadrature of the running cost on the shared grid.
pub fn evaluate_cost(w: &CostWeights, traj: &Trajectory, signal: &ControlSignal) -> Result<f64> {
    if traj.grid != *signal.grid() || traj.states.len() != traj.grid.len() {
        return Err(Error::GridMismatch);
    }
    let values = traj
        .states
        .iter()
        .zip(signal.u().iter().zip(signal.p()))
        .map(|(x, (&u, &p))| integrand(w, x, u, p));
    Ok(traj.grid.integrate(values))
}
