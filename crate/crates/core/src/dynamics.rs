//! SEIR state, the controlled vector fields and the fixed-step integrator.

use crate::error::{Error, Result};

/// Slack allowed around the probability simplex for a valid state.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Drift beyond which a computed trajectory is rejected.
pub const DRIFT_LIMIT: f64 = 1e-6;

/// Time derivative of `(s, e, i, r)`.
pub type Derivative = [f64; 4];

/// Population fractions `(s, e, i, r)` on the probability simplex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateFractions {
    pub s: f64,
    pub e: f64,
    pub i: f64,
    pub r: f64,
}

impl StateFractions {
    pub fn new(s: f64, e: f64, i: f64, r: f64) -> Result<Self> {
        let x = Self { s, e, i, r };
        x.validate()?;
        Ok(x)
    }

    pub const fn from_array(a: [f64; 4]) -> Self {
        Self {
            s: a[0],
            e: a[1],
            i: a[2],
            r: a[3],
        }
    }

    pub const fn to_array(self) -> [f64; 4] {
        [self.s, self.e, self.i, self.r]
    }

    pub fn sum(&self) -> f64 {
        self.s + self.e + self.i + self.r
    }

    pub fn min_component(&self) -> f64 {
        self.s.min(self.e).min(self.i).min(self.r)
    }

    /// Checks the balance condition and the component ranges.
    pub fn validate(&self) -> Result<()> {
        let names = ["s", "e", "i", "r"];
        for (name, v) in names.iter().zip(self.to_array()) {
            if !v.is_finite() || !(-SIMPLEX_TOL..=1.0 + SIMPLEX_TOL).contains(&v) {
                return Err(Error::InvalidState(format!("{name} = {v} outside [0, 1]")));
            }
        }
        let sum = self.sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidState(format!(
                "fractions sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }
}

/// Epidemic rates and control bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Transmission coefficient.
    pub beta: f64,
    /// Rate at which exposed individuals become infectious.
    pub gamma: f64,
    /// Recovery rate.
    pub mu: f64,
    /// Upper bound of the vaccination rate.
    pub u_max: f64,
    /// Upper bound of the plasma-transfusion rate.
    pub p_max: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            beta: 0.3,
            gamma: 0.1887,
            mu: 0.1,
            u_max: 0.5,
            p_max: 0.3,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("beta", self.beta), ("gamma", self.gamma), ("mu", self.mu)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParams(format!("{name} = {v} must be positive")));
            }
        }
        for (name, v) in [("u_max", self.u_max), ("p_max", self.p_max)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParams(format!("{name} = {v} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Same rates with both control bounds set to zero.
    pub fn without_controls(self) -> Self {
        Self {
            u_max: 0.0,
            p_max: 0.0,
            ..self
        }
    }
}

/// Which control terms enter the dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ControlVariant {
    Uncontrolled,
    VaccinationOnly,
    PlasmaOnly,
    Both,
}

impl ControlVariant {
    pub const fn uses_vaccination(self) -> bool {
        matches!(self, Self::VaccinationOnly | Self::Both)
    }

    pub const fn uses_plasma(self) -> bool {
        matches!(self, Self::PlasmaOnly | Self::Both)
    }
}

/// Uniform grid `t0 < t0 + h < ... < t_end` with `n_steps` intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t0: f64,
    t_end: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t_end: f64, n_steps: usize) -> Result<Self> {
        if !(t0.is_finite() && t_end.is_finite()) || t_end <= t0 {
            return Err(Error::InvalidGrid(format!(
                "horizon [{t0}, {t_end}] is empty"
            )));
        }
        if n_steps < 2 {
            return Err(Error::InvalidGrid(format!(
                "n_steps = {n_steps}, need at least 2"
            )));
        }
        Ok(Self { t0, t_end, n_steps })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of nodes, `n_steps + 1`.
    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        (self.t_end - self.t0) / self.n_steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.t_end
        } else {
            self.t0 + (self.t_end - self.t0) * (k as f64 / self.n_steps as f64)
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|k| self.time(k))
    }

    /// Trapezoidal quadrature weight of node `k`.
    pub fn trapezoid_weight(&self, k: usize) -> f64 {
        let h = self.step();
        if k == 0 || k == self.n_steps {
            0.5 * h
        } else {
            h
        }
    }

    /// Trapezoidal rule over node values, with compensated (Neumaier)
    /// summation so finite differences of costs stay above the rounding noise.
    pub fn integrate(&self, values: impl IntoIterator<Item = f64>) -> f64 {
        let mut sum = 0.0f64;
        let mut carry = 0.0;
        for (k, v) in values.into_iter().enumerate() {
            let term = self.trapezoid_weight(k) * v;
            let next = sum + term;
            carry += if sum.abs() >= term.abs() {
                (sum - next) + term
            } else {
                (term - next) + sum
            };
            sum = next;
        }
        sum + carry
    }
}

/// Vaccination and plasma rates sampled on a grid; piecewise linear in between.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSignal {
    grid: TimeGrid,
    u: Vec<f64>,
    p: Vec<f64>,
    variant: ControlVariant,
}

impl ControlSignal {
    pub fn zeros(grid: TimeGrid, variant: ControlVariant) -> Self {
        Self {
            grid,
            u: vec![0.0; grid.len()],
            p: vec![0.0; grid.len()],
            variant,
        }
    }

    /// Constant controls; values for controls the variant excludes are dropped.
    pub fn constant(grid: TimeGrid, variant: ControlVariant, u: f64, p: f64) -> Self {
        let mut signal = Self::zeros(grid, variant);
        if variant.uses_vaccination() {
            signal.u.fill(u);
        }
        if variant.uses_plasma() {
            signal.p.fill(p);
        }
        signal
    }

    /// Builds a signal from node values. Bounds are checked separately by
    /// [`ControlSignal::validate_bounds`].
    pub fn from_values(
        grid: TimeGrid,
        variant: ControlVariant,
        u: Vec<f64>,
        p: Vec<f64>,
    ) -> Result<Self> {
        if u.len() != grid.len() || p.len() != grid.len() {
            return Err(Error::InvalidSignal(format!(
                "expected {} samples, got u: {}, p: {}",
                grid.len(),
                u.len(),
                p.len()
            )));
        }
        if let Some(v) = u.iter().chain(&p).find(|v| !v.is_finite()) {
            return Err(Error::InvalidSignal(format!("non-finite sample {v}")));
        }
        if !variant.uses_vaccination() && u.iter().any(|&v| v != 0.0) {
            return Err(Error::InvalidSignal(format!(
                "{variant:?} excludes vaccination but u is nonzero"
            )));
        }
        if !variant.uses_plasma() && p.iter().any(|&v| v != 0.0) {
            return Err(Error::InvalidSignal(format!(
                "{variant:?} excludes plasma transfusion but p is nonzero"
            )));
        }
        Ok(Self {
            grid,
            u,
            p,
            variant,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn variant(&self) -> ControlVariant {
        self.variant
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub(crate) fn u_mut(&mut self) -> &mut [f64] {
        &mut self.u
    }

    pub(crate) fn p_mut(&mut self) -> &mut [f64] {
        &mut self.p
    }

    /// Control values at fraction `theta` in `[0, 1]` of step `k`.
    pub fn interpolate(&self, k: usize, theta: f64) -> (f64, f64) {
        let lerp = |v: &[f64]| {
            if theta == 0.0 {
                v[k]
            } else if theta == 1.0 {
                v[k + 1]
            } else {
                v[k] + theta * (v[k + 1] - v[k])
            }
        };
        (lerp(&self.u), lerp(&self.p))
    }

    pub fn validate_bounds(&self, params: &ModelParams) -> Result<()> {
        for &v in &self.u {
            check_control("u", v, params.u_max)?;
        }
        for &v in &self.p {
            check_control("p", v, params.p_max)?;
        }
        Ok(())
    }
}

/// Computed states on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub states: Vec<StateFractions>,
}

impl Trajectory {
    pub fn initial(&self) -> StateFractions {
        self.states[0]
    }

    pub fn terminal(&self) -> StateFractions {
        self.states[self.states.len() - 1]
    }

    /// Peak infected fraction over the grid.
    pub fn max_infected(&self) -> f64 {
        self.states.iter().map(|x| x.i).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest `|s + e + i + r - 1|` over all nodes.
    pub fn max_balance_error(&self) -> f64 {
        self.states
            .iter()
            .map(|x| (x.sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

fn check_control(name: &'static str, value: f64, bound: f64) -> Result<()> {
    if value.is_finite() && (0.0..=bound).contains(&value) {
        Ok(())
    } else {
        Err(Error::InvalidControl { name, value, bound })
    }
}

/// Uncontrolled SEIR vector field.
pub fn seir_rhs(x: &StateFractions, params: &ModelParams) -> Derivative {
    let infection = params.beta * x.s * x.i;
    let onset = params.gamma * x.e;
    let recovery = params.mu * x.i;
    [-infection, infection - onset, onset - recovery, recovery]
}

/// Vector field of the controlled system selected by `variant`.
pub fn controlled_rhs(
    x: &StateFractions,
    params: &ModelParams,
    u: f64,
    p: f64,
    variant: ControlVariant,
) -> Result<Derivative> {
    if variant.uses_vaccination() {
        check_control("u", u, params.u_max)?;
    }
    if variant.uses_plasma() {
        check_control("p", p, params.p_max)?;
    }
    Ok(rhs_unchecked(x, params, u, p, variant))
}

/// [`controlled_rhs`] without the bounds check. Finite-difference probes
/// step slightly outside the admissible box.
pub(crate) fn rhs_unchecked(
    x: &StateFractions,
    params: &ModelParams,
    u: f64,
    p: f64,
    variant: ControlVariant,
) -> Derivative {
    let mut dx = seir_rhs(x, params);
    if variant.uses_vaccination() {
        let vaccinated = u * x.s;
        dx[0] -= vaccinated;
        dx[3] += vaccinated;
    }
    if variant.uses_plasma() {
        let treated = p * x.r * x.i;
        dx[2] -= treated;
        dx[3] += treated;
    }
    dx
}

/// One classical Runge-Kutta step of size `h`.
///
/// `f` receives the fractional position within the step (0, 1/2 or 1) rather
/// than an absolute time, so callers can interpolate node data exactly.
pub fn rk4_step<const N: usize>(
    y: &[f64; N],
    h: f64,
    mut f: impl FnMut(f64, &[f64; N]) -> [f64; N],
) -> [f64; N] {
    let offset = |y: &[f64; N], k: &[f64; N], a: f64| -> [f64; N] {
        std::array::from_fn(|j| y[j] + a * k[j])
    };
    let k1 = f(0.0, y);
    let k2 = f(0.5, &offset(y, &k1, 0.5 * h));
    let k3 = f(0.5, &offset(y, &k2, 0.5 * h));
    let k4 = f(1.0, &offset(y, &k3, h));
    std::array::from_fn(|j| y[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]))
}

/// Integrates the controlled system with RK4 on the signal's grid.
pub fn integrate_forward(
    x0: &StateFractions,
    params: &ModelParams,
    signal: &ControlSignal,
) -> Result<Trajectory> {
    params.validate()?;
    x0.validate()?;
    signal.validate_bounds(params)?;
    integrate_forward_unchecked(x0, params, signal)
}

pub(crate) fn integrate_forward_unchecked(
    x0: &StateFractions,
    params: &ModelParams,
    signal: &ControlSignal,
) -> Result<Trajectory> {
    let grid = *signal.grid();
    let h = grid.step();
    let variant = signal.variant();
    let mut states = Vec::with_capacity(grid.len());
    states.push(*x0);
    let mut y = x0.to_array();
    for k in 0..grid.n_steps() {
        y = rk4_step(&y, h, |theta, y| {
            let (u, p) = signal.interpolate(k, theta);
            rhs_unchecked(&StateFractions::from_array(*y), params, u, p, variant)
        });
        let x = StateFractions::from_array(y);
        let sum = x.sum();
        let min = x.min_component();
        if !sum.is_finite() || (sum - 1.0).abs() > DRIFT_LIMIT || min < -DRIFT_LIMIT {
            return Err(Error::SimplexDrift {
                node: k + 1,
                time: grid.time(k + 1),
                sum,
                min,
            });
        }
        states.push(x);
    }
    Ok(Trajectory { grid, states })
}
