//! Problem instances and their `key = value` configuration format.
//!
//! Recognized keys: `beta`, `gamma`, `mu`, `u_max`, `p_max`, `s0`, `e0`,
//! `i0`, `r0`, `t0`, `T`, `n_steps`. Everything after `#` is a comment.
//! Omitted keys keep their defaults; an omitted `n_steps` is derived from
//! the horizon with step 0.01.

use std::fmt::Write as _;

use crate::dynamics::{ModelParams, StateFractions, TimeGrid, SIMPLEX_TOL};
use crate::error::{Error, Result};

/// Step used when the configuration sets a horizon but no `n_steps`.
pub const DEFAULT_STEP: f64 = 0.01;

/// Rates, initial state and time grid of one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub params: ModelParams,
    pub x0: StateFractions,
    pub grid: TimeGrid,
}

impl Default for Scenario {
    fn default() -> Self {
        Self::with_horizon(20.0)
    }
}

impl Scenario {
    /// Default rates and initial state on `[0, t_end]` with step 0.01.
    pub fn with_horizon(t_end: f64) -> Self {
        let n_steps = steps_for(0.0, t_end);
        Self {
            params: ModelParams::default(),
            x0: StateFractions::from_array([0.88, 0.07, 0.05, 0.0]),
            grid: TimeGrid::new(0.0, t_end, n_steps).expect("positive horizon"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_params(&self.params)?;
        validate_x0(&self.x0)
    }

    /// Configuration text that [`parse_scenario`] maps back to `self`.
    pub fn to_config(&self) -> String {
        let mut out = String::new();
        let p = &self.params;
        let x = &self.x0;
        let g = &self.grid;
        let rows: [(&str, String); 12] = [
            ("beta", p.beta.to_string()),
            ("gamma", p.gamma.to_string()),
            ("mu", p.mu.to_string()),
            ("u_max", p.u_max.to_string()),
            ("p_max", p.p_max.to_string()),
            ("s0", x.s.to_string()),
            ("e0", x.e.to_string()),
            ("i0", x.i.to_string()),
            ("r0", x.r.to_string()),
            ("t0", g.t0().to_string()),
            ("T", g.t_end().to_string()),
            ("n_steps", g.n_steps().to_string()),
        ];
        for (key, value) in rows {
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }
}

fn steps_for(t0: f64, t_end: f64) -> usize {
    (((t_end - t0) / DEFAULT_STEP).round() as usize).max(2)
}

fn validation(field: &str, message: impl Into<String>) -> Error {
    Error::Validation {
        field: field.to_string(),
        message: message.into(),
    }
}

fn validate_params(p: &ModelParams) -> Result<()> {
    for (field, v) in [("beta", p.beta), ("gamma", p.gamma), ("mu", p.mu)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(validation(field, format!("{v} must be positive")));
        }
    }
    for (field, v) in [("u_max", p.u_max), ("p_max", p.p_max)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(validation(field, format!("{v} must lie in [0, 1]")));
        }
    }
    Ok(())
}

fn validate_x0(x: &StateFractions) -> Result<()> {
    for (field, v) in [("s0", x.s), ("e0", x.e), ("i0", x.i), ("r0", x.r)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(validation(field, format!("{v} must lie in [0, 1]")));
        }
    }
    let sum = x.sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(validation(
            "s0 + e0 + i0 + r0",
            format!("initial fractions sum to {sum}, expected 1"),
        ));
    }
    Ok(())
}

const KEYS: [&str; 12] = [
    "beta", "gamma", "mu", "u_max", "p_max", "s0", "e0", "i0", "r0", "t0", "T", "n_steps",
];

/// Parses a configuration document, filling omitted keys with defaults.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let mut values: [Option<f64>; 11] = [None; 11];
    let mut n_steps: Option<usize> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err(format!("expected `key = value`, got `{line}`")))?;
        let key = key.trim();
        let value = value.trim();
        let slot = KEYS
            .iter()
            .position(|k| *k == key)
            .ok_or_else(|| parse_err(format!("unknown key `{key}`")))?;
        if key == "n_steps" {
            if n_steps.is_some() {
                return Err(parse_err("duplicate key `n_steps`".into()));
            }
            n_steps = Some(
                value
                    .parse()
                    .map_err(|_| parse_err(format!("`{value}` is not a step count")))?,
            );
        } else {
            if values[slot].is_some() {
                return Err(parse_err(format!("duplicate key `{key}`")));
            }
            let v: f64 = value
                .parse()
                .map_err(|_| parse_err(format!("`{value}` is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(format!("`{value}` is not finite")));
            }
            values[slot] = Some(v);
        }
    }

    let defaults = Scenario::default();
    let pick = |slot: usize, default: f64| values[slot].unwrap_or(default);
    let params = ModelParams {
        beta: pick(0, defaults.params.beta),
        gamma: pick(1, defaults.params.gamma),
        mu: pick(2, defaults.params.mu),
        u_max: pick(3, defaults.params.u_max),
        p_max: pick(4, defaults.params.p_max),
    };
    let x0 = StateFractions::from_array([
        pick(5, defaults.x0.s),
        pick(6, defaults.x0.e),
        pick(7, defaults.x0.i),
        pick(8, defaults.x0.r),
    ]);
    validate_params(&params)?;
    validate_x0(&x0)?;

    let t0 = pick(9, defaults.grid.t0());
    let t_end = pick(10, defaults.grid.t_end());
    if t_end <= t0 {
        return Err(validation("T", format!("horizon end {t_end} must exceed t0 = {t0}")));
    }
    let n_steps = n_steps.unwrap_or_else(|| steps_for(t0, t_end));
    let grid =
        TimeGrid::new(t0, t_end, n_steps).map_err(|e| validation("n_steps", e.to_string()))?;

    Ok(Scenario { params, x0, grid })
}
