//! Parameter grids.
//!
//! An axis is `key=v1,v2,...`, `key=lin:start:stop:count` or
//! `key=log:start:stop:count`. Points are enumerated in the order the axes
//! were given, with the last axis varying fastest.

use std::str::FromStr;

use memamp::dicke::Schedule;
use memamp::protocol::{run_schedule, AmplificationReport, ProtocolConfig};
use rayon::prelude::*;

use crate::config::TruncationSpec;
use crate::error::CliError;
use crate::output::{float, opt_float};

pub const MAX_GRID_POINTS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisKey {
    NAtoms,
    Stages,
    Alpha,
    PW,
    PR,
    P,
    BetaW,
    BetaR,
    Beta,
    Schedule,
}

impl FromStr for AxisKey {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Ok(match s {
            "N" => AxisKey::NAtoms,
            "n" => AxisKey::Stages,
            "alpha" => AxisKey::Alpha,
            "p_w" => AxisKey::PW,
            "p_r" => AxisKey::PR,
            "p" => AxisKey::P,
            "beta_w" => AxisKey::BetaW,
            "beta_r" => AxisKey::BetaR,
            "beta" => AxisKey::Beta,
            "schedule" => AxisKey::Schedule,
            other => {
                return Err(CliError::Config(format!(
                    "unknown sweep key `{other}` (expected N, n, alpha, p_w, p_r, p, beta_w, beta_r, beta, schedule)"
                )))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub key: AxisKey,
    pub values: Vec<f64>,
}

fn number(key: &str, s: &str) -> Result<f64, CliError> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| CliError::Config(format!("sweep axis `{key}`: `{s}` is not a number")))
}

impl FromStr for Axis {
    type Err = CliError;

    fn from_str(spec: &str) -> Result<Self, CliError> {
        let (name, rhs) = spec
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("sweep axis `{spec}` must look like key=values")))?;
        let key: AxisKey = name.trim().parse()?;
        let rhs = rhs.trim();
        let values: Vec<f64> = if let Some(range) = rhs.strip_prefix("lin:").or_else(|| rhs.strip_prefix("log:")) {
            let parts: Vec<&str> = range.split(':').collect();
            if parts.len() != 3 {
                return Err(CliError::Config(format!("sweep axis `{name}`: ranges are kind:start:stop:count")));
            }
            let (start, stop) = (number(name, parts[0])?, number(name, parts[1])?);
            let count: usize = parts[2]
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("sweep axis `{name}`: bad count `{}`", parts[2])))?;
            let log = rhs.starts_with("log:");
            if log && (start <= 0.0 || stop <= 0.0) {
                return Err(CliError::Config(format!("sweep axis `{name}`: log ranges need positive ends")));
            }
            (0..count)
                .map(|i| {
                    let t = if count == 1 { 0.0 } else { i as f64 / (count - 1) as f64 };
                    if log {
                        (start.ln() + t * (stop.ln() - start.ln())).exp()
                    } else {
                        start + t * (stop - start)
                    }
                })
                .collect()
        } else if key == AxisKey::Schedule {
            rhs.split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| match s.trim() {
                    "type1" | "TypeI" | "I" | "1" => Ok(1.0),
                    "type2" | "TypeII" | "II" | "2" => Ok(2.0),
                    other => Err(CliError::Config(format!("sweep axis `schedule`: unknown schedule `{other}`"))),
                })
                .collect::<Result<_, _>>()?
        } else {
            rhs.split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| number(name, s))
                .collect::<Result<_, _>>()?
        };
        if values.is_empty() {
            return Err(CliError::Guard(format!("sweep axis `{name}` is empty")));
        }
        if matches!(key, AxisKey::NAtoms | AxisKey::Stages) && values.iter().any(|v| v.fract() != 0.0 || *v < 0.0) {
            return Err(CliError::Config(format!("sweep axis `{name}` needs non-negative integers")));
        }
        Ok(Axis { key, values })
    }
}

/// Number of grid points, or a guard error past [`MAX_GRID_POINTS`].
pub fn grid_size(axes: &[Axis]) -> Result<usize, CliError> {
    let mut total: usize = 1;
    for axis in axes {
        total = total
            .checked_mul(axis.values.len())
            .filter(|&t| t <= MAX_GRID_POINTS)
            .ok_or_else(|| CliError::Guard(format!("sweep grid exceeds {MAX_GRID_POINTS} points")))?;
    }
    Ok(total)
}

/// Coordinates of grid point `index`, last axis fastest.
pub fn point(axes: &[Axis], mut index: usize) -> Vec<(AxisKey, f64)> {
    let mut coords = vec![(AxisKey::P, 0.0); axes.len()];
    for (slot, axis) in coords.iter_mut().zip(axes).rev() {
        let len = axis.values.len();
        *slot = (axis.key, axis.values[index % len]);
        index /= len;
    }
    coords
}

/// The template with one grid point applied. The truncation is re-resolved
/// for the point's `N` from the user's explicit settings.
pub fn apply_point(template: &ProtocolConfig, spec: &TruncationSpec, coords: &[(AxisKey, f64)]) -> ProtocolConfig {
    let mut c = template.clone();
    for &(key, v) in coords {
        match key {
            AxisKey::NAtoms => c.n_atoms = v as usize,
            AxisKey::Stages => c.stages = v as usize,
            AxisKey::Alpha => c.alpha = num_complex::Complex64::new(v, 0.0),
            AxisKey::PW => c.p_w = v,
            AxisKey::PR => c.p_r = v,
            AxisKey::P => {
                c.p_w = v;
                c.p_r = v;
            }
            AxisKey::BetaW => c.beta_w = v,
            AxisKey::BetaR => c.beta_r = v,
            AxisKey::Beta => {
                c.beta_w = v;
                c.beta_r = v;
            }
            AxisKey::Schedule => c.schedule = if v == 1.0 { Schedule::TypeI } else { Schedule::TypeII },
        }
    }
    c.truncation = spec.resolve(c.n_atoms);
    c
}

pub const SWEEP_HEADER: [&str; 22] = [
    "N",
    "n",
    "schedule",
    "order",
    "alpha_re",
    "alpha_im",
    "p_w",
    "p_r",
    "beta_w",
    "beta_r",
    "success",
    "success_probability",
    "final_gain",
    "analytic_gain",
    "p_suc",
    "p_mode",
    "p_spon",
    "p_amp",
    "q_amp",
    "fidelity",
    "valid",
    "error",
];

pub fn schedule_name(s: Schedule) -> &'static str {
    match s {
        Schedule::TypeI => "type1",
        Schedule::TypeII => "type2",
    }
}

pub fn order_name(o: memamp::joint::EvolutionOrder) -> &'static str {
    match o {
        memamp::joint::EvolutionOrder::FirstOrder => "first_order",
        memamp::joint::EvolutionOrder::Exact => "exact",
    }
}

/// One CSV row. Points that could not run carry the error message and empty
/// result cells.
pub fn sweep_row(config: &ProtocolConfig, result: &Result<AmplificationReport, memamp::Error>) -> Vec<String> {
    let mut row = vec![
        config.n_atoms.to_string(),
        config.stages.to_string(),
        schedule_name(config.schedule).to_string(),
        order_name(config.order).to_string(),
        float(config.alpha.re),
        float(config.alpha.im),
        float(config.p_w),
        float(config.p_r),
        float(config.beta_w),
        float(config.beta_r),
    ];
    match result {
        Ok(r) => {
            let q = r.quality.as_ref();
            row.extend([
                r.success.to_string(),
                float(r.success_probability),
                opt_float(r.final_gain),
                float(r.analytic_gain),
                opt_float(q.map(|q| q.p_suc)),
                opt_float(q.map(|q| q.p_mode)),
                opt_float(q.map(|q| q.p_spon)),
                opt_float(q.map(|q| q.p_amp)),
                opt_float(q.map(|q| q.q_amp)),
                opt_float(q.map(|q| q.fidelity)),
                q.map(|q| q.valid.to_string()).unwrap_or_default(),
                String::new(),
            ]);
        }
        Err(e) => {
            row.extend(std::iter::repeat_n(String::new(), 11));
            row.push(e.to_string());
        }
    }
    row
}

/// Evaluates every grid point in parallel and returns rows in grid order.
pub fn run_grid(template: &ProtocolConfig, spec: &TruncationSpec, axes: &[Axis]) -> Result<Vec<Vec<String>>, CliError> {
    let total = grid_size(axes)?;
    Ok((0..total)
        .into_par_iter()
        .map(|i| {
            let config = apply_point(template, spec, &point(axes, i));
            let result = run_schedule(&config);
            sweep_row(&config, &result)
        })
        .collect())
}
