//! Derivative-free and quasi-Newton minimisers plus the sequential cascade
//! used for likelihood maximisation.
//!
//! Gradients are central finite differences. Every method reports its best
//! point even when it fails to converge, so callers can decide how to degrade.

mod bfgs;
mod gradient;
mod lbfgsb;
mod nelder_mead;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bfgs::bfgs;
pub use gradient::{central_gradient, gradient_in_box};
pub use lbfgsb::{lbfgsb, Bounds};
pub use nelder_mead::nelder_mead;

/// Scalar loss to minimise. Non-finite values mark infeasible points.
pub trait Objective {
    fn evaluate(&self, x: &[f64]) -> f64;
}

impl<F> Objective for F
where
    F: Fn(&[f64]) -> f64,
{
    fn evaluate(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimOptions {
    pub max_iter: usize,
    pub tol: f64,
    /// Relative finite-difference step; the absolute step for coordinate `i`
    /// is `gradient_step * max(1, |x_i|)`.
    pub gradient_step: f64,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-5,
            gradient_step: 1e-6,
        }
    }
}

impl OptimOptions {
    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn validate(&self) -> Result<(), OptimError> {
        if self.max_iter == 0 {
            return Err(OptimError::BadOptions("max_iter must be at least 1".into()));
        }
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return Err(OptimError::BadOptions("tol must be positive".into()));
        }
        if !(self.gradient_step > 0.0) || !self.gradient_step.is_finite() {
            return Err(OptimError::BadOptions("gradient_step must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Lbfgsb,
    Bfgs,
    NelderMead,
}

impl Method {
    /// Cascade order.
    pub const SEQUENCE: [Method; 3] = [Method::Lbfgsb, Method::Bfgs, Method::NelderMead];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Lbfgsb => "lbfgsb",
            Method::Bfgs => "bfgs",
            Method::NelderMead => "nelder_mead",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimOutcome {
    pub x_star: Vec<f64>,
    pub f_star: f64,
    pub converged: bool,
    pub iterations: usize,
    pub method: Method,
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum OptimError {
    #[error("objective is not finite at the starting point")]
    NonFiniteStart,
    #[error("starting point violates bound on coordinate {0}")]
    InfeasibleStart(usize),
    #[error("empty parameter vector")]
    EmptyStart,
    #[error("bounds have {bounds} entries for a {dim}-dimensional problem")]
    DimensionMismatch { bounds: usize, dim: usize },
    #[error("invalid options: {0}")]
    BadOptions(String),
    #[error("every method produced only non-finite losses")]
    TotalFailure,
}

pub(crate) fn check_start(obj: &dyn Objective, x0: &[f64], opts: &OptimOptions) -> Result<f64, OptimError> {
    opts.validate()?;
    if x0.is_empty() {
        return Err(OptimError::EmptyStart);
    }
    let f0 = obj.evaluate(x0);
    if !f0.is_finite() || x0.iter().any(|v| !v.is_finite()) {
        return Err(OptimError::NonFiniteStart);
    }
    Ok(f0)
}

pub(crate) fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Tries L-BFGS-B, then BFGS, then Nelder-Mead and returns the first
/// converged outcome. If none converges, the finite outcome with the lowest
/// loss is returned with `converged == false`.
///
/// With a box, BFGS and Nelder-Mead see `+inf` outside it.
pub fn sequential_optimize(
    obj: &dyn Objective,
    x0: &[f64],
    bounds: Option<&Bounds>,
    opts: &OptimOptions,
) -> Result<OptimOutcome, OptimError> {
    opts.validate()?;
    let unbounded;
    let bounds = match bounds {
        Some(b) => b,
        None => {
            unbounded = Bounds::unbounded(x0.len());
            &unbounded
        }
    };
    let boxed = |x: &[f64]| {
        if bounds.contains(x) {
            obj.evaluate(x)
        } else {
            f64::INFINITY
        }
    };

    let mut best: Option<OptimOutcome> = None;
    for method in Method::SEQUENCE {
        let attempt = match method {
            Method::Lbfgsb => lbfgsb(obj, x0, bounds, opts),
            Method::Bfgs => bfgs(&boxed, x0, opts),
            Method::NelderMead => nelder_mead(&boxed, x0, opts),
        };
        let outcome = match attempt {
            Ok(o) => o,
            Err(OptimError::NonFiniteStart) => continue,
            Err(e) => return Err(e),
        };
        if outcome.converged && outcome.f_star.is_finite() {
            return Ok(outcome);
        }
        if outcome.f_star.is_finite() && best.as_ref().is_none_or(|b| outcome.f_star < b.f_star) {
            best = Some(outcome);
        }
    }
    best.map(|mut b| {
        b.converged = false;
        b
    })
    .ok_or(OptimError::TotalFailure)
}
