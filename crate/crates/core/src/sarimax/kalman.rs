//! Exact Gaussian likelihood of the ARMA-with-regression model by Kalman
//! filtering from the stationary initial state.

use nalgebra::DMatrix;

use super::state_space::{solve_lyapunov, StateSpaceRep};
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Output of a full filter pass.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterOutput {
    pub loglik: f64,
    /// One-step prediction errors `v_t`.
    pub innovations: Vec<f64>,
    /// Their variances `F_t`.
    pub innovation_vars: Vec<f64>,
    /// Filtered state `a_{T|T}` after the last observation.
    pub filtered_state: Vec<f64>,
}

fn check_inputs(y: &[f64], exog: &DMatrix<f64>, beta: &[f64], sigma2: f64) -> Result<()> {
    if y.is_empty() {
        return Err(Error::InsufficientData("empty series".into()));
    }
    if exog.nrows() != y.len() || exog.ncols() != beta.len() {
        return Err(Error::invalid(format!(
            "exogenous matrix is {}x{}, expected {}x{}",
            exog.nrows(),
            exog.ncols(),
            y.len(),
            beta.len()
        )));
    }
    if y.iter().chain(beta).chain(exog.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite value in series, regressors, or coefficients"));
    }
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::invalid("innovation variance must be positive and finite"));
    }
    Ok(())
}

/// Runs the filter. Returns `Ok(None)` when the recursion breaks down
/// numerically (no stationary covariance, non-positive prediction variance).
pub fn kalman_filter(
    rep: &StateSpaceRep,
    y: &[f64],
    exog: &DMatrix<f64>,
    beta: &[f64],
    sigma2: f64,
) -> Result<Option<FilterOutput>> {
    check_inputs(y, exog, beta, sigma2)?;
    let r = rep.dim();
    let rr = &rep.innovation_map * rep.innovation_map.transpose();
    let Some(p0) = solve_lyapunov(&rep.transition, &rr) else {
        return Ok(None);
    };

    let t = rep.transition.as_slice(); // column-major
    let tm = |i: usize, j: usize| t[j * r + i];
    let q: Vec<f64> = rr.iter().map(|v| v * sigma2).collect();
    let mut p: Vec<f64> = p0.iter().map(|v| v * sigma2).collect();
    let mut a = vec![0.0; r];
    let mut att = vec![0.0; r];
    let mut ptt = vec![0.0; r * r];
    let mut tmp = vec![0.0; r * r];
    let mut next_p = vec![0.0; r * r];
    let mut steady = false;

    let n = y.len();
    let mut innovations = Vec::with_capacity(n);
    let mut vars = Vec::with_capacity(n);
    let mut loglik = 0.0;
    for (i, &yt) in y.iter().enumerate() {
        let mut z = yt;
        for (k, b) in beta.iter().enumerate() {
            z -= b * exog[(i, k)];
        }
        let f = p[0];
        if !(f > 0.0) || !f.is_finite() {
            return Ok(None);
        }
        let v = z - a[0];
        loglik -= 0.5 * (LN_2PI + f.ln() + v * v / f);
        innovations.push(v);
        vars.push(f);

        // update: a_t|t = a + P[:,0] v / F
        for j in 0..r {
            att[j] = a[j] + p[j] * v / f; // column 0 of P (column-major)
        }
        // predict: a = T a_t|t
        for j in 0..r {
            a[j] = (0..r).map(|k| tm(j, k) * att[k]).sum();
        }
        if steady {
            continue;
        }
        // P_t|t = P - P[:,0] P[0,:] / F
        for col in 0..r {
            for row in 0..r {
                ptt[col * r + row] = p[col * r + row] - p[row] * p[col * r] / f;
            }
        }
        // next P = T Ptt T' + Q
        for col in 0..r {
            for row in 0..r {
                tmp[col * r + row] = (0..r).map(|k| tm(row, k) * ptt[col * r + k]).sum();
            }
        }
        for col in 0..r {
            for row in 0..r {
                next_p[col * r + row] = (0..r).map(|k| tmp[k * r + row] * tm(col, k)).sum::<f64>() + q[col * r + row];
            }
        }
        let scale = next_p.iter().fold(0.0_f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
        let change = next_p.iter().zip(&p).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
        steady = change <= 1e-15 * scale;
        std::mem::swap(&mut p, &mut next_p);
    }
    if !loglik.is_finite() {
        return Ok(None);
    }
    Ok(Some(FilterOutput {
        loglik,
        innovations,
        innovation_vars: vars,
        filtered_state: att,
    }))
}

/// Exact log-likelihood of `y - exog * beta` under the state-space model.
/// Numerical breakdown yields `-inf` rather than an error.
pub fn kalman_loglik(rep: &StateSpaceRep, y: &[f64], exog: &DMatrix<f64>, beta: &[f64], sigma2: f64) -> Result<f64> {
    Ok(kalman_filter(rep, y, exog, beta, sigma2)?
        .map(|o| o.loglik)
        .unwrap_or(f64::NEG_INFINITY))
}
