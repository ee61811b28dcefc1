//! Unconstrained <-> stationary/invertible parameter maps.
//!
//! Each unconstrained entry `u` is squashed to a partial autocorrelation
//! `r = u / sqrt(1 + u^2)` and the Durbin-Levinson recursion turns the
//! partial autocorrelations into lag-polynomial coefficients. Any real vector
//! therefore yields a polynomial with all roots outside the unit circle.

use super::{ModelOrder, SarimaxParams};
use crate::error::{Error, Result};

/// Largest admissible partial autocorrelation magnitude. Keeps the map total
/// in floating point, where `u / sqrt(1 + u^2)` rounds to 1 for huge `u`.
const MAX_PACF: f64 = 1.0 - 1e-12;

/// Partial autocorrelations -> AR coefficients `a` of `1 - sum a_j B^j`.
pub fn pacf_to_ar(r: &[f64]) -> Vec<f64> {
    let mut phi = vec![0.0; r.len()];
    let mut prev = vec![0.0; r.len()];
    for k in 0..r.len() {
        prev[..k].copy_from_slice(&phi[..k]);
        phi[k] = r[k];
        for j in 0..k {
            phi[j] = prev[j] - r[k] * prev[k - 1 - j];
        }
    }
    phi
}

/// AR coefficients -> partial autocorrelations (step-down recursion).
/// `None` when some partial autocorrelation reaches magnitude 1, i.e. the
/// polynomial is not stationary.
pub fn ar_to_pacf(a: &[f64]) -> Option<Vec<f64>> {
    let mut cur = a.to_vec();
    let mut r = vec![0.0; a.len()];
    for k in (0..a.len()).rev() {
        let rk = cur[k];
        if !rk.is_finite() || rk.abs() >= 1.0 {
            return None;
        }
        r[k] = rk;
        let denom = 1.0 - rk * rk;
        let next: Vec<f64> = (0..k).map(|j| (cur[j] + rk * cur[k - 1 - j]) / denom).collect();
        cur = next;
    }
    Some(r)
}

/// Whether `1 - sum a_j B^j` has every root strictly outside the unit circle.
pub fn is_stationary(a: &[f64]) -> bool {
    ar_to_pacf(a).is_some()
}

/// Whether `1 + sum m_j B^j` has every root strictly outside the unit circle.
pub fn is_invertible(m: &[f64]) -> bool {
    let neg: Vec<f64> = m.iter().map(|v| -v).collect();
    is_stationary(&neg)
}

fn squash(u: f64) -> f64 {
    (u / (1.0 + u * u).sqrt()).clamp(-MAX_PACF, MAX_PACF)
}

fn unsquash(r: f64) -> f64 {
    r / (1.0 - r * r).sqrt()
}

pub fn constrain_ar(u: &[f64]) -> Vec<f64> {
    let r: Vec<f64> = u.iter().map(|&v| squash(v)).collect();
    pacf_to_ar(&r)
}

pub fn unconstrain_ar(a: &[f64]) -> Option<Vec<f64>> {
    ar_to_pacf(a).map(|r| r.into_iter().map(unsquash).collect())
}

pub fn constrain_ma(u: &[f64]) -> Vec<f64> {
    constrain_ar(u).into_iter().map(|v| -v).collect()
}

pub fn unconstrain_ma(m: &[f64]) -> Option<Vec<f64>> {
    let neg: Vec<f64> = m.iter().map(|v| -v).collect();
    unconstrain_ar(&neg)
}

/// Length of the unconstrained vector: AR, MA, seasonal AR, seasonal MA,
/// exogenous coefficients, then `ln sigma^2`.
pub fn param_len(order: &ModelOrder, n_exog: usize) -> usize {
    order.n_arma_params() + n_exog + 1
}

pub fn transform_params(u: &[f64], order: &ModelOrder, n_exog: usize) -> Result<SarimaxParams> {
    if u.len() != param_len(order, n_exog) {
        return Err(Error::invalid(format!(
            "expected {} unconstrained parameters, got {}",
            param_len(order, n_exog),
            u.len()
        )));
    }
    let s = &order.seasonal;
    let mut at = 0;
    let mut take = |n: usize| {
        let block = &u[at..at + n];
        at += n;
        block
    };
    let phi = constrain_ar(take(order.p));
    let theta = constrain_ma(take(order.q));
    let seasonal_phi = constrain_ar(take(s.p));
    let seasonal_theta = constrain_ma(take(s.q));
    let beta = take(n_exog).to_vec();
    let sigma2 = take(1)[0].exp();
    Ok(SarimaxParams {
        phi,
        theta,
        seasonal_phi,
        seasonal_theta,
        beta,
        sigma2,
    })
}

pub fn untransform_params(params: &SarimaxParams, order: &ModelOrder) -> Result<Vec<f64>> {
    params.validate(order)?;
    let bad = |what: &str| Error::invalid(format!("{what} polynomial violates the stationarity/invertibility region"));
    let mut u = Vec::with_capacity(param_len(order, params.beta.len()));
    u.extend(unconstrain_ar(&params.phi).ok_or_else(|| bad("AR"))?);
    u.extend(unconstrain_ma(&params.theta).ok_or_else(|| bad("MA"))?);
    u.extend(unconstrain_ar(&params.seasonal_phi).ok_or_else(|| bad("seasonal AR"))?);
    u.extend(unconstrain_ma(&params.seasonal_theta).ok_or_else(|| bad("seasonal MA"))?);
    u.extend_from_slice(&params.beta);
    u.push(params.sigma2.ln());
    Ok(u)
}
