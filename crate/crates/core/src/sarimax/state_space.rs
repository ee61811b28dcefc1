use nalgebra::{DMatrix, DVector};

use super::transform::{is_invertible, is_stationary};
use super::{ModelOrder, SarimaxParams};
use crate::error::{Error, Result};

/// Harvey companion form of an ARMA process:
///
/// `alpha_{t+1} = T alpha_t + R eps_{t+1}`, `y_t = Z alpha_t`, with
/// `Z = (1, 0, .., 0)`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateSpaceRep {
    pub transition: DMatrix<f64>,
    pub loading: DVector<f64>,
    pub innovation_map: DVector<f64>,
    /// Expanded AR lag coefficients `a` of `1 - sum a_j B^j`.
    pub ar: Vec<f64>,
    /// Expanded MA lag coefficients `m` of `1 + sum m_j B^j`.
    pub ma: Vec<f64>,
}

impl StateSpaceRep {
    pub fn dim(&self) -> usize {
        self.transition.nrows()
    }
}

/// Multiplies two lag polynomials given in full form (`p[0]` is the lag-0
/// coefficient).
pub fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Full polynomial `1 + sign * sum c_j B^(j * step)`.
fn lag_poly(coeffs: &[f64], step: usize, sign: f64) -> Vec<f64> {
    let mut p = vec![0.0; coeffs.len() * step + 1];
    p[0] = 1.0;
    for (j, c) in coeffs.iter().enumerate() {
        p[(j + 1) * step] = sign * c;
    }
    p
}

/// Expanded AR coefficients of `(1 - phi(B))(1 - Phi(B^s))`.
pub fn expand_ar(phi: &[f64], seasonal: &[f64], period: usize) -> Vec<f64> {
    let full = poly_mul(&lag_poly(phi, 1, -1.0), &lag_poly(seasonal, period.max(1), -1.0));
    trim(full.iter().skip(1).map(|v| -v).collect())
}

/// Expanded MA coefficients of `(1 + theta(B))(1 + Theta(B^s))`.
pub fn expand_ma(theta: &[f64], seasonal: &[f64], period: usize) -> Vec<f64> {
    let full = poly_mul(&lag_poly(theta, 1, 1.0), &lag_poly(seasonal, period.max(1), 1.0));
    trim(full.into_iter().skip(1).collect())
}

fn trim(mut v: Vec<f64>) -> Vec<f64> {
    while v.last() == Some(&0.0) {
        v.pop();
    }
    v
}

pub fn to_state_space(order: &ModelOrder, params: &SarimaxParams) -> Result<StateSpaceRep> {
    params.validate(order)?;
    let ar = expand_ar(&params.phi, &params.seasonal_phi, order.seasonal.period);
    let ma = expand_ma(&params.theta, &params.seasonal_theta, order.seasonal.period);
    if !is_stationary(&ar) {
        return Err(Error::Model("AR polynomial has a root on or inside the unit circle".into()));
    }
    if !is_invertible(&ma) {
        return Err(Error::Model("MA polynomial has a root on or inside the unit circle".into()));
    }
    let ar_len = order.p + order.seasonal.p * order.seasonal.period;
    let ma_len = order.q + order.seasonal.q * order.seasonal.period;
    let r = ar_len.max(ma_len + 1).max(1);
    let mut transition = DMatrix::zeros(r, r);
    for (i, a) in ar.iter().enumerate() {
        transition[(i, 0)] = *a;
    }
    for i in 0..r - 1 {
        transition[(i, i + 1)] = 1.0;
    }
    let mut innovation_map = DVector::zeros(r);
    innovation_map[0] = 1.0;
    for (j, m) in ma.iter().enumerate() {
        innovation_map[j + 1] = *m;
    }
    let mut loading = DVector::zeros(r);
    loading[0] = 1.0;
    Ok(StateSpaceRep {
        transition,
        loading,
        innovation_map,
        ar,
        ma,
    })
}

/// Solves `P = T P T' + Q` for the stationary state covariance.
///
/// Small systems use the vectorised form `(I - T (x) T) vec(P) = vec(Q)`;
/// larger ones use the doubling iteration. `None` when the solve fails or the
/// result is not a valid covariance.
pub fn solve_lyapunov(t: &DMatrix<f64>, q: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let r = t.nrows();
    let p = if r <= 12 {
        let kron = t.kronecker(t);
        let lhs = DMatrix::identity(r * r, r * r) - kron;
        let rhs = DVector::from_column_slice(q.as_slice());
        let sol = lhs.lu().solve(&rhs)?;
        DMatrix::from_column_slice(r, r, sol.as_slice())
    } else {
        let mut a = t.clone();
        let mut p = q.clone();
        for _ in 0..64 {
            let next = &p + &a * &p * a.transpose();
            let delta = (&next - &p).amax();
            p = next;
            a = &a * &a;
            if delta <= 1e-15 * p.amax().max(1.0) {
                break;
            }
            if !p.iter().all(|v| v.is_finite()) {
                return None;
            }
        }
        p
    };
    let p = (&p + p.transpose()) * 0.5;
    let valid = p.iter().all(|v| v.is_finite()) && (0..r).all(|i| p[(i, i)] >= 0.0);
    valid.then_some(p)
}
