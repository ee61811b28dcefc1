//! ARMA model with a linear exogenous mean, optional seasonal factors and
//! differencing, estimated by exact maximum likelihood.
//!
//! The observation equation is `y_t = beta' x_t + u_t` where `u_t` follows
//! `phi(B) Phi(B^s) u_t = theta(B) Theta(B^s) eps_t` with
//! `eps_t ~ N(0, sigma^2)`. The default order is ARMA(1, 1) without seasonal
//! terms.

mod diff;
mod fit;
mod kalman;
mod state_space;
pub mod transform;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use diff::{difference, differencing_poly, integrate};
pub use fit::{fit, forecast, FitResult, Forecaster};
pub use kalman::{kalman_filter, kalman_loglik, FilterOutput};
pub use state_space::{expand_ar, expand_ma, poly_mul, solve_lyapunov, to_state_space, StateSpaceRep};
pub use transform::{transform_params, untransform_params};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct SeasonalOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
    pub period: usize,
}

impl SeasonalOrder {
    pub fn is_none(&self) -> bool {
        self.p == 0 && self.d == 0 && self.q == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
    #[serde(default)]
    pub seasonal: SeasonalOrder,
}

impl Default for ModelOrder {
    fn default() -> Self {
        Self::new(1, 0, 1)
    }
}

impl ModelOrder {
    pub fn new(p: usize, d: usize, q: usize) -> Self {
        Self {
            p,
            d,
            q,
            seasonal: SeasonalOrder::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.seasonal;
        if s.is_none() != (s.period == 0) {
            return Err(Error::invalid(
                "seasonal period must be 0 exactly when the seasonal orders are all 0",
            ));
        }
        if s.period == 1 {
            return Err(Error::invalid("seasonal period must be at least 2"));
        }
        Ok(())
    }

    /// Same order with the seasonal part removed.
    pub fn non_seasonal(&self) -> Self {
        Self::new(self.p, self.d, self.q)
    }

    pub fn is_seasonal(&self) -> bool {
        !self.seasonal.is_none()
    }

    pub fn n_arma_params(&self) -> usize {
        self.p + self.q + self.seasonal.p + self.seasonal.q
    }

    /// Observations lost to differencing.
    pub fn diff_lag(&self) -> usize {
        self.d + self.seasonal.d * self.seasonal.period
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SarimaxParams {
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    #[serde(default)]
    pub seasonal_phi: Vec<f64>,
    #[serde(default)]
    pub seasonal_theta: Vec<f64>,
    pub beta: Vec<f64>,
    pub sigma2: f64,
}

impl SarimaxParams {
    /// Zero ARMA coefficients for `order`.
    pub fn zeros(order: &ModelOrder, beta: Vec<f64>, sigma2: f64) -> Self {
        Self {
            phi: vec![0.0; order.p],
            theta: vec![0.0; order.q],
            seasonal_phi: vec![0.0; order.seasonal.p],
            seasonal_theta: vec![0.0; order.seasonal.q],
            beta,
            sigma2,
        }
    }

    pub fn validate(&self, order: &ModelOrder) -> Result<()> {
        order.validate()?;
        let s = &order.seasonal;
        if self.phi.len() != order.p
            || self.theta.len() != order.q
            || self.seasonal_phi.len() != s.p
            || self.seasonal_theta.len() != s.q
        {
            return Err(Error::invalid("coefficient counts do not match the model order"));
        }
        let all = self
            .phi
            .iter()
            .chain(&self.theta)
            .chain(&self.seasonal_phi)
            .chain(&self.seasonal_theta)
            .chain(&self.beta);
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite coefficient"));
        }
        if !(self.sigma2 > 0.0) || !self.sigma2.is_finite() {
            return Err(Error::invalid("sigma2 must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_order_is_arma11() {
        let o = ModelOrder::default();
        assert_eq!((o.p, o.d, o.q), (1, 0, 1));
        assert!(!o.is_seasonal());
        assert!(o.validate().is_ok());
    }

    #[test]
    fn seasonal_period_consistency() {
        let mut o = ModelOrder::default();
        o.seasonal.period = 24;
        assert!(o.validate().is_err());
        o.seasonal.p = 1;
        assert!(o.validate().is_ok());
        o.seasonal.period = 0;
        assert!(o.validate().is_err());
    }
}
