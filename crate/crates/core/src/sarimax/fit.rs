use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::diff::{difference, differencing_poly};
use super::kalman::kalman_filter;
use super::state_space::{to_state_space, StateSpaceRep};
use super::transform::{param_len, transform_params};
use super::{ModelOrder, SarimaxParams};
use crate::error::{Error, Result};
use crate::optim::{sequential_optimize, Method, OptimError, OptimOptions};

/// Estimated model plus everything needed to forecast from the end of the
/// sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub order: ModelOrder,
    pub params: SarimaxParams,
    #[serde(with = "crate::serde_util::nonfinite_as_null")]
    pub loglik: f64,
    pub converged: bool,
    pub method: Option<Method>,
    pub iterations: usize,
    /// Observations entering the likelihood (after differencing).
    pub nobs: usize,
    /// One-step innovations from the final filter pass.
    #[serde(skip)]
    pub residuals: Vec<f64>,
    /// `a_{T|T}` of the (differenced) process.
    pub filtered_state: Vec<f64>,
    /// Last `d + D*s` levels of `y`, used to undo differencing.
    pub y_anchor: Vec<f64>,
    /// Last `d + D*s` regressor rows.
    pub x_anchor: Vec<Vec<f64>>,
    pub failure: Option<String>,
}

impl FitResult {
    pub fn n_exog(&self) -> usize {
        self.params.beta.len()
    }

    pub fn is_usable(&self) -> bool {
        self.converged && self.loglik.is_finite()
    }
}

fn difference_columns(x: &DMatrix<f64>, order: &ModelOrder) -> Result<DMatrix<f64>> {
    let lag = order.diff_lag();
    if lag == 0 {
        return Ok(x.clone());
    }
    let s = &order.seasonal;
    let mut out = DMatrix::zeros(x.nrows().saturating_sub(lag), x.ncols());
    for c in 0..x.ncols() {
        let col: Vec<f64> = x.column(c).iter().copied().collect();
        let d = difference(&col, order.d, s.d, s.period)?;
        out.set_column(c, &DVector::from_vec(d));
    }
    Ok(out)
}

/// OLS coefficients and residual variance (pseudo-inverse, so rank-deficient
/// designs still produce a start).
fn ols_start(y: &[f64], x: &DMatrix<f64>) -> (Vec<f64>, f64) {
    let n = y.len() as f64;
    if x.ncols() == 0 {
        return (Vec::new(), y.iter().map(|v| v * v).sum::<f64>() / n);
    }
    let yv = DVector::from_column_slice(y);
    let beta = x
        .clone()
        .svd(true, true)
        .solve(&yv, 1e-10)
        .map(|b| b.iter().copied().collect::<Vec<_>>())
        .unwrap_or_else(|_| vec![0.0; x.ncols()]);
    let resid = yv - x * DVector::from_column_slice(&beta);
    (beta, resid.norm_squared() / n)
}

/// Maximum-likelihood fit. ARMA coefficients start at zero, regression
/// coefficients and `sigma^2` at their OLS values. Optimiser failure is not an
/// error: the result comes back with `converged == false` and a cause.
pub fn fit(y: &[f64], exog: &DMatrix<f64>, order: &ModelOrder, opts: &OptimOptions) -> Result<FitResult> {
    order.validate()?;
    opts.validate()?;
    if exog.nrows() != y.len() {
        return Err(Error::invalid(format!(
            "{} regressor rows for {} observations",
            exog.nrows(),
            y.len()
        )));
    }
    if y.iter().chain(exog.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite value in series or regressors"));
    }
    let lag = order.diff_lag();
    let needed = order.p + order.q + order.seasonal.p + order.seasonal.q + 1 + lag;
    if y.len() <= needed {
        return Err(Error::InsufficientData(format!(
            "need more than {needed} observations, got {}",
            y.len()
        )));
    }
    let s = &order.seasonal;
    let yd = difference(y, order.d, s.d, s.period)?;
    let xd = difference_columns(exog, order)?;
    let k = exog.ncols();
    let n = yd.len() as f64;

    let (beta0, resid_var) = ols_start(&yd, &xd);
    let sigma2_0 = if resid_var.is_finite() { resid_var.max(1e-8) } else { 1.0 };
    let mut u0 = vec![0.0; order.n_arma_params()];
    u0.extend(beta0);
    u0.push(sigma2_0.ln());
    debug_assert_eq!(u0.len(), param_len(order, k));

    let objective = |u: &[f64]| -> f64 {
        let Ok(params) = transform_params(u, order, k) else {
            return f64::INFINITY;
        };
        let Ok(rep) = to_state_space(order, &params) else {
            return f64::INFINITY;
        };
        match kalman_filter(&rep, &yd, &xd, &params.beta, params.sigma2) {
            Ok(Some(out)) => -out.loglik / n,
            _ => f64::INFINITY,
        }
    };

    let (u_star, mut converged, method, iterations, mut failure) =
        match sequential_optimize(&objective, &u0, None, opts) {
            Ok(out) => {
                let failure = (!out.converged).then(|| "no optimiser met the convergence tolerance".to_string());
                (out.x_star, out.converged, Some(out.method), out.iterations, failure)
            }
            Err(OptimError::TotalFailure) => (u0.clone(), false, None, 0, Some(OptimError::TotalFailure.to_string())),
            Err(e) => return Err(e.into()),
        };

    let params = transform_params(&u_star, order, k)?;
    let filtered = to_state_space(order, &params)
        .ok()
        .and_then(|rep| kalman_filter(&rep, &yd, &xd, &params.beta, params.sigma2).ok().flatten());
    let (loglik, residuals, filtered_state) = match filtered {
        Some(out) => (out.loglik, out.innovations, out.filtered_state),
        None => {
            converged = false;
            failure.get_or_insert_with(|| "likelihood not finite at the final estimate".into());
            (f64::NEG_INFINITY, Vec::new(), vec![0.0; state_dim(order)])
        }
    };

    let tail = y.len() - lag;
    Ok(FitResult {
        order: *order,
        params,
        loglik,
        converged,
        method,
        iterations,
        nobs: yd.len(),
        residuals,
        filtered_state,
        y_anchor: y[tail..].to_vec(),
        x_anchor: (tail..y.len()).map(|i| exog.row(i).iter().copied().collect()).collect(),
        failure,
    })
}

fn state_dim(order: &ModelOrder) -> usize {
    let s = &order.seasonal;
    (order.p + s.p * s.period).max(order.q + s.q * s.period + 1).max(1)
}

/// Step-by-step forecaster. Each call to [`Forecaster::next`] consumes the
/// regressor row for the next hour and returns the predicted level.
#[derive(Clone, Debug)]
pub struct Forecaster {
    rep: StateSpaceRep,
    beta: Vec<f64>,
    state: Vec<f64>,
    delta: Vec<f64>,
    y_hist: Vec<f64>,
    x_hist: Vec<Vec<f64>>,
}

impl Forecaster {
    pub fn new(fit: &FitResult) -> Result<Self> {
        let rep = to_state_space(&fit.order, &fit.params)?;
        if fit.filtered_state.len() != rep.dim() {
            return Err(Error::Model("filtered state does not match the model order".into()));
        }
        let s = &fit.order.seasonal;
        Ok(Self {
            beta: fit.params.beta.clone(),
            state: fit.filtered_state.clone(),
            delta: differencing_poly(fit.order.d, s.d, s.period),
            y_hist: fit.y_anchor.clone(),
            x_hist: fit.x_anchor.clone(),
            rep,
        })
    }

    /// Mean of the ARMA component for the next step, advancing the state.
    fn advance(&mut self) -> f64 {
        let r = self.rep.dim();
        let t = &self.rep.transition;
        let next: Vec<f64> = (0..r).map(|i| (0..r).map(|j| t[(i, j)] * self.state[j]).sum()).collect();
        self.state = next;
        self.state[0]
    }

    pub fn next(&mut self, x_row: &[f64]) -> Result<f64> {
        if x_row.len() != self.beta.len() {
            return Err(Error::invalid(format!(
                "regressor row has {} columns, model expects {}",
                x_row.len(),
                self.beta.len()
            )));
        }
        let arma = self.advance();
        let lag = self.delta.len() - 1;
        let mut w = arma;
        for (k, b) in self.beta.iter().enumerate() {
            let mut xd = x_row[k];
            for j in 1..=lag {
                xd += self.delta[j] * self.x_hist[self.x_hist.len() - j][k];
            }
            w += b * xd;
        }
        let carried: f64 = (1..=lag).map(|j| self.delta[j] * self.y_hist[self.y_hist.len() - j]).sum();
        let level = w - carried;
        if lag > 0 {
            self.y_hist.push(level);
            self.x_hist.push(x_row.to_vec());
            let excess = self.y_hist.len() - lag;
            self.y_hist.drain(..excess);
            self.x_hist.drain(..excess);
        }
        Ok(level)
    }
}

/// `h`-step mean forecast given future regressor rows.
pub fn forecast(fit: &FitResult, h: usize, x_future: &DMatrix<f64>) -> Result<Vec<f64>> {
    if x_future.nrows() != h || x_future.ncols() != fit.n_exog() {
        return Err(Error::invalid(format!(
            "future regressors are {}x{}, expected {}x{}",
            x_future.nrows(),
            x_future.ncols(),
            h,
            fit.n_exog()
        )));
    }
    let mut fc = Forecaster::new(fit)?;
    (0..h)
        .map(|i| {
            let row: Vec<f64> = x_future.row(i).iter().copied().collect();
            fc.next(&row)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manual_fit(order: ModelOrder, params: SarimaxParams, state: Vec<f64>) -> FitResult {
        FitResult {
            order,
            params,
            loglik: 0.0,
            converged: true,
            method: Some(Method::Lbfgsb),
            iterations: 0,
            nobs: 0,
            residuals: vec![],
            filtered_state: state,
            y_anchor: vec![],
            x_anchor: vec![],
            failure: None,
        }
    }

    #[test]
    fn ar1_forecast_decays() {
        let order = ModelOrder::new(1, 0, 0);
        let fit = manual_fit(order, SarimaxParams::zeros(&order, vec![], 1.0), vec![4.0]);
        let mut fit = fit;
        fit.params.phi = vec![0.5];
        assert_eq!(forecast(&fit, 2, &DMatrix::zeros(2, 0)).unwrap(), vec![2.0, 1.0]);
    }

    #[test]
    fn pure_regression_forecast() {
        let order = ModelOrder::default();
        let fit = manual_fit(order, SarimaxParams::zeros(&order, vec![3.0], 1.0), vec![0.0, 0.0]);
        let x = DMatrix::from_element(2, 1, 1.0);
        assert_eq!(forecast(&fit, 2, &x).unwrap(), vec![3.0, 3.0]);
        assert!(forecast(&fit, 2, &DMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn random_walk_forecast_integrates() {
        // d = 1, no ARMA terms: forecasts stay at the last level
        let order = ModelOrder::new(0, 1, 0);
        let mut fit = manual_fit(order, SarimaxParams::zeros(&order, vec![], 1.0), vec![0.0]);
        fit.y_anchor = vec![7.0];
        assert_eq!(forecast(&fit, 3, &DMatrix::zeros(3, 0)).unwrap(), vec![7.0; 3]);
    }

    #[test]
    fn constant_series_does_not_abort() {
        let y = vec![5.0; 50];
        let x = DMatrix::zeros(50, 1);
        let res = fit(&y, &x, &ModelOrder::default(), &OptimOptions::default()).unwrap();
        assert!(res.params.sigma2.is_finite());
        assert!(res.params.phi[0].is_finite());
    }

    #[test]
    fn too_short_is_error() {
        let y = [1.0, 2.0, 3.0];
        assert!(fit(&y, &DMatrix::zeros(3, 0), &ModelOrder::default(), &OptimOptions::default()).is_err());
    }

    #[test]
    fn fit_result_json_roundtrip_keeps_forecast_state() {
        let order = ModelOrder::default();
        let fit = manual_fit(order, SarimaxParams::zeros(&order, vec![1.5], 2.0), vec![0.1, 0.2]);
        let json = serde_json::to_string(&fit).unwrap();
        let back: FitResult = serde_json::from_str(&json).unwrap();
        assert_eq!(back, fit);
    }

    /// Conditional mean `Sigma_{future,past} Sigma_{past}^{-1} y` from the
    /// ARMA(1,1) autocovariance function.
    fn dense_conditional_mean(phi: f64, theta: f64, y: &[f64], h: usize) -> Vec<f64> {
        let g0 = (1.0 + 2.0 * phi * theta + theta * theta) / (1.0 - phi * phi);
        let g1 = (1.0 + phi * theta) * (phi + theta) / (1.0 - phi * phi);
        let gamma = |k: usize| if k == 0 { g0 } else { g1 * phi.powi(k as i32 - 1) };
        let n = y.len();
        let cov = DMatrix::from_fn(n, n, |i, j| gamma(i.abs_diff(j)));
        let w = cov.cholesky().unwrap().solve(&DVector::from_column_slice(y));
        (1..=h)
            .map(|k| (0..n).map(|t| gamma(n - 1 + k - t) * w[t]).sum())
            .collect()
    }

    #[test]
    fn forecast_equals_gaussian_conditional_mean() {
        use crate::sarimax::kalman_filter;
        let y = [0.4, 1.1, -0.3, 0.9, 1.6, 0.2, -0.8];
        let (phi, theta) = (0.7, -0.35);
        let order = ModelOrder::default();
        let mut params = SarimaxParams::zeros(&order, vec![], 1.3);
        params.phi = vec![phi];
        params.theta = vec![theta];
        let rep = to_state_space(&order, &params).unwrap();
        let out = kalman_filter(&rep, &y, &DMatrix::zeros(y.len(), 0), &[], params.sigma2)
            .unwrap()
            .unwrap();
        let fit = manual_fit(order, params, out.filtered_state);
        let got = forecast(&fit, 4, &DMatrix::zeros(4, 0)).unwrap();
        let want = dense_conditional_mean(phi, theta, &y, 4);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-10, "{got:?} vs {want:?}");
        }
    }

    fn simulate_arma11(phi: f64, theta: f64, n: usize, seed: u64) -> Vec<f64> {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let burn = 500;
        let mut u = Vec::with_capacity(n + burn);
        let (mut prev_u, mut prev_e) = (0.0, 0.0);
        for _ in 0..n + burn {
            let e: f64 = StandardNormal.sample(&mut rng);
            let v = phi * prev_u + e + theta * prev_e;
            u.push(v);
            prev_u = v;
            prev_e = e;
        }
        u.split_off(burn)
    }

    #[test]
    fn recovers_regression_with_arma_errors() {
        let n = 2000;
        let u = simulate_arma11(0.6, 0.3, n, 11);
        let x = DMatrix::from_fn(n, 2, |t, j| if j == 0 { (t as f64 * 0.05).sin() } else { ((t * 7) % 13) as f64 / 13.0 });
        let y: Vec<f64> = (0..n).map(|t| 2.0 * x[(t, 0)] - x[(t, 1)] + u[t]).collect();
        let res = fit(&y, &x, &ModelOrder::default(), &OptimOptions::default()).unwrap();
        assert!(res.converged, "{res:?}");
        let p = &res.params;
        assert!((p.phi[0] - 0.6).abs() < 0.08, "{p:?}");
        assert!((p.theta[0] - 0.3).abs() < 0.08, "{p:?}");
        assert!((p.beta[0] - 2.0).abs() < 0.25, "{p:?}");
        assert!((p.beta[1] + 1.0).abs() < 0.35, "{p:?}");
        assert!((p.sigma2 - 1.0).abs() < 0.1, "{p:?}");
        assert_eq!(res.residuals.len(), n);
    }

    #[test]
    fn differenced_fit_forecasts_in_levels() {
        let n = 400;
        let u = simulate_arma11(0.5, 0.0, n, 5);
        let mut y = vec![10.0];
        for t in 1..n {
            y.push(y[t - 1] + u[t]);
        }
        let order = ModelOrder::new(1, 1, 0);
        let res = fit(&y, &DMatrix::zeros(n, 0), &order, &OptimOptions::default()).unwrap();
        assert!((res.params.phi[0] - 0.5).abs() < 0.15);
        let fc = forecast(&res, 3, &DMatrix::zeros(3, 0)).unwrap();
        let last = y[n - 1];
        let step = res.params.phi[0] * (y[n - 1] - y[n - 2]);
        assert!((fc[0] - (last + step)).abs() < 1e-9 * last.abs().max(1.0));
    }
}
