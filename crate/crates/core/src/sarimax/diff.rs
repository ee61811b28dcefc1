use super::state_space::poly_mul;
use crate::error::{Error, Result};

/// Coefficients `delta` of `(1 - B)^d (1 - B^s)^D = sum delta_j B^j`,
/// with `delta[0] = 1`.
pub fn differencing_poly(d: usize, seasonal_d: usize, period: usize) -> Vec<f64> {
    let mut poly = vec![1.0];
    for _ in 0..d {
        poly = poly_mul(&poly, &[1.0, -1.0]);
    }
    if seasonal_d > 0 {
        let mut seasonal = vec![0.0; period + 1];
        seasonal[0] = 1.0;
        seasonal[period] = -1.0;
        for _ in 0..seasonal_d {
            poly = poly_mul(&poly, &seasonal);
        }
    }
    poly
}

/// Applies `(1 - B)^d (1 - B^s)^D`. The output is `d + D*s` shorter.
pub fn difference(y: &[f64], d: usize, seasonal_d: usize, period: usize) -> Result<Vec<f64>> {
    let delta = differencing_poly(d, seasonal_d, period);
    let lag = delta.len() - 1;
    if y.len() <= lag {
        return Err(Error::InsufficientData(format!(
            "differencing needs more than {lag} observations, got {}",
            y.len()
        )));
    }
    Ok((lag..y.len())
        .map(|t| delta.iter().enumerate().map(|(j, c)| c * y[t - j]).sum())
        .collect())
}

/// Inverse of [`difference`]: rebuilds levels from differenced values given
/// the last `d + D*s` levels preceding them.
pub fn integrate(diffs: &[f64], anchors: &[f64], d: usize, seasonal_d: usize, period: usize) -> Result<Vec<f64>> {
    let delta = differencing_poly(d, seasonal_d, period);
    let lag = delta.len() - 1;
    if anchors.len() < lag {
        return Err(Error::InsufficientData(format!(
            "integration needs {lag} anchor values, got {}",
            anchors.len()
        )));
    }
    let mut levels: Vec<f64> = anchors[anchors.len() - lag..].to_vec();
    for &w in diffs {
        let t = levels.len();
        let carried: f64 = delta.iter().enumerate().skip(1).map(|(j, c)| c * levels[t - j]).sum();
        levels.push(w - carried);
    }
    Ok(levels.split_off(lag))
}
