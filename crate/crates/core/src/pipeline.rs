//! Per-county forecasting: design matrix, preprocessing, model fitting with
//! a four-level fallback chain, recursive multi-step prediction and the
//! statewide aggregate.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{build_design_matrix, default_lag_config, ColumnSource, DesignSpec, LagSpec};
use crate::optim::OptimOptions;
use crate::panel::{format_timestamp, is_missing, Column, PanelDataset, SeriesKey};
use crate::sarimax::{self, FitResult, Forecaster, ModelOrder};
use crate::selection::correlation_of_columns;

pub const VARIANCE_FLOOR: f64 = 1e-8;
pub const REDUNDANCY_THRESHOLD: f64 = 0.95;

/// Columns kept by [`preprocess`] and their training mean and standard
/// deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessState {
    pub kept_columns: Vec<String>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

fn column_stats(col: &[f64]) -> (f64, f64) {
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Drops near-constant columns (variance at most 1e-8), then columns whose
/// absolute correlation with an earlier kept column exceeds 0.95, then
/// z-scores what is left. Variances use the population (1/n) form.
pub fn preprocess(names: &[String], x: &DMatrix<f64>) -> Result<(DMatrix<f64>, PreprocessState)> {
    if names.len() != x.ncols() {
        return Err(Error::invalid("column names do not match the design matrix"));
    }
    if x.nrows() < 2 {
        return Err(Error::InsufficientData("preprocessing needs at least 2 rows".into()));
    }
    let mut varying = Vec::new();
    for j in 0..x.ncols() {
        let col: Vec<f64> = x.column(j).iter().copied().collect();
        let (_, var) = column_stats(&col);
        if var > VARIANCE_FLOOR {
            varying.push(j);
        }
    }
    if varying.is_empty() {
        return Err(Error::Empty("every regressor is constant".into()));
    }
    let sub = x.select_columns(varying.iter());
    let sub_names: Vec<String> = varying.iter().map(|&j| names[j].clone()).collect();
    let r = correlation_of_columns(&sub_names, &sub)?;
    let mut kept: Vec<usize> = Vec::new();
    for a in 0..sub_names.len() {
        if kept.iter().all(|&b| r.get(a, b).abs() <= REDUNDANCY_THRESHOLD) {
            kept.push(a);
        }
    }
    let mut state = PreprocessState {
        kept_columns: Vec::with_capacity(kept.len()),
        means: Vec::with_capacity(kept.len()),
        sds: Vec::with_capacity(kept.len()),
    };
    for &a in &kept {
        let col: Vec<f64> = sub.column(a).iter().copied().collect();
        let (mean, var) = column_stats(&col);
        state.kept_columns.push(sub_names[a].clone());
        state.means.push(mean);
        state.sds.push(var.sqrt());
    }
    let out = apply_preprocess(names, x, &state)?;
    Ok((out, state))
}

/// Selects the recorded columns, in recorded order, and applies the recorded
/// standardization.
pub fn apply_preprocess(names: &[String], x: &DMatrix<f64>, state: &PreprocessState) -> Result<DMatrix<f64>> {
    let idx: Vec<usize> = state
        .kept_columns
        .iter()
        .map(|c| names.iter().position(|n| n == c).ok_or_else(|| Error::UnknownFeature(c.clone())))
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_fn(x.nrows(), idx.len(), |i, k| {
        (x[(i, idx[k])] - state.means[k]) / state.sds[k]
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ModelLevel {
    Sarimax,
    ArimaExog,
    Arima,
    Naive,
}

impl ModelLevel {
    pub const CHAIN: [ModelLevel; 4] = [ModelLevel::Sarimax, ModelLevel::ArimaExog, ModelLevel::Arima, ModelLevel::Naive];

    pub fn uses_exog(self) -> bool {
        matches!(self, ModelLevel::Sarimax | ModelLevel::ArimaExog)
    }
}

impl fmt::Display for ModelLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelLevel::Sarimax => "SARIMAX",
            ModelLevel::ArimaExog => "ARIMA_EXOG",
            ModelLevel::Arima => "ARIMA",
            ModelLevel::Naive => "NAIVE",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub level: ModelLevel,
    pub accepted: bool,
    pub reason: Option<String>,
}

/// Model estimation seam. The pipeline uses [`MleFitter`]; tests substitute
/// doubles that fail chosen levels.
pub trait Fitter: Sync {
    fn fit(&self, level: ModelLevel, y: &[f64], x: &DMatrix<f64>, order: &ModelOrder, opts: &OptimOptions)
        -> Result<FitResult>;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct MleFitter;

impl Fitter for MleFitter {
    fn fit(
        &self,
        _level: ModelLevel,
        y: &[f64],
        x: &DMatrix<f64>,
        order: &ModelOrder,
        opts: &OptimOptions,
    ) -> Result<FitResult> {
        sarimax::fit(y, x, order, opts)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CountyFit {
    Model {
        fit: Box<FitResult>,
        /// Training mean removed from the target before fitting and added
        /// back to forecasts.
        offset: f64,
    },
    Naive {
        mean: f64,
    },
}

/// Accepted model of one (county, horizon) task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountyModel {
    pub county: SeriesKey,
    pub horizon: usize,
    pub level: ModelLevel,
    pub fit: CountyFit,
    /// Present for the exogenous levels.
    pub preprocess: Option<PreprocessState>,
    /// Raw design columns feeding the preprocessing step.
    pub sources: Vec<ColumnSource>,
    pub attempts: Vec<Attempt>,
}

fn finite_ok(fit: &FitResult) -> std::result::Result<(), String> {
    if !fit.converged {
        return Err(fit.failure.clone().unwrap_or_else(|| "did not converge".into()));
    }
    if !fit.loglik.is_finite() {
        return Err("log-likelihood is not finite".into());
    }
    Ok(())
}

/// Mean of the non-missing values of the last `window` entries (all if
/// `None`), floored at zero.
pub fn historical_mean(y: &[f64], window: Option<usize>) -> f64 {
    let from = window.map_or(0, |w| y.len().saturating_sub(w));
    let (s, n) = y[from..]
        .iter()
        .filter(|v| !is_missing(**v) && v.is_finite())
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        (s / n as f64).max(0.0)
    }
}

/// Design-matrix inputs for the exogenous levels.
pub struct ExogInput<'a> {
    pub names: &'a [String],
    pub x: &'a DMatrix<f64>,
    pub y: &'a [f64],
}

/// Result of walking the fallback chain.
#[derive(Clone, Debug, PartialEq)]
pub struct FallbackOutcome {
    pub level: ModelLevel,
    pub fit: CountyFit,
    pub preprocess: Option<PreprocessState>,
    pub attempts: Vec<Attempt>,
}

/// Walks SARIMAX, ARIMA with exog, ARIMA, naive mean. A level is taken when
/// its fit converged with a finite likelihood and `accept` agrees (the
/// pipeline uses it to require finite forecasts). `y_plain` is the series
/// used without regressors. Targets are centred at their mean before
/// fitting; the mean travels with the fit as its offset. A constant
/// `y_plain` goes straight to the naive level.
#[allow(clippy::too_many_arguments)]
/// Veto applied to each fitted level: receives the level, the fit, the target
/// offset and the exogenous scaling, and returns a rejection reason.
pub type AcceptFn<'a> = dyn Fn(ModelLevel, &FitResult, f64, Option<&PreprocessState>) -> std::result::Result<(), String> + 'a;

pub fn fit_with_fallback(
    exog: Option<ExogInput<'_>>,
    y_plain: &[f64],
    order: &ModelOrder,
    opts: &OptimOptions,
    fitter: &dyn Fitter,
    naive_window: Option<usize>,
    accept: &AcceptFn<'_>,
) -> FallbackOutcome {
    let mut attempts = Vec::new();
    let constant = y_plain.len() < 2 || column_stats(y_plain).1 <= VARIANCE_FLOOR;
    let prepared = exog.map(|e| preprocess(e.names, e.x).map(|(xs, state)| (xs, state, centred(e.y))));
    let plain = centred(y_plain);
    for level in ModelLevel::CHAIN {
        if level == ModelLevel::Naive {
            break;
        }
        let tried: std::result::Result<(FitResult, f64, Option<PreprocessState>), String> = (|| {
            if constant {
                return Err("outage history is constant".to_string());
            }
            let level_order = if level == ModelLevel::Sarimax { *order } else { order.non_seasonal() };
            if level.uses_exog() {
                let (xs, state, (y, offset)) = match &prepared {
                    None => return Err("no regressors available".to_string()),
                    Some(Err(e)) => return Err(format!("preprocessing failed: {e}")),
                    Some(Ok(p)) => p,
                };
                let fit = fitter.fit(level, y, xs, &level_order, opts).map_err(|e| e.to_string())?;
                finite_ok(&fit)?;
                accept(level, &fit, *offset, Some(state))?;
                Ok((fit, *offset, Some(state.clone())))
            } else {
                let (y, offset) = &plain;
                let x0 = DMatrix::zeros(y.len(), 0);
                let fit = fitter.fit(level, y, &x0, &level_order, opts).map_err(|e| e.to_string())?;
                finite_ok(&fit)?;
                accept(level, &fit, *offset, None)?;
                Ok((fit, *offset, None))
            }
        })();
        match tried {
            Ok((fit, offset, state)) => {
                attempts.push(Attempt {
                    level,
                    accepted: true,
                    reason: None,
                });
                return FallbackOutcome {
                    level,
                    fit: CountyFit::Model {
                        fit: Box::new(fit),
                        offset,
                    },
                    preprocess: state,
                    attempts,
                };
            }
            Err(reason) => attempts.push(Attempt {
                level,
                accepted: false,
                reason: Some(reason),
            }),
        }
    }
    attempts.push(Attempt {
        level: ModelLevel::Naive,
        accepted: true,
        reason: None,
    });
    FallbackOutcome {
        level: ModelLevel::Naive,
        fit: CountyFit::Naive {
            mean: historical_mean(y_plain, naive_window),
        },
        preprocess: None,
        attempts,
    }
}

fn centred(y: &[f64]) -> (Vec<f64>, f64) {
    if y.is_empty() {
        return (Vec::new(), 0.0);
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    (y.iter().map(|v| v - mean).collect(), mean)
}

/// Value source for hours at and after the end of the training panel.
struct FutureLookup<'a> {
    panel: &'a PanelDataset,
    county: usize,
    predictions: &'a [f64],
}

impl FutureLookup<'_> {
    fn get(&self, column: &Column, t: usize) -> Option<f64> {
        let n = self.panel.time().len();
        let series = self.panel.series(column, self.county).ok()?;
        if t < n {
            return Some(series[t]).filter(|v| !is_missing(*v));
        }
        match column {
            Column::Outages => self.predictions.get(t - n).copied(),
            _ => series.iter().rev().copied().find(|v| !is_missing(*v)),
        }
    }
}

/// Standardized regressor row for forecast step `step` (1-based). Weather
/// and tracked values past the panel end are frozen at their last
/// observation; outage lags past the end read `predictions_so_far`.
pub fn build_future_exog(
    panel: &PanelDataset,
    county: &SeriesKey,
    sources: &[ColumnSource],
    state: &PreprocessState,
    step: usize,
    predictions_so_far: &[f64],
) -> Result<Vec<f64>> {
    if step == 0 {
        return Err(Error::invalid("forecast steps start at 1"));
    }
    let c = panel
        .county_index(county)
        .ok_or_else(|| Error::UnknownCounty(county.to_string()))?;
    let lookup = FutureLookup {
        panel,
        county: c,
        predictions: predictions_so_far,
    };
    let t = panel.time().len() + step - 1;
    let hour = panel.time().hour_of_day(t);
    let get = |col: &Column, i: usize| lookup.get(col, i);
    let mut row = Vec::with_capacity(state.kept_columns.len());
    for (k, name) in state.kept_columns.iter().enumerate() {
        let src = sources
            .iter()
            .find(|s| &s.name() == name)
            .ok_or_else(|| Error::UnknownFeature(name.clone()))?;
        let raw = src.evaluate(t, hour, &get).ok_or_else(|| {
            Error::invalid(format!(
                "county {county}: no value for {name} at forecast step {step} (predictions must be filled in order)"
            ))
        })?;
        row.push((raw - state.means[k]) / state.sds[k]);
    }
    Ok(row)
}

/// Clamped predictions for steps `1..=h`.
pub fn predict_county(model: &CountyModel, panel: &PanelDataset, h: usize) -> Result<Vec<f64>> {
    match &model.fit {
        CountyFit::Naive { mean } => Ok(vec![mean.max(0.0); h]),
        CountyFit::Model { fit, offset } => {
            raw_forecast(fit, *offset, model.preprocess.as_ref(), &model.sources, panel, &model.county, h)
                .map(|raw| raw.into_iter().map(|v| v.max(0.0)).collect())
        }
    }
}

/// Unclamped forecasts; outage lags are fed the clamped values.
fn raw_forecast(
    fit: &FitResult,
    offset: f64,
    state: Option<&PreprocessState>,
    sources: &[ColumnSource],
    panel: &PanelDataset,
    county: &SeriesKey,
    h: usize,
) -> Result<Vec<f64>> {
    let mut fc = Forecaster::new(fit)?;
    let mut clamped = Vec::with_capacity(h);
    let mut raw = Vec::with_capacity(h);
    for step in 1..=h {
        let row = match state {
            Some(s) => build_future_exog(panel, county, sources, s, step, &clamped)?,
            None => Vec::new(),
        };
        let v = fc.next(&row)? + offset;
        if !v.is_finite() {
            return Err(Error::Model(format!("non-finite forecast at step {step}")));
        }
        raw.push(v);
        clamped.push(v.max(0.0));
    }
    Ok(raw)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub horizons: Vec<usize>,
    pub order: ModelOrder,
    pub optim: OptimOptions,
    pub lags: Vec<LagSpec>,
    /// Trailing hours averaged by the naive level; all history if unset.
    pub naive_window: Option<usize>,
    pub aggregate: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            horizons: vec![24, 48],
            order: ModelOrder::default(),
            optim: OptimOptions::default(),
            lags: default_lag_config(),
            naive_window: None,
            aggregate: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return Err(Error::invalid("horizons must be a non-empty list of positive integers"));
        }
        self.order.validate()?;
        self.optim.validate()?;
        if self.naive_window == Some(0) {
            return Err(Error::invalid("naive window must be positive"));
        }
        Ok(())
    }
}

/// Fits and forecasts one county for one horizon.
pub fn forecast_county(
    panel: &PanelDataset,
    county: &SeriesKey,
    spec: &DesignSpec,
    horizon: usize,
    config: &PipelineConfig,
    fitter: &dyn Fitter,
) -> Result<(CountyModel, Vec<f64>)> {
    let c = panel
        .county_index(county)
        .ok_or_else(|| Error::UnknownCounty(county.to_string()))?;
    let y_plain = panel.outages(c);
    let design = build_design_matrix(panel, county, spec);
    let sources = match &design {
        Ok(d) => d.sources.clone(),
        Err(_) => Vec::new(),
    };
    let names: Vec<String> = sources.iter().map(ColumnSource::name).collect();
    let exog = design.as_ref().ok().map(|d| ExogInput {
        names: &names,
        x: &d.values,
        y: &d.target,
    });
    let accept = |_: ModelLevel, fit: &FitResult, offset: f64, state: Option<&PreprocessState>| {
        raw_forecast(fit, offset, state, &sources, panel, county, horizon)
            .map(|_| ())
            .map_err(|e| format!("forecast failed: {e}"))
    };
    let plain_ok = y_plain.iter().all(|v| v.is_finite());
    let y_for_arima: Vec<f64> = if plain_ok {
        y_plain.to_vec()
    } else {
        y_plain.iter().copied().filter(|v| v.is_finite()).collect()
    };
    let outcome = fit_with_fallback(
        exog,
        &y_for_arima,
        &config.order,
        &config.optim,
        fitter,
        config.naive_window,
        &accept,
    );
    let model = CountyModel {
        county: county.clone(),
        horizon,
        level: outcome.level,
        fit: outcome.fit,
        preprocess: outcome.preprocess,
        sources: if outcome.level.uses_exog() { sources.clone() } else { Vec::new() },
        attempts: outcome.attempts,
    };
    let preds = predict_county(&model, panel, horizon)?;
    Ok((model, preds))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountyForecast {
    pub county: SeriesKey,
    pub horizon: usize,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastSet {
    /// Index of the first forecast hour on the panel's clock.
    pub origin: usize,
    /// Sorted by (county, horizon).
    pub counties: Vec<CountyForecast>,
    /// Per horizon, the sum over counties of each step.
    pub statewide: BTreeMap<usize, Vec<f64>>,
}

impl ForecastSet {
    pub fn get(&self, county: &SeriesKey, horizon: usize) -> Option<&[f64]> {
        self.counties
            .iter()
            .find(|f| &f.county == county && f.horizon == horizon)
            .map(|f| f.values.as_slice())
    }

    /// `county,horizon,step,timestamp,prediction`
    pub fn write_csv<W: Write>(&self, panel: &PanelDataset, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["county", "horizon", "step", "timestamp", "prediction"])?;
        for f in &self.counties {
            for (i, v) in f.values.iter().enumerate() {
                w.write_record([
                    f.county.as_str(),
                    &f.horizon.to_string(),
                    &(i + 1).to_string(),
                    &format_timestamp(panel.time().timestamp(self.origin + i)),
                    &v.to_string(),
                ])?;
            }
        }
        flush(w)
    }

    /// `horizon,step,timestamp,prediction`
    pub fn write_statewide_csv<W: Write>(&self, panel: &PanelDataset, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["horizon", "step", "timestamp", "prediction"])?;
        for (h, values) in &self.statewide {
            for (i, v) in values.iter().enumerate() {
                w.write_record([
                    &h.to_string(),
                    &(i + 1).to_string(),
                    &format_timestamp(panel.time().timestamp(self.origin + i)),
                    &v.to_string(),
                ])?;
            }
        }
        flush(w)
    }
}

fn flush<W: Write>(mut w: csv::Writer<W>) -> Result<()> {
    w.flush().map_err(|e| Error::Io {
        path: "csv output".into(),
        source: e,
    })
}

/// Sums county forecasts per step, visiting counties in key order so the
/// result does not depend on input order.
pub fn aggregate(counties: &[CountyForecast]) -> BTreeMap<usize, Vec<f64>> {
    let mut sorted: Vec<&CountyForecast> = counties.iter().collect();
    sorted.sort_by(|a, b| (&a.county, a.horizon).cmp(&(&b.county, b.horizon)));
    let mut out: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for f in sorted {
        let acc = out.entry(f.horizon).or_insert_with(|| vec![0.0; f.values.len()]);
        for (a, v) in acc.iter_mut().zip(&f.values) {
            *a += v;
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineRun {
    pub forecasts: ForecastSet,
    /// Sorted by (county, horizon).
    pub models: Vec<CountyModel>,
}

impl PipelineRun {
    pub fn audit_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.models)?)
    }
}

/// Independent fit and forecast for every (county, horizon) pair, on a pool
/// of `jobs` threads (0 lets rayon decide). Output order and values do not
/// depend on `jobs` or on the county order of the panel.
pub fn run_all(
    panel: &PanelDataset,
    spec: &DesignSpec,
    config: &PipelineConfig,
    fitter: &dyn Fitter,
    jobs: usize,
) -> Result<PipelineRun> {
    config.validate()?;
    if panel.n_counties() == 0 || panel.time().is_empty() {
        return Err(Error::Empty("panel has no counties or no hours".into()));
    }
    let mut tasks: Vec<(SeriesKey, usize)> = panel
        .counties()
        .iter()
        .flat_map(|c| config.horizons.iter().map(move |&h| (c.clone(), h)))
        .collect();
    tasks.sort();
    tasks.dedup();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    let results: Vec<(CountyModel, Vec<f64>)> = pool.install(|| {
        tasks
            .par_iter()
            .map(|(county, h)| forecast_county(panel, county, spec, *h, config, fitter))
            .collect::<Result<_>>()
    })?;
    let mut models = Vec::with_capacity(results.len());
    let mut counties = Vec::with_capacity(results.len());
    for (model, values) in results {
        counties.push(CountyForecast {
            county: model.county.clone(),
            horizon: model.horizon,
            values,
        });
        models.push(model);
    }
    let statewide = if config.aggregate { aggregate(&counties) } else { BTreeMap::new() };
    Ok(PipelineRun {
        forecasts: ForecastSet {
            origin: panel.time().len(),
            counties,
            statewide,
        },
        models,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::TimeIndex;
    use crate::sarimax::SarimaxParams;
    use chrono::TimeZone;
    use std::sync::Mutex;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn preprocess_drops_constant_and_duplicate() {
        let x = DMatrix::from_row_slice(4, 3, &[1.0, 5.0, 1.0, 2.0, 5.0, 2.0, 3.0, 5.0, 3.0, 4.0, 5.0, 4.0]);
        let (out, state) = preprocess(&names(&["a", "c", "b"]), &x).unwrap();
        assert_eq!(state.kept_columns, names(&["a"]));
        let col = out.column(0);
        let mean = col.sum() / 4.0;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
    }

    #[test]
    fn variance_floor_is_inclusive() {
        let s = (1e-9f64).sqrt();
        let x = DMatrix::from_row_slice(2, 2, &[-s, 0.0, s, 1.0]);
        let (_, state) = preprocess(&names(&["tiny", "ok"]), &x).unwrap();
        assert_eq!(state.kept_columns, names(&["ok"]));
        let all_const = DMatrix::from_element(3, 1, 2.0);
        assert!(preprocess(&names(&["k"]), &all_const).is_err());
    }

    #[test]
    fn replay_and_order_contract() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.3, 2.0, -1.0, 4.0, 0.5, 3.0, 2.0]);
        let n = names(&["p", "q"]);
        let (out, state) = preprocess(&n, &x).unwrap();
        assert_eq!(apply_preprocess(&n, &x, &state).unwrap(), out);
        let shuffled = DMatrix::from_fn(4, 2, |i, j| x[(i, 1 - j)]);
        assert_eq!(apply_preprocess(&names(&["q", "p"]), &shuffled, &state).unwrap(), out);
        let mean_row = DMatrix::from_row_slice(1, 2, &[state.means[0], state.means[1]]);
        assert_eq!(apply_preprocess(&n, &mean_row, &state).unwrap(), DMatrix::zeros(1, 2));
        assert!(matches!(
            apply_preprocess(&names(&["p"]), &x.columns(0, 1).into_owned(), &state),
            Err(Error::UnknownFeature(c)) if c == "q"
        ));
    }

    struct Scripted {
        fail: Vec<ModelLevel>,
        seen: Mutex<Vec<ModelLevel>>,
    }

    impl Fitter for Scripted {
        fn fit(&self, level: ModelLevel, y: &[f64], x: &DMatrix<f64>, order: &ModelOrder, opts: &OptimOptions) -> Result<FitResult> {
            self.seen.lock().unwrap().push(level);
            if self.fail.contains(&level) {
                return Err(Error::Model("injected".into()));
            }
            MleFitter.fit(level, y, x, order, opts)
        }
    }

    fn always_ok(_: ModelLevel, _: &FitResult, _: f64, _: Option<&PreprocessState>) -> std::result::Result<(), String> {
        Ok(())
    }

    #[test]
    fn fallback_descends_in_order() {
        let y: Vec<f64> = (0..80).map(|t| 5.0 + (t as f64 * 0.3).sin()).collect();
        let x = DMatrix::from_fn(80, 1, |t, _| (t as f64 * 0.3).cos());
        let n = names(&["x"]);
        for k in 0..4 {
            let fitter = Scripted {
                fail: ModelLevel::CHAIN[..k].to_vec(),
                seen: Mutex::new(vec![]),
            };
            let exog = ExogInput { names: &n, x: &x, y: &y };
            let out = fit_with_fallback(Some(exog), &y, &ModelOrder::default(), &OptimOptions::default(), &fitter, None, &always_ok);
            let levels: Vec<ModelLevel> = out.attempts.iter().map(|a| a.level).collect();
            assert_eq!(levels, ModelLevel::CHAIN[..=levels.len() - 1].to_vec());
            assert_eq!(out.level, *levels.last().unwrap());
            assert!(out.level >= ModelLevel::CHAIN[k.min(3)]);
            assert!(out.attempts[..out.attempts.len() - 1].iter().all(|a| !a.accepted));
        }
    }

    #[test]
    fn degenerate_series_is_naive_mean() {
        let y = [5.0, 5.0, 5.0];
        let out = fit_with_fallback(None, &y, &ModelOrder::default(), &OptimOptions::default(), &MleFitter, None, &always_ok);
        assert_eq!(out.level, ModelLevel::Naive);
        assert_eq!(out.fit, CountyFit::Naive { mean: 5.0 });
        let x = DMatrix::from_fn(3, 1, |t, _| t as f64);
        let n = names(&["x"]);
        let exog = ExogInput { names: &n, x: &x, y: &y };
        let out = fit_with_fallback(Some(exog), &y, &ModelOrder::default(), &OptimOptions::default(), &MleFitter, None, &always_ok);
        assert_eq!(out.attempts.len(), 4);
        assert!(out.attempts[..3].iter().all(|a| a.reason.as_deref() == Some("outage history is constant")));
        assert_eq!(historical_mean(&[1.0, 2.0, 9.0, 11.0], Some(2)), 10.0);
    }

    fn small_panel(n: usize, start_hour: u32) -> PanelDataset {
        let time = TimeIndex::new(chrono::Utc.with_ymd_and_hms(2023, 3, 1, start_hour, 0, 0).unwrap(), n).unwrap();
        let o: Vec<f64> = (0..n).map(|t| (t % 7) as f64).collect();
        let tr: Vec<f64> = (0..n).map(|t| 100.0 + (t % 5) as f64).collect();
        let w: Vec<f64> = (0..n).map(|t| (t as f64 * 0.1).sin()).collect();
        PanelDataset::from_series(
            time,
            vec![SeriesKey::new("A").unwrap()],
            vec![o],
            vec![tr],
            vec![("w".into(), vec![w])],
        )
        .unwrap()
    }

    fn lag_state(sources: &[ColumnSource]) -> PreprocessState {
        PreprocessState {
            kept_columns: sources.iter().map(ColumnSource::name).collect(),
            means: vec![0.0; sources.len()],
            sds: vec![1.0; sources.len()],
        }
    }

    #[test]
    fn future_exog_lags_and_clock() {
        let p = small_panel(48, 0);
        let key = SeriesKey::new("A").unwrap();
        let sources = vec![
            ColumnSource::Lag { column: Column::Outages, lag: 1 },
            ColumnSource::Lag { column: Column::Outages, lag: 24 },
            ColumnSource::Current { column: Column::Weather("w".into()) },
            ColumnSource::Lag { column: Column::Tracked, lag: 1 },
            ColumnSource::HourSin,
            ColumnSource::HourCos,
        ];
        let state = lag_state(&sources);
        let o = p.outages(0);
        let row = build_future_exog(&p, &key, &sources, &state, 1, &[]).unwrap();
        assert_eq!(row[0], o[47]);
        assert_eq!(row[1], o[48 - 24]);
        assert_eq!(row[2], p.weather(0, 0)[47]);
        assert_eq!(row[3], p.tracked(0)[47]);
        // last observed hour is 23, so step 1 is hour 0
        assert_eq!((row[4], row[5]), (0.0, 1.0));
        let preds: Vec<f64> = (0..24).map(|i| 100.0 + i as f64).collect();
        let row25 = build_future_exog(&p, &key, &sources, &state, 25, &preds).unwrap();
        assert_eq!(row25[1], preds[0]);
        assert_eq!(row25[0], preds[23]);
        assert_eq!(row25[2], p.weather(0, 0)[47]);
        assert!(build_future_exog(&p, &key, &sources, &state, 25, &preds[..10]).is_err());
    }

    fn model_with(fit: CountyFit, sources: Vec<ColumnSource>, state: Option<PreprocessState>) -> CountyModel {
        CountyModel {
            county: SeriesKey::new("A").unwrap(),
            horizon: 3,
            level: ModelLevel::Sarimax,
            fit,
            preprocess: state,
            sources,
            attempts: vec![],
        }
    }

    fn fixed_fit(order: ModelOrder, params: SarimaxParams, state: Vec<f64>) -> FitResult {
        FitResult {
            order,
            params,
            loglik: 0.0,
            converged: true,
            method: None,
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
    fn clamp_and_naive_prediction() {
        let p = small_panel(30, 0);
        let naive = model_with(CountyFit::Naive { mean: 7.5 }, vec![], None);
        assert_eq!(predict_county(&naive, &p, 3).unwrap(), vec![7.5; 3]);

        let order = ModelOrder::new(0, 0, 0);
        let src = vec![ColumnSource::HourSin];
        let state = lag_state(&src);
        // beta * sin(hour): hours 6 and 18 give +1 and -1
        let fit = fixed_fit(order, SarimaxParams::zeros(&order, vec![4.1], 1.0), vec![0.0]);
        let p18 = small_panel(24, 17);
        let m = model_with(CountyFit::Model { fit: Box::new(fit), offset: 0.0 }, src, Some(state));
        // last observed hour is 16, so step 14 lands on hour 6
        let out = predict_county(&m, &p18, 14).unwrap();
        assert!(out.iter().all(|v| *v >= 0.0));
        assert_eq!(out[0], 0.0);
        assert!((out[13] - 4.1).abs() < 1e-12);
    }

    #[test]
    fn ar1_prediction_matches_core_forecast() {
        let p = small_panel(30, 0);
        let order = ModelOrder::new(1, 0, 0);
        let mut params = SarimaxParams::zeros(&order, vec![], 1.0);
        params.phi = vec![0.8];
        let fit = fixed_fit(order, params, vec![3.0]);
        let direct = sarimax::forecast(&fit, 5, &DMatrix::zeros(5, 0)).unwrap();
        let m = model_with(CountyFit::Model { fit: Box::new(fit), offset: 0.0 }, vec![], None);
        assert_eq!(predict_county(&m, &p, 5).unwrap(), direct);
    }

    #[test]
    fn offset_is_added_back() {
        let p = small_panel(30, 0);
        let order = ModelOrder::new(0, 0, 0);
        let fit = fixed_fit(order, SarimaxParams::zeros(&order, vec![], 1.0), vec![0.0]);
        let m = model_with(CountyFit::Model { fit: Box::new(fit), offset: 7.25 }, vec![], None);
        assert_eq!(predict_county(&m, &p, 4).unwrap(), vec![7.25; 4]);
    }

    #[test]
    fn fitted_levels_see_centred_targets() {
        struct Spy(Mutex<Vec<f64>>);
        impl Fitter for Spy {
            fn fit(&self, level: ModelLevel, y: &[f64], x: &DMatrix<f64>, order: &ModelOrder, opts: &OptimOptions) -> Result<FitResult> {
                self.0.lock().unwrap().push(y.iter().sum::<f64>() / y.len() as f64);
                MleFitter.fit(level, y, x, order, opts)
            }
        }
        let y: Vec<f64> = (0..120).map(|t| 30.0 + 3.0 * (t as f64 * 0.7).sin()).collect();
        let spy = Spy(Mutex::new(vec![]));
        let out = fit_with_fallback(None, &y, &ModelOrder::default(), &OptimOptions::default(), &spy, None, &always_ok);
        assert!(spy.0.lock().unwrap().iter().all(|m| m.abs() < 1e-9));
        match out.fit {
            CountyFit::Model { offset, .. } => assert!((offset - y.iter().sum::<f64>() / 120.0).abs() < 1e-12),
            CountyFit::Naive { .. } => panic!("expected a fitted model"),
        }
    }

    #[test]
    fn aggregation_is_exact_sum() {
        let f = |c: &str, v: Vec<f64>| CountyForecast {
            county: SeriesKey::new(c).unwrap(),
            horizon: 2,
            values: v,
        };
        let agg = aggregate(&[f("b", vec![0.1, 2.0]), f("a", vec![0.2, 3.0])]);
        assert_eq!(agg[&2], vec![0.2 + 0.1, 3.0 + 2.0]);
    }
}
