//! Scoring against the all-zeros reference, backtesting over cutoffs, and
//! synthetic data for desk-scale checks.

mod synthetic;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::DesignSpec;
use crate::panel::{format_timestamp, is_missing, PanelDataset, SeriesKey};
use crate::pipeline::{run_all, CountyForecast, Fitter, ForecastSet, PipelineConfig};
use crate::serde_util::nonfinite_as_null;

pub use synthetic::{gen_arma, gen_panel, ArmaSpec, SyntheticSpec};

pub const BASELINE_NAME: &str = "Baseline (predict all zeros)";

fn check_scoring_input(pred: &[f64], actual: &[f64]) -> Result<()> {
    if pred.len() != actual.len() {
        return Err(Error::invalid(format!(
            "prediction length {} differs from actual length {}",
            pred.len(),
            actual.len()
        )));
    }
    if actual.is_empty() {
        return Err(Error::Empty("nothing to score".into()));
    }
    if pred.iter().chain(actual).any(|v| !v.is_finite()) {
        return Err(Error::invalid("scores need finite values"));
    }
    Ok(())
}

pub fn rmse(pred: &[f64], actual: &[f64]) -> Result<f64> {
    check_scoring_input(pred, actual)?;
    let sse: f64 = pred.iter().zip(actual).map(|(p, a)| (p - a) * (p - a)).sum();
    Ok((sse / actual.len() as f64).sqrt())
}

/// RMSE of predicting zero everywhere.
pub fn zero_baseline(actual: &[f64]) -> Result<f64> {
    rmse(&vec![0.0; actual.len()], actual)
}

/// Percentage reduction of `rmse` relative to `baseline`; `None` when the
/// baseline is zero.
pub fn improvement_pct(baseline: f64, rmse: f64) -> Option<f64> {
    (baseline > 0.0).then(|| 100.0 * (1.0 - rmse / baseline))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub method_name: String,
    pub rmse: f64,
    pub baseline_rmse: f64,
    pub improvement_pct: Option<f64>,
}

impl ScoreReport {
    pub fn score(method_name: impl Into<String>, pred: &[f64], actual: &[f64]) -> Result<Self> {
        let rmse = rmse(pred, actual)?;
        let baseline_rmse = zero_baseline(actual)?;
        Ok(Self {
            method_name: method_name.into(),
            rmse,
            baseline_rmse,
            improvement_pct: improvement_pct(baseline_rmse, rmse),
        })
    }

    pub fn baseline(actual: &[f64]) -> Result<Self> {
        Self::score(BASELINE_NAME, &vec![0.0; actual.len()], actual)
    }

    pub fn is_baseline(&self) -> bool {
        self.method_name == BASELINE_NAME
    }
}

/// Aligned `Method / RMSE / Improvement` table. Values use one decimal; the
/// baseline row shows `-` for improvement.
pub fn format_score_table(rows: &[ScoreReport]) -> String {
    let cells: Vec<[String; 3]> = rows
        .iter()
        .map(|r| {
            let imp = match (r.is_baseline(), r.improvement_pct) {
                (true, _) | (_, None) => "-".to_string(),
                (false, Some(p)) => format!("{p:.1}%"),
            };
            [r.method_name.clone(), format!("{:.1}", r.rmse), imp]
        })
        .collect();
    let header = ["Method".to_string(), "RMSE".to_string(), "Improvement".to_string()];
    let width = |k: usize| cells.iter().map(|c| c[k].len()).chain([header[k].len()]).max().unwrap_or(0);
    let (w0, w1, w2) = (width(0), width(1), width(2));
    let mut out = String::new();
    for row in std::iter::once(&header).chain(cells.iter()) {
        let _ = writeln!(out, "{:<w0$}  {:>w1$}  {:>w2$}", row[0], row[1], row[2]);
    }
    out
}

/// Produces forecasts from a training panel. Backtests call it once per
/// cutoff with the history before the cutoff.
pub trait PanelForecaster: Sync {
    fn name(&self) -> String;
    fn forecast(&self, train: &PanelDataset, horizons: &[usize]) -> Result<ForecastSet>;
}

/// The forecasting pipeline as a [`PanelForecaster`].
pub struct PipelineForecaster<'a> {
    pub spec: DesignSpec,
    pub config: PipelineConfig,
    pub fitter: &'a dyn Fitter,
    pub jobs: usize,
}

impl PanelForecaster for PipelineForecaster<'_> {
    fn name(&self) -> String {
        let o = &self.config.order;
        let s = &o.seasonal;
        if o.is_seasonal() {
            format!("SARIMAX({},{},{})({},{},{},{})", o.p, o.d, o.q, s.p, s.d, s.q, s.period)
        } else {
            format!("SARIMAX({},{},{})", o.p, o.d, o.q)
        }
    }

    fn forecast(&self, train: &PanelDataset, horizons: &[usize]) -> Result<ForecastSet> {
        let config = PipelineConfig {
            horizons: horizons.to_vec(),
            ..self.config.clone()
        };
        Ok(run_all(train, &self.spec, &config, self.fitter, self.jobs)?.forecasts)
    }
}

/// One scored forecast value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BacktestRecord {
    pub cutoff: String,
    pub county: SeriesKey,
    pub horizon: usize,
    pub step: usize,
    pub timestamp: String,
    #[serde(with = "nonfinite_as_null")]
    pub actual: f64,
    pub prediction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelledScores {
    pub label: String,
    pub rows: Vec<ScoreReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    /// Baseline row then model row, pooled over cutoffs, counties,
    /// horizons and steps.
    pub pooled: Vec<ScoreReport>,
    pub per_horizon: Vec<LabelledScores>,
    pub per_cutoff: Vec<LabelledScores>,
    /// Labelled `<county>/<horizon>`.
    pub per_county: Vec<LabelledScores>,
    /// Ordered by cutoff, county, horizon, step.
    pub records: Vec<BacktestRecord>,
}

impl BacktestReport {
    pub fn table(&self) -> String {
        format_score_table(&self.pooled)
    }

    /// Pooled table followed by one table per horizon.
    pub fn text(&self) -> String {
        let mut out = self.table();
        for h in &self.per_horizon {
            let _ = write!(out, "\n{}\n{}", h.label, format_score_table(&h.rows));
        }
        out
    }

    /// `cutoff,county,horizon,step,timestamp,actual,prediction`
    pub fn write_records_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["cutoff", "county", "horizon", "step", "timestamp", "actual", "prediction"])?;
        for r in &self.records {
            let actual = if is_missing(r.actual) { String::new() } else { r.actual.to_string() };
            w.write_record([
                r.cutoff.as_str(),
                r.county.as_str(),
                &r.horizon.to_string(),
                &r.step.to_string(),
                &r.timestamp,
                &actual,
                &r.prediction.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::Io {
            path: "backtest records".into(),
            source: e,
        })
    }
}

fn score_group<'a>(method: &str, label: String, records: impl Iterator<Item = &'a BacktestRecord>) -> Result<LabelledScores> {
    let (pred, actual): (Vec<f64>, Vec<f64>) = records
        .filter(|r| !is_missing(r.actual))
        .map(|r| (r.prediction, r.actual))
        .unzip();
    if actual.is_empty() {
        return Err(Error::Empty(format!("no observed actuals for {label}")));
    }
    Ok(LabelledScores {
        label,
        rows: vec![ScoreReport::baseline(&actual)?, ScoreReport::score(method, &pred, &actual)?],
    })
}

/// Trains on `[start, cutoff)` for each cutoff, forecasts every horizon and
/// scores against the panel's actuals.
pub fn backtest(
    panel: &PanelDataset,
    cutoffs: &[DateTime<Utc>],
    horizons: &[usize],
    forecaster: &dyn PanelForecaster,
) -> Result<BacktestReport> {
    if cutoffs.is_empty() {
        return Err(Error::invalid("backtest needs at least one cutoff"));
    }
    let max_h = *horizons
        .iter()
        .max()
        .ok_or_else(|| Error::invalid("backtest needs at least one horizon"))?;
    if horizons.contains(&0) {
        return Err(Error::invalid("horizons must be positive"));
    }
    let mut sorted_cutoffs = cutoffs.to_vec();
    sorted_cutoffs.sort();
    sorted_cutoffs.dedup();
    let mut records = Vec::new();
    for cutoff in &sorted_cutoffs {
        let origin = panel
            .time()
            .index_of(*cutoff)
            .filter(|&i| i > 0)
            .ok_or_else(|| Error::invalid(format!("cutoff {} is not inside the panel", format_timestamp(*cutoff))))?;
        if origin + max_h > panel.time().len() {
            return Err(Error::invalid(format!(
                "cutoff {} leaves {} test hours, horizon {max_h} needs more",
                format_timestamp(*cutoff),
                panel.time().len() - origin
            )));
        }
        let train = panel.slice(0, origin)?;
        let set = forecaster.forecast(&train, horizons)?;
        let label = format_timestamp(*cutoff);
        let mut counties: Vec<&CountyForecast> = set.counties.iter().collect();
        counties.sort_by(|a, b| (&a.county, a.horizon).cmp(&(&b.county, b.horizon)));
        for f in counties {
            let c = panel
                .county_index(&f.county)
                .ok_or_else(|| Error::UnknownCounty(f.county.to_string()))?;
            if f.values.len() != f.horizon {
                return Err(Error::Model(format!(
                    "{} returned {} values for horizon {}",
                    f.county,
                    f.values.len(),
                    f.horizon
                )));
            }
            let actual = panel.outages(c);
            for (i, &p) in f.values.iter().enumerate() {
                let t = origin + i;
                records.push(BacktestRecord {
                    cutoff: label.clone(),
                    county: f.county.clone(),
                    horizon: f.horizon,
                    step: i + 1,
                    timestamp: format_timestamp(panel.time().timestamp(t)),
                    actual: actual[t],
                    prediction: p,
                });
            }
        }
    }
    let method = forecaster.name();
    let pooled = score_group(&method, "pooled".into(), records.iter())?.rows;
    let mut by_h: BTreeMap<usize, Vec<&BacktestRecord>> = BTreeMap::new();
    let mut by_cutoff: BTreeMap<&str, Vec<&BacktestRecord>> = BTreeMap::new();
    let mut by_county: BTreeMap<(&SeriesKey, usize), Vec<&BacktestRecord>> = BTreeMap::new();
    for r in &records {
        by_h.entry(r.horizon).or_default().push(r);
        by_cutoff.entry(&r.cutoff).or_default().push(r);
        by_county.entry((&r.county, r.horizon)).or_default().push(r);
    }
    let per_horizon = by_h
        .into_iter()
        .map(|(h, rs)| score_group(&method, format!("horizon {h}"), rs.into_iter()))
        .collect::<Result<_>>()?;
    let per_cutoff = by_cutoff
        .into_iter()
        .map(|(c, rs)| score_group(&method, format!("cutoff {c}"), rs.into_iter()))
        .collect::<Result<_>>()?;
    let per_county = by_county
        .into_iter()
        .map(|((c, h), rs)| score_group(&method, format!("{c}/{h}"), rs.into_iter()))
        .collect::<Result<_>>()?;
    Ok(BacktestReport {
        pooled,
        per_horizon,
        per_cutoff,
        per_county,
        records,
    })
}

/// Returns the panel's own future values; scores exactly zero error.
pub struct PerfectOracle<'a> {
    pub panel: &'a PanelDataset,
}

impl PanelForecaster for PerfectOracle<'_> {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn forecast(&self, train: &PanelDataset, horizons: &[usize]) -> Result<ForecastSet> {
        let origin = train.time().len();
        let mut counties = Vec::new();
        for (c, key) in self.panel.counties().iter().enumerate() {
            for &h in horizons {
                counties.push(CountyForecast {
                    county: key.clone(),
                    horizon: h,
                    values: self.panel.outages(c)[origin..origin + h].to_vec(),
                });
            }
        }
        Ok(ForecastSet {
            origin,
            statewide: crate::pipeline::aggregate(&counties),
            counties,
        })
    }
}
