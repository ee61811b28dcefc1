//! Exogenous design matrix: current weather, hour-of-day sinusoids and lagged
//! copies of outages, tracked customers and the leading weather drivers.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{format_timestamp, is_missing, Column, PanelDataset, SeriesKey};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TemporalEmbedding {
    pub sin_h: f64,
    pub cos_h: f64,
}

pub fn temporal_embedding(hour: u32) -> Result<TemporalEmbedding> {
    if hour > 23 {
        return Err(Error::invalid(format!("hour {hour} is outside 0..=23")));
    }
    // Rotate a first-quadrant angle by whole quarter turns so that hours
    // 0, 6, 12 and 18 land exactly on the axes.
    let angle = std::f64::consts::TAU * f64::from(hour % 6) / 24.0;
    let (s, c) = (angle.sin(), angle.cos());
    let (sin_h, cos_h) = match hour / 6 {
        0 => (s, c),
        1 => (c, -s),
        2 => (-s, -c),
        _ => (-c, s),
    };
    Ok(TemporalEmbedding { sin_h, cos_h })
}

/// Series a lag is taken from. `TopWeather` stands for every feature in the
/// configured top-weather list.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum LagSource {
    Outages,
    Tracked,
    Weather(String),
    TopWeather,
}

impl fmt::Display for LagSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LagSource::Outages => f.write_str("outages"),
            LagSource::Tracked => f.write_str("tracked"),
            LagSource::Weather(name) => write!(f, "weather:{name}"),
            LagSource::TopWeather => f.write_str("top_weather"),
        }
    }
}

impl FromStr for LagSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "outages" | "outage" => Ok(LagSource::Outages),
            "tracked" => Ok(LagSource::Tracked),
            "top_weather" => Ok(LagSource::TopWeather),
            _ => match s.strip_prefix("weather:") {
                Some(name) if !name.is_empty() => Ok(LagSource::Weather(name.to_string())),
                _ => Err(Error::invalid(format!(
                    "unknown lag source {s:?} (expected outages, tracked, top_weather or weather:<name>)"
                ))),
            },
        }
    }
}

impl TryFrom<String> for LagSource {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<LagSource> for String {
    fn from(s: LagSource) -> String {
        s.to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawLagSpec")]
pub struct LagSpec {
    source: LagSource,
    lags: Vec<usize>,
}

#[derive(Deserialize)]
struct RawLagSpec {
    source: LagSource,
    lags: Vec<usize>,
}

impl TryFrom<RawLagSpec> for LagSpec {
    type Error = Error;

    fn try_from(raw: RawLagSpec) -> Result<Self> {
        LagSpec::new(raw.source, raw.lags)
    }
}

impl LagSpec {
    /// Lags must be positive and strictly increasing.
    pub fn new(source: LagSource, lags: Vec<usize>) -> Result<Self> {
        if lags.is_empty() || lags[0] == 0 || lags.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(format!(
                "lags for {source} must be positive, sorted and distinct: {lags:?}"
            )));
        }
        Ok(Self { source, lags })
    }

    pub fn source(&self) -> &LagSource {
        &self.source
    }

    pub fn lags(&self) -> &[usize] {
        &self.lags
    }

    pub fn max_lag(&self) -> usize {
        *self.lags.last().expect("validated non-empty")
    }
}

/// Outages {1, 24}, tracked {1, 24}, top weather {1, 6}.
pub fn default_lag_config() -> Vec<LagSpec> {
    vec![
        LagSpec::new(LagSource::Outages, vec![1, 24]).expect("static"),
        LagSpec::new(LagSource::Tracked, vec![1, 24]).expect("static"),
        LagSpec::new(LagSource::TopWeather, vec![1, 6]).expect("static"),
    ]
}

/// Horizons 1, 2, 3, 6, 12, 24 for the same three sources.
pub fn extended_lag_config() -> Vec<LagSpec> {
    let hours = vec![1, 2, 3, 6, 12, 24];
    [LagSource::Outages, LagSource::Tracked, LagSource::TopWeather]
        .into_iter()
        .map(|s| LagSpec::new(s, hours.clone()).expect("static"))
        .collect()
}

/// Column `k` holds `series[t - lags[k]]`, NaN where undefined.
pub fn add_lags(series: &[f64], lags: &[usize]) -> Result<Vec<Vec<f64>>> {
    let max = lags.iter().copied().max().unwrap_or(0);
    if series.len() <= max {
        return Err(Error::InsufficientData(format!(
            "series of length {} is too short for lag {max}",
            series.len()
        )));
    }
    Ok(lags
        .iter()
        .map(|&k| {
            (0..series.len())
                .map(|t| if t >= k { series[t - k] } else { f64::NAN })
                .collect()
        })
        .collect())
}

/// How one design column is computed from the panel.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnSource {
    Current { column: Column },
    HourSin,
    HourCos,
    Lag { column: Column, lag: usize },
}

impl ColumnSource {
    pub fn name(&self) -> String {
        match self {
            ColumnSource::Current { column } => column.to_string(),
            ColumnSource::HourSin => "hour_sin".into(),
            ColumnSource::HourCos => "hour_cos".into(),
            ColumnSource::Lag { column, lag } => format!("{column}_lag{lag}"),
        }
    }

    pub fn lag(&self) -> usize {
        match self {
            ColumnSource::Lag { lag, .. } => *lag,
            _ => 0,
        }
    }

    /// Value at time `t`, reading panel series through `lookup(column, t)`.
    /// Returns `None` when the lookup has no value.
    pub fn evaluate(&self, t: usize, hour: u32, lookup: &dyn Fn(&Column, usize) -> Option<f64>) -> Option<f64> {
        match self {
            ColumnSource::Current { column } => lookup(column, t),
            ColumnSource::HourSin => temporal_embedding(hour).ok().map(|e| e.sin_h),
            ColumnSource::HourCos => temporal_embedding(hour).ok().map(|e| e.cos_h),
            ColumnSource::Lag { column, lag } => t.checked_sub(*lag).and_then(|s| lookup(column, s)),
        }
    }
}

/// Column recipe for a design matrix: which weather features enter at lag 0,
/// which count as the top drivers, and the lag configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub weather: Vec<String>,
    pub top_weather: Vec<String>,
    pub lags: Vec<LagSpec>,
}

impl DesignSpec {
    pub fn new(weather: Vec<String>, top_weather: Vec<String>, lags: Vec<LagSpec>) -> Self {
        Self {
            weather,
            top_weather,
            lags,
        }
    }

    /// Ordered, de-duplicated column list.
    pub fn columns(&self) -> Result<Vec<ColumnSource>> {
        if self.weather.is_empty() {
            return Err(Error::Empty("no weather features selected".into()));
        }
        let mut cols: Vec<ColumnSource> = self
            .weather
            .iter()
            .map(|w| ColumnSource::Current {
                column: Column::Weather(w.clone()),
            })
            .collect();
        cols.push(ColumnSource::HourSin);
        cols.push(ColumnSource::HourCos);
        for spec in &self.lags {
            let bases: Vec<Column> = match spec.source() {
                LagSource::Outages => vec![Column::Outages],
                LagSource::Tracked => vec![Column::Tracked],
                LagSource::Weather(name) => vec![Column::Weather(name.clone())],
                LagSource::TopWeather => self.top_weather.iter().cloned().map(Column::Weather).collect(),
            };
            for column in bases {
                for &lag in spec.lags() {
                    cols.push(ColumnSource::Lag {
                        column: column.clone(),
                        lag,
                    });
                }
            }
        }
        let mut seen = std::collections::HashSet::new();
        cols.retain(|c| seen.insert(c.clone()));
        Ok(cols)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DesignMatrix {
    pub county: SeriesKey,
    pub sources: Vec<ColumnSource>,
    pub values: DMatrix<f64>,
    pub target: Vec<f64>,
    /// Panel time index of the first row.
    pub first_row: usize,
}

impl DesignMatrix {
    pub fn column_names(&self) -> Vec<String> {
        self.sources.iter().map(ColumnSource::name).collect()
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    /// Writes `timestamp, target, columns...` as CSV.
    pub fn write_csv<W: Write>(&self, panel: &PanelDataset, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["timestamp".to_string(), "target".to_string()];
        header.extend(self.column_names());
        w.write_record(&header)?;
        for i in 0..self.nrows() {
            let mut rec = vec![
                format_timestamp(panel.time().timestamp(self.first_row + i)),
                self.target[i].to_string(),
            ];
            rec.extend(self.values.row(i).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::Io {
            path: "design matrix".into(),
            source: e,
        })?;
        Ok(())
    }
}

/// Builds the design matrix of one county. The first `max lag` hours are
/// dropped; every remaining cell must be present.
pub fn build_design_matrix(panel: &PanelDataset, county: &SeriesKey, spec: &DesignSpec) -> Result<DesignMatrix> {
    let c = panel
        .county_index(county)
        .ok_or_else(|| Error::UnknownCounty(county.to_string()))?;
    let sources = spec.columns()?;
    let n = panel.time().len();
    let max_lag = sources.iter().map(ColumnSource::lag).max().unwrap_or(0);
    if n <= max_lag {
        return Err(Error::InsufficientData(format!(
            "{n} hours cannot support lag {max_lag}"
        )));
    }
    let mut series = std::collections::HashMap::new();
    for src in &sources {
        if let ColumnSource::Current { column } | ColumnSource::Lag { column, .. } = src {
            if !series.contains_key(column) {
                series.insert(column.clone(), panel.series(column, c)?);
            }
        }
    }
    let lookup = |col: &Column, t: usize| series.get(col).map(|s| s[t]);
    let rows = n - max_lag;
    let mut values = DMatrix::zeros(rows, sources.len());
    for (j, src) in sources.iter().enumerate() {
        for i in 0..rows {
            let t = max_lag + i;
            let v = src
                .evaluate(t, panel.time().hour_of_day(t), &lookup)
                .filter(|v| !is_missing(*v))
                .ok_or_else(|| {
                    Error::invalid(format!(
                        "county {county}: column {} is missing at {}",
                        src.name(),
                        format_timestamp(panel.time().timestamp(t))
                    ))
                })?;
            values[(i, j)] = v;
        }
    }
    let target = panel.outages(c)[max_lag..].to_vec();
    if let Some(i) = target.iter().position(|v| is_missing(*v)) {
        return Err(Error::invalid(format!(
            "county {county}: outages missing at {}",
            format_timestamp(panel.time().timestamp(max_lag + i))
        )));
    }
    Ok(DesignMatrix {
        county: county.clone(),
        sources,
        values,
        target,
        first_row: max_lag,
    })
}
