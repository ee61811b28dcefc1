//! Hourly county panel: the aligned (county x hour x column) grid every
//! other module reads from.
//!
//! Cells are stored as `f64` with `NaN` marking a missing value. Source rows
//! that never appeared in the input are tracked separately so gaps can be
//! reported even after imputation has filled their cells.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDateTime, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sentinel stored in missing cells.
pub const MISSING: f64 = f64::NAN;

#[inline]
pub fn is_missing(v: f64) -> bool {
    v.is_nan()
}

/// A gap-free hourly clock shared by every county.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeIndex {
    start: DateTime<Utc>,
    len: usize,
}

impl TimeIndex {
    pub fn new(start: DateTime<Utc>, len: usize) -> Result<Self> {
        if start.minute() != 0 || start.second() != 0 || start.nanosecond() != 0 {
            return Err(Error::Timestamp {
                value: format_timestamp(start),
                reason: "start must fall on the hour".into(),
            });
        }
        Ok(Self { start, len })
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.start
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Timestamp of slot `i`; valid for any `i`, including slots past the end
    /// (used for forecast timestamps).
    pub fn timestamp(&self, i: usize) -> DateTime<Utc> {
        self.start + Duration::hours(i as i64)
    }

    pub fn last(&self) -> Option<DateTime<Utc>> {
        self.len.checked_sub(1).map(|i| self.timestamp(i))
    }

    pub fn index_of(&self, ts: DateTime<Utc>) -> Option<usize> {
        let delta = ts - self.start;
        if delta < Duration::zero() || delta.num_seconds() % 3600 != 0 {
            return None;
        }
        let i = delta.num_hours() as usize;
        (i < self.len).then_some(i)
    }

    /// Hour of day (0..=23, UTC) of slot `i`.
    pub fn hour_of_day(&self, i: usize) -> u32 {
        self.timestamp(i).hour()
    }
}

/// County identifier.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SeriesKey(String);

impl SeriesKey {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.trim().is_empty() {
            return Err(Error::invalid("county identifier must be non-empty"));
        }
        Ok(Self(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SeriesKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Weather,
    Outage,
    Tracked,
    Embedding,
    Lag,
}

/// The eight meteorological groups used to organise weather parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeatherCategory {
    TemperatureHumidity,
    PressureGeopotential,
    WindTurbulence,
    SevereWeather,
    CloudsRadiation,
    PrecipitationHydrology,
    LandSurface,
    OtherSpecialized,
}

impl WeatherCategory {
    pub const ALL: [WeatherCategory; 8] = [
        WeatherCategory::TemperatureHumidity,
        WeatherCategory::PressureGeopotential,
        WeatherCategory::WindTurbulence,
        WeatherCategory::SevereWeather,
        WeatherCategory::CloudsRadiation,
        WeatherCategory::PrecipitationHydrology,
        WeatherCategory::LandSurface,
        WeatherCategory::OtherSpecialized,
    ];

    pub fn label(self) -> &'static str {
        match self {
            WeatherCategory::TemperatureHumidity => "Temperature & Humidity",
            WeatherCategory::PressureGeopotential => "Pressure & Geopotential Heights",
            WeatherCategory::WindTurbulence => "Wind & Turbulence",
            WeatherCategory::SevereWeather => "Severe Weather & Instability",
            WeatherCategory::CloudsRadiation => "Clouds & Radiation",
            WeatherCategory::PrecipitationHydrology => "Precipitation & Hydrology",
            WeatherCategory::LandSurface => "Land Surface & Vegetation",
            WeatherCategory::OtherSpecialized => "Other/Specialized",
        }
    }

    /// Category of a known weather parameter name.
    pub fn classify(name: &str) -> Option<WeatherCategory> {
        use WeatherCategory::*;
        let cat = match name {
            "t2m" | "mstav" | "SBT113" => TemperatureHumidity,
            "mslma" | "gh_1" | "gh_3" | "plpl" => PressureGeopotential,
            "u" | "v" | "u10" | "ustm" | "vstm" | "gust" | "wz" | "wz_1" => WindTurbulence,
            "cape" | "cape_1" | "cin" | "hail_1" | "frzr" | "refc" => SevereWeather,
            "sdswrf" | "sulwrf" | "sdlwrf" | "slhtf" | "cfnsf" | "vis" => CloudsRadiation,
            "sde" | "pwat" | "cnwat" | "pcdb" | "fsr" | "r" => PrecipitationHydrology,
            "lsm" | "veg" | "layth" | "mdens" => LandSurface,
            "veril" => OtherSpecialized,
            _ => return None,
        };
        Some(cat)
    }
}

impl fmt::Display for WeatherCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub name: String,
    pub kind: FeatureKind,
    pub category: Option<WeatherCategory>,
}

impl FeatureMeta {
    pub fn weather(name: impl Into<String>) -> Self {
        let name = name.into();
        let category = WeatherCategory::classify(&name);
        Self {
            name,
            kind: FeatureKind::Weather,
            category,
        }
    }
}

/// Column-name mapping for the long CSV layout.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schema {
    pub timestamp: String,
    pub county: String,
    pub outages: String,
    pub tracked: String,
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            timestamp: "timestamp".into(),
            county: "county".into(),
            outages: "outages".into(),
            tracked: "tracked".into(),
        }
    }
}

/// Selects one series of the panel.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Column {
    Outages,
    Tracked,
    Weather(String),
}

impl fmt::Display for Column {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Column::Outages => f.write_str("outages"),
            Column::Tracked => f.write_str("tracked"),
            Column::Weather(name) => f.write_str(name),
        }
    }
}

/// Hourly (county x time x column) grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PanelDataset {
    time: TimeIndex,
    counties: Vec<SeriesKey>,
    outages: Vec<Vec<f64>>,
    tracked: Vec<Vec<f64>>,
    /// `[feature][county][t]`
    weather: Vec<Vec<Vec<f64>>>,
    features: Vec<FeatureMeta>,
    row_present: Vec<Vec<bool>>,
    duplicates: Vec<(SeriesKey, DateTime<Utc>)>,
}

impl PanelDataset {
    /// Empty grid: every cell missing, no source rows.
    pub fn empty(time: TimeIndex, counties: Vec<SeriesKey>, feature_names: &[String]) -> Result<Self> {
        check_unique(counties.iter().map(|c| c.as_str()), "county")?;
        check_unique(feature_names.iter().map(|s| s.as_str()), "weather feature")?;
        let n = time.len();
        let nc = counties.len();
        Ok(Self {
            time,
            outages: vec![vec![MISSING; n]; nc],
            tracked: vec![vec![MISSING; n]; nc],
            weather: vec![vec![vec![MISSING; n]; nc]; feature_names.len()],
            features: feature_names.iter().map(FeatureMeta::weather).collect(),
            row_present: vec![vec![false; n]; nc],
            counties,
            duplicates: Vec::new(),
        })
    }

    /// Fully populated panel built from in-memory series. Every row counts as
    /// present. `weather` entries are `(name, [county][t])`.
    pub fn from_series(
        time: TimeIndex,
        counties: Vec<SeriesKey>,
        outages: Vec<Vec<f64>>,
        tracked: Vec<Vec<f64>>,
        weather: Vec<(String, Vec<Vec<f64>>)>,
    ) -> Result<Self> {
        let names: Vec<String> = weather.iter().map(|(n, _)| n.clone()).collect();
        let mut panel = Self::empty(time, counties, &names)?;
        let nc = panel.counties.len();
        let n = time.len();
        let shape_ok = |grid: &Vec<Vec<f64>>| grid.len() == nc && grid.iter().all(|s| s.len() == n);
        if !shape_ok(&outages) || !shape_ok(&tracked) || !weather.iter().all(|(_, g)| shape_ok(g)) {
            return Err(Error::invalid("series shape does not match counties x hours"));
        }
        for series in outages.iter().chain(tracked.iter()) {
            if series.iter().any(|v| !is_missing(*v) && (*v < 0.0 || !v.is_finite())) {
                return Err(Error::invalid("outages and tracked values must be finite and non-negative"));
            }
        }
        panel.outages = outages;
        panel.tracked = tracked;
        panel.weather = weather.into_iter().map(|(_, g)| g).collect();
        panel.row_present = vec![vec![true; n]; nc];
        Ok(panel)
    }

    pub fn time(&self) -> &TimeIndex {
        &self.time
    }

    pub fn counties(&self) -> &[SeriesKey] {
        &self.counties
    }

    pub fn n_counties(&self) -> usize {
        self.counties.len()
    }

    pub fn county_index(&self, county: &SeriesKey) -> Option<usize> {
        self.counties.iter().position(|c| c == county)
    }

    pub fn features(&self) -> &[FeatureMeta] {
        &self.features
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn outages(&self, county: usize) -> &[f64] {
        &self.outages[county]
    }

    pub fn tracked(&self, county: usize) -> &[f64] {
        &self.tracked[county]
    }

    pub fn weather(&self, feature: usize, county: usize) -> &[f64] {
        &self.weather[feature][county]
    }

    pub fn weather_by_name(&self, name: &str, county: usize) -> Result<&[f64]> {
        let f = self
            .feature_index(name)
            .ok_or_else(|| Error::UnknownFeature(name.to_string()))?;
        Ok(self.weather(f, county))
    }

    /// Series of `column` for one county.
    pub fn series(&self, column: &Column, county: usize) -> Result<&[f64]> {
        match column {
            Column::Outages => Ok(self.outages(county)),
            Column::Tracked => Ok(self.tracked(county)),
            Column::Weather(name) => self.weather_by_name(name, county),
        }
    }

    pub(crate) fn series_mut(&mut self, column: &Column, county: usize) -> Result<&mut Vec<f64>> {
        match column {
            Column::Outages => Ok(&mut self.outages[county]),
            Column::Tracked => Ok(&mut self.tracked[county]),
            Column::Weather(name) => {
                let f = self
                    .feature_index(name)
                    .ok_or_else(|| Error::UnknownFeature(name.clone()))?;
                Ok(&mut self.weather[f][county])
            }
        }
    }

    pub(crate) fn weather_mut(&mut self, feature: usize, county: usize) -> &mut Vec<f64> {
        &mut self.weather[feature][county]
    }

    /// Whether the source data contained a row for `(county, t)`.
    pub fn row_present(&self, county: usize, t: usize) -> bool {
        self.row_present[county][t]
    }

    /// `(county, timestamp)` pairs that appeared more than once in the source;
    /// the first occurrence was kept.
    pub fn duplicates(&self) -> &[(SeriesKey, DateTime<Utc>)] {
        &self.duplicates
    }

    pub fn set_outage(&mut self, county: usize, t: usize, value: f64) {
        self.outages[county][t] = value;
    }

    pub fn set_tracked(&mut self, county: usize, t: usize, value: f64) {
        self.tracked[county][t] = value;
    }

    pub fn set_weather(&mut self, feature: usize, county: usize, t: usize, value: f64) {
        self.weather[feature][county][t] = value;
    }

    pub fn mark_row(&mut self, county: usize, t: usize) {
        self.row_present[county][t] = true;
    }

    /// Keeps only the weather features whose names are listed, in panel order.
    pub fn retain_features(&self, keep: &[String]) -> Self {
        let mut out = self.clone();
        let mut weather = Vec::new();
        let mut meta = Vec::new();
        for (i, m) in self.features.iter().enumerate() {
            if keep.contains(&m.name) {
                weather.push(std::mem::take(&mut out.weather[i]));
                meta.push(m.clone());
            }
        }
        out.weather = weather;
        out.features = meta;
        out
    }

    /// Rows `[from, to)` of the grid.
    pub fn slice(&self, from: usize, to: usize) -> Result<Self> {
        if from >= to || to > self.time.len() {
            return Err(Error::invalid(format!(
                "slice [{from}, {to}) outside panel of {} hours",
                self.time.len()
            )));
        }
        let time = TimeIndex::new(self.time.timestamp(from), to - from)?;
        let cut = |grid: &Vec<Vec<f64>>| grid.iter().map(|s| s[from..to].to_vec()).collect::<Vec<_>>();
        let lo = self.time.timestamp(from);
        let hi = self.time.timestamp(to);
        Ok(Self {
            time,
            counties: self.counties.clone(),
            outages: cut(&self.outages),
            tracked: cut(&self.tracked),
            weather: self.weather.iter().map(cut).collect(),
            features: self.features.clone(),
            row_present: self.row_present.iter().map(|s| s[from..to].to_vec()).collect(),
            duplicates: self
                .duplicates
                .iter()
                .filter(|(_, ts)| *ts >= lo && *ts < hi)
                .cloned()
                .collect(),
        })
    }

    /// Splits into `[start, cutoff)` and `[cutoff, end]`.
    pub fn split_at(&self, cutoff: DateTime<Utc>) -> Result<(Self, Self)> {
        let idx = self.time.index_of(cutoff).filter(|&i| i > 0).ok_or_else(|| {
            Error::invalid(format!(
                "cutoff {} must lie strictly inside {}..={}",
                format_timestamp(cutoff),
                format_timestamp(self.time.start()),
                self.time.last().map(format_timestamp).unwrap_or_default()
            ))
        })?;
        Ok((self.slice(0, idx)?, self.slice(idx, self.time.len())?))
    }

    /// Appends `later`, which must continue this panel's clock directly and
    /// carry the same counties and features.
    pub fn concat(&self, later: &Self) -> Result<Self> {
        if later.counties != self.counties || later.features != self.features {
            return Err(Error::invalid("concat requires identical counties and features"));
        }
        if later.time.start() != self.time.timestamp(self.time.len()) {
            return Err(Error::invalid("concat requires contiguous time ranges"));
        }
        let join = |a: &Vec<Vec<f64>>, b: &Vec<Vec<f64>>| {
            a.iter()
                .zip(b)
                .map(|(x, y)| x.iter().chain(y).copied().collect())
                .collect::<Vec<Vec<f64>>>()
        };
        Ok(Self {
            time: TimeIndex::new(self.time.start(), self.time.len() + later.time.len())?,
            counties: self.counties.clone(),
            outages: join(&self.outages, &later.outages),
            tracked: join(&self.tracked, &later.tracked),
            weather: self.weather.iter().zip(&later.weather).map(|(a, b)| join(a, b)).collect(),
            features: self.features.clone(),
            row_present: self
                .row_present
                .iter()
                .zip(&later.row_present)
                .map(|(a, b)| a.iter().chain(b).copied().collect())
                .collect(),
            duplicates: self.duplicates.iter().chain(&later.duplicates).cloned().collect(),
        })
    }
}

fn check_unique<'a>(names: impl Iterator<Item = &'a str>, what: &str) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for n in names {
        if !seen.insert(n) {
            return Err(Error::invalid(format!("duplicate {what} `{n}`")));
        }
    }
    Ok(())
}

pub fn format_timestamp(ts: DateTime<Utc>) -> String {
    ts.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

/// Parses an ISO-8601 timestamp, normalising to UTC. Offsets are honoured;
/// a bare date-time is taken as UTC. Anything below the hour is rejected.
pub fn parse_timestamp(raw: &str) -> Result<DateTime<Utc>> {
    let raw = raw.trim();
    let ts = DateTime::parse_from_rfc3339(raw)
        .map(|dt| dt.with_timezone(&Utc))
        .or_else(|_| {
            ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"]
                .iter()
                .find_map(|fmt| NaiveDateTime::parse_from_str(raw, fmt).ok())
                .map(|naive| naive.and_utc())
                .ok_or(())
        })
        .map_err(|_| Error::Timestamp {
            value: raw.to_string(),
            reason: "not ISO-8601".into(),
        })?;
    if ts.minute() != 0 || ts.second() != 0 || ts.nanosecond() != 0 {
        return Err(Error::Timestamp {
            value: raw.to_string(),
            reason: "sub-hour component".into(),
        });
    }
    Ok(ts)
}

fn parse_cell(raw: &str, row: usize, column: &str) -> Result<f64> {
    let s = raw.trim();
    if s.is_empty() {
        return Ok(MISSING);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::NonNumeric {
            row,
            column: column.to_string(),
            value: raw.to_string(),
        }),
    }
}

/// Loads a long-layout CSV (one row per timestamp and county).
pub fn load_panel_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<PanelDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_panel_csv(std::io::BufReader::new(file), schema)
}

struct RawRow {
    ts: DateTime<Utc>,
    county: usize,
    outage: f64,
    tracked: f64,
    weather: Vec<f64>,
}

pub fn read_panel_csv<R: Read>(reader: R, schema: &Schema) -> Result<PanelDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::Headers).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let ts_col = find(&schema.timestamp)?;
    let county_col = find(&schema.county)?;
    let outage_col = find(&schema.outages)?;
    let tracked_col = find(&schema.tracked)?;
    let mandatory = [ts_col, county_col, outage_col, tracked_col];
    let weather_cols: Vec<usize> = (0..headers.len()).filter(|i| !mandatory.contains(i)).collect();
    let feature_names: Vec<String> = weather_cols.iter().map(|&i| headers[i].to_string()).collect();

    let mut counties: Vec<SeriesKey> = Vec::new();
    let mut county_ids: HashMap<String, usize> = HashMap::new();
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let row = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let ts = parse_timestamp(&record[ts_col]).map_err(|e| Error::BadRow {
            row,
            message: e.to_string(),
        })?;
        let name = record[county_col].trim().to_string();
        let county = match county_ids.get(&name) {
            Some(&i) => i,
            None => {
                let key = SeriesKey::new(name.clone()).map_err(|e| Error::BadRow {
                    row,
                    message: e.to_string(),
                })?;
                counties.push(key);
                county_ids.insert(name, counties.len() - 1);
                counties.len() - 1
            }
        };
        let outage = parse_cell(&record[outage_col], row, &schema.outages)?;
        let tracked = parse_cell(&record[tracked_col], row, &schema.tracked)?;
        for (v, col) in [(outage, &schema.outages), (tracked, &schema.tracked)] {
            if v < 0.0 {
                return Err(Error::BadRow {
                    row,
                    message: format!("`{col}` must be non-negative, got {v}"),
                });
            }
        }
        let weather = weather_cols
            .iter()
            .map(|&i| parse_cell(&record[i], row, &headers[i]))
            .collect::<Result<Vec<_>>>()?;
        rows.push(RawRow {
            ts,
            county,
            outage,
            tracked,
            weather,
        });
    }

    let (Some(first), Some(last)) = (rows.iter().map(|r| r.ts).min(), rows.iter().map(|r| r.ts).max()) else {
        return Err(Error::Empty("input contains no data rows".into()));
    };
    let len = (last - first).num_hours() as usize + 1;
    let time = TimeIndex::new(first, len)?;
    let mut panel = PanelDataset::empty(time, counties, &feature_names)?;
    for r in rows {
        let t = time.index_of(r.ts).expect("timestamp inside computed range");
        if panel.row_present[r.county][t] {
            panel.duplicates.push((panel.counties[r.county].clone(), r.ts));
            continue;
        }
        panel.row_present[r.county][t] = true;
        panel.outages[r.county][t] = r.outage;
        panel.tracked[r.county][t] = r.tracked;
        for (f, v) in r.weather.into_iter().enumerate() {
            panel.weather[f][r.county][t] = v;
        }
    }
    Ok(panel)
}

fn fmt_cell(v: f64) -> String {
    if is_missing(v) {
        String::new()
    } else {
        v.to_string()
    }
}

/// Writes the panel in long layout with the default schema's column names.
/// A row is emitted when the source had it or any of its cells holds a value.
/// Numbers use the shortest representation that round-trips exactly.
pub fn write_panel_csv<W: Write>(panel: &PanelDataset, writer: W) -> Result<()> {
    let schema = Schema::default();
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![schema.timestamp, schema.county, schema.outages, schema.tracked];
    header.extend(panel.feature_names());
    w.write_record(&header)?;
    for t in 0..panel.time.len() {
        let ts = format_timestamp(panel.time.timestamp(t));
        for (c, county) in panel.counties.iter().enumerate() {
            let any_value = !is_missing(panel.outages[c][t])
                || !is_missing(panel.tracked[c][t])
                || panel.weather.iter().any(|f| !is_missing(f[c][t]));
            if !panel.row_present[c][t] && !any_value {
                continue;
            }
            let mut rec = vec![
                ts.clone(),
                county.to_string(),
                fmt_cell(panel.outages[c][t]),
                fmt_cell(panel.tracked[c][t]),
            ];
            rec.extend(panel.weather.iter().map(|f| fmt_cell(f[c][t])));
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|source| Error::Io {
        path: "<csv output>".into(),
        source,
    })?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DuplicateCell {
    pub county: SeriesKey,
    pub timestamp: DateTime<Utc>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gap {
    pub county: SeriesKey,
    pub start: DateTime<Utc>,
    pub length: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub duplicates: Vec<DuplicateCell>,
    pub gaps: Vec<Gap>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.duplicates.is_empty() && self.gaps.is_empty()
    }
}

/// Reports duplicate `(county, timestamp)` rows and runs of hours for which a
/// county had no source row.
pub fn validate_grid(panel: &PanelDataset) -> ValidationReport {
    let duplicates = panel
        .duplicates
        .iter()
        .map(|(county, timestamp)| DuplicateCell {
            county: county.clone(),
            timestamp: *timestamp,
        })
        .collect();
    let mut gaps = Vec::new();
    for (c, county) in panel.counties.iter().enumerate() {
        let mut t = 0;
        let present = &panel.row_present[c];
        while t < present.len() {
            if present[t] {
                t += 1;
                continue;
            }
            let start = t;
            while t < present.len() && !present[t] {
                t += 1;
            }
            gaps.push(Gap {
                county: county.clone(),
                start: panel.time.timestamp(start),
                length: t - start,
            });
        }
    }
    ValidationReport { duplicates, gaps }
}
