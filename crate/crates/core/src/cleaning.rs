//! First-stage data quality pass: drop constant and unnamed features, fill
//! missing cells from their temporal neighbours, and repair timestamps whose
//! weather readings are all exactly zero.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{format_timestamp, is_missing, Column, PanelDataset, SeriesKey};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellRef {
    pub county: SeriesKey,
    pub timestamp: DateTime<Utc>,
    pub column: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub dropped_zero_variance: Vec<String>,
    pub dropped_by_name: Vec<String>,
    pub imputed_cells: Vec<CellRef>,
    pub repaired_timestamps: Vec<DateTime<Utc>>,
}

impl CleaningReport {
    pub fn merge(&mut self, other: CleaningReport) {
        self.dropped_zero_variance.extend(other.dropped_zero_variance);
        self.dropped_by_name.extend(other.dropped_by_name);
        self.imputed_cells.extend(other.imputed_cells);
        self.repaired_timestamps.extend(other.repaired_timestamps);
    }

    pub fn is_empty(&self) -> bool {
        self.dropped_zero_variance.is_empty()
            && self.dropped_by_name.is_empty()
            && self.imputed_cells.is_empty()
            && self.repaired_timestamps.is_empty()
    }
}

/// Removes every weather feature whose pooled values (all counties, all hours,
/// missing cells ignored) are identical. A feature with no values at all is
/// also removed.
pub fn drop_zero_variance(panel: &PanelDataset) -> Result<(PanelDataset, CleaningReport)> {
    if panel.n_features() == 0 {
        return Err(Error::Empty("panel has no weather features".into()));
    }
    let mut keep = Vec::new();
    let mut report = CleaningReport::default();
    for (f, meta) in panel.features().iter().enumerate() {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for c in 0..panel.n_counties() {
            for &v in panel.weather(f, c) {
                if !is_missing(v) {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
        }
        if lo < hi {
            keep.push(meta.name.clone());
        } else {
            report.dropped_zero_variance.push(meta.name.clone());
        }
    }
    if keep.is_empty() {
        return Err(Error::Empty("every weather feature has zero variance".into()));
    }
    Ok((panel.retain_features(&keep), report))
}

/// Feature-name matcher: `name` matches exactly, `name*` matches by prefix.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum NamePattern {
    Exact(String),
    Prefix(String),
}

impl NamePattern {
    pub fn matches(&self, name: &str) -> bool {
        match self {
            NamePattern::Exact(s) => name == s,
            NamePattern::Prefix(p) => name.starts_with(p.as_str()),
        }
    }
}

impl FromStr for NamePattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.strip_suffix('*') {
            Some("") => Err(Error::invalid("empty name prefix")),
            Some(prefix) => Ok(NamePattern::Prefix(prefix.to_string())),
            None if s.is_empty() => Err(Error::invalid("empty name pattern")),
            None => Ok(NamePattern::Exact(s.to_string())),
        }
    }
}

impl TryFrom<String> for NamePattern {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<NamePattern> for String {
    fn from(p: NamePattern) -> String {
        p.to_string()
    }
}

impl fmt::Display for NamePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NamePattern::Exact(s) => f.write_str(s),
            NamePattern::Prefix(p) => write!(f, "{p}*"),
        }
    }
}

pub fn drop_by_name(panel: &PanelDataset, patterns: &[NamePattern]) -> Result<(PanelDataset, CleaningReport)> {
    if patterns.is_empty() {
        return Err(Error::invalid("drop_by_name needs at least one pattern"));
    }
    let (dropped, keep): (Vec<String>, Vec<String>) = panel
        .feature_names()
        .into_iter()
        .partition(|name| patterns.iter().any(|p| p.matches(name)));
    let report = CleaningReport {
        dropped_by_name: dropped,
        ..Default::default()
    };
    Ok((panel.retain_features(&keep), report))
}

/// Fills missing cells in place and returns the filled indices.
///
/// A single interior gap becomes the mean of its two neighbours; longer
/// interior runs are linearly interpolated between the bracketing values;
/// leading and trailing runs copy the nearest present value.
pub fn fill_gaps(series: &mut [f64]) -> Option<Vec<usize>> {
    let present: Vec<usize> = (0..series.len()).filter(|&i| !is_missing(series[i])).collect();
    let (&first, &last) = (present.first()?, present.last()?);
    let mut filled = Vec::new();
    for i in 0..first {
        series[i] = series[first];
        filled.push(i);
    }
    for w in present.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b - a == 2 {
            series[a + 1] = (series[a] + series[b]) / 2.0;
            filled.push(a + 1);
        } else if b - a > 2 {
            let (va, vb) = (series[a], series[b]);
            let span = (b - a) as f64;
            for i in a + 1..b {
                series[i] = va + (vb - va) * (i - a) as f64 / span;
                filled.push(i);
            }
        }
    }
    for i in last + 1..series.len() {
        series[i] = series[last];
        filled.push(i);
    }
    Some(filled)
}

pub fn impute_adjacent_mean(panel: &PanelDataset, column: &Column) -> Result<(PanelDataset, CleaningReport)> {
    let mut out = panel.clone();
    let mut report = CleaningReport::default();
    for c in 0..panel.n_counties() {
        let series = out.series_mut(column, c)?;
        let filled = fill_gaps(series).ok_or_else(|| Error::AllMissing {
            county: panel.counties()[c].to_string(),
            column: column.to_string(),
        })?;
        report.imputed_cells.extend(filled.into_iter().map(|t| CellRef {
            county: panel.counties()[c].clone(),
            timestamp: panel.time().timestamp(t),
            column: column.to_string(),
        }));
    }
    Ok((out, report))
}

/// Timestamps at which every present weather cell, across all counties, is
/// exactly zero.
pub fn find_zero_rows(panel: &PanelDataset) -> Vec<usize> {
    (0..panel.time().len())
        .filter(|&t| {
            let mut seen = false;
            for f in 0..panel.n_features() {
                for c in 0..panel.n_counties() {
                    let v = panel.weather(f, c)[t];
                    if is_missing(v) {
                        continue;
                    }
                    if v != 0.0 {
                        return false;
                    }
                    seen = true;
                }
            }
            seen
        })
        .collect()
}

/// Detects all-zero weather timestamps and repairs them.
pub fn repair_zero_rows(panel: &PanelDataset) -> Result<(PanelDataset, CleaningReport)> {
    if panel.time().len() < 3 {
        return Err(Error::InsufficientData("row repair needs at least 3 timestamps".into()));
    }
    let rows = find_zero_rows(panel);
    repair_indices(panel, &rows)
}

/// Repairs an explicit list of timestamps, whatever their contents.
pub fn repair_rows(panel: &PanelDataset, timestamps: &[DateTime<Utc>]) -> Result<(PanelDataset, CleaningReport)> {
    if panel.time().len() < 3 {
        return Err(Error::InsufficientData("row repair needs at least 3 timestamps".into()));
    }
    let mut rows = timestamps
        .iter()
        .map(|ts| {
            panel
                .time()
                .index_of(*ts)
                .ok_or_else(|| Error::invalid(format!("timestamp {} outside panel", format_timestamp(*ts))))
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_unstable();
    rows.dedup();
    repair_indices(panel, &rows)
}

fn repair_indices(panel: &PanelDataset, rows: &[usize]) -> Result<(PanelDataset, CleaningReport)> {
    let n = panel.time().len();
    let bad: BTreeSet<usize> = rows.iter().copied().collect();
    if (bad.contains(&0) && bad.contains(&1)) || (n >= 2 && bad.contains(&(n - 1)) && bad.contains(&(n - 2))) {
        return Err(Error::InsufficientData(
            "consecutive anomalous timestamps at the series boundary leave no anchor".into(),
        ));
    }
    let mut out = panel.clone();
    for f in 0..panel.n_features() {
        for c in 0..panel.n_counties() {
            let src = panel.weather(f, c);
            let anchor = |i: usize| !bad.contains(&i) && !is_missing(src[i]);
            let dst = out.weather_mut(f, c);
            for &t in rows {
                let prev = (0..t).rev().find(|&i| anchor(i));
                let next = (t + 1..n).find(|&i| anchor(i));
                dst[t] = match (prev, next) {
                    (Some(p), Some(q)) if q - p == 2 => (src[p] + src[q]) / 2.0,
                    (Some(p), Some(q)) => src[p] + (src[q] - src[p]) * (t - p) as f64 / (q - p) as f64,
                    (Some(p), None) => src[p],
                    (None, Some(q)) => src[q],
                    (None, None) => src[t],
                };
            }
        }
    }
    let report = CleaningReport {
        repaired_timestamps: rows.iter().map(|&t| panel.time().timestamp(t)).collect(),
        ..Default::default()
    };
    Ok((out, report))
}

/// Which series the cleaning chain imputes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImputeScope {
    TrackedOnly,
    /// Tracked, outages, and every weather feature with a gap.
    #[default]
    All,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleaningConfig {
    pub name_patterns: Vec<NamePattern>,
    pub impute: ImputeScope,
    /// When set, only these timestamps are repaired and detection is skipped.
    pub repair_timestamps: Option<Vec<DateTime<Utc>>>,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        Self {
            name_patterns: vec![NamePattern::Prefix("unknown".into())],
            impute: ImputeScope::All,
            repair_timestamps: None,
        }
    }
}

/// Full first-stage chain: zero-variance drop, name drop, imputation, zero-row
/// repair. Never removes a row.
pub fn clean(panel: &PanelDataset, config: &CleaningConfig) -> Result<(PanelDataset, CleaningReport)> {
    let (mut p, mut report) = drop_zero_variance(panel)?;
    if !config.name_patterns.is_empty() {
        let (next, r) = drop_by_name(&p, &config.name_patterns)?;
        if next.n_features() == 0 {
            return Err(Error::Empty("every weather feature was dropped by name".into()));
        }
        p = next;
        report.merge(r);
    }

    let mut columns = vec![Column::Tracked];
    if config.impute == ImputeScope::All {
        columns.push(Column::Outages);
        columns.extend(p.feature_names().into_iter().map(Column::Weather));
    }
    for col in &columns {
        let has_gap = (0..p.n_counties()).any(|c| p.series(col, c).map(|s| s.iter().any(|v| is_missing(*v))).unwrap_or(false));
        if !has_gap {
            continue;
        }
        let (next, r) = impute_adjacent_mean(&p, col)?;
        p = next;
        report.merge(r);
    }

    let (p, r) = match &config.repair_timestamps {
        Some(ts) => repair_rows(&p, ts)?,
        None => repair_zero_rows(&p)?,
    };
    report.merge(r);
    Ok((p, report))
}
