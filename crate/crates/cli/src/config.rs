use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::{DateTime, Utc};
use gridcast_core::cleaning::CleaningConfig;
use gridcast_core::panel::{parse_timestamp, Schema};
use gridcast_core::pipeline::PipelineConfig;
use gridcast_core::selection::SelectionConfig;
use serde::{Deserialize, Serialize};

/// Everything a run needs, loaded from one TOML file. Command-line flags
/// override `input`, `out`, `seed` and `jobs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub out: PathBuf,
    /// Replaces `selection.seed` when set.
    pub seed: Option<u64>,
    /// Worker threads; 0 picks one per core.
    pub jobs: usize,
    pub schema: Schema,
    pub cleaning: CleaningConfig,
    pub selection: SelectionConfig,
    pub forecast: PipelineConfig,
    pub backtest: BacktestConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestConfig {
    /// ISO-8601 timestamps. Empty means one cutoff that leaves exactly the
    /// longest horizon as test data.
    pub cutoffs: Vec<String>,
    /// Hours of history drawn before each forecast in plots.
    pub plot_history: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: None,
            out: PathBuf::from("out"),
            seed: None,
            jobs: 0,
            schema: Schema::default(),
            cleaning: CleaningConfig::default(),
            selection: SelectionConfig::default(),
            forecast: PipelineConfig::default(),
            backtest: BacktestConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        self.selection.validate()?;
        self.forecast.validate()?;
        if self.forecast.optim.tol <= 0.0 || self.forecast.optim.max_iter == 0 {
            bail!("optimizer tolerance and iteration limit must be positive");
        }
        self.cutoffs()?;
        Ok(())
    }

    pub fn effective_selection(&self) -> SelectionConfig {
        let mut s = self.selection.clone();
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        s
    }

    pub fn cutoffs(&self) -> Result<Vec<DateTime<Utc>>> {
        self.backtest
            .cutoffs
            .iter()
            .map(|c| parse_timestamp(c).with_context(|| format!("bad cutoff {c:?}")))
            .collect()
    }
}
