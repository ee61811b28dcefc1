//! `gridcast` subcommands. [`run`] executes a parsed command line and
//! returns the paths it wrote; the binary maps errors to a nonzero exit.

pub mod config;
pub mod plot;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand};
use gridcast_core::cleaning::clean;
use gridcast_core::evaluation::{backtest, gen_panel, BacktestReport, PipelineForecaster, SyntheticSpec};
use gridcast_core::features::{build_design_matrix, DesignSpec};
use gridcast_core::panel::{load_panel_csv, parse_timestamp, write_panel_csv, PanelDataset};
use gridcast_core::pipeline::{run_all, ForecastSet, MleFitter};
use gridcast_core::selection::{select_features, Selection, SelectionReport};

use config::RunConfig;
use plot::{line_chart, Series};

#[derive(Debug, Parser)]
#[command(name = "gridcast", version, about = "County-level hourly power outage forecasting")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (0 = one per core). Output does not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Feature-selection seed; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Drop constant and unnamed features, impute gaps, repair all-zero rows.
    Clean(CleanArgs),
    /// Choose representative weather features.
    Select(InputArgs),
    /// Fit every county and forecast each horizon.
    Forecast(ForecastArgs),
    /// Score forecasts against held-out hours and the all-zeros baseline.
    Backtest(BacktestArgs),
    /// Write a synthetic panel.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Panel CSV; overrides `input` in the config.
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CleanArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Comma-separated timestamps to repair instead of detecting all-zero rows.
    #[arg(long, value_delimiter = ',')]
    pub timestamps: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct ForecastArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// `selection.json` from an earlier `select`; selection runs in-process otherwise.
    #[arg(long)]
    pub selection: Option<PathBuf>,
    #[arg(long)]
    pub plots: bool,
    /// Also write each county's design matrix.
    #[arg(long)]
    pub dump_design: bool,
}

#[derive(Debug, Args)]
pub struct BacktestArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub selection: Option<PathBuf>,
    /// Comma-separated cutoffs; overrides the config.
    #[arg(long, value_delimiter = ',')]
    pub cutoffs: Option<Vec<String>>,
    #[arg(long)]
    pub plots: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// TOML synthetic-panel spec; defaults apply to missing keys.
    #[arg(long)]
    pub spec: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from<I, T>(args: I) -> Result<Vec<PathBuf>>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    run(Cli::try_parse_from(args)?)
}

pub fn run(cli: Cli) -> Result<Vec<PathBuf>> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = j;
    }
    cfg.validate()?;
    fs::create_dir_all(&cfg.out).with_context(|| format!("cannot create output directory {}", cfg.out.display()))?;
    let mut out = Outputs::new(cfg.out.clone());
    match &cli.command {
        Command::Clean(a) => cmd_clean(&cfg, a, &mut out)?,
        Command::Select(a) => cmd_select(&cfg, a, &mut out)?,
        Command::Forecast(a) => cmd_forecast(&cfg, a, &mut out)?,
        Command::Backtest(a) => cmd_backtest(&cfg, a, &mut out)?,
        Command::Simulate(a) => cmd_simulate(&cfg, a, &mut out)?,
    }
    Ok(out.written)
}

struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: PathBuf) -> Self {
        Self { dir, written: Vec::new() }
    }

    fn write_with(&mut self, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
        }
        let file = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
        let mut w = BufWriter::new(file);
        f(&mut w).with_context(|| format!("while writing {}", path.display()))?;
        w.flush().with_context(|| format!("while writing {}", path.display()))?;
        self.written.push(path);
        Ok(())
    }

    fn write_str(&mut self, name: &str, text: &str) -> Result<()> {
        self.write_with(name, |w| Ok(w.write_all(text.as_bytes())?))
    }
}

fn input_path(cfg: &RunConfig, args: &InputArgs) -> Result<PathBuf> {
    args.input
        .clone()
        .or_else(|| cfg.input.clone())
        .ok_or_else(|| anyhow!("no input panel: pass --input or set `input` in the config"))
}

fn load_input(cfg: &RunConfig, args: &InputArgs) -> Result<PanelDataset> {
    let path = input_path(cfg, args)?;
    load_panel_csv(&path, &cfg.schema).with_context(|| format!("cannot load panel {}", path.display()))
}

fn cmd_clean(cfg: &RunConfig, args: &CleanArgs, out: &mut Outputs) -> Result<()> {
    let panel = load_input(cfg, &args.input)?;
    let mut cleaning = cfg.cleaning.clone();
    if let Some(ts) = &args.timestamps {
        let parsed = ts.iter().map(|t| parse_timestamp(t)).collect::<gridcast_core::Result<Vec<_>>>()?;
        cleaning.repair_timestamps = Some(parsed);
    }
    let (cleaned, report) = clean(&panel, &cleaning)?;
    out.write_with("cleaned.csv", |w| Ok(write_panel_csv(&cleaned, w)?))?;
    out.write_str("cleaning_report.json", &(serde_json::to_string_pretty(&report)? + "\n"))
}

fn write_selection(sel: &Selection, out: &mut Outputs) -> Result<()> {
    out.write_str("selection.json", &(serde_json::to_string_pretty(&sel.report)? + "\n"))?;
    out.write_str("selection_categories.txt", &sel.report.category_table())?;
    if let Some(pca) = &sel.pca {
        let mut loadings = String::from("component,feature,loading\n");
        for c in 0..pca.n_components {
            for (j, name) in pca.feature_names.iter().enumerate() {
                loadings.push_str(&format!("{},{},{}\n", c + 1, name, pca.loadings[(c, j)]));
            }
        }
        out.write_str("pca_loadings.csv", &loadings)?;
        let mut ev = String::from("component,eigenvalue,explained_variance_ratio,cumulative_ratio\n");
        for (c, cum) in pca.cumulative_ratio().iter().enumerate() {
            ev.push_str(&format!(
                "{},{},{},{}\n",
                c + 1,
                pca.eigenvalues[c],
                pca.explained_variance_ratio[c],
                cum
            ));
        }
        out.write_str("explained_variance.csv", &ev)?;
    }
    Ok(())
}

fn cmd_select(cfg: &RunConfig, args: &InputArgs, out: &mut Outputs) -> Result<()> {
    let panel = load_input(cfg, args)?;
    let sel = select_features(&panel, &cfg.effective_selection())?;
    write_selection(&sel, out)
}

/// Kept features enter at lag zero; PCA picks (or the first three kept
/// features when PCA is off) receive the weather lags.
fn design_from_report(report: &SelectionReport, cfg: &RunConfig) -> DesignSpec {
    let weather = report.kept_names();
    let top = if report.pca_picks.is_empty() {
        weather.iter().take(3).cloned().collect()
    } else {
        report.pca_picks.clone()
    };
    DesignSpec::new(weather, top, cfg.forecast.lags.clone())
}

/// Design from a saved selection, or from selecting on `panel` with `k`
/// capped at its feature count.
fn resolve_design(cfg: &RunConfig, selection: Option<&Path>, panel: &PanelDataset) -> Result<DesignSpec> {
    let report: SelectionReport = match selection {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("cannot read selection {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("invalid selection {}", p.display()))?
        }
        None => {
            let mut sc = cfg.effective_selection();
            sc.k = sc.k.min(panel.n_features());
            select_features(panel, &sc)?.report
        }
    };
    for name in report.kept_names() {
        if panel.feature_index(&name).is_none() {
            bail!("selected feature {name} is not in the panel");
        }
    }
    Ok(design_from_report(&report, cfg))
}

fn history_points(panel: &PanelDataset, county: usize, hours: usize) -> Vec<(f64, f64)> {
    let n = panel.time().len();
    let from = n.saturating_sub(hours);
    (from..n).map(|t| (t as f64 - n as f64 + 1.0, panel.outages(county)[t])).collect()
}

fn forecast_plots(panel: &PanelDataset, set: &ForecastSet, history: usize, out: &mut Outputs) -> Result<()> {
    for f in &set.counties {
        let c = panel.county_index(&f.county).ok_or_else(|| anyhow!("unknown county {}", f.county))?;
        let fc: Vec<(f64, f64)> = f.values.iter().enumerate().map(|(i, v)| ((i + 1) as f64, *v)).collect();
        let svg = line_chart(
            &format!("{} - {}h forecast", f.county, f.horizon),
            "hours from forecast origin",
            &[
                Series {
                    label: "observed",
                    colour: "#333333",
                    points: history_points(panel, c, history),
                },
                Series {
                    label: "forecast",
                    colour: "#d62728",
                    points: fc,
                },
            ],
        );
        out.write_str(&format!("plots/{}_{}.svg", f.county, f.horizon), &svg)?;
    }
    Ok(())
}

fn cmd_forecast(cfg: &RunConfig, args: &ForecastArgs, out: &mut Outputs) -> Result<()> {
    let panel = load_input(cfg, &args.input)?;
    let design = resolve_design(cfg, args.selection.as_deref(), &panel)?;
    if args.dump_design {
        for county in panel.counties() {
            let dm = build_design_matrix(&panel, county, &design)?;
            out.write_with(&format!("design/{county}.csv"), |w| Ok(dm.write_csv(&panel, w)?))?;
        }
    }
    let run = run_all(&panel, &design, &cfg.forecast, &MleFitter, cfg.jobs)?;
    out.write_with("forecasts.csv", |w| Ok(run.forecasts.write_csv(&panel, w)?))?;
    if cfg.forecast.aggregate {
        out.write_with("statewide.csv", |w| Ok(run.forecasts.write_statewide_csv(&panel, w)?))?;
    }
    out.write_str("audit.json", &(run.audit_json()? + "\n"))?;
    if args.plots {
        forecast_plots(&panel, &run.forecasts, cfg.backtest.plot_history.unwrap_or(72), out)?;
    }
    Ok(())
}

fn backtest_plots(panel: &PanelDataset, report: &BacktestReport, history: usize, out: &mut Outputs) -> Result<()> {
    let Some(last) = report.records.last().map(|r| r.cutoff.clone()) else {
        return Ok(());
    };
    let origin = panel
        .time()
        .index_of(parse_timestamp(&last)?)
        .ok_or_else(|| anyhow!("cutoff {last} outside the panel"))?;
    let mut groups: std::collections::BTreeMap<(String, usize), Vec<(f64, f64)>> = Default::default();
    for r in report.records.iter().filter(|r| r.cutoff == last) {
        groups
            .entry((r.county.to_string(), r.horizon))
            .or_default()
            .push((r.step as f64, r.prediction));
    }
    for ((county, h), fc) in groups {
        let c = panel.counties().iter().position(|k| k.as_str() == county).unwrap_or(0);
        let actual: Vec<(f64, f64)> = (origin.saturating_sub(history)..origin + h)
            .map(|t| (t as f64 - origin as f64 + 1.0, panel.outages(c)[t]))
            .collect();
        let svg = line_chart(
            &format!("{county} - {h}h backtest from {last}"),
            "hours from cutoff",
            &[
                Series {
                    label: "actual",
                    colour: "#333333",
                    points: actual,
                },
                Series {
                    label: "forecast",
                    colour: "#d62728",
                    points: fc,
                },
            ],
        );
        out.write_str(&format!("plots/{county}_{h}.svg"), &svg)?;
    }
    Ok(())
}

fn cmd_backtest(cfg: &RunConfig, args: &BacktestArgs, out: &mut Outputs) -> Result<()> {
    let panel = load_input(cfg, &args.input)?;
    let horizons = cfg.forecast.horizons.clone();
    let max_h = horizons.iter().copied().max().unwrap_or(0);
    let mut cutoffs: Vec<DateTime<Utc>> = match &args.cutoffs {
        Some(list) => list.iter().map(|c| parse_timestamp(c)).collect::<gridcast_core::Result<_>>()?,
        None => cfg.cutoffs()?,
    };
    if cutoffs.is_empty() {
        let n = panel.time().len();
        if n <= max_h {
            bail!("panel has {n} hours, too few for a {max_h}-hour backtest");
        }
        cutoffs.push(panel.time().timestamp(n - max_h));
    }
    cutoffs.sort();
    let first = panel
        .time()
        .index_of(cutoffs[0])
        .filter(|&i| i > 0)
        .ok_or_else(|| anyhow!("cutoff {} is not inside the panel", cutoffs[0]))?;
    let design = resolve_design(cfg, args.selection.as_deref(), &panel.slice(0, first)?)?;
    let forecaster = PipelineForecaster {
        spec: design,
        config: cfg.forecast.clone(),
        fitter: &MleFitter,
        jobs: cfg.jobs,
    };
    let report = backtest(&panel, &cutoffs, &horizons, &forecaster)?;
    out.write_str("backtest.json", &(serde_json::to_string_pretty(&report)? + "\n"))?;
    out.write_str("backtest.txt", &report.text())?;
    out.write_with("backtest_records.csv", |w| Ok(report.write_records_csv(w)?))?;
    if args.plots {
        backtest_plots(&panel, &report, cfg.backtest.plot_history.unwrap_or(72), out)?;
    }
    Ok(())
}

fn cmd_simulate(cfg: &RunConfig, args: &SimulateArgs, out: &mut Outputs) -> Result<()> {
    let mut spec: SyntheticSpec = match &args.spec {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("cannot read spec {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("invalid spec {}", p.display()))?
        }
        None => SyntheticSpec::default(),
    };
    if let Some(seed) = cfg.seed {
        spec.seed = seed;
    }
    let panel = gen_panel(&spec)?;
    out.write_with("panel.csv", |w| Ok(write_panel_csv(&panel, w)?))
}
