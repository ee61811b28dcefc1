use chrono::{DateTime, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{PanelDataset, SeriesKey, TimeIndex};

const BURN_IN: usize = 500;

/// Parameter names with a known category, used for drivers and noise
/// features before falling back to generic `wx<i>` names.
const NAME_POOL: [&str; 40] = [
    "t2m", "gust", "cape", "pwat", "u10", "vis", "mslma", "r", "refc", "veg", "mstav", "gh_1", "u", "v", "ustm", "vstm",
    "wz", "cin", "hail_1", "frzr", "sdswrf", "sulwrf", "sdlwrf", "slhtf", "cfnsf", "sde", "cnwat", "pcdb", "fsr", "lsm",
    "layth", "mdens", "veril", "gh_3", "plpl", "wz_1", "cape_1", "SBT113", "u10_max", "t2m_min",
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmaSpec {
    pub phi: f64,
    pub theta: f64,
    pub sigma2: f64,
}

impl ArmaSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.phi.abs() < 1.0) {
            return Err(Error::invalid(format!("|phi| must be below 1, got {}", self.phi)));
        }
        if !(self.theta.abs() < 1.0) {
            return Err(Error::invalid(format!("|theta| must be below 1, got {}", self.theta)));
        }
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            return Err(Error::invalid(format!("sigma2 must be finite and non-negative, got {}", self.sigma2)));
        }
        Ok(())
    }
}

/// ARMA(1,1) with Gaussian shocks of variance `sigma2`, after discarding
/// 500 warm-up samples.
pub fn gen_arma(phi: f64, theta: f64, sigma2: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    let spec = ArmaSpec { phi, theta, sigma2 };
    spec.validate()?;
    if n == 0 {
        return Err(Error::invalid("series length must be at least 1"));
    }
    Ok(arma_from(&spec, n, &mut ChaCha8Rng::seed_from_u64(seed)))
}

fn arma_from(spec: &ArmaSpec, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let sd = spec.sigma2.sqrt();
    let (mut y, mut e_prev) = (0.0, 0.0);
    let mut out = Vec::with_capacity(n);
    for t in 0..BURN_IN + n {
        let z: f64 = rng.sample(StandardNormal);
        let e = sd * z;
        y = spec.phi * y + e + spec.theta * e_prev;
        e_prev = e;
        if t >= BURN_IN {
            out.push(y);
        }
    }
    out
}

/// Recipe for a synthetic panel. Outages per county are
/// `max(0, round(base + beta . drivers + diurnal + arma))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub counties: usize,
    pub hours: usize,
    pub start: DateTime<Utc>,
    pub arma: ArmaSpec,
    /// One planted coefficient per driver feature.
    pub weather_drivers: Vec<f64>,
    /// Features with no effect on outages.
    pub noise_features: usize,
    /// Features that are identically zero.
    pub zero_features: usize,
    /// Noise features named `unknown<i>`.
    pub unknown_features: usize,
    pub base_level: f64,
    /// Amplitude of `sin(2 pi hour / 24)`.
    pub diurnal_amplitude: f64,
    /// Drivers follow `w_t = rho w_{t-1} + sd e_t`.
    pub driver_persistence: f64,
    pub driver_sd: f64,
    pub tracked_scale: f64,
    pub tracked_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            counties: 10,
            hours: 2000,
            start: Utc.with_ymd_and_hms(2023, 1, 1, 0, 0, 0).unwrap(),
            arma: ArmaSpec {
                phi: 0.6,
                theta: 0.2,
                sigma2: 4.0,
            },
            weather_drivers: vec![6.0, -4.0, 3.0],
            noise_features: 5,
            zero_features: 0,
            unknown_features: 0,
            base_level: 20.0,
            diurnal_amplitude: 8.0,
            driver_persistence: 0.98,
            driver_sd: 0.2,
            tracked_scale: 1.2,
            tracked_noise: 2.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        self.arma.validate()?;
        if self.counties == 0 {
            return Err(Error::invalid("at least one county is required"));
        }
        if self.hours <= 48 {
            return Err(Error::invalid(format!("hours must exceed 48, got {}", self.hours)));
        }
        if !(self.driver_persistence.abs() < 1.0) {
            return Err(Error::invalid("driver persistence must lie in (-1, 1)"));
        }
        let finite = [self.base_level, self.diurnal_amplitude, self.driver_sd, self.tracked_scale, self.tracked_noise];
        if finite.iter().chain(&self.weather_drivers).any(|v| !v.is_finite())
            || self.driver_sd < 0.0
            || self.tracked_noise < 0.0
            || self.tracked_scale < 0.0
        {
            return Err(Error::invalid("spec values must be finite, with non-negative scales"));
        }
        Ok(())
    }

    /// Names of the weather columns in panel order: drivers, noise,
    /// unknown, zero.
    pub fn feature_names(&self) -> Vec<String> {
        let n_named = self.weather_drivers.len() + self.noise_features;
        let mut names: Vec<String> = (0..n_named)
            .map(|i| NAME_POOL.get(i).map_or_else(|| format!("wx{i}"), |s| s.to_string()))
            .collect();
        names.extend((0..self.unknown_features).map(|i| format!("unknown{i}")));
        names.extend((0..self.zero_features).map(|i| format!("zero{i}")));
        names
    }

    pub fn driver_names(&self) -> Vec<String> {
        self.feature_names().into_iter().take(self.weather_drivers.len()).collect()
    }
}

fn walk(rng: &mut ChaCha8Rng, n: usize, rho: f64, sd: f64) -> Vec<f64> {
    let mut w = sd / (1.0 - rho * rho).sqrt() * rng.sample::<f64, _>(StandardNormal);
    (0..n)
        .map(|_| {
            w = rho * w + sd * rng.sample::<f64, _>(StandardNormal);
            w
        })
        .collect()
}

/// Builds the panel described by `spec`. Each county draws from its own
/// stream of one seeded generator.
pub fn gen_panel(spec: &SyntheticSpec) -> Result<PanelDataset> {
    spec.validate()?;
    let time = TimeIndex::new(spec.start, spec.hours)?;
    let names = spec.feature_names();
    let n_drivers = spec.weather_drivers.len();
    let n_random = n_drivers + spec.noise_features + spec.unknown_features;
    let mut outages = Vec::with_capacity(spec.counties);
    let mut tracked = Vec::with_capacity(spec.counties);
    let mut weather: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(spec.counties); names.len()];
    for c in 0..spec.counties {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(c as u64);
        let series: Vec<Vec<f64>> = (0..n_random)
            .map(|_| walk(&mut rng, spec.hours, spec.driver_persistence, spec.driver_sd))
            .collect();
        let noise = arma_from(&spec.arma, spec.hours, &mut rng);
        let o: Vec<f64> = (0..spec.hours)
            .map(|t| {
                let hour = time.hour_of_day(t) as f64;
                let drivers: f64 = spec.weather_drivers.iter().zip(&series).map(|(b, w)| b * w[t]).sum();
                let diurnal = spec.diurnal_amplitude * (std::f64::consts::TAU * hour / 24.0).sin();
                (spec.base_level + drivers + diurnal + noise[t]).round().max(0.0)
            })
            .collect();
        let tr: Vec<f64> = o
            .iter()
            .map(|v| {
                let z: f64 = rng.sample(StandardNormal);
                (spec.tracked_scale * v + spec.tracked_noise * z).round().max(0.0)
            })
            .collect();
        outages.push(o);
        tracked.push(tr);
        for (k, s) in series.into_iter().enumerate() {
            weather[k].push(s);
        }
        for grid in weather.iter_mut().skip(n_random) {
            grid.push(vec![0.0; spec.hours]);
        }
    }
    let counties = (0..spec.counties)
        .map(|c| SeriesKey::new(format!("county_{c:02}")))
        .collect::<Result<Vec<_>>>()?;
    PanelDataset::from_series(time, counties, outages, tracked, names.into_iter().zip(weather).collect())
}
