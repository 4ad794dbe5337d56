//! Storm weather sampling: log-normal wind speed models fitted from recorded
//! observations, hourly per-area wind draws with gust flags, and inverse
//! distance weighted interpolation onto the patch grid.

use crate::geo::{GeoError, PatchGrid, PlanarPoint};
use crate::network::{NetworkGraph, WindSampleRec};
use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WeatherError {
    #[error("fitting {kind} wind distribution: {source}")]
    Fit {
        kind: &'static str,
        #[source]
        source: FitError,
    },
    #[error("no sample points to interpolate")]
    NoSamples,
    #[error(transparent)]
    Geo(#[from] GeoError),
}

#[derive(Debug, Error)]
pub enum FitError {
    #[error("need at least 2 samples, found {0}")]
    NotEnoughSamples(usize),
    #[error("sample {0} is not positive and finite")]
    BadSample(f64),
}

/// Parameters of a log-normal speed distribution: `ln(speed) ~ N(mu, sigma)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogNormalParams {
    pub mu: f64,
    pub sigma: f64,
}

impl LogNormalParams {
    /// Maximum-likelihood fit: `mu` is the mean of the log samples and
    /// `sigma` their population standard deviation (divide by n, not n-1).
    pub fn fit(samples: &[f64]) -> Result<Self, FitError> {
        if samples.len() < 2 {
            return Err(FitError::NotEnoughSamples(samples.len()));
        }
        let mut logs = Vec::with_capacity(samples.len());
        for &s in samples {
            if !(s > 0.0 && s.is_finite()) {
                return Err(FitError::BadSample(s));
            }
            logs.push(s.ln());
        }
        let n = logs.len() as f64;
        let mu = logs.iter().sum::<f64>() / n;
        let var = logs.iter().map(|l| (l - mu) * (l - mu)).sum::<f64>() / n;
        Ok(Self {
            mu,
            sigma: var.sqrt(),
        })
    }

    fn sampler(&self) -> LogNormal<f64> {
        LogNormal::new(self.mu, self.sigma).expect("fitted sigma is finite and non-negative")
    }

    pub fn median(&self) -> f64 {
        self.mu.exp()
    }
}

/// Gust and sustained speed models fitted from one recorded sample file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindDistribution {
    pub gust: LogNormalParams,
    pub sustained: LogNormalParams,
}

pub fn fit_wind(samples: &[WindSampleRec]) -> Result<WindDistribution, WeatherError> {
    let split = |want_gust: bool| -> Vec<f64> {
        samples
            .iter()
            .filter(|s| s.is_gust == want_gust)
            .map(|s| s.speed_mps)
            .collect()
    };
    let gust = LogNormalParams::fit(&split(true)).map_err(|source| WeatherError::Fit {
        kind: "gust",
        source,
    })?;
    let sustained = LogNormalParams::fit(&split(false)).map_err(|source| WeatherError::Fit {
        kind: "sustained",
        source,
    })?;
    Ok(WindDistribution { gust, sustained })
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StormConfig {
    /// Storm duration is uniform over `min_duration_h..=max_duration_h`.
    pub min_duration_h: u32,
    pub max_duration_h: u32,
    /// Probability that any given (area, hour) draws from the gust model.
    pub gust_fraction: f64,
}

impl Default for StormConfig {
    fn default() -> Self {
        Self {
            min_duration_h: 4,
            max_duration_h: 12,
            gust_fraction: 0.25,
        }
    }
}

/// One area's wind observation for one storm hour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AreaWind {
    /// Where the observation sits (a load node of the area, so the sample
    /// point lands where customers actually are).
    pub point: PlanarPoint,
    pub speed_mps: f64,
    pub is_gust: bool,
}

/// A sampled storm: per hour, one wind observation per service area.
#[derive(Debug, Clone, PartialEq)]
pub struct StormScenario {
    pub duration_h: u32,
    /// `hours[h][area]` for `h` in `0..duration_h`.
    pub hours: Vec<Vec<AreaWind>>,
}

impl StormScenario {
    /// Whether the area saw at least one gust hour; splits episodes into the
    /// gust and non-gust populations when aggregating resilience.
    pub fn area_had_gust(&self, area: u32) -> bool {
        self.hours.iter().any(|hour| hour[area as usize].is_gust)
    }
}

/// Draw one storm. The draw order is pinned — duration first, then for each
/// hour each area in ascending index draws flag, location, speed — so a given
/// RNG stream always yields the same scenario.
pub fn sample_storm(
    graph: &NetworkGraph,
    dist: &WindDistribution,
    cfg: &StormConfig,
    rng: &mut impl Rng,
) -> StormScenario {
    assert!(cfg.min_duration_h >= 1 && cfg.min_duration_h <= cfg.max_duration_h);
    assert!((0.0..=1.0).contains(&cfg.gust_fraction));
    let gust_sampler = dist.gust.sampler();
    let sustained_sampler = dist.sustained.sampler();
    let duration_h = rng.gen_range(cfg.min_duration_h..=cfg.max_duration_h);
    let mut hours = Vec::with_capacity(duration_h as usize);
    for _ in 0..duration_h {
        let mut per_area = Vec::with_capacity(graph.n_areas());
        for area in 0..graph.n_areas() as u32 {
            let is_gust = rng.gen_bool(cfg.gust_fraction);
            let loads = graph.area_loads(area);
            let point = if loads.is_empty() {
                // An area with no customers still gets weather, observed at
                // its substation.
                graph.nodes[graph.substations[area as usize] as usize].pos
            } else {
                let pick = rng.gen_range(0..loads.len());
                graph.nodes[loads[pick] as usize].pos
            };
            let speed_mps = if is_gust {
                gust_sampler.sample(rng)
            } else {
                sustained_sampler.sample(rng)
            };
            per_area.push(AreaWind {
                point,
                speed_mps,
                is_gust,
            });
        }
        hours.push(per_area);
    }
    StormScenario { duration_h, hours }
}

/// Wind speed per patch for one hour.
#[derive(Debug, Clone, PartialEq)]
pub struct WindField {
    pub speeds: Vec<f64>,
}

impl WindField {
    #[inline]
    pub fn at(&self, patch: u32) -> f64 {
        self.speeds[patch as usize]
    }
}

/// Spread point observations over the whole patch grid with inverse distance
/// weighting (power 2) from patch centers. A patch that contains observation
/// points takes their mean exactly, so the field honors its inputs; every
/// other patch gets a convex combination, keeping the field inside the
/// observed range.
pub fn interpolate(
    observations: &[(PlanarPoint, f64)],
    grid: &PatchGrid,
) -> Result<WindField, WeatherError> {
    if observations.is_empty() {
        return Err(WeatherError::NoSamples);
    }
    let n = grid.n_patches();
    let mut speeds = vec![0.0f64; n];
    let mut direct_hits = vec![0u32; n];
    for &(point, value) in observations {
        let patch = grid.patch_of(point)? as usize;
        speeds[patch] += value;
        direct_hits[patch] += 1;
    }
    for idx in 0..n as u32 {
        let i = idx as usize;
        if direct_hits[i] > 0 {
            speeds[i] /= direct_hits[i] as f64;
            continue;
        }
        let center = grid.patch_center(idx);
        let mut num = 0.0;
        let mut den = 0.0;
        for &(point, value) in observations {
            let d2 = center.dist_sq(&point);
            let w = 1.0 / d2;
            num += w * value;
            den += w;
        }
        speeds[i] = num / den;
    }
    Ok(WindField { speeds })
}

/// Interpolate every hour of a scenario in one call.
pub fn scenario_fields(
    scenario: &StormScenario,
    grid: &PatchGrid,
) -> Result<Vec<WindField>, WeatherError> {
    scenario
        .hours
        .iter()
        .map(|hour| {
            let obs: Vec<(PlanarPoint, f64)> =
                hour.iter().map(|a| (a.point, a.speed_mps)).collect();
            interpolate(&obs, grid)
        })
        .collect()
}
