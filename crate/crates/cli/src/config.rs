//! Run configuration: one TOML file drives every subcommand. Unknown keys are
//! rejected so a typo in a section name fails loudly instead of silently
//! running on defaults.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use resilisim_core::enhance::GaConfig;
use resilisim_core::fragility::FragilityConfig;
use resilisim_core::network::{SynthConfig, TestbedSpec};
use resilisim_core::simulation::{CrewConfig, SimConfig};
use resilisim_core::weather::StormConfig;
use serde::Deserialize;

/// Input file locations and the output directory. Relative paths are resolved
/// against the directory containing the config file, so a run directory can
/// be moved wholesale.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub out_dir: PathBuf,
    pub substations: PathBuf,
    pub roads: PathBuf,
    pub buildings: PathBuf,
    pub tree_cover: PathBuf,
    pub wind_samples: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            out_dir: "out".into(),
            substations: "inputs/substations.csv".into(),
            roads: "inputs/roads.jsonl".into(),
            buildings: "inputs/buildings.csv".into(),
            tree_cover: "inputs/tree_cover.grid".into(),
            wind_samples: "inputs/wind_samples.csv".into(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub master_seed: u64,
    pub n_episodes: u64,
    /// Worker threads for episode simulation and fitness evaluation.
    /// 0 means one per hardware thread.
    pub threads: usize,
    /// Keep every n-th convergence row; 1 keeps them all.
    pub report_stride: u64,
    /// Area names the GA objective minimizes over; empty means all areas.
    pub areas: Vec<String>,
    pub paths: PathsConfig,
    pub testbed: TestbedSpec,
    pub network: SynthConfig,
    pub weather: StormConfig,
    pub fragility: FragilityConfig,
    pub simulation: SimConfig,
    pub crews: CrewConfig,
    pub ga: GaConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            master_seed: 42,
            n_episodes: 10_000,
            threads: 0,
            report_stride: 1,
            areas: Vec::new(),
            paths: PathsConfig::default(),
            testbed: TestbedSpec::default(),
            network: SynthConfig::default(),
            weather: StormConfig::default(),
            fragility: FragilityConfig::default(),
            simulation: SimConfig::default(),
            crews: CrewConfig::default(),
            ga: GaConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parse the config file and resolve its relative paths against the
    /// file's parent directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .with_context(|| format!("cannot parse config file {}", path.display()))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for p in [
            &mut cfg.paths.out_dir,
            &mut cfg.paths.substations,
            &mut cfg.paths.roads,
            &mut cfg.paths.buildings,
            &mut cfg.paths.tree_cover,
            &mut cfg.paths.wind_samples,
        ] {
            if p.is_relative() {
                *p = base.join(&p);
            }
        }
        Ok(cfg)
    }

    /// Fold command-line overrides into the file-backed config.
    pub fn apply_overrides(
        &mut self,
        seed: Option<u64>,
        episodes: Option<u64>,
        threads: Option<usize>,
        areas: Option<Vec<String>>,
    ) {
        if let Some(s) = seed {
            self.master_seed = s;
        }
        if let Some(n) = episodes {
            self.n_episodes = n;
        }
        if let Some(t) = threads {
            self.threads = t;
        }
        if let Some(a) = areas {
            self.areas = a;
        }
    }

    /// Reject configurations that would panic deep inside a run. Every check
    /// here names the offending key so the fix is obvious.
    pub fn validate(&self) -> Result<()> {
        if self.n_episodes < 1 {
            bail!("n_episodes must be at least 1");
        }
        if self.report_stride < 1 {
            bail!("report_stride must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.simulation.lambda) {
            bail!(
                "simulation.lambda must lie in [0, 1], got {}",
                self.simulation.lambda
            );
        }
        if self.simulation.demand_kw_per_customer <= 0.0 {
            bail!("simulation.demand_kw_per_customer must be positive");
        }
        if self.weather.min_duration_h < 1 || self.weather.min_duration_h > self.weather.max_duration_h
        {
            bail!(
                "weather durations must satisfy 1 <= min_duration_h <= max_duration_h, got {}..{}",
                self.weather.min_duration_h,
                self.weather.max_duration_h
            );
        }
        if !(0.0..=1.0).contains(&self.weather.gust_fraction) {
            bail!(
                "weather.gust_fraction must lie in [0, 1], got {}",
                self.weather.gust_fraction
            );
        }
        if self.simulation.horizon_h <= self.weather.max_duration_h {
            bail!(
                "simulation.horizon_h ({}) must exceed weather.max_duration_h ({})",
                self.simulation.horizon_h,
                self.weather.max_duration_h
            );
        }
        self.fragility
            .model()
            .validate()
            .context("fragility section is invalid")?;
        if self.crews.n_crews < 1 {
            bail!("crews.n_crews must be at least 1");
        }
        if self.crews.repair_min_h < 1 || self.crews.repair_min_h > self.crews.repair_max_h {
            bail!(
                "crew repair times must satisfy 1 <= repair_min_h <= repair_max_h, got {}..{}",
                self.crews.repair_min_h,
                self.crews.repair_max_h
            );
        }
        if self.ga.population < 2 {
            bail!("ga.population must be at least 2");
        }
        if self.ga.generations < 1 {
            bail!("ga.generations must be at least 1");
        }
        if self.ga.tournament_k < 1 {
            bail!("ga.tournament_k must be at least 1");
        }
        if self.ga.max_placements < 1 {
            bail!("ga.max_placements must be at least 1");
        }
        if !(self.ga.cap_min_kw > 0.0 && self.ga.cap_min_kw <= self.ga.cap_max_kw) {
            bail!(
                "ga capacity bounds must satisfy 0 < cap_min_kw <= cap_max_kw, got {}..{}",
                self.ga.cap_min_kw,
                self.ga.cap_max_kw
            );
        }
        if self.ga.storage_hours <= 0.0 {
            bail!("ga.storage_hours must be positive");
        }
        for p in [self.ga.p_relocate, self.ga.p_capacity, self.ga.p_kind] {
            if !(0.0..=1.0).contains(&p) {
                bail!("ga mutation probabilities must lie in [0, 1], got {p}");
            }
        }
        if let Some(n) = self.ga.replay_subsample {
            if n < 1 {
                bail!("ga.replay_subsample must be at least 1 when set");
            }
        }
        Ok(())
    }

    /// Path of a named artifact inside the output directory.
    pub fn artifact(&self, name: &str) -> PathBuf {
        self.paths.out_dir.join(name)
    }

    /// The five raw input files, in the order the loaders expect them.
    pub fn input_files(&self) -> [(&'static str, &Path); 5] {
        [
            ("substations", &self.paths.substations),
            ("roads", &self.paths.roads),
            ("buildings", &self.paths.buildings),
            ("tree cover", &self.paths.tree_cover),
            ("wind samples", &self.paths.wind_samples),
        ]
    }
}

/// Fail with a pointer at the producing command when a prerequisite artifact
/// is missing, so pipelines report misordering as a usage error.
pub fn require_artifact(path: &Path, produced_by: &str) -> Result<()> {
    if !path.is_file() {
        bail!(
            "{} not found; run `resilisim {produced_by}` first",
            path.display()
        );
    }
    Ok(())
}
