//! Shared fixtures for the pipeline benchmarks: a synthesized city plus the
//! fitted weather and default simulation knobs, bundled so each benchmark
//! borrows one self-contained context.

use resilisim_core::fragility::{FragilityConfig, FragilityModel};
use resilisim_core::network::{
    generate_testbed, synthesize, NetworkGraph, NetworkInputs, SynthConfig, TestbedSpec,
};
use resilisim_core::simulation::{CrewConfig, EpisodeContext, SimConfig};
use resilisim_core::weather::{fit_wind, StormConfig, WindDistribution};

pub struct Fixture {
    pub graph: NetworkGraph,
    pub wind: WindDistribution,
    pub storm: StormConfig,
    pub fragility: FragilityModel,
    pub sim: SimConfig,
    pub crews: CrewConfig,
    pub master_seed: u64,
}

impl Fixture {
    /// Synthesize a city of roughly `rows * cols * 7` nodes and fit its wind
    /// record, ready to simulate.
    pub fn city(rows: u32, cols: u32, n_buildings: u32, n_substations: u32, seed: u64) -> Self {
        let spec = TestbedSpec {
            rows,
            cols,
            n_buildings,
            n_substations,
            ..TestbedSpec::default()
        };
        let data = generate_testbed(&spec, seed);
        let wind = fit_wind(&data.wind_samples).expect("testbed wind fits");
        let inputs = NetworkInputs {
            substations: data.substations,
            roads: data.roads,
            buildings: data.buildings,
            tree: data.tree,
        };
        let (graph, _) = synthesize(&inputs, &SynthConfig::default()).expect("testbed synthesizes");
        Fixture {
            graph,
            wind,
            storm: StormConfig::default(),
            fragility: FragilityConfig::default().model(),
            sim: SimConfig::default(),
            crews: CrewConfig::default(),
            master_seed: seed,
        }
    }

    pub fn ctx(&self) -> EpisodeContext<'_> {
        EpisodeContext {
            graph: &self.graph,
            wind: &self.wind,
            storm: &self.storm,
            fragility: &self.fragility,
            sim: &self.sim,
            crews: &self.crews,
            master_seed: self.master_seed,
        }
    }
}
