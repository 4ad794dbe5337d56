//! Resilience enhancement: site and size solar panels and batteries with a
//! customized genetic algorithm. Candidate locations are sampled from outage
//! exposure, placements too close to one another are probabilistically
//! rejected, and every candidate plan is scored by replaying the recorded
//! episodes with island-mode DER supply.

mod artifacts;
mod ga;
mod replay;
mod weights;

pub use artifacts::{
    read_plan_json, write_ga_history_csv, write_plan_geojson, write_plan_json, ArtifactError,
};
pub use ga::{evolve, propose_location, proximity_rejects, EvolveOutcome, GenerationStats};
pub use replay::{fitness, replay_with_ders, ReplayError, ReplayResult};
pub use weights::{outage_counts, sampling_weights, SamplingWeights};

use crate::network::{NetworkGraph, NodeKind};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DerKind {
    Solar,
    Battery,
}

/// One installed resource. Batteries carry `capacity_kw * storage_hours` kWh
/// of energy besides their power rating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerPlacement {
    pub node_id: u32,
    pub kind: DerKind,
    pub capacity_kw: f64,
}

/// A chromosome: a set of placements, at most one per node.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DerPlan {
    pub placements: Vec<DerPlacement>,
}

impl DerPlan {
    pub fn is_empty(&self) -> bool {
        self.placements.is_empty()
    }

    /// Total installation cost under the configured unit prices.
    pub fn cost(&self, cfg: &GaConfig) -> f64 {
        self.placements
            .iter()
            .map(|p| {
                p.capacity_kw
                    * match p.kind {
                        DerKind::Solar => cfg.solar_cost_per_kw,
                        DerKind::Battery => cfg.battery_cost_per_kw,
                    }
            })
            .sum()
    }

    /// Check every plan constraint: placement count, capacity bounds, valid
    /// non-substation hosts, no node hosting twice, and the optional budget.
    pub fn is_feasible(&self, graph: &NetworkGraph, cfg: &GaConfig) -> bool {
        if self.placements.len() > cfg.max_placements {
            return false;
        }
        let mut nodes: Vec<u32> = Vec::with_capacity(self.placements.len());
        for p in &self.placements {
            if !(cfg.cap_min_kw..=cfg.cap_max_kw).contains(&p.capacity_kw) {
                return false;
            }
            match graph.nodes.get(p.node_id as usize) {
                Some(n) if n.kind != NodeKind::Substation => {}
                _ => return false,
            }
            nodes.push(p.node_id);
        }
        nodes.sort_unstable();
        if nodes.windows(2).any(|w| w[0] == w[1]) {
            return false;
        }
        match cfg.budget {
            Some(b) => self.cost(cfg) <= b,
            None => true,
        }
    }
}

/// Which way outage counts are scaled by node degree when building sampling
/// weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DegreeWeighting {
    Multiply,
    Divide,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    pub population: usize,
    pub generations: u32,
    pub tournament_k: usize,
    /// Per-placement mutation probabilities.
    pub p_relocate: f64,
    pub p_capacity: f64,
    pub p_kind: f64,
    /// Hard cap on placements per plan.
    pub max_placements: usize,
    pub cap_min_kw: f64,
    pub cap_max_kw: f64,
    /// Battery energy = capacity_kw * storage_hours.
    pub storage_hours: f64,
    pub degree_weighting: DegreeWeighting,
    pub solar_cost_per_kw: f64,
    pub battery_cost_per_kw: f64,
    /// Optional spending cap; plans over budget score -inf.
    pub budget: Option<f64>,
    /// Replay only the first `n` stored episodes during fitness evaluation
    /// (all of them when `None`).
    pub replay_subsample: Option<u64>,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 50,
            generations: 100,
            tournament_k: 4,
            p_relocate: 0.2,
            p_capacity: 0.3,
            p_kind: 0.05,
            max_placements: 20,
            cap_min_kw: 50.0,
            cap_max_kw: 2000.0,
            storage_hours: 4.0,
            degree_weighting: DegreeWeighting::Multiply,
            solar_cost_per_kw: 1000.0,
            battery_cost_per_kw: 600.0,
            budget: None,
            replay_subsample: None,
        }
    }
}
