//! Episode replay with DERs installed. The damage/repair timeline is
//! reconstructed from the recorded events; any connected component with no
//! substation runs in island mode, where batteries (any hour, while energy
//! lasts) and solar panels (only after the storm ends) cover as much of the
//! island's demand as they can.

use super::{DerKind, DerPlan, GaConfig};
use crate::network::{NetworkGraph, NodeKind};
use crate::simulation::{
    aggregate_resilience, trapezoid_resilience, ConnectivityTracker, Episode, SimConfig,
};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("placement on node {0}: {1}")]
    BadPlacement(u32, &'static str),
}

#[derive(Debug, Clone)]
pub struct ReplayResult {
    /// Trapezoid resilience per area.
    pub scores: Vec<f64>,
    /// Served-fraction curves per area, same shape as the stored ones.
    pub curves: Vec<Vec<f64>>,
}

/// One DER being tracked through an episode.
struct Unit {
    node: u32,
    solar_kw: f64,
    battery_kw: f64,
    /// Remaining battery energy, kWh.
    energy_kwh: f64,
}

/// Replay one episode with `plan` installed. With an empty plan the returned
/// curves are bit-identical to the stored ones; DERs only ever add served
/// customers, never remove them.
pub fn replay_with_ders(
    graph: &NetworkGraph,
    ep: &Episode,
    plan: &DerPlan,
    cfg: &GaConfig,
    sim: &SimConfig,
) -> Result<ReplayResult, ReplayError> {
    let n_areas = graph.n_areas();
    let totals = graph.area_customers();
    let horizon = (ep.curves[0].len() - 1) as u32;

    // Units sorted by node id: batteries discharge in ascending-node order,
    // so the energy bookkeeping is reproducible.
    let mut units: Vec<Unit> = Vec::with_capacity(plan.placements.len());
    for p in &plan.placements {
        match graph.nodes.get(p.node_id as usize) {
            None => return Err(ReplayError::BadPlacement(p.node_id, "no such node")),
            Some(n) if n.kind == NodeKind::Substation => {
                return Err(ReplayError::BadPlacement(p.node_id, "substations cannot host DERs"))
            }
            Some(_) => {}
        }
        let battery = p.kind == DerKind::Battery;
        units.push(Unit {
            node: p.node_id,
            solar_kw: if battery { 0.0 } else { p.capacity_kw },
            battery_kw: if battery { p.capacity_kw } else { 0.0 },
            energy_kwh: if battery { p.capacity_kw * cfg.storage_hours } else { 0.0 },
        });
    }
    units.sort_unstable_by_key(|u| u.node);
    if let Some(w) = units.windows(2).find(|w| w[0].node == w[1].node) {
        return Err(ReplayError::BadPlacement(w[0].node, "node hosts two placements"));
    }
    let initial_energy: f64 = units.iter().map(|u| u.energy_kwh).sum();

    let mut curves: Vec<Vec<f64>> = vec![Vec::with_capacity(horizon as usize + 1); n_areas];
    for row in curves.iter_mut() {
        row.push(1.0);
    }

    // Record one hour: grid-served counts plus island supply from the DERs.
    let record_hour =
        |tracker: &mut ConnectivityTracker, t: u32, units: &mut [Unit], curves: &mut Vec<Vec<f64>>| {
            let mut extra = vec![0.0f64; n_areas];
            if !units.is_empty() && tracker.total_unserved() > 0 {
                // Group units by island root; `units` is node-sorted, which
                // fixes the discharge order inside each island.
                let mut roots: Vec<(u32, usize)> = (0..units.len())
                    .map(|i| (tracker.find_root(units[i].node), i))
                    .collect();
                roots.sort_unstable();
                let mut i = 0;
                while i < roots.len() {
                    let root = roots[i].0;
                    let mut j = i;
                    while j < roots.len() && roots[j].0 == root {
                        j += 1;
                    }
                    if tracker.has_substation(root) {
                        // grid-energized component: DERs stay idle
                        i = j;
                        continue;
                    }
                    let entries = tracker.unserved_at(root);
                    let customers: u64 = entries.iter().map(|&(_, c)| c).sum();
                    if customers == 0 {
                        i = j;
                        continue;
                    }
                    let demand_kw = customers as f64 * sim.demand_kw_per_customer;
                    let solar_kw: f64 = if t > ep.duration_h {
                        roots[i..j].iter().map(|&(_, u)| units[u].solar_kw).sum()
                    } else {
                        0.0
                    };
                    let mut supply_kw = solar_kw.min(demand_kw);
                    for &(_, u) in &roots[i..j] {
                        let residual = demand_kw - supply_kw;
                        if residual <= 0.0 {
                            break;
                        }
                        let unit = &mut units[u];
                        let d = unit.battery_kw.min(unit.energy_kwh).min(residual);
                        if d > 0.0 {
                            unit.energy_kwh -= d;
                            supply_kw += d;
                        }
                    }
                    let f = (supply_kw / demand_kw).min(1.0);
                    for &(area, c) in entries {
                        extra[area as usize] += f * c as f64;
                    }
                    i = j;
                }
            }
            let served = tracker.served();
            for a in 0..n_areas {
                let p = if totals[a] == 0 {
                    1.0
                } else {
                    // identical expression to the recording path, so an empty
                    // plan reproduces the stored curve bit for bit
                    (served[a] as f64 + extra[a]) / totals[a] as f64
                };
                curves[a].push(p);
            }
        };

    let mut intact = vec![true; graph.n_edges()];
    let mut fi = 0;
    for h in 1..=ep.duration_h {
        while fi < ep.failures.len() && ep.failures[fi].0 == h {
            intact[ep.failures[fi].1 as usize] = false;
            fi += 1;
        }
        let mut tracker = ConnectivityTracker::build(graph, &intact);
        record_hour(&mut tracker, h, &mut units, &mut curves);
    }
    debug_assert_eq!(fi, ep.failures.len(), "failures stamped inside the storm");

    let mut tracker = ConnectivityTracker::build(graph, &intact);
    let mut ri = 0;
    for t in ep.duration_h + 1..=horizon {
        while ri < ep.repairs.len() && ep.repairs[ri].0 == t {
            tracker.union_edge(graph, ep.repairs[ri].1);
            ri += 1;
        }
        record_hour(&mut tracker, t, &mut units, &mut curves);
    }

    let discharged: f64 = initial_energy - units.iter().map(|u| u.energy_kwh).sum::<f64>();
    debug_assert!(
        discharged <= initial_energy + 1e-9 && units.iter().all(|u| u.energy_kwh >= -1e-9),
        "battery energy over-drawn"
    );

    let scores = curves.iter().map(|c| trapezoid_resilience(c)).collect();
    Ok(ReplayResult { scores, curves })
}

/// Fitness of a plan: replay the stored episodes (optionally only the first
/// `replay_subsample`), aggregate per area with the gust weighting, and take
/// the minimum over the areas under consideration. Infeasible plans score
/// negative infinity. No fresh randomness: fitness is a pure function of
/// `(plan, episodes)`.
pub fn fitness(
    graph: &NetworkGraph,
    episodes: &[Episode],
    plan: &DerPlan,
    cfg: &GaConfig,
    sim: &SimConfig,
    area_filter: Option<&[u32]>,
) -> f64 {
    if !plan.is_feasible(graph, cfg) {
        return f64::NEG_INFINITY;
    }
    let take = cfg
        .replay_subsample
        .map(|n| (n as usize).clamp(1, episodes.len()))
        .unwrap_or(episodes.len());
    let episodes = &episodes[..take];
    let n_areas = graph.n_areas();
    // (per-area score, gust flag) rows, one per episode, folded per area
    let rows: Vec<(Vec<f64>, Vec<bool>)> = episodes
        .par_iter()
        .map(|ep| {
            let r = replay_with_ders(graph, ep, plan, cfg, sim)
                .expect("feasible plans replay cleanly");
            (r.scores, ep.gust_areas.clone())
        })
        .collect();
    let consider: Vec<u32> = match area_filter {
        Some(f) => f.to_vec(),
        None => (0..n_areas as u32).collect(),
    };
    consider
        .iter()
        .map(|&a| {
            let scores: Vec<f64> = rows.iter().map(|(s, _)| s[a as usize]).collect();
            let gust: Vec<bool> = rows.iter().map(|(_, g)| g[a as usize]).collect();
            aggregate_resilience(&scores, &gust, sim.lambda)
        })
        .fold(f64::INFINITY, f64::min)
}
